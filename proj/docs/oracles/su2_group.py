#!/usr/bin/env python3
"""Ground truth for the group-on-itself scenario: SU(2) with a bi-invariant metric.

Checks: the invariant frame is orthonormal, its bracket constants are -epsilon,
the Lie derivative of the metric along the frame vanishes (Killing), the scalar
curvature is 3/2, and the two-term orbit-curvature contraction evaluates to 3/2
(with the standard orientation) for gamma = identity.
Also validates the exponential-chart right-measure density 2(1-cos t)/t^2.
"""
import sympy as sp

th, ph, ps = sp.symbols("theta phi psi", positive=True)
Q = [th, ph, ps]
c, s = sp.cos(th), sp.sin(th)

# bi-invariant metric normalized so the invariant frame below is orthonormal
G = sp.Matrix([[1, 0, 0], [0, 1, c], [0, c, 1]])
Ginv = sp.simplify(G.inv())

# invariant frame (generates translations on the group)
L1 = sp.Matrix([-sp.sin(ps), sp.cos(ps) / s, -sp.cos(ps) * c / s])
L2 = sp.Matrix([sp.cos(ps), sp.sin(ps) / s, -sp.sin(ps) * c / s])
L3 = sp.Matrix([0, 0, 1])
L = [L1, L2, L3]

for i in range(3):
    for j in range(3):
        val = sp.simplify((L[i].T * G * L[j])[0, 0])
        assert val == (1 if i == j else 0), (i, j, val)
print("frame orthonormal: gamma = identity")


def bracket(X, Y):
    return sp.Matrix([sp.simplify(sum(X[a] * sp.diff(Y[b], Q[a]) - Y[a] * sp.diff(X[b], Q[a])
                                      for a in range(3))) for b in range(3)])


eps = sp.Array([[[int((i - j) * (j - k) * (k - i) / 2) for k in range(3)] for j in range(3)] for i in range(3)])
for i in range(3):
    for j in range(3):
        br = bracket(L[i], L[j])
        expect = sp.Matrix([sum(-eps[g, i, j] * L[g][b] for g in range(3)) for b in range(3)])
        assert sp.simplify(br - expect) == sp.zeros(3, 1), (i, j)
print("bracket constants: c^g_{ab} = -epsilon_{gab}")

# Killing property: Lie derivative of G along each frame field vanishes
for mu in range(3):
    for a in range(3):
        for b in range(3):
            lie = sum(L[mu][e] * sp.diff(G[a, b], Q[e]) for e in range(3)) \
                + sum(G[e, b] * sp.diff(L[mu][e], Q[a]) + G[a, e] * sp.diff(L[mu][e], Q[b]) for e in range(3))
            assert sp.simplify(lie) == 0
print("Killing property verified")

# scalar curvature of the metric (radius-2 sphere): 6/4 = 3/2
Gam = sp.MutableDenseNDimArray.zeros(3, 3, 3)
for cc in range(3):
    for a in range(3):
        for b in range(3):
            Gam[cc, a, b] = sp.simplify(sum(
                Ginv[cc, e] * (sp.diff(G[e, b], Q[a]) + sp.diff(G[e, a], Q[b]) - sp.diff(G[a, b], Q[e])) / 2
                for e in range(3)))
R = 0
for a in range(3):
    for b in range(3):
        val = 0
        for mu in range(3):
            val += sp.diff(Gam[mu, a, b], Q[mu]) - sp.diff(Gam[mu, mu, a], Q[b])
            for lam in range(3):
                val += Gam[mu, mu, lam] * Gam[lam, a, b] - Gam[mu, b, lam] * Gam[lam, mu, a]
        R += Ginv[a, b] * val
R = sp.simplify(R)
print("R =", R)
assert sp.simplify(R - sp.Rational(3, 2)) == 0

# orbit-curvature contraction, standard orientation, gamma = delta, c = -eps:
#   R_orbit = -1/2 c^s_{ma} c^a_{ms} - 1/4 c^m_{ea} c^m_{ea}
t1 = -sp.Rational(1, 2) * sum(eps[si, mu, al] * eps[al, mu, si] for si in range(3) for mu in range(3) for al in range(3))
t2 = -sp.Rational(1, 4) * sum(eps[mu, e, a] * eps[mu, e, a] for mu in range(3) for e in range(3) for a in range(3))
R_orbit = t1 + t2
print("R_orbit =", R_orbit)   # -1/2*(-6) - 1/4*6 = 3 - 3/2 = 3/2
assert R_orbit == sp.Rational(3, 2)

# exponential-chart right-measure density: det( sum_k (-ad_x)^k/(k+1)! ) = 2(1-cos t)/t^2
x1, x2, x3 = sp.symbols("x1 x2 x3")
# ad[g][b] = c^g_{a b} x^a = -eps[g,a,b] x^a
ad = sp.Matrix(3, 3, lambda g, b: sum(-eps[g, a, b] * [x1, x2, x3][a] for a in range(3)))
U = sp.zeros(3)
term = sp.eye(3)
for k in range(12):
    U += term / sp.factorial(k + 1)
    term = term * (-ad)
detU = sp.simplify(U.det())
t = sp.sqrt(x1**2 + x2**2 + x3**2)
target = 2 * (1 - sp.cos(t)) / t**2
diff = sp.simplify(sp.series(detU.subs([(x2, 0), (x3, 0)]), x1, 0, 8).removeO()
                   - sp.series(target.subs([(x2, 0), (x3, 0)]), x1, 0, 8).removeO())
print("haar density series residual:", diff)
assert diff == 0
print("all group-scenario oracle values verified")
