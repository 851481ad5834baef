#!/usr/bin/env python3
"""Ground truth for the Hopf scenario: unit 3-sphere in Euler angles, U(1) fiber action.

Checks: scalar curvature of the total space (6), the induced base metric
(2-sphere of radius 1/2, scalar curvature 8), constancy of the orbit metric,
the connection curvature, its square contraction (8), and the horizontal
block of the curvature via the projected nonholonomic formula.
"""
import sympy as sp

th, ph, ps = sp.symbols("theta phi psi", positive=True)
Q = [th, ph, ps]
c = sp.cos(th)
s = sp.sin(th)

G = sp.Rational(1, 4) * sp.Matrix([[1, 0, 0], [0, 1, c], [0, c, 1]])
Ginv = sp.simplify(G.inv())
n = 3


def christoffel(Gm, Gi, coords):
    m = len(coords)
    Gam = sp.MutableDenseNDimArray.zeros(m, m, m)
    for cc in range(m):
        for a in range(m):
            for b in range(m):
                Gam[cc, a, b] = sp.simplify(sum(
                    Gi[cc, e] * (sp.diff(Gm[e, b], coords[a]) + sp.diff(Gm[e, a], coords[b])
                                 - sp.diff(Gm[a, b], coords[e])) / 2 for e in range(m)))
    return Gam


def scalar_curvature(Gm, coords):
    m = len(coords)
    Gi = sp.simplify(Gm.inv())
    Gam = christoffel(Gm, Gi, coords)
    Ric = sp.MutableDenseNDimArray.zeros(m, m)
    for a in range(m):
        for b in range(m):
            val = 0
            for mu in range(m):
                val += sp.diff(Gam[mu, a, b], coords[mu]) - sp.diff(Gam[mu, mu, a], coords[b])
                for lam in range(m):
                    val += Gam[mu, mu, lam] * Gam[lam, a, b] - Gam[mu, b, lam] * Gam[lam, mu, a]
            Ric[a, b] = sp.simplify(val)
    return sp.simplify(sum(Gi[a, b] * Ric[a, b] for a in range(m) for b in range(m)))


R_total = scalar_curvature(G, Q)
print("R(total space) =", R_total)
assert sp.simplify(R_total - 6) == 0

K = sp.Matrix([0, 0, 1])                       # fiber direction
gamma = sp.simplify((K.T * G * K)[0, 0])
print("gamma =", gamma)                        # 1/4, constant
assert gamma == sp.Rational(1, 4)

chi_grad = sp.Matrix([[0, 0, 1]])              # gauge: fiber angle
Phi = (chi_grad * K)[0, 0]
N = sp.eye(3) - K * (chi_grad / Phi)
Pi = sp.eye(3) - K * (1 / gamma) * (K.T * G)
GH = sp.simplify(Pi.T * G * Pi)
print("G^H =", GH)                             # diag(1,s^2,0)/4
assert sp.simplify(GH - sp.diag(1, s**2, 0) / 4) == sp.zeros(3)

base = sp.Matrix([[GH[0, 0], GH[0, 1]], [GH[1, 0], GH[1, 1]]])
R_base = scalar_curvature(base, [th, ph])
print("R(base) =", R_base)
assert sp.simplify(R_base - 8) == 0

# Mechanical connection and its curvature (abelian)
A = sp.simplify((1 / gamma) * (K.T * G))       # row: (0, cos, 1)
F = sp.MutableDenseNDimArray.zeros(3, 3)
for e in range(3):
    for p in range(3):
        F[e, p] = sp.simplify(sp.diff(A[p], Q[e]) - sp.diff(A[e], Q[p]))
print("F_{theta phi} =", F[0, 1])
assert sp.simplify(F[0, 1] + s) == 0

h = sp.simplify(N * Ginv * N.T)                # projected inverse metric
Fsq = sp.simplify(sum(h[p, a] * h[f_, b] * gamma * F[p, f_] * F[a, b]
                      for p in range(3) for f_ in range(3) for a in range(3) for b in range(3)))
print("F^2 =", Fsq)
assert sp.simplify(Fsq - 8) == 0

# Horizontal-lift Christoffel representative and the projected curvature scalar
HGlow = sp.MutableDenseNDimArray.zeros(3, 3, 3)    # lowered: [E; C D]
for e in range(3):
    for cc in range(3):
        for d in range(3):
            HGlow[e, cc, d] = sp.simplify((sp.diff(GH[e, cc], Q[d]) + sp.diff(GH[e, d], Q[cc])
                                           - sp.diff(GH[cc, d], Q[e])) / 2)
HG = sp.MutableDenseNDimArray.zeros(3, 3, 3)       # representative: N Ginv (lowered)
for b in range(3):
    for cc in range(3):
        for d in range(3):
            HG[b, cc, d] = sp.simplify(sum(N[b, ss] * Ginv[ss, e] * HGlow[e, cc, d]
                                           for ss in range(3) for e in range(3)))
assert sp.simplify(HG[0, 1, 1] + s * c) == 0       # -sin cos
assert sp.simplify(HG[1, 0, 1] - c / s) == 0       # cot

# standard-orientation horizontal curvature scalar:
#   HR = h^{SC} sum_{E=M} [ d_E HG^M_{CS} - d_S HG^M_{CE} + HG^M_{PE} HG^P_{CS} - HG^M_{KS} HG^K_{CE} ]
HR = 0
for S in range(3):
    for C in range(3):
        for M in range(3):
            for E in range(3):
                if N[E, M] == 0 and E != M:
                    pass
                term = sp.diff(HG[M, C, S], Q[E]) - sp.diff(HG[M, C, E], Q[S]) \
                    + sum(HG[M, P, E] * HG[P, C, S] for P in range(3)) \
                    - sum(HG[M, Kk, S] * HG[Kk, C, E] for Kk in range(3))
                HR += h[S, C] * N[E, M] * term
HR = sp.simplify(HR)
print("HR (projected) =", HR)
assert sp.simplify(HR - 8) == 0

# Decomposition: R = HR + R_orbit - F^2/4 - Jt - jsq with Jt = jsq = 0 here
print("decomposition residual =", sp.simplify(R_total - (HR + 0 - sp.Rational(1, 4) * Fsq - 0 - 0)))
assert sp.simplify(R_total - HR + Fsq / 4) == 0
print("all Hopf oracle values verified")
