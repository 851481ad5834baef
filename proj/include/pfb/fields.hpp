#pragma once

#include <functional>
#include <optional>
#include <utility>

#include "pfb/common.hpp"
#include "pfb/tensor.hpp"

namespace pfb {

/// A smooth map from chart coordinates to a tensor value.
///
/// `analytic_derivative(q, d)`, when set, returns the exact directional
/// derivative and is preferred over finite differences by every helper below.
struct SmoothField {
    int domain_dim = 0;
    std::vector<int> codomain_shape;
    std::function<Tensor(const Vec&)> eval;
    std::function<Tensor(const Vec&, int)> analytic_derivative;
    FdConfig fd;

    Tensor operator()(const Vec& q) const { return eval(q); }
};

inline SmoothField make_scalar_field(int dim, std::function<double(const Vec&)> f) {
    SmoothField s;
    s.domain_dim = dim;
    s.codomain_shape = {};
    s.eval = [f = std::move(f)](const Vec& q) {
        Tensor t(std::vector<int>{});
        t.data()[0] = f(q);
        return t;
    };
    return s;
}

inline SmoothField make_vector_field(int dim, int n, std::function<Vec(const Vec&)> f) {
    SmoothField s;
    s.domain_dim = dim;
    s.codomain_shape = {n};
    s.eval = [f = std::move(f)](const Vec& q) { return Tensor::from_vector(f(q)); };
    return s;
}

inline SmoothField make_matrix_field(int dim, int r, int c, std::function<Mat(const Vec&)> f) {
    SmoothField s;
    s.domain_dim = dim;
    s.codomain_shape = {r, c};
    s.eval = [f = std::move(f)](const Vec& q) { return Tensor::from_matrix(f(q)); };
    return s;
}

namespace detail {

inline Tensor eval_checked(const SmoothField& f, const Vec& q) {
    Tensor t = f.eval(q);
    if (!t.all_finite())
        throw EvalError("field evaluation is non-finite at stencil point " + format_point(q));
    return t;
}

}  // namespace detail

/// Central-difference derivative of `field` in coordinate direction `dir`.
///
/// order 1: df/dq_dir, O(h^2) for the 3-point stencil, O(h^4) for the 5-point.
/// order 2: d^2f/dq_dir^2 by the standard second-difference stencil.
inline Tensor fd_derivative(const SmoothField& field, const Vec& point, int dir, int order = 1) {
    if (dir < 0 || dir >= field.domain_dim) throw Error("fd_derivative: direction out of range");
    if (order != 1 && order != 2) throw Error("fd_derivative: order must be 1 or 2");

    if (order == 1 && field.analytic_derivative) return field.analytic_derivative(point, dir);

    Vec q = point;
    if (order == 1) {
        const double h = field.fd.h1(point[dir]);
        if (field.fd.stencil == 5) {
            q[dir] = point[dir] + 2 * h;
            Tensor fp2 = detail::eval_checked(field, q);
            q[dir] = point[dir] + h;
            Tensor fp1 = detail::eval_checked(field, q);
            q[dir] = point[dir] - h;
            Tensor fm1 = detail::eval_checked(field, q);
            q[dir] = point[dir] - 2 * h;
            Tensor fm2 = detail::eval_checked(field, q);
            Tensor out = fp2;
            for (std::size_t i = 0; i < out.size(); ++i)
                out.data()[i] = (-fp2.data()[i] + 8 * fp1.data()[i] - 8 * fm1.data()[i] + fm2.data()[i]) / (12 * h);
            return out;
        }
        q[dir] = point[dir] + h;
        Tensor fp = detail::eval_checked(field, q);
        q[dir] = point[dir] - h;
        Tensor fm = detail::eval_checked(field, q);
        Tensor out = fp;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = (fp.data()[i] - fm.data()[i]) / (2 * h);
        return out;
    }

    // order == 2
    const double h = field.fd.h2(point[dir]);
    if (field.analytic_derivative) {
        // central difference of the exact first derivative
        Vec qp = point, qm = point;
        qp[dir] += h;
        qm[dir] -= h;
        Tensor dp = field.analytic_derivative(qp, dir);
        Tensor dm = field.analytic_derivative(qm, dir);
        Tensor out = dp;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = (dp.data()[i] - dm.data()[i]) / (2 * h);
        return out;
    }
    Tensor f0 = detail::eval_checked(field, point);
    q[dir] = point[dir] + h;
    Tensor fp = detail::eval_checked(field, q);
    q[dir] = point[dir] - h;
    Tensor fm = detail::eval_checked(field, q);
    Tensor out = fp;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = (fp.data()[i] - 2 * f0.data()[i] + fm.data()[i]) / (h * h);
    return out;
}

// ---------------------------------------------------------------------------
// Lightweight helpers for differentiating composite scalar/matrix lambdas.
// These appear in inner loops, so they avoid the Tensor wrapper.

inline double d_scalar(const std::function<double(const Vec&)>& f, const Vec& q, int dir,
                       const FdConfig& fd = {}) {
    const double h = fd.h1(q[dir]);
    Vec qp = q, qm = q;
    qp[dir] += h;
    qm[dir] -= h;
    const double vp = f(qp), vm = f(qm);
    if (!std::isfinite(vp)) throw EvalError("non-finite value at stencil point " + format_point(qp));
    if (!std::isfinite(vm)) throw EvalError("non-finite value at stencil point " + format_point(qm));
    return (vp - vm) / (2 * h);
}

inline Vec grad_scalar(const std::function<double(const Vec&)>& f, const Vec& q, const FdConfig& fd = {}) {
    Vec g(q.size());
    for (int d = 0; d < q.size(); ++d) g[d] = d_scalar(f, q, d, fd);
    return g;
}

/// Symmetric Hessian of a scalar lambda: second-difference stencils at steps
/// 2h and h combined by one Richardson level.
inline Mat hess_scalar(const std::function<double(const Vec&)>& f, const Vec& q, const FdConfig& fd = {}) {
    const int n = static_cast<int>(q.size());
    const double f0 = f(q);
    auto level = [&](double mult) {
        Mat H(n, n);
        for (int a = 0; a < n; ++a) {
            const double ha = mult * fd.h2(q[a]);
            Vec qp = q, qm = q;
            qp[a] += ha;
            qm[a] -= ha;
            H(a, a) = (f(qp) - 2 * f0 + f(qm)) / (ha * ha);
            for (int b = a + 1; b < n; ++b) {
                const double hb = mult * fd.h2(q[b]);
                Vec qpp = q, qpm = q, qmp = q, qmm = q;
                qpp[a] += ha; qpp[b] += hb;
                qpm[a] += ha; qpm[b] -= hb;
                qmp[a] -= ha; qmp[b] += hb;
                qmm[a] -= ha; qmm[b] -= hb;
                H(a, b) = H(b, a) = (f(qpp) - f(qpm) - f(qmp) + f(qmm)) / (4 * ha * hb);
            }
        }
        return H;
    };
    const Mat H2 = level(2.0), H1 = level(1.0);
    return (4.0 * H1 - H2) / 3.0;
}

inline Mat d_matrix(const std::function<Mat(const Vec&)>& F, const Vec& q, int dir, const FdConfig& fd = {}) {
    const double h = fd.h1(q[dir]);
    Vec qp = q, qm = q;
    qp[dir] += h;
    qm[dir] -= h;
    return (F(qp) - F(qm)) / (2 * h);
}

/// Richardson-extrapolated first derivative of a matrix lambda: combines the
/// central differences at steps h and h/2 to cancel the O(h^2) error term.
inline Mat d_matrix_rich(const std::function<Mat(const Vec&)>& F, const Vec& q, int dir,
                         const FdConfig& fd = {}) {
    const double h = fd.h2(q[dir]);
    Vec qp = q, qm = q;
    qp[dir] = q[dir] + h;
    qm[dir] = q[dir] - h;
    Mat dh = (F(qp) - F(qm)) / (2 * h);
    qp[dir] = q[dir] + h / 2;
    qm[dir] = q[dir] - h / 2;
    Mat dh2 = (F(qp) - F(qm)) / h;
    return (4.0 * dh2 - dh) / 3.0;
}

inline Vec d_vector(const std::function<Vec(const Vec&)>& F, const Vec& q, int dir, const FdConfig& fd = {}) {
    const double h = fd.h1(q[dir]);
    Vec qp = q, qm = q;
    qp[dir] += h;
    qm[dir] -= h;
    return (F(qp) - F(qm)) / (2 * h);
}

}  // namespace pfb
