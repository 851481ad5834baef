#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pfb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for all numerical failures raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A field evaluation produced a non-finite value or was called outside its chart.
class EvalError : public Error {
public:
    explicit EvalError(const std::string& msg) : Error(msg) {}
};

/// A matrix operation failed (singular, not positive definite, ...).
class LinAlgError : public Error {
public:
    explicit LinAlgError(const std::string& msg) : Error(msg) {}
};

/// An operation was requested on a spec that does not support it.
class UnsupportedError : public Error {
public:
    explicit UnsupportedError(const std::string& msg) : Error(msg) {}
};

inline std::string format_point(const Vec& q) {
    std::string s = "(";
    for (int i = 0; i < q.size(); ++i) {
        s += std::to_string(q[i]);
        if (i + 1 < q.size()) s += ", ";
    }
    return s + ")";
}

/// Finite-difference configuration shared by the differentiation helpers.
///
/// First derivatives use a central stencil with step h1_rel*max(1,|q_d|);
/// second derivatives use h2_rel*max(1,|q_d|) and one Richardson level.
struct FdConfig {
    double h1_rel = 1e-5;
    double h2_rel = 1e-4;
    int stencil = 3;  // 3 or 5 point first-derivative stencil

    double h1(double coord) const { return h1_rel * std::max(1.0, std::abs(coord)); }
    double h2(double coord) const { return h2_rel * std::max(1.0, std::abs(coord)); }
};

/// SplitMix64 step; used to derive independent per-path RNG seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace pfb
