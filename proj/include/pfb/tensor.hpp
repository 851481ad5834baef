#pragma once

#include <initializer_list>
#include <numeric>
#include <vector>

#include "pfb/common.hpp"

namespace pfb {

/// Dense multi-index array, row-major, bounds-checked on every access.
///
/// Rank-1/2 values interconvert with Eigen vectors/matrices; higher ranks hold
/// the indexed geometric objects (connection coefficients, curvature 2-forms,
/// second fundamental forms).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (int e : shape_) {
            if (e < 0) throw Error("Tensor: negative extent");
            n *= static_cast<std::size_t>(e);
        }
        data_.assign(n, 0.0);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor from_vector(const Vec& v) {
        Tensor t({static_cast<int>(v.size())});
        for (int i = 0; i < v.size(); ++i) t.data_[static_cast<std::size_t>(i)] = v[i];
        return t;
    }

    static Tensor from_matrix(const Mat& m) {
        Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) t.data_[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
        return t;
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    double& at(std::initializer_list<int> idx) { return data_[offset(idx)]; }
    double at(std::initializer_list<int> idx) const { return data_[offset(idx)]; }

    double& operator()(int i) { return data_[offset({i})]; }
    double operator()(int i) const { return data_[offset({i})]; }
    double& operator()(int i, int j) { return data_[offset({i, j})]; }
    double operator()(int i, int j) const { return data_[offset({i, j})]; }
    double& operator()(int i, int j, int k) { return data_[offset({i, j, k})]; }
    double operator()(int i, int j, int k) const { return data_[offset({i, j, k})]; }

    Vec to_vector() const {
        if (rank() != 1) throw Error("Tensor: to_vector needs rank 1");
        Vec v(shape_[0]);
        for (int i = 0; i < shape_[0]; ++i) v[i] = data_[static_cast<std::size_t>(i)];
        return v;
    }

    Mat to_matrix() const {
        if (rank() != 2) throw Error("Tensor: to_matrix needs rank 2");
        Mat m(shape_[0], shape_[1]);
        for (int i = 0; i < shape_[0]; ++i)
            for (int j = 0; j < shape_[1]; ++j) m(i, j) = data_[static_cast<std::size_t>(i * shape_[1] + j)];
        return m;
    }

    Tensor& operator+=(const Tensor& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }

    Tensor& operator*=(double s) {
        for (double& x : data_) x *= s;
        return *this;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : data_) m = std::max(m, std::abs(x));
        return m;
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

private:
    std::size_t offset(std::initializer_list<int> idx) const {
        if (static_cast<int>(idx.size()) != rank()) throw Error("Tensor: index rank mismatch");
        std::size_t off = 0;
        int d = 0;
        for (int i : idx) {
            if (i < 0 || i >= shape_[static_cast<std::size_t>(d)])
                throw Error("Tensor: index " + std::to_string(i) + " out of bounds for extent " +
                            std::to_string(shape_[static_cast<std::size_t>(d)]) + " in slot " + std::to_string(d));
            off = off * static_cast<std::size_t>(shape_[static_cast<std::size_t>(d)]) + static_cast<std::size_t>(i);
            ++d;
        }
        return off;
    }

    void check_same_shape(const Tensor& o) const {
        if (shape_ != o.shape_) throw Error("Tensor: shape mismatch");
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

inline Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
inline Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
inline Tensor operator*(double s, Tensor a) { return a *= s; }

}  // namespace pfb
