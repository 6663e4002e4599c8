#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "cupi/errors.hpp"

namespace cupi {

// Row-major matrices throughout: feature-map slices, stat blocks and affine
// weights all map onto contiguous buffers without transposition.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

// Dense 4-D tensor in (batch, channel, row, col) layout.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }
    int spatial() const { return h * w; }
    std::size_t sample_stride() const { return static_cast<std::size_t>(c) * h * w; }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double* sample(int b) { return v.data() + b * sample_stride(); }
    const double* sample(int b) const { return v.data() + b * sample_stride(); }

    double* plane(int b, int ch) { return sample(b) + static_cast<std::size_t>(ch) * h * w; }
    const double* plane(int b, int ch) const { return sample(b) + static_cast<std::size_t>(ch) * h * w; }

    double& at(int b, int ch, int i, int j) { return plane(b, ch)[i * w + j]; }
    double at(int b, int ch, int i, int j) const { return plane(b, ch)[i * w + j]; }

    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

    void zero() { std::fill(v.begin(), v.end(), 0.0); }

    // View of one sample as a (c, h*w) matrix.
    MatMap sample_mat(int b) { return MatMap(sample(b), c, h * w); }
    ConstMatMap sample_mat(int b) const { return ConstMatMap(sample(b), c, h * w); }
};

inline void require_same_shape(const Tensor4& a, const Tensor4& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": tensor shapes differ");
    }
}

}  // namespace cupi
