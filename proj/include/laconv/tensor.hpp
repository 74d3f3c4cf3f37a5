#pragma once

#include <Eigen/Dense>

#include <string>

#include "laconv/errors.hpp"

namespace laconv {

using Index = Eigen::Index;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense rank-4 array in (sample, channel, height, width) order, row-major.
/// The universal value carrier for feature maps, images and batches.
template <typename Scalar>
struct Tensor4 {
    Index n = 0, c = 0, h = 0, w = 0;
    VecX<Scalar> data;  // length n*c*h*w, zero-initialized on construction

    Tensor4() = default;
    Tensor4(Index n_, Index c_, Index h_, Index w_)
        : n(n_), c(c_), h(h_), w(w_), data(VecX<Scalar>::Zero(n_ * c_ * h_ * w_)) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw ShapeError("Tensor4: negative dimension");
    }

    Index size() const { return n * c * h * w; }

    Scalar& operator()(Index in, Index ic, Index i, Index j) {
        return data[((in * c + ic) * h + i) * w + j];
    }
    Scalar operator()(Index in, Index ic, Index i, Index j) const {
        return data[((in * c + ic) * h + i) * w + j];
    }

    Scalar* sample_ptr(Index in) { return data.data() + in * c * h * w; }
    const Scalar* sample_ptr(Index in) const { return data.data() + in * c * h * w; }

    /// View of one sample as a (c x h*w) row-major matrix; channel planes are rows.
    Eigen::Map<RowMatX<Scalar>> channels(Index in) {
        return {sample_ptr(in), c, h * w};
    }
    Eigen::Map<const RowMatX<Scalar>> channels(Index in) const {
        return {sample_ptr(in), c, h * w};
    }

    /// View of one channel plane as an (h x w) row-major matrix.
    Eigen::Map<RowMatX<Scalar>> plane(Index in, Index ic) {
        return {sample_ptr(in) + ic * h * w, h, w};
    }
    Eigen::Map<const RowMatX<Scalar>> plane(Index in, Index ic) const {
        return {sample_ptr(in) + ic * h * w, h, w};
    }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) +
               "x" + std::to_string(w);
    }
};

/// Convolution kernel bank, (c_out, c_in, k, k) row-major. k must be odd.
template <typename Scalar>
struct ConvKernel {
    Index c_out = 0, c_in = 0, k = 0;
    VecX<Scalar> data;

    ConvKernel() = default;
    ConvKernel(Index c_out_, Index c_in_, Index k_)
        : c_out(c_out_), c_in(c_in_), k(k_),
          data(VecX<Scalar>::Zero(c_out_ * c_in_ * k_ * k_)) {
        if (k_ < 1 || k_ % 2 == 0)
            throw ConfigError("ConvKernel: kernel size must be odd and >= 1, got " +
                              std::to_string(k_));
    }

    Index size() const { return c_out * c_in * k * k; }

    Scalar& operator()(Index co, Index ci, Index u, Index v) {
        return data[((co * c_in + ci) * k + u) * k + v];
    }
    Scalar operator()(Index co, Index ci, Index u, Index v) const {
        return data[((co * c_in + ci) * k + u) * k + v];
    }

    /// (c_out x c_in*k*k) matrix view; row co is kernel co flattened
    /// channel-major then row-major, matching the unfold row order.
    Eigen::Map<RowMatX<Scalar>> as_matrix() {
        return {data.data(), c_out, c_in * k * k};
    }
    Eigen::Map<const RowMatX<Scalar>> as_matrix() const {
        return {data.data(), c_out, c_in * k * k};
    }
};

/// Fully connected layer, out = x * weight^T + bias per row.
/// Weight storage is row-major so it serializes as a (out, in, 1, 1) tensor.
template <typename Scalar>
struct DenseLayer {
    RowMatX<Scalar> weight;  // (out x in)
    VecX<Scalar> bias;       // (out)

    DenseLayer() = default;
    DenseLayer(Index out, Index in)
        : weight(RowMatX<Scalar>::Zero(out, in)), bias(VecX<Scalar>::Zero(out)) {}

    Index out_dim() const { return weight.rows(); }
    Index in_dim() const { return weight.cols(); }
    Index size() const { return weight.size() + bias.size(); }
};

template <typename Scalar>
bool all_finite(const Tensor4<Scalar>& t) {
    return t.data.allFinite();
}

using Tensor4d = Tensor4<double>;
using ConvKerneld = ConvKernel<double>;
using DenseLayerd = DenseLayer<double>;

}  // namespace laconv
