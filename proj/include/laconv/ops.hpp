#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "laconv/tensor.hpp"

namespace laconv {

enum class PadMode { Zero, Circular };

/// Maps a (possibly out-of-range) spatial index into the source image.
/// Returns -1 for zero padding outside the image.
inline Index pad_index(Index i, Index size, PadMode pad) {
    if (i >= 0 && i < size) return i;
    if (pad == PadMode::Circular) {
        i %= size;
        return i < 0 ? i + size : i;
    }
    return -1;
}

/// One (c*k*k x h*w) patch matrix per sample. Column (i*w + j) holds the
/// k x k patch centered at (i,j), channel-major then row-major: the row
/// index is ci*k*k + u*k + v.
template <typename Scalar>
using UnfoldBatch = std::vector<RowMatX<Scalar>>;

template <typename Scalar>
UnfoldBatch<Scalar> unfold(const Tensor4<Scalar>& x, Index k, PadMode pad) {
    if (k < 1 || k % 2 == 0)
        throw ConfigError("unfold: kernel size must be odd, got " + std::to_string(k));
    const Index p = (k - 1) / 2;
    UnfoldBatch<Scalar> out(static_cast<std::size_t>(x.n));
    for (Index in = 0; in < x.n; ++in) {
        RowMatX<Scalar>& u_mat = out[static_cast<std::size_t>(in)];
        u_mat.setZero(x.c * k * k, x.h * x.w);
        for (Index ci = 0; ci < x.c; ++ci) {
            const auto src = x.plane(in, ci);
            for (Index u = 0; u < k; ++u) {
                for (Index v = 0; v < k; ++v) {
                    const Index row = (ci * k + u) * k + v;
                    Scalar* dst = u_mat.data() + row * x.h * x.w;
                    for (Index i = 0; i < x.h; ++i) {
                        const Index si = pad_index(i + u - p, x.h, pad);
                        if (si < 0) {
                            dst += x.w;
                            continue;
                        }
                        for (Index j = 0; j < x.w; ++j) {
                            const Index sj = pad_index(j + v - p, x.w, pad);
                            *dst++ = sj < 0 ? Scalar(0) : src(si, sj);
                        }
                    }
                }
            }
        }
    }
    return out;
}

/// Exact adjoint of unfold: scatter-adds every patch entry back to its
/// source pixel, so <unfold(x), y> == <x, fold(y)>.
template <typename Scalar>
Tensor4<Scalar> fold(const UnfoldBatch<Scalar>& cols, Index c, Index h, Index w,
                     Index k, PadMode pad) {
    const Index p = (k - 1) / 2;
    Tensor4<Scalar> out(static_cast<Index>(cols.size()), c, h, w);
    for (Index in = 0; in < out.n; ++in) {
        const RowMatX<Scalar>& y_mat = cols[static_cast<std::size_t>(in)];
        if (y_mat.rows() != c * k * k || y_mat.cols() != h * w)
            throw ShapeError("fold: column matrix does not match target dims");
        for (Index ci = 0; ci < c; ++ci) {
            auto dst = out.plane(in, ci);
            for (Index u = 0; u < k; ++u) {
                for (Index v = 0; v < k; ++v) {
                    const Index row = (ci * k + u) * k + v;
                    const Scalar* src = y_mat.data() + row * h * w;
                    for (Index i = 0; i < h; ++i) {
                        const Index si = pad_index(i + u - p, h, pad);
                        if (si < 0) {
                            src += w;
                            continue;
                        }
                        for (Index j = 0; j < w; ++j) {
                            const Index sj = pad_index(j + v - p, w, pad);
                            if (sj >= 0) dst(si, sj) += src[j];
                        }
                        src += w;
                    }
                }
            }
        }
    }
    return out;
}

/// Spatial-size-preserving convolution, stride 1, padding (k-1)/2.
/// out[n,co,i,j] = sum_{ci,u,v} pad(x)[n,ci,i+u,j+v] * kernel[co,ci,u,v] + bias[co]
template <typename Scalar>
Tensor4<Scalar> conv2d(const Tensor4<Scalar>& x, const ConvKernel<Scalar>& kernel,
                       PadMode pad, const VecX<Scalar>* bias = nullptr) {
    if (x.c != kernel.c_in)
        throw ShapeError("conv2d: input has " + std::to_string(x.c) +
                         " channels, kernel expects " + std::to_string(kernel.c_in));
    if (bias != nullptr && bias->size() != kernel.c_out)
        throw ShapeError("conv2d: bias length does not match c_out");
    const UnfoldBatch<Scalar> cols = unfold(x, kernel.k, pad);
    const auto k_mat = kernel.as_matrix();
    Tensor4<Scalar> out(x.n, kernel.c_out, x.h, x.w);
    for (Index in = 0; in < x.n; ++in) {
        auto out_mat = out.channels(in);
        out_mat.noalias() = k_mat * cols[static_cast<std::size_t>(in)];
        if (bias != nullptr) out_mat.colwise() += *bias;
    }
    return out;
}

template <typename Scalar>
struct Conv2dGrads {
    Tensor4<Scalar> input;
    ConvKernel<Scalar> kernel;
    VecX<Scalar> bias;  // empty when the forward pass had no bias
};

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_vjp(const Tensor4<Scalar>& g, const Tensor4<Scalar>& x,
                               const ConvKernel<Scalar>& kernel, bool had_bias,
                               PadMode pad) {
    if (g.n != x.n || g.c != kernel.c_out || g.h != x.h || g.w != x.w)
        throw ShapeError("conv2d_vjp: cotangent shape " + g.shape_str() +
                         " does not match forward output");
    const UnfoldBatch<Scalar> cols = unfold(x, kernel.k, pad);
    const auto k_mat = kernel.as_matrix();
    Conv2dGrads<Scalar> grads;
    grads.kernel = ConvKernel<Scalar>(kernel.c_out, kernel.c_in, kernel.k);
    auto dk_mat = grads.kernel.as_matrix();
    if (had_bias) grads.bias = VecX<Scalar>::Zero(kernel.c_out);
    UnfoldBatch<Scalar> dcols(static_cast<std::size_t>(x.n));
    for (Index in = 0; in < x.n; ++in) {
        const auto g_mat = g.channels(in);
        dk_mat.noalias() += g_mat * cols[static_cast<std::size_t>(in)].transpose();
        dcols[static_cast<std::size_t>(in)].noalias() = k_mat.transpose() * g_mat;
        if (had_bias) grads.bias += g_mat.rowwise().sum();
    }
    grads.input = fold(dcols, x.c, x.h, x.w, kernel.k, pad);
    return grads;
}

/// out = x * weight^T + bias, applied per row.
template <typename Scalar>
MatX<Scalar> dense(const MatX<Scalar>& x, const DenseLayer<Scalar>& layer) {
    if (x.cols() != layer.in_dim())
        throw ShapeError("dense: input has " + std::to_string(x.cols()) +
                         " columns, layer expects " + std::to_string(layer.in_dim()));
    MatX<Scalar> out = x * layer.weight.transpose();
    out.rowwise() += layer.bias.transpose();
    return out;
}

template <typename Scalar>
struct DenseGrads {
    MatX<Scalar> input;
    RowMatX<Scalar> weight;
    VecX<Scalar> bias;
};

template <typename Scalar>
DenseGrads<Scalar> dense_vjp(const MatX<Scalar>& g, const MatX<Scalar>& x,
                             const DenseLayer<Scalar>& layer) {
    if (g.rows() != x.rows() || g.cols() != layer.out_dim())
        throw ShapeError("dense_vjp: cotangent shape mismatch");
    DenseGrads<Scalar> grads;
    grads.input.noalias() = g * layer.weight;
    grads.weight.noalias() = g.transpose() * x;
    grads.bias = g.colwise().sum().transpose();
    return grads;
}

template <typename Scalar>
Tensor4<Scalar> relu(const Tensor4<Scalar>& x) {
    Tensor4<Scalar> out = x;
    out.data = out.data.cwiseMax(Scalar(0));
    return out;
}

template <typename Scalar>
MatX<Scalar> relu(const MatX<Scalar>& x) {
    return x.cwiseMax(Scalar(0));
}

/// Numerically stable logistic. The result is clamped into the largest
/// representable open interval so the strict (0,1) range holds even where
/// exp saturates (|x| beyond ~37 in double precision).
template <typename Scalar>
Scalar sigmoid_scalar(Scalar x) {
    Scalar y;
    if (x >= Scalar(0)) {
        y = Scalar(1) / (Scalar(1) + std::exp(-x));
    } else {
        const Scalar e = std::exp(x);
        y = e / (Scalar(1) + e);
    }
    const Scalar lo = std::numeric_limits<Scalar>::min();
    const Scalar hi = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / Scalar(2);
    return y < lo ? lo : (y > hi ? hi : y);
}

template <typename Scalar>
Tensor4<Scalar> sigmoid(const Tensor4<Scalar>& x) {
    Tensor4<Scalar> out = x;
    out.data = out.data.unaryExpr([](Scalar v) { return sigmoid_scalar(v); });
    return out;
}

template <typename Scalar>
MatX<Scalar> sigmoid(const MatX<Scalar>& x) {
    return x.unaryExpr([](Scalar v) { return sigmoid_scalar(v); });
}

/// VJPs driven by the forward output: relu uses the x>0 indicator
/// (subgradient 0 at the kink), sigmoid uses y*(1-y).
template <typename Scalar>
Tensor4<Scalar> relu_vjp(const Tensor4<Scalar>& g, const Tensor4<Scalar>& y) {
    Tensor4<Scalar> out = g;
    out.data = g.data.cwiseProduct(
        (y.data.array() > Scalar(0)).template cast<Scalar>().matrix());
    return out;
}

template <typename Scalar>
MatX<Scalar> relu_vjp(const MatX<Scalar>& g, const MatX<Scalar>& y) {
    return g.cwiseProduct((y.array() > Scalar(0)).template cast<Scalar>().matrix());
}

template <typename Scalar>
Tensor4<Scalar> sigmoid_vjp(const Tensor4<Scalar>& g, const Tensor4<Scalar>& y) {
    Tensor4<Scalar> out = g;
    out.data = g.data.array() * y.data.array() * (Scalar(1) - y.data.array());
    return out;
}

template <typename Scalar>
MatX<Scalar> sigmoid_vjp(const MatX<Scalar>& g, const MatX<Scalar>& y) {
    return (g.array() * y.array() * (Scalar(1) - y.array())).matrix();
}

/// Spatial mean per channel: (n x c) matrix.
template <typename Scalar>
MatX<Scalar> global_avg_pool(const Tensor4<Scalar>& x) {
    if (x.h * x.w < 1) throw ShapeError("global_avg_pool: empty spatial dims");
    MatX<Scalar> out(x.n, x.c);
    for (Index in = 0; in < x.n; ++in)
        out.row(in) = x.channels(in).rowwise().mean().transpose();
    return out;
}

/// Spreads the cotangent uniformly: every spatial cell gets g/(h*w).
template <typename Scalar>
Tensor4<Scalar> global_avg_pool_vjp(const MatX<Scalar>& g, Index h, Index w) {
    Tensor4<Scalar> out(g.rows(), g.cols(), h, w);
    const Scalar scale = Scalar(1) / static_cast<Scalar>(h * w);
    for (Index in = 0; in < out.n; ++in)
        for (Index ic = 0; ic < out.c; ++ic)
            out.plane(in, ic).setConstant(g(in, ic) * scale);
    return out;
}

enum class UpsampleMethod { Nearest, Bicubic };

namespace detail {

/// Catmull-Rom cubic (a = -0.5).
inline double cubic_weight(double x) {
    x = std::abs(x);
    if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

inline Index clamp_index(Index i, Index size) {
    return i < 0 ? 0 : (i >= size ? size - 1 : i);
}

}  // namespace detail

/// Integer-factor spatial upsampling; used in data preparation only.
/// Bicubic uses half-pixel sample centers and edge replication.
template <typename Scalar>
Tensor4<Scalar> upsample(const Tensor4<Scalar>& x, Index factor, UpsampleMethod method) {
    if (factor < 1)
        throw ConfigError("upsample: factor must be >= 1, got " + std::to_string(factor));
    if (factor == 1) return x;
    Tensor4<Scalar> out(x.n, x.c, x.h * factor, x.w * factor);
    if (method == UpsampleMethod::Nearest) {
        for (Index in = 0; in < x.n; ++in)
            for (Index ic = 0; ic < x.c; ++ic) {
                const auto src = x.plane(in, ic);
                auto dst = out.plane(in, ic);
                for (Index i = 0; i < out.h; ++i)
                    for (Index j = 0; j < out.w; ++j)
                        dst(i, j) = src(i / factor, j / factor);
            }
        return out;
    }
    const double inv_f = 1.0 / static_cast<double>(factor);
    std::vector<Index> base(static_cast<std::size_t>(out.h > out.w ? out.h : out.w));
    std::vector<std::array<double, 4>> wts(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        const double src = (static_cast<double>(i) + 0.5) * inv_f - 0.5;
        const double fl = std::floor(src);
        const double t = src - fl;
        base[i] = static_cast<Index>(fl);
        wts[i] = {detail::cubic_weight(t + 1.0), detail::cubic_weight(t),
                  detail::cubic_weight(1.0 - t), detail::cubic_weight(2.0 - t)};
    }
    for (Index in = 0; in < x.n; ++in)
        for (Index ic = 0; ic < x.c; ++ic) {
            const auto src = x.plane(in, ic);
            auto dst = out.plane(in, ic);
            for (Index i = 0; i < out.h; ++i) {
                const auto& wi = wts[static_cast<std::size_t>(i)];
                for (Index j = 0; j < out.w; ++j) {
                    const auto& wj = wts[static_cast<std::size_t>(j)];
                    double acc = 0.0;
                    for (int a = 0; a < 4; ++a) {
                        const Index si = detail::clamp_index(base[static_cast<std::size_t>(i)] - 1 + a, x.h);
                        double row = 0.0;
                        for (int b = 0; b < 4; ++b) {
                            const Index sj = detail::clamp_index(base[static_cast<std::size_t>(j)] - 1 + b, x.w);
                            row += wj[static_cast<std::size_t>(b)] * static_cast<double>(src(si, sj));
                        }
                        acc += wi[static_cast<std::size_t>(a)] * row;
                    }
                    dst(i, j) = static_cast<Scalar>(acc);
                }
            }
        }
    return out;
}

/// Channel concatenation [a; b]; a's channels come first.
template <typename Scalar>
Tensor4<Scalar> concat_channels(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw ShapeError("concat_channels: " + a.shape_str() + " vs " + b.shape_str());
    Tensor4<Scalar> out(a.n, a.c + b.c, a.h, a.w);
    for (Index in = 0; in < a.n; ++in) {
        out.channels(in).topRows(a.c) = a.channels(in);
        out.channels(in).bottomRows(b.c) = b.channels(in);
    }
    return out;
}

/// VJP of concat: slice [from, from+count) channels out of the cotangent.
template <typename Scalar>
Tensor4<Scalar> slice_channels(const Tensor4<Scalar>& x, Index from, Index count) {
    if (from < 0 || count < 0 || from + count > x.c)
        throw ShapeError("slice_channels: range out of bounds");
    Tensor4<Scalar> out(x.n, count, x.h, x.w);
    for (Index in = 0; in < x.n; ++in)
        out.channels(in) = x.channels(in).middleRows(from, count);
    return out;
}

/// Elementwise sum; the VJP passes the cotangent unchanged to both inputs.
template <typename Scalar>
Tensor4<Scalar> add(const Tensor4<Scalar>& a, const Tensor4<Scalar>& b) {
    if (!a.same_shape(b))
        throw ShapeError("add: " + a.shape_str() + " vs " + b.shape_str());
    Tensor4<Scalar> out = a;
    out.data += b.data;
    return out;
}

}  // namespace laconv
