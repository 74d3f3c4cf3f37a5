#pragma once

#include <array>
#include <string>

#include "laconv/ops.hpp"

namespace laconv {

enum class ConvVariant { Standard, LocalAdaptive };
enum class BiasVariant { None, Static, Dynamic };

/// The six combinations form the layer ablation grid:
/// {standard, local_adaptive} x {none, static, dynamic}.
struct LAConvMode {
    ConvVariant conv = ConvVariant::LocalAdaptive;
    BiasVariant bias = BiasVariant::Dynamic;

    bool operator==(const LAConvMode&) const = default;
};

inline std::string to_string(ConvVariant v) {
    return v == ConvVariant::Standard ? "standard" : "local_adaptive";
}
inline std::string to_string(BiasVariant v) {
    switch (v) {
        case BiasVariant::None: return "none";
        case BiasVariant::Static: return "static";
        default: return "dynamic";
    }
}

/// All learnable parameters of one LAConv layer. Only the groups required
/// by the mode are allocated; exactly one bias source is ever active.
template <typename Scalar>
struct LAConvParams {
    Index c_in = 0, c_out = 0, k = 0;
    LAConvMode mode;

    ConvKernel<Scalar> main_kernel;  // (c_out, c_in, k, k)

    // local weight generator: shallow conv to k^2 channels, then two
    // dense layers with k^2 neurons ending in a sigmoid
    ConvKernel<Scalar> wg_conv;    // (k^2, c_in, k, k)
    VecX<Scalar> wg_conv_bias;     // (k^2)
    DenseLayer<Scalar> wg_fc1;     // k^2 -> k^2, relu
    DenseLayer<Scalar> wg_fc2;     // k^2 -> k^2, sigmoid

    // dynamic bias generator on the globally pooled input
    DenseLayer<Scalar> dyb_fc1;    // c_in -> c_out, relu
    DenseLayer<Scalar> dyb_fc2;    // c_out -> c_out, linear

    VecX<Scalar> static_bias;      // (c_out), static-bias mode only

    static LAConvParams zeros(Index c_in, Index c_out, Index k, LAConvMode mode) {
        LAConvParams p;
        p.c_in = c_in;
        p.c_out = c_out;
        p.k = k;
        p.mode = mode;
        p.main_kernel = ConvKernel<Scalar>(c_out, c_in, k);
        if (mode.conv == ConvVariant::LocalAdaptive) {
            p.wg_conv = ConvKernel<Scalar>(k * k, c_in, k);
            p.wg_conv_bias = VecX<Scalar>::Zero(k * k);
            p.wg_fc1 = DenseLayer<Scalar>(k * k, k * k);
            p.wg_fc2 = DenseLayer<Scalar>(k * k, k * k);
        }
        if (mode.bias == BiasVariant::Dynamic) {
            p.dyb_fc1 = DenseLayer<Scalar>(c_out, c_in);
            p.dyb_fc2 = DenseLayer<Scalar>(c_out, c_out);
        }
        if (mode.bias == BiasVariant::Static) p.static_bias = VecX<Scalar>::Zero(c_out);
        return p;
    }

    void validate() const {
        const Index kk = k * k;
        if (main_kernel.c_out != c_out || main_kernel.c_in != c_in || main_kernel.k != k)
            throw ConfigError("LAConvParams: main kernel shape inconsistent");
        if (mode.conv == ConvVariant::LocalAdaptive) {
            if (wg_conv.c_out != kk || wg_conv.c_in != c_in || wg_conv.k != k ||
                wg_conv_bias.size() != kk || wg_fc1.out_dim() != kk ||
                wg_fc1.in_dim() != kk || wg_fc2.out_dim() != kk || wg_fc2.in_dim() != kk)
                throw ConfigError("LAConvParams: weight generator missing or inconsistent");
        }
        if (mode.bias == BiasVariant::Dynamic) {
            if (dyb_fc1.out_dim() != c_out || dyb_fc1.in_dim() != c_in ||
                dyb_fc2.out_dim() != c_out || dyb_fc2.in_dim() != c_out)
                throw ConfigError("LAConvParams: bias generator missing or inconsistent");
        }
        if (mode.bias == BiasVariant::Static && static_bias.size() != c_out)
            throw ConfigError("LAConvParams: static bias missing");
    }
};

/// One named parameter tensor within a layer, exposed as flat storage plus
/// its rank-4 serialization dims.
template <typename Scalar>
struct ParamGroupRef {
    const char* name;
    Scalar* data;
    Index size;
    std::array<Index, 4> dims;
};

/// Visits every parameter group active in the layer's mode, in a fixed
/// documented order (this order defines checkpoint layout, initialization
/// draws and optimizer state layout).
template <typename Scalar, typename Fn>
void for_each_group(LAConvParams<Scalar>& p, Fn&& fn) {
    const Index kk = p.k * p.k;
    fn(ParamGroupRef<Scalar>{"main_kernel", p.main_kernel.data.data(), p.main_kernel.size(),
                             {p.c_out, p.c_in, p.k, p.k}});
    if (p.mode.conv == ConvVariant::LocalAdaptive) {
        fn(ParamGroupRef<Scalar>{"wg_conv_w", p.wg_conv.data.data(), p.wg_conv.size(),
                                 {kk, p.c_in, p.k, p.k}});
        fn(ParamGroupRef<Scalar>{"wg_conv_b", p.wg_conv_bias.data(), kk, {kk, 1, 1, 1}});
        fn(ParamGroupRef<Scalar>{"wg_fc1_w", p.wg_fc1.weight.data(), kk * kk, {kk, kk, 1, 1}});
        fn(ParamGroupRef<Scalar>{"wg_fc1_b", p.wg_fc1.bias.data(), kk, {kk, 1, 1, 1}});
        fn(ParamGroupRef<Scalar>{"wg_fc2_w", p.wg_fc2.weight.data(), kk * kk, {kk, kk, 1, 1}});
        fn(ParamGroupRef<Scalar>{"wg_fc2_b", p.wg_fc2.bias.data(), kk, {kk, 1, 1, 1}});
    }
    if (p.mode.bias == BiasVariant::Dynamic) {
        fn(ParamGroupRef<Scalar>{"dyb_fc1_w", p.dyb_fc1.weight.data(), p.c_out * p.c_in,
                                 {p.c_out, p.c_in, 1, 1}});
        fn(ParamGroupRef<Scalar>{"dyb_fc1_b", p.dyb_fc1.bias.data(), p.c_out,
                                 {p.c_out, 1, 1, 1}});
        fn(ParamGroupRef<Scalar>{"dyb_fc2_w", p.dyb_fc2.weight.data(), p.c_out * p.c_out,
                                 {p.c_out, p.c_out, 1, 1}});
        fn(ParamGroupRef<Scalar>{"dyb_fc2_b", p.dyb_fc2.bias.data(), p.c_out,
                                 {p.c_out, 1, 1, 1}});
    }
    if (p.mode.bias == BiasVariant::Static)
        fn(ParamGroupRef<Scalar>{"static_bias", p.static_bias.data(), p.c_out,
                                 {p.c_out, 1, 1, 1}});
}

template <typename Scalar, typename Fn>
void for_each_group(const LAConvParams<Scalar>& p, Fn&& fn) {
    for_each_group(const_cast<LAConvParams<Scalar>&>(p),
                   [&](const ParamGroupRef<Scalar>& g) { fn(g); });
}

template <typename Scalar>
Index param_count(const LAConvParams<Scalar>& p) {
    Index total = 0;
    for_each_group(p, [&](const ParamGroupRef<Scalar>& g) { total += g.size; });
    return total;
}

/// Saved intermediates of the weight generator forward pass.
template <typename Scalar>
struct WeightGenState {
    Tensor4<Scalar> shallow;  // post-relu conv feature (n, k^2, h, w)
    MatX<Scalar> gathered;    // (n*h*w x k^2), one row per spatial location
    MatX<Scalar> hidden;      // post-relu fc1 output
    MatX<Scalar> weights;     // post-sigmoid fc2 output
};

/// Per-pixel adaptive weights in (0,1): a shallow conv + ReLU yields a k^2
/// channel feature, each location's channel vector runs through two dense
/// layers (ReLU then sigmoid). Output dims (n, k^2, h, w).
template <typename Scalar>
Tensor4<Scalar> gen_local_weights(const Tensor4<Scalar>& x, const LAConvParams<Scalar>& p,
                                  PadMode pad, WeightGenState<Scalar>* state = nullptr) {
    if (x.c != p.c_in)
        throw ShapeError("gen_local_weights: input channels " + std::to_string(x.c) +
                         " != layer c_in " + std::to_string(p.c_in));
    const Index kk = p.k * p.k;
    const Index hw = x.h * x.w;
    const Tensor4<Scalar> shallow = relu(conv2d(x, p.wg_conv, pad, &p.wg_conv_bias));
    MatX<Scalar> gathered(x.n * hw, kk);
    for (Index n = 0; n < x.n; ++n)
        gathered.middleRows(n * hw, hw) = shallow.channels(n).transpose();
    const MatX<Scalar> hidden = relu(dense(gathered, p.wg_fc1));
    const MatX<Scalar> wmat = sigmoid(dense(hidden, p.wg_fc2));
    Tensor4<Scalar> out(x.n, kk, x.h, x.w);
    for (Index n = 0; n < x.n; ++n)
        out.channels(n) = wmat.middleRows(n * hw, hw).transpose();
    if (state != nullptr) {
        state->shallow = shallow;
        state->gathered = std::move(gathered);
        state->hidden = hidden;
        state->weights = wmat;
    }
    return out;
}

template <typename Scalar>
struct WeightGenGrads {
    Tensor4<Scalar> input;
    ConvKernel<Scalar> wg_conv;
    VecX<Scalar> wg_conv_bias;
    DenseGrads<Scalar> fc1, fc2;
};

template <typename Scalar>
WeightGenGrads<Scalar> gen_local_weights_vjp(const Tensor4<Scalar>& g,
                                             const Tensor4<Scalar>& x,
                                             const LAConvParams<Scalar>& p, PadMode pad,
                                             const WeightGenState<Scalar>& st) {
    const Index kk = p.k * p.k;
    const Index hw = x.h * x.w;
    MatX<Scalar> dwmat(x.n * hw, kk);
    for (Index n = 0; n < x.n; ++n)
        dwmat.middleRows(n * hw, hw) = g.channels(n).transpose();
    const MatX<Scalar> dw_pre = sigmoid_vjp(dwmat, st.weights);
    WeightGenGrads<Scalar> grads;
    grads.fc2 = dense_vjp(dw_pre, st.hidden, p.wg_fc2);
    const MatX<Scalar> dt_pre = relu_vjp(grads.fc2.input, st.hidden);
    grads.fc1 = dense_vjp(dt_pre, st.gathered, p.wg_fc1);
    Tensor4<Scalar> dshallow(x.n, kk, x.h, x.w);
    for (Index n = 0; n < x.n; ++n)
        dshallow.channels(n) = grads.fc1.input.middleRows(n * hw, hw).transpose();
    const Tensor4<Scalar> ds_pre = relu_vjp(dshallow, st.shallow);
    auto conv_grads = conv2d_vjp(ds_pre, x, p.wg_conv, true, pad);
    grads.input = std::move(conv_grads.input);
    grads.wg_conv = std::move(conv_grads.kernel);
    grads.wg_conv_bias = std::move(conv_grads.bias);
    return grads;
}

/// Locally weighted convolution (unfold -> per-column scaling -> GEMM):
/// out[n,co,i,j] = sum_{ci,u,v} pad(x)[n,ci,i+u,j+v] * weights[n,u*k+v,i,j]
///                 * kernel[co,ci,u,v]
/// The scalar weight at patch offset (u,v) is duplicated across input
/// channels and shared by every output kernel.
template <typename Scalar>
Tensor4<Scalar> modulated_conv(const Tensor4<Scalar>& x, const Tensor4<Scalar>& weights,
                               const ConvKernel<Scalar>& kernel, PadMode pad) {
    if (x.c != kernel.c_in)
        throw ShapeError("modulated_conv: channel mismatch");
    const Index kk = kernel.k * kernel.k;
    if (weights.n != x.n || weights.c != kk || weights.h != x.h || weights.w != x.w)
        throw ShapeError("modulated_conv: weights " + weights.shape_str() +
                         " inconsistent with kernel size and input " + x.shape_str());
    const UnfoldBatch<Scalar> cols = unfold(x, kernel.k, pad);
    const auto k_mat = kernel.as_matrix();
    Tensor4<Scalar> out(x.n, kernel.c_out, x.h, x.w);
    RowMatX<Scalar> scaled(x.c * kk, x.h * x.w);
    for (Index n = 0; n < x.n; ++n) {
        const auto w_mat = weights.channels(n);  // (k^2 x h*w)
        for (Index ci = 0; ci < x.c; ++ci)
            scaled.middleRows(ci * kk, kk) =
                cols[static_cast<std::size_t>(n)].middleRows(ci * kk, kk).cwiseProduct(w_mat);
        out.channels(n).noalias() = k_mat * scaled;
    }
    return out;
}

template <typename Scalar>
struct ModConvGrads {
    Tensor4<Scalar> input;
    Tensor4<Scalar> weights;
    ConvKernel<Scalar> kernel;
};

template <typename Scalar>
ModConvGrads<Scalar> modulated_conv_vjp(const Tensor4<Scalar>& g, const Tensor4<Scalar>& x,
                                        const Tensor4<Scalar>& weights,
                                        const ConvKernel<Scalar>& kernel, PadMode pad) {
    const Index kk = kernel.k * kernel.k;
    const UnfoldBatch<Scalar> cols = unfold(x, kernel.k, pad);
    const auto k_mat = kernel.as_matrix();
    ModConvGrads<Scalar> grads;
    grads.weights = Tensor4<Scalar>(x.n, kk, x.h, x.w);
    grads.kernel = ConvKernel<Scalar>(kernel.c_out, kernel.c_in, kernel.k);
    auto dk_mat = grads.kernel.as_matrix();
    UnfoldBatch<Scalar> dcols(static_cast<std::size_t>(x.n));
    RowMatX<Scalar> scaled(x.c * kk, x.h * x.w);
    for (Index n = 0; n < x.n; ++n) {
        const auto& u_mat = cols[static_cast<std::size_t>(n)];
        const auto w_mat = weights.channels(n);
        for (Index ci = 0; ci < x.c; ++ci)
            scaled.middleRows(ci * kk, kk) = u_mat.middleRows(ci * kk, kk).cwiseProduct(w_mat);
        const auto g_mat = g.channels(n);
        dk_mat.noalias() += g_mat * scaled.transpose();
        const RowMatX<Scalar> dscaled = k_mat.transpose() * g_mat;
        auto dw_mat = grads.weights.channels(n);
        RowMatX<Scalar>& du = dcols[static_cast<std::size_t>(n)];
        du.resize(x.c * kk, x.h * x.w);
        for (Index ci = 0; ci < x.c; ++ci) {
            const auto ds_block = dscaled.middleRows(ci * kk, kk);
            dw_mat += ds_block.cwiseProduct(u_mat.middleRows(ci * kk, kk));
            du.middleRows(ci * kk, kk) = ds_block.cwiseProduct(w_mat);
        }
    }
    grads.input = fold(dcols, x.c, x.h, x.w, kernel.k, pad);
    return grads;
}

template <typename Scalar>
struct DynBiasState {
    MatX<Scalar> pooled;  // (n x c_in)
    MatX<Scalar> hidden;  // post-relu fc1 output
};

/// One bias vector per sample from the globally pooled input; the final
/// dense layer is linear so biases may be negative.
template <typename Scalar>
MatX<Scalar> dynamic_bias(const Tensor4<Scalar>& x, const LAConvParams<Scalar>& p,
                          DynBiasState<Scalar>* state = nullptr) {
    if (x.c != p.c_in) throw ShapeError("dynamic_bias: channel mismatch");
    const MatX<Scalar> pooled = global_avg_pool(x);
    const MatX<Scalar> hidden = relu(dense(pooled, p.dyb_fc1));
    MatX<Scalar> out = dense(hidden, p.dyb_fc2);
    if (state != nullptr) {
        state->pooled = pooled;
        state->hidden = hidden;
    }
    return out;
}

template <typename Scalar>
struct DynBiasGrads {
    Tensor4<Scalar> input;
    DenseGrads<Scalar> fc1, fc2;
};

template <typename Scalar>
DynBiasGrads<Scalar> dynamic_bias_vjp(const MatX<Scalar>& g, const Tensor4<Scalar>& x,
                                      const LAConvParams<Scalar>& p,
                                      const DynBiasState<Scalar>& st) {
    DynBiasGrads<Scalar> grads;
    grads.fc2 = dense_vjp(g, st.hidden, p.dyb_fc2);
    const MatX<Scalar> dh = relu_vjp(grads.fc2.input, st.hidden);
    grads.fc1 = dense_vjp(dh, st.pooled, p.dyb_fc1);
    grads.input = global_avg_pool_vjp<Scalar>(grads.fc1.input, x.h, x.w);
    return grads;
}

/// Saved forward state needed by laconv_vjp.
template <typename Scalar>
struct LAConvState {
    Tensor4<Scalar> input;
    Tensor4<Scalar> local_weights;
    WeightGenState<Scalar> wg;
    DynBiasState<Scalar> dyb;
    bool valid = false;
};

/// Full layer forward: standard or locally adaptive convolution plus the
/// configured bias source (none / static / per-sample dynamic).
template <typename Scalar>
Tensor4<Scalar> laconv_forward(const Tensor4<Scalar>& x, const LAConvParams<Scalar>& p,
                               PadMode pad, LAConvState<Scalar>* state = nullptr) {
    p.validate();
    Tensor4<Scalar> out;
    if (p.mode.conv == ConvVariant::Standard) {
        out = conv2d(x, p.main_kernel, pad);
    } else {
        Tensor4<Scalar> weights =
            gen_local_weights(x, p, pad, state != nullptr ? &state->wg : nullptr);
        out = modulated_conv(x, weights, p.main_kernel, pad);
        if (state != nullptr) state->local_weights = std::move(weights);
    }
    if (p.mode.bias == BiasVariant::Static) {
        for (Index n = 0; n < out.n; ++n) out.channels(n).colwise() += p.static_bias;
    } else if (p.mode.bias == BiasVariant::Dynamic) {
        const MatX<Scalar> d = dynamic_bias(x, p, state != nullptr ? &state->dyb : nullptr);
        for (Index n = 0; n < out.n; ++n)
            out.channels(n).colwise() += VecX<Scalar>(d.row(n).transpose());
    }
    if (state != nullptr) {
        state->input = x;
        state->valid = true;
    }
    return out;
}

/// Gradients of one layer: input cotangent plus a params-shaped container.
template <typename Scalar>
struct LAConvGrads {
    Tensor4<Scalar> input;
    LAConvParams<Scalar> params;
};

template <typename Scalar>
LAConvGrads<Scalar> laconv_vjp(const Tensor4<Scalar>& g, const LAConvParams<Scalar>& p,
                               PadMode pad, const LAConvState<Scalar>& st) {
    if (!st.valid)
        throw UsageError("laconv_vjp: forward pass was not run with state retention");
    const Tensor4<Scalar>& x = st.input;
    LAConvGrads<Scalar> grads;
    grads.params = LAConvParams<Scalar>::zeros(p.c_in, p.c_out, p.k, p.mode);

    if (p.mode.conv == ConvVariant::Standard) {
        auto cg = conv2d_vjp(g, x, p.main_kernel, false, pad);
        grads.input = std::move(cg.input);
        grads.params.main_kernel = std::move(cg.kernel);
    } else {
        auto mg = modulated_conv_vjp(g, x, st.local_weights, p.main_kernel, pad);
        auto wg = gen_local_weights_vjp(mg.weights, x, p, pad, st.wg);
        grads.input = add(mg.input, wg.input);
        grads.params.main_kernel = std::move(mg.kernel);
        grads.params.wg_conv = std::move(wg.wg_conv);
        grads.params.wg_conv_bias = std::move(wg.wg_conv_bias);
        grads.params.wg_fc1.weight = std::move(wg.fc1.weight);
        grads.params.wg_fc1.bias = std::move(wg.fc1.bias);
        grads.params.wg_fc2.weight = std::move(wg.fc2.weight);
        grads.params.wg_fc2.bias = std::move(wg.fc2.bias);
    }

    if (p.mode.bias == BiasVariant::Static) {
        for (Index n = 0; n < g.n; ++n)
            grads.params.static_bias += g.channels(n).rowwise().sum();
    } else if (p.mode.bias == BiasVariant::Dynamic) {
        MatX<Scalar> dd(g.n, p.c_out);
        for (Index n = 0; n < g.n; ++n)
            dd.row(n) = g.channels(n).rowwise().sum().transpose();
        auto bg = dynamic_bias_vjp(dd, x, p, st.dyb);
        grads.input = add(grads.input, bg.input);
        grads.params.dyb_fc1.weight = std::move(bg.fc1.weight);
        grads.params.dyb_fc1.bias = std::move(bg.fc1.bias);
        grads.params.dyb_fc2.weight = std::move(bg.fc2.weight);
        grads.params.dyb_fc2.bias = std::move(bg.fc2.bias);
    }
    return grads;
}

using LAConvParamsd = LAConvParams<double>;
using LAConvStated = LAConvState<double>;

}  // namespace laconv
