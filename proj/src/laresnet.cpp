#include "laconv/laresnet.hpp"

#include "laconv/rng.hpp"

namespace laconv {

LAResNetParams LAResNetParams::zeros(const ModelConfig& cfg) {
    cfg.validate();
    LAResNetParams p;
    p.config = cfg;
    const auto [hin, hout] = cfg.layer_channels(0);
    p.head = LAConvParamsd::zeros(hin, hout, cfg.kernel, cfg.mode);
    p.res_blocks.reserve(static_cast<std::size_t>(cfg.blocks));
    for (Index b = 0; b < cfg.blocks; ++b)
        p.res_blocks.emplace_back(
            LAConvParamsd::zeros(cfg.channels, cfg.channels, cfg.kernel, cfg.mode),
            LAConvParamsd::zeros(cfg.channels, cfg.channels, cfg.kernel, cfg.mode));
    const auto [tin, tout] = cfg.layer_channels(cfg.layer_count() - 1);
    p.tail = LAConvParamsd::zeros(tin, tout, cfg.kernel, cfg.mode);
    return p;
}

namespace {

bool is_bias_group(const std::string& name) {
    return name == "static_bias" || (name.size() > 2 && name.ends_with("_b"));
}

/// fan_in of a weight group from its serialization dims: kernels are
/// (c_out, c_in, k, k), dense weights are (out, in, 1, 1).
Index group_fan_in(const ParamGroupRef<double>& g) {
    return g.dims[1] * g.dims[2] * g.dims[3];
}

}  // namespace

LAResNetParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    LAResNetParams p = LAResNetParams::zeros(cfg);
    Pcg32 rng(seed);
    for_each_layer(p, [&](Index, LAConvParamsd& layer) {
        for_each_group(layer, [&](const ParamGroupRef<double>& g) {
            if (is_bias_group(g.name)) return;  // biases stay zero
            const double stddev = std::sqrt(2.0 / static_cast<double>(group_fan_in(g)));
            for (Index i = 0; i < g.size; ++i) g.data[i] = stddev * rng.next_normal();
        });
    });
    return p;
}

Tensor4d laresnet_forward(const LAResNetParams& params, const FusionSample& sample,
                          LAResNetState* state, std::vector<Tensor4d>* weight_capture) {
    const ModelConfig& cfg = params.config;
    sample.validate(cfg);
    if (state != nullptr) {
        state->blocks.assign(static_cast<std::size_t>(cfg.blocks), {});
        state->valid = false;
    }
    if (weight_capture != nullptr) weight_capture->clear();

    const Tensor4d m = concat_channels(sample.hr, sample.lr_up);  // HR channels first

    auto run_layer = [&](const Tensor4d& x, const LAConvParamsd& layer,
                         LAConvStated* st) -> Tensor4d {
        LAConvStated scratch;
        LAConvStated* use = st;
        if (use == nullptr && weight_capture != nullptr) use = &scratch;
        Tensor4d y = laconv_forward(x, layer, cfg.pad, use);
        if (weight_capture != nullptr)
            weight_capture->push_back(layer.mode.conv == ConvVariant::LocalAdaptive &&
                                              use != nullptr
                                          ? use->local_weights
                                          : Tensor4d{});
        return y;
    };

    Tensor4d head_act = relu(run_layer(m, params.head, state ? &state->head : nullptr));
    if (state != nullptr) state->head_act = head_act;

    Tensor4d x = std::move(head_act);
    for (Index b = 0; b < cfg.blocks; ++b) {
        auto* bst = state != nullptr ? &state->blocks[static_cast<std::size_t>(b)] : nullptr;
        const auto& blk = params.res_blocks[static_cast<std::size_t>(b)];
        Tensor4d act1 = relu(run_layer(x, blk.first, bst ? &bst->conv1 : nullptr));
        if (bst != nullptr) bst->act1 = act1;
        Tensor4d y2 = run_layer(act1, blk.second, bst ? &bst->conv2 : nullptr);
        x = add(x, y2);
    }

    Tensor4d tail_out = run_layer(x, params.tail, state ? &state->tail : nullptr);
    if (state != nullptr) state->valid = true;
    return add(sample.lr_up, tail_out);
}

LAResNetGrads laresnet_backward(const Tensor4d& d_sr, const LAResNetParams& params,
                                const LAResNetState& state) {
    if (!state.valid)
        throw UsageError("laresnet_backward: forward pass was not run with state retention");
    const ModelConfig& cfg = params.config;
    LAResNetGrads grads;
    grads.params = LAResNetParams::zeros(cfg);

    // SR = lr_up + tail(x): the cotangent reaches both paths unchanged.
    auto tg = laconv_vjp(d_sr, params.tail, cfg.pad, state.tail);
    grads.params.tail = std::move(tg.params);
    Tensor4d dx = std::move(tg.input);

    for (Index b = cfg.blocks - 1; b >= 0; --b) {
        const auto& blk = params.res_blocks[static_cast<std::size_t>(b)];
        const auto& bst = state.blocks[static_cast<std::size_t>(b)];
        auto g2 = laconv_vjp(dx, blk.second, cfg.pad, bst.conv2);
        const Tensor4d da1 = relu_vjp(g2.input, bst.act1);
        auto g1 = laconv_vjp(da1, blk.first, cfg.pad, bst.conv1);
        grads.params.res_blocks[static_cast<std::size_t>(b)] = {std::move(g1.params),
                                                                std::move(g2.params)};
        dx = add(dx, g1.input);  // skip path plus branch path
    }

    const Tensor4d da0 = relu_vjp(dx, state.head_act);
    auto hg = laconv_vjp(da0, params.head, cfg.pad, state.head);
    grads.params.head = std::move(hg.params);
    grads.hr = slice_channels(hg.input, 0, cfg.c_hr);
    grads.lr_up = add(slice_channels(hg.input, cfg.c_hr, cfg.c_lr), d_sr);
    return grads;
}

LossResult loss_mse(const Tensor4d& sr, const Tensor4d& gt) {
    if (!sr.same_shape(gt))
        throw ShapeError("loss_mse: " + sr.shape_str() + " vs " + gt.shape_str());
    LossResult r;
    const double inv_n = 1.0 / static_cast<double>(sr.n);
    r.cotangent = sr;
    r.cotangent.data = sr.data - gt.data;
    r.value = inv_n * r.cotangent.data.squaredNorm();
    r.per_element = r.value / static_cast<double>(sr.c * sr.h * sr.w);
    r.cotangent.data *= 2.0 * inv_n;
    return r;
}

std::vector<LayerCountRow> count_params_breakdown(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<LayerCountRow> rows;
    for (Index idx = 0; idx < cfg.layer_count(); ++idx) {
        const auto [cin, cout] = cfg.layer_channels(idx);
        const auto layer = LAConvParamsd::zeros(cin, cout, cfg.kernel, cfg.mode);
        rows.push_back({idx, cfg.layer_role(idx), cin, cout, param_count(layer)});
    }
    return rows;
}

Index count_params(const ModelConfig& cfg) {
    Index total = 0;
    for (const auto& row : count_params_breakdown(cfg)) total += row.count;
    return total;
}

}  // namespace laconv
