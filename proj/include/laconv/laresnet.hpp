#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "laconv/laconv_layer.hpp"

namespace laconv {

/// Architecture hyper-parameters of the fusion network.
struct ModelConfig {
    Index blocks = 5;    // residual blocks B
    Index channels = 32; // feature channels C
    Index kernel = 3;    // k (odd)
    Index c_lr = 8;      // LR bands (network output bands)
    Index c_hr = 1;      // HR bands
    LAConvMode mode{ConvVariant::LocalAdaptive, BiasVariant::Dynamic};
    Index upsample_factor = 4;
    PadMode pad = PadMode::Zero;

    Index layer_count() const { return 2 * blocks + 2; }

    void validate() const {
        if (blocks < 1) throw ConfigError("ModelConfig: blocks must be >= 1");
        if (kernel < 1 || kernel % 2 == 0)
            throw ConfigError("ModelConfig: kernel must be odd and >= 1");
        if (channels < 1 || c_lr < 1 || c_hr < 1)
            throw ConfigError("ModelConfig: channel counts must be >= 1");
        if (upsample_factor < 1) throw ConfigError("ModelConfig: upsample_factor must be >= 1");
    }

    /// (c_in, c_out) of layer `idx` in 0..2B+1: head, B pairs, tail.
    /// The channel chain is (c_lr + c_hr) -> C -> ... -> C -> c_lr.
    std::pair<Index, Index> layer_channels(Index idx) const {
        if (idx == 0) return {c_lr + c_hr, channels};
        if (idx == layer_count() - 1) return {channels, c_lr};
        return {channels, channels};
    }

    /// "head", "block<i>.conv<1|2>", or "tail".
    std::string layer_role(Index idx) const {
        if (idx == 0) return "head";
        if (idx == layer_count() - 1) return "tail";
        const Index b = (idx - 1) / 2;
        return "block" + std::to_string(b) + ".conv" + std::to_string((idx - 1) % 2 + 1);
    }
};

/// Full parameter set: head layer, B (conv1, conv2) pairs, tail layer.
struct LAResNetParams {
    ModelConfig config;
    LAConvParamsd head;
    std::vector<std::pair<LAConvParamsd, LAConvParamsd>> res_blocks;
    LAConvParamsd tail;

    static LAResNetParams zeros(const ModelConfig& cfg);
};

/// One (upsampled-LR, HR, optional GT) triple at full resolution.
struct FusionSample {
    Tensor4d lr_up;  // (n, c_lr, h, w)
    Tensor4d hr;     // (n, c_hr, h, w)
    Tensor4d gt;     // (n, c_lr, h, w); size 0 when absent

    bool has_gt() const { return gt.size() > 0; }

    void validate(const ModelConfig& cfg) const {
        if (lr_up.c != cfg.c_lr || hr.c != cfg.c_hr)
            throw ShapeError("FusionSample: band counts do not match the model config");
        if (lr_up.n != hr.n || lr_up.h != hr.h || lr_up.w != hr.w)
            throw ShapeError("FusionSample: lr_up " + lr_up.shape_str() + " vs hr " +
                             hr.shape_str());
        if (has_gt() && (!gt.same_shape(lr_up)))
            throw ShapeError("FusionSample: gt " + gt.shape_str() + " vs lr_up " +
                             lr_up.shape_str());
    }
};

/// Visits every layer in the fixed order head, block0.conv1, block0.conv2,
/// ..., tail. This order defines initialization draws, optimizer state
/// layout and checkpoint layout.
template <typename Fn>
void for_each_layer(LAResNetParams& p, Fn&& fn) {
    Index idx = 0;
    fn(idx++, p.head);
    for (auto& blk : p.res_blocks) {
        fn(idx++, blk.first);
        fn(idx++, blk.second);
    }
    fn(idx++, p.tail);
}

template <typename Fn>
void for_each_layer(const LAResNetParams& p, Fn&& fn) {
    for_each_layer(const_cast<LAResNetParams&>(p),
                   [&](Index i, LAConvParamsd& l) { fn(i, const_cast<const LAConvParamsd&>(l)); });
}

/// He-normal initialization: weights ~ N(0, sqrt(2/fan_in)), biases zero,
/// drawn from a PCG32 stream in traversal order (deterministic per seed).
LAResNetParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Saved per-layer forward state for the backward pass.
struct LAResNetState {
    struct BlockState {
        LAConvStated conv1;
        Tensor4d act1;  // post-relu output of conv1
        LAConvStated conv2;
    };
    LAConvStated head;
    Tensor4d head_act;
    std::vector<BlockState> blocks;
    LAConvStated tail;
    bool valid = false;
};

/// Network forward: M = [HR; LR~] -> head LAConv + ReLU -> B residual
/// blocks (LAConv-ReLU-LAConv plus skip) -> tail LAConv; SR = LR~ + tail.
/// `weight_capture`, when given, receives each layer's local weight maps
/// (empty tensors in standard-conv mode).
Tensor4d laresnet_forward(const LAResNetParams& params, const FusionSample& sample,
                          LAResNetState* state = nullptr,
                          std::vector<Tensor4d>* weight_capture = nullptr);

struct LAResNetGrads {
    LAResNetParams params;
    Tensor4d lr_up;  // includes the global-residual path
    Tensor4d hr;
};

LAResNetGrads laresnet_backward(const Tensor4d& d_sr, const LAResNetParams& params,
                                const LAResNetState& state);

/// Batch-mean squared Frobenius loss: L = (1/N) sum_i ||sr_i - gt_i||_F^2.
struct LossResult {
    double value = 0.0;        // L
    double per_element = 0.0;  // L / (c*h*w), scale-free for logging
    Tensor4d cotangent;        // dL/dsr = (2/N)(sr - gt)
};
LossResult loss_mse(const Tensor4d& sr, const Tensor4d& gt);

/// Exact parameter count for the configured mode, with a per-layer table.
struct LayerCountRow {
    Index layer = 0;
    std::string role;
    Index c_in = 0, c_out = 0;
    Index count = 0;
};
std::vector<LayerCountRow> count_params_breakdown(const ModelConfig& cfg);
Index count_params(const ModelConfig& cfg);

/// Checkpoint = manifest.txt (key=value; echoes ModelConfig) plus one .ten
/// file per parameter group.
void save_checkpoint(const std::filesystem::path& dir, const LAResNetParams& params);
LAResNetParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace laconv
