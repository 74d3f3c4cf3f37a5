#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "laconv/laresnet.hpp"

namespace laconv {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First and second moments flattened over the network's group traversal
/// order; t increments by exactly one per step.
struct AdamState {
    AdamConfig cfg;
    VecX<double> m, v;
    long step = 0;
};

AdamState make_adam_state(const LAResNetParams& params, AdamConfig cfg = {});

/// Standard Adam with bias correction. Throws UsageError on non-finite
/// gradients (the step is not applied).
void adam_step(LAResNetParams& params, const LAResNetParams& grads, AdamState& state,
               double lr);

enum class TaskPreset { Pansharpening, Hisr, Toy };

struct TrainConfig {
    Index epochs = 2000;
    Index batch_size = 4;
    double lr_phase1 = 1e-3;
    double lr_phase2 = 1e-4;
    Index phase_split = 1000;
    std::uint64_t seed = 0;
    TaskPreset preset = TaskPreset::Toy;

    void validate() const {
        if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (phase_split > epochs)
            throw ConfigError("TrainConfig: phase_split must be <= epochs");
    }
};

/// Two-phase schedule; the HISR preset keeps a fixed rate throughout.
double lr_at(Index epoch, const TrainConfig& cfg);

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path best_checkpoint;
    std::filesystem::path log_path;
    double final_train_loss = 0.0;
    double final_per_element_mse = 0.0;
    double best_val_loss = 0.0;
    Index best_epoch = -1;
    Index steps = 0;
};

/// Deterministic training loop: per-epoch seeded shuffle, last partial
/// batch kept, fixed accumulation order. The log has one tab-separated
/// line per epoch (epoch, lr, loss, wall_seconds) where `loss` is the
/// train-split loss of the parameters entering the epoch. Divergence
/// aborts after writing the last good parameters as the final checkpoint.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::filesystem::path& data_dir,
                  const std::filesystem::path& out_dir);

struct GradcheckOptions {
    Index coords_per_group = 16;
    double h = 1e-5;
    double tol = 1e-4;
    /// Absolute-difference floor. Central differences of a multi-layer
    /// 64-bit forward pass carry irreducible evaluation noise of roughly
    /// noise(L)/2h (~1e-6 here), so differences below atol are accepted
    /// regardless of the relative test; 1e-4-relative still applies to
    /// every coordinate with |gradient| >= atol/tol.
    double atol = 1e-5;
    std::uint64_t seed = 0;
    Index batch = 2;
    Index height = 16;
    Index width = 16;
};

struct GradcheckRow {
    std::string group;
    double max_rel_error = 0.0;
    bool pass = true;
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    bool all_pass = true;
};

/// Relative error with an absolute floor: |a-b| / max(|a|, |b|, floor/tol),
/// so differences below the floor can never fail at tolerance tol.
double rel_error_floored(double a, double b, double tol, double abs_floor = 1e-7);

/// Compares analytic MSE-loss gradients against central finite differences
/// on a synthetic sample, for every parameter group and the input.
/// `mutate_grads`, when set, is applied to the analytic gradients before
/// comparison (lets the checker's own sensitivity be tested).
GradcheckReport run_gradcheck(const ModelConfig& cfg, const GradcheckOptions& opts,
                              const std::function<void(LAResNetParams&)>& mutate_grads = {});

}  // namespace laconv
