#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "laconv/datasim.hpp"
#include "laconv/metrics.hpp"
#include "laconv/optim.hpp"

namespace laconv {

/// Flat key=value run configuration covering the model, training, metric
/// and data-generation settings. The key set is closed: unknown keys are
/// rejected, and every cross-field constraint is validated before any
/// subcommand starts computing.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    MetricConfig metric;

    // data generation
    Index scene_size = 64;
    Index scene_shapes = 6;
    double scene_smoothness = 4.0;
    Index dataset_count = 10;
    double train_fraction = 0.8;
    Index blur_size = 3;
    double blur_sigma = 0.5;
    std::string srf_file;  // empty: use the built-in default response

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_kv(const std::map<std::string, std::string>& kv,
                             const std::string& context);

    void validate() const;

    /// The ratio shared by upsampling, ERGAS and the degradation.
    Index ratio() const { return model.upsample_factor; }

    MakeDatasetSpec dataset_spec() const;

    /// One line per recognized key, for --help and error messages.
    static std::string key_reference();
};

std::string to_string(TaskPreset preset);

}  // namespace laconv
