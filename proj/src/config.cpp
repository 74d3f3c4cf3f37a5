#include "laconv/config.hpp"

#include <set>

#include "laconv/kv.hpp"

namespace laconv {

namespace {

long to_long(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key " + key + ": expected an integer, got \"" + value + "\"");
    }
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key " + key + ": expected a number, got \"" + value + "\"");
    }
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "blocks", "channels", "kernel", "c_lr", "c_hr", "conv_mode", "bias_mode",
        "pad_mode", "ratio",
        "epochs", "batch_size", "lr_phase1", "lr_phase2", "phase_split", "seed", "preset",
        "q2n_block", "qnr_alpha", "qnr_beta", "ssim_window", "ssim_sigma", "ssim_k1",
        "ssim_k2", "psnr_peak",
        "scene_size", "scene_shapes", "scene_smoothness", "dataset_count", "train_fraction",
        "blur_size", "blur_sigma", "srf_file",
    };
    return keys;
}

}  // namespace

std::string to_string(TaskPreset preset) {
    switch (preset) {
        case TaskPreset::Pansharpening: return "pansharpening";
        case TaskPreset::Hisr: return "hisr";
        default: return "toy";
    }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    return from_kv(read_kv_file(path), path.string());
}

RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv,
                             const std::string& context) {
    for (const auto& [key, value] : kv)
        if (known_keys().find(key) == known_keys().end())
            throw ConfigError("unknown config key \"" + key + "\" in " + context);

    RunConfig cfg;
    const auto get = [&](const char* key) -> const std::string* {
        const auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    const auto set_long = [&](const char* key, Index& out) {
        if (const auto* v = get(key)) out = to_long(key, *v);
    };
    const auto set_double = [&](const char* key, double& out) {
        if (const auto* v = get(key)) out = to_double(key, *v);
    };

    set_long("blocks", cfg.model.blocks);
    set_long("channels", cfg.model.channels);
    set_long("kernel", cfg.model.kernel);
    set_long("c_lr", cfg.model.c_lr);
    set_long("c_hr", cfg.model.c_hr);
    set_long("ratio", cfg.model.upsample_factor);
    if (const auto* v = get("conv_mode")) {
        if (*v == "standard") cfg.model.mode.conv = ConvVariant::Standard;
        else if (*v == "local_adaptive") cfg.model.mode.conv = ConvVariant::LocalAdaptive;
        else throw ConfigError("conv_mode must be standard|local_adaptive, got " + *v);
    }
    if (const auto* v = get("bias_mode")) {
        if (*v == "none") cfg.model.mode.bias = BiasVariant::None;
        else if (*v == "static") cfg.model.mode.bias = BiasVariant::Static;
        else if (*v == "dynamic") cfg.model.mode.bias = BiasVariant::Dynamic;
        else throw ConfigError("bias_mode must be none|static|dynamic, got " + *v);
    }
    if (const auto* v = get("pad_mode")) {
        if (*v == "zero") cfg.model.pad = PadMode::Zero;
        else if (*v == "circular") cfg.model.pad = PadMode::Circular;
        else throw ConfigError("pad_mode must be zero|circular, got " + *v);
    }

    set_long("epochs", cfg.train.epochs);
    set_long("batch_size", cfg.train.batch_size);
    set_double("lr_phase1", cfg.train.lr_phase1);
    set_double("lr_phase2", cfg.train.lr_phase2);
    set_long("phase_split", cfg.train.phase_split);
    if (const auto* v = get("seed"))
        cfg.train.seed = static_cast<std::uint64_t>(to_long("seed", *v));
    if (const auto* v = get("preset")) {
        if (*v == "pansharpening") cfg.train.preset = TaskPreset::Pansharpening;
        else if (*v == "hisr") cfg.train.preset = TaskPreset::Hisr;
        else if (*v == "toy") cfg.train.preset = TaskPreset::Toy;
        else throw ConfigError("preset must be pansharpening|hisr|toy, got " + *v);
    }

    set_long("q2n_block", cfg.metric.q2n_block);
    set_double("qnr_alpha", cfg.metric.qnr_alpha);
    set_double("qnr_beta", cfg.metric.qnr_beta);
    set_long("ssim_window", cfg.metric.ssim_window);
    set_double("ssim_sigma", cfg.metric.ssim_sigma);
    set_double("ssim_k1", cfg.metric.ssim_k1);
    set_double("ssim_k2", cfg.metric.ssim_k2);
    set_double("psnr_peak", cfg.metric.psnr_peak);

    set_long("scene_size", cfg.scene_size);
    set_long("scene_shapes", cfg.scene_shapes);
    set_double("scene_smoothness", cfg.scene_smoothness);
    set_long("dataset_count", cfg.dataset_count);
    set_double("train_fraction", cfg.train_fraction);
    set_long("blur_size", cfg.blur_size);
    set_double("blur_sigma", cfg.blur_sigma);
    if (const auto* v = get("srf_file")) cfg.srf_file = *v;

    cfg.metric.resolution_ratio = cfg.model.upsample_factor;
    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    metric.validate();
    if (scene_size < 4) throw ConfigError("scene_size must be >= 4");
    if (scene_size % model.upsample_factor != 0)
        throw ConfigError("scene_size must divide by ratio");
    if (scene_shapes < 0) throw ConfigError("scene_shapes must be >= 0");
    if (dataset_count < 1) throw ConfigError("dataset_count must be >= 1");
    if (train_fraction < 0.0 || train_fraction > 1.0)
        throw ConfigError("train_fraction must be in [0,1]");
    if (blur_size < 1 || blur_size % 2 == 0) throw ConfigError("blur_size must be odd");
    if (blur_sigma <= 0.0) throw ConfigError("blur_sigma must be > 0");
}

MakeDatasetSpec RunConfig::dataset_spec() const {
    MakeDatasetSpec spec;
    spec.scene.seed = train.seed;
    spec.scene.bands = model.c_lr;
    spec.scene.size = scene_size;
    spec.scene.n_shapes = scene_shapes;
    spec.scene.smoothness = scene_smoothness;
    spec.degrade.ratio = model.upsample_factor;
    spec.degrade.blur_size = blur_size;
    spec.degrade.blur_sigma = blur_sigma;
    spec.degrade.srf =
        srf_file.empty() ? default_srf(model.c_hr, model.c_lr) : read_srf(srf_file);
    if (spec.degrade.srf.rows() != model.c_hr || spec.degrade.srf.cols() != model.c_lr)
        throw ConfigError("srf_file dims do not match c_hr x c_lr");
    spec.count = dataset_count;
    spec.train_fraction = train_fraction;
    return spec;
}

std::string RunConfig::key_reference() {
    return
        "config keys (key=value lines, # comments; unknown keys rejected):\n"
        "  model:   blocks channels kernel c_lr c_hr ratio\n"
        "           conv_mode=standard|local_adaptive bias_mode=none|static|dynamic\n"
        "           pad_mode=zero|circular\n"
        "  train:   epochs batch_size lr_phase1 lr_phase2 phase_split seed\n"
        "           preset=pansharpening|hisr|toy\n"
        "  metric:  q2n_block qnr_alpha qnr_beta ssim_window ssim_sigma ssim_k1\n"
        "           ssim_k2 psnr_peak\n"
        "  data:    scene_size scene_shapes scene_smoothness dataset_count\n"
        "           train_fraction blur_size blur_sigma srf_file\n";
}

}  // namespace laconv
