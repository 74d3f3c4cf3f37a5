#include <cstdio>
#include <map>

#include "laconv/kv.hpp"
#include "laconv/laresnet.hpp"
#include "laconv/tenio.hpp"

namespace laconv {

namespace {

std::string group_file_name(Index layer, const std::string& name) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "g%02d_", static_cast<int>(layer));
    return std::string(buf) + name + ".ten";
}

std::string dims_str(const std::array<Index, 4>& d) {
    return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]) +
           "x" + std::to_string(d[3]);
}

PadMode parse_pad(const std::string& s) {
    if (s == "zero") return PadMode::Zero;
    if (s == "circular") return PadMode::Circular;
    throw ConfigError("unknown pad_mode: " + s);
}

ConvVariant parse_conv(const std::string& s) {
    if (s == "standard") return ConvVariant::Standard;
    if (s == "local_adaptive") return ConvVariant::LocalAdaptive;
    throw ConfigError("unknown conv_mode: " + s);
}

BiasVariant parse_bias(const std::string& s) {
    if (s == "none") return BiasVariant::None;
    if (s == "static") return BiasVariant::Static;
    if (s == "dynamic") return BiasVariant::Dynamic;
    throw ConfigError("unknown bias_mode: " + s);
}

const std::string& require(const std::map<std::string, std::string>& kv,
                           const std::string& key, const std::filesystem::path& path) {
    const auto it = kv.find(key);
    if (it == kv.end())
        throw IoError("checkpoint manifest " + path.string() + " lacks key " + key);
    return it->second;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const LAResNetParams& params) {
    std::filesystem::create_directories(dir);
    const ModelConfig& cfg = params.config;
    std::string manifest;
    manifest += "format=laconv-checkpoint-v1\n";
    manifest += "blocks=" + std::to_string(cfg.blocks) + "\n";
    manifest += "channels=" + std::to_string(cfg.channels) + "\n";
    manifest += "kernel=" + std::to_string(cfg.kernel) + "\n";
    manifest += "c_lr=" + std::to_string(cfg.c_lr) + "\n";
    manifest += "c_hr=" + std::to_string(cfg.c_hr) + "\n";
    manifest += "conv_mode=" + to_string(cfg.mode.conv) + "\n";
    manifest += "bias_mode=" + to_string(cfg.mode.bias) + "\n";
    manifest += "pad_mode=" + std::string(cfg.pad == PadMode::Zero ? "zero" : "circular") + "\n";
    manifest += "upsample_factor=" + std::to_string(cfg.upsample_factor) + "\n";

    Index group_idx = 0;
    std::string group_lines;
    for_each_layer(params, [&](Index layer, const LAConvParamsd& lp) {
        for_each_group(lp, [&](const ParamGroupRef<double>& g) {
            const std::string file = group_file_name(layer, g.name);
            Tensor4d t(g.dims[0], g.dims[1], g.dims[2], g.dims[3]);
            std::copy(g.data, g.data + g.size, t.data.data());
            write_ten_atomic(dir / file, t);
            const std::string p = "group." + std::to_string(group_idx) + ".";
            group_lines += p + "layer=" + std::to_string(layer) + "\n";
            group_lines += p + "name=" + std::string(g.name) + "\n";
            group_lines += p + "dims=" + dims_str(g.dims) + "\n";
            group_lines += p + "file=" + file + "\n";
            ++group_idx;
        });
    });
    manifest += "groups=" + std::to_string(group_idx) + "\n" + group_lines;

    // manifest goes last, atomically: a readable manifest implies a
    // complete checkpoint
    const auto tmp = dir / "manifest.txt.tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f << manifest;
    }
    std::filesystem::rename(tmp, dir / "manifest.txt");
}

LAResNetParams load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.txt";
    const auto kv = read_kv_file(manifest_path);
    if (require(kv, "format", manifest_path) != "laconv-checkpoint-v1")
        throw IoError("unsupported checkpoint format in " + manifest_path.string());

    ModelConfig cfg;
    cfg.blocks = std::stol(require(kv, "blocks", manifest_path));
    cfg.channels = std::stol(require(kv, "channels", manifest_path));
    cfg.kernel = std::stol(require(kv, "kernel", manifest_path));
    cfg.c_lr = std::stol(require(kv, "c_lr", manifest_path));
    cfg.c_hr = std::stol(require(kv, "c_hr", manifest_path));
    cfg.mode.conv = parse_conv(require(kv, "conv_mode", manifest_path));
    cfg.mode.bias = parse_bias(require(kv, "bias_mode", manifest_path));
    cfg.pad = parse_pad(require(kv, "pad_mode", manifest_path));
    cfg.upsample_factor = std::stol(require(kv, "upsample_factor", manifest_path));

    LAResNetParams params = LAResNetParams::zeros(cfg);

    // index the expected groups, then satisfy them from the manifest
    std::map<std::pair<Index, std::string>, ParamGroupRef<double>> expected;
    for_each_layer(params, [&](Index layer, LAConvParamsd& lp) {
        for_each_group(lp, [&](const ParamGroupRef<double>& g) {
            expected.emplace(std::make_pair(layer, std::string(g.name)), g);
        });
    });

    const Index n_groups = std::stol(require(kv, "groups", manifest_path));
    if (static_cast<std::size_t>(n_groups) != expected.size())
        throw IoError("checkpoint group count " + std::to_string(n_groups) +
                      " does not match architecture (" + std::to_string(expected.size()) +
                      ") in " + manifest_path.string());
    for (Index i = 0; i < n_groups; ++i) {
        const std::string p = "group." + std::to_string(i) + ".";
        const Index layer = std::stol(require(kv, p + "layer", manifest_path));
        const std::string name = require(kv, p + "name", manifest_path);
        const std::string file = require(kv, p + "file", manifest_path);
        const auto it = expected.find({layer, name});
        if (it == expected.end())
            throw IoError("unexpected checkpoint group " + name + " for layer " +
                          std::to_string(layer));
        const Tensor4d t = read_ten<double>(dir / file);
        const auto& g = it->second;
        if (t.size() != g.size || dims_str({t.n, t.c, t.h, t.w}) != dims_str(g.dims))
            throw IoError("checkpoint group " + name + " has dims " + t.shape_str() +
                          ", expected " + dims_str(g.dims));
        std::copy(t.data.data(), t.data.data() + t.size(), g.data);
        expected.erase(it);
    }
    if (!expected.empty())
        throw IoError("checkpoint is missing " + std::to_string(expected.size()) +
                      " parameter groups");
    return params;
}

}  // namespace laconv
