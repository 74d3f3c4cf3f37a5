#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "laconv/cli.hpp"
#include "laconv/config.hpp"
#include "laconv/tenio.hpp"
#include "testutil.hpp"

using namespace laconv;
namespace fs = std::filesystem;

namespace {

fs::path write_cfg(const std::string& name, const std::string& body) {
    const fs::path dir = fs::temp_directory_path() / "laconv_cli_cfg";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream f(p, std::ios::trunc);
    f << body;
    return p;
}

const std::string kTinyCfg =
    "blocks = 2\nchannels = 8\nkernel = 3\nc_lr = 4\nc_hr = 1\nratio = 4\n"
    "conv_mode = local_adaptive\nbias_mode = dynamic\npad_mode = zero\n"
    "preset = toy\nepochs = 3\nbatch_size = 4\nlr_phase1 = 1e-3\nlr_phase2 = 1e-4\n"
    "phase_split = 2\nseed = 1\n"
    "scene_size = 16\nscene_shapes = 2\nscene_smoothness = 2.0\ndataset_count = 5\n"
    "train_fraction = 0.8\nblur_size = 3\nblur_sigma = 0.5\n";

/// Parses the per-sample rows and the summary means out of metrics.csv.
struct ParsedCsv {
    std::map<std::string, std::vector<double>> per_sample;
    std::map<std::string, double> summary_mean;
};

ParsedCsv parse_metrics_csv(const fs::path& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    ParsedCsv out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
        const std::string id = line.substr(0, c1);
        const std::string metric = line.substr(c1 + 1, c2 - c1 - 1);
        const std::string value = line.substr(c2 + 1);
        if (id == "summary")
            out.summary_mean[metric] = std::stod(value);  // stops at " ±"
        else
            out.per_sample[metric].push_back(std::stod(value));
    }
    return out;
}

}  // namespace

TEST_CASE("run config parsing") {
    SUBCASE("unknown keys are rejected") {
        const auto p = write_cfg("bad_key.cfg", "blocks = 2\nbogus_key = 1\n");
        CHECK_THROWS_AS(RunConfig::from_file(p), ConfigError);
    }
    SUBCASE("malformed numbers are rejected") {
        const auto p = write_cfg("bad_num.cfg", "blocks = two\n");
        CHECK_THROWS_AS(RunConfig::from_file(p), ConfigError);
    }
    SUBCASE("bad enum values are rejected") {
        const auto p = write_cfg("bad_enum.cfg", "conv_mode = fancy\n");
        CHECK_THROWS_AS(RunConfig::from_file(p), ConfigError);
    }
    SUBCASE("cross-field constraints are validated") {
        const auto p = write_cfg("bad_cross.cfg", "scene_size = 30\nratio = 4\n");
        CHECK_THROWS_AS(RunConfig::from_file(p), ConfigError);
    }
    SUBCASE("a full config round-trips") {
        const auto p = write_cfg("tiny.cfg", kTinyCfg);
        const RunConfig cfg = RunConfig::from_file(p);
        CHECK(cfg.model.blocks == 2);
        CHECK(cfg.model.mode.conv == ConvVariant::LocalAdaptive);
        CHECK(cfg.train.epochs == 3);
        CHECK(cfg.metric.resolution_ratio == 4);
        CHECK(cfg.scene_size == 16);
    }
}

TEST_CASE("cli end to end on a tiny run") {
    const auto cfg_path = write_cfg("tiny.cfg", kTinyCfg);
    const fs::path base = fs::temp_directory_path() / "laconv_cli_e2e";
    fs::remove_all(base);
    const fs::path data = base / "data";
    const fs::path train_out = base / "run";
    const fs::path eval_out = base / "eval";

    SUBCASE("unknown subcommand exits 1") {
        CHECK(cli::run({"frobnicate"}) == 1);
    }
    SUBCASE("missing config file exits 1") {
        CHECK(cli::run({"params", "--config", "/nonexistent.cfg"}) == 1);
    }

    REQUIRE(cli::run({"gen-data", "--config", cfg_path.string(), "--out", data.string()}) == 0);
    CHECK(fs::exists(data / "manifest.txt"));
    CHECK(fs::exists(data / "srf.txt"));
    // ratio-4 pattern: 16 -> 4
    const Tensor4d lr = read_ten<double>(data / "s0000_lr.ten");
    CHECK(lr.h == 4);
    const Tensor4d gt = read_ten<double>(data / "s0000_gt.ten");
    CHECK(gt.h == 16);

    REQUIRE(cli::run({"train", "--config", cfg_path.string(), "--data", data.string(),
                      "--out", train_out.string()}) == 0);
    CHECK(fs::exists(train_out / "checkpoint_final" / "manifest.txt"));
    CHECK(fs::exists(train_out / "checkpoint_best" / "manifest.txt"));
    CHECK(fs::exists(train_out / "train.log"));

    SUBCASE("eval with a checkpoint writes per-sample csv whose summary is its mean") {
        REQUIRE(cli::run({"eval", "--config", cfg_path.string(), "--data", data.string(),
                          "--out", eval_out.string(), "--checkpoint",
                          (train_out / "checkpoint_final").string()}) == 0);
        const ParsedCsv csv = parse_metrics_csv(eval_out / "metrics.csv");
        for (const auto& [metric, vals] : csv.per_sample) {
            double mean = 0.0;
            for (const double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            CHECK(csv.summary_mean.at(metric) == doctest::Approx(mean).epsilon(1e-12));
        }
    }

    SUBCASE("eval self-check reports the ideal value of every index") {
        REQUIRE(cli::run({"eval", "--config", cfg_path.string(), "--data", data.string(),
                          "--out", eval_out.string()}) == 0);
        const ParsedCsv csv = parse_metrics_csv(eval_out / "metrics.csv");
        CHECK(csv.summary_mean.at("sam") == doctest::Approx(0.0));
        CHECK(csv.summary_mean.at("ergas") == doctest::Approx(0.0));
        CHECK(csv.summary_mean.at("scc") == doctest::Approx(1.0));
        CHECK(csv.summary_mean.at("q2n") == doctest::Approx(1.0));
        CHECK(csv.summary_mean.at("ssim") == doctest::Approx(1.0));
        CHECK(csv.summary_mean.at("psnr") == doctest::Approx(100.0));
    }

    SUBCASE("inspect emits one valid P5 pair per layer and rejects standard checkpoints") {
        const fs::path maps = base / "maps";
        REQUIRE(cli::run({"inspect", "--checkpoint", (train_out / "checkpoint_final").string(),
                          "--data", data.string(), "--out", maps.string()}) == 0);
        int pairs = 0;
        for (Index layer = 0; layer < 6; ++layer) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "layer%02ld", static_cast<long>(layer));
            const fs::path avg = maps / (std::string(stem) + "_avg.pgm");
            const fs::path stddev = maps / (std::string(stem) + "_std.pgm");
            if (!fs::exists(avg)) continue;
            REQUIRE(fs::exists(stddev));
            ++pairs;
            std::ifstream f(avg, std::ios::binary);
            std::string magic, dims_w, dims_h, maxval;
            f >> magic >> dims_w >> dims_h >> maxval;
            CHECK(magic == "P5");
            CHECK(dims_w == "16");
            CHECK(dims_h == "16");
            CHECK(maxval == "255");
        }
        CHECK(pairs == 6);  // 2B+2
        CHECK(fs::exists(maps / "weight_stats.csv"));

        // a standard-conv checkpoint is a validation error
        const auto std_cfg = write_cfg(
            "tiny_std.cfg",
            kTinyCfg + std::string("conv_mode = standard\nbias_mode = none\n"));
        const fs::path std_out = base / "run_std";
        REQUIRE(cli::run({"train", "--config", std_cfg.string(), "--data", data.string(),
                          "--out", std_out.string()}) == 0);
        CHECK(cli::run({"inspect", "--checkpoint", (std_out / "checkpoint_final").string(),
                        "--data", data.string(), "--out", (base / "maps_std").string()}) == 1);
    }

    SUBCASE("ablate writes a six-row table and reruns identically") {
        const fs::path ab1 = base / "ab1";
        const fs::path ab2 = base / "ab2";
        REQUIRE(cli::run({"ablate", "--config", cfg_path.string(), "--data", data.string(),
                          "--out", ab1.string()}) == 0);
        REQUIRE(cli::run({"ablate", "--config", cfg_path.string(), "--data", data.string(),
                          "--out", ab2.string()}) == 0);
        auto read_lines = [](const fs::path& p) {
            std::ifstream f(p);
            std::vector<std::string> lines;
            std::string line;
            while (std::getline(f, line)) lines.push_back(line);
            return lines;
        };
        const auto lines1 = read_lines(ab1 / "ablation.csv");
        const auto lines2 = read_lines(ab2 / "ablation.csv");
        REQUIRE(lines1.size() == 7);  // header + 6 modes
        CHECK(lines1[0] == "mode,sam,ergas,scc,q2n");
        CHECK(lines1[1].rfind("SC+NB,", 0) == 0);
        CHECK(lines1[6].rfind("LAC+DYB,", 0) == 0);
        CHECK(lines1 == lines2);
        for (std::size_t i = 1; i < lines1.size(); ++i)
            CHECK(lines1[i].find("nan") == std::string::npos);
    }

    SUBCASE("ablate accepts a mode subset and rejects unknown modes") {
        const fs::path ab = base / "ab_subset";
        REQUIRE(cli::run({"ablate", "--config", cfg_path.string(), "--data", data.string(),
                          "--out", ab.string(), "--modes", "sc+nb,lac+dyb"}) == 0);
        std::ifstream f(ab / "ablation.csv");
        std::string line;
        int rows = 0;
        while (std::getline(f, line)) ++rows;
        CHECK(rows == 3);
        CHECK(cli::run({"ablate", "--config", cfg_path.string(), "--data", data.string(),
                        "--out", ab.string(), "--modes", "warp+drive"}) == 1);
    }

    fs::remove_all(base);
}

TEST_CASE("cli params and gradcheck exit codes") {
    const auto cfg_path = write_cfg("tiny.cfg", kTinyCfg);
    CHECK(cli::run({"params", "--config", cfg_path.string()}) == 0);
    CHECK(cli::run({"gradcheck", "--config", cfg_path.string(), "--h", "1e-5", "--tol",
                    "1e-4"}) == 0);
    // an absurd tolerance has to fail and exit 1
    CHECK(cli::run({"gradcheck", "--config", cfg_path.string(), "--tol", "1e-18"}) == 1);
}
