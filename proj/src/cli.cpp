#include "laconv/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "laconv/config.hpp"
#include "laconv/datasim.hpp"
#include "laconv/metrics.hpp"
#include "laconv/optim.hpp"
#include "laconv/tenio.hpp"

namespace laconv::cli {

namespace {

namespace fs = std::filesystem;

struct ModeTag {
    const char* tag;    // Tab.-5-style label
    const char* token;  // CLI token
    LAConvMode mode;
};

const ModeTag kModeTags[] = {
    {"SC+NB", "sc+nb", {ConvVariant::Standard, BiasVariant::None}},
    {"SC+CB", "sc+cb", {ConvVariant::Standard, BiasVariant::Static}},
    {"SC+DYB", "sc+dyb", {ConvVariant::Standard, BiasVariant::Dynamic}},
    {"LAC+NB", "lac+nb", {ConvVariant::LocalAdaptive, BiasVariant::None}},
    {"LAC+CB", "lac+cb", {ConvVariant::LocalAdaptive, BiasVariant::Static}},
    {"LAC+DYB", "lac+dyb", {ConvVariant::LocalAdaptive, BiasVariant::Dynamic}},
};

std::vector<ModeTag> parse_modes(const std::string& list) {
    if (list.empty()) return {std::begin(kModeTags), std::end(kModeTags)};
    std::vector<ModeTag> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        std::string lower = cur;
        for (auto& ch : lower) ch = static_cast<char>(std::tolower(ch));
        for (const auto& m : kModeTags)
            if (lower == m.token) {
                out.push_back(m);
                cur.clear();
                return;
            }
        throw ConfigError("unknown mode \"" + cur + "\" (use sc+nb, sc+cb, sc+dyb, lac+nb, " +
                          "lac+cb, lac+dyb)");
    };
    for (const char ch : list) {
        if (ch == ',') flush();
        else cur.push_back(ch);
    }
    flush();
    if (out.empty()) throw ConfigError("--modes produced an empty mode list");
    return out;
}

std::vector<DatasetEntry> eval_entries(const fs::path& data_dir) {
    auto entries = read_dataset_manifest(data_dir);
    std::vector<DatasetEntry> test;
    for (const auto& e : entries)
        if (e.split == "test") test.push_back(e);
    if (test.empty()) {
        std::cerr << "warning: no test-split samples, evaluating every sample\n";
        return entries;
    }
    return test;
}

/// Evaluates SR against GT on the evaluation split; a null parameter set
/// runs the identity self-check (SR := GT), which must report the ideal
/// value of every index.
MetricReport evaluate(const LAResNetParams* params, const MetricConfig& metric_cfg,
                      const fs::path& data_dir) {
    MetricReport report;
    for (const auto& entry : eval_entries(data_dir)) {
        const FusionSample sample = load_sample(data_dir, entry);
        const Tensor4d sr = params != nullptr ? laresnet_forward(*params, sample) : sample.gt;
        report.add(entry.id, "sam", sam_degrees(sr, sample.gt));
        report.add(entry.id, "ergas", ergas(sr, sample.gt, metric_cfg.resolution_ratio));
        report.add(entry.id, "scc", scc(sr, sample.gt));
        report.add(entry.id, "q2n", q2n(sr, sample.gt, metric_cfg));
        report.add(entry.id, "psnr", psnr(sr, sample.gt, metric_cfg));
        report.add(entry.id, "ssim", ssim(sr, sample.gt, metric_cfg));
        if (sample.hr.c == 1) {
            const Tensor4d ms = read_ten<double>(data_dir / entry.lr_file);
            const QnrResult qnr = qnr_suite(sr, ms, sample.hr, metric_cfg);
            report.add(entry.id, "d_lambda", qnr.d_lambda);
            report.add(entry.id, "d_s", qnr.d_s);
            report.add(entry.id, "qnr", qnr.qnr);
        }
    }
    return report;
}

void print_summary(const MetricReport& report) {
    std::printf("%-10s %14s %14s\n", "metric", "mean", "std");
    for (const auto& metric : report.metric_order)
        std::printf("%-10s %14.6f %14.6f\n", metric.c_str(), report.mean(metric),
                    report.stddev(metric));
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir) {
    const MakeDatasetSpec spec = cfg.dataset_spec();
    const auto entries = make_dataset(spec, out_dir);
    write_srf(out_dir / "srf.txt", spec.degrade.srf);
    Index trains = 0;
    for (const auto& e : entries)
        if (e.split == "train") ++trains;
    std::printf("wrote %zu samples (%ld train, %ld test) to %s\n", entries.size(),
                static_cast<long>(trains), static_cast<long>(entries.size() - trains),
                out_dir.string().c_str());
    std::printf("scene %ldx%ld, %ld bands; lr %ldx%ld at ratio %ld; srf in srf.txt\n",
                static_cast<long>(cfg.scene_size), static_cast<long>(cfg.scene_size),
                static_cast<long>(cfg.model.c_lr),
                static_cast<long>(cfg.scene_size / cfg.ratio()),
                static_cast<long>(cfg.scene_size / cfg.ratio()),
                static_cast<long>(cfg.ratio()));
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir) {
    const TrainResult result = train(cfg.model, cfg.train, data_dir, out_dir);
    std::printf("steps %ld, final train loss %.6e (per-element mse %.6e)\n",
                static_cast<long>(result.steps), result.final_train_loss,
                result.final_per_element_mse);
    std::printf("final checkpoint: %s\n", result.final_checkpoint.string().c_str());
    std::printf("best checkpoint:  %s (epoch %ld)\n", result.best_checkpoint.string().c_str(),
                static_cast<long>(result.best_epoch));
    std::printf("log: %s\n", result.log_path.string().c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
             const std::string& checkpoint) {
    LAResNetParams params;
    const bool self_check = checkpoint.empty();
    if (!self_check) params = load_checkpoint(checkpoint);
    else
        std::cerr << "warning: no --checkpoint, running the identity self-check (SR := GT)\n";
    fs::create_directories(out_dir);
    const MetricReport report = evaluate(self_check ? nullptr : &params, cfg.metric, data_dir);
    report.write_csv(out_dir / "metrics.csv");
    print_summary(report);
    std::printf("per-sample values: %s\n", (out_dir / "metrics.csv").string().c_str());
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg, const GradcheckOptions& opts) {
    const GradcheckReport report = run_gradcheck(cfg.model, opts);
    std::printf("%-28s %14s  %s\n", "group", "max_rel_error", "status");
    for (const auto& row : report.rows)
        std::printf("%-28s %14.3e  %s\n", row.group.c_str(), row.max_rel_error,
                    row.pass ? "PASS" : "FAIL");
    std::printf("overall %s (h=%g, tol=%g, %ld coords/group)\n",
                report.all_pass ? "PASS" : "FAIL", opts.h, opts.tol,
                static_cast<long>(opts.coords_per_group));
    return report.all_pass ? 0 : 1;
}

int cmd_params(const RunConfig& cfg) {
    const auto rows = count_params_breakdown(cfg.model);
    std::printf("%5s  %-14s %6s %6s %10s\n", "layer", "role", "c_in", "c_out", "params");
    Index total = 0;
    for (const auto& row : rows) {
        std::printf("%5ld  %-14s %6ld %6ld %10ld\n", static_cast<long>(row.layer),
                    row.role.c_str(), static_cast<long>(row.c_in),
                    static_cast<long>(row.c_out), static_cast<long>(row.count));
        total += row.count;
    }
    std::printf("total %ld\n", static_cast<long>(total));
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
               const std::string& modes_list) {
    const auto modes = parse_modes(modes_list);
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "ablation.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (out_dir / "ablation.csv").string());
    csv.precision(12);
    csv << "mode,sam,ergas,scc,q2n\n";
    int failures = 0;
    for (const auto& m : modes) {
        RunConfig mode_cfg = cfg;
        mode_cfg.model.mode = m.mode;
        std::string dir_tag = m.token;
        for (auto& ch : dir_tag)
            if (ch == '+') ch = '_';
        const fs::path mode_out = out_dir / dir_tag;
        std::printf("[%s] %ld parameters, training...\n", m.tag,
                    static_cast<long>(count_params(mode_cfg.model)));
        std::fflush(stdout);
        try {
            train(mode_cfg.model, mode_cfg.train, data_dir, mode_out);
            const LAResNetParams params = load_checkpoint(mode_out / "checkpoint_final");
            const MetricReport report = evaluate(&params, mode_cfg.metric, data_dir);
            csv << m.tag << "," << report.mean("sam") << "," << report.mean("ergas") << ","
                << report.mean("scc") << "," << report.mean("q2n") << "\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cerr << "mode " << m.tag << " failed: " << e.what() << "\n";
            csv << m.tag << ",nan,nan,nan,nan\n";
        }
        csv.flush();
    }
    std::printf("ablation table: %s\n", (out_dir / "ablation.csv").string().c_str());
    return failures == 0 ? 0 : 1;
}

int cmd_inspect(const std::string& checkpoint, const fs::path& data_dir,
                const fs::path& out_dir) {
    const LAResNetParams params = load_checkpoint(checkpoint);
    if (params.config.mode.conv != ConvVariant::LocalAdaptive)
        throw ConfigError("inspect requires a local_adaptive checkpoint; this one is standard");
    const auto entries = eval_entries(data_dir);
    const FusionSample sample = load_sample(data_dir, entries.front());
    std::vector<Tensor4d> captured;
    laresnet_forward(params, sample, nullptr, &captured);
    fs::create_directories(out_dir);

    std::ofstream csv(out_dir / "weight_stats.csv", std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (out_dir / "weight_stats.csv").string());
    csv.precision(12);
    csv << "layer,map,min,max,mean\n";
    for (std::size_t li = 0; li < captured.size(); ++li) {
        const Tensor4d& w = captured[li];
        const Index kk = w.c, h = w.h, wd = w.w;
        RowMatX<double> avg = RowMatX<double>::Zero(h, wd);
        for (Index q = 0; q < kk; ++q) avg += w.plane(0, q);
        avg /= static_cast<double>(kk);
        // std map: per-pixel RMS deviation of the weight vector from its
        // spatial mean, i.e. how far the generated kernel shape at (i,j)
        // departs from the layer's average kernel shape; identically zero
        // when the weights are spatially constant
        RowMatX<double> sq = RowMatX<double>::Zero(h, wd);
        for (Index q = 0; q < kk; ++q) {
            const double mu_q = w.plane(0, q).mean();
            sq += (w.plane(0, q).array() - mu_q).square().matrix();
        }
        const RowMatX<double> stddev = (sq / static_cast<double>(kk)).cwiseSqrt();

        char stem[32];
        std::snprintf(stem, sizeof(stem), "layer%02zu", li);
        write_pgm_normalized(out_dir / (std::string(stem) + "_avg.pgm"), avg);
        write_pgm_normalized(out_dir / (std::string(stem) + "_std.pgm"), stddev);
        csv << li << ",avg," << avg.minCoeff() << "," << avg.maxCoeff() << "," << avg.mean()
            << "\n";
        csv << li << ",std," << stddev.minCoeff() << "," << stddev.maxCoeff() << ","
            << stddev.mean() << "\n";
    }
    std::printf("wrote %zu avg/std map pairs for sample %s to %s\n", captured.size(),
                entries.front().id.c_str(), out_dir.string().c_str());
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"laconv: local adaptive convolution image-fusion toolkit"};
    app.require_subcommand(1);
    app.footer(RunConfig::key_reference());

    std::string config_path, data_dir, out_dir, checkpoint, modes_list;
    long seed = -1;
    GradcheckOptions gopts;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic fusion dataset");
    gen->add_option("--config", config_path, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    gen->add_option("--out", out_dir, "output dataset directory")->required();
    gen->add_option("--seed", seed, "override the config seed");

    auto* tr = app.add_subcommand("train", "train a fusion network");
    tr->add_option("--config", config_path, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", out_dir, "output directory for checkpoints and the log")
        ->required();
    tr->add_option("--seed", seed, "override the config seed");

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    ev->add_option("--config", config_path, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--out", out_dir, "output directory for metrics.csv")->required();
    ev->add_option("--checkpoint", checkpoint,
                   "checkpoint directory (omit for the identity self-check SR := GT)");

    auto* gc = app.add_subcommand("gradcheck", "audit analytic gradients vs finite differences");
    gc->set_help_flag("--help", "print help");  // frees -h for the step flag below
    gc->add_option("--config", config_path, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    gc->add_option("--h", gopts.h, "finite-difference step");
    gc->add_option("--tol", gopts.tol, "max relative error per group");
    gc->add_option("--seed", seed, "override the config seed");

    auto* ab = app.add_subcommand("ablate", "train and score the six layer modes");
    ab->add_option("--config", config_path, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    ab->add_option("--data", data_dir, "dataset directory")->required();
    ab->add_option("--out", out_dir, "output directory")->required();
    ab->add_option("--modes", modes_list,
                   "comma-separated subset of sc+nb,sc+cb,sc+dyb,lac+nb,lac+cb,lac+dyb");
    ab->add_option("--seed", seed, "override the config seed");

    auto* pa = app.add_subcommand("params", "print the per-layer parameter table");
    pa->add_option("--config", config_path, "run configuration file")
        ->required()
        ->check(CLI::ExistingFile);

    auto* in = app.add_subcommand("inspect", "export per-layer local weight maps");
    in->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    in->add_option("--data", data_dir, "dataset directory providing the probe sample")
        ->required();
    in->add_option("--out", out_dir, "output directory for PGM maps and the stats CSV")
        ->required();

    std::vector<const char*> argv;
    argv.push_back("laconv");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        const auto load_cfg = [&] {
            RunConfig cfg = RunConfig::from_file(config_path);
            if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
            return cfg;
        };
        if (gen->parsed()) return cmd_gen_data(load_cfg(), out_dir);
        if (tr->parsed()) return cmd_train(load_cfg(), data_dir, out_dir);
        if (ev->parsed()) return cmd_eval(load_cfg(), data_dir, out_dir, checkpoint);
        if (gc->parsed()) {
            const RunConfig cfg = load_cfg();
            gopts.seed = cfg.train.seed;
            return cmd_gradcheck(cfg, gopts);
        }
        if (ab->parsed()) return cmd_ablate(load_cfg(), data_dir, out_dir, modes_list);
        if (pa->parsed()) return cmd_params(load_cfg());
        if (in->parsed()) return cmd_inspect(checkpoint, data_dir, out_dir);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace laconv::cli
