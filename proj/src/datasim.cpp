#include "laconv/datasim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "laconv/kv.hpp"
#include "laconv/ops.hpp"
#include "laconv/rng.hpp"
#include "laconv/tenio.hpp"

namespace laconv {

namespace {

/// Separable box blur of radius r, wrap-around boundary (keeps the noise
/// field stationary; replicate clamping would overweight border samples).
void box_blur_plane(Eigen::Map<RowMatX<double>> plane, Index r) {
    if (r < 1) return;
    const Index h = plane.rows(), w = plane.cols();
    const double inv = 1.0 / static_cast<double>(2 * r + 1);
    auto wrap = [](Index i, Index size) {
        i %= size;
        return i < 0 ? i + size : i;
    };
    RowMatX<double> tmp(h, w);
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
            double acc = 0.0;
            for (Index d = -r; d <= r; ++d) acc += plane(i, wrap(j + d, w));
            tmp(i, j) = acc * inv;
        }
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
            double acc = 0.0;
            for (Index d = -r; d <= r; ++d) acc += tmp(wrap(i + d, h), j);
            plane(i, j) = acc * inv;
        }
}

}  // namespace

Tensor4d gen_scene(const SceneSpec& spec) {
    if (spec.bands < 1 || spec.size < 4) throw ConfigError("gen_scene: bad spec");
    Pcg32 rng(spec.seed);
    Tensor4d img(1, spec.bands, spec.size, spec.size);

    // smooth background: low-passed uniform noise, re-centered and gained
    const Index radius = static_cast<Index>(std::llround(spec.smoothness));
    for (Index b = 0; b < spec.bands; ++b) {
        auto plane = img.plane(0, b);
        for (Index i = 0; i < spec.size; ++i)
            for (Index j = 0; j < spec.size; ++j) plane(i, j) = rng.next_double();
        box_blur_plane(plane, radius);
        plane = (0.5 + 2.0 * (plane.array() - 0.5)).matrix();
    }

    // hard-edged shapes with random spectra
    for (Index s = 0; s < spec.n_shapes; ++s) {
        const bool disk = rng.next_u32() % 2 == 0;
        const Index cx = rng.next_below(static_cast<std::uint32_t>(spec.size));
        const Index cy = rng.next_below(static_cast<std::uint32_t>(spec.size));
        const Index lo = std::max<Index>(2, spec.size / 16);
        const Index hi = std::max<Index>(lo + 1, spec.size / 4);
        const Index ra = lo + rng.next_below(static_cast<std::uint32_t>(hi - lo));
        const Index rb = lo + rng.next_below(static_cast<std::uint32_t>(hi - lo));
        VecX<double> spectrum(spec.bands);
        for (Index b = 0; b < spec.bands; ++b) spectrum[b] = rng.next_double();
        for (Index i = std::max<Index>(0, cx - ra); i <= std::min(spec.size - 1, cx + ra); ++i)
            for (Index j = std::max<Index>(0, cy - rb); j <= std::min(spec.size - 1, cy + rb);
                 ++j) {
                if (disk) {
                    const double di = static_cast<double>(i - cx) / static_cast<double>(ra);
                    const double dj = static_cast<double>(j - cy) / static_cast<double>(rb);
                    if (di * di + dj * dj > 1.0) continue;
                }
                for (Index b = 0; b < spec.bands; ++b) img(0, b, i, j) = spectrum[b];
            }
    }

    img.data = img.data.cwiseMax(0.0).cwiseMin(1.0);
    return img;
}

Tensor4d gaussian_blur(const Tensor4d& x, Index ksize, double sigma) {
    if (ksize < 1 || ksize % 2 == 0) throw ConfigError("gaussian_blur: kernel must be odd");
    if (sigma <= 0.0) throw ConfigError("gaussian_blur: sigma must be > 0");
    const Index r = (ksize - 1) / 2;
    VecX<double> g1(ksize);
    for (Index u = 0; u < ksize; ++u) {
        const double d = static_cast<double>(u - r);
        g1[u] = std::exp(-0.5 * d * d / (sigma * sigma));
    }
    g1 /= g1.sum();
    MatX<double> g2 = g1 * g1.transpose();
    g2 /= g2.sum();  // the 2D kernel sums to 1 exactly up to rounding

    Tensor4d out(x.n, x.c, x.h, x.w);
    for (Index n = 0; n < x.n; ++n)
        for (Index c = 0; c < x.c; ++c) {
            const auto src = x.plane(n, c);
            auto dst = out.plane(n, c);
            for (Index i = 0; i < x.h; ++i)
                for (Index j = 0; j < x.w; ++j) {
                    double acc = 0.0;
                    for (Index u = 0; u < ksize; ++u) {
                        const Index si = std::clamp<Index>(i + u - r, 0, x.h - 1);
                        for (Index v = 0; v < ksize; ++v) {
                            const Index sj = std::clamp<Index>(j + v - r, 0, x.w - 1);
                            acc += g2(u, v) * src(si, sj);
                        }
                    }
                    dst(i, j) = acc;
                }
        }
    return out;
}

Tensor4d decimate(const Tensor4d& x, Index r) {
    if (r < 1) throw ConfigError("decimate: ratio must be >= 1");
    if (x.h % r != 0 || x.w % r != 0)
        throw ShapeError("decimate: dims " + x.shape_str() + " not divisible by " +
                         std::to_string(r));
    Tensor4d out(x.n, x.c, x.h / r, x.w / r);
    for (Index n = 0; n < x.n; ++n)
        for (Index c = 0; c < x.c; ++c) {
            const auto src = x.plane(n, c);
            auto dst = out.plane(n, c);
            for (Index i = 0; i < out.h; ++i)
                for (Index j = 0; j < out.w; ++j) dst(i, j) = src(i * r, j * r);
        }
    return out;
}

Tensor4d wald_degrade(const Tensor4d& gt, const DegradeSpec& spec) {
    spec.validate();
    return decimate(gaussian_blur(gt, spec.blur_size, spec.blur_sigma), spec.ratio);
}

Tensor4d srf_project(const Tensor4d& gt, const MatX<double>& srf) {
    if (srf.cols() != gt.c)
        throw ShapeError("srf_project: srf has " + std::to_string(srf.cols()) +
                         " columns, image has " + std::to_string(gt.c) + " bands");
    Tensor4d out(gt.n, srf.rows(), gt.h, gt.w);
    for (Index n = 0; n < gt.n; ++n) out.channels(n).noalias() = srf * gt.channels(n);
    return out;
}

MatX<double> default_srf(Index c_hr, Index c_lr) {
    MatX<double> srf(c_hr, c_lr);
    const double width = std::max(1.0, static_cast<double>(c_lr) / (2.0 * static_cast<double>(c_hr)));
    for (Index j = 0; j < c_hr; ++j) {
        const double center =
            (static_cast<double>(j) + 0.5) * static_cast<double>(c_lr) / static_cast<double>(c_hr) -
            0.5;
        for (Index b = 0; b < c_lr; ++b) {
            const double d = static_cast<double>(b) - center;
            srf(j, b) = std::exp(-0.5 * d * d / (width * width));
        }
        srf.row(j) /= srf.row(j).sum();
    }
    return srf;
}

MatX<double> read_srf(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open srf file: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(f, line)) {
        const auto fields = split_ws(trim(line));
        if (fields.empty()) continue;
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& s : fields) row.push_back(std::stod(s));
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError("ragged srf rows in " + path.string());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("empty srf file: " + path.string());
    MatX<double> srf(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < srf.rows(); ++i)
        for (Index j = 0; j < srf.cols(); ++j)
            srf(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return srf;
}

void write_srf(const std::filesystem::path& path, const MatX<double>& srf) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write srf file: " + path.string());
    f.precision(17);
    for (Index i = 0; i < srf.rows(); ++i) {
        for (Index j = 0; j < srf.cols(); ++j) f << (j > 0 ? " " : "") << srf(i, j);
        f << "\n";
    }
}

std::vector<DatasetEntry> make_dataset(const MakeDatasetSpec& spec,
                                       const std::filesystem::path& out_dir) {
    if (spec.count < 1) throw ConfigError("make_dataset: count must be >= 1");
    if (spec.train_fraction < 0.0 || spec.train_fraction > 1.0)
        throw ConfigError("make_dataset: train_fraction must be in [0,1]");
    DegradeSpec degrade = spec.degrade;
    if (degrade.srf.size() == 0)
        throw ConfigError("make_dataset: degrade spec lacks an srf");
    degrade.validate();
    if (spec.scene.size % degrade.ratio != 0)
        throw ConfigError("make_dataset: scene size must divide by the ratio");
    std::filesystem::create_directories(out_dir);

    const Index n_train =
        static_cast<Index>(std::llround(spec.train_fraction * static_cast<double>(spec.count)));
    std::vector<DatasetEntry> entries;
    std::string manifest;
    for (Index i = 0; i < spec.count; ++i) {
        SceneSpec sc = spec.scene;
        sc.seed = spec.scene.seed + static_cast<std::uint64_t>(i + 1) * 2654435761ULL;
        const Tensor4d gt = gen_scene(sc);
        const Tensor4d lr = wald_degrade(gt, degrade);
        const Tensor4d hr = srf_project(gt, degrade.srf);
        const Tensor4d lr_up = upsample(lr, degrade.ratio, UpsampleMethod::Bicubic);

        char idbuf[16];
        std::snprintf(idbuf, sizeof(idbuf), "s%04d", static_cast<int>(i));
        DatasetEntry e;
        e.id = idbuf;
        e.split = i < n_train ? "train" : "test";
        e.gt_file = e.id + "_gt.ten";
        e.lr_file = e.id + "_lr.ten";
        e.lrup_file = e.id + "_lrup.ten";
        e.hr_file = e.id + "_hr.ten";
        write_ten_atomic(out_dir / e.gt_file, gt);
        write_ten_atomic(out_dir / e.lr_file, lr);
        write_ten_atomic(out_dir / e.lrup_file, lr_up);
        write_ten_atomic(out_dir / e.hr_file, hr);
        manifest += e.id + " " + e.split + " " + e.gt_file + " " + e.lr_file + " " +
                    e.lrup_file + " " + e.hr_file + "\n";
        entries.push_back(std::move(e));
    }
    const auto tmp = out_dir / "manifest.txt.tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f << manifest;
    }
    std::filesystem::rename(tmp, out_dir / "manifest.txt");
    return entries;
}

std::vector<DatasetEntry> read_dataset_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.txt";
    std::ifstream f(path);
    if (!f) throw IoError("cannot open dataset manifest: " + path.string());
    std::vector<DatasetEntry> entries;
    std::string line;
    while (std::getline(f, line)) {
        const auto fields = split_ws(trim(line));
        if (fields.empty()) continue;
        if (fields.size() != 6)
            throw IoError("malformed manifest line in " + path.string() + ": \"" + line + "\"");
        entries.push_back({fields[0], fields[1], fields[2], fields[3], fields[4], fields[5]});
    }
    return entries;
}

FusionSample load_sample(const std::filesystem::path& dir, const DatasetEntry& entry) {
    FusionSample s;
    s.lr_up = read_ten<double>(dir / entry.lrup_file);
    s.hr = read_ten<double>(dir / entry.hr_file);
    s.gt = read_ten<double>(dir / entry.gt_file);
    return s;
}

}  // namespace laconv
