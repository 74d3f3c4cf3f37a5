#include "laconv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "laconv/datasim.hpp"
#include "laconv/ops.hpp"

namespace laconv {

namespace {

constexpr double kDegenerate = 1e-14;

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

void check_same_shape(const Tensor4d& a, const Tensor4d& b, const char* who) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(who) + ": " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

double sam_degrees(const Tensor4d& x, const Tensor4d& y) {
    check_same_shape(x, y, "sam");
    double sum = 0.0;
    Index pixels = 0;
    for (Index n = 0; n < x.n; ++n)
        for (Index i = 0; i < x.h; ++i)
            for (Index j = 0; j < x.w; ++j) {
                double dot = 0.0, nx = 0.0, ny = 0.0;
                for (Index c = 0; c < x.c; ++c) {
                    const double a = x(n, c, i, j), b = y(n, c, i, j);
                    dot += a * b;
                    nx += a * a;
                    ny += b * b;
                }
                ++pixels;
                if (nx <= 0.0 || ny <= 0.0) continue;  // zero vectors contribute 0
                const double cosv = std::clamp(dot / std::sqrt(nx * ny), -1.0, 1.0);
                sum += std::acos(cosv);
            }
    return sum / static_cast<double>(pixels) * (180.0 / 3.14159265358979323846);
}

double ergas(const Tensor4d& x, const Tensor4d& ref, Index ratio) {
    check_same_shape(x, ref, "ergas");
    if (ratio < 1) throw ConfigError("ergas: ratio must be >= 1");
    double acc = 0.0;
    Index used = 0;
    const double count = static_cast<double>(x.n * x.h * x.w);
    for (Index c = 0; c < x.c; ++c) {
        double mse = 0.0, mu = 0.0;
        for (Index n = 0; n < x.n; ++n) {
            mse += (x.channels(n).row(c) - ref.channels(n).row(c)).squaredNorm();
            mu += ref.channels(n).row(c).sum();
        }
        mse /= count;
        mu /= count;
        if (mu == 0.0) {
            warn("ergas: band " + std::to_string(c) + " has zero reference mean, excluded");
            continue;
        }
        acc += mse / (mu * mu);
        ++used;
    }
    if (used == 0) {
        warn("ergas: no usable bands");
        return 0.0;
    }
    return 100.0 / static_cast<double>(ratio) * std::sqrt(acc / static_cast<double>(used));
}

namespace {

/// 4-neighbor Laplacian [[0,-1,0],[-1,4,-1],[0,-1,0]], zero padding.
RowMatX<double> laplacian(Eigen::Map<const RowMatX<double>> p) {
    const Index h = p.rows(), w = p.cols();
    RowMatX<double> out(h, w);
    for (Index i = 0; i < h; ++i)
        for (Index j = 0; j < w; ++j) {
            double acc = 4.0 * p(i, j);
            if (i > 0) acc -= p(i - 1, j);
            if (i + 1 < h) acc -= p(i + 1, j);
            if (j > 0) acc -= p(i, j - 1);
            if (j + 1 < w) acc -= p(i, j + 1);
            out(i, j) = acc;
        }
    return out;
}

double pearson(const std::vector<RowMatX<double>>& a, const std::vector<RowMatX<double>>& b) {
    double count = 0.0, ma = 0.0, mb = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s) {
        count += static_cast<double>(a[s].size());
        ma += a[s].sum();
        mb += b[s].sum();
    }
    ma /= count;
    mb /= count;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s) {
        const auto da = (a[s].array() - ma).matrix();
        const auto db = (b[s].array() - mb).matrix();
        cov += (da.array() * db.array()).sum();
        va += da.squaredNorm();
        vb += db.squaredNorm();
    }
    if (va < kDegenerate || vb < kDegenerate) return std::numeric_limits<double>::quiet_NaN();
    return cov / std::sqrt(va * vb);
}

}  // namespace

double scc(const Tensor4d& x, const Tensor4d& ref) {
    check_same_shape(x, ref, "scc");
    double acc = 0.0;
    for (Index c = 0; c < x.c; ++c) {
        std::vector<RowMatX<double>> fa, fb;
        for (Index n = 0; n < x.n; ++n) {
            fa.push_back(laplacian(x.plane(n, c)));
            fb.push_back(laplacian(ref.plane(n, c)));
        }
        const double r = pearson(fa, fb);
        if (std::isnan(r)) {
            warn("scc: band " + std::to_string(c) + " has zero filtered variance, counted as 0");
            continue;
        }
        acc += r;
    }
    return acc / static_cast<double>(x.c);
}

namespace {

VecX<double> hyper_conj(const VecX<double>& x) {
    VecX<double> y = -x;
    y[0] = x[0];
    return y;
}

/// Cayley-Dickson product: (a,b)(c,d) = (ac - conj(d) b, da + b conj(c)).
VecX<double> hyper_mul(const VecX<double>& x, const VecX<double>& y) {
    const Index d = x.size();
    if (d == 1) {
        VecX<double> out(1);
        out[0] = x[0] * y[0];
        return out;
    }
    const Index half = d / 2;
    const VecX<double> a = x.head(half), b = x.tail(half);
    const VecX<double> c = y.head(half), e = y.tail(half);
    VecX<double> out(d);
    out.head(half) = hyper_mul(a, c) - hyper_mul(hyper_conj(e), b);
    out.tail(half) = hyper_mul(e, a) + hyper_mul(b, hyper_conj(c));
    return out;
}

struct BlockRange {
    Index i0, j0, size;
};

/// Non-overlapping blocks, trailing partials dropped; if the image is
/// smaller than the block size, one whole-image block is used.
std::vector<BlockRange> block_grid(Index h, Index w, Index block) {
    std::vector<BlockRange> out;
    if (h < block || w < block) {
        out.push_back({0, 0, std::min(h, w)});
        return out;
    }
    for (Index i = 0; i + block <= h; i += block)
        for (Index j = 0; j + block <= w; j += block) out.push_back({i, j, block});
    return out;
}

}  // namespace

double q2n(const Tensor4d& x, const Tensor4d& ref, const MetricConfig& cfg) {
    check_same_shape(x, ref, "q2n");
    cfg.validate();
    Index dim = 1;
    while (dim < x.c) dim *= 2;  // pad bands up to the next power of two

    double acc = 0.0;
    Index blocks_used = 0;
    for (Index n = 0; n < x.n; ++n) {
        for (const BlockRange& blk : block_grid(x.h, x.w, cfg.q2n_block)) {
            const double count = static_cast<double>(blk.size * blk.size);
            VecX<double> mu_x = VecX<double>::Zero(dim), mu_y = VecX<double>::Zero(dim);
            for (Index i = 0; i < blk.size; ++i)
                for (Index j = 0; j < blk.size; ++j)
                    for (Index c = 0; c < x.c; ++c) {
                        mu_x[c] += x(n, c, blk.i0 + i, blk.j0 + j);
                        mu_y[c] += ref(n, c, blk.i0 + i, blk.j0 + j);
                    }
            mu_x /= count;
            mu_y /= count;
            double var_x = 0.0, var_y = 0.0;
            VecX<double> cov = VecX<double>::Zero(dim);
            VecX<double> dx = VecX<double>::Zero(dim), dy = VecX<double>::Zero(dim);
            for (Index i = 0; i < blk.size; ++i)
                for (Index j = 0; j < blk.size; ++j) {
                    for (Index c = 0; c < x.c; ++c) {
                        dx[c] = x(n, c, blk.i0 + i, blk.j0 + j) - mu_x[c];
                        dy[c] = ref(n, c, blk.i0 + i, blk.j0 + j) - mu_y[c];
                    }
                    dx.tail(dim - x.c).setZero();
                    dy.tail(dim - x.c).setZero();
                    var_x += dx.squaredNorm();
                    var_y += dy.squaredNorm();
                    cov += hyper_mul(dx, hyper_conj(dy));
                }
            var_x /= count;
            var_y /= count;
            cov /= count;

            const double denom_var = var_x + var_y;
            const double mod_mx = mu_x.norm(), mod_my = mu_y.norm();
            const double denom_mu = mod_mx * mod_mx + mod_my * mod_my;
            if (denom_var < kDegenerate && denom_mu < kDegenerate) continue;  // skipped
            double q = 1.0;
            if (denom_var >= kDegenerate) q *= 2.0 * cov.norm() / denom_var;
            if (denom_mu >= kDegenerate) q *= 2.0 * mod_mx * mod_my / denom_mu;
            acc += q;
            ++blocks_used;
        }
    }
    if (blocks_used == 0) {
        warn("q2n: every block degenerate, reporting 0");
        return 0.0;
    }
    return acc / static_cast<double>(blocks_used);
}

double psnr(const Tensor4d& x, const Tensor4d& ref, const MetricConfig& cfg) {
    check_same_shape(x, ref, "psnr");
    cfg.validate();
    const double count = static_cast<double>(x.n * x.h * x.w);
    double acc = 0.0;
    for (Index c = 0; c < x.c; ++c) {
        double mse = 0.0;
        for (Index n = 0; n < x.n; ++n)
            mse += (x.channels(n).row(c) - ref.channels(n).row(c)).squaredNorm();
        mse /= count;
        const double value =
            mse == 0.0 ? cfg.psnr_cap
                       : 10.0 * std::log10(cfg.psnr_peak * cfg.psnr_peak / mse);
        acc += std::min(value, cfg.psnr_cap);
    }
    return acc / static_cast<double>(x.c);
}

double ssim(const Tensor4d& x, const Tensor4d& ref, const MetricConfig& cfg) {
    check_same_shape(x, ref, "ssim");
    cfg.validate();
    const Index win = cfg.ssim_window;
    if (x.h < win || x.w < win)
        throw ShapeError("ssim: image smaller than the window");
    MatX<double> w2(win, win);
    const Index r = (win - 1) / 2;
    for (Index u = 0; u < win; ++u)
        for (Index v = 0; v < win; ++v) {
            const double du = static_cast<double>(u - r), dv = static_cast<double>(v - r);
            w2(u, v) = std::exp(-0.5 * (du * du + dv * dv) / (cfg.ssim_sigma * cfg.ssim_sigma));
        }
    w2 /= w2.sum();
    const double c1 = cfg.ssim_k1 * cfg.psnr_peak * cfg.ssim_k1 * cfg.psnr_peak;
    const double c2 = cfg.ssim_k2 * cfg.psnr_peak * cfg.ssim_k2 * cfg.psnr_peak;

    double acc = 0.0;
    for (Index n = 0; n < x.n; ++n)
        for (Index c = 0; c < x.c; ++c) {
            const auto a = x.plane(n, c);
            const auto b = ref.plane(n, c);
            double band_sum = 0.0;
            Index cells = 0;
            for (Index i = 0; i + win <= x.h; ++i)
                for (Index j = 0; j + win <= x.w; ++j) {
                    double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                    for (Index u = 0; u < win; ++u)
                        for (Index v = 0; v < win; ++v) {
                            const double wa = a(i + u, j + v), wb = b(i + u, j + v);
                            const double wt = w2(u, v);
                            ma += wt * wa;
                            mb += wt * wb;
                            maa += wt * wa * wa;
                            mbb += wt * wb * wb;
                            mab += wt * wa * wb;
                        }
                    const double va = maa - ma * ma, vb = mbb - mb * mb;
                    const double cab = mab - ma * mb;
                    band_sum += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) /
                                ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    ++cells;
                }
            acc += band_sum / static_cast<double>(cells);
        }
    return acc / static_cast<double>(x.n * x.c);
}

namespace {

/// Classical single-band UIQI averaged over blocks, signed covariance.
double uiqi_single(Eigen::Map<const RowMatX<double>> a, Eigen::Map<const RowMatX<double>> b,
                   Index block) {
    double acc = 0.0;
    Index used = 0;
    for (const BlockRange& blk : block_grid(a.rows(), a.cols(), block)) {
        const auto ba = a.block(blk.i0, blk.j0, blk.size, blk.size);
        const auto bb = b.block(blk.i0, blk.j0, blk.size, blk.size);
        const double count = static_cast<double>(blk.size * blk.size);
        const double ma = ba.mean(), mb = bb.mean();
        const double va = (ba.array() - ma).square().sum() / count;
        const double vb = (bb.array() - mb).square().sum() / count;
        const double cab = ((ba.array() - ma) * (bb.array() - mb)).sum() / count;
        const double denom_var = va + vb;
        const double denom_mu = ma * ma + mb * mb;
        if (denom_var < kDegenerate && denom_mu < kDegenerate) continue;
        double q = 1.0;
        if (denom_var >= kDegenerate) q *= 2.0 * cab / denom_var;
        if (denom_mu >= kDegenerate) q *= 2.0 * ma * mb / denom_mu;
        acc += q;
        ++used;
    }
    return used == 0 ? 0.0 : acc / static_cast<double>(used);
}

}  // namespace

QnrResult qnr_suite(const Tensor4d& fused, const Tensor4d& ms_lowres, const Tensor4d& pan,
                    const MetricConfig& cfg) {
    cfg.validate();
    if (pan.c != 1) throw ShapeError("qnr_suite: pan must have a single band");
    if (fused.c != ms_lowres.c)
        throw ShapeError("qnr_suite: fused and ms band counts differ");
    if (fused.n != ms_lowres.n || fused.n != pan.n || fused.h != pan.h || fused.w != pan.w)
        throw ShapeError("qnr_suite: shape mismatch between fused and pan");
    const Index r = cfg.resolution_ratio;
    if (ms_lowres.h * r != fused.h || ms_lowres.w * r != fused.w)
        throw ShapeError("qnr_suite: ms dims must be fused dims over the ratio");

    const Tensor4d pan_lr = [&] {
        if (r <= 1) return pan;
        DegradeSpec d;
        d.ratio = r;
        return wald_degrade(pan, d);
    }();

    QnrResult out;
    const Index bands = fused.c;

    if (bands < 2) {
        warn("qnr_suite: fewer than 2 bands, D_lambda undefined and reported as 0");
    } else {
        double acc = 0.0;
        Index pairs = 0;
        for (Index b = 0; b < bands; ++b)
            for (Index c = b + 1; c < bands; ++c) {
                double diff_sum = 0.0;
                for (Index n = 0; n < fused.n; ++n) {
                    const double qf =
                        uiqi_single(fused.plane(n, b), fused.plane(n, c), cfg.q2n_block);
                    const double qm = uiqi_single(ms_lowres.plane(n, b), ms_lowres.plane(n, c),
                                                  cfg.q2n_block);
                    diff_sum += std::abs(qf - qm);
                }
                acc += diff_sum / static_cast<double>(fused.n);
                ++pairs;
            }
        out.d_lambda = acc / static_cast<double>(pairs);
    }

    double acc = 0.0;
    for (Index b = 0; b < bands; ++b) {
        double diff_sum = 0.0;
        for (Index n = 0; n < fused.n; ++n) {
            const double qf = uiqi_single(fused.plane(n, b), pan.plane(n, 0), cfg.q2n_block);
            const double qm =
                uiqi_single(ms_lowres.plane(n, b), pan_lr.plane(n, 0), cfg.q2n_block);
            diff_sum += std::abs(qf - qm);
        }
        acc += diff_sum / static_cast<double>(fused.n);
    }
    out.d_s = acc / static_cast<double>(bands);

    out.qnr = std::pow(1.0 - out.d_lambda, cfg.qnr_alpha) * std::pow(1.0 - out.d_s, cfg.qnr_beta);
    return out;
}

void MetricReport::add(const std::string& sample_id, const std::string& metric, double value) {
    if (std::find(sample_ids.begin(), sample_ids.end(), sample_id) == sample_ids.end())
        sample_ids.push_back(sample_id);
    if (values.find(metric) == values.end()) metric_order.push_back(metric);
    values[metric].push_back(value);
}

double MetricReport::mean(const std::string& metric) const {
    const auto it = values.find(metric);
    if (it == values.end() || it->second.empty())
        throw UsageError("MetricReport: no values for " + metric);
    double acc = 0.0;
    for (const double v : it->second) acc += v;
    return acc / static_cast<double>(it->second.size());
}

double MetricReport::stddev(const std::string& metric) const {
    const auto it = values.find(metric);
    if (it == values.end() || it->second.empty())
        throw UsageError("MetricReport: no values for " + metric);
    if (it->second.size() < 2) return 0.0;
    const double m = mean(metric);
    double acc = 0.0;
    for (const double v : it->second) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(it->second.size() - 1));
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f.precision(17);
    f << "sample_id,metric,value\n";
    for (const auto& metric : metric_order) {
        const auto& vals = values.at(metric);
        for (std::size_t i = 0; i < vals.size(); ++i)
            f << sample_ids.at(i) << "," << metric << "," << vals[i] << "\n";
    }
    for (const auto& metric : metric_order)
        f << "summary," << metric << "," << mean(metric) << " ± " << stddev(metric) << "\n";
}

}  // namespace laconv
