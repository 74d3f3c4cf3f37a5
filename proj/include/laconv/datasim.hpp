#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "laconv/laresnet.hpp"

namespace laconv {

/// Synthetic scene recipe: smooth random background spectra plus hard-edged
/// shapes, giving both low- and high-frequency content.
struct SceneSpec {
    std::uint64_t seed = 0;
    Index bands = 4;
    Index size = 64;
    Index n_shapes = 6;
    double smoothness = 4.0;  // low-pass radius for the background field
};

/// Reduced-resolution degradation: Gaussian blur then decimation, plus the
/// spectral response projecting LR bands down to HR bands.
struct DegradeSpec {
    Index ratio = 4;
    Index blur_size = 3;
    double blur_sigma = 0.5;
    MatX<double> srf;  // (c_hr x c_lr), rows nonnegative, row sums 1

    void validate() const {
        if (ratio < 2) throw ConfigError("DegradeSpec: ratio must be >= 2");
        if (blur_size < 1 || blur_size % 2 == 0)
            throw ConfigError("DegradeSpec: blur kernel size must be odd");
        if (blur_sigma <= 0.0) throw ConfigError("DegradeSpec: blur sigma must be > 0");
        if (srf.size() > 0) {
            if (srf.minCoeff() < 0.0) throw ConfigError("DegradeSpec: srf must be nonnegative");
            for (Index r = 0; r < srf.rows(); ++r)
                if (std::abs(srf.row(r).sum() - 1.0) > 1e-9)
                    throw ConfigError("DegradeSpec: srf rows must sum to 1");
        }
    }
};

/// Deterministic per seed; output clamped to [0,1].
Tensor4d gen_scene(const SceneSpec& spec);

/// Per-band Gaussian blur (normalized k x k kernel, edge replication).
Tensor4d gaussian_blur(const Tensor4d& x, Index ksize, double sigma);

/// Keeps every r-th pixel starting at offset 0; dims must divide by r.
Tensor4d decimate(const Tensor4d& x, Index r);

/// Blur-then-decimate reduced-resolution simulation.
Tensor4d wald_degrade(const Tensor4d& gt, const DegradeSpec& spec);

/// hr[n,j,:,:] = sum_b srf[j,b] * gt[n,b,:,:].
Tensor4d srf_project(const Tensor4d& gt, const MatX<double>& srf);

/// Gaussian-shaped response rows over the band axis, row-normalized; the
/// stand-in for unavailable sensor response tables.
MatX<double> default_srf(Index c_hr, Index c_lr);

/// SRF text format: one whitespace-separated row per line.
MatX<double> read_srf(const std::filesystem::path& path);
void write_srf(const std::filesystem::path& path, const MatX<double>& srf);

/// One dataset manifest line: id, split, then file names relative to the
/// dataset directory.
struct DatasetEntry {
    std::string id;
    std::string split;  // "train" or "test"
    std::string gt_file, lr_file, lrup_file, hr_file;
};

struct MakeDatasetSpec {
    SceneSpec scene;      // scene.seed acts as the master seed
    DegradeSpec degrade;
    Index count = 10;
    double train_fraction = 0.8;
};

/// Writes gt/lr/lr_up/hr .ten files plus manifest.txt; byte-identical
/// across reruns with the same master seed.
std::vector<DatasetEntry> make_dataset(const MakeDatasetSpec& spec,
                                       const std::filesystem::path& out_dir);

std::vector<DatasetEntry> read_dataset_manifest(const std::filesystem::path& dir);

/// Loads lr_up / hr / gt for one entry.
FusionSample load_sample(const std::filesystem::path& dir, const DatasetEntry& entry);

}  // namespace laconv
