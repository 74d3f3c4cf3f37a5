#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "laconv/datasim.hpp"
#include "laconv/ops.hpp"
#include "laconv/tenio.hpp"
#include "testutil.hpp"

using namespace laconv;
namespace fs = std::filesystem;

TEST_CASE("gen_scene determinism, range and flatness limit") {
    SceneSpec spec;
    spec.seed = 9;
    spec.bands = 3;
    spec.size = 32;
    spec.n_shapes = 4;
    const Tensor4d a = gen_scene(spec);
    const Tensor4d b = gen_scene(spec);
    CHECK((a.data - b.data).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.data.minCoeff() >= 0.0);
    CHECK(a.data.maxCoeff() <= 1.0);

    SceneSpec flat = spec;
    flat.n_shapes = 0;
    flat.smoothness = 16.0;
    const Tensor4d f = gen_scene(flat);
    for (Index band = 0; band < f.c; ++band) {
        const auto plane = f.plane(0, band);
        const double mean = plane.mean();
        const double stddev =
            std::sqrt((plane.array() - mean).square().mean());
        CHECK(stddev < 0.05);
    }

    SceneSpec other = spec;
    other.seed = 10;
    const Tensor4d c = gen_scene(other);
    CHECK((a.data - c.data).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("gaussian blur preserves constants and its kernel mass") {
    Tensor4d x(1, 2, 8, 8);
    x.data.setConstant(0.42);
    const Tensor4d y = gaussian_blur(x, 3, 0.5);
    CHECK((y.data.array() - 0.42).abs().maxCoeff() < 1e-12);
}

TEST_CASE("wald_degrade dims and loop oracle") {
    DegradeSpec spec;
    spec.ratio = 4;
    spec.srf = default_srf(1, 2);

    SUBCASE("64 -> 16 at ratio 4") {
        Tensor4d gt(1, 2, 64, 64);
        Pcg32 rng(3);
        testutil::fill_uniform(gt, rng, 0.0, 1.0);
        const Tensor4d lr = wald_degrade(gt, spec);
        CHECK(lr.h == 16);
        CHECK(lr.w == 16);
    }
    SUBCASE("constant image stays constant") {
        Tensor4d gt(1, 2, 16, 16);
        gt.data.setConstant(0.77);
        const Tensor4d lr = wald_degrade(gt, spec);
        CHECK((lr.data.array() - 0.77).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("matches a naive double-loop reference on 8x8") {
        DegradeSpec small = spec;
        small.ratio = 2;
        Tensor4d gt(1, 1, 8, 8);
        Pcg32 rng(5);
        testutil::fill_uniform(gt, rng, 0.0, 1.0);
        const Tensor4d lr = wald_degrade(gt, small);
        // direct reference: normalized 3x3 gaussian, replicate edges,
        // then take every 2nd pixel
        VecX<double> g1(3);
        const double s = 0.5;
        g1 << std::exp(-0.5 / (s * s)), 1.0, std::exp(-0.5 / (s * s));
        MatX<double> g2 = g1 * g1.transpose();
        g2 /= g2.sum();
        const auto src = gt.plane(0, 0);
        for (Index i = 0; i < 4; ++i)
            for (Index j = 0; j < 4; ++j) {
                double acc = 0.0;
                for (Index u = 0; u < 3; ++u)
                    for (Index v = 0; v < 3; ++v) {
                        const Index si = std::clamp<Index>(2 * i + u - 1, 0, 7);
                        const Index sj = std::clamp<Index>(2 * j + v - 1, 0, 7);
                        acc += g2(u, v) * src(si, sj);
                    }
                CHECK(lr(0, 0, i, j) == doctest::Approx(acc).epsilon(1e-12));
            }
    }
    SUBCASE("indivisible dims are rejected") {
        Tensor4d gt(1, 1, 10, 10);
        CHECK_THROWS_AS(wald_degrade(gt, spec), ShapeError);
    }
    SUBCASE("ratio below 2 is rejected") {
        DegradeSpec bad = spec;
        bad.ratio = 1;
        CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
}

TEST_CASE("srf_project") {
    SUBCASE("uniform single row gives the band mean") {
        Tensor4d gt(1, 4, 2, 2);
        Pcg32 rng(7);
        testutil::fill_uniform(gt, rng, 0.0, 1.0);
        MatX<double> srf = MatX<double>::Constant(1, 4, 0.25);
        const Tensor4d pan = srf_project(gt, srf);
        for (Index i = 0; i < 2; ++i)
            for (Index j = 0; j < 2; ++j) {
                const double mean = (gt(0, 0, i, j) + gt(0, 1, i, j) + gt(0, 2, i, j) +
                                     gt(0, 3, i, j)) /
                                    4.0;
                CHECK(pan(0, 0, i, j) == doctest::Approx(mean));
            }
    }
    SUBCASE("identity srf reproduces the image") {
        Tensor4d gt(1, 3, 2, 2);
        Pcg32 rng(11);
        testutil::fill_uniform(gt, rng, 0.0, 1.0);
        MatX<double> eye = MatX<double>::Identity(3, 3);
        CHECK(testutil::max_abs_diff(srf_project(gt, eye), gt) == 0.0);
    }
    SUBCASE("two-band hand-computed case") {
        Tensor4d gt(1, 2, 1, 1);
        gt(0, 0, 0, 0) = 0.25;
        gt(0, 1, 0, 0) = 0.75;
        MatX<double> srf(1, 2);
        srf << 0.4, 0.6;
        CHECK(srf_project(gt, srf)(0, 0, 0, 0) == doctest::Approx(0.4 * 0.25 + 0.6 * 0.75));
    }
    SUBCASE("dimension mismatch throws") {
        Tensor4d gt(1, 3, 2, 2);
        CHECK_THROWS_AS(srf_project(gt, MatX<double>::Constant(1, 4, 0.25)), ShapeError);
    }
}

TEST_CASE("default_srf rows are stochastic") {
    for (const auto [hr, lr] : {std::pair<Index, Index>{1, 8}, {3, 31}, {1, 4}}) {
        const MatX<double> srf = default_srf(hr, lr);
        CHECK(srf.rows() == hr);
        CHECK(srf.cols() == lr);
        CHECK(srf.minCoeff() >= 0.0);
        for (Index r = 0; r < hr; ++r) CHECK(srf.row(r).sum() == doctest::Approx(1.0));
    }
}

TEST_CASE("srf text round trip") {
    const fs::path dir = fs::temp_directory_path() / "laconv_srf_test";
    fs::create_directories(dir);
    const MatX<double> srf = default_srf(3, 31);
    write_srf(dir / "srf.txt", srf);
    const MatX<double> back = read_srf(dir / "srf.txt");
    CHECK((srf - back).cwiseAbs().maxCoeff() < 1e-15);
    fs::remove_all(dir);
}

TEST_CASE("make_dataset splits, consistency and byte-identical regeneration") {
    MakeDatasetSpec spec;
    spec.scene.seed = 77;
    spec.scene.bands = 4;
    spec.scene.size = 32;
    spec.scene.n_shapes = 3;
    spec.degrade.ratio = 4;
    spec.degrade.srf = default_srf(1, 4);
    spec.count = 10;
    spec.train_fraction = 0.8;

    const fs::path dir1 = fs::temp_directory_path() / "laconv_ds1";
    const fs::path dir2 = fs::temp_directory_path() / "laconv_ds2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    const auto entries = make_dataset(spec, dir1);
    make_dataset(spec, dir2);

    CHECK(entries.size() == 10);
    Index trains = 0, tests = 0;
    for (const auto& e : entries) (e.split == "train" ? trains : tests) += 1;
    CHECK(trains == 8);
    CHECK(tests == 2);

    // the manifest round-trips
    const auto read_back = read_dataset_manifest(dir1);
    REQUIRE(read_back.size() == entries.size());
    CHECK(read_back[3].id == entries[3].id);
    CHECK(read_back[9].split == "test");

    // stored LR equals on-the-fly degradation of the stored GT
    for (const auto& e : entries) {
        const Tensor4d gt = read_ten<double>(dir1 / e.gt_file);
        const Tensor4d lr = read_ten<double>(dir1 / e.lr_file);
        const Tensor4d redo = wald_degrade(gt, spec.degrade);
        CHECK((lr.data - redo.data).cwiseAbs().maxCoeff() == 0.0);
        CHECK(lr.h * spec.degrade.ratio == gt.h);
    }

    // loaded sample has the dims the trainer expects
    const FusionSample s = load_sample(dir1, entries[0]);
    CHECK(s.lr_up.c == 4);
    CHECK(s.hr.c == 1);
    CHECK(s.lr_up.h == 32);
    CHECK(s.has_gt());

    // regeneration with the same master seed is byte-identical
    auto file_bytes = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    for (const auto& e : entries) {
        for (const auto* name : {&e.gt_file, &e.lr_file, &e.lrup_file, &e.hr_file})
            CHECK(file_bytes(dir1 / *name) == file_bytes(dir2 / *name));
    }
    CHECK(file_bytes(dir1 / "manifest.txt") == file_bytes(dir2 / "manifest.txt"));

    fs::remove_all(dir1);
    fs::remove_all(dir2);
}
