#include <cmath>

#include "doctest.h"
#include "laconv/laconv_layer.hpp"
#include "laconv/rng.hpp"
#include "testutil.hpp"

using namespace laconv;
using testutil::fd_derivative;
using testutil::rel_error;

namespace {

LAConvParamsd random_layer(Index c_in, Index c_out, Index k, LAConvMode mode,
                           std::uint64_t seed) {
    auto p = LAConvParamsd::zeros(c_in, c_out, k, mode);
    Pcg32 rng(seed);
    testutil::fill_layer_params(p, rng);
    return p;
}

}  // namespace

TEST_CASE("gen_local_weights stays strictly inside (0,1)") {
    const auto p = random_layer(3, 5, 3, {ConvVariant::LocalAdaptive, BiasVariant::None}, 2);
    Pcg32 rng(3);
    Tensor4d x(2, 3, 6, 6);
    testutil::fill_uniform(x, rng, -3.0, 3.0);
    const Tensor4d w = gen_local_weights(x, p, PadMode::Zero);
    CHECK(w.n == 2);
    CHECK(w.c == 9);
    CHECK(w.data.minCoeff() > 0.0);
    CHECK(w.data.maxCoeff() < 1.0);
}

TEST_CASE("gen_local_weights on zero input with zero biases is 0.5 everywhere") {
    auto p = random_layer(2, 4, 3, {ConvVariant::LocalAdaptive, BiasVariant::None}, 5);
    p.wg_conv_bias.setZero();
    p.wg_fc1.bias.setZero();
    p.wg_fc2.bias.setZero();
    Tensor4d x(1, 2, 4, 4);
    const Tensor4d w = gen_local_weights(x, p, PadMode::Zero);
    CHECK((w.data.array() - 0.5).abs().maxCoeff() < 1e-15);
}

TEST_CASE("gen_local_weights on constant input with circular padding is spatially constant") {
    const auto p = random_layer(2, 4, 3, {ConvVariant::LocalAdaptive, BiasVariant::None}, 7);
    Tensor4d x(1, 2, 5, 5);
    x.plane(0, 0).setConstant(0.3);
    x.plane(0, 1).setConstant(-0.8);
    const Tensor4d w = gen_local_weights(x, p, PadMode::Circular);
    for (Index q = 0; q < w.c; ++q) {
        const auto plane = w.plane(0, q);
        CHECK((plane.array() - plane(0, 0)).abs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("modulated_conv degenerates to conv2d with unit weights") {
    Pcg32 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor4d x(2, 3, 6, 5);
        testutil::fill_uniform(x, rng);
        ConvKerneld k(4, 3, 3);
        for (Index i = 0; i < k.size(); ++i) k.data[i] = rng.next_double() - 0.5;
        Tensor4d ones(2, 9, 6, 5);
        ones.data.setOnes();
        const Tensor4d got = modulated_conv(x, ones, k, PadMode::Zero);
        const Tensor4d want = conv2d(x, k, PadMode::Zero);
        CHECK(testutil::max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("modulated_conv with zero weights is zero") {
    Pcg32 rng(13);
    Tensor4d x(1, 2, 4, 4);
    testutil::fill_uniform(x, rng);
    ConvKerneld k(3, 2, 3);
    for (Index i = 0; i < k.size(); ++i) k.data[i] = rng.next_double();
    Tensor4d zeros(1, 9, 4, 4);
    const Tensor4d out = modulated_conv(x, zeros, k, PadMode::Zero);
    CHECK(out.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("modulated_conv matches the naive nested-loop oracle") {
    for (const PadMode pad : {PadMode::Zero, PadMode::Circular}) {
        Pcg32 rng(17);
        Tensor4d x(1, 2, 5, 5);
        testutil::fill_uniform(x, rng);
        ConvKerneld k(3, 2, 3);
        for (Index i = 0; i < k.size(); ++i) k.data[i] = rng.next_double() - 0.5;
        Tensor4d w(1, 9, 5, 5);
        testutil::fill_uniform(w, rng, 0.0, 1.0);
        const Tensor4d got = modulated_conv(x, w, k, pad);
        const Tensor4d want = testutil::naive_modulated_conv(x, w, k, pad);
        CHECK(testutil::max_abs_diff(got, want) < 1e-12);
    }
}

TEST_CASE("modulated_conv rejects inconsistent weight dims") {
    Tensor4d x(1, 2, 4, 4);
    ConvKerneld k(3, 2, 3);
    Tensor4d w(1, 4, 4, 4);  // 4 != k^2
    CHECK_THROWS_AS(modulated_conv(x, w, k, PadMode::Zero), ShapeError);
}

TEST_CASE("modulated_conv VJP matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Pcg32 rng(seed * 97);
        Tensor4d x(2, 2, 4, 5);
        testutil::fill_uniform(x, rng);
        ConvKerneld k(3, 2, 3);
        for (Index i = 0; i < k.size(); ++i) k.data[i] = rng.next_double() - 0.5;
        Tensor4d w(2, 9, 4, 5);
        testutil::fill_uniform(w, rng, 0.05, 0.95);
        Tensor4d g(2, 3, 4, 5);
        testutil::fill_uniform(g, rng);
        const auto loss = [&] { return testutil::dot(g, modulated_conv(x, w, k, PadMode::Zero)); };
        const auto grads = modulated_conv_vjp(g, x, w, k, PadMode::Zero);
        for (int t = 0; t < 20; ++t) {
            const Index ix = rng.next_below(static_cast<std::uint32_t>(x.size()));
            CHECK(rel_error(grads.input.data[ix], fd_derivative(loss, x.data[ix])) < 1e-4);
            const Index iw = rng.next_below(static_cast<std::uint32_t>(w.size()));
            CHECK(rel_error(grads.weights.data[iw], fd_derivative(loss, w.data[iw])) < 1e-4);
            const Index ik = rng.next_below(static_cast<std::uint32_t>(k.size()));
            CHECK(rel_error(grads.kernel.data[ik], fd_derivative(loss, k.data[ik])) < 1e-4);
        }
    }
}

TEST_CASE("dynamic_bias basics") {
    auto p = random_layer(3, 4, 3, {ConvVariant::Standard, BiasVariant::Dynamic}, 19);

    SUBCASE("zero input and zero FC biases give zero bias") {
        p.dyb_fc1.bias.setZero();
        p.dyb_fc2.bias.setZero();
        Tensor4d x(2, 3, 4, 4);
        CHECK(dynamic_bias(x, p).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("different global means give different biases") {
        Tensor4d x(2, 3, 4, 4);
        x.channels(0).setConstant(0.2);
        x.channels(1).setConstant(0.9);
        const MatX<double> d = dynamic_bias(x, p);
        CHECK((d.row(0) - d.row(1)).cwiseAbs().maxCoeff() > 1e-6);
    }
    SUBCASE("invariant to spatial permutations") {
        Pcg32 rng(23);
        Tensor4d x(1, 3, 4, 4);
        testutil::fill_uniform(x, rng);
        const MatX<double> d0 = dynamic_bias(x, p);
        const MatX<double> d1 = dynamic_bias(testutil::circular_shift(x, 2, 3), p);
        CHECK((d0 - d1).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("laconv_forward in (standard, none) mode is bit-identical to conv2d") {
    const auto p = random_layer(3, 5, 3, {ConvVariant::Standard, BiasVariant::None}, 29);
    Pcg32 rng(31);
    Tensor4d x(2, 3, 6, 6);
    testutil::fill_uniform(x, rng);
    const Tensor4d got = laconv_forward(x, p, PadMode::Zero);
    const Tensor4d want = conv2d(x, p.main_kernel, PadMode::Zero);
    CHECK((got.data - want.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("laconv_forward constant input, circular padding, LAC+DYB stays constant") {
    const auto p =
        random_layer(2, 3, 3, {ConvVariant::LocalAdaptive, BiasVariant::Dynamic}, 37);
    Tensor4d x(1, 2, 6, 6);
    x.plane(0, 0).setConstant(0.4);
    x.plane(0, 1).setConstant(-0.2);
    const Tensor4d y = laconv_forward(x, p, PadMode::Circular);
    for (Index co = 0; co < y.c; ++co) {
        const auto plane = y.plane(0, co);
        CHECK((plane.array() - plane(0, 0)).abs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("laconv_forward validates mode-consistent parameters") {
    auto p = LAConvParamsd::zeros(2, 3, 3, {ConvVariant::Standard, BiasVariant::None});
    p.mode.bias = BiasVariant::Dynamic;  // groups for dynamic bias were never allocated
    Tensor4d x(1, 2, 4, 4);
    CHECK_THROWS_AS(laconv_forward(x, p, PadMode::Zero), ConfigError);
}

TEST_CASE("laconv_vjp requires saved forward state") {
    const auto p = random_layer(2, 3, 3, {ConvVariant::Standard, BiasVariant::None}, 41);
    Tensor4d g(1, 3, 4, 4);
    LAConvStated st;
    CHECK_THROWS_AS(laconv_vjp(g, p, PadMode::Zero, st), UsageError);
}

TEST_CASE("laconv_vjp zero cotangent gives zero gradients") {
    const auto p =
        random_layer(2, 3, 3, {ConvVariant::LocalAdaptive, BiasVariant::Dynamic}, 43);
    Pcg32 rng(47);
    Tensor4d x(2, 2, 5, 5);
    testutil::fill_uniform(x, rng);
    LAConvStated st;
    laconv_forward(x, p, PadMode::Zero, &st);
    Tensor4d g(2, 3, 5, 5);
    const auto grads = laconv_vjp(g, p, PadMode::Zero, st);
    CHECK(grads.input.data.cwiseAbs().maxCoeff() == 0.0);
    for_each_group(grads.params, [](const ParamGroupRef<double>& gr) {
        for (Index i = 0; i < gr.size; ++i) CHECK(gr.data[i] == 0.0);
    });
}

TEST_CASE("laconv_vjp in (standard, none) mode equals plain conv2d gradients") {
    const auto p = random_layer(2, 3, 3, {ConvVariant::Standard, BiasVariant::None}, 53);
    Pcg32 rng(59);
    Tensor4d x(1, 2, 5, 5), g(1, 3, 5, 5);
    testutil::fill_uniform(x, rng);
    testutil::fill_uniform(g, rng);
    LAConvStated st;
    laconv_forward(x, p, PadMode::Zero, &st);
    const auto got = laconv_vjp(g, p, PadMode::Zero, st);
    const auto want = conv2d_vjp(g, x, p.main_kernel, false, PadMode::Zero);
    CHECK(testutil::max_abs_diff(got.input, want.input) == 0.0);
    CHECK((got.params.main_kernel.data - want.kernel.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full layer gradients match finite differences in every mode") {
    const LAConvMode modes[] = {
        {ConvVariant::Standard, BiasVariant::None},
        {ConvVariant::Standard, BiasVariant::Static},
        {ConvVariant::Standard, BiasVariant::Dynamic},
        {ConvVariant::LocalAdaptive, BiasVariant::None},
        {ConvVariant::LocalAdaptive, BiasVariant::Static},
        {ConvVariant::LocalAdaptive, BiasVariant::Dynamic},
    };
    for (const auto mode : modes) {
        auto p = random_layer(2, 3, 3, mode, 61);
        Pcg32 rng(67);
        Tensor4d x(2, 2, 4, 4), g(2, 3, 4, 4);
        testutil::fill_uniform(x, rng);
        testutil::fill_uniform(g, rng);
        const auto loss = [&] { return testutil::dot(g, laconv_forward(x, p, PadMode::Zero)); };
        LAConvStated st;
        laconv_forward(x, p, PadMode::Zero, &st);
        const auto grads = laconv_vjp(g, p, PadMode::Zero, st);
        for (Index i = 0; i < x.size(); ++i)
            CHECK(rel_error(grads.input.data[i], fd_derivative(loss, x.data[i])) < 1e-4);
        std::vector<ParamGroupRef<double>> groups;
        for_each_group(p, [&](const ParamGroupRef<double>& gr) { groups.push_back(gr); });
        std::vector<ParamGroupRef<double>> grad_groups;
        for_each_group(grads.params,
                       [&](const ParamGroupRef<double>& gr) { grad_groups.push_back(gr); });
        REQUIRE(groups.size() == grad_groups.size());
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            const Index count = std::min<Index>(groups[gi].size, 12);
            for (Index t = 0; t < count; ++t) {
                const Index idx =
                    rng.next_below(static_cast<std::uint32_t>(groups[gi].size));
                const double fd = fd_derivative(loss, groups[gi].data[idx]);
                INFO("mode conv=" << to_string(mode.conv) << " bias="
                                  << to_string(mode.bias) << " group=" << groups[gi].name);
                CHECK(rel_error(grad_groups[gi].data[idx], fd) < 1e-4);
            }
        }
    }
}

TEST_CASE("directional derivative of the layer matches finite differences") {
    const auto mode = LAConvMode{ConvVariant::LocalAdaptive, BiasVariant::Dynamic};
    auto p = random_layer(2, 3, 3, mode, 71);
    Pcg32 rng(73);
    Tensor4d x(1, 2, 5, 5), g(1, 3, 5, 5);
    testutil::fill_uniform(x, rng);
    testutil::fill_uniform(g, rng);
    const auto loss = [&] { return testutil::dot(g, laconv_forward(x, p, PadMode::Zero)); };
    LAConvStated st;
    laconv_forward(x, p, PadMode::Zero, &st);
    const auto grads = laconv_vjp(g, p, PadMode::Zero, st);

    // random direction over all parameter groups
    auto dir = LAConvParamsd::zeros(2, 3, 3, mode);
    Pcg32 rng2(79);
    testutil::fill_layer_params(dir, rng2, 1.0);

    double analytic = 0.0;
    std::vector<ParamGroupRef<double>> pg, gg, dg;
    for_each_group(p, [&](const ParamGroupRef<double>& r) { pg.push_back(r); });
    for_each_group(grads.params, [&](const ParamGroupRef<double>& r) { gg.push_back(r); });
    for_each_group(dir, [&](const ParamGroupRef<double>& r) { dg.push_back(r); });
    for (std::size_t i = 0; i < pg.size(); ++i)
        for (Index j = 0; j < pg[i].size; ++j) analytic += gg[i].data[j] * dg[i].data[j];

    const double h = 1e-5;
    auto shift_all = [&](double s) {
        for (std::size_t i = 0; i < pg.size(); ++i)
            for (Index j = 0; j < pg[i].size; ++j) pg[i].data[j] += s * dg[i].data[j];
    };
    shift_all(h);
    const double fp = loss();
    shift_all(-2.0 * h);
    const double fm = loss();
    shift_all(h);
    CHECK(rel_error(analytic, (fp - fm) / (2.0 * h)) < 1e-4);
}

TEST_CASE("layer forward commutes with circular shifts in every mode") {
    const LAConvMode modes[] = {
        {ConvVariant::Standard, BiasVariant::Static},
        {ConvVariant::LocalAdaptive, BiasVariant::None},
        {ConvVariant::LocalAdaptive, BiasVariant::Dynamic},
    };
    Pcg32 rng(83);
    for (const auto mode : modes) {
        const auto p = random_layer(2, 3, 3, mode, 89);
        Tensor4d x(1, 2, 6, 6);
        testutil::fill_uniform(x, rng);
        const Tensor4d base = laconv_forward(x, p, PadMode::Circular);
        const Tensor4d shifted =
            laconv_forward(testutil::circular_shift(x, 2, -1), p, PadMode::Circular);
        CHECK(testutil::max_abs_diff(shifted, testutil::circular_shift(base, 2, -1)) < 1e-10);
    }
}

TEST_CASE("output at (i,j) only depends on the (2k-1)x(2k-1) neighborhood") {
    const auto p = random_layer(2, 3, 3, {ConvVariant::LocalAdaptive, BiasVariant::None}, 97);
    Pcg32 rng(101);
    Tensor4d x(1, 2, 9, 9);
    testutil::fill_uniform(x, rng);
    const Tensor4d base = laconv_forward(x, p, PadMode::Zero);
    // perturb (0,0): outputs at distance > 2 in either axis must be unchanged
    Tensor4d xp = x;
    xp(0, 0, 0, 0) += 10.0;
    xp(0, 1, 0, 0) -= 7.0;
    const Tensor4d out = laconv_forward(xp, p, PadMode::Zero);
    for (Index co = 0; co < out.c; ++co)
        for (Index i = 0; i < 9; ++i)
            for (Index j = 0; j < 9; ++j) {
                if (i <= 2 && j <= 2) continue;  // inside the halo, may change
                CHECK(out(0, co, i, j) == base(0, co, i, j));
            }
}
