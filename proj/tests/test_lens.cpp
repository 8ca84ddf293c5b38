#include <numeric>

#include <gtest/gtest.h>

#include "gapdiag/lens.hpp"
#include "support.hpp"
#include "toy_model.hpp"

using namespace gapdiag;
using testsupport::kind_of;

namespace {

std::vector<double> rn(std::vector<double> h, std::vector<double> g, double eps) { return rmsnorm(h, g, eps); }

}  // namespace

TEST(RmsNorm, HandExamples) {
    auto y = rn({3, 3, 3}, {1, 1, 1}, 0.0);
    for (double v : y) EXPECT_DOUBLE_EQ(v, 1.0);
    y = rn({0, 0, 0}, {1, 1, 1}, 1e-6);
    for (double v : y) EXPECT_EQ(v, 0.0);
    y = rn({1, -1}, {2, 2}, 0.0);
    EXPECT_DOUBLE_EQ(y[0], 2.0);
    EXPECT_DOUBLE_EQ(y[1], -2.0);
    y = rn({0, 0}, {1, 1}, 0.0);  // 0/0 guarded
    EXPECT_EQ(y[0], 0.0);
}

TEST(RmsNorm, ScaleInvariantWithoutEps) {
    Stream s(3);
    std::vector<double> h(9), g(9), h5(9);
    for (std::size_t i = 0; i < 9; ++i) {
        h[i] = s.normal();
        g[i] = s.uniform(0.5, 1.5);
        h5[i] = 7.5 * h[i];
    }
    const auto a = rmsnorm(h, g, 0.0), b = rmsnorm(h5, g, 0.0);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
    EXPECT_EQ(kind_of([] { rn({1, 2}, {1}, 0.0); }), ErrorKind::Shape);
}

TEST(Softmax, NormalizedAndShiftInvariant) {
    const std::vector<double> z{1000.0, 999.0, -5.0, 3.0};
    const auto p = softmax(z);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-15);
    std::vector<double> z2 = z;
    for (auto& v : z2) v -= 1000.0;
    const auto q = softmax(z2);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-15);
}

TEST(Lens, ThreeTokenToyByHand) {
    ModelAssets a;
    a.d_hidden = 3;
    a.vocab_size = 3;
    a.norm_eps = 1e-6;
    a.norm_weights = {1.0f, 2.0f, 0.5f};
    a.unembed = {1, 0, 2, 0, -1, 1, 0.5f, 0.5f, 0.5f};
    const std::vector<double> h{2, -1, 3};
    const auto z = lens_project(std::span<const double>(h), a);
    EXPECT_NEAR(z[0], 2.3145500014438918, 1e-12);
    EXPECT_NEAR(z[1], 1.6201850010107242, 1e-12);
    EXPECT_NEAR(z[2], 0.34718250021658376, 1e-12);
    const auto p = softmax(z);
    EXPECT_NEAR(p[0], 0.6100477597031605, 1e-12);
    EXPECT_NEAR(p[1], 0.30465264180530632, 1e-12);
    EXPECT_NEAR(p[2], 0.085299598491533221, 1e-12);
}

TEST(Lens, IdentityHeadOnUnitSphere) {
    ModelAssets a;
    a.d_hidden = 4;
    a.vocab_size = 4;
    a.norm_eps = 0.0;
    a.norm_weights.assign(4, 1.0f);
    a.unembed.assign(16, 0.0f);
    for (int i = 0; i < 4; ++i) a.unembed[static_cast<std::size_t>(i * 5)] = 1.0f;
    const std::vector<double> h{1, -1, 1, -1};  // rms exactly 1
    const auto z = lens_project(std::span<const double>(h), a);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(z[i], h[i]);
}

TEST(Lens, AlignedRowWins) {
    const std::vector<double> h{0.3, -1.2, 2.0, 0.7, -0.1};
    const std::vector<double> g(5, 1.0);
    const auto y = rmsnorm(h, g, 1e-6);
    ModelAssets a;
    a.d_hidden = 5;
    a.vocab_size = 6;
    a.norm_eps = 1e-6;
    a.norm_weights.assign(5, 1.0f);
    Stream s(4);
    for (int k = 0; k < 6; ++k)
        for (int j = 0; j < 5; ++j) a.unembed.push_back(static_cast<float>(k == 3 ? 3.0 * y[static_cast<std::size_t>(j)] : 0.2 * s.normal()));
    const auto z = lens_project(std::span<const double>(h), a);
    EXPECT_EQ(std::max_element(z.begin(), z.end()) - z.begin(), 3);
}

TEST(Lens, FinalLayerMatchesModelHead) {
    const auto toy = testsupport::make_toy_model();
    const auto t = lens_trajectory(toy.data, &toy.assets, 2, 1);
    ASSERT_EQ(t.per_layer_prob.size(), 2u);
    for (std::size_t i = 0; i < toy.head_prob.size(); ++i) EXPECT_NEAR(t.per_layer_prob[1][i], toy.head_prob[i], 1e-6);
    EXPECT_EQ(t.normalization_checked, toy.head_prob.size());
    EXPECT_LE(t.max_normalization_error, 1e-6);
    for (const auto& layer : t.per_layer_prob)
        for (double p : layer) {
            EXPECT_GE(p, 0.0);
            EXPECT_LE(p, 1.0);
        }
}

TEST(Lens, ZeroUnembeddingIsUniform) {
    auto toy = testsupport::make_toy_model();
    std::fill(toy.assets.unembed.begin(), toy.assets.unembed.end(), 0.0f);
    const auto t = lens_trajectory(toy.data, &toy.assets);
    for (const auto& layer : t.per_layer_prob)
        for (double p : layer) EXPECT_NEAR(p, 0.1, 1e-15);
    EXPECT_EQ(t.regime, "neither");
}

TEST(Lens, SplitMeansAndPeaks) {
    const auto toy = testsupport::make_toy_model();
    const auto t = lens_trajectory(toy.data, &toy.assets);
    for (int s = 0; s < 4; ++s) {
        const auto si = static_cast<std::size_t>(s);
        EXPECT_EQ(t.split_count[si], 8u);
        double m1 = 0.0;
        for (std::size_t i = 0; i < toy.data.size(); ++i)
            if (toy.data.meta(i).split.index() == s) m1 += t.per_layer_prob[1][i];
        EXPECT_NEAR(t.split_mean[si][1], m1 / 8.0, 1e-15);
        const int peak = t.split_mean[si][1] > t.split_mean[si][0] ? 1 : 0;
        EXPECT_EQ(t.per_split_peak[si].first, peak);
    }
    const auto j = to_json(t);
    EXPECT_EQ(j["per_split"]["mis_a"]["n"], 8);
    EXPECT_EQ(j["per_layer_prob"].size(), 2u);
}

TEST(Lens, MissingAssetsAndTokens) {
    auto toy = testsupport::make_toy_model();
    EXPECT_EQ(kind_of([&] { lens_trajectory(toy.data, nullptr); }), ErrorKind::MissingAssets);
    toy.assets.correct_token_ids.erase(toy.data.meta(2).sample_id);
    EXPECT_EQ(kind_of([&] { lens_trajectory(toy.data, &toy.assets); }), ErrorKind::MissingAssets);
    toy = testsupport::make_toy_model();
    toy.assets.d_hidden = 5;
    EXPECT_EQ(kind_of([&] { lens_trajectory(toy.data, &toy.assets); }), ErrorKind::Shape);
}

TEST(Lens, RegimeRules) {
    LensTrajectory t;
    t.n_layers = 3;
    t.split_count = {1, 1, 1, 1};
    for (auto& m : t.split_mean) m = {0.01, 0.02, 0.03};
    EXPECT_EQ(classify_regime(t), "unembedding_misaligned");
    t.split_mean[0] = {0.1, 0.7, 0.2};
    EXPECT_EQ(classify_regime(t), "translation_bottleneck");
    t.split_mean[0] = {0.1, 0.2, 0.9};  // final-layer peak is not a mid-stack bottleneck
    EXPECT_EQ(classify_regime(t), "neither");
}
