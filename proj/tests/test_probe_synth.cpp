#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "gapdiag/probe_lab.hpp"
#include "gapdiag/synth.hpp"
#include "support.hpp"

using namespace gapdiag;
using testsupport::kind_of;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.n_videos = 120;
    c.n_layers = 8;
    c.d_hidden = 24;
    c.d_text = 6;
    c.signal_layers = {4};
    c.seed = 21;
    return c;
}

}  // namespace

TEST(Synth, ConfigValidation) {
    auto c = small_config();
    c.signal_layers = {8};
    EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config);
    c = small_config();
    c.vision_signal_strength = -1;
    EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config);
    c = small_config();
    c.d_text = 23;
    EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([] { synth_config_from_json({{"n_videos", "many"}}); }), ErrorKind::Config);
    EXPECT_EQ(synth_config_from_json(to_json(small_config())).n_layers, 8);
}

TEST(Synth, DeterministicAndValid) {
    const auto a = generate_synthetic(small_config());
    const auto b = generate_synthetic(small_config());
    ASSERT_EQ(a.bundles.size(), 480u);
    EXPECT_EQ(manifest_to_json(a.manifest), manifest_to_json(b.manifest));
    for (std::size_t i = 0; i < a.bundles.size(); i += 37) EXPECT_EQ(a.bundles[i].states, b.bundles[i].states);

    testsupport::TempDir dir("synth_valid");
    write_synthetic(a, dir.path());
    const auto rep = validate_dataset(load_manifest(dir / "manifest.json"));
    EXPECT_TRUE(rep.ok()) << to_json(rep).dump();
    EXPECT_TRUE(fs::exists(dir / "ground_truth.json"));
}

TEST(Synth, LabelShuffleIsNonIdentityAndRepeatable) {
    const auto d = generate_synthetic(small_config()).dataset();
    const auto p1 = label_shuffle_permutation(d.manifest, 4);
    EXPECT_EQ(p1, label_shuffle_permutation(d.manifest, 4));
    std::vector<std::size_t> sorted = p1;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) ASSERT_EQ(sorted[i], i);
    std::size_t moved = 0;
    for (std::size_t i = 0; i < p1.size(); ++i) {
        moved += p1[i] != i;
        // permutation stays within a modality
        EXPECT_EQ(d.manifest.samples[i].split.modality, d.manifest.samples[p1[i]].split.modality);
    }
    EXPECT_GT(moved, 0u);
    const auto s1 = generate_label_shuffled(d, 4), s2 = generate_label_shuffled(d, 4);
    for (std::size_t i = 0; i < s1.bundles.size(); ++i) ASSERT_EQ(s1.bundles[i].states, s2.bundles[i].states);
}

TEST(ProbeLab, PlantedLayerFoundAndFinalLayerDecays) {
    const auto d = generate_synthetic(small_config()).dataset();
    const auto folds = make_folds(d.manifest.samples, 4, 1);
    const auto r = layer_sweep(d, {TaskKind::binary, NegativePolicy::all_standard_1to2}, folds, 1.0, 2);
    EXPECT_EQ(r.peak_layer, 4);
    EXPECT_GE(r.peak_acc, 0.95);
    EXPECT_LT(r.final_layer_acc, 0.75);
    EXPECT_EQ(r.per_layer_cv_acc.size(), 8u);
}

TEST(ProbeLab, ModalityAsymmetry) {
    auto c = small_config();
    c.audio_signal_strength = 0.0;
    const auto d = generate_synthetic(c).dataset();
    const auto folds = make_folds(d.manifest.samples, 4, 1);
    const auto v = modality_probe(d, Modality::vision, NegativePolicy::within_modality, folds, 4);
    const auto a = modality_probe(d, Modality::audio, NegativePolicy::within_modality, folds, 4);
    EXPECT_GE(v.cv.mean_acc, 0.95);
    EXPECT_NEAR(a.cv.mean_acc, 0.5, 0.1);
    EXPECT_EQ(v.n_pos, 120u);
    EXPECT_EQ(v.n_neg, 120u);
}

TEST(ProbeLab, NullSignalNearChanceEverywhere) {
    auto c = small_config();
    c.n_videos = 200;
    c.vision_signal_strength = c.audio_signal_strength = 0.0;
    const auto d = generate_synthetic(c).dataset();
    const auto folds = make_folds(d.manifest.samples, 4, 1);
    const auto r = layer_sweep(d, {TaskKind::binary, NegativePolicy::all_standard_1to2}, folds, 1.0, 2);
    // four binomial standard errors of a chance-level accuracy over all task samples;
    // layers share per-sample noise, so their deviations are correlated
    const double tol = 4.0 * std::sqrt(0.25 / static_cast<double>(d.size()));
    for (double acc : r.per_layer_cv_acc) EXPECT_NEAR(acc, 0.5, tol);
    EXPECT_NEAR(r.final_layer_acc - r.peak_acc, 0.0, 0.05);
}

TEST(ProbeLab, CrossValidationIsGroupedAndAligned) {
    const auto d = generate_synthetic(small_config()).dataset();
    const auto folds = make_folds(d.manifest.samples, 4, 2);
    const auto task = select_task(d.manifest, {TaskKind::vision, NegativePolicy::within_modality});
    FeatureFn spy = [&](const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
        std::vector<std::string> trv, tev;
        for (auto i : tr) trv.push_back(d.manifest.samples[i].video_id);
        for (auto i : te) tev.push_back(d.manifest.samples[i].video_id);
        assert_group_disjoint(trv, tev, "probe-lab");
        return hidden_state_features(d, 4)(tr, te);
    };
    const auto cv = cross_validate(d.manifest, task, folds, spy);
    EXPECT_EQ(cv.fold_acc.size(), 4u);
    EXPECT_EQ(cv.fold_param_hash.size(), 4u);
    EXPECT_EQ(cv.correct.size(), task.index.size());
    EXPECT_EQ(cv.sample_index, task.index);
    const auto again = cross_validate(d.manifest, task, folds, hidden_state_features(d, 4));
    EXPECT_EQ(again.fold_param_hash, cv.fold_param_hash);
    EXPECT_DOUBLE_EQ(again.mean_acc, cv.mean_acc);
}

TEST(ProbeLab, TaskWithoutPositivesIsMissingSplit) {
    Manifest m;
    for (const char* sp : {"std_v", "std_a"}) m.samples.push_back(testsupport::make_sample("v", sp));
    EXPECT_EQ(kind_of([&] { select_task(m, {TaskKind::binary, NegativePolicy::all_standard_1to2}); }), ErrorKind::MissingSplit);
}

TEST(ProbeLab, LayerOutOfRange) {
    const auto d = generate_synthetic(small_config()).dataset();
    EXPECT_EQ(kind_of([&] { layer_matrix(d, 8, {0}); }), ErrorKind::Shape);
}
