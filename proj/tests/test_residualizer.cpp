#include <cmath>

#include <gtest/gtest.h>

#include "gapdiag/residualizer.hpp"
#include "gapdiag/synth.hpp"
#include "support.hpp"

using namespace gapdiag;
using testsupport::kind_of;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Stream s(seed);
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) M(i, j) = s.normal();
    return M;
}

SynthConfig leak_config(double leak) {
    SynthConfig c;
    c.n_videos = 120;
    c.n_layers = 4;
    c.d_hidden = 24;
    c.d_text = 6;
    c.signal_layers = {2};
    c.text_leak_strength = leak;
    c.seed = 33;
    return c;
}

}  // namespace

TEST(Ridge, ZeroTargetsGiveZeroMap) {
    const auto m = fit_ridge_map(random_mat(10, 4, 1), Mat::Zero(10, 3), 1.0);
    EXPECT_EQ(m.W.rows(), 3);
    EXPECT_EQ(m.W.cols(), 4);
    EXPECT_EQ(m.W.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ridge, OrthonormalSelfMapIsIdentity) {
    const double c = std::cos(0.3), s = std::sin(0.3);
    Mat H(3, 3);
    H << c, -s, 0, s, c, 0, 0, 0, 1;
    const auto m = fit_ridge_map(H, H, 1e-8);
    EXPECT_LT((m.W - Mat::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Ridge, HandSolvedExample) {
    Mat H(3, 2), T(3, 1);
    H << 1, 2, 3, -1, 0.5, 0.5;
    T << 1, 0, 2;
    const auto m = fit_ridge_map(H, T, 1.0);
    EXPECT_NEAR(m.W(0, 0), 0.21146953405017921, 1e-12);
    EXPECT_NEAR(m.W(0, 1), 0.5053763440860215, 1e-12);
}

TEST(Ridge, DualFormMatchesPrimalSolution) {
    const Mat H = random_mat(8, 20, 2), T = random_mat(8, 3, 3);
    const auto m = fit_ridge_map(H, T, 0.7);  // n < d_hidden takes the dual path
    Mat A = H.transpose() * H;
    A.diagonal().array() += 0.7;
    const Mat W = A.colPivHouseholderQr().solve(H.transpose() * T).transpose();
    EXPECT_LT((m.W - W).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Ridge, BadInputs) {
    EXPECT_EQ(kind_of([] { fit_ridge_map(Mat::Ones(4, 2), Mat::Ones(3, 1)); }), ErrorKind::Shape);
    EXPECT_EQ(kind_of([] { fit_ridge_map(Mat::Ones(4, 2), Mat::Ones(4, 1), 0.0); }), ErrorKind::Config);
    RidgeMap bad{Mat::Constant(2, 2, std::nan("")), 1.0};
    EXPECT_EQ(kind_of([&] { null_space_projector(bad); }), ErrorKind::SvdFailure);
}

TEST(Projector, ZeroMapIsIdentity) {
    const auto p = null_space_projector({Mat::Zero(3, 5), 1.0});
    EXPECT_EQ(p.source_rank, 0);
    const Vec h = random_mat(5, 1, 4);
    EXPECT_EQ(p.apply(h), h);
}

TEST(Projector, FullRankSquareAnnihilates) {
    const auto p = null_space_projector({random_mat(6, 6, 5), 1.0});
    EXPECT_EQ(p.source_rank, 6);
    const Vec h = random_mat(6, 1, 6);
    EXPECT_LT(p.apply(h).norm(), 1e-12 * h.norm());
}

TEST(Projector, RankOneRemovesOneDirection) {
    const Vec u = random_mat(3, 1, 7), v0 = random_mat(8, 1, 8);
    const Vec v = v0.normalized();
    const Mat W = u * v0.transpose();
    const auto p = null_space_projector({W, 1.0});
    EXPECT_EQ(p.source_rank, 1);
    for (std::uint64_t k = 0; k < 20; ++k) {
        const Vec h = random_mat(8, 1, 100 + k);
        const Vec r = p.apply(h);
        EXPECT_LT((r - (h - v * v.dot(h))).norm(), 1e-12 * h.norm());
        EXPECT_LE((W * r).norm(), 1e-10 * W.norm() * h.norm());
    }
}

TEST(Projector, OrthonormalBasisIdempotentAndRowsMatch) {
    const Mat W = random_mat(5, 16, 9);
    const auto p = null_space_projector({W, 1.0});
    EXPECT_EQ(p.source_rank, 5);
    EXPECT_LT((p.Vk.transpose() * p.Vk - Mat::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-10);
    const Mat H = random_mat(7, 16, 10);
    const Mat R = p.apply_rows(H);
    EXPECT_LT((p.apply_rows(R) - R).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index i = 0; i < H.rows(); ++i) EXPECT_LT((R.row(i).transpose() - p.apply(H.row(i).transpose())).norm(), 1e-12);
}

TEST(Projector, RelativeToleranceDropsTinyDirections) {
    Mat W = Mat::Zero(2, 4);
    W(0, 0) = 1.0;
    W(1, 1) = 1e-7;
    EXPECT_EQ(null_space_projector({W, 1.0}, 1e-5).source_rank, 1);
    EXPECT_EQ(null_space_projector({W, 1.0}, 1e-8).source_rank, 2);
}

TEST(Residualize, FoldBookkeepingAndLeakRemoval) {
    const auto data = generate_synthetic(leak_config(1.0));
    const auto d = data.dataset();
    const auto folds = make_folds(d.manifest.samples, 4, 1);
    const auto r = residualized_probe_cv(d, data.embeddings, {TaskKind::vision, NegativePolicy::within_modality}, 2, folds);
    ASSERT_EQ(r.fold_rank.size(), 4u);
    for (int rank : r.fold_rank) EXPECT_EQ(rank, 6);
    EXPECT_EQ(r.fold_ridge_hash.size(), 4u);
    EXPECT_GE(r.original.mean_acc, 0.9);
    EXPECT_NEAR(r.residualized.mean_acc, 0.5, 0.1);
}

TEST(Residualize, NoLeakKeepsSignal) {
    const auto data = generate_synthetic(leak_config(0.0));
    const auto d = data.dataset();
    const auto folds = make_folds(d.manifest.samples, 4, 1);
    const auto r = residualized_probe_cv(d, data.embeddings, {TaskKind::vision, NegativePolicy::within_modality}, 2, folds);
    EXPECT_NEAR(r.residualized.mean_acc, r.original.mean_acc, 0.03);
}

TEST(Residualize, MissingEmbeddingRow) {
    auto data = generate_synthetic(leak_config(0.0));
    data.embeddings.rows.erase(data.manifest.samples[3].sample_id);
    const auto d = data.dataset();
    const auto folds = make_folds(d.manifest.samples, 4, 1);
    EXPECT_EQ(kind_of([&] { residualized_probe_cv(d, data.embeddings, {TaskKind::binary, NegativePolicy::all_standard_1to2}, 1, folds); }),
              ErrorKind::MissingText);
}

TEST(TextBaseline, IdenticalQuestionsGiveChance) {
    auto m = generate_synthetic(leak_config(0.0)).manifest;
    for (auto& s : m.samples) s.question_text = "what is wrong in this clip";
    const auto folds = make_folds(m.samples, 4, 1);
    const auto r = text_baseline_probe(TextFeatures::tfidf, m, nullptr, {TaskKind::vision, NegativePolicy::within_modality}, folds);
    EXPECT_DOUBLE_EQ(r.cv.mean_acc, 0.5);
    EXPECT_EQ(r.features, "tfidf");
}

TEST(TextBaseline, LabelOneHotEmbeddingsArePerfect) {
    const auto m = generate_synthetic(leak_config(0.0)).manifest;
    TextEmbeddingTable t;
    t.d_text = 2;
    for (const auto& s : m.samples) t.rows[s.sample_id] = s.split.misleading() ? std::vector<float>{0, 1} : std::vector<float>{1, 0};
    const auto folds = make_folds(m.samples, 4, 1);
    const auto r = text_baseline_probe(TextFeatures::external_embeddings, m, &t, {TaskKind::binary, NegativePolicy::all_standard_1to2}, folds);
    EXPECT_DOUBLE_EQ(r.cv.mean_acc, 1.0);
}

TEST(TextBaseline, MissingQuestionText) {
    auto m = generate_synthetic(leak_config(0.0)).manifest;
    m.samples[0].question_text.reset();
    const auto folds = make_folds(m.samples, 4, 1);
    EXPECT_EQ(kind_of([&] { text_baseline_probe(TextFeatures::tfidf, m, nullptr, {TaskKind::binary, NegativePolicy::all_standard_1to2}, folds); }),
              ErrorKind::MissingText);
    EXPECT_EQ(parse_text_features("sbert"), TextFeatures::external_embeddings);
    EXPECT_EQ(kind_of([] { parse_text_features("bow"); }), ErrorKind::Usage);
}
