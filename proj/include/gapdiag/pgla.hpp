#pragma once

// Probe-guided logit adjustment: a hidden-state probe estimates whether the
// premise is misleading and gates a boost to the two rejection options (E, F).
// Also the cross-validated grid sweep, the budgeted Pareto selection and the
// stacked "enhanced" probe.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/folds.hpp"
#include "gapdiag/logistic.hpp"
#include "gapdiag/mlp.hpp"
#include "gapdiag/parallel.hpp"
#include "gapdiag/probe_lab.hpp"
#include "gapdiag/stats.hpp"

namespace gapdiag {

using Logits6 = std::array<double, 6>;

struct PglaConfig {
    double gamma = 1.0;
    double p = 1.0;
    double alpha_thresh = 0.5;
    double s = 1.0;
    double delta = 5.0;
    double beta = 0.0;

    void validate() const {
        if (!(gamma > 0 && p > 0 && s > 0 && delta > 0)) fail(ErrorKind::Config, "gamma, p, s and delta must be positive");
        if (!(alpha_thresh > 0 && alpha_thresh <= 1)) fail(ErrorKind::Config, "alpha_thresh must be in (0, 1]");
    }
};

inline nlohmann::json to_json(const PglaConfig& c) {
    return {{"gamma", c.gamma}, {"p", c.p}, {"alpha_thresh", c.alpha_thresh}, {"s", c.s}, {"delta", c.delta}, {"beta", c.beta}};
}

inline PglaConfig pgla_config_from_json(const nlohmann::json& j) {
    PglaConfig c;
    c.gamma = j.value("gamma", c.gamma);
    c.p = j.value("p", c.p);
    c.alpha_thresh = j.value("alpha_thresh", c.alpha_thresh);
    c.s = j.value("s", c.s);
    c.delta = j.value("delta", c.delta);
    c.beta = j.value("beta", c.beta);
    return c;
}

inline Logits6 logits_of(const HiddenStateBundle& b) {
    Logits6 L{};
    for (std::size_t i = 0; i < 6; ++i) L[i] = static_cast<double>(b.choice_logits[i]);
    return L;
}

inline int argmax6(const Logits6& L) {
    return static_cast<int>(std::max_element(L.begin(), L.end()) - L.begin());  // first maximum
}

// Delta: best content option minus best rejection option.
inline double rejection_gap(const Logits6& L) {
    return std::max({L[0], L[1], L[2], L[3]}) - std::max(L[4], L[5]);
}

inline double pgla_gate(double p_mis, const PglaConfig& c) {
    return detail::sigmoid(c.gamma * (std::pow(p_mis, c.p) - c.alpha_thresh));
}

inline Logits6 apply_pgla(const Logits6& L, double p_mis, const PglaConfig& c) {
    if (!(p_mis >= 0.0 && p_mis <= 1.0)) fail(ErrorKind::Config, "p_mis must be in [0, 1]");
    Logits6 out = L;
    const double boost = pgla_gate(p_mis, c) * (c.s * rejection_gap(L) + c.delta);
    out[4] = L[4] + boost - c.beta / 2.0;
    out[5] = L[5] + boost + c.beta / 2.0;
    return out;
}

inline double estimate_beta(const std::vector<Logits6>& standard) {
    if (standard.empty()) fail(ErrorKind::EmptyInput, "beta needs at least one standard sample");
    double s = 0.0;
    for (const auto& L : standard) s += L[4] - L[5];
    return s / static_cast<double>(standard.size());
}

// gamma x p x alpha x s x delta, gamma outermost; beta is filled in per fold.
inline std::vector<PglaConfig> default_grid() {
    std::vector<PglaConfig> g;
    for (double gamma : {0.5, 1.0, 2.0})
        for (double p : {1.0, 2.0})
            for (double a : {0.3, 0.5, 1.0})
                for (double s : {0.75, 1.0, 1.5})
                    for (double d : {5.0, 8.0, 12.0}) g.push_back({gamma, p, a, s, d, 0.0});
    return g;
}

// ---------------------------------------------------------------------------
// Probe training on a video-grouped split

struct ProbeEvalSplit {
    std::vector<std::size_t> probe_idx;
    std::vector<std::size_t> eval_idx;
    std::vector<std::string> probe_videos;
    std::vector<std::string> eval_videos;
    std::uint64_t seed = 0;
};

// train_fraction must be 1/m for an integer m >= 2: one of m grouped,
// split-stratified folds becomes the probe split.
inline ProbeEvalSplit probe_eval_split(const Manifest& m, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0 && train_fraction < 1)) fail(ErrorKind::Config, "train_fraction must be in (0, 1)");
    const int k = static_cast<int>(std::lround(1.0 / train_fraction));
    if (k < 2 || std::abs(1.0 / k - train_fraction) > 1e-9) fail(ErrorKind::Config, "train_fraction must be 1/m for an integer m");
    const auto folds = make_folds(m.samples, k, seed);
    ProbeEvalSplit sp;
    sp.seed = seed;
    for (std::size_t i = 0; i < m.samples.size(); ++i) (folds.fold(m.samples[i].video_id) == 0 ? sp.probe_idx : sp.eval_idx).push_back(i);
    sp.probe_videos = folds.videos_in(0);
    for (int f = 1; f < k; ++f)
        for (auto& v : folds.videos_in(f)) sp.eval_videos.push_back(std::move(v));
    assert_group_disjoint(sp.probe_videos, sp.eval_videos, "probe/eval split");
    return sp;
}

inline std::vector<int> misleading_labels(const Manifest& m, const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    for (auto i : idx) y.push_back(m.samples[i].split.misleading() ? 1 : 0);
    return y;
}

struct MlpProbe {
    int layer = 0;
    Mlp model;
    std::uint64_t train_seed = 0;
    std::vector<std::string> train_videos;

    std::vector<double> p_mis(const Dataset& d, const std::vector<std::size_t>& idx) const {
        const Vec p = model.predict_proba(layer_matrix(d, static_cast<std::size_t>(layer), idx));
        return {p.data(), p.data() + p.size()};
    }
};

inline MlpOptions default_probe_mlp(std::uint64_t seed) {
    MlpOptions o;
    o.hidden = {256};
    o.seed = seed;
    return o;
}

inline MlpProbe train_mlp_probe(const Dataset& d, std::size_t layer, const ProbeEvalSplit& split, std::uint64_t seed,
                                std::optional<MlpOptions> opt = std::nullopt) {
    if (layer >= d.shape.n_layers) fail(ErrorKind::Shape, "layer " + std::to_string(layer) + " out of range");
    MlpProbe p;
    p.layer = static_cast<int>(layer);
    p.train_seed = seed;
    p.train_videos = split.probe_videos;
    p.model = Mlp::train(layer_matrix(d, layer, split.probe_idx), misleading_labels(d.manifest, split.probe_idx),
                         opt.value_or(default_probe_mlp(seed)));
    return p;
}

// ---------------------------------------------------------------------------
// Grid sweep under grouped k-fold CV on the evaluation split

struct EvalSet {
    std::vector<const SampleMeta*> meta;
    std::vector<Logits6> logits;
    std::vector<double> p_mis;
};

inline EvalSet make_eval_set(const Dataset& d, const std::vector<std::size_t>& idx, const std::vector<double>& p_mis) {
    if (idx.size() != p_mis.size()) fail(ErrorKind::Shape, "p_mis length does not match the evaluation samples");
    EvalSet e;
    for (std::size_t r = 0; r < idx.size(); ++r) {
        e.meta.push_back(&d.manifest.samples[idx[r]]);
        e.logits.push_back(logits_of(d.bundles[idx[r]]));
        e.p_mis.push_back(p_mis[r]);
    }
    return e;
}

// cfg == nullopt scores the unmodified logits.
inline SplitTally score_rows(const EvalSet& e, const std::vector<std::size_t>& rows, const std::optional<PglaConfig>& cfg) {
    SplitTally t;
    for (auto r : rows) {
        const auto& L = e.logits[r];
        const int pick = cfg ? argmax6(apply_pgla(L, e.p_mis[r], *cfg)) : argmax6(L);
        t.add(e.meta[r]->split, pick == e.meta[r]->correct_letter);
    }
    return t;
}

inline double beta_from_rows(const EvalSet& e, const std::vector<std::size_t>& rows) {
    std::vector<Logits6> std_logits;
    for (auto r : rows)
        if (!e.meta[r]->split.misleading()) std_logits.push_back(e.logits[r]);
    return estimate_beta(std_logits);
}

namespace detail {

inline bool bal_tie(double a, double b) { return std::abs(a - b) <= 1e-9; }

// Higher balanced accuracy, then the gentler config: smaller delta, s, gamma,
// p, and larger alpha.
inline bool better_config(double bal_a, const PglaConfig& a, double bal_b, const PglaConfig& b) {
    if (!bal_tie(bal_a, bal_b)) return bal_a > bal_b;
    if (a.delta != b.delta) return a.delta < b.delta;
    if (a.s != b.s) return a.s < b.s;
    if (a.gamma != b.gamma) return a.gamma < b.gamma;
    if (a.p != b.p) return a.p < b.p;
    return a.alpha_thresh > b.alpha_thresh;
}

}  // namespace detail

struct FoldOutcome {
    int fold = 0;
    std::size_t config_index = 0;
    PglaConfig selected;
    double tune_bal = 0.0;
    SplitReport test;
    SplitReport test_baseline;
    std::size_t n_tune = 0;
    std::size_t n_test = 0;
};

struct ConfigMetrics {
    PglaConfig config;
    SplitReport report;
};

struct SweepResult {
    int k = 5;
    std::uint64_t seed = 0;
    std::vector<PglaConfig> grid;
    std::vector<FoldOutcome> folds;
    SplitReport test;           // pooled over held-out folds
    SplitReport test_baseline;  // unmodified logits, same samples
    double delta_bal = 0.0;
    double tune_test_gap = 0.0;      // mean over folds of tune bal - test bal
    double tune_test_gap_abs = 0.0;  // mean of |tune bal - test bal|
    // Whole evaluation set, beta from all its standard samples; feeds the Pareto selection.
    double beta_full = 0.0;
    SplitReport baseline_full;
    std::vector<ConfigMetrics> per_config;
};

inline SweepResult grid_sweep_cv(const Dataset& d, const std::vector<std::size_t>& eval_idx, const std::vector<double>& p_mis,
                                 const std::vector<std::string>& probe_videos, std::vector<PglaConfig> grid = default_grid(),
                                 int k = 5, std::uint64_t seed = 0, unsigned jobs = 1) {
    if (grid.empty()) fail(ErrorKind::Config, "empty PGLA grid");
    for (const auto& c : grid) c.validate();
    const auto e = make_eval_set(d, eval_idx, p_mis);
    const auto folds = make_folds(e.meta, k, seed);

    std::vector<std::string> eval_videos;
    for (const auto& [v, f] : folds.fold_of) eval_videos.push_back(v);
    assert_group_disjoint(probe_videos, eval_videos, "probe split vs evaluation folds");

    SweepResult res;
    res.k = k;
    res.seed = seed;
    res.grid = grid;
    std::vector<std::vector<std::size_t>> test_rows(static_cast<std::size_t>(k)), tune_rows(static_cast<std::size_t>(k));
    for (std::size_t r = 0; r < e.meta.size(); ++r) {
        const int f = folds.fold(e.meta[r]->video_id);
        for (int g = 0; g < k; ++g) (g == f ? test_rows : tune_rows)[static_cast<std::size_t>(g)].push_back(r);
    }
    for (int f = 0; f < k; ++f) assert_group_disjoint(folds.videos_in(f), [&] {
        std::vector<std::string> rest;
        for (int g = 0; g < k; ++g)
            if (g != f)
                for (auto& v : folds.videos_in(g)) rest.push_back(v);
        return rest;
    }(), "PGLA fold " + std::to_string(f));

    res.folds.resize(static_cast<std::size_t>(k));
    parallel_for(static_cast<std::size_t>(k), jobs, [&](std::size_t f) {
        const auto& tune = tune_rows[f];
        const auto& test = test_rows[f];
        const double beta = beta_from_rows(e, tune);
        std::size_t best = 0;
        double best_bal = -1.0;
        for (std::size_t c = 0; c < grid.size(); ++c) {
            auto cfg = grid[c];
            cfg.beta = beta;
            const double bal = score_rows(e, tune, cfg).report().bal();
            if (best_bal < 0 || detail::better_config(bal, grid[c], best_bal, grid[best])) {
                best = c;
                best_bal = bal;
            }
        }
        auto& out = res.folds[f];
        out.fold = static_cast<int>(f);
        out.config_index = best;
        out.selected = grid[best];
        out.selected.beta = beta;
        out.tune_bal = best_bal;
        out.test = score_rows(e, test, out.selected).report();
        out.test_baseline = score_rows(e, test, std::nullopt).report();
        out.n_tune = tune.size();
        out.n_test = test.size();
    });

    SplitTally pooled, pooled_base;
    for (const auto& fo : res.folds) {
        const auto& test = test_rows[static_cast<std::size_t>(fo.fold)];
        const auto t = score_rows(e, test, fo.selected);
        const auto b = score_rows(e, test, std::nullopt);
        for (std::size_t s = 0; s < 4; ++s) {
            pooled.hits[s] += t.hits[s];
            pooled.n[s] += t.n[s];
            pooled_base.hits[s] += b.hits[s];
            pooled_base.n[s] += b.n[s];
        }
        const double gap = fo.tune_bal - fo.test.bal();
        res.tune_test_gap += gap / k;
        res.tune_test_gap_abs += std::abs(gap) / k;
    }
    res.test = pooled.report();
    res.test_baseline = pooled_base.report();
    res.delta_bal = res.test.bal() - res.test_baseline.bal();

    std::vector<std::size_t> all(e.meta.size());
    for (std::size_t r = 0; r < all.size(); ++r) all[r] = r;
    res.beta_full = beta_from_rows(e, all);
    res.baseline_full = score_rows(e, all, std::nullopt).report();
    res.per_config.resize(grid.size());
    parallel_for(grid.size(), jobs, [&](std::size_t c) {
        auto cfg = grid[c];
        cfg.beta = res.beta_full;
        res.per_config[c] = {cfg, score_rows(e, all, cfg).report()};
    });
    return res;
}

// ---------------------------------------------------------------------------
// Budgeted selection

struct ParetoPoint {
    std::optional<double> budget_pp;       // nullopt: unconstrained
    std::optional<PglaConfig> config;      // nullopt: identity (gate off)
    double std_acc = 0.0;
    double mis_acc = 0.0;
    double bal_acc = 0.0;
    double delta_bal = 0.0;
    double std_loss = 0.0;
    bool identity_selected = false;
};

// The unmodified logits are always a feasible candidate, so the selected
// balanced accuracy never decreases as the budget loosens.
inline std::vector<ParetoPoint> pareto_curve(const SweepResult& sweep, const std::vector<std::optional<double>>& budgets) {
    const double base_std = sweep.baseline_full.std_mean();
    const double base_bal = sweep.baseline_full.bal();
    std::vector<ParetoPoint> out;
    for (const auto& budget : budgets) {
        ParetoPoint pt;
        pt.budget_pp = budget;
        pt.identity_selected = true;
        pt.std_acc = base_std;
        pt.mis_acc = sweep.baseline_full.mis_mean();
        pt.bal_acc = base_bal;
        for (std::size_t c = 0; c < sweep.per_config.size(); ++c) {
            const auto& r = sweep.per_config[c].report;
            const double loss = base_std - r.std_mean();
            if (budget && loss > *budget + 1e-9) continue;
            const double bal = r.bal();
            // identity wins ties against any config
            const bool wins = pt.config ? detail::better_config(bal, sweep.per_config[c].config, pt.bal_acc, *pt.config)
                                        : bal > pt.bal_acc + 1e-9;
            if (!wins) continue;
            pt.config = sweep.per_config[c].config;
            pt.identity_selected = false;
            pt.std_acc = r.std_mean();
            pt.mis_acc = r.mis_mean();
            pt.bal_acc = bal;
        }
        pt.std_loss = base_std - pt.std_acc;
        pt.delta_bal = pt.bal_acc - base_bal;
        out.push_back(pt);
    }
    return out;
}

inline nlohmann::json to_json(const ParetoPoint& p) {
    return {{"budget_pp", p.budget_pp ? nlohmann::json(*p.budget_pp) : nlohmann::json("unconstrained")},
            {"config", p.config ? to_json(*p.config) : nlohmann::json("identity")},
            {"std_acc", p.std_acc},
            {"mis_acc", p.mis_acc},
            {"bal_acc", p.bal_acc},
            {"delta_bal", p.delta_bal},
            {"std_loss", p.std_loss},
            {"fallback_identity", p.identity_selected}};
}

inline nlohmann::json to_json(const SweepResult& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds)
        folds.push_back({{"fold", f.fold},
                         {"config_index", f.config_index},
                         {"selected", to_json(f.selected)},
                         {"tune_bal", f.tune_bal},
                         {"test", to_json(f.test)},
                         {"test_baseline", to_json(f.test_baseline)},
                         {"n_tune", f.n_tune},
                         {"n_test", f.n_test}});
    return {{"k", r.k},
            {"seed", r.seed},
            {"grid_size", r.grid.size()},
            {"folds", folds},
            {"test", to_json(r.test)},
            {"test_baseline", to_json(r.test_baseline)},
            {"delta_bal", r.delta_bal},
            {"tune_test_gap", r.tune_test_gap},
            {"tune_test_gap_abs", r.tune_test_gap_abs},
            {"beta_full", r.beta_full},
            {"baseline_full", to_json(r.baseline_full)}};
}

// ---------------------------------------------------------------------------
// Enhanced probe: layer window + PCA + two MLPs, stacked with behavioral features

struct BehavioralFeatures {
    double gap = 0.0;          // best A-D minus best E/F
    double entropy = 0.0;      // of softmax over the six choice logits (nats)
    double ef_strength = 0.0;  // mean(E, F) - mean(A..D)
};

inline BehavioralFeatures behavioral_features(const Logits6& L) {
    BehavioralFeatures f;
    f.gap = rejection_gap(L);
    const double mx = *std::max_element(L.begin(), L.end());
    double z = 0.0;
    std::array<double, 6> e{};
    for (std::size_t i = 0; i < 6; ++i) z += e[i] = std::exp(L[i] - mx);
    for (std::size_t i = 0; i < 6; ++i) {
        const double p = e[i] / z;
        if (p > 0) f.entropy -= p * std::log(p);
    }
    f.ef_strength = (L[4] + L[5]) / 2.0 - (L[0] + L[1] + L[2] + L[3]) / 4.0;
    return f;
}

inline std::vector<std::size_t> layer_window(std::size_t layer, std::size_t n_layers, std::size_t radius = 2) {
    std::vector<std::size_t> w;
    const std::size_t lo = layer >= radius ? layer - radius : 0;
    const std::size_t hi = std::min(n_layers - 1, layer + radius);
    for (std::size_t l = lo; l <= hi; ++l) w.push_back(l);
    return w;
}

inline Mat window_matrix(const Dataset& d, const std::vector<std::size_t>& window, const std::vector<std::size_t>& rows) {
    const auto dh = static_cast<Eigen::Index>(d.shape.d_hidden);
    Mat X(static_cast<Eigen::Index>(rows.size()), dh * static_cast<Eigen::Index>(window.size()));
    for (std::size_t w = 0; w < window.size(); ++w) X.middleCols(dh * static_cast<Eigen::Index>(w), dh) = layer_matrix(d, window[w], rows);
    return X;
}

struct Pca {
    Standardizer scaler;
    Mat basis;  // D x r, orthonormal columns
    double retained = 0.0;

    static Pca fit(const Mat& X, double variance = 0.999) {
        Pca p;
        p.scaler = Standardizer::fit(X);
        const Mat Z = p.scaler.transform(X);
        const Eigen::BDCSVD<Mat> svd(Z, Eigen::ComputeThinV);
        const Vec s2 = svd.singularValues().array().square();
        const double total = s2.sum();
        Eigen::Index r = 0;
        double acc = 0.0;
        while (r < s2.size() && (total <= 0 || acc < variance * total)) acc += s2(r++);
        r = std::max<Eigen::Index>(r, 1);
        p.retained = total > 0 ? acc / total : 1.0;
        p.basis = svd.matrixV().leftCols(r);
        return p;
    }
    Mat transform(const Mat& X) const { return scaler.transform(X) * basis; }
};

struct EnhancedOptions {
    std::size_t radius = 2;
    double pca_variance = 0.999;
    MlpOptions multi;  // on PCA features
    MlpOptions deep;
    int stack_folds = 5;

    static EnhancedOptions defaults(std::uint64_t seed) {
        EnhancedOptions o;
        o.multi.hidden = {256};
        o.multi.seed = mix64(seed, 2);
        o.deep.hidden = {512, 512};
        o.deep.dropout = 0.2;
        o.deep.seed = mix64(seed, 3);
        return o;
    }
};

struct EnhancedBases {
    MlpProbe single;
    std::vector<std::size_t> window;
    Pca pca;
    Mlp multi;
    Mlp deep;

    Mat predict(const Dataset& d, const std::vector<std::size_t>& rows) const {
        Mat P(static_cast<Eigen::Index>(rows.size()), 3);
        const auto s = single.p_mis(d, rows);
        P.col(0) = Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size()));
        const Mat F = pca.transform(window_matrix(d, window, rows));
        P.col(1) = multi.predict_proba(F);
        P.col(2) = deep.predict_proba(F);
        return P;
    }
};

inline EnhancedBases fit_enhanced_bases(const Dataset& d, std::size_t layer, const std::vector<std::size_t>& rows, std::uint64_t seed,
                                        const EnhancedOptions& opt) {
    EnhancedBases b;
    const auto y = misleading_labels(d.manifest, rows);
    b.single.layer = static_cast<int>(layer);
    b.single.train_seed = seed;
    b.single.model = Mlp::train(layer_matrix(d, layer, rows), y, default_probe_mlp(seed));
    b.window = layer_window(layer, d.shape.n_layers, opt.radius);
    b.pca = Pca::fit(window_matrix(d, b.window, rows), opt.pca_variance);
    const Mat F = b.pca.transform(window_matrix(d, b.window, rows));
    b.multi = Mlp::train(F, y, opt.multi);
    b.deep = Mlp::train(F, y, opt.deep);
    return b;
}

inline Mat stacker_inputs(const Dataset& d, const Mat& base_probs, const std::vector<std::size_t>& rows) {
    Mat S(base_probs.rows(), 6);
    S.leftCols(3) = base_probs;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto f = behavioral_features(logits_of(d.bundles[rows[r]]));
        const auto i = static_cast<Eigen::Index>(r);
        S(i, 3) = f.gap;
        S(i, 4) = f.entropy;
        S(i, 5) = f.ef_strength;
    }
    return S;
}

inline const std::vector<std::string>& stacker_feature_names() {
    static const std::vector<std::string> names{"p_single", "p_multi", "p_deep", "gap", "entropy", "ef_strength"};
    return names;
}

struct EnhancedProbe {
    int layer = 0;
    EnhancedBases bases;
    LogisticModel stacker;
    std::uint64_t seed = 0;
    std::vector<std::string> train_videos;

    std::vector<double> p_mis(const Dataset& d, const std::vector<std::size_t>& idx) const {
        const Vec p = stacker.predict_proba(stacker_inputs(d, bases.predict(d, idx), idx));
        return {p.data(), p.data() + p.size()};
    }
};

// Base models see grouped out-of-fold data only when producing the stacker's
// training inputs; the final bases are refit on the whole probe split.
inline EnhancedProbe train_enhanced_probe(const Dataset& d, std::size_t layer, const ProbeEvalSplit& split, std::uint64_t seed,
                                          std::optional<EnhancedOptions> options = std::nullopt) {
    if (layer >= d.shape.n_layers) fail(ErrorKind::Shape, "layer " + std::to_string(layer) + " out of range");
    const auto opt = options.value_or(EnhancedOptions::defaults(seed));
    const auto& rows = split.probe_idx;
    std::vector<const SampleMeta*> meta;
    for (auto i : rows) meta.push_back(&d.manifest.samples[i]);
    const auto inner = make_folds(meta, opt.stack_folds, mix64(seed, 0x57AC));

    Mat oof(static_cast<Eigen::Index>(rows.size()), 3);
    for (int f = 0; f < opt.stack_folds; ++f) {
        std::vector<std::size_t> tr, te, te_pos;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (inner.fold(meta[r]->video_id) == f) {
                te.push_back(rows[r]);
                te_pos.push_back(r);
            } else {
                tr.push_back(rows[r]);
            }
        }
        if (te.empty()) continue;
        const auto b = fit_enhanced_bases(d, layer, tr, mix64(seed, static_cast<std::uint64_t>(f) + 10), opt);
        const Mat P = b.predict(d, te);
        for (std::size_t i = 0; i < te.size(); ++i) oof.row(static_cast<Eigen::Index>(te_pos[i])) = P.row(static_cast<Eigen::Index>(i));
    }

    EnhancedProbe ep;
    ep.layer = static_cast<int>(layer);
    ep.seed = seed;
    ep.train_videos = split.probe_videos;
    ep.stacker = LogisticModel::train(stacker_inputs(d, oof, rows), misleading_labels(d.manifest, rows));
    ep.bases = fit_enhanced_bases(d, layer, rows, seed, opt);
    return ep;
}

}  // namespace gapdiag
