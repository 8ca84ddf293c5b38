#pragma once

// Scoring and resampling statistics: per-split accuracy and balanced accuracy,
// bootstrap intervals, paired bootstrap tests, the option-shuffle protocol,
// consistency and temporal breakdowns, interference deltas, judge metrics.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/checksum.hpp"
#include "gapdiag/folds.hpp"
#include "gapdiag/logistic.hpp"
#include "gapdiag/parallel.hpp"
#include "gapdiag/rng.hpp"

namespace gapdiag {

// Rounds to one decimal, halves away from zero. The nudge absorbs binary
// representation error in values such as 37.35.
inline double round1(double x) {
    const double scaled = x * 10.0;
    return std::round(scaled + (scaled >= 0 ? 1e-9 : -1e-9)) / 10.0;
}

// acc in std_v, std_a, mis_v, mis_a order.
inline double balanced_accuracy(const std::array<double, 4>& acc) {
    return ((acc[0] + acc[1]) / 2.0 + (acc[2] + acc[3]) / 2.0) / 2.0;
}

inline double balanced_accuracy(const std::map<std::string, double>& acc) {
    std::array<double, 4> a{};
    for (std::size_t s = 0; s < 4; ++s) {
        const auto it = acc.find(std::string(kSplitNames[s]));
        if (it == acc.end()) fail(ErrorKind::MissingSplit, "missing split " + std::string(kSplitNames[s]));
        a[s] = it->second;
    }
    return balanced_accuracy(a);
}

struct SplitReport {
    std::array<std::optional<double>, 4> acc;  // percentages
    std::array<std::size_t, 4> n{};

    bool complete() const {
        return std::all_of(acc.begin(), acc.end(), [](const auto& a) { return a.has_value(); });
    }
    double get(int split) const {
        const auto& a = acc[static_cast<std::size_t>(split)];
        if (!a) fail(ErrorKind::MissingSplit, "report has no " + std::string(kSplitNames[static_cast<std::size_t>(split)]) + " accuracy");
        return *a;
    }
    double bal() const { return balanced_accuracy(std::array<double, 4>{get(0), get(1), get(2), get(3)}); }
    double std_mean() const { return (get(0) + get(1)) / 2.0; }
    double mis_mean() const { return (get(2) + get(3)) / 2.0; }
};

// Counts hits per split.
struct SplitTally {
    std::array<std::size_t, 4> hits{};
    std::array<std::size_t, 4> n{};

    void add(const SplitLabel& s, bool correct) {
        const auto i = static_cast<std::size_t>(s.index());
        ++n[i];
        if (correct) ++hits[i];
    }
    SplitReport report() const {
        SplitReport r;
        r.n = n;
        for (std::size_t s = 0; s < 4; ++s)
            if (n[s] > 0) r.acc[s] = 100.0 * static_cast<double>(hits[s]) / static_cast<double>(n[s]);
        return r;
    }
};

inline nlohmann::json to_json(const SplitReport& r) {
    nlohmann::json j;
    for (std::size_t s = 0; s < 4; ++s) {
        const std::string name(kSplitNames[s]);
        j["acc"][name] = r.acc[s] ? nlohmann::json(*r.acc[s]) : nlohmann::json(nullptr);
        j["acc_rounded"][name] = r.acc[s] ? nlohmann::json(round1(*r.acc[s])) : nlohmann::json(nullptr);
        j["n"][name] = r.n[s];
    }
    if (r.complete()) {
        j["bal"] = r.bal();
        j["bal_rounded"] = round1(r.bal());
    } else {
        j["bal"] = nullptr;
    }
    return j;
}

// Accepts {"acc": {split: value}} or the four split keys at top level.
inline SplitReport split_report_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorKind::Schema, "split report must be an object");
    const auto& src = j.contains("acc") ? j.at("acc") : j;
    SplitReport r;
    for (std::size_t s = 0; s < 4; ++s) {
        const std::string name(kSplitNames[s]);
        if (src.contains(name) && src.at(name).is_number()) r.acc[s] = src.at(name).get<double>();
        if (j.contains("n") && j.at("n").contains(name)) r.n[s] = j.at("n").at(name).get<std::size_t>();
    }
    return r;
}

// Area under the ROC curve via mid-ranks (ties count one half).
inline double roc_auc(const std::vector<double>& score, const std::vector<int>& label) {
    if (score.size() != label.size()) fail(ErrorKind::Shape, "score and label lengths differ");
    std::vector<std::size_t> order(score.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    std::vector<double> rank(score.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && score[order[j + 1]] == score[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double n_pos = 0, n_neg = 0, rsum = 0;
    for (std::size_t i = 0; i < label.size(); ++i) {
        if (label[i]) {
            n_pos += 1;
            rsum += rank[i];
        } else {
            n_neg += 1;
        }
    }
    if (n_pos == 0 || n_neg == 0) fail(ErrorKind::DegenerateLabels, "AUC needs both classes");
    return (rsum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);
}

// ---------------------------------------------------------------------------
// Bootstrap

struct BootstrapCi {
    double lo = 0.0;
    double hi = 0.0;
    double mean = 0.0;
    std::size_t B = 0;
    double level = 0.95;
    std::uint64_t seed = 0;
};

namespace detail {

// Linear interpolation between order statistics.
inline double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) return 0.0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + (v[hi] - v[lo]) * frac;
}

inline std::vector<double> resample_means(const std::vector<double>& x, std::size_t B, std::uint64_t seed, unsigned jobs) {
    std::vector<double> means(B);
    const std::size_t n = x.size();
    parallel_for(B, jobs, [&](std::size_t b) {
        Stream rs(seed, {0xB007, b});
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += x[rs.below(n)];
        means[b] = sum / static_cast<double>(n);
    });
    return means;
}

}  // namespace detail

// Percentile interval of the resampled mean, in the units of x.
inline BootstrapCi bootstrap_mean_ci(const std::vector<double>& x, std::size_t B = 10000, double level = 0.95, std::uint64_t seed = 0,
                                     unsigned jobs = 1) {
    if (x.empty()) fail(ErrorKind::EmptyInput, "bootstrap needs at least one observation");
    if (B == 0) fail(ErrorKind::Config, "bootstrap needs B > 0");
    if (!(level > 0 && level < 1)) fail(ErrorKind::Config, "confidence level must be in (0, 1)");
    auto means = detail::resample_means(x, B, seed, jobs);
    std::sort(means.begin(), means.end());
    BootstrapCi ci;
    ci.B = B;
    ci.level = level;
    ci.seed = seed;
    double s = 0.0;
    for (double v : x) s += v;
    ci.mean = s / static_cast<double>(x.size());
    ci.lo = detail::quantile_sorted(means, (1.0 - level) / 2.0);
    ci.hi = detail::quantile_sorted(means, (1.0 + level) / 2.0);
    return ci;
}

// Per-sample 0/1 correctness; the interval is in percent.
inline BootstrapCi bootstrap_ci(const std::vector<int>& correct, std::size_t B = 10000, double level = 0.95, std::uint64_t seed = 0,
                                unsigned jobs = 1) {
    std::vector<double> x;
    x.reserve(correct.size());
    for (int c : correct) x.push_back(c ? 100.0 : 0.0);
    return bootstrap_mean_ci(x, B, level, seed, jobs);
}

struct PairedTest {
    double p = 1.0;  // fraction of resamples with mean <= 0
    std::size_t B = 0;
    std::size_t at_or_below_zero = 0;
    double observed_mean = 0.0;
    std::uint64_t seed = 0;

    bool below_resolution() const { return at_or_below_zero == 0; }
    std::string str() const {
        if (below_resolution()) return "p<1/" + std::to_string(B);
        char buf[32];
        std::snprintf(buf, sizeof buf, "p=%.4f", p);
        return buf;
    }
};

inline PairedTest paired_bootstrap_p(const std::vector<double>& diffs, std::size_t B = 10000, std::uint64_t seed = 0,
                                     unsigned jobs = 1) {
    if (diffs.empty()) fail(ErrorKind::EmptyInput, "paired bootstrap needs at least one difference");
    if (B == 0) fail(ErrorKind::Config, "bootstrap needs B > 0");
    const auto means = detail::resample_means(diffs, B, seed, jobs);
    PairedTest t;
    t.B = B;
    t.seed = seed;
    for (double m : means)
        if (m <= 0.0) ++t.at_or_below_zero;
    t.p = static_cast<double>(t.at_or_below_zero) / static_cast<double>(B);
    double s = 0.0;
    for (double d : diffs) s += d;
    t.observed_mean = s / static_cast<double>(diffs.size());
    return t;
}

// ---------------------------------------------------------------------------
// Option shuffling

// order[i] is the original option shown at displayed position i.
struct Permutation6 {
    std::array<int, 6> order{0, 1, 2, 3, 4, 5};
    std::uint64_t seed = 0;

    int position_of(int original) const {
        for (int i = 0; i < 6; ++i)
            if (order[static_cast<std::size_t>(i)] == original) return i;
        fail(ErrorKind::Shape, "letter index out of range");
    }
    int original_at(int position) const { return order.at(static_cast<std::size_t>(position)); }
    std::string str() const {
        std::string s;
        for (int o : order) s.push_back(letter_char(o));
        return s;
    }
};

inline std::string shuffle_key(std::string_view video_id, char correct_answer, std::uint64_t shuffle_id) {
    return std::string(video_id) + "|" + std::string(1, correct_answer) + "|" + std::to_string(shuffle_id);
}

inline std::uint64_t shuffle_seed(std::string_view video_id, char correct_answer, std::uint64_t shuffle_id) {
    const auto d = md5(shuffle_key(video_id, correct_answer, shuffle_id));
    std::uint64_t s = 0;
    for (int i = 0; i < 8; ++i) s = (s << 8) | d[static_cast<std::size_t>(i)];
    return s;
}

inline Permutation6 shuffle_permutation(std::string_view video_id, char correct_answer, std::uint64_t shuffle_id) {
    Permutation6 p;
    p.seed = shuffle_seed(video_id, correct_answer, shuffle_id);
    std::uint64_t state = p.seed;
    for (int i = 5; i >= 1; --i) {
        const auto j = static_cast<int>(splitmix64_next(state) % static_cast<std::uint64_t>(i + 1));
        std::swap(p.order[static_cast<std::size_t>(i)], p.order[static_cast<std::size_t>(j)]);
    }
    return p;
}

// Last standalone letter A-F in a model response.
inline std::optional<int> extract_letter(std::string_view text) {
    auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    for (std::size_t i = text.size(); i-- > 0;) {
        const char c = text[i];
        if (c < 'A' || c > 'F') continue;
        const bool left = i == 0 || !word(text[i - 1]);
        const bool right = i + 1 == text.size() || !word(text[i + 1]);
        if (left && right) return c - 'A';
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Prediction files
//
// {"format_version": 1, "shuffle_id": 0 (optional), "letter_space": "original"|"displayed",
//  "predictions": [{"sample_id": "...", "prediction": "C"} | {"sample_id": "...", "response": "..."}]}
// A missing or unparseable prediction counts as wrong. Displayed-space letters
// are mapped back through the sample's shuffle permutation on load.

struct PredictionSet {
    std::optional<std::uint64_t> shuffle_id;
    std::string letter_space = "original";
    std::map<std::string, std::optional<int>> pred;  // sample_id -> original letter
};

inline PredictionSet predictions_from_json(const nlohmann::json& j, const Manifest& m) {
    if (!j.is_object() || !j.contains("predictions") || !j.at("predictions").is_array())
        fail(ErrorKind::Schema, "prediction file needs a 'predictions' array");
    if (j.value("format_version", 1) != 1) fail(ErrorKind::Schema, "unsupported prediction format_version");
    PredictionSet ps;
    if (j.contains("shuffle_id") && !j.at("shuffle_id").is_null()) ps.shuffle_id = j.at("shuffle_id").get<std::uint64_t>();
    ps.letter_space = j.value("letter_space", std::string("original"));
    if (ps.letter_space != "original" && ps.letter_space != "displayed")
        fail(ErrorKind::Schema, "letter_space must be 'original' or 'displayed'");
    if (ps.letter_space == "displayed" && !ps.shuffle_id) fail(ErrorKind::Schema, "displayed letters need a shuffle_id");

    std::map<std::string, const SampleMeta*> by_id;
    for (const auto& s : m.samples) by_id[s.sample_id] = &s;
    for (const auto& r : j.at("predictions")) {
        if (!r.contains("sample_id") || !r.at("sample_id").is_string()) fail(ErrorKind::Schema, "prediction record without sample_id");
        const auto id = r.at("sample_id").get<std::string>();
        const auto it = by_id.find(id);
        if (it == by_id.end()) fail(ErrorKind::MissingMeta, "prediction for unknown sample " + id);
        if (ps.pred.count(id)) fail(ErrorKind::Schema, "duplicate prediction for " + id);
        std::optional<int> letter;
        if (r.contains("prediction") && r.at("prediction").is_string()) {
            const auto p = r.at("prediction").get<std::string>();
            if (p.size() == 1 && p[0] >= 'A' && p[0] <= 'F') letter = p[0] - 'A';
        } else if (r.contains("response") && r.at("response").is_string()) {
            letter = extract_letter(r.at("response").get<std::string>());
        }
        if (letter && ps.letter_space == "displayed") {
            const auto& s = *it->second;
            letter = shuffle_permutation(s.video_id, letter_char(s.correct_letter), *ps.shuffle_id).original_at(*letter);
        }
        ps.pred[id] = letter;
    }
    return ps;
}

struct ScoredSamples {
    std::vector<const SampleMeta*> meta;
    std::vector<int> correct;
};

// Samples without a prediction count as wrong.
inline ScoredSamples score_predictions(const Manifest& m, const PredictionSet& ps) {
    ScoredSamples out;
    for (const auto& s : m.samples) {
        const auto it = ps.pred.find(s.sample_id);
        const bool ok = it != ps.pred.end() && it->second && *it->second == s.correct_letter;
        out.meta.push_back(&s);
        out.correct.push_back(ok ? 1 : 0);
    }
    return out;
}

inline SplitReport split_report(const ScoredSamples& sc) {
    SplitTally t;
    for (std::size_t i = 0; i < sc.meta.size(); ++i) t.add(sc.meta[i]->split, sc.correct[i] != 0);
    return t.report();
}

// ---------------------------------------------------------------------------
// Consistency across shuffles

struct ConsistencyCounts {
    std::size_t n = 0;
    std::size_t never = 0;
    std::size_t always = 0;
    std::size_t sometimes = 0;
};

struct ConsistencyReport {
    std::size_t K = 0;
    ConsistencyCounts overall;
    std::array<ConsistencyCounts, 4> per_split;
};

// correct_by_shuffle[k][i]: sample i answered correctly under shuffle k.
inline ConsistencyReport consistency_analysis(const std::vector<std::vector<int>>& correct_by_shuffle,
                                              const std::vector<SplitLabel>& splits) {
    if (correct_by_shuffle.empty()) fail(ErrorKind::EmptyInput, "consistency analysis needs at least one shuffle");
    for (const auto& v : correct_by_shuffle)
        if (v.size() != splits.size()) fail(ErrorKind::ShuffleCountMismatch, "shuffle prediction sets cover different sample counts");
    ConsistencyReport r;
    r.K = correct_by_shuffle.size();
    for (std::size_t i = 0; i < splits.size(); ++i) {
        std::size_t hits = 0;
        for (const auto& v : correct_by_shuffle) hits += v[i] ? 1 : 0;
        auto bump = [&](ConsistencyCounts& c) {
            ++c.n;
            if (hits == 0) ++c.never;
            else if (hits == r.K) ++c.always;
            else ++c.sometimes;
        };
        bump(r.overall);
        bump(r.per_split[static_cast<std::size_t>(splits[i].index())]);
    }
    return r;
}

// Every set must cover exactly the same sample ids.
inline ConsistencyReport consistency_analysis(const std::vector<PredictionSet>& sets, const Manifest& m) {
    if (sets.empty()) fail(ErrorKind::EmptyInput, "consistency analysis needs at least one prediction set");
    std::vector<std::vector<int>> correct;
    std::vector<SplitLabel> splits;
    std::vector<const SampleMeta*> covered;
    for (const auto& s : m.samples)
        if (sets.front().pred.count(s.sample_id)) covered.push_back(&s);
    for (const auto& ps : sets) {
        if (ps.pred.size() != covered.size()) fail(ErrorKind::ShuffleCountMismatch, "prediction sets cover different samples");
        std::vector<int> c;
        for (const auto* s : covered) {
            const auto it = ps.pred.find(s->sample_id);
            if (it == ps.pred.end()) fail(ErrorKind::ShuffleCountMismatch, "sample " + s->sample_id + " missing from a shuffle");
            c.push_back(it->second && *it->second == s->correct_letter ? 1 : 0);
        }
        correct.push_back(std::move(c));
    }
    for (const auto* s : covered) splits.push_back(s->split);
    return consistency_analysis(correct, splits);
}

inline nlohmann::json to_json(const ConsistencyCounts& c) {
    auto pct = [&](std::size_t k) { return c.n ? 100.0 * static_cast<double>(k) / static_cast<double>(c.n) : 0.0; };
    return {{"n", c.n}, {"never_pct", pct(c.never)}, {"always_pct", pct(c.always)}, {"sometimes_pct", pct(c.sometimes)}};
}

inline nlohmann::json to_json(const ConsistencyReport& r) {
    nlohmann::json j{{"K", r.K}, {"overall", to_json(r.overall)}};
    for (std::size_t s = 0; s < 4; ++s) j["per_split"][std::string(kSplitNames[s])] = to_json(r.per_split[s]);
    return j;
}

// ---------------------------------------------------------------------------
// Temporal breakdown

inline constexpr std::array<const char*, 3> kDurationBins{"short", "medium", "long"};
inline constexpr std::array<const char*, 3> kPositionBins{"early", "middle", "late"};

// [60,100) short, [100,180) medium, [180,300] long; values outside the nominal
// range fall into the nearest end bin so every sample lands in exactly one.
inline int duration_bin(double d) { return d < 100.0 ? 0 : d < 180.0 ? 1 : 2; }
inline int position_bin(double ratio) { return ratio < 0.33 ? 0 : ratio < 0.66 ? 1 : 2; }

inline double position_ratio(const SampleMeta& s) {
    if (!(s.duration_s > 0)) fail(ErrorKind::MissingMeta, "sample " + s.sample_id + " has no usable duration");
    return s.answer_ts_start_s / s.duration_s;
}

struct StratReport {
    std::array<SplitTally, 3> by_duration;
    std::array<SplitTally, 3> by_position;
    std::size_t n = 0;
};

inline StratReport temporal_stratify(const ScoredSamples& sc) {
    StratReport r;
    for (std::size_t i = 0; i < sc.meta.size(); ++i) {
        const auto& s = *sc.meta[i];
        const bool ok = sc.correct[i] != 0;
        r.by_duration[static_cast<std::size_t>(duration_bin(s.duration_s))].add(s.split, ok);
        r.by_position[static_cast<std::size_t>(position_bin(position_ratio(s)))].add(s.split, ok);
        ++r.n;
    }
    return r;
}

inline nlohmann::json to_json(const StratReport& r) {
    nlohmann::json j{{"n", r.n},
                     {"duration_bins", {{"short", "[60,100)"}, {"medium", "[100,180)"}, {"long", "[180,300]"}}},
                     {"position_bins", {{"early", "[0,0.33)"}, {"middle", "[0.33,0.66)"}, {"late", "[0.66,1]"}}}};
    for (std::size_t b = 0; b < 3; ++b) {
        j["by_duration"][kDurationBins[b]] = to_json(r.by_duration[b].report());
        j["by_position"][kPositionBins[b]] = to_json(r.by_position[b].report());
    }
    return j;
}

struct DiagnosticReport {
    std::vector<std::string> features{"is_misleading", "is_audio", "duration_z", "position_ratio"};
    std::vector<double> coefficients;  // standardized
    std::vector<double> fold_acc;
    double cv_acc_mean = 0.0;
    double cv_acc_std = 0.0;
    double majority_rate = 0.0;
    int k = 5;
    std::uint64_t seed = 0;
};

inline DiagnosticReport temporal_logit_diagnostic(const ScoredSamples& sc, int k = 5, std::uint64_t seed = 0) {
    const auto n = static_cast<Eigen::Index>(sc.meta.size());
    if (n == 0) fail(ErrorKind::EmptyInput, "no scored samples");
    Mat X(n, 4);
    double dmean = 0.0;
    for (const auto* s : sc.meta) dmean += s->duration_s;
    dmean /= static_cast<double>(n);
    double dvar = 0.0;
    for (const auto* s : sc.meta) dvar += (s->duration_s - dmean) * (s->duration_s - dmean);
    const double dsd = std::sqrt(dvar / static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = *sc.meta[static_cast<std::size_t>(i)];
        X(i, 0) = s.split.misleading() ? 1.0 : 0.0;
        X(i, 1) = s.split.modality == Modality::audio ? 1.0 : 0.0;
        X(i, 2) = dsd > 0 ? (s.duration_s - dmean) / dsd : 0.0;
        X(i, 3) = position_ratio(s);
    }
    const auto pos = std::count(sc.correct.begin(), sc.correct.end(), 1);
    if (pos == 0 || pos == static_cast<long>(sc.correct.size()))
        fail(ErrorKind::DegenerateLabels, "correctness is constant; nothing to explain");

    DiagnosticReport r;
    r.k = k;
    r.seed = seed;
    r.majority_rate = 100.0 * static_cast<double>(std::max<long>(pos, n - pos)) / static_cast<double>(n);
    const auto full = LogisticModel::train(X, sc.correct);
    r.coefficients.assign(full.fit.w.data(), full.fit.w.data() + full.fit.w.size());

    const auto folds = make_folds(sc.meta, k, seed);
    for (int f = 0; f < k; ++f) {
        std::vector<Eigen::Index> tr, te;
        for (Eigen::Index i = 0; i < n; ++i) (folds.fold(sc.meta[static_cast<std::size_t>(i)]->video_id) == f ? te : tr).push_back(i);
        if (te.empty()) continue;
        std::vector<int> ytr, yte;
        for (auto i : tr) ytr.push_back(sc.correct[static_cast<std::size_t>(i)]);
        for (auto i : te) yte.push_back(sc.correct[static_cast<std::size_t>(i)]);
        const Mat Xtr = X(tr, Eigen::all), Xte = X(te, Eigen::all);
        const auto trpos = std::count(ytr.begin(), ytr.end(), 1);
        std::vector<int> pred;
        if (trpos == 0 || trpos == static_cast<long>(ytr.size())) {
            pred.assign(yte.size(), trpos == 0 ? 0 : 1);  // constant training labels: predict that constant
        } else {
            pred = LogisticModel::train(Xtr, ytr).predict(Xte);
        }
        std::size_t hits = 0;
        for (std::size_t i = 0; i < yte.size(); ++i) hits += pred[i] == yte[i] ? 1 : 0;
        r.fold_acc.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(yte.size()));
    }
    double s = 0.0, ss = 0.0;
    for (double a : r.fold_acc) s += a;
    r.cv_acc_mean = s / static_cast<double>(r.fold_acc.size());
    for (double a : r.fold_acc) ss += (a - r.cv_acc_mean) * (a - r.cv_acc_mean);
    r.cv_acc_std = r.fold_acc.size() > 1 ? std::sqrt(ss / static_cast<double>(r.fold_acc.size() - 1)) : 0.0;
    return r;
}

inline nlohmann::json to_json(const DiagnosticReport& r) {
    nlohmann::json coef;
    for (std::size_t i = 0; i < r.features.size(); ++i) coef[r.features[i]] = r.coefficients[i];
    return {{"features", r.features},     {"standardized_coefficients", coef}, {"k", r.k},
            {"seed", r.seed},             {"fold_acc", r.fold_acc},            {"cv_acc_mean", r.cv_acc_mean},
            {"cv_acc_std", r.cv_acc_std}, {"majority_rate_pct", r.majority_rate}};
}

// ---------------------------------------------------------------------------

enum class Direction { audio_to_vision, vision_to_audio };

inline Direction parse_direction(const std::string& s) {
    if (s == "A->V" || s == "a2v" || s == "audio_to_vision") return Direction::audio_to_vision;
    if (s == "V->A" || s == "v2a" || s == "vision_to_audio") return Direction::vision_to_audio;
    fail(ErrorKind::Usage, "unknown direction '" + s + "' (A->V|V->A)");
}

// A->V = mis_v(vision only) - mis_v(audio-visual); V->A likewise on mis_a.
inline double interference_delta(const SplitReport& av, const SplitReport& single, Direction dir) {
    const int split = dir == Direction::audio_to_vision ? 2 : 3;
    return single.get(split) - av.get(split);
}

struct JudgeRecord {
    bool pred_correct = false;
    bool extraction_correct = false;
    bool explanation_correct = false;
};

struct JudgeReport {
    std::size_t n = 0;
    double p_acc = 0.0;
    double e_acc = 0.0;
    double right_right = 0.0;
    double right_wrong = 0.0;
    double wrong_right = 0.0;
    double extraction_acc = 0.0;
};

inline JudgeReport judge_aggregate(const std::vector<JudgeRecord>& recs) {
    if (recs.empty()) fail(ErrorKind::EmptyInput, "judge aggregation needs at least one record");
    JudgeReport r;
    r.n = recs.size();
    std::size_t p = 0, e = 0, rr = 0, rw = 0, wr = 0, x = 0;
    for (const auto& c : recs) {
        p += c.pred_correct;
        e += c.explanation_correct;
        rr += c.pred_correct && c.explanation_correct;
        rw += c.pred_correct && !c.explanation_correct;
        wr += !c.pred_correct && c.explanation_correct;
        x += c.extraction_correct;
    }
    const double n = static_cast<double>(r.n);
    r.p_acc = 100.0 * static_cast<double>(p) / n;
    r.e_acc = 100.0 * static_cast<double>(e) / n;
    r.right_right = 100.0 * static_cast<double>(rr) / n;
    r.right_wrong = 100.0 * static_cast<double>(rw) / n;
    r.wrong_right = 100.0 * static_cast<double>(wr) / n;
    r.extraction_acc = 100.0 * static_cast<double>(x) / n;
    return r;
}

inline std::vector<JudgeRecord> judge_records_from_json(const nlohmann::json& j) {
    const auto& arr = j.is_object() && j.contains("records") ? j.at("records") : j;
    if (!arr.is_array()) fail(ErrorKind::Schema, "judge input must be an array of records");
    std::vector<JudgeRecord> out;
    for (const auto& r : arr) {
        for (const char* k : {"pred_correct", "extraction_correct", "explanation_correct"})
            if (!r.contains(k) || !r.at(k).is_boolean()) fail(ErrorKind::Schema, std::string("judge record needs boolean '") + k + "'");
        out.push_back({r.at("pred_correct").get<bool>(), r.at("extraction_correct").get<bool>(), r.at("explanation_correct").get<bool>()});
    }
    return out;
}

inline nlohmann::json to_json(const JudgeReport& r) {
    return {{"n", r.n},         {"P-Acc", r.p_acc},       {"E-Acc", r.e_acc},           {"R+R", r.right_right},
            {"R+W", r.right_wrong}, {"W+R", r.wrong_right}, {"extraction_acc", r.extraction_acc}};
}

}  // namespace gapdiag
