#pragma once

// Logit lens: intermediate hidden states pushed through the final RMSNorm and
// the unembedding matrix, read out as correct-token probabilities per layer.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/parallel.hpp"

namespace gapdiag {

inline std::vector<double> rmsnorm(std::span<const double> h, std::span<const double> g, double eps) {
    if (h.size() != g.size()) fail(ErrorKind::Shape, "rmsnorm: h and g lengths differ");
    if (eps < 0) fail(ErrorKind::Config, "rmsnorm: eps must be non-negative");
    double ms = 0.0;
    for (double v : h) ms += v * v;
    ms /= static_cast<double>(std::max<std::size_t>(h.size(), 1));
    const double denom = std::sqrt(ms + eps);
    std::vector<double> y(h.size(), 0.0);
    if (denom == 0.0) return y;
    for (std::size_t i = 0; i < h.size(); ++i) y[i] = h[i] / denom * g[i];
    return y;
}

inline std::vector<double> softmax(std::span<const double> z) {
    std::vector<double> p(z.size());
    if (z.empty()) return p;
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp(z[i] - mx);
    for (auto& v : p) v /= sum;
    return p;
}

inline std::vector<double> lens_project(std::span<const double> h, const ModelAssets& a) {
    if (h.size() != a.d_hidden) fail(ErrorKind::Shape, "lens_project: hidden size does not match assets");
    if (a.norm_weights.size() != a.d_hidden || a.unembed.size() != static_cast<std::size_t>(a.vocab_size) * a.d_hidden)
        fail(ErrorKind::Shape, "lens_project: malformed assets");
    const std::vector<double> g(a.norm_weights.begin(), a.norm_weights.end());
    const auto y = rmsnorm(h, g, a.norm_eps);
    std::vector<double> z(a.vocab_size, 0.0);
    for (std::size_t k = 0; k < a.vocab_size; ++k) {
        const float* row = a.unembed.data() + k * a.d_hidden;
        double acc = 0.0;
        for (std::size_t j = 0; j < a.d_hidden; ++j) acc += static_cast<double>(row[j]) * y[j];
        z[k] = acc;
    }
    return z;
}

inline std::vector<double> lens_project(std::span<const float> h, const ModelAssets& a) {
    const std::vector<double> hd(h.begin(), h.end());
    return lens_project(std::span<const double>(hd), a);
}

struct LensThresholds {
    double bottleneck_peak = 0.6;   // mid-stack standard-split peak above this
    double misaligned_ceiling = 0.05;  // every layer/split mean below this
};

struct LensTrajectory {
    std::size_t n_layers = 0;
    std::vector<std::string> sample_ids;
    std::vector<std::vector<double>> per_layer_prob;           // [layer][sample]
    std::array<std::vector<double>, 4> split_mean;             // [split][layer]
    std::array<std::size_t, 4> split_count{};
    std::array<std::pair<int, double>, 4> per_split_peak{};    // (layer, mean prob)
    double max_normalization_error = 0.0;                      // |sum softmax - 1| on checked samples
    std::size_t normalization_checked = 0;
    std::string regime;
    LensThresholds thresholds;
};

inline std::string classify_regime(const LensTrajectory& t) {
    bool all_low = true;
    double std_mid_peak = 0.0;
    for (int s = 0; s < 4; ++s) {
        if (t.split_count[static_cast<std::size_t>(s)] == 0) continue;
        const auto& m = t.split_mean[static_cast<std::size_t>(s)];
        for (std::size_t l = 0; l < m.size(); ++l) {
            if (m[l] >= t.thresholds.misaligned_ceiling) all_low = false;
            if (s < 2 && l + 1 < m.size()) std_mid_peak = std::max(std_mid_peak, m[l]);
        }
    }
    if (std_mid_peak > t.thresholds.bottleneck_peak) return "translation_bottleneck";
    if (all_low) return "unembedding_misaligned";
    return "neither";
}

// check_every: softmax normalization is verified on every check_every-th sample.
inline LensTrajectory lens_trajectory(const Dataset& d, const ModelAssets* assets, unsigned jobs = 1, std::size_t check_every = 16,
                                      LensThresholds thresholds = {}) {
    if (!assets) fail(ErrorKind::MissingAssets, "logit lens needs model assets (norm weights and unembedding)");
    if (assets->d_hidden != d.shape.d_hidden) fail(ErrorKind::Shape, "assets d_hidden does not match bundles");
    const auto& samples = d.manifest.samples;
    std::vector<std::uint32_t> tok(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto it = assets->correct_token_ids.find(samples[i].sample_id);
        if (it == assets->correct_token_ids.end()) fail(ErrorKind::MissingAssets, "no correct token id for " + samples[i].sample_id);
        if (it->second >= assets->vocab_size) fail(ErrorKind::Shape, "token id out of vocabulary for " + samples[i].sample_id);
        tok[i] = it->second;
    }

    LensTrajectory t;
    t.thresholds = thresholds;
    t.n_layers = d.shape.n_layers;
    t.per_layer_prob.assign(t.n_layers, std::vector<double>(samples.size(), 0.0));
    std::vector<double> norm_err(samples.size(), 0.0);
    parallel_for(samples.size(), jobs, [&](std::size_t i) {
        const bool check = check_every > 0 && i % check_every == 0;
        for (std::size_t l = 0; l < t.n_layers; ++l) {
            const auto p = softmax(lens_project(d.bundles[i].layer(l), *assets));
            t.per_layer_prob[l][i] = p[tok[i]];
            if (check) {
                double s = 0.0;
                for (double v : p) s += v;
                norm_err[i] = std::max(norm_err[i], std::abs(s - 1.0));
            }
        }
    });
    for (std::size_t i = 0; i < samples.size(); ++i) {
        t.sample_ids.push_back(samples[i].sample_id);
        if (check_every > 0 && i % check_every == 0) {
            ++t.normalization_checked;
            t.max_normalization_error = std::max(t.max_normalization_error, norm_err[i]);
        }
    }

    for (auto& m : t.split_mean) m.assign(t.n_layers, 0.0);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto s = static_cast<std::size_t>(samples[i].split.index());
        ++t.split_count[s];
        for (std::size_t l = 0; l < t.n_layers; ++l) t.split_mean[s][l] += t.per_layer_prob[l][i];
    }
    for (std::size_t s = 0; s < 4; ++s) {
        if (t.split_count[s] == 0) {
            t.per_split_peak[s] = {-1, 0.0};
            continue;
        }
        for (auto& v : t.split_mean[s]) v /= static_cast<double>(t.split_count[s]);
        const auto& m = t.split_mean[s];
        const auto best = std::max_element(m.begin(), m.end());  // first maximum
        t.per_split_peak[s] = {static_cast<int>(best - m.begin()), *best};
    }
    t.regime = classify_regime(t);
    return t;
}

inline nlohmann::json to_json(const LensTrajectory& t) {
    nlohmann::json j;
    j["n_layers"] = t.n_layers;
    j["regime"] = t.regime;
    j["regime_thresholds"] = {{"translation_bottleneck_std_peak_gt", t.thresholds.bottleneck_peak},
                              {"unembedding_misaligned_all_lt", t.thresholds.misaligned_ceiling}};
    j["normalization"] = {{"checked_samples", t.normalization_checked}, {"max_abs_error", t.max_normalization_error}};
    for (int s = 0; s < 4; ++s) {
        const auto name = std::string(kSplitNames[static_cast<std::size_t>(s)]);
        j["per_split"][name] = {{"n", t.split_count[static_cast<std::size_t>(s)]},
                                {"mean_prob_per_layer", t.split_mean[static_cast<std::size_t>(s)]},
                                {"peak_layer", t.per_split_peak[static_cast<std::size_t>(s)].first},
                                {"peak_prob", t.per_split_peak[static_cast<std::size_t>(s)].second}};
    }
    j["sample_ids"] = t.sample_ids;
    j["per_layer_prob"] = t.per_layer_prob;
    return j;
}

}  // namespace gapdiag
