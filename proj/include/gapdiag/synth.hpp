#pragma once

// Synthetic datasets with planted, fully recorded structure.
//
// Hidden state of sample i at layer l:
//   h = P_perp eps_l + Q xi_i                              (isotropic unit noise)
//     + [misleading, l in signal_layers]
//         S_m * ((1 - f) u_m + f Q a_m)
// where Q (d_hidden x d_text, orthonormal columns) is the text-leak map, u_m is
// a unit direction orthogonal to span(Q), a_m a unit text-space direction,
// S_m the modality's strength and f = text_leak_strength. The text embedding is
//   t_i = xi_i + [misleading] f S_m a_m,
// so at a signal layer t_i = Q^T h exactly and the leaked part of the signal
// lies in the row space of any ridge map from h to t.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/linalg.hpp"
#include "gapdiag/rng.hpp"

namespace gapdiag {

struct SynthConfig {
    int n_videos = 200;
    int n_layers = 12;
    int d_hidden = 32;
    int d_text = 8;
    std::vector<int> signal_layers{6};
    double vision_signal_strength = 5.0;
    double audio_signal_strength = 5.0;
    double text_leak_strength = 0.0;
    double behavioral_coupling = 0.0;
    std::uint64_t seed = 1;
    int vocab_size = 32;
    std::string model_name = "synthetic";

    void validate() const {
        auto bad = [](const std::string& m) { fail(ErrorKind::Config, m); };
        if (n_videos < 1) bad("n_videos must be >= 1");
        if (n_layers < 1 || d_hidden < 1 || d_text < 1) bad("n_layers, d_hidden and d_text must be positive");
        if (d_text + 2 > d_hidden) bad("d_text + 2 must not exceed d_hidden");
        for (int l : signal_layers)
            if (l < 0 || l >= n_layers) bad("signal layer " + std::to_string(l) + " outside [0, n_layers)");
        if (vision_signal_strength < 0 || audio_signal_strength < 0) bad("signal strengths must be >= 0");
        if (text_leak_strength < 0 || text_leak_strength > 1) bad("text_leak_strength must be in [0, 1]");
        if (behavioral_coupling < 0 || behavioral_coupling > 1) bad("behavioral_coupling must be in [0, 1]");
        if (vocab_size < 8) bad("vocab_size must be >= 8");
    }
};

inline nlohmann::json to_json(const SynthConfig& c) {
    return {{"n_videos", c.n_videos},
            {"n_layers", c.n_layers},
            {"d_hidden", c.d_hidden},
            {"d_text", c.d_text},
            {"signal_layers", c.signal_layers},
            {"vision_signal_strength", c.vision_signal_strength},
            {"audio_signal_strength", c.audio_signal_strength},
            {"text_leak_strength", c.text_leak_strength},
            {"behavioral_coupling", c.behavioral_coupling},
            {"seed", c.seed},
            {"vocab_size", c.vocab_size},
            {"model_name", c.model_name}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    try {
        c.n_videos = j.value("n_videos", c.n_videos);
        c.n_layers = j.value("n_layers", c.n_layers);
        c.d_hidden = j.value("d_hidden", c.d_hidden);
        c.d_text = j.value("d_text", c.d_text);
        c.signal_layers = j.value("signal_layers", c.signal_layers);
        c.vision_signal_strength = j.value("vision_signal_strength", c.vision_signal_strength);
        c.audio_signal_strength = j.value("audio_signal_strength", c.audio_signal_strength);
        c.text_leak_strength = j.value("text_leak_strength", c.text_leak_strength);
        c.behavioral_coupling = j.value("behavioral_coupling", c.behavioral_coupling);
        c.seed = j.value("seed", c.seed);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.model_name = j.value("model_name", c.model_name);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Config, std::string("synth config: ") + e.what());
    }
    c.validate();
    return c;
}

// Token ids used for the option letters A..F in the synthetic vocabulary.
inline constexpr std::uint32_t kSynthLetterToken0 = 2;

struct SynthData {
    SynthConfig config;
    Manifest manifest;
    std::vector<HiddenStateBundle> bundles;  // aligned with manifest.samples
    ModelAssets assets;
    TextEmbeddingTable embeddings;
    nlohmann::json ground_truth;

    Dataset dataset() const {
        Dataset d;
        d.manifest = manifest;
        d.bundles = bundles;
        d.shape = {static_cast<std::uint32_t>(config.n_layers), static_cast<std::uint32_t>(config.d_hidden)};
        return d;
    }
};

namespace detail {

inline Vec gaussian_vec(Stream& rng, Eigen::Index n) {
    Vec v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

inline SynthData generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const Eigen::Index dh = cfg.d_hidden, dt = cfg.d_text;
    const std::uint64_t seed = cfg.seed;

    // Fixed planted geometry.
    Stream geo(seed, {0x6E0ULL});
    Mat G(dh, dt);
    for (Eigen::Index c = 0; c < dt; ++c) G.col(c) = detail::gaussian_vec(geo, dh);
    const Mat Q = Eigen::HouseholderQR<Mat>(G).householderQ() * Mat::Identity(dh, dt);
    auto planted_direction = [&](std::uint64_t key) {
        Stream r(seed, {0xD1ECULL, key});
        Vec u = detail::gaussian_vec(r, dh);
        u -= Q * (Q.transpose() * u);
        return Vec(u.normalized());
    };
    const Vec u_vision = planted_direction(0), u_audio = planted_direction(1);
    auto text_direction = [&](std::uint64_t key) {
        Stream r(seed, {0x7E47ULL, key});
        return Vec(detail::gaussian_vec(r, dt).normalized());
    };
    const Vec a_vision = text_direction(0), a_audio = text_direction(1);
    const Mat P_perp = Mat::Identity(dh, dh) - Q * Q.transpose();
    const std::set<int> signal(cfg.signal_layers.begin(), cfg.signal_layers.end());
    const double f = cfg.text_leak_strength;

    SynthData out;
    out.config = cfg;
    out.manifest.model_name = cfg.model_name;
    out.manifest.assets_path = "assets.imva";
    out.manifest.embeddings_path = "embeddings.imve";
    out.embeddings.d_text = static_cast<std::uint32_t>(dt);

    nlohmann::json draws = nlohmann::json::array();

    for (int v = 0; v < cfg.n_videos; ++v) {
        char vid_buf[32];
        std::snprintf(vid_buf, sizeof vid_buf, "v%04d", v);
        const std::string vid = vid_buf;
        Stream vrng(seed, {0x71DULL, static_cast<std::uint64_t>(v)});
        const double duration = 60.0 + 10.0 * static_cast<double>(vrng.below(25));

        for (int si = 0; si < 4; ++si) {
            const SplitLabel split = SplitLabel::from_index(si);
            const auto sample_key = static_cast<std::uint64_t>(v) * 4 + static_cast<std::uint64_t>(si);
            Stream srng(seed, {0x5A3ULL, sample_key});

            SampleMeta s;
            s.video_id = vid;
            s.split = split;
            s.sample_id = vid + "_" + std::string(split.name());
            s.question_type = std::string(kQuestionTypes[srng.below(kQuestionTypes.size())]);
            if (split.misleading()) {
                const auto& subs = split.modality == Modality::vision ? kVisionSubcategories : kAudioSubcategories;
                s.misleading_subcategory = std::string(subs[srng.below(subs.size())]);
            }
            s.duration_s = duration;
            s.answer_ts_start_s = 10.0 * static_cast<double>(srng.below(static_cast<std::uint64_t>(duration / 10.0)));
            s.answer_ts_end_s = s.answer_ts_start_s + 10.0;
            s.bundle_path = "bundles/" + s.sample_id + ".imvb";
            s.question_text = "in clip " + vid + " what happens at the marked moment";

            const bool mis = split.misleading();
            const bool vision = split.modality == Modality::vision;
            const double strength = vision ? cfg.vision_signal_strength : cfg.audio_signal_strength;
            const Vec& u = vision ? u_vision : u_audio;
            const Vec& a = vision ? a_vision : a_audio;

            Stream xrng(seed, {0x81ULL, sample_key});
            const Vec xi = detail::gaussian_vec(xrng, dt);
            Vec t = xi;
            if (mis) t += f * strength * a;

            HiddenStateBundle b;
            b.n_layers = static_cast<std::uint32_t>(cfg.n_layers);
            b.d_hidden = static_cast<std::uint32_t>(cfg.d_hidden);
            b.states.resize(static_cast<std::size_t>(cfg.n_layers) * static_cast<std::size_t>(dh));
            const Vec shared = Q * xi;
            const Vec planted = strength * ((1.0 - f) * u + f * (Q * a));
            for (int l = 0; l < cfg.n_layers; ++l) {
                Stream lrng(seed, {0x1A7ULL, sample_key, static_cast<std::uint64_t>(l)});
                Vec h = P_perp * detail::gaussian_vec(lrng, dh) + shared;
                if (mis && signal.contains(l)) h += planted;
                for (Eigen::Index j = 0; j < dh; ++j)
                    b.states[static_cast<std::size_t>(l) * static_cast<std::size_t>(dh) + static_cast<std::size_t>(j)] =
                        static_cast<float>(h(j));
            }

            // Choice logits: gold 2.0, others N(0, 0.25); on misleading items the
            // gold rejection logit drops by 2.0 unless behavioral coupling fires.
            Stream crng(seed, {0xC01ULL, sample_key});
            int gold = mis ? (vision ? 4 : 5) : static_cast<int>(crng.below(4));
            bool coupled = false;
            for (int k = 0; k < 6; ++k) b.choice_logits[static_cast<std::size_t>(k)] = static_cast<float>(0.5 * crng.normal());
            b.choice_logits[static_cast<std::size_t>(gold)] = 2.0f;
            if (mis) {
                coupled = crng.uniform() < cfg.behavioral_coupling;
                if (!coupled) b.choice_logits[static_cast<std::size_t>(gold)] -= 2.0f;
            }
            s.correct_letter = gold;

            out.embeddings.rows[s.sample_id] = std::vector<float>(t.data(), t.data() + t.size());
            draws.push_back({{"sample_id", s.sample_id}, {"misleading", mis}, {"coupling_fired", coupled}});
            out.manifest.samples.push_back(std::move(s));
            out.bundles.push_back(std::move(b));
        }
    }

    // Sort samples by id (the manifest's canonical order), keeping bundles aligned.
    std::vector<std::size_t> order(out.manifest.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return out.manifest.samples[x].sample_id < out.manifest.samples[y].sample_id;
    });
    {
        std::vector<SampleMeta> ms;
        std::vector<HiddenStateBundle> bs;
        for (auto i : order) {
            ms.push_back(std::move(out.manifest.samples[i]));
            bs.push_back(std::move(out.bundles[i]));
        }
        out.manifest.samples = std::move(ms);
        out.bundles = std::move(bs);
    }

    // Model assets for the logit lens: a small random vocabulary with the six
    // option letters at fixed token ids.
    {
        Stream arng(seed, {0xA55E7ULL});
        auto& a = out.assets;
        a.d_hidden = static_cast<std::uint32_t>(dh);
        a.vocab_size = static_cast<std::uint32_t>(cfg.vocab_size);
        a.norm_eps = 1e-6;
        a.norm_weights.resize(static_cast<std::size_t>(dh));
        for (auto& g : a.norm_weights) g = static_cast<float>(1.0 + 0.1 * arng.normal());
        a.unembed.resize(static_cast<std::size_t>(cfg.vocab_size) * static_cast<std::size_t>(dh));
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (auto& w : a.unembed) w = static_cast<float>(scale * arng.normal());
        for (const auto& s : out.manifest.samples)
            a.correct_token_ids[s.sample_id] = kSynthLetterToken0 + static_cast<std::uint32_t>(s.correct_letter);
    }

    out.ground_truth = {{"config", to_json(cfg)},
                        {"u_vision", detail::to_std(u_vision)},
                        {"u_audio", detail::to_std(u_audio)},
                        {"text_direction_vision", detail::to_std(a_vision)},
                        {"text_direction_audio", detail::to_std(a_audio)},
                        {"letter_token_ids", {kSynthLetterToken0, kSynthLetterToken0 + 5}},
                        {"samples", draws}};
    {
        nlohmann::json leak = nlohmann::json::array();
        for (Eigen::Index c = 0; c < dt; ++c) leak.push_back(detail::to_std(Q.col(c)));
        out.ground_truth["text_leak_map_columns"] = leak;
    }
    return out;
}

inline void write_synthetic(const SynthData& data, const fs::path& dir) {
    fs::create_directories(dir / "bundles");
    for (std::size_t i = 0; i < data.bundles.size(); ++i)
        write_bundle(dir / data.manifest.samples[i].bundle_path, data.bundles[i]);
    write_assets(dir / *data.manifest.assets_path, data.assets);
    write_embeddings(dir / *data.manifest.embeddings_path, data.embeddings);
    save_manifest(dir / "manifest.json", data.manifest);
    const auto gt = data.ground_truth.dump(2) + "\n";
    detail::write_file(dir / "ground_truth.json", std::vector<char>(gt.begin(), gt.end()));
}

// Negative control: permute which tensors sit under which sample within each
// modality, so condition labels lose their relation to the features. The
// permutation is re-drawn until it is not the identity (when a modality has
// more than 3 samples).
inline std::vector<std::size_t> label_shuffle_permutation(const Manifest& m, std::uint64_t seed) {
    std::vector<std::size_t> perm(m.samples.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (int mod = 0; mod < 2; ++mod) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < m.samples.size(); ++i)
            if (static_cast<int>(m.samples[i].split.modality) == mod) idx.push_back(i);
        std::vector<std::size_t> shuffled = idx;
        for (std::uint64_t attempt = 0;; ++attempt) {
            shuffled = idx;
            Stream rng(seed, {0x5EEDULL, static_cast<std::uint64_t>(mod), attempt});
            rng.shuffle(shuffled);
            if (idx.size() <= 3 || shuffled != idx) break;
        }
        for (std::size_t r = 0; r < idx.size(); ++r) perm[idx[r]] = shuffled[r];
    }
    return perm;
}

inline Manifest generate_label_shuffled(const Manifest& m, std::uint64_t seed) {
    const auto perm = label_shuffle_permutation(m, seed);
    Manifest out = m;
    for (std::size_t i = 0; i < perm.size(); ++i) out.samples[i].bundle_path = m.samples[perm[i]].bundle_path;
    return out;
}

inline Dataset generate_label_shuffled(const Dataset& d, std::uint64_t seed) {
    const auto perm = label_shuffle_permutation(d.manifest, seed);
    Dataset out = d;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        out.manifest.samples[i].bundle_path = d.manifest.samples[perm[i]].bundle_path;
        out.bundles[i] = d.bundles[perm[i]];
    }
    return out;
}

}  // namespace gapdiag
