#pragma once

// On-disk data model: a JSON manifest of benchmark samples, one binary
// hidden-state bundle per sample, plus optional model assets (final norm +
// unembedding) and a text-embedding table.
//
// Binary layouts (all little-endian):
//   bundle  : "IMVB" u32 version=1, u32 n_layers, u32 d_hidden,
//             f32[n_layers*d_hidden] (layer-major), f32[6] choice logits A..F
//   assets  : "IMVA" u32 version=1, u32 d_hidden, u32 vocab_size, f64 norm_eps,
//             f32[d_hidden] norm weights, f32[vocab*d_hidden] unembed (row-major),
//             u32 n_ids, n_ids x (u32 len, bytes sample_id, u32 token_id)
//   embeds  : "IMVE" u32 version=1, u32 n_rows, u32 d_text,
//             n_rows x (u32 len, bytes sample_id, f32[d_text])

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "gapdiag/error.hpp"

namespace gapdiag {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;

enum class Modality : std::uint8_t { vision, audio };
enum class Condition : std::uint8_t { standard, misleading };

struct SplitLabel {
    Modality modality = Modality::vision;
    Condition condition = Condition::standard;

    // std_v=0, std_a=1, mis_v=2, mis_a=3
    int index() const noexcept {
        return (condition == Condition::misleading ? 2 : 0) + (modality == Modality::audio ? 1 : 0);
    }
    static SplitLabel from_index(int i) noexcept {
        return {i % 2 ? Modality::audio : Modality::vision, i >= 2 ? Condition::misleading : Condition::standard};
    }
    std::string_view name() const noexcept {
        static constexpr std::array<std::string_view, 4> names{"std_v", "std_a", "mis_v", "mis_a"};
        return names[static_cast<std::size_t>(index())];
    }
    bool misleading() const noexcept { return condition == Condition::misleading; }

    friend bool operator==(const SplitLabel&, const SplitLabel&) = default;
};

inline constexpr std::array<std::string_view, 4> kSplitNames{"std_v", "std_a", "mis_v", "mis_a"};

inline SplitLabel parse_split(std::string_view s) {
    for (int i = 0; i < 4; ++i)
        if (kSplitNames[static_cast<std::size_t>(i)] == s) return SplitLabel::from_index(i);
    fail(ErrorKind::Parse, "unknown split '" + std::string(s) + "'");
}

inline constexpr std::array<std::string_view, 8> kQuestionTypes{
    "existence", "time_order", "emotional", "scene_description", "cross_modality", "plot", "causal", "temporal"};

inline constexpr std::array<std::string_view, 9> kVisionSubcategories{
    "person_position", "person_action",   "person_identity",  "person_appearance", "object_location",
    "object_type",     "object_attribute", "location_setting", "location_detail"};

inline constexpr std::array<std::string_view, 9> kAudioSubcategories{
    "speech_tone",     "sound_type",     "ambient_sound",    "speech_content", "sound_source",
    "sound_intensity", "speech_context", "background_music", "speech_speaker"};

inline constexpr std::string_view kLetters = "ABCDEF";

inline int letter_index(char c) {
    const auto pos = kLetters.find(c);
    if (pos == std::string_view::npos) fail(ErrorKind::Parse, std::string("unknown option letter '") + c + "'");
    return static_cast<int>(pos);
}

inline int letter_index(std::string_view s) {
    if (s.size() != 1) fail(ErrorKind::Parse, "option letter must be one of A-F, got '" + std::string(s) + "'");
    return letter_index(s[0]);
}

inline char letter_char(int i) { return kLetters[static_cast<std::size_t>(i)]; }

struct SampleMeta {
    std::string sample_id;
    std::string video_id;
    SplitLabel split;
    std::string question_type;
    std::optional<std::string> misleading_subcategory;
    double duration_s = 0.0;
    double answer_ts_start_s = 0.0;
    double answer_ts_end_s = 0.0;
    int correct_letter = 0;  // 0..5 for A..F
    std::string bundle_path;
    std::optional<std::string> question_text;
};

struct HiddenStateBundle {
    std::uint32_t n_layers = 0;
    std::uint32_t d_hidden = 0;
    std::vector<float> states;  // n_layers * d_hidden, layer-major
    std::array<float, 6> choice_logits{};

    std::span<const float> layer(std::size_t l) const {
        return {states.data() + l * d_hidden, static_cast<std::size_t>(d_hidden)};
    }
};

struct ModelAssets {
    std::uint32_t d_hidden = 0;
    std::uint32_t vocab_size = 0;
    double norm_eps = 1e-6;
    std::vector<float> norm_weights;
    std::vector<float> unembed;  // vocab_size * d_hidden, row-major
    std::map<std::string, std::uint32_t> correct_token_ids;
};

struct TextEmbeddingTable {
    std::uint32_t d_text = 0;
    std::map<std::string, std::vector<float>> rows;
};

struct Manifest {
    int format_version = 1;
    std::string model_name;
    std::vector<SampleMeta> samples;  // sorted by sample_id
    std::optional<std::string> assets_path;
    std::optional<std::string> embeddings_path;
    fs::path base_dir;

    fs::path resolve(const std::string& rel) const { return base_dir / rel; }
};

// ---------------------------------------------------------------------------
// Binary helpers

namespace detail {

inline void put_bytes(std::vector<char>& out, const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    out.insert(out.end(), c, c + n);
}
template <class T>
void put(std::vector<char>& out, T v) {
    put_bytes(out, &v, sizeof(T));
}
inline void put_string(std::vector<char>& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    put_bytes(out, s.data(), s.size());
}

class Reader {
public:
    Reader(std::vector<char> data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) fail(ErrorKind::Format, origin_ + ": truncated file");
    }
    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void get_floats(float* dst, std::size_t n) {
        need(n * sizeof(float));
        std::memcpy(dst, data_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(data_.data() + pos_, n);
        pos_ += n;
        return s;
    }
    void expect_magic(std::string_view magic) {
        need(4);
        if (std::string_view(data_.data() + pos_, 4) != magic)
            fail(ErrorKind::Format, origin_ + ": bad magic, expected " + std::string(magic));
        pos_ += 4;
        const auto version = get<std::uint32_t>();
        if (version != 1) fail(ErrorKind::Format, origin_ + ": unsupported version " + std::to_string(version));
    }
    bool at_end() const { return pos_ == data_.size(); }
    const std::string& origin() const { return origin_; }

private:
    std::vector<char> data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot open " + p.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Atomic write via temp file + rename.
inline void write_file(const fs::path& p, const std::vector<char>& bytes) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) fail(ErrorKind::Io, "cannot write " + tmp.string());
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) fail(ErrorKind::Io, "short write on " + tmp.string());
    }
    fs::rename(tmp, p);
}

inline void check_finite(std::span<const float> v, const std::string& what) {
    for (float x : v)
        if (!std::isfinite(x)) fail(ErrorKind::NonFinite, what + " contains NaN/Inf");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Bundles

inline std::vector<char> encode_bundle(const HiddenStateBundle& b) {
    if (b.states.size() != static_cast<std::size_t>(b.n_layers) * b.d_hidden)
        fail(ErrorKind::Shape, "bundle states size does not match n_layers*d_hidden");
    std::vector<char> out;
    out.reserve(16 + b.states.size() * 4 + 24);
    detail::put_bytes(out, "IMVB", 4);
    detail::put<std::uint32_t>(out, 1);
    detail::put<std::uint32_t>(out, b.n_layers);
    detail::put<std::uint32_t>(out, b.d_hidden);
    detail::put_bytes(out, b.states.data(), b.states.size() * sizeof(float));
    detail::put_bytes(out, b.choice_logits.data(), 6 * sizeof(float));
    return out;
}

inline void write_bundle(const fs::path& path, const HiddenStateBundle& b) { detail::write_file(path, encode_bundle(b)); }

struct BundleShape {
    std::uint32_t n_layers = 0;
    std::uint32_t d_hidden = 0;
    friend bool operator==(const BundleShape&, const BundleShape&) = default;
};

inline HiddenStateBundle decode_bundle(std::vector<char> bytes, const std::string& origin,
                                       std::optional<BundleShape> expected = std::nullopt) {
    detail::Reader r(std::move(bytes), origin);
    r.expect_magic("IMVB");
    HiddenStateBundle b;
    b.n_layers = r.get<std::uint32_t>();
    b.d_hidden = r.get<std::uint32_t>();
    if (b.n_layers == 0 || b.d_hidden == 0) fail(ErrorKind::Format, origin + ": degenerate shape");
    if (expected && (BundleShape{b.n_layers, b.d_hidden} != *expected))
        fail(ErrorKind::Shape, origin + ": shape (" + std::to_string(b.n_layers) + ", " + std::to_string(b.d_hidden) +
                                   ") != expected (" + std::to_string(expected->n_layers) + ", " +
                                   std::to_string(expected->d_hidden) + ")");
    b.states.resize(static_cast<std::size_t>(b.n_layers) * b.d_hidden);
    r.get_floats(b.states.data(), b.states.size());
    r.get_floats(b.choice_logits.data(), 6);
    if (!r.at_end()) fail(ErrorKind::Format, origin + ": trailing bytes");
    detail::check_finite(b.states, origin + " states");
    detail::check_finite(b.choice_logits, origin + " choice logits");
    return b;
}

inline HiddenStateBundle read_bundle(const fs::path& path, std::optional<BundleShape> expected = std::nullopt) {
    return decode_bundle(detail::read_file(path), path.string(), expected);
}

// ---------------------------------------------------------------------------
// Model assets

inline void write_assets(const fs::path& path, const ModelAssets& a) {
    if (a.norm_weights.size() != a.d_hidden || a.unembed.size() != static_cast<std::size_t>(a.vocab_size) * a.d_hidden)
        fail(ErrorKind::Shape, "model assets sizes inconsistent");
    std::vector<char> out;
    detail::put_bytes(out, "IMVA", 4);
    detail::put<std::uint32_t>(out, 1);
    detail::put<std::uint32_t>(out, a.d_hidden);
    detail::put<std::uint32_t>(out, a.vocab_size);
    detail::put<double>(out, a.norm_eps);
    detail::put_bytes(out, a.norm_weights.data(), a.norm_weights.size() * sizeof(float));
    detail::put_bytes(out, a.unembed.data(), a.unembed.size() * sizeof(float));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(a.correct_token_ids.size()));
    for (const auto& [id, tok] : a.correct_token_ids) {
        detail::put_string(out, id);
        detail::put<std::uint32_t>(out, tok);
    }
    detail::write_file(path, out);
}

inline ModelAssets read_assets(const fs::path& path) {
    detail::Reader r(detail::read_file(path), path.string());
    r.expect_magic("IMVA");
    ModelAssets a;
    a.d_hidden = r.get<std::uint32_t>();
    a.vocab_size = r.get<std::uint32_t>();
    a.norm_eps = r.get<double>();
    if (a.d_hidden == 0 || a.vocab_size == 0) fail(ErrorKind::Format, path.string() + ": degenerate shape");
    if (!(a.norm_eps > 0.0) || !std::isfinite(a.norm_eps)) fail(ErrorKind::Format, path.string() + ": norm_eps must be > 0");
    a.norm_weights.resize(a.d_hidden);
    r.get_floats(a.norm_weights.data(), a.d_hidden);
    a.unembed.resize(static_cast<std::size_t>(a.vocab_size) * a.d_hidden);
    r.get_floats(a.unembed.data(), a.unembed.size());
    const auto n_ids = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_ids; ++i) {
        auto id = r.get_string();
        const auto tok = r.get<std::uint32_t>();
        if (tok >= a.vocab_size) fail(ErrorKind::Format, path.string() + ": token id out of range for " + id);
        a.correct_token_ids.emplace(std::move(id), tok);
    }
    if (!r.at_end()) fail(ErrorKind::Format, path.string() + ": trailing bytes");
    detail::check_finite(a.norm_weights, path.string() + " norm weights");
    detail::check_finite(a.unembed, path.string() + " unembed");
    return a;
}

// ---------------------------------------------------------------------------
// Text embeddings

inline void write_embeddings(const fs::path& path, const TextEmbeddingTable& t) {
    std::vector<char> out;
    detail::put_bytes(out, "IMVE", 4);
    detail::put<std::uint32_t>(out, 1);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows.size()));
    detail::put<std::uint32_t>(out, t.d_text);
    for (const auto& [id, row] : t.rows) {
        if (row.size() != t.d_text) fail(ErrorKind::Shape, "embedding row " + id + " has wrong length");
        detail::put_string(out, id);
        detail::put_bytes(out, row.data(), row.size() * sizeof(float));
    }
    detail::write_file(path, out);
}

inline TextEmbeddingTable read_embeddings(const fs::path& path) {
    detail::Reader r(detail::read_file(path), path.string());
    r.expect_magic("IMVE");
    TextEmbeddingTable t;
    const auto n = r.get<std::uint32_t>();
    t.d_text = r.get<std::uint32_t>();
    if (t.d_text == 0) fail(ErrorKind::Format, path.string() + ": d_text must be positive");
    for (std::uint32_t i = 0; i < n; ++i) {
        auto id = r.get_string();
        std::vector<float> row(t.d_text);
        r.get_floats(row.data(), row.size());
        detail::check_finite(row, path.string() + " row " + id);
        if (!t.rows.emplace(std::move(id), std::move(row)).second)
            fail(ErrorKind::Format, path.string() + ": duplicate embedding row");
    }
    if (!r.at_end()) fail(ErrorKind::Format, path.string() + ": trailing bytes");
    return t;
}

// ---------------------------------------------------------------------------
// Manifest

namespace detail {

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) fail(ErrorKind::Schema, where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Schema, where + ": field '" + key + "' has wrong type (" + e.what() + ")");
    }
}

template <std::size_t N>
void check_enum(const std::array<std::string_view, N>& allowed, const std::string& v, const std::string& what) {
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
        fail(ErrorKind::Parse, what + ": unknown value '" + v + "'");
}

}  // namespace detail

inline SampleMeta sample_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorKind::Schema, "sample entry is not an object");
    SampleMeta s;
    s.sample_id = detail::field<std::string>(j, "sample_id", "sample");
    const std::string where = "sample " + s.sample_id;
    s.video_id = detail::field<std::string>(j, "video_id", where);
    s.split = parse_split(detail::field<std::string>(j, "split", where));
    s.question_type = detail::field<std::string>(j, "question_type", where);
    detail::check_enum(kQuestionTypes, s.question_type, where + " question_type");
    if (j.contains("misleading_subcategory") && !j.at("misleading_subcategory").is_null()) {
        auto sub = detail::field<std::string>(j, "misleading_subcategory", where);
        if (std::find(kVisionSubcategories.begin(), kVisionSubcategories.end(), sub) == kVisionSubcategories.end())
            detail::check_enum(kAudioSubcategories, sub, where + " misleading_subcategory");
        s.misleading_subcategory = std::move(sub);
    }
    s.duration_s = detail::field<double>(j, "duration_s", where);
    s.answer_ts_start_s = detail::field<double>(j, "answer_ts_start_s", where);
    s.answer_ts_end_s = detail::field<double>(j, "answer_ts_end_s", where);
    s.correct_letter = letter_index(detail::field<std::string>(j, "correct_letter", where));
    s.bundle_path = detail::field<std::string>(j, "bundle_path", where);
    if (j.contains("question_text") && !j.at("question_text").is_null())
        s.question_text = detail::field<std::string>(j, "question_text", where);
    return s;
}

inline nlohmann::json sample_to_json(const SampleMeta& s) {
    nlohmann::json j{{"sample_id", s.sample_id},
                     {"video_id", s.video_id},
                     {"split", s.split.name()},
                     {"question_type", s.question_type},
                     {"duration_s", s.duration_s},
                     {"answer_ts_start_s", s.answer_ts_start_s},
                     {"answer_ts_end_s", s.answer_ts_end_s},
                     {"correct_letter", std::string(1, letter_char(s.correct_letter))},
                     {"bundle_path", s.bundle_path}};
    if (s.misleading_subcategory) j["misleading_subcategory"] = *s.misleading_subcategory;
    if (s.question_text) j["question_text"] = *s.question_text;
    return j;
}

// Videos that do not carry exactly one sample of each split.
inline std::vector<std::string> incomplete_videos(const std::vector<SampleMeta>& samples) {
    std::map<std::string, std::array<int, 4>> counts;
    for (const auto& s : samples) counts[s.video_id][static_cast<std::size_t>(s.split.index())]++;
    std::vector<std::string> bad;
    for (const auto& [vid, c] : counts)
        if (!std::all_of(c.begin(), c.end(), [](int x) { return x == 1; })) bad.push_back(vid);
    return bad;
}

inline Manifest manifest_from_json(const nlohmann::json& j, fs::path base_dir) {
    if (!j.is_object()) fail(ErrorKind::Schema, "manifest root must be an object");
    Manifest m;
    m.base_dir = std::move(base_dir);
    m.format_version = detail::field<int>(j, "format_version", "manifest");
    if (m.format_version != 1) fail(ErrorKind::Schema, "unsupported manifest format_version");
    m.model_name = detail::field<std::string>(j, "model_name", "manifest");
    if (j.contains("assets_path") && !j.at("assets_path").is_null())
        m.assets_path = detail::field<std::string>(j, "assets_path", "manifest");
    if (j.contains("embeddings_path") && !j.at("embeddings_path").is_null())
        m.embeddings_path = detail::field<std::string>(j, "embeddings_path", "manifest");
    const auto samples = detail::field<nlohmann::json>(j, "samples", "manifest");
    if (!samples.is_array()) fail(ErrorKind::Schema, "manifest 'samples' must be an array");
    std::set<std::string> ids;
    for (const auto& sj : samples) {
        auto s = sample_from_json(sj);
        if (!ids.insert(s.sample_id).second) fail(ErrorKind::Schema, "duplicate sample_id " + s.sample_id);
        m.samples.push_back(std::move(s));
    }
    if (m.samples.empty()) fail(ErrorKind::Schema, "manifest has no samples");
    if (auto bad = incomplete_videos(m.samples); !bad.empty())
        fail(ErrorKind::Schema, "video " + bad.front() + " does not have exactly the four splits");
    std::sort(m.samples.begin(), m.samples.end(),
              [](const SampleMeta& a, const SampleMeta& b) { return a.sample_id < b.sample_id; });
    return m;
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : m.samples) samples.push_back(sample_to_json(s));
    nlohmann::json j{{"format_version", m.format_version}, {"model_name", m.model_name}, {"samples", samples}};
    if (m.assets_path) j["assets_path"] = *m.assets_path;
    if (m.embeddings_path) j["embeddings_path"] = *m.embeddings_path;
    return j;
}

inline Manifest load_manifest(const fs::path& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::Io, "cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
    return manifest_from_json(j, path.parent_path());
}

inline void save_manifest(const fs::path& path, const Manifest& m) {
    const auto text = manifest_to_json(m).dump(2) + "\n";
    detail::write_file(path, std::vector<char>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationIssue {
    std::string check;
    std::string sample_id;
    std::string message;
};

struct ValidationReport {
    std::map<std::string, std::pair<int, int>> counts;  // check -> (passed, failed)
    std::vector<ValidationIssue> issues;

    int failures() const { return static_cast<int>(issues.size()); }
    bool ok() const { return issues.empty(); }

    void record(const std::string& check, bool passed, const std::string& sample_id = {}, const std::string& msg = {}) {
        auto& c = counts[check];
        if (passed) {
            ++c.first;
        } else {
            ++c.second;
            issues.push_back({check, sample_id, msg});
        }
    }
};

inline ValidationReport validate_dataset(const Manifest& m) {
    ValidationReport rep;

    std::set<std::string> ids;
    for (const auto& s : m.samples) rep.record("unique_sample_id", ids.insert(s.sample_id).second, s.sample_id, "duplicate");
    {
        const auto bad = incomplete_videos(m.samples);
        std::set<std::string> videos;
        for (const auto& s : m.samples) videos.insert(s.video_id);
        for (const auto& v : videos) {
            const bool ok = std::find(bad.begin(), bad.end(), v) == bad.end();
            rep.record("split_completeness", ok, v, "video lacks exactly one sample per split");
        }
    }

    for (const auto& s : m.samples) {
        const int L = s.correct_letter;
        bool letter_ok = false;
        if (!s.split.misleading())
            letter_ok = L <= 3;
        else
            letter_ok = L == (s.split.modality == Modality::vision ? 4 : 5);
        rep.record("letter_consistency", letter_ok, s.sample_id,
                   std::string("correct_letter ") + letter_char(L) + " inconsistent with split " +
                       std::string(s.split.name()));

        const bool range_ok = s.duration_s >= 60.0 && s.duration_s <= 300.0;
        rep.record("duration_range", range_ok, s.sample_id,
                   "duration_s=" + std::to_string(s.duration_s) + " outside [60,300]");

        const bool ts_ok = std::abs(s.answer_ts_end_s - s.answer_ts_start_s - 10.0) <= 1e-9 &&
                           s.answer_ts_start_s >= 0.0 && s.answer_ts_end_s <= s.duration_s;
        rep.record("timestamp_window", ts_ok, s.sample_id, "evidence window must be 10 s and end within the clip");

        bool sub_ok = s.misleading_subcategory.has_value() == s.split.misleading();
        if (sub_ok && s.misleading_subcategory) {
            const auto& allowed = s.split.modality == Modality::vision ? kVisionSubcategories : kAudioSubcategories;
            sub_ok = std::find(allowed.begin(), allowed.end(), *s.misleading_subcategory) != allowed.end();
        }
        rep.record("subcategory_presence", sub_ok, s.sample_id,
                   "misleading_subcategory must be present (and of the split's modality) iff misleading");
    }

    // Bundles: readable, finite, and all of the most common shape.
    std::vector<std::optional<BundleShape>> shapes(m.samples.size());
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> shape_votes;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        const auto& s = m.samples[i];
        try {
            const auto b = read_bundle(m.resolve(s.bundle_path));
            shapes[i] = BundleShape{b.n_layers, b.d_hidden};
            shape_votes[{b.n_layers, b.d_hidden}]++;
            rep.record("bundle_readable", true);
        } catch (const Error& e) {
            const std::string check = e.kind() == ErrorKind::NonFinite ? "bundle_finite" : "bundle_readable";
            rep.record(check, false, s.sample_id, e.what());
        }
    }
    if (!shape_votes.empty()) {
        const auto ref = std::max_element(shape_votes.begin(), shape_votes.end(),
                                          [](const auto& a, const auto& b) { return a.second < b.second; })
                             ->first;
        for (std::size_t i = 0; i < m.samples.size(); ++i) {
            if (!shapes[i]) continue;
            const bool ok = shapes[i]->n_layers == ref.first && shapes[i]->d_hidden == ref.second;
            rep.record("bundle_shape", ok, m.samples[i].sample_id,
                       "ShapeError: (" + std::to_string(shapes[i]->n_layers) + ", " +
                           std::to_string(shapes[i]->d_hidden) + ") != (" + std::to_string(ref.first) + ", " +
                           std::to_string(ref.second) + ")");
        }

        if (m.assets_path) {
            try {
                const auto a = read_assets(m.resolve(*m.assets_path));
                rep.record("assets_shape", a.d_hidden == ref.second, "", "assets d_hidden != bundle d_hidden");
                for (const auto& s : m.samples)
                    rep.record("assets_token_ids", a.correct_token_ids.contains(s.sample_id), s.sample_id,
                               "no correct token id");
            } catch (const Error& e) {
                rep.record("assets_readable", false, "", e.what());
            }
        }
    }

    if (m.embeddings_path) {
        try {
            const auto t = read_embeddings(m.resolve(*m.embeddings_path));
            for (const auto& s : m.samples)
                rep.record("embeddings_coverage", t.rows.contains(s.sample_id), s.sample_id, "no embedding row");
        } catch (const Error& e) {
            rep.record("embeddings_readable", false, "", e.what());
        }
    }
    return rep;
}

inline nlohmann::json to_json(const ValidationReport& r) {
    nlohmann::json checks = nlohmann::json::object();
    for (const auto& [k, v] : r.counts) checks[k] = {{"passed", v.first}, {"failed", v.second}};
    nlohmann::json issues = nlohmann::json::array();
    for (const auto& i : r.issues) issues.push_back({{"check", i.check}, {"sample_id", i.sample_id}, {"message", i.message}});
    return {{"ok", r.ok()}, {"failures", r.failures()}, {"checks", checks}, {"issues", issues}};
}

// ---------------------------------------------------------------------------
// Loaded dataset

struct Dataset {
    Manifest manifest;
    std::vector<HiddenStateBundle> bundles;  // aligned with manifest.samples
    BundleShape shape;

    std::size_t size() const { return manifest.samples.size(); }
    const SampleMeta& meta(std::size_t i) const { return manifest.samples[i]; }
};

inline Dataset load_dataset(Manifest m) {
    Dataset d;
    d.bundles.reserve(m.samples.size());
    for (const auto& s : m.samples) {
        std::optional<BundleShape> expect;
        if (!d.bundles.empty()) expect = d.shape;
        d.bundles.push_back(read_bundle(m.resolve(s.bundle_path), expect));
        if (d.bundles.size() == 1) d.shape = {d.bundles[0].n_layers, d.bundles[0].d_hidden};
    }
    d.manifest = std::move(m);
    return d;
}

inline Dataset load_dataset(const fs::path& manifest_path) { return load_dataset(load_manifest(manifest_path)); }

}  // namespace gapdiag
