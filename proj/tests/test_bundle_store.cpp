#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "gapdiag/bundle_store.hpp"
#include "support.hpp"

using namespace gapdiag;
using testsupport::kind_of;
using testsupport::TempDir;

TEST(SplitLabel, FourNamedCombinations) {
    for (int i = 0; i < 4; ++i) {
        const auto s = SplitLabel::from_index(i);
        EXPECT_EQ(s.index(), i);
        EXPECT_EQ(parse_split(s.name()), s);
    }
    EXPECT_EQ(parse_split("mis_a").modality, Modality::audio);
    EXPECT_TRUE(parse_split("mis_a").misleading());
    EXPECT_EQ(kind_of([] { parse_split("std_x"); }), ErrorKind::Parse);
}

TEST(Manifest, MinimalOneVideo) {
    TempDir dir("manifest_min");
    const auto path = testsupport::write_small_dataset(dir.path(), 1);
    const auto m = load_manifest(path);
    EXPECT_EQ(m.samples.size(), 4u);
    EXPECT_EQ(m.model_name, "toy");
}

TEST(Manifest, MissingSplitIsSchemaError) {
    TempDir dir("manifest_missing");
    const auto path = testsupport::write_small_dataset(dir.path(), 2);
    std::ifstream f(path);
    auto j = nlohmann::json::parse(f);
    auto& samples = j["samples"];
    for (auto it = samples.begin(); it != samples.end(); ++it)
        if ((*it)["sample_id"] == "vid1_mis_a") {
            samples.erase(it);
            break;
        }
    EXPECT_EQ(kind_of([&] { manifest_from_json(j, dir.path()); }), ErrorKind::Schema);
}

TEST(Manifest, FiveHundredVideosGiveTwoThousandSamples) {
    nlohmann::json j{{"format_version", 1}, {"model_name", "m"}, {"samples", nlohmann::json::array()}};
    for (int v = 0; v < 500; ++v)
        for (const char* sp : {"std_v", "std_a", "mis_v", "mis_a"})
            j["samples"].push_back(sample_to_json(testsupport::make_sample("v" + std::to_string(v), sp)));
    EXPECT_EQ(manifest_from_json(j, ".").samples.size(), 2000u);
}

TEST(Manifest, DuplicateIdAndBadEnumsRejected) {
    auto s = sample_to_json(testsupport::make_sample("v", "std_v"));
    nlohmann::json j{{"format_version", 1}, {"model_name", "m"}, {"samples", {s, s}}};
    EXPECT_EQ(kind_of([&] { manifest_from_json(j, "."); }), ErrorKind::Schema);

    auto bad = s;
    bad["question_type"] = "trivia";
    EXPECT_EQ(kind_of([&] { sample_from_json(bad); }), ErrorKind::Parse);
    bad = s;
    bad["correct_letter"] = "G";
    EXPECT_EQ(kind_of([&] { sample_from_json(bad); }), ErrorKind::Parse);
    bad = s;
    bad.erase("video_id");
    EXPECT_EQ(kind_of([&] { sample_from_json(bad); }), ErrorKind::Schema);
}

TEST(Manifest, JsonRoundTrip) {
    TempDir dir("manifest_rt");
    const auto path = testsupport::write_small_dataset(dir.path(), 3);
    auto m = load_manifest(path);
    m.assets_path = "assets.bin";
    m.samples[2].question_text = "What is on the table?";
    save_manifest(dir / "again.json", m);
    const auto back = load_manifest(dir / "again.json");
    EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
}

TEST(Bundle, FullModelShapeRoundTrips) {
    TempDir dir("bundle_big");
    auto b = testsupport::make_bundle(29, 3584);
    for (std::size_t i = 0; i < b.states.size(); ++i) b.states[i] = static_cast<float>(i % 97) * 0.125f;
    write_bundle(dir / "b.bin", b);
    const auto r = read_bundle(dir / "b.bin");
    EXPECT_EQ(r.n_layers, 29u);
    EXPECT_EQ(r.d_hidden, 3584u);
    EXPECT_EQ(r.states, b.states);
    EXPECT_EQ(r.choice_logits, b.choice_logits);
    EXPECT_EQ(r.layer(3)[5], b.states[3 * 3584 + 5]);
}

TEST(Bundle, DegenerateShapeIsFormatError) {
    HiddenStateBundle b;
    b.n_layers = 0;
    b.d_hidden = 4;
    const auto bytes = encode_bundle(b);
    EXPECT_EQ(kind_of([&] { decode_bundle(bytes, "zero"); }), ErrorKind::Format);
}

TEST(Bundle, NaNIsNonFinite) {
    auto b = testsupport::make_bundle(2, 3);
    b.states[4] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_EQ(kind_of([&] { decode_bundle(encode_bundle(b), "nan"); }), ErrorKind::NonFinite);
    auto c = testsupport::make_bundle(2, 3);
    c.choice_logits[5] = std::numeric_limits<float>::infinity();
    EXPECT_EQ(kind_of([&] { decode_bundle(encode_bundle(c), "inf"); }), ErrorKind::NonFinite);
}

TEST(Bundle, CorruptBytesRejected) {
    auto bytes = encode_bundle(testsupport::make_bundle(2, 3));
    auto trunc = bytes;
    trunc.resize(trunc.size() - 3);
    EXPECT_EQ(kind_of([&] { decode_bundle(trunc, "t"); }), ErrorKind::Format);
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_EQ(kind_of([&] { decode_bundle(extra, "x"); }), ErrorKind::Format);
    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_EQ(kind_of([&] { decode_bundle(magic, "m"); }), ErrorKind::Format);
    EXPECT_EQ(kind_of([&] { decode_bundle(bytes, "s", BundleShape{2, 4}); }), ErrorKind::Shape);
    EXPECT_EQ(kind_of([] { read_bundle("/nonexistent/bundle.bin"); }), ErrorKind::Io);
}

TEST(Assets, RoundTripAndRangeCheck) {
    TempDir dir("assets");
    ModelAssets a;
    a.d_hidden = 3;
    a.vocab_size = 4;
    a.norm_eps = 1e-5;
    a.norm_weights = {1, 2, 3};
    a.unembed.assign(12, 0.5f);
    a.correct_token_ids = {{"s1", 2}, {"s2", 3}};
    write_assets(dir / "a.bin", a);
    const auto r = read_assets(dir / "a.bin");
    EXPECT_EQ(r.d_hidden, 3u);
    EXPECT_EQ(r.vocab_size, 4u);
    EXPECT_DOUBLE_EQ(r.norm_eps, 1e-5);
    EXPECT_EQ(r.norm_weights, a.norm_weights);
    EXPECT_EQ(r.unembed, a.unembed);
    EXPECT_EQ(r.correct_token_ids, a.correct_token_ids);

    a.correct_token_ids["s3"] = 4;
    write_assets(dir / "bad.bin", a);
    EXPECT_EQ(kind_of([&] { read_assets(dir / "bad.bin"); }), ErrorKind::Format);
}

TEST(Embeddings, RoundTripAndRowLength) {
    TempDir dir("emb");
    TextEmbeddingTable t;
    t.d_text = 2;
    t.rows = {{"a", {1.0f, -1.0f}}, {"b", {0.5f, 0.25f}}};
    write_embeddings(dir / "e.bin", t);
    const auto r = read_embeddings(dir / "e.bin");
    EXPECT_EQ(r.d_text, 2u);
    EXPECT_EQ(r.rows, t.rows);
    t.rows["c"] = {1.0f};
    EXPECT_EQ(kind_of([&] { write_embeddings(dir / "f.bin", t); }), ErrorKind::Shape);
}

TEST(Validate, CleanDatasetHasNoFailures) {
    TempDir dir("validate_ok");
    const auto rep = validate_dataset(load_manifest(testsupport::write_small_dataset(dir.path(), 4)));
    EXPECT_TRUE(rep.ok());
    EXPECT_EQ(rep.failures(), 0);
    EXPECT_EQ(rep.counts.at("bundle_shape").first, 16);
}

TEST(Validate, WrongHiddenSizeNamesTheSample) {
    TempDir dir("validate_shape");
    const auto path = testsupport::write_small_dataset(dir.path(), 3);
    const auto m = load_manifest(path);
    write_bundle(m.resolve(m.samples[5].bundle_path), testsupport::make_bundle(3, 7));
    const auto rep = validate_dataset(m);
    ASSERT_EQ(rep.failures(), 1);
    EXPECT_EQ(rep.issues[0].check, "bundle_shape");
    EXPECT_EQ(rep.issues[0].sample_id, m.samples[5].sample_id);
    EXPECT_NE(rep.issues[0].message.find("ShapeError"), std::string::npos);
    EXPECT_EQ(kind_of([&] { load_dataset(m); }), ErrorKind::Shape);
}

TEST(Validate, DurationOutOfRange) {
    TempDir dir("validate_dur");
    auto m = load_manifest(testsupport::write_small_dataset(dir.path(), 2));
    m.samples[0].duration_s = 301.0;
    const auto rep = validate_dataset(m);
    ASSERT_EQ(rep.failures(), 1);
    EXPECT_EQ(rep.issues[0].check, "duration_range");
}

TEST(Validate, LetterSubcategoryAndWindowRules) {
    TempDir dir("validate_rules");
    auto m = load_manifest(testsupport::write_small_dataset(dir.path(), 2));
    for (auto& s : m.samples) {
        if (s.sample_id == "vid0_mis_v") s.correct_letter = 5;            // audio rejection letter on a vision sample
        if (s.sample_id == "vid0_std_a") s.misleading_subcategory = "sound_type";
        if (s.sample_id == "vid1_std_v") s.answer_ts_end_s = s.answer_ts_start_s + 12.0;
    }
    const auto rep = validate_dataset(m);
    EXPECT_EQ(rep.failures(), 3);
    EXPECT_EQ(rep.counts.at("letter_consistency").second, 1);
    EXPECT_EQ(rep.counts.at("subcategory_presence").second, 1);
    EXPECT_EQ(rep.counts.at("timestamp_window").second, 1);
}

TEST(Validate, MissingBundleReported) {
    TempDir dir("validate_missing");
    const auto m = load_manifest(testsupport::write_small_dataset(dir.path(), 2));
    fs::remove(m.resolve(m.samples[0].bundle_path));
    const auto rep = validate_dataset(m);
    ASSERT_EQ(rep.failures(), 1);
    EXPECT_EQ(rep.issues[0].check, "bundle_readable");
}

TEST(Dataset, LoadsAlignedBundles) {
    TempDir dir("dataset");
    const auto d = load_dataset(testsupport::write_small_dataset(dir.path(), 2, 5, 6));
    EXPECT_EQ(d.size(), 8u);
    EXPECT_EQ(d.bundles.size(), 8u);
    EXPECT_EQ(d.shape, (BundleShape{5, 6}));
}
