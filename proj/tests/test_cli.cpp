#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gapdiag/cli.hpp"
#include "support.hpp"

using nlohmann::json;
using testsupport::TempDir;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "gapdiag");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = gapdiag::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

// Small synthetic dataset shared by the tests below.
std::string make_synth(const TempDir& dir, int signal_layer = 3) {
    json cfg{{"n_videos", 40}, {"n_layers", 6}, {"d_hidden", 16}, {"d_text", 4}, {"signal_layers", {signal_layer}}, {"seed", 5}};
    write_text(dir / "cfg.json", cfg.dump());
    const auto r = run_cli({"synth", "--config", (dir / "cfg.json").string(), "--out", (dir / "data").string(), "--label-shuffle", "9"});
    EXPECT_EQ(r.code, 0) << r.err;
    return (dir / "data" / "manifest.json").string();
}

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
    const auto r = run_cli({"bogus"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("unknown subcommand"), std::string::npos);
    EXPECT_NE(r.err.find("probe-sweep"), std::string::npos);
}

TEST(Cli, MissingRequiredOptionIsUsageError) {
    EXPECT_EQ(run_cli({"validate"}).code, 2);
    EXPECT_EQ(run_cli({}).code, 2);
}

TEST(Cli, SynthThenValidate) {
    TempDir dir("cli_validate");
    const auto manifest = make_synth(dir);
    const auto r = run_cli({"validate", "--manifest", manifest});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["command"], "validate");
    EXPECT_TRUE(j["result"]["ok"].get<bool>());
    EXPECT_TRUE(std::filesystem::exists(dir / "data" / "manifest.label_shuffled.json"));
    EXPECT_EQ(run_cli({"validate", "--manifest", (dir / "data" / "manifest.label_shuffled.json").string()}).code, 0);
}

TEST(Cli, ValidationFailureExitsOne) {
    TempDir dir("cli_invalid");
    const auto manifest = make_synth(dir);
    auto j = json::parse(std::ifstream(manifest));
    j["samples"][0]["duration_s"] = 301.0;
    write_text(manifest, j.dump());
    const auto r = run_cli({"validate", "--manifest", manifest});
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(json::parse(r.out)["result"]["ok"].get<bool>());
}

TEST(Cli, MissingManifestIsDataError) { EXPECT_EQ(run_cli({"validate", "--manifest", "/nonexistent/manifest.json"}).code, 1); }

TEST(Cli, ProbeSweepFindsPlantedLayer) {
    TempDir dir("cli_sweep");
    const auto manifest = make_synth(dir, 3);
    const auto r = run_cli({"probe-sweep", "--manifest", manifest, "--task", "vision", "--negatives", "within_modality", "--jobs", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["result"]["peak_layer"], 3);
    EXPECT_EQ(j["result"]["per_layer_cv_acc"].size(), 6u);
    EXPECT_EQ(j["seeds"]["folds"], 0);
    EXPECT_TRUE(j["inputs"].contains("manifest"));
    // a rerun reproduces the report byte for byte, whatever the worker count
    const auto again = run_cli({"probe-sweep", "--manifest", manifest, "--task", "vision", "--negatives", "within_modality", "--jobs", "1"});
    EXPECT_EQ(again.out, r.out);
    const auto bad = run_cli({"probe-sweep", "--manifest", manifest, "--task", "smell"});
    EXPECT_EQ(bad.code, 2);
}

TEST(Cli, LensAndResidualize) {
    TempDir dir("cli_lens");
    const auto manifest = make_synth(dir);
    const auto l = run_cli({"lens", "--manifest", manifest, "--check-every", "1"});
    ASSERT_EQ(l.code, 0) << l.err;
    const auto lj = json::parse(l.out);
    EXPECT_LE(lj["result"]["normalization"]["max_abs_error"].get<double>(), 1e-6);
    EXPECT_EQ(lj["result"]["normalization"]["checked_samples"], 160);
    const auto r = run_cli({"residualize", "--manifest", manifest, "--layer", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rj = json::parse(r.out);
    EXPECT_EQ(rj["result"]["layer"], 3);
    EXPECT_EQ(rj["result"]["fold_projector_rank"].size(), 4u);
}

TEST(Cli, StatsSubcommands) {
    TempDir dir("cli_stats");
    const auto manifest = make_synth(dir);
    const auto m = gapdiag::load_manifest(manifest);
    json preds{{"format_version", 1}, {"predictions", json::array()}};
    for (const auto& s : m.samples)
        preds["predictions"].push_back({{"sample_id", s.sample_id}, {"prediction", s.split.misleading() ? "A" : std::string(1, gapdiag::letter_char(s.correct_letter))}});
    write_text(dir / "preds.json", preds.dump());

    auto r = run_cli({"stats", "score", "--manifest", manifest, "--predictions", (dir / "preds.json").string(), "--B", "200"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = json::parse(r.out);
    EXPECT_DOUBLE_EQ(j["result"]["report"]["acc"]["std_v"].get<double>(), 100.0);
    EXPECT_DOUBLE_EQ(j["result"]["report"]["acc"]["mis_a"].get<double>(), 0.0);
    EXPECT_DOUBLE_EQ(j["result"]["report"]["bal"].get<double>(), 50.0);
    write_text(dir / "score.json", r.out);

    write_text(dir / "values.json", "[0,1,1,0,1,1,1,0]");
    r = run_cli({"stats", "bootstrap", "--values", (dir / "values.json").string(), "--B", "500", "--percent"});
    ASSERT_EQ(r.code, 0) << r.err;
    j = json::parse(r.out);
    EXPECT_DOUBLE_EQ(j["result"]["mean"].get<double>(), 62.5);
    EXPECT_LE(j["result"]["lo"].get<double>(), 62.5);

    write_text(dir / "diffs.json", "[1,1,1,1,1,1,1,1,1,1]");
    r = run_cli({"stats", "paired", "--diffs", (dir / "diffs.json").string(), "--B", "1000"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out)["result"]["p"], "p<1/1000");

    r = run_cli({"stats", "shuffle", "--manifest", manifest, "--shuffles", "2"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out)["result"]["draws"], 2 * m.samples.size());

    r = run_cli({"stats", "consistency", "--manifest", manifest, "--predictions", (dir / "preds.json").string(), (dir / "preds.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;

    r = run_cli({"stats", "temporal", "--manifest", manifest, "--predictions", (dir / "preds.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    j = json::parse(r.out);
    EXPECT_GT(j["result"]["diagnostic"]["cv_acc_mean"].get<double>(), 95.0);

    r = run_cli({"stats", "interference", "--av", (dir / "score.json").string(), "--single", (dir / "score.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_DOUBLE_EQ(json::parse(r.out)["result"]["delta_pp"].get<double>(), 0.0);

    r = run_cli({"report", (dir / "score.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("| synthetic | 100.0 | 100.0 | 0.0 | 0.0 | 50.0 |"), std::string::npos) << r.out;

    EXPECT_EQ(run_cli({"stats", "bootstrap", "--values", (dir / "nope.json").string()}).code, 1);
    EXPECT_EQ(run_cli({"stats"}).code, 2);
}

TEST(Cli, ReportRendersEveryKnownSection) {
    std::vector<json> envs;
    envs.push_back(json::parse(R"({"command": "stats score", "config": {"model_name": "M"},
        "result": {"report": {"acc": {"std_v": 71.0, "std_a": 71.6, "mis_v": 6.8, "mis_a": 0.0}, "bal": 37.35}}})"));
    envs.push_back(json::parse(R"({"command": "probe-sweep", "config": {"model_name": "M"},
        "result": {"task": "vision/within_modality", "peak_layer": 7, "peak_acc": 0.93, "final_layer_acc": 0.61}})"));
    const auto md = gapdiag::render_markdown(envs);
    EXPECT_NE(md.find("| M | 71.0 | 71.6 | 6.8 | 0.0 | 37.4 |"), std::string::npos) << md;
    EXPECT_NE(md.find("| M | vision/within_modality | 7 | 93.0 | 61.0 |"), std::string::npos) << md;
}
