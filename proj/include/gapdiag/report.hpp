#pragma once

// Report envelopes shared by every subcommand, and the markdown rendering that
// lays several of them out as result tables.

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/checksum.hpp"
#include "gapdiag/version.hpp"

namespace gapdiag {

// Path as given, with its SHA-256.
inline nlohmann::json file_checksum(const std::string& path) { return {{"path", path}, {"sha256", sha256_file(path)}}; }

// Manifest file plus one digest over every bundle (sample id and file hash, in sample order).
inline nlohmann::json dataset_checksums(const std::string& manifest_path, const Manifest& m) {
    Sha256 all;
    for (const auto& s : m.samples) {
        all.update(s.sample_id);
        all.update(":");
        all.update(sha256_file(m.resolve(s.bundle_path)));
        all.update("\n");
    }
    nlohmann::json j{{"manifest", file_checksum(manifest_path)}, {"bundles", {{"count", m.samples.size()}, {"sha256", all.hex()}}}};
    return j;
}

inline nlohmann::json make_envelope(const std::string& command, nlohmann::json config, nlohmann::json seeds, nlohmann::json inputs,
                                    nlohmann::json result) {
    return {{"tool", "gapdiag"},          {"version", kVersion},       {"command", command}, {"config", std::move(config)},
            {"seeds", std::move(seeds)}, {"inputs", std::move(inputs)}, {"result", std::move(result)}};
}

namespace detail {

inline std::string fmt1(const nlohmann::json& v) {
    if (!v.is_number()) return "-";
    char buf[32];
    const double x = v.get<double>();
    const double scaled = x * 10.0;
    std::snprintf(buf, sizeof buf, "%.1f", std::round(scaled + (scaled >= 0 ? 1e-9 : -1e-9)) / 10.0);
    return buf;
}

inline std::string fmt3(const nlohmann::json& v) {
    if (!v.is_number()) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v.get<double>());
    return buf;
}

inline std::string signed1(double x) {
    const std::string s = fmt1(x);
    return x >= 0 ? "+" + s : s;
}

inline std::string model_of(const nlohmann::json& env) { return env.value(nlohmann::json::json_pointer("/config/model_name"), std::string("?")); }

inline std::string split_row(const nlohmann::json& rep) {
    std::string s;
    for (const char* k : {"std_v", "std_a", "mis_v", "mis_a"}) s += " " + fmt1(rep["acc"][k]) + " |";
    return s + " " + fmt1(rep["bal"]) + " |";
}

}  // namespace detail

// Lays out whichever envelopes are present; unknown commands are listed at the end.
inline std::string render_markdown(const std::vector<nlohmann::json>& envs) {
    std::map<std::string, std::vector<const nlohmann::json*>> by;
    for (const auto& e : envs) by[e.value("command", std::string("?"))].push_back(&e);
    std::ostringstream md;
    md << "# gapdiag report\n\n";

    if (by.count("stats score")) {
        md << "## Per-split accuracy\n\n| Model | std_v | std_a | mis_v | mis_a | Bal |\n|---|---|---|---|---|---|\n";
        for (const auto* e : by["stats score"])
            md << "| " << detail::model_of(*e) << " |" << detail::split_row((*e)["result"]["report"]) << "\n";
        md << "\n";
    }

    if (by.count("probe-sweep") || by.count("lens")) {
        md << "## Probing and logit lens\n\n| Model | Task | Peak layer | Probe acc | Final-layer acc |\n|---|---|---|---|---|\n";
        for (const auto* e : by["probe-sweep"]) {
            const auto& r = (*e)["result"];
            md << "| " << detail::model_of(*e) << " | " << r.value("task", std::string("?")) << " | " << r["peak_layer"] << " | "
               << detail::fmt1(100.0 * r["peak_acc"].get<double>()) << " | " << detail::fmt1(100.0 * r["final_layer_acc"].get<double>())
               << " |\n";
        }
        if (by.count("lens")) {
            md << "\n| Model | Lens peak std_v | std_a | mis_v | mis_a | Regime |\n|---|---|---|---|---|---|\n";
            for (const auto* e : by["lens"]) {
                const auto& r = (*e)["result"];
                md << "| " << detail::model_of(*e) << " |";
                for (const char* k : {"std_v", "std_a", "mis_v", "mis_a"}) md << " " << detail::fmt3(r["per_split"][k]["peak_prob"]) << " |";
                md << " " << r.value("regime", std::string("?")) << " |\n";
            }
        }
        md << "\n";
    }

    if (by.count("pgla")) {
        md << "## Probe-guided logit adjustment (held-out folds)\n\n"
              "| Model | Layer | Bal before | Bal after | dBal | std_v | std_a | mis_v | mis_a | Tune-test gap |\n"
              "|---|---|---|---|---|---|---|---|---|---|\n";
        for (const auto* e : by["pgla"]) {
            const auto& r = (*e)["result"];
            const auto& t = r["sweep"]["test"];
            md << "| " << detail::model_of(*e) << " | " << r["layer"] << " | " << detail::fmt1(r["sweep"]["test_baseline"]["bal"]) << " | "
               << detail::fmt1(t["bal"]) << " | " << detail::signed1(r["sweep"]["delta_bal"].get<double>()) << " |";
            for (const char* k : {"std_v", "std_a", "mis_v", "mis_a"}) md << " " << detail::fmt1(t["acc"][k]) << " |";
            md << " " << detail::fmt1(r["sweep"]["tune_test_gap"]) << " |\n";
        }
        md << "\n## Standard-accuracy budgets\n\n| Model | Budget | Std loss | dBal | Config |\n|---|---|---|---|---|\n";
        for (const auto* e : by["pgla"]) {
            for (const auto& p : (*e)["result"]["pareto"]) {
                const std::string budget = p["budget_pp"].is_number() ? "<=" + detail::fmt1(p["budget_pp"]) + "pp" : "unconstrained";
                std::string cfg = "identity";
                if (p["config"].is_object()) {
                    const auto& c = p["config"];
                    char buf[128];
                    std::snprintf(buf, sizeof buf, "g=%g p=%g a=%g s=%g d=%g", c["gamma"].get<double>(), c["p"].get<double>(),
                                  c["alpha_thresh"].get<double>(), c["s"].get<double>(), c["delta"].get<double>());
                    cfg = buf;
                }
                md << "| " << detail::model_of(*e) << " | " << budget << " | " << detail::fmt1(p["std_loss"]) << " | "
                   << detail::signed1(p["delta_bal"].get<double>()) << " | " << cfg << " |\n";
            }
        }
        md << "\n";
    }

    if (by.count("residualize")) {
        md << "## Text-only baselines\n\n| Model | Task | Features | CV acc |\n|---|---|---|---|\n";
        for (const auto* e : by["residualize"])
            for (const auto& b : (*e)["result"]["baselines"]) {
                md << "| " << detail::model_of(*e) << " | " << (*e)["result"]["task"].get<std::string>() << " | "
                   << b["features"].get<std::string>() << " | ";
                md << (b.contains("mean_acc") ? detail::fmt1(100.0 * b["mean_acc"].get<double>()) : "n/a") << " |\n";
            }
        md << "\n## Residualized probing\n\n| Model | Task | Layer | Original | Residualized | Change |\n|---|---|---|---|---|---|\n";
        for (const auto* e : by["residualize"]) {
            const auto& r = (*e)["result"];
            const double o = 100.0 * r["original"]["mean_acc"].get<double>();
            const double z = 100.0 * r["residualized"]["mean_acc"].get<double>();
            md << "| " << detail::model_of(*e) << " | " << r["task"].get<std::string>() << " | " << r["layer"] << " | " << detail::fmt1(o)
               << " | " << detail::fmt1(z) << " | " << detail::signed1(z - o) << " |\n";
        }
        md << "\n";
    }

    std::vector<std::string> other;
    for (const auto& [cmd, list] : by)
        if (cmd != "stats score" && cmd != "probe-sweep" && cmd != "lens" && cmd != "pgla" && cmd != "residualize") other.push_back(cmd);
    if (!other.empty()) {
        md << "## Other inputs\n\n";
        for (const auto& c : other) md << "- " << c << " (" << by[c].size() << ")\n";
        md << "\n";
    }

    md << "## Provenance\n\n| Command | Version | Seeds | Inputs |\n|---|---|---|---|\n";
    for (const auto& e : envs)
        md << "| " << e.value("command", std::string("?")) << " | " << e.value("version", std::string("?")) << " | `"
           << e.value("seeds", nlohmann::json::object()).dump() << "` | `" << e.value("inputs", nlohmann::json::object()).dump() << "` |\n";
    return md.str();
}

}  // namespace gapdiag
