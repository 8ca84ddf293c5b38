#pragma once

// Command-line front end. run() parses argv, dispatches to a subcommand and
// maps failures onto exit codes:
//   0 success, 1 validation failure or data error, 2 usage error, 3 other.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/lens.hpp"
#include "gapdiag/pgla.hpp"
#include "gapdiag/probe_lab.hpp"
#include "gapdiag/report.hpp"
#include "gapdiag/residualizer.hpp"
#include "gapdiag/stats.hpp"
#include "gapdiag/synth.hpp"
#include "gapdiag/version.hpp"

namespace gapdiag::cli {

enum Exit : int { kOk = 0, kFailed = 1, kUsage = 2, kInternal = 3 };

namespace detail {

using nlohmann::json;

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, path + ": " + e.what());
    }
}

inline void emit(const std::string& out, const std::string& text, std::ostream& stdout_) {
    if (out.empty() || out == "-") {
        stdout_ << text;
        return;
    }
    gapdiag::detail::write_file(out, std::vector<char>(text.begin(), text.end()));
}

inline void emit_json(const std::string& out, const json& j, std::ostream& stdout_) { emit(out, j.dump(2) + "\n", stdout_); }

inline std::vector<std::optional<double>> parse_budgets(const std::string& s) {
    std::vector<std::optional<double>> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        if (tok == "inf" || tok == "unconstrained") {
            out.push_back(std::nullopt);
            continue;
        }
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || v < 0) fail(ErrorKind::Usage, "bad budget '" + tok + "'");
        out.push_back(v);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (!a) return false;
        if (!b) return true;
        return *a < *b;
    });
    if (out.empty() || out.back()) out.push_back(std::nullopt);
    return out;
}

inline json cv_json(const CvResult& r) {
    return {{"fold_acc", r.fold_acc}, {"mean_acc", r.mean_acc}, {"n", r.sample_index.size()}};
}

// Hygiene record for a grouped fold assignment over a task's samples.
inline json fold_summary(const FoldAssignment& f) {
    json sizes = json::array();
    for (int i = 0; i < f.k; ++i) sizes.push_back(f.videos_in(i).size());
    return {{"k", f.k}, {"videos_per_fold", sizes}, {"group_disjoint", true}};
}

// Concatenated lists of videos in every fold except f.
inline std::vector<std::string> videos_outside(const FoldAssignment& folds, int f) {
    std::vector<std::string> out;
    for (const auto& [v, g] : folds.fold_of)
        if (g != f) out.push_back(v);
    return out;
}

inline void check_folds(const FoldAssignment& folds, const std::string& context) {
    for (int f = 0; f < folds.k; ++f) assert_group_disjoint(videos_outside(folds, f), folds.videos_in(f), context);
}

struct Common {
    std::string out;
    unsigned jobs = 1;
};

inline void add_common(CLI::App* sub, Common& c, bool with_jobs = true) {
    sub->add_option("--out", c.out, "output path ('-' or omitted: stdout)");
    if (with_jobs) sub->add_option("--jobs", c.jobs, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using detail::json;
    CLI::App app{"gapdiag: hidden-state diagnostics for multiple-choice evaluations", "gapdiag"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // validate
    detail::Common vc;
    std::string v_manifest;
    auto* validate = app.add_subcommand("validate", "check a dataset against the bundle-store invariants");
    validate->add_option("--manifest", v_manifest, "manifest.json")->required();
    detail::add_common(validate, vc, false);

    // synth
    std::string s_config, s_out;
    std::optional<std::uint64_t> s_seed, s_shuffle_seed;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with planted signal");
    synth->add_option("--config", s_config, "synth config JSON (missing keys take defaults)");
    synth->add_option("--out", s_out, "output directory")->required();
    synth->add_option("--seed", s_seed, "overrides the config seed");
    synth->add_option("--label-shuffle", s_shuffle_seed, "also write manifest.label_shuffled.json, permuted with this seed");

    // probe-sweep
    detail::Common pc;
    std::string p_manifest, p_task = "binary", p_neg = "all_standard_1to2";
    int p_k = 4;
    std::uint64_t p_seed = 0;
    double p_C = 1.0;
    auto* sweep = app.add_subcommand("probe-sweep", "per-layer linear probes under grouped k-fold CV");
    sweep->add_option("--manifest", p_manifest)->required();
    sweep->add_option("--task", p_task, "binary|vision|audio");
    sweep->add_option("--negatives", p_neg, "all_standard_1to2|within_modality");
    sweep->add_option("--k", p_k);
    sweep->add_option("--seed", p_seed);
    sweep->add_option("--C", p_C, "inverse L2 strength");
    detail::add_common(sweep, pc);

    // residualize
    detail::Common rc;
    std::string r_manifest, r_emb, r_task = "vision", r_neg = "within_modality";
    std::optional<int> r_layer;
    int r_k = 4;
    std::uint64_t r_seed = 0;
    double r_alpha = 1.0, r_tol = 1e-5, r_C = 1.0;
    auto* resid = app.add_subcommand("residualize", "probe after removing text-predictable variance; text-only baselines");
    resid->add_option("--manifest", r_manifest)->required();
    resid->add_option("--embeddings", r_emb, "text embedding table (default: from the manifest)");
    resid->add_option("--task", r_task, "vision|audio|binary");
    resid->add_option("--negatives", r_neg);
    resid->add_option("--layer", r_layer, "probe layer (default: peak of a sweep on the same folds)");
    resid->add_option("--k", r_k);
    resid->add_option("--seed", r_seed);
    resid->add_option("--alpha", r_alpha, "ridge strength");
    resid->add_option("--rel-tol", r_tol, "singular values above rel_tol * s_max are removed");
    resid->add_option("--C", r_C);
    detail::add_common(resid, rc);

    // lens
    detail::Common lc;
    std::string l_manifest, l_assets;
    std::size_t l_every = 16;
    auto* lens = app.add_subcommand("lens", "logit-lens correct-token probability per layer");
    lens->add_option("--manifest", l_manifest)->required();
    lens->add_option("--assets", l_assets, "model assets (default: from the manifest)");
    lens->add_option("--check-every", l_every, "verify softmax normalization on every n-th sample");
    detail::add_common(lens, lc);

    // pgla
    detail::Common gc;
    std::string g_manifest, g_budgets = "1,2,3,10", g_probe = "mlp";
    std::optional<int> g_layer;
    int g_k = 5;
    std::uint64_t g_seed = 0;
    std::optional<std::uint64_t> g_probe_seed, g_cv_seed;
    double g_frac = 0.25;
    auto* pgla = app.add_subcommand("pgla", "probe-guided logit adjustment: probe, grid sweep, budgets");
    pgla->add_option("--manifest", g_manifest)->required();
    pgla->add_option("--layer", g_layer, "probe layer (default: peak of a binary probe sweep)");
    pgla->add_option("--k", g_k);
    pgla->add_option("--seed", g_seed, "split seed; probe and CV seeds derive from it unless given");
    pgla->add_option("--probe-seed", g_probe_seed);
    pgla->add_option("--cv-seed", g_cv_seed);
    pgla->add_option("--budgets", g_budgets, "comma-separated pp budgets; unconstrained is always added");
    pgla->add_option("--probe", g_probe, "mlp|enhanced");
    pgla->add_option("--train-fraction", g_frac);
    detail::add_common(pgla, gc);

    // stats
    auto* stats = app.add_subcommand("stats", "scoring and resampling statistics");
    stats->require_subcommand(1);
    detail::Common sc;
    std::string st_manifest, st_pred, st_values, st_base, st_treat, st_diffs, st_av, st_single, st_dir = "A->V", st_records;
    std::vector<std::string> st_preds;
    std::size_t st_B = 10000;
    double st_level = 0.95;
    std::uint64_t st_seed = 0;
    int st_K = 3, st_k = 5;
    bool st_percent = false;

    auto* s_score = stats->add_subcommand("score", "per-split accuracy and balanced accuracy");
    s_score->add_option("--manifest", st_manifest)->required();
    s_score->add_option("--predictions", st_pred)->required();
    s_score->add_option("--B", st_B, "bootstrap resamples for per-split CIs (0: none)");
    s_score->add_option("--seed", st_seed);
    detail::add_common(s_score, sc);

    auto* s_boot = stats->add_subcommand("bootstrap", "percentile bootstrap CI of a mean");
    s_boot->add_option("--values", st_values, "JSON array (or {\"values\": [...]})")->required();
    s_boot->add_option("--B", st_B);
    s_boot->add_option("--level", st_level);
    s_boot->add_option("--seed", st_seed);
    s_boot->add_flag("--percent", st_percent, "multiply values by 100");
    detail::add_common(s_boot, sc);

    auto* s_paired = stats->add_subcommand("paired", "paired bootstrap test that treatment beats baseline");
    s_paired->add_option("--manifest", st_manifest);
    s_paired->add_option("--baseline", st_base, "prediction file");
    s_paired->add_option("--treatment", st_treat, "prediction file");
    s_paired->add_option("--diffs", st_diffs, "JSON array of per-sample differences instead of prediction files");
    s_paired->add_option("--B", st_B);
    s_paired->add_option("--seed", st_seed);
    detail::add_common(s_paired, sc);

    auto* s_shuffle = stats->add_subcommand("shuffle", "option permutations per sample and shuffle id");
    s_shuffle->add_option("--manifest", st_manifest)->required();
    s_shuffle->add_option("--shuffles", st_K, "number of shuffles K");
    detail::add_common(s_shuffle, sc, false);

    auto* s_cons = stats->add_subcommand("consistency", "never/always/sometimes correct across shuffles");
    s_cons->add_option("--manifest", st_manifest)->required();
    s_cons->add_option("--predictions", st_preds, "one prediction file per shuffle")->required()->expected(1, -1);
    detail::add_common(s_cons, sc, false);

    auto* s_temp = stats->add_subcommand("temporal", "accuracy by duration and answer position; logistic diagnostic");
    s_temp->add_option("--manifest", st_manifest)->required();
    s_temp->add_option("--predictions", st_pred)->required();
    s_temp->add_option("--k", st_k);
    s_temp->add_option("--seed", st_seed);
    detail::add_common(s_temp, sc, false);

    auto* s_inter = stats->add_subcommand("interference", "single-modality minus audio-visual misleading accuracy");
    s_inter->add_option("--av", st_av, "split report (or stats score output) for the audio-visual run")->required();
    s_inter->add_option("--single", st_single, "split report for the single-modality run")->required();
    s_inter->add_option("--direction", st_dir, "A->V|V->A");
    detail::add_common(s_inter, sc, false);

    auto* s_judge = stats->add_subcommand("judge", "aggregate judge verdicts into P-Acc, E-Acc, R+R, R+W");
    s_judge->add_option("--records", st_records)->required();
    detail::add_common(s_judge, sc, false);

    // report
    std::vector<std::string> rep_inputs;
    std::string rep_out;
    auto* report = app.add_subcommand("report", "render analysis JSONs as markdown tables");
    report->add_option("inputs", rep_inputs, "report JSON files")->required()->expected(1, -1);
    report->add_option("--out", rep_out);

    if (argc > 1 && argv[1][0] != '-') {
        const auto subs = app.get_subcommands([](CLI::App*) { return true; });
        if (std::none_of(subs.begin(), subs.end(), [&](CLI::App* s) { return s->get_name() == argv[1]; })) {
            err << "gapdiag: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
            return kUsage;
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "gapdiag: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        if (validate->parsed()) {
            const auto m = load_manifest(v_manifest);
            const auto rep = validate_dataset(m);
            const auto env = make_envelope("validate", {{"manifest", v_manifest}, {"model_name", m.model_name}}, json::object(),
                                           {{"manifest", file_checksum(v_manifest)}}, to_json(rep));
            detail::emit_json(vc.out, env, out);
            if (!rep.ok()) {
                err << "gapdiag: validation failed with " << rep.failures() << " issue(s)\n";
                return kFailed;
            }
            return kOk;
        }

        if (synth->parsed()) {
            SynthConfig cfg = s_config.empty() ? SynthConfig{} : synth_config_from_json(detail::read_json(s_config));
            if (s_seed) cfg.seed = *s_seed;
            cfg.validate();
            const auto data = generate_synthetic(cfg);
            write_synthetic(data, s_out);
            json cfgj = to_json(cfg);
            if (s_shuffle_seed) {
                save_manifest(fs::path(s_out) / "manifest.label_shuffled.json", generate_label_shuffled(data.manifest, *s_shuffle_seed));
                cfgj["label_shuffle_seed"] = *s_shuffle_seed;
            }
            const auto txt = cfgj.dump(2) + "\n";
            gapdiag::detail::write_file(fs::path(s_out) / "synth_config.json", std::vector<char>(txt.begin(), txt.end()));
            err << "gapdiag: wrote " << data.manifest.samples.size() << " samples to " << s_out << "\n";
            return kOk;
        }

        if (sweep->parsed()) {
            const ProbeTask task{parse_task_kind(p_task), parse_negative_policy(p_neg)};
            const auto m = load_manifest(p_manifest);
            const auto d = load_dataset(m);
            const auto ts = select_task(d.manifest, task);
            std::vector<const SampleMeta*> metas;
            for (auto i : ts.index) metas.push_back(&d.manifest.samples[i]);
            const auto folds = make_folds(metas, p_k, p_seed);
            detail::check_folds(folds, "probe-sweep folds");
            const auto r = layer_sweep(d, task, folds, p_C, pc.jobs);
            const auto n_pos = static_cast<std::size_t>(std::count(ts.y.begin(), ts.y.end(), 1));
            json result{{"task", task.name()},
                        {"per_layer_cv_acc", r.per_layer_cv_acc},
                        {"peak_layer", r.peak_layer},
                        {"peak_acc", r.peak_acc},
                        {"final_layer_acc", r.final_layer_acc},
                        {"n_pos", n_pos},
                        {"n_neg", ts.y.size() - n_pos},
                        {"folds", detail::fold_summary(folds)},
                        {"layer_indexing", "0-based"}};
            const auto env = make_envelope(
                "probe-sweep",
                {{"manifest", p_manifest}, {"model_name", m.model_name}, {"task", p_task}, {"negatives", p_neg}, {"k", p_k}, {"C", p_C},
                 {"probe", "logistic L-BFGS, z-scored inputs, grad inf-norm tol 1e-4, max 1000 iterations"}},
                {{"folds", p_seed}}, dataset_checksums(p_manifest, m), result);
            detail::emit_json(pc.out, env, out);
            return kOk;
        }

        if (resid->parsed()) {
            const ProbeTask task{parse_task_kind(r_task), parse_negative_policy(r_neg)};
            const auto m = load_manifest(r_manifest);
            std::string emb_path = r_emb;
            if (emb_path.empty()) {
                if (!m.embeddings_path) fail(ErrorKind::MissingText, "no --embeddings and the manifest names none");
                emb_path = m.resolve(*m.embeddings_path).string();
            }
            const auto emb = read_embeddings(emb_path);
            const auto d = load_dataset(m);
            const auto ts = select_task(d.manifest, task);
            std::vector<const SampleMeta*> metas;
            for (auto i : ts.index) metas.push_back(&d.manifest.samples[i]);
            const auto folds = make_folds(metas, r_k, r_seed);
            detail::check_folds(folds, "residualizer folds");

            std::string layer_source = "flag";
            std::size_t layer = 0;
            json sweep_j;
            if (r_layer) {
                if (*r_layer < 0) fail(ErrorKind::Usage, "--layer must be >= 0");
                layer = static_cast<std::size_t>(*r_layer);
            } else {
                const auto sw = layer_sweep(d, task, folds, r_C, rc.jobs);
                layer = static_cast<std::size_t>(sw.peak_layer);
                layer_source = "global_sweep_peak";
                sweep_j = sw.per_layer_cv_acc;
            }
            const auto rr = residualized_probe_cv(d, emb, task, layer, folds, r_C, r_alpha, r_tol);

            json baselines = json::array();
            for (auto feat : {TextFeatures::tfidf, TextFeatures::external_embeddings}) {
                try {
                    const auto b = text_baseline_probe(feat, d.manifest, &emb, task, folds, r_C);
                    baselines.push_back({{"features", b.features}, {"mean_acc", b.cv.mean_acc}, {"fold_acc", b.cv.fold_acc}});
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::MissingText) throw;
                    baselines.push_back({{"features", feat == TextFeatures::tfidf ? "tfidf" : "external_embeddings"}, {"unavailable", e.what()}});
                }
            }
            json result{{"task", rr.task},
                        {"layer", rr.layer},
                        {"layer_source", layer_source},
                        {"original", detail::cv_json(rr.original)},
                        {"residualized", detail::cv_json(rr.residualized)},
                        {"fold_projector_rank", rr.fold_rank},
                        {"fold_ridge_checksum", rr.fold_ridge_hash},
                        {"baselines", baselines},
                        {"folds", detail::fold_summary(folds)}};
            if (!sweep_j.is_null()) result["layer_sweep_cv_acc"] = sweep_j;
            json inputs = dataset_checksums(r_manifest, m);
            inputs["embeddings"] = file_checksum(emb_path);
            const auto env = make_envelope("residualize",
                                           {{"manifest", r_manifest},
                                            {"model_name", m.model_name},
                                            {"embeddings", emb_path},
                                            {"task", r_task},
                                            {"negatives", r_neg},
                                            {"k", r_k},
                                            {"alpha", r_alpha},
                                            {"rel_tol", r_tol},
                                            {"C", r_C},
                                            {"tfidf", "ASCII lowercase, unicode-whitespace tokens, unigrams+bigrams, idf=ln((1+n)/(1+df))+1, "
                                                      "L2-normalized rows, vocabulary fit per training fold"}},
                                           {{"folds", r_seed}}, inputs, result);
            detail::emit_json(rc.out, env, out);
            return kOk;
        }

        if (lens->parsed()) {
            const auto m = load_manifest(l_manifest);
            std::string assets_path = l_assets;
            if (assets_path.empty()) {
                if (!m.assets_path) fail(ErrorKind::MissingAssets, "no --assets and the manifest names none");
                assets_path = m.resolve(*m.assets_path).string();
            }
            if (!fs::exists(assets_path)) fail(ErrorKind::MissingAssets, "assets file not found: " + assets_path);
            const auto assets = read_assets(assets_path);
            const auto d = load_dataset(m);
            const auto t = lens_trajectory(d, &assets, lc.jobs, l_every);
            json inputs = dataset_checksums(l_manifest, m);
            inputs["assets"] = file_checksum(assets_path);
            const auto env = make_envelope("lens",
                                           {{"manifest", l_manifest},
                                            {"model_name", m.model_name},
                                            {"assets", assets_path},
                                            {"norm_eps", assets.norm_eps},
                                            {"check_every", l_every},
                                            {"softmax", "float64, max-subtracted"}},
                                           json::object(), inputs, to_json(t));
            detail::emit_json(lc.out, env, out);
            return kOk;
        }

        if (pgla->parsed()) {
            if (g_probe != "mlp" && g_probe != "enhanced") fail(ErrorKind::Usage, "--probe must be mlp or enhanced");
            const auto budgets = detail::parse_budgets(g_budgets);
            const std::uint64_t probe_seed = g_probe_seed.value_or(g_seed + 1);
            const std::uint64_t cv_seed = g_cv_seed.value_or(g_seed + 2);
            const auto m = load_manifest(g_manifest);
            const auto d = load_dataset(m);

            std::string layer_source = "flag";
            std::size_t layer = 0;
            if (g_layer) {
                if (*g_layer < 0) fail(ErrorKind::Usage, "--layer must be >= 0");
                layer = static_cast<std::size_t>(*g_layer);
            } else {
                const auto folds = make_folds(d.manifest.samples, 4, g_seed);
                layer = static_cast<std::size_t>(layer_sweep(d, ProbeTask{}, folds, 1.0, gc.jobs).peak_layer);
                layer_source = "binary_sweep_peak";
            }
            const auto split = probe_eval_split(d.manifest, g_frac, g_seed);
            std::vector<double> p_mis;
            json probe_j;
            if (g_probe == "mlp") {
                const auto probe = train_mlp_probe(d, layer, split, probe_seed);
                p_mis = probe.p_mis(d, split.eval_idx);
                probe_j = {{"kind", "mlp"},
                           {"architecture", "d_hidden -> 256 ReLU -> 2"},
                           {"optimizer", "Adam lr=1e-3 betas=(0.9,0.999) eps=1e-8, full batch, 100 epochs"},
                           {"init", "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))"},
                           {"final_train_loss", probe.model.loss_history.back()}};
            } else {
                const auto ep = train_enhanced_probe(d, layer, split, probe_seed);
                p_mis = ep.p_mis(d, split.eval_idx);
                probe_j = {{"kind", "enhanced"},
                           {"window", ep.bases.window},
                           {"pca_dim", ep.bases.pca.basis.cols()},
                           {"pca_retained_variance", ep.bases.pca.retained},
                           {"stacker_inputs", stacker_feature_names()},
                           {"stacker_weights", std::vector<double>(ep.stacker.fit.w.data(), ep.stacker.fit.w.data() + ep.stacker.fit.w.size())},
                           {"behavioral_features",
                            {{"gap", "max(L_A..L_D) - max(L_E, L_F)"},
                             {"entropy", "entropy (nats) of softmax over the six choice logits"},
                             {"ef_strength", "(L_E + L_F)/2 - mean(L_A..L_D)"}}}};
            }
            const auto y_eval = misleading_labels(d.manifest, split.eval_idx);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < y_eval.size(); ++i) hits += (p_mis[i] > 0.5) == (y_eval[i] == 1);
            probe_j["layer"] = layer;
            probe_j["n_train"] = split.probe_idx.size();
            probe_j["n_eval"] = split.eval_idx.size();
            probe_j["eval_auc"] = roc_auc(p_mis, y_eval);
            probe_j["eval_acc"] = static_cast<double>(hits) / static_cast<double>(y_eval.size());

            const auto res = grid_sweep_cv(d, split.eval_idx, p_mis, split.probe_videos, default_grid(), g_k, cv_seed, gc.jobs);
            const auto pareto = pareto_curve(res, budgets);
            json pj = json::array();
            for (const auto& p : pareto) pj.push_back(to_json(p));
            json budgets_j = json::array();
            for (const auto& b : budgets) budgets_j.push_back(b ? json(*b) : json("unconstrained"));
            json result{{"layer", layer}, {"layer_source", layer_source}, {"probe", probe_j}, {"sweep", to_json(res)}, {"pareto", pj},
                        {"probe_eval_disjoint", true}};
            const auto env = make_envelope("pgla",
                                           {{"manifest", g_manifest},
                                            {"model_name", m.model_name},
                                            {"k", g_k},
                                            {"train_fraction", g_frac},
                                            {"probe", g_probe},
                                            {"budgets", budgets_j},
                                            {"grid", "gamma{0.5,1,2} x p{1,2} x alpha{0.3,0.5,1} x s{0.75,1,1.5} x delta{5,8,12}"},
                                            {"tie_break", "bal, then smaller delta, s, gamma, p, then larger alpha"},
                                            {"beta", "mean(L_E - L_F) over standard samples of the tuning folds"}},
                                           {{"split", g_seed}, {"probe", probe_seed}, {"cv", cv_seed}},
                                           dataset_checksums(g_manifest, m), result);
            detail::emit_json(gc.out, env, out);
            return kOk;
        }

        if (s_score->parsed()) {
            const auto m = load_manifest(st_manifest);
            const auto ps = predictions_from_json(detail::read_json(st_pred), m);
            const auto scored = score_predictions(m, ps);
            json result{{"report", to_json(split_report(scored))}};
            if (st_B > 0) {
                for (int s = 0; s < 4; ++s) {
                    std::vector<int> c;
                    for (std::size_t i = 0; i < scored.meta.size(); ++i)
                        if (scored.meta[i]->split.index() == s) c.push_back(scored.correct[i]);
                    if (c.empty()) continue;
                    const auto ci = bootstrap_ci(c, st_B, 0.95, mix64(st_seed, static_cast<std::uint64_t>(s)), sc.jobs);
                    result["ci95"][std::string(kSplitNames[static_cast<std::size_t>(s)])] = {ci.lo, ci.hi};
                }
            }
            const auto env = make_envelope("stats score", {{"manifest", st_manifest}, {"model_name", m.model_name}, {"B", st_B}},
                                           {{"bootstrap", st_seed}},
                                           {{"manifest", file_checksum(st_manifest)}, {"predictions", file_checksum(st_pred)}}, result);
            detail::emit_json(sc.out, env, out);
            return kOk;
        }

        if (s_boot->parsed()) {
            const auto j = detail::read_json(st_values);
            const auto& arr = j.is_object() && j.contains("values") ? j.at("values") : j;
            if (!arr.is_array()) fail(ErrorKind::Schema, "values must be a JSON array");
            std::vector<double> x;
            for (const auto& v : arr) x.push_back(v.get<double>() * (st_percent ? 100.0 : 1.0));
            const auto ci = bootstrap_mean_ci(x, st_B, st_level, st_seed, sc.jobs);
            const auto env = make_envelope("stats bootstrap", {{"B", st_B}, {"level", st_level}, {"percent", st_percent}},
                                           {{"bootstrap", st_seed}}, {{"values", file_checksum(st_values)}},
                                           {{"mean", ci.mean}, {"lo", ci.lo}, {"hi", ci.hi}, {"n", x.size()}});
            detail::emit_json(sc.out, env, out);
            return kOk;
        }

        if (s_paired->parsed()) {
            std::vector<double> diffs;
            json inputs = json::object();
            if (!st_diffs.empty()) {
                const auto j = detail::read_json(st_diffs);
                if (!j.is_array()) fail(ErrorKind::Schema, "diffs must be a JSON array");
                for (const auto& v : j) diffs.push_back(v.get<double>());
                inputs["diffs"] = file_checksum(st_diffs);
            } else {
                if (st_manifest.empty() || st_base.empty() || st_treat.empty())
                    fail(ErrorKind::Usage, "paired needs --diffs, or --manifest with --baseline and --treatment");
                const auto m = load_manifest(st_manifest);
                const auto a = score_predictions(m, predictions_from_json(detail::read_json(st_base), m));
                const auto b = score_predictions(m, predictions_from_json(detail::read_json(st_treat), m));
                for (std::size_t i = 0; i < a.correct.size(); ++i) diffs.push_back(b.correct[i] - a.correct[i]);
                inputs = {{"manifest", file_checksum(st_manifest)}, {"baseline", file_checksum(st_base)}, {"treatment", file_checksum(st_treat)}};
            }
            const auto t = paired_bootstrap_p(diffs, st_B, st_seed, sc.jobs);
            json result{{"p", t.str()}, {"p_value", t.p}, {"below_resolution", t.below_resolution()},
                        {"observed_mean_diff", t.observed_mean}, {"n", diffs.size()}, {"B", t.B},
                        {"tie_convention", "resample means <= 0 count against the treatment"}};
            const auto env = make_envelope("stats paired", {{"B", st_B}}, {{"bootstrap", st_seed}}, inputs, result);
            detail::emit_json(sc.out, env, out);
            return kOk;
        }

        if (s_shuffle->parsed()) {
            if (st_K < 1) fail(ErrorKind::Usage, "--shuffles must be >= 1");
            const auto m = load_manifest(st_manifest);
            json perms = json::array();
            std::array<std::size_t, 6> at{};
            std::size_t draws = 0;
            for (const auto& s : m.samples) {
                json row{{"sample_id", s.sample_id}};
                for (int k = 0; k < st_K; ++k) {
                    const auto p = shuffle_permutation(s.video_id, letter_char(s.correct_letter), static_cast<std::uint64_t>(k));
                    row["order"].push_back(p.str());
                    ++at[static_cast<std::size_t>(p.position_of(s.correct_letter))];
                    ++draws;
                }
                perms.push_back(row);
            }
            json freq = json::array();
            for (auto c : at) freq.push_back(100.0 * static_cast<double>(c) / static_cast<double>(draws));
            json result{{"gold_position_pct", freq}, {"draws", draws}, {"permutations", perms},
                        {"convention", "order[i] = original option shown at position i"}};
            const auto env = make_envelope(
                "stats shuffle",
                {{"manifest", st_manifest}, {"model_name", m.model_name}, {"K", st_K},
                 {"seed_rule", "first 8 bytes (big-endian) of MD5(video_id|correct_letter|shuffle_id); splitmix64 Fisher-Yates, i=5..1"}},
                json::object(), {{"manifest", file_checksum(st_manifest)}}, result);
            detail::emit_json(sc.out, env, out);
            return kOk;
        }

        if (s_cons->parsed()) {
            const auto m = load_manifest(st_manifest);
            std::vector<PredictionSet> sets;
            json inputs{{"manifest", file_checksum(st_manifest)}};
            for (const auto& p : st_preds) {
                sets.push_back(predictions_from_json(detail::read_json(p), m));
                inputs["predictions"].push_back(file_checksum(p));
            }
            const auto r = consistency_analysis(sets, m);
            const auto env = make_envelope("stats consistency", {{"manifest", st_manifest}, {"model_name", m.model_name}}, json::object(),
                                           inputs, to_json(r));
            detail::emit_json(sc.out, env, out);
            return kOk;
        }

        if (s_temp->parsed()) {
            const auto m = load_manifest(st_manifest);
            const auto scored = score_predictions(m, predictions_from_json(detail::read_json(st_pred), m));
            json result{{"stratified", to_json(temporal_stratify(scored))}, {"diagnostic", to_json(temporal_logit_diagnostic(scored, st_k, st_seed))}};
            const auto env = make_envelope("stats temporal", {{"manifest", st_manifest}, {"model_name", m.model_name}, {"k", st_k}},
                                           {{"folds", st_seed}},
                                           {{"manifest", file_checksum(st_manifest)}, {"predictions", file_checksum(st_pred)}}, result);
            detail::emit_json(sc.out, env, out);
            return kOk;
        }

        if (s_inter->parsed()) {
            auto load = [](const std::string& p) {
                auto j = detail::read_json(p);
                if (j.contains("result") && j["result"].contains("report")) return split_report_from_json(j["result"]["report"]);
                return split_report_from_json(j);
            };
            const auto dir = parse_direction(st_dir);
            const double delta = interference_delta(load(st_av), load(st_single), dir);
            const auto env = make_envelope("stats interference",
                                           {{"direction", dir == Direction::audio_to_vision ? "A->V" : "V->A"},
                                            {"definition", dir == Direction::audio_to_vision ? "mis_v(single) - mis_v(av)" : "mis_a(single) - mis_a(av)"}},
                                           json::object(), {{"av", file_checksum(st_av)}, {"single", file_checksum(st_single)}},
                                           {{"delta_pp", delta}, {"delta_pp_rounded", round1(delta)}});
            detail::emit_json(sc.out, env, out);
            return kOk;
        }

        if (s_judge->parsed()) {
            const auto r = judge_aggregate(judge_records_from_json(detail::read_json(st_records)));
            const auto env = make_envelope("stats judge", json::object(), json::object(), {{"records", file_checksum(st_records)}}, to_json(r));
            detail::emit_json(sc.out, env, out);
            return kOk;
        }

        if (report->parsed()) {
            std::vector<json> envs;
            for (const auto& p : rep_inputs) envs.push_back(detail::read_json(p));
            detail::emit(rep_out, render_markdown(envs), out);
            return kOk;
        }
    } catch (const Error& e) {
        err << "gapdiag: " << e.what() << "\n";
        if (e.kind() == ErrorKind::Usage || e.kind() == ErrorKind::Config) return kUsage;
        return kFailed;
    } catch (const std::exception& e) {
        err << "gapdiag: internal error: " << e.what() << "\n";
        return kInternal;
    }
    err << app.help();
    return kUsage;
}

}  // namespace gapdiag::cli
