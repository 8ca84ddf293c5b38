#pragma once

// Per-layer linear probing of hidden states under grouped stratified CV.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/folds.hpp"
#include "gapdiag/logistic.hpp"
#include "gapdiag/parallel.hpp"

namespace gapdiag {

enum class TaskKind { binary, vision, audio };
enum class NegativePolicy { all_standard_1to2, within_modality };

inline TaskKind parse_task_kind(const std::string& s) {
    if (s == "binary") return TaskKind::binary;
    if (s == "vision") return TaskKind::vision;
    if (s == "audio") return TaskKind::audio;
    fail(ErrorKind::Usage, "unknown task '" + s + "' (binary|vision|audio)");
}

inline NegativePolicy parse_negative_policy(const std::string& s) {
    if (s == "all_standard_1to2") return NegativePolicy::all_standard_1to2;
    if (s == "within_modality") return NegativePolicy::within_modality;
    fail(ErrorKind::Usage, "unknown negatives policy '" + s + "' (all_standard_1to2|within_modality)");
}

// Label rule: which samples take part and whether they are positives.
struct ProbeTask {
    TaskKind kind = TaskKind::binary;
    NegativePolicy negatives = NegativePolicy::all_standard_1to2;

    std::optional<int> label(const SampleMeta& s) const {
        if (kind == TaskKind::binary) return s.split.misleading() ? 1 : 0;
        const Modality target = kind == TaskKind::vision ? Modality::vision : Modality::audio;
        if (s.split.misleading()) {
            if (s.split.modality == target) return 1;
            return std::nullopt;
        }
        if (negatives == NegativePolicy::all_standard_1to2 || s.split.modality == target) return 0;
        return std::nullopt;
    }

    std::string name() const {
        switch (kind) {
            case TaskKind::binary: return "binary";
            case TaskKind::vision:
                return negatives == NegativePolicy::within_modality ? "vision/within_modality" : "vision/all_standard_1to2";
            case TaskKind::audio:
                return negatives == NegativePolicy::within_modality ? "audio/within_modality" : "audio/all_standard_1to2";
        }
        return "?";
    }
};

struct TaskSamples {
    std::vector<std::size_t> index;  // dataset sample indices taking part
    std::vector<int> y;              // aligned labels
};

inline TaskSamples select_task(const Manifest& m, const ProbeTask& task) {
    TaskSamples t;
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        if (auto l = task.label(m.samples[i])) {
            t.index.push_back(i);
            t.y.push_back(*l);
        }
    }
    if (t.index.empty()) fail(ErrorKind::MissingSplit, "task " + task.name() + " selects no samples");
    const auto pos = std::count(t.y.begin(), t.y.end(), 1);
    if (pos == 0 || pos == static_cast<long>(t.y.size()))
        fail(ErrorKind::MissingSplit, "task " + task.name() + " lacks one of its classes");
    return t;
}

inline Mat layer_matrix(const Dataset& d, std::size_t layer, const std::vector<std::size_t>& rows) {
    if (layer >= d.shape.n_layers) fail(ErrorKind::Shape, "layer " + std::to_string(layer) + " out of range");
    Mat X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.shape.d_hidden));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto h = d.bundles[rows[r]].layer(layer);
        for (std::size_t j = 0; j < h.size(); ++j)
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = static_cast<double>(h[j]);
    }
    return X;
}

struct LinearProbe {
    int layer = -1;
    LogisticModel model;
};

inline LinearProbe train_linear_probe(const Mat& X, const std::vector<int>& y, double reg_C = 1.0, int layer = -1) {
    const auto pos = std::count(y.begin(), y.end(), 1);
    if (pos < 2 || static_cast<long>(y.size()) - pos < 2) {
        if (pos == 0 || pos == static_cast<long>(y.size())) fail(ErrorKind::DegenerateLabels, "labels contain a single class");
        fail(ErrorKind::DegenerateLabels, "need at least 2 samples per class");
    }
    LogisticOptions opt;
    opt.reg_C = reg_C;
    return {layer, LogisticModel::train(X, y, opt)};
}

// Result of one grouped CV run over a task's samples.
struct CvResult {
    std::vector<double> fold_acc;
    double mean_acc = 0.0;
    std::vector<std::size_t> sample_index;  // dataset indices (task order)
    std::vector<int> correct;               // held-out correctness, aligned with sample_index
    std::vector<std::uint64_t> fold_param_hash;  // checksum of each fold's fitted probe
};

inline std::uint64_t probe_checksum(const LogisticModel& m) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto eat = [&h](const double* p, Eigen::Index n) {
        const auto* b = reinterpret_cast<const unsigned char*>(p);
        for (Eigen::Index i = 0; i < n * static_cast<Eigen::Index>(sizeof(double)); ++i) {
            h ^= b[i];
            h *= 0x100000001b3ULL;
        }
    };
    eat(m.fit.w.data(), m.fit.w.size());
    eat(&m.fit.b, 1);
    eat(m.scaler.mean.data(), m.scaler.mean.size());
    eat(m.scaler.std.data(), m.scaler.std.size());
    return h;
}

// Builds (train, test) design matrices for the given dataset indices.
using FeatureFn = std::function<std::pair<Mat, Mat>(const std::vector<std::size_t>& train, const std::vector<std::size_t>& test)>;

inline CvResult cross_validate(const Manifest& m, const TaskSamples& task, const FoldAssignment& folds, const FeatureFn& features,
                               double reg_C = 1.0) {
    CvResult res;
    res.sample_index = task.index;
    res.correct.assign(task.index.size(), 0);
    std::vector<int> fold_of(task.index.size());
    for (std::size_t r = 0; r < task.index.size(); ++r) fold_of[r] = folds.fold(m.samples[task.index[r]].video_id);

    for (int f = 0; f < folds.k; ++f) {
        std::vector<std::size_t> tr, te, te_pos;
        std::vector<int> ytr, yte;
        for (std::size_t r = 0; r < task.index.size(); ++r) {
            if (fold_of[r] == f) {
                te.push_back(task.index[r]);
                te_pos.push_back(r);
                yte.push_back(task.y[r]);
            } else {
                tr.push_back(task.index[r]);
                ytr.push_back(task.y[r]);
            }
        }
        if (te.empty()) continue;
        auto [Xtr, Xte] = features(tr, te);
        const auto probe = train_linear_probe(Xtr, ytr, reg_C);
        res.fold_param_hash.push_back(probe_checksum(probe.model));
        const auto pred = probe.model.predict(Xte);
        int hits = 0;
        for (std::size_t i = 0; i < te.size(); ++i) {
            const int ok = pred[i] == yte[i] ? 1 : 0;
            res.correct[te_pos[i]] = ok;
            hits += ok;
        }
        res.fold_acc.push_back(static_cast<double>(hits) / static_cast<double>(te.size()));
    }
    double sum = 0.0;
    for (double a : res.fold_acc) sum += a;
    res.mean_acc = res.fold_acc.empty() ? 0.0 : sum / static_cast<double>(res.fold_acc.size());
    return res;
}

inline FeatureFn hidden_state_features(const Dataset& d, std::size_t layer) {
    return [&d, layer](const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
        return std::pair{layer_matrix(d, layer, tr), layer_matrix(d, layer, te)};
    };
}

struct LayerSweepResult {
    std::vector<double> per_layer_cv_acc;
    int peak_layer = 0;  // 0-indexed
    double peak_acc = 0.0;
    double final_layer_acc = 0.0;
};

inline int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

inline LayerSweepResult layer_sweep(const Dataset& d, const ProbeTask& task, const FoldAssignment& folds, double reg_C = 1.0,
                                    unsigned jobs = 1) {
    const auto ts = select_task(d.manifest, task);
    LayerSweepResult r;
    r.per_layer_cv_acc.assign(d.shape.n_layers, 0.0);
    parallel_for(d.shape.n_layers, jobs, [&](std::size_t l) {
        r.per_layer_cv_acc[l] = cross_validate(d.manifest, ts, folds, hidden_state_features(d, l), reg_C).mean_acc;
    });
    r.peak_layer = argmax_lowest(r.per_layer_cv_acc);
    r.peak_acc = r.per_layer_cv_acc[static_cast<std::size_t>(r.peak_layer)];
    r.final_layer_acc = r.per_layer_cv_acc.back();
    return r;
}

struct ProbeResult {
    std::string task;
    int layer = 0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    CvResult cv;
};

inline ProbeResult modality_probe(const Dataset& d, Modality modality, NegativePolicy negatives, const FoldAssignment& folds,
                                  std::size_t layer, double reg_C = 1.0) {
    ProbeTask task{modality == Modality::vision ? TaskKind::vision : TaskKind::audio, negatives};
    const auto ts = select_task(d.manifest, task);
    ProbeResult r;
    r.task = task.name();
    r.layer = static_cast<int>(layer);
    r.n_pos = static_cast<std::size_t>(std::count(ts.y.begin(), ts.y.end(), 1));
    r.n_neg = ts.y.size() - r.n_pos;
    r.cv = cross_validate(d.manifest, ts, folds, hidden_state_features(d, layer), reg_C);
    return r;
}

}  // namespace gapdiag
