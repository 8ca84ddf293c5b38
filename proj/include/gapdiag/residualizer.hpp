#pragma once

// Removing text-predictable variance from hidden states: a ridge map from
// hidden states to text embeddings, then projection onto the null space of
// that map. Includes the nested grouped-CV protocol and text-only baselines.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/folds.hpp"
#include "gapdiag/probe_lab.hpp"
#include "gapdiag/tfidf.hpp"

namespace gapdiag {

struct RidgeMap {
    Mat W;  // d_text x d_hidden
    double alpha = 1.0;
};

// W = argmin |H W^T - T|_F^2 + alpha |W|_F^2, no intercept. Solved by Cholesky on
// (H^T H + alpha I), or on the equivalent (H H^T + alpha I) when n < d_hidden.
inline RidgeMap fit_ridge_map(const Mat& H, const Mat& T, double alpha = 1.0) {
    if (H.rows() != T.rows()) fail(ErrorKind::Shape, "H and T row counts differ");
    if (H.rows() < 2) fail(ErrorKind::Shape, "ridge fit needs at least 2 rows");
    if (!(alpha > 0)) fail(ErrorKind::Config, "ridge alpha must be positive");
    RidgeMap m;
    m.alpha = alpha;
    if (H.cols() <= H.rows()) {
        Mat A = H.transpose() * H;
        A.diagonal().array() += alpha;
        const Eigen::LLT<Mat> llt(A);
        if (llt.info() != Eigen::Success) fail(ErrorKind::SvdFailure, "ridge normal equations not positive definite");
        m.W = llt.solve(H.transpose() * T).transpose();
    } else {
        Mat K = H * H.transpose();
        K.diagonal().array() += alpha;
        const Eigen::LLT<Mat> llt(K);
        if (llt.info() != Eigen::Success) fail(ErrorKind::SvdFailure, "ridge dual system not positive definite");
        m.W = (H.transpose() * llt.solve(T)).transpose();
    }
    return m;
}

struct ResidualProjector {
    Mat Vk;  // d_hidden x r, orthonormal columns
    double rel_tol = 1e-5;
    int source_rank = 0;
    double s_max = 0.0;

    Vec apply(const Vec& h) const {
        if (Vk.cols() == 0) return h;
        return h - Vk * (Vk.transpose() * h);
    }
    // Rows of H are hidden states.
    Mat apply_rows(const Mat& H) const {
        if (Vk.cols() == 0) return H;
        return H - (H * Vk) * Vk.transpose();
    }
};

inline ResidualProjector null_space_projector(const RidgeMap& map, double rel_tol = 1e-5) {
    if (!map.W.allFinite()) fail(ErrorKind::SvdFailure, "ridge map has non-finite entries");
    ResidualProjector p;
    p.rel_tol = rel_tol;
    const Eigen::BDCSVD<Mat> svd(map.W, Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) fail(ErrorKind::SvdFailure, "SVD did not converge");
    const Vec& s = svd.singularValues();
    p.s_max = s.size() ? s(0) : 0.0;
    int r = 0;
    while (r < s.size() && s(r) > rel_tol * p.s_max) ++r;
    p.source_rank = r;
    p.Vk = svd.matrixV().leftCols(r);
    return p;
}

namespace detail {

inline std::uint64_t hash_doubles(const double* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n * sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

inline Mat embedding_matrix(const TextEmbeddingTable& t, const Manifest& m, const std::vector<std::size_t>& rows) {
    Mat T(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.d_text));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& id = m.samples[rows[r]].sample_id;
        const auto it = t.rows.find(id);
        if (it == t.rows.end()) fail(ErrorKind::MissingText, "no text embedding for " + id);
        for (std::size_t j = 0; j < t.d_text; ++j)
            T(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = it->second[j];
    }
    return T;
}

struct ResidualizedResult {
    std::string task;
    int layer = 0;
    double alpha = 1.0;
    double rel_tol = 1e-5;
    CvResult original;
    CvResult residualized;
    std::vector<int> fold_rank;                // retained rank of each fold's projector
    std::vector<std::uint64_t> fold_ridge_hash;  // checksum of each fold's fitted W
};

inline ResidualizedResult residualized_probe_cv(const Dataset& d, const TextEmbeddingTable& emb, const ProbeTask& task,
                                                std::size_t layer, const FoldAssignment& folds, double reg_C = 1.0,
                                                double alpha = 1.0, double rel_tol = 1e-5) {
    const auto ts = select_task(d.manifest, task);
    ResidualizedResult r;
    r.task = task.name();
    r.layer = static_cast<int>(layer);
    r.alpha = alpha;
    r.rel_tol = rel_tol;
    r.original = cross_validate(d.manifest, ts, folds, hidden_state_features(d, layer), reg_C);
    FeatureFn resid = [&](const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
        const Mat Htr = layer_matrix(d, layer, tr);
        const auto map = fit_ridge_map(Htr, embedding_matrix(emb, d.manifest, tr), alpha);
        const auto proj = null_space_projector(map, rel_tol);
        r.fold_rank.push_back(proj.source_rank);
        r.fold_ridge_hash.push_back(detail::hash_doubles(map.W.data(), static_cast<std::size_t>(map.W.size())));
        return std::pair{proj.apply_rows(Htr), proj.apply_rows(layer_matrix(d, layer, te))};
    };
    r.residualized = cross_validate(d.manifest, ts, folds, resid, reg_C);
    return r;
}

enum class TextFeatures { tfidf, external_embeddings };

inline TextFeatures parse_text_features(const std::string& s) {
    if (s == "tfidf") return TextFeatures::tfidf;
    if (s == "external_embeddings" || s == "sbert" || s == "external") return TextFeatures::external_embeddings;
    fail(ErrorKind::Usage, "unknown text features '" + s + "' (tfidf|external_embeddings)");
}

struct BaselineResult {
    std::string features;
    std::string task;
    CvResult cv;
};

// emb may be null when features == tfidf.
inline BaselineResult text_baseline_probe(TextFeatures features, const Manifest& m, const TextEmbeddingTable* emb,
                                          const ProbeTask& task, const FoldAssignment& folds, double reg_C = 1.0) {
    const auto ts = select_task(m, task);
    BaselineResult r;
    r.features = features == TextFeatures::tfidf ? "tfidf" : "external_embeddings";
    r.task = task.name();
    FeatureFn fn;
    if (features == TextFeatures::tfidf) {
        for (auto i : ts.index)
            if (!m.samples[i].question_text) fail(ErrorKind::MissingText, "sample " + m.samples[i].sample_id + " has no question_text");
        fn = [&m](const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
            auto docs = [&m](const std::vector<std::size_t>& rows) {
                std::vector<std::string> out;
                for (auto i : rows) out.push_back(*m.samples[i].question_text);
                return out;
            };
            TfidfVectorizer v;
            const auto dtr = docs(tr);
            v.fit(dtr);
            return std::pair{v.transform(dtr), v.transform(docs(te))};
        };
    } else {
        if (!emb) fail(ErrorKind::MissingText, "external embedding baseline needs a text embedding table");
        fn = [&m, emb](const std::vector<std::size_t>& tr, const std::vector<std::size_t>& te) {
            return std::pair{embedding_matrix(*emb, m, tr), embedding_matrix(*emb, m, te)};
        };
    }
    r.cv = cross_validate(m, ts, folds, fn, reg_C);
    return r;
}

}  // namespace gapdiag
