#pragma once

// Grouped, stratified k-fold assignment. All samples of a video share a fold;
// videos are stratified by the multiset of splits they contribute.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/rng.hpp"

namespace gapdiag {

struct FoldAssignment {
    int k = 0;
    std::map<std::string, int> fold_of;  // video_id -> fold in [0, k)

    int fold(const std::string& video_id) const {
        const auto it = fold_of.find(video_id);
        if (it == fold_of.end()) fail(ErrorKind::Schema, "video " + video_id + " has no fold");
        return it->second;
    }
    std::vector<std::string> videos_in(int f) const {
        std::vector<std::string> out;
        for (const auto& [v, i] : fold_of)
            if (i == f) out.push_back(v);
        return out;
    }
};

inline FoldAssignment make_folds(const std::vector<const SampleMeta*>& samples, int k, std::uint64_t seed) {
    if (k < 2) fail(ErrorKind::Config, "k must be at least 2");

    std::map<std::string, std::array<int, 4>> per_video;
    for (const auto* s : samples) per_video[s->video_id][static_cast<std::size_t>(s->split.index())]++;
    if (static_cast<int>(per_video.size()) < k)
        fail(ErrorKind::TooFewGroups,
             std::to_string(per_video.size()) + " videos cannot fill " + std::to_string(k) + " folds");

    std::map<std::array<int, 4>, std::vector<std::string>> strata;
    for (const auto& [vid, counts] : per_video) strata[counts].push_back(vid);

    std::vector<std::pair<std::array<int, 4>, std::vector<std::string>>> ordered(strata.begin(), strata.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });

    FoldAssignment out;
    out.k = k;
    std::vector<int> fold_samples(static_cast<std::size_t>(k), 0);
    std::uint64_t stratum_no = 0;
    for (auto& [key, videos] : ordered) {
        Stream rng(seed, {0xF01D5ULL, stratum_no++});
        rng.shuffle(videos);
        const int per_video_n = key[0] + key[1] + key[2] + key[3];
        std::vector<int> in_stratum(static_cast<std::size_t>(k), 0);
        for (const auto& vid : videos) {
            int best = 0;
            for (int f = 1; f < k; ++f) {
                const auto fi = static_cast<std::size_t>(f), bi = static_cast<std::size_t>(best);
                if (in_stratum[fi] < in_stratum[bi] ||
                    (in_stratum[fi] == in_stratum[bi] && fold_samples[fi] < fold_samples[bi]))
                    best = f;
            }
            out.fold_of[vid] = best;
            in_stratum[static_cast<std::size_t>(best)]++;
            fold_samples[static_cast<std::size_t>(best)] += per_video_n;
        }
    }
    return out;
}

inline FoldAssignment make_folds(const std::vector<SampleMeta>& samples, int k, std::uint64_t seed) {
    std::vector<const SampleMeta*> ptrs;
    ptrs.reserve(samples.size());
    for (const auto& s : samples) ptrs.push_back(&s);
    return make_folds(ptrs, k, seed);
}

// Throws if any video's samples land in more than one fold, or if a train and
// test partition share a video. Used as an exhaustive hygiene check.
inline void assert_group_disjoint(const std::vector<std::string>& train_videos, const std::vector<std::string>& test_videos,
                                  const std::string& context) {
    std::set<std::string> tr(train_videos.begin(), train_videos.end());
    for (const auto& v : test_videos)
        if (tr.contains(v)) fail(ErrorKind::Schema, context + ": video " + v + " appears in train and test");
}

}  // namespace gapdiag
