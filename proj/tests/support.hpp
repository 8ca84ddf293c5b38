#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "gapdiag/bundle_store.hpp"
#include "gapdiag/error.hpp"

namespace testsupport {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("gapdiag_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

// One well-formed sample with its four-split companions filled in by the caller.
inline gapdiag::SampleMeta make_sample(const std::string& video, const std::string& split) {
    gapdiag::SampleMeta s;
    s.video_id = video;
    s.sample_id = video + "_" + split;
    s.split = gapdiag::parse_split(split);
    s.question_type = "existence";
    s.duration_s = 120.0;
    s.answer_ts_start_s = 30.0;
    s.answer_ts_end_s = 40.0;
    if (s.split.misleading()) {
        s.correct_letter = s.split.modality == gapdiag::Modality::vision ? 4 : 5;
        s.misleading_subcategory = s.split.modality == gapdiag::Modality::vision ? "object_type" : "sound_type";
    } else {
        s.correct_letter = 1;
    }
    s.bundle_path = "bundles/" + s.sample_id + ".bin";
    return s;
}

inline gapdiag::HiddenStateBundle make_bundle(std::uint32_t n_layers, std::uint32_t d_hidden, float fill = 0.25f) {
    gapdiag::HiddenStateBundle b;
    b.n_layers = n_layers;
    b.d_hidden = d_hidden;
    b.states.assign(static_cast<std::size_t>(n_layers) * d_hidden, fill);
    b.choice_logits = {1, 2, 3, 4, 5, 6};
    return b;
}

// Writes n_videos x 4 samples with bundles and a manifest; returns the manifest path.
inline fs::path write_small_dataset(const fs::path& dir, int n_videos, std::uint32_t n_layers = 3, std::uint32_t d_hidden = 4) {
    gapdiag::Manifest m;
    m.model_name = "toy";
    m.base_dir = dir;
    for (int v = 0; v < n_videos; ++v) {
        const std::string vid = "vid" + std::to_string(v);
        for (const char* sp : {"std_v", "std_a", "mis_v", "mis_a"}) {
            auto s = make_sample(vid, sp);
            gapdiag::write_bundle(dir / s.bundle_path, make_bundle(n_layers, d_hidden));
            m.samples.push_back(s);
        }
    }
    std::sort(m.samples.begin(), m.samples.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
    gapdiag::save_manifest(dir / "manifest.json", m);
    return dir / "manifest.json";
}

template <class F>
gapdiag::ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const gapdiag::Error& e) {
        return e.kind();
    }
    throw std::runtime_error("expected a gapdiag::Error");
}

}  // namespace testsupport
