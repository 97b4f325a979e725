#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fgc/common.hpp"
#include "fgc/dsp.hpp"

namespace testutil {

inline fgc::dsp::AudioClip sine_clip(double freq_hz, double duration_s, double amp = 1.0,
                                     double sample_rate = 44100.0) {
    fgc::dsp::AudioClip clip;
    clip.sample_rate = sample_rate;
    const int64_t n = llround(duration_s * sample_rate);
    clip.samples.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        clip.samples[static_cast<size_t>(i)] =
            amp * std::sin(2.0 * M_PI * freq_hz * static_cast<double>(i) / sample_rate);
    return clip;
}

inline fgc::dsp::AudioClip constant_clip(double value, double duration_s,
                                         double sample_rate = 44100.0) {
    fgc::dsp::AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(static_cast<size_t>(llround(duration_s * sample_rate)), value);
    return clip;
}

inline fgc::dsp::AudioClip noise_clip(double duration_s, uint64_t seed, double amp = 0.5,
                                      double sample_rate = 44100.0) {
    fgc::Rng rng(seed);
    fgc::dsp::AudioClip clip;
    clip.sample_rate = sample_rate;
    const int64_t n = llround(duration_s * sample_rate);
    clip.samples.resize(static_cast<size_t>(n));
    for (auto& s : clip.samples) s = amp * (2.0 * rng.uniform() - 1.0);
    return clip;
}

// Scoped temporary directory under the system temp root.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        namespace fs = std::filesystem;
        path_ = (fs::temp_directory_path() /
                 ("fgc_" + tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter_++)))
                    .string();
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }
    std::string file(const std::string& name) const { return path_ + "/" + name; }

private:
    static inline int counter_ = 0;
    std::string path_;
};

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size() && i < b.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    if (a.size() != b.size()) return 1e300;
    return m;
}

}  // namespace testutil
