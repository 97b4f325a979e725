#include "fgc/vocab.hpp"

#include <algorithm>
#include <cmath>

namespace fgc {

Vocabulary Vocabulary::default_toy(int n_labels) {
    static const char* kNames[] = {"dog",   "cat",    "bell",   "horn",  "drum",  "bird",
                                   "siren", "clap",   "whistle", "engine", "rain", "chime",
                                   "frog",  "knock",  "owl",     "saw"};
    const int max_labels = static_cast<int>(sizeof(kNames) / sizeof(kNames[0]));
    if (n_labels < 1 || n_labels > max_labels)
        throw std::invalid_argument("Vocabulary: n_labels must be in [1," +
                                    std::to_string(max_labels) + "]");
    Vocabulary v;
    for (int i = 0; i < n_labels; ++i) {
        const double expo = n_labels > 1 ? 5.0 * static_cast<double>(i) /
                                               static_cast<double>(n_labels - 1)
                                         : 0.0;
        v.bands.push_back({kNames[i], 220.0 * std::pow(2.0, expo)});
    }
    return v;
}

int Vocabulary::index_of(const std::string& label) const {
    for (size_t i = 0; i < bands.size(); ++i)
        if (bands[i].label == label) return static_cast<int>(i);
    return -1;
}

double Vocabulary::freq_of(const std::string& label) const {
    const int i = index_of(label);
    if (i < 0) throw std::invalid_argument("unknown label: " + label);
    return bands[static_cast<size_t>(i)].freq_hz;
}

std::vector<std::string> Vocabulary::labels() const {
    std::vector<std::string> out;
    out.reserve(bands.size());
    for (const auto& b : bands) out.push_back(b.label);
    return out;
}

std::vector<double> Vocabulary::feature_bands(int width) const {
    if (width < static_cast<int>(bands.size()))
        throw std::invalid_argument("feature_bands: width " + std::to_string(width) +
                                    " < label count " + std::to_string(bands.size()));
    std::vector<double> out;
    out.reserve(static_cast<size_t>(width));
    double top = 0.0;
    for (const auto& b : bands) {
        out.push_back(b.freq_hz);
        top = std::max(top, b.freq_hz);
    }
    // Filler bands above the label range, log-spaced up to 14 kHz.
    const int extra = width - static_cast<int>(bands.size());
    for (int i = 0; i < extra; ++i) {
        const double f = top * std::pow(14000.0 / top, static_cast<double>(i + 1) /
                                                            static_cast<double>(extra + 1));
        out.push_back(f);
    }
    return out;
}

Mat band_amplitudes(const dsp::AudioClip& clip, const std::vector<double>& freqs,
                    const dsp::FrameSpec& spec) {
    clip.validate();
    spec.validate();
    const int64_t frame = spec.frame_length;
    const int64_t hop = spec.hop;
    // Center-aligned framing (see cond::center_pad); the padding is implied by
    // reading out-of-range samples as zero.
    const int64_t left = (frame - hop) / 2;
    const int64_t len = static_cast<int64_t>(clip.samples.size());
    const int64_t t_count = std::max<int64_t>(1, len / hop);
    const size_t n_bands = freqs.size();

    std::vector<double> window(static_cast<size_t>(frame));
    double wsum = 0.0;
    for (int64_t j = 0; j < frame; ++j) {
        window[static_cast<size_t>(j)] =
            0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(j) / static_cast<double>(frame - 1));
        wsum += window[static_cast<size_t>(j)];
    }
    // Per-band oscillator tables over one frame.
    std::vector<std::vector<double>> cos_t(n_bands), sin_t(n_bands);
    for (size_t b = 0; b < n_bands; ++b) {
        cos_t[b].resize(static_cast<size_t>(frame));
        sin_t[b].resize(static_cast<size_t>(frame));
        const double w = 2.0 * M_PI * freqs[b] / clip.sample_rate;
        for (int64_t j = 0; j < frame; ++j) {
            cos_t[b][static_cast<size_t>(j)] = std::cos(w * static_cast<double>(j));
            sin_t[b][static_cast<size_t>(j)] = std::sin(w * static_cast<double>(j));
        }
    }

    Mat out(t_count, static_cast<int64_t>(n_bands));
    for (int64_t t = 0; t < t_count; ++t) {
        const int64_t start = t * hop - left;
        for (size_t b = 0; b < n_bands; ++b) {
            double re = 0.0, im = 0.0;
            const int64_t j0 = std::max<int64_t>(0, -start);
            const int64_t j1 = std::min<int64_t>(frame, len - start);
            for (int64_t j = j0; j < j1; ++j) {
                const double v = clip.samples[static_cast<size_t>(start + j)] *
                                 window[static_cast<size_t>(j)];
                re += v * cos_t[b][static_cast<size_t>(j)];
                im += v * sin_t[b][static_cast<size_t>(j)];
            }
            out.at(t, static_cast<int64_t>(b)) = 2.0 * std::sqrt(re * re + im * im) / wsum;
        }
    }
    return out;
}

double amp_to_feature(double amp) { return (std::log10(std::max(amp, 0.0) + 1e-4) + 2.0) / 2.0; }

double feature_to_amp(double feature) {
    return std::max(0.0, std::pow(10.0, 2.0 * feature - 2.0) - 1e-4);
}

Mat band_features(const dsp::AudioClip& clip, const std::vector<double>& bands,
                  const dsp::FrameSpec& spec) {
    Mat amps = band_amplitudes(clip, bands, spec);
    for (double& v : amps.v) v = amp_to_feature(v);
    return amps;
}

dsp::AudioClip synth_from_features(const Mat& features, const std::vector<double>& bands,
                                   double sample_rate, int hop) {
    if (features.cols != static_cast<int64_t>(bands.size()))
        throw std::invalid_argument("synth_from_features: band count mismatch");
    if (features.rows < 1) throw std::invalid_argument("synth_from_features: no frames");
    const int64_t n = features.rows * hop;
    dsp::AudioClip out;
    out.sample_rate = sample_rate;
    out.samples.assign(static_cast<size_t>(n), 0.0);
    for (size_t b = 0; b < bands.size(); ++b) {
        const double w = 2.0 * M_PI * bands[b] / sample_rate;
        for (int64_t i = 0; i < n; ++i) {
            // Amplitude linearly interpolated between frame centers.
            const double pos = static_cast<double>(i) / static_cast<double>(hop) - 0.5;
            double amp;
            if (pos <= 0.0) {
                amp = feature_to_amp(features.at(0, static_cast<int64_t>(b)));
            } else if (pos >= static_cast<double>(features.rows - 1)) {
                amp = feature_to_amp(features.at(features.rows - 1, static_cast<int64_t>(b)));
            } else {
                const int64_t f0 = static_cast<int64_t>(pos);
                const double frac = pos - static_cast<double>(f0);
                const double a0 = feature_to_amp(features.at(f0, static_cast<int64_t>(b)));
                const double a1 = feature_to_amp(features.at(f0 + 1, static_cast<int64_t>(b)));
                amp = (1.0 - frac) * a0 + frac * a1;
            }
            out.samples[static_cast<size_t>(i)] += amp * std::sin(w * static_cast<double>(i));
        }
    }
    for (double& s : out.samples) s = std::clamp(s, -1.0, 1.0);
    return out;
}

}  // namespace fgc
