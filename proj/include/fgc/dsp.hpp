#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fgc/common.hpp"

namespace fgc::dsp {

// Mono audio, samples in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    double sample_rate = 44100.0;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
    // Throws if empty, non-positive rate, or non-finite samples.
    void validate() const;
};

struct FrameSpec {
    int frame_length = 4096;
    int hop = 1025;

    void validate() const;
    double frame_rate(double sample_rate) const { return sample_rate / static_cast<double>(hop); }
};

struct F0Track {
    std::vector<double> f0;      // Hz, meaningful where voiced
    std::vector<bool> voiced;
};

struct Scalogram {
    Mat values;                   // S x T, rows indexed by scale
    std::vector<double> scales;
};

// Per-frame RMS energy. T = floor((len - frame_length)/hop) + 1; a clip shorter
// than one frame is zero-padded at the tail so T >= 1.
std::vector<double> frame_rms(const AudioClip& clip, const FrameSpec& spec);

// 20*log10(rms + eps).
std::vector<double> rms_to_db(const std::vector<double>& rms, double eps = 1e-5);

// Least-squares polynomial smoother with mirror padding. Series shorter than
// the window are returned unchanged.
std::vector<double> savgol_filter(const std::vector<double>& x, int window, int poly_order);

// Convolution coefficients of the center-evaluated SavGol fit (window taps).
std::vector<double> savgol_coeffs(int window, int poly_order);

// YIN-family estimator: cumulative mean normalized difference function,
// absolute threshold 0.15, parabolic interpolation. Frames laid out as in
// frame_rms so tracks align with loudness features.
F0Track estimate_f0(const AudioClip& clip, const FrameSpec& spec, double fmin = 60.0,
                    double fmax = 1000.0);

// Ricker (Mexican-hat) CWT, same-length output per scale. Kernels are truncated
// at +-5*scale samples and re-centered to exact zero sum so constants map to 0.
Scalogram ricker_cwt(const std::vector<double>& x, const std::vector<double>& scales);

// Sampled Ricker wavelet at the given scale, zero-sum adjusted.
std::vector<double> ricker_kernel(double scale);

// bin = clamp(floor((v - lo)/(hi - lo) * n_bins), 0, n_bins - 1).
std::vector<std::vector<int>> quantize_uniform(const Mat& values, int n_bins, double lo, double hi);
int quantize_value(double v, int n_bins, double lo, double hi);

// Fills unvoiced gaps by linear interpolation between voiced neighbors,
// constant extrapolation at the ends. A fully unvoiced track is filled with
// the geometric mean of [fmin, fmax].
std::vector<double> fill_unvoiced(const F0Track& track, double fmin, double fmax);

// --- WAV + resampling -------------------------------------------------------

// Reads mono 16-bit PCM or 32-bit float WAV; resamples to 44100 Hz by linear
// interpolation when the file rate differs.
AudioClip read_wav(const std::string& path);

// 16-bit PCM (default) or 32-bit float output.
void write_wav(const std::string& path, const AudioClip& clip, bool float32 = false);

AudioClip resample_linear(const AudioClip& clip, double target_rate);

}  // namespace fgc::dsp
