#pragma once

#include <string>
#include <vector>

#include "fgc/common.hpp"
#include "fgc/dsp.hpp"

namespace fgc {

// Each label owns a band-limited tone signature; detection and synthesis both
// key off the band center frequency.
struct LabelBand {
    std::string label;
    double freq_hz = 0.0;
};

struct Vocabulary {
    std::vector<LabelBand> bands;

    // 12 labels on a log grid from 220 Hz to 7040 Hz.
    static Vocabulary default_toy(int n_labels = 12);

    int index_of(const std::string& label) const;  // -1 when unknown
    double freq_of(const std::string& label) const;  // throws on unknown label
    std::vector<std::string> labels() const;
    size_t size() const { return bands.size(); }

    // Band grid backing the toy latent codec: the label bands first, then
    // filler bands up to `width` (width >= label count).
    std::vector<double> feature_bands(int width) const;
};

// Per-frame Hann-windowed single-bin amplitude estimates at the given band
// frequencies. Frames are center-aligned: frame t covers centers (t+0.5)*hop.
// Output is T x B.
Mat band_amplitudes(const dsp::AudioClip& clip, const std::vector<double>& freqs,
                    const dsp::FrameSpec& spec = {});

// Log-compressed feature map used by the latent codec. amp 0 -> -1, amp 1 -> ~1.
double amp_to_feature(double amp);
double feature_to_amp(double feature);

Mat band_features(const dsp::AudioClip& clip, const std::vector<double>& bands,
                  const dsp::FrameSpec& spec = {});

// Tone-bank resynthesis from per-frame band features: per-band sinusoids with
// amplitudes linearly interpolated between frame centers. Deliberately crude;
// it only needs to round-trip through band_features.
dsp::AudioClip synth_from_features(const Mat& features, const std::vector<double>& bands,
                                   double sample_rate = 44100.0, int hop = 1025);

}  // namespace fgc
