#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fgc/common.hpp"
#include "fgc/dsp.hpp"
#include "fgc/tensor.hpp"

namespace fgc::cond {

constexpr double kDefaultFrameRate = 43.0;
constexpr int kTextEmbedWidth = 64;
constexpr int kPitchBins = 256;
constexpr int kCwtScales = 32;
constexpr double kDbFloor = -100.0;  // 20*log10(1e-5)

inline int64_t frames_for_duration(double seconds, double frame_rate = kDefaultFrameRate) {
    return std::max<int64_t>(1, llround(seconds * frame_rate));
}

enum class CondKind { loudness, pitch, event, edit };
std::string cond_kind_name(CondKind k);
CondKind cond_kind_from_name(const std::string& name);

// Unified currency of conditioning: a T x D time-aligned feature matrix.
struct ConditionSequence {
    CondKind kind = CondKind::loudness;
    Mat values;
    double frame_rate = kDefaultFrameRate;
};

struct LoudnessCurve {
    std::vector<double> db;
    double frame_rate = kDefaultFrameRate;
};

struct PitchCode {
    std::vector<std::vector<int>> bins;  // T x S
    int codebook_dim = 0;
};

struct EventInstance {
    std::string label;
    std::vector<std::pair<double, double>> intervals;  // (onset s, offset s)
};

struct EventRoll {
    double duration = 0.0;
    std::vector<EventInstance> events;

    void validate() const;
    bool active(const std::string& label, double time_s) const;
    std::vector<std::string> labels() const;
};

struct TextEmbedding {
    std::vector<double> vector;  // unit L2 norm, width kTextEmbedWidth
};

// Quantizer bounds computed over the training corpus and persisted with the
// model so the bin mapping is fixed at inference.
struct QuantizerStats {
    double lo = -3.0;
    double hi = 3.0;
};

// Pads the clip so frame t is centered on sample (t + 0.5) * hop; the frame
// count becomes floor(len/hop), consistent with duration * sample_rate / hop.
dsp::AudioClip center_pad(const dsp::AudioClip& clip, const dsp::FrameSpec& spec);

// SavGol(rms_to_db(frame_rms(clip))) over center-padded frames.
LoudnessCurve extract_loudness(const dsp::AudioClip& clip, const dsp::FrameSpec& spec = {},
                               int savgol_window = 11, int savgol_order = 3, double eps = 1e-5);

// Normalizes [-100, 0] dB affinely to [-1, 1] and repeats across the feature dim.
ConditionSequence loudness_to_condition(const LoudnessCurve& curve, int width);
Mat loudness_condition_mat(const LoudnessCurve& curve, int width);

// S x T Ricker CWT of the gap-filled log-f0 track (pre-quantization).
Mat pitch_cwt_matrix(const dsp::AudioClip& clip, const dsp::FrameSpec& spec,
                     const std::vector<double>& scales, double fmin = 60.0, double fmax = 1000.0);

std::vector<double> default_cwt_scales(int count = kCwtScales);  // 1..count

QuantizerStats quantizer_stats_from(const std::vector<Mat>& cwt_features);

PitchCode extract_pitch(const dsp::AudioClip& clip, const dsp::FrameSpec& spec,
                        const QuantizerStats& stats, const std::vector<double>& scales = {},
                        int n_bins = kPitchBins, double fmin = 60.0, double fmax = 1000.0);

// Codebook lookup averaged over scales: [T, D]. Differentiable in the codebook.
nn::Tensor pitch_to_condition(const PitchCode& code, const nn::Tensor& codebook);

// Hash-seeded Gaussian stub for a text encoder: deterministic unit vector.
TextEmbedding embed_label(const std::string& label);

// Per-frame sum of active label embeddings (T x 64). Applying the shared
// projection W afterward equals summing W*E_i by linearity.
Mat event_active_sum(const EventRoll& roll, double frame_rate = kDefaultFrameRate,
                     int64_t frames = -1);

// active_sum x W -> [T, D]. Differentiable in W ([64, D]).
nn::Tensor eventroll_to_condition(const EventRoll& roll, double frame_rate,
                                  const nn::Tensor& proj, int64_t frames = -1);

// Nearest-frame row resampling for condition-to-latent length mismatches.
Mat resample_rows_nearest(const Mat& m, int64_t target_rows);
std::vector<std::vector<int>> resample_bins_nearest(const std::vector<std::vector<int>>& bins,
                                                    int64_t target_rows);

// JSON schema: {"duration": float, "events": [{"label": str, "intervals": [[on, off], ...]}]}
EventRoll roll_from_json_text(const std::string& text);
std::string roll_to_json_text(const EventRoll& roll);
EventRoll read_roll(const std::string& path);
void write_roll(const std::string& path, const EventRoll& roll);

}  // namespace fgc::cond
