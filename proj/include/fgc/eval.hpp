#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fgc/common.hpp"
#include "fgc/conditions.hpp"
#include "fgc/dsp.hpp"
#include "fgc/vocab.hpp"

namespace fgc::eval {

constexpr double kSedAmpRef = 0.15;    // amplitude mapping to probability 1.0
constexpr double kSedThreshold = 0.5;  // activity decision on the probability

struct LabelDetection {
    std::string label;
    std::vector<std::pair<double, double>> intervals;
    std::vector<double> probs;  // per-frame activity probability in [0,1]
};

struct DetectionResult {
    std::vector<LabelDetection> labels;
    double frame_rate = cond::kDefaultFrameRate;

    const LabelDetection* find(const std::string& label) const;
};

// Band-energy detector over the vocabulary's tone signatures: per-label
// normalized band amplitude -> probability -> median filter -> thresholded runs.
DetectionResult toy_sed(const dsp::AudioClip& clip, const Vocabulary& vocab);

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int64_t tp = 0, fp = 0, fn = 0;
};

struct F1Report {
    PRF event;
    PRF segment;
    std::map<std::string, PRF> per_label_event;
    std::map<std::string, PRF> per_label_segment;
};

// Event-based F1: one-to-one greedy matching per label in onset order; a match
// needs |onset delta| <= collar and |offset delta| <= max(collar, 0.2 * ref dur).
PRF event_f1(const cond::EventRoll& ref, const DetectionResult& hyp, double collar = 0.2,
             std::map<std::string, PRF>* per_label = nullptr);

// Segment-based F1: fixed segments over [0, duration], per-(segment,label)
// binary activity, micro-averaged.
PRF segment_f1(const cond::EventRoll& ref, const DetectionResult& hyp, double segment_s = 1.0,
               std::map<std::string, PRF>* per_label = nullptr);

F1Report evaluate_events(const cond::EventRoll& ref, const DetectionResult& hyp,
                         double collar = 0.2, double segment_s = 1.0);

// MAE in dB between the generated clip's loudness curve and the target.
// Throws when lengths differ by more than one frame.
double loudness_mae(const dsp::AudioClip& gen, const cond::LoudnessCurve& target);

// MAE in Hz over mutually voiced frames; empty when there is no overlap.
std::optional<double> pitch_mae(const dsp::AudioClip& gen, const dsp::F0Track& target,
                                double fmin = 60.0, double fmax = 1000.0);

// Mean detector probability for `label` over the edited span. High after a
// successful insertion, low after a successful removal.
double edit_score(const dsp::AudioClip& clip, const std::string& label, double span_start,
                  double span_end, const Vocabulary& vocab);

}  // namespace fgc::eval
