#pragma once

#include <string>
#include <vector>

#include "fgc/common.hpp"
#include "fgc/conditions.hpp"
#include "fgc/dsp.hpp"
#include "fgc/editspec.hpp"
#include "fgc/vocab.hpp"

namespace fgc::data {

struct ToyCorpusSpec {
    int n_clips = 512;
    double duration = 2.0;  // seconds per clip
    int n_labels = 12;
    int min_events = 1;
    int max_events = 3;
    uint64_t seed = 0;
    double sample_rate = 44100.0;

    Vocabulary vocabulary() const { return Vocabulary::default_toy(n_labels); }
    void validate() const;
};

// Band-limited tone per active event with 10 ms raised-cosine ramps; overlaps
// sum; peak normalized down to 0.9 when exceeded. Deterministic in the roll:
// per-interval amplitudes are hashed from label and onset.
dsp::AudioClip synth_toy_clip(const Vocabulary& vocab, const cond::EventRoll& roll,
                              double sample_rate = 44100.0);

cond::EventRoll random_roll(const ToyCorpusSpec& spec, Rng& rng);

struct TargetSegment {
    double start = 0.0;
    double end = 0.0;
    dsp::AudioClip audio;
};

// Maximal above-threshold runs, clipped/split into [0.5, 4.0] s pieces.
std::vector<TargetSegment> segment_targets(const dsp::AudioClip& clip,
                                           double energy_threshold_db = -40.0);

struct EditPair {
    dsp::AudioClip input_audio;
    dsp::AudioClip output_audio;
    EditSpec spec;
    std::vector<int> edit_mask;  // per frame at 43 fps over the clip duration
    std::vector<std::string> caption_labels;
};

// Mixes the target into the background at a random position (target scaled to
// background RMS +3 dB, capped so the mix never clips). insert: input is the
// bare background; remove: input is the mixture.
EditPair make_edit_pair(const dsp::AudioClip& background,
                        const std::vector<std::string>& caption_labels,
                        const dsp::AudioClip& target, const std::string& target_label,
                        EditSpec::Action action, Rng& rng);

// --- corpus on disk --------------------------------------------------------------
// Layout: {clips/*.wav, rolls/*.json, captions/*.json, pairs/*.json, manifest.json}

struct CorpusManifest {
    ToyCorpusSpec spec;
    std::vector<std::string> labels;
    std::vector<int> train_ids, val_ids, test_ids;
};

void write_toy_corpus(const std::string& dir, const ToyCorpusSpec& spec, int n_edit_pairs = 0);
CorpusManifest read_manifest(const std::string& dir);

std::string clip_wav_path(const std::string& dir, int id);
std::string clip_roll_path(const std::string& dir, int id);
std::string clip_caption_path(const std::string& dir, int id);

std::vector<std::string> read_caption_labels(const std::string& path);
void write_caption_labels(const std::string& path, const std::vector<std::string>& labels);

}  // namespace fgc::data
