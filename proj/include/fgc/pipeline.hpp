#pragma once

#include <string>
#include <vector>

#include "fgc/data.hpp"
#include "fgc/model.hpp"
#include "fgc/train.hpp"

namespace fgc::train {

// Latent <-> audio through the bundle's band features and codec.
Mat latent_from_clip(const model::ModelBundle& bundle, const dsp::AudioClip& clip);
dsp::AudioClip clip_from_latent(const model::ModelBundle& bundle, const Mat& latent);

// Plain text-to-latent samples (backbone pretraining).
std::vector<Sample> build_backbone_samples(const model::ModelBundle& bundle,
                                           const std::string& corpus_dir,
                                           const std::vector<int>& ids);

// Samples carrying the condition matching `kind`. For pitch, bundle.qstats
// must already hold the corpus quantizer bounds.
std::vector<Sample> build_condition_samples(const model::ModelBundle& bundle,
                                            const std::string& corpus_dir,
                                            const std::vector<int>& ids, cond::CondKind kind);

// Corpus-wide CWT bounds for the pitch quantizer (train split only).
cond::QuantizerStats compute_corpus_pitch_stats(const std::string& corpus_dir,
                                                const std::vector<int>& ids);

// Editing pairs simulated online from corpus backgrounds plus synthesized
// targets whose label avoids the background caption. One sample per pair:
// x0 = output audio latent, ref = input audio latent, condition = edit roll.
struct EditorSampleSet {
    std::vector<Sample> samples;
    std::vector<data::EditPair> pairs;  // aligned with samples
};
EditorSampleSet build_editor_samples(const model::ModelBundle& bundle,
                                     const std::string& corpus_dir, const std::vector<int>& ids,
                                     EditSpec::Action action, int n_pairs, uint64_t seed);

// CondInput assembly mirrored by generation-time code paths.
model::CondInput loudness_cond_input(const model::ModelBundle& bundle,
                                     const cond::LoudnessCurve& curve);
model::CondInput event_cond_input(const cond::EventRoll& roll);
model::CondInput pitch_cond_input(const cond::PitchCode& code);
model::CondInput edit_cond_input(const model::ModelBundle& bundle, const dsp::AudioClip& input,
                                 const EditSpec& spec);

}  // namespace fgc::train
