#include "fgc/pipeline.hpp"

#include <algorithm>

#include "fgc/conditions.hpp"
#include "fgc/eval.hpp"

namespace fgc::train {

Mat latent_from_clip(const model::ModelBundle& bundle, const dsp::AudioClip& clip) {
    Mat feats = band_features(clip, bundle.feature_band_freqs());
    Mat latent = bundle.codec.encode(feats);
    const int64_t frames = bundle.config.latent_frames();
    if (latent.rows != frames) latent = cond::resample_rows_nearest(latent, frames);
    return latent;
}

dsp::AudioClip clip_from_latent(const model::ModelBundle& bundle, const Mat& latent) {
    Mat feats = bundle.codec.decode(latent);
    return synth_from_features(feats, bundle.feature_band_freqs());
}

namespace {

std::string caption_of(const std::vector<std::string>& labels) {
    std::string caption;
    for (const auto& l : labels) {
        if (!caption.empty()) caption += ' ';
        caption += l;
    }
    return caption;
}

}  // namespace

std::vector<Sample> build_backbone_samples(const model::ModelBundle& bundle,
                                           const std::string& corpus_dir,
                                           const std::vector<int>& ids) {
    std::vector<Sample> out(ids.size());
    parallel_for(static_cast<int64_t>(ids.size()), [&](int64_t i) {
        const int id = ids[static_cast<size_t>(i)];
        dsp::AudioClip clip = dsp::read_wav(data::clip_wav_path(corpus_dir, id));
        Sample s;
        s.x0 = latent_from_clip(bundle, clip);
        s.caption = caption_of(data::read_caption_labels(data::clip_caption_path(corpus_dir, id)));
        out[static_cast<size_t>(i)] = std::move(s);
    });
    return out;
}

model::CondInput loudness_cond_input(const model::ModelBundle& bundle,
                                     const cond::LoudnessCurve& curve) {
    model::CondInput ci;
    ci.kind = cond::CondKind::loudness;
    ci.loud = cond::loudness_condition_mat(curve, bundle.config.latent_width);
    return ci;
}

model::CondInput event_cond_input(const cond::EventRoll& roll) {
    model::CondInput ci;
    ci.kind = cond::CondKind::event;
    ci.active = cond::event_active_sum(roll);
    return ci;
}

model::CondInput pitch_cond_input(const cond::PitchCode& code) {
    model::CondInput ci;
    ci.kind = cond::CondKind::pitch;
    ci.bins = code.bins;
    return ci;
}

model::CondInput edit_cond_input(const model::ModelBundle& bundle, const dsp::AudioClip& input,
                                 const EditSpec& spec) {
    cond::EventRoll roll;
    roll.duration = input.duration();
    roll.events.push_back({spec.label, {{spec.start, std::min(spec.end, roll.duration)}}});
    model::CondInput ci;
    ci.kind = cond::CondKind::edit;
    ci.active = cond::event_active_sum(roll);
    ci.ref_latent = latent_from_clip(bundle, input);
    return ci;
}

std::vector<Sample> build_condition_samples(const model::ModelBundle& bundle,
                                            const std::string& corpus_dir,
                                            const std::vector<int>& ids, cond::CondKind kind) {
    std::vector<Sample> out(ids.size());
    parallel_for(static_cast<int64_t>(ids.size()), [&](int64_t i) {
        const int id = ids[static_cast<size_t>(i)];
        dsp::AudioClip clip = dsp::read_wav(data::clip_wav_path(corpus_dir, id));
        Sample s;
        s.x0 = latent_from_clip(bundle, clip);
        s.caption = caption_of(data::read_caption_labels(data::clip_caption_path(corpus_dir, id)));
        switch (kind) {
            case cond::CondKind::loudness:
                s.cond = loudness_cond_input(bundle, cond::extract_loudness(clip));
                break;
            case cond::CondKind::event:
                s.cond = event_cond_input(cond::read_roll(data::clip_roll_path(corpus_dir, id)));
                break;
            case cond::CondKind::pitch:
                s.cond = pitch_cond_input(
                    cond::extract_pitch(clip, dsp::FrameSpec{}, bundle.qstats));
                break;
            case cond::CondKind::edit:
                throw config_error("build_condition_samples: use build_editor_samples for edits");
        }
        out[static_cast<size_t>(i)] = std::move(s);
    });
    return out;
}

cond::QuantizerStats compute_corpus_pitch_stats(const std::string& corpus_dir,
                                                const std::vector<int>& ids) {
    std::vector<Mat> features(ids.size());
    parallel_for(static_cast<int64_t>(ids.size()), [&](int64_t i) {
        dsp::AudioClip clip =
            dsp::read_wav(data::clip_wav_path(corpus_dir, ids[static_cast<size_t>(i)]));
        features[static_cast<size_t>(i)] =
            cond::pitch_cwt_matrix(clip, dsp::FrameSpec{}, cond::default_cwt_scales());
    });
    return cond::quantizer_stats_from(features);
}

EditorSampleSet build_editor_samples(const model::ModelBundle& bundle,
                                     const std::string& corpus_dir, const std::vector<int>& ids,
                                     EditSpec::Action action, int n_pairs, uint64_t seed) {
    if (ids.empty()) throw std::invalid_argument("build_editor_samples: empty id list");
    const Vocabulary& vocab = bundle.vocab;
    EditorSampleSet set;
    Rng rng(splitmix64(seed ^ 0xed17ba5e5ULL));
    while (static_cast<int>(set.pairs.size()) < n_pairs) {
        const int bg_id =
            ids[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(ids.size()) - 1))];
        auto caption = data::read_caption_labels(data::clip_caption_path(corpus_dir, bg_id));
        const auto& band = vocab.bands[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(vocab.size()) - 1))];
        if (std::find(caption.begin(), caption.end(), band.label) != caption.end())
            continue;  // rejection-resample per the caption-overlap rule

        dsp::AudioClip background = dsp::read_wav(data::clip_wav_path(corpus_dir, bg_id));
        const double bg_dur = background.duration();
        const double tgt_dur = rng.uniform(0.5, std::min(4.0, bg_dur * 0.8));
        cond::EventRoll troll;
        troll.duration = tgt_dur;
        troll.events.push_back({band.label, {{0.0, tgt_dur}}});
        dsp::AudioClip target = data::synth_toy_clip(vocab, troll, background.sample_rate);

        data::EditPair pair =
            data::make_edit_pair(background, caption, target, band.label, action, rng);

        Sample s;
        s.x0 = latent_from_clip(bundle, pair.output_audio);
        s.caption = "";  // the editor path replaces text with the empty string
        model::CondInput ci = edit_cond_input(bundle, pair.input_audio, pair.spec);
        s.cond = ci;
        s.edit_mask = pair.edit_mask;
        // Align the mask with the latent frame count.
        s.edit_mask.resize(static_cast<size_t>(bundle.config.latent_frames()), 0);
        set.samples.push_back(std::move(s));
        set.pairs.push_back(std::move(pair));
    }
    return set;
}

}  // namespace fgc::train
