#include "fgc/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fgc::data {

namespace fs = std::filesystem;

void ToyCorpusSpec::validate() const {
    if (n_clips < 1) throw std::invalid_argument("ToyCorpusSpec: n_clips must be >= 1");
    if (!(duration > 0)) throw std::invalid_argument("ToyCorpusSpec: duration must be > 0");
    if (n_labels < 1) throw std::invalid_argument("ToyCorpusSpec: n_labels must be >= 1");
    if (min_events < 0 || max_events < min_events)
        throw std::invalid_argument("ToyCorpusSpec: bad event count range");
    if (!(sample_rate > 0)) throw std::invalid_argument("ToyCorpusSpec: bad sample_rate");
}

dsp::AudioClip synth_toy_clip(const Vocabulary& vocab, const cond::EventRoll& roll,
                              double sample_rate) {
    roll.validate();
    const int64_t n = std::max<int64_t>(1, llround(roll.duration * sample_rate));
    dsp::AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.assign(static_cast<size_t>(n), 0.0);
    const double ramp_s = 0.010;

    for (const auto& ev : roll.events) {
        const double freq = vocab.freq_of(ev.label);  // throws on unknown label
        const double w = 2.0 * M_PI * freq / sample_rate;
        for (const auto& [on, off] : ev.intervals) {
            // Amplitude is a pure function of (label, onset) so resynthesis of
            // the same roll is bit-identical.
            Rng amp_rng(fnv1a64(ev.label) ^ splitmix64(static_cast<uint64_t>(llround(on * 1000.0))));
            const double amp = amp_rng.uniform(0.25, 0.55);
            const int64_t i0 = std::max<int64_t>(0, llround(on * sample_rate));
            const int64_t i1 = std::min<int64_t>(n, llround(off * sample_rate));
            const double len_s = (off - on);
            const double ramp = std::min(ramp_s, len_s / 2.0);
            for (int64_t i = i0; i < i1; ++i) {
                const double rel = static_cast<double>(i) / sample_rate - on;
                double env = 1.0;
                if (rel < ramp)
                    env = 0.5 - 0.5 * std::cos(M_PI * rel / ramp);
                else if (len_s - rel < ramp)
                    env = 0.5 - 0.5 * std::cos(M_PI * (len_s - rel) / ramp);
                clip.samples[static_cast<size_t>(i)] +=
                    amp * env * std::sin(w * static_cast<double>(i));
            }
        }
    }
    double peak = 0.0;
    for (double s : clip.samples) peak = std::max(peak, std::fabs(s));
    if (peak > 0.9) {
        const double scale = 0.9 / peak;
        for (double& s : clip.samples) s *= scale;
    }
    return clip;
}

cond::EventRoll random_roll(const ToyCorpusSpec& spec, Rng& rng) {
    spec.validate();
    const Vocabulary vocab = spec.vocabulary();
    cond::EventRoll roll;
    roll.duration = spec.duration;
    const int count = static_cast<int>(rng.uniform_int(spec.min_events, spec.max_events));
    std::vector<int> pool(vocab.size());
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    for (int e = 0; e < count && !pool.empty(); ++e) {
        const size_t pick = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1));
        const int label_idx = pool[pick];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        // Short events relative to the clip keep timing informative: a caption
        // alone should not pin down which segments are active.
        const double len = rng.uniform(0.15 * spec.duration, 0.45 * spec.duration);
        const double onset = rng.uniform(0.0, spec.duration - len);
        cond::EventInstance inst;
        inst.label = vocab.bands[static_cast<size_t>(label_idx)].label;
        inst.intervals.emplace_back(onset, onset + len);
        roll.events.push_back(std::move(inst));
    }
    return roll;
}

std::vector<TargetSegment> segment_targets(const dsp::AudioClip& clip,
                                           double energy_threshold_db) {
    clip.validate();
    const dsp::FrameSpec spec{};
    dsp::AudioClip padded = cond::center_pad(clip, spec);
    std::vector<double> db = dsp::rms_to_db(dsp::frame_rms(padded, spec));
    const double fr = spec.frame_rate(clip.sample_rate);
    const double clip_dur = clip.duration();

    std::vector<TargetSegment> out;
    auto emit = [&](double start, double end) {
        start = std::max(0.0, start);
        end = std::min(clip_dur, end);
        double len = end - start;
        if (len < 0.5) return;
        const int pieces = static_cast<int>(std::ceil(len / 4.0 - 1e-9));
        const double piece = len / pieces;
        for (int p = 0; p < pieces; ++p) {
            TargetSegment seg;
            seg.start = start + p * piece;
            seg.end = std::min(end, seg.start + piece);
            const int64_t i0 = llround(seg.start * clip.sample_rate);
            const int64_t i1 = std::min<int64_t>(static_cast<int64_t>(clip.samples.size()),
                                                 llround(seg.end * clip.sample_rate));
            if (i1 <= i0) continue;
            seg.audio.sample_rate = clip.sample_rate;
            seg.audio.samples.assign(clip.samples.begin() + i0, clip.samples.begin() + i1);
            out.push_back(std::move(seg));
        }
    };

    // A frame is active when any audible slice enters its window, so raw runs
    // overshoot the true support by about half a window per side; correct the
    // boundaries back by the window extension.
    const double sr = clip.sample_rate;
    const double pad = (spec.frame_length - spec.hop) / 2.0;
    auto emit_run = [&](int64_t a, int64_t b) {  // inclusive active frame range
        double start = ((static_cast<double>(a) - 0.5) * spec.hop - pad + spec.frame_length) / sr;
        double end = ((static_cast<double>(b) + 0.5) * spec.hop - pad) / sr;
        if (end <= start) {  // blip shorter than a window; keep the frame span
            start = static_cast<double>(a) / fr;
            end = static_cast<double>(b + 1) / fr;
        }
        emit(start, end);
    };
    int64_t run_start = -1;
    for (int64_t t = 0; t <= static_cast<int64_t>(db.size()); ++t) {
        const bool active = t < static_cast<int64_t>(db.size()) &&
                            db[static_cast<size_t>(t)] > energy_threshold_db;
        if (active && run_start < 0) run_start = t;
        if (!active && run_start >= 0) {
            emit_run(run_start, t - 1);
            run_start = -1;
        }
    }
    return out;
}

EditPair make_edit_pair(const dsp::AudioClip& background,
                        const std::vector<std::string>& caption_labels,
                        const dsp::AudioClip& target, const std::string& target_label,
                        EditSpec::Action action, Rng& rng) {
    background.validate();
    target.validate();
    if (background.sample_rate != target.sample_rate)
        throw std::invalid_argument("make_edit_pair: sample rate mismatch");
    if (std::find(caption_labels.begin(), caption_labels.end(), target_label) !=
        caption_labels.end())
        throw std::invalid_argument("make_edit_pair: target label '" + target_label +
                                    "' appears in the background caption");
    const double bg_dur = background.duration();
    const double tgt_dur = target.duration();
    if (tgt_dur > bg_dur)
        throw std::invalid_argument("make_edit_pair: target longer than background");

    const double start = rng.uniform(0.0, bg_dur - tgt_dur);
    const double end = start + tgt_dur;
    const int64_t i0 = llround(start * background.sample_rate);

    // Scale the target to background RMS +3 dB, capped so the mix stays in range.
    double bg_e = 0.0;
    for (double s : background.samples) bg_e += s * s;
    const double bg_rms = std::sqrt(bg_e / static_cast<double>(background.samples.size()));
    double tgt_e = 0.0, tgt_peak = 0.0;
    for (double s : target.samples) {
        tgt_e += s * s;
        tgt_peak = std::max(tgt_peak, std::fabs(s));
    }
    const double tgt_rms = std::sqrt(tgt_e / static_cast<double>(target.samples.size()));
    double scale = tgt_rms > 1e-9 ? bg_rms * std::pow(10.0, 3.0 / 20.0) / tgt_rms : 0.0;
    if (tgt_peak > 1e-9) {
        scale = std::max(scale, 0.1 / tgt_peak);  // keep silent-background inserts audible
        double bg_peak_at_span = 0.0;
        for (size_t i = 0; i < target.samples.size(); ++i) {
            const size_t bi = static_cast<size_t>(i0) + i;
            if (bi < background.samples.size())
                bg_peak_at_span = std::max(bg_peak_at_span, std::fabs(background.samples[bi]));
        }
        scale = std::min(scale, (1.0 - bg_peak_at_span) / tgt_peak * (1.0 - 1e-9));
        scale = std::max(scale, 0.0);
    }

    dsp::AudioClip mixture = background;
    for (size_t i = 0; i < target.samples.size(); ++i) {
        const size_t bi = static_cast<size_t>(i0) + i;
        if (bi < mixture.samples.size()) mixture.samples[bi] += scale * target.samples[i];
    }

    EditPair pair;
    pair.caption_labels = caption_labels;
    pair.spec.action = action;
    pair.spec.label = target_label;
    pair.spec.start = start;
    pair.spec.end = end;
    if (action == EditSpec::Action::insert) {
        pair.input_audio = background;
        pair.output_audio = std::move(mixture);
    } else {
        pair.input_audio = std::move(mixture);
        pair.output_audio = background;
    }
    const int64_t frames = cond::frames_for_duration(bg_dur);
    pair.edit_mask.assign(static_cast<size_t>(frames), 0);
    for (int64_t t = 0; t < frames; ++t) {
        const double center = (static_cast<double>(t) + 0.5) / cond::kDefaultFrameRate;
        if (start <= center && center < end) pair.edit_mask[static_cast<size_t>(t)] = 1;
    }
    return pair;
}

// --- corpus io -------------------------------------------------------------------

namespace {

std::string id_name(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", id);
    return std::string("clip_") + buf;
}

}  // namespace

std::string clip_wav_path(const std::string& dir, int id) {
    return dir + "/clips/" + id_name(id) + ".wav";
}
std::string clip_roll_path(const std::string& dir, int id) {
    return dir + "/rolls/" + id_name(id) + ".json";
}
std::string clip_caption_path(const std::string& dir, int id) {
    return dir + "/captions/" + id_name(id) + ".json";
}

std::vector<std::string> read_caption_labels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open caption file: " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    std::vector<std::string> out;
    for (const auto& l : j.at("labels")) out.push_back(l.get<std::string>());
    return out;
}

void write_caption_labels(const std::string& path, const std::vector<std::string>& labels) {
    nlohmann::json j;
    j["labels"] = labels;
    std::ofstream f(path);
    if (!f) throw io_error("cannot write caption file: " + path);
    f << j.dump(2) << '\n';
}

void write_toy_corpus(const std::string& dir, const ToyCorpusSpec& spec, int n_edit_pairs) {
    spec.validate();
    const Vocabulary vocab = spec.vocabulary();
    fs::create_directories(dir + "/clips");
    fs::create_directories(dir + "/rolls");
    fs::create_directories(dir + "/captions");
    if (n_edit_pairs > 0) fs::create_directories(dir + "/pairs");

    CorpusManifest manifest;
    manifest.spec = spec;
    manifest.labels = vocab.labels();

    // Pre-draw per-clip seeds so clip synthesis is order-independent and
    // parallelizable.
    Rng master(spec.seed);
    std::vector<uint64_t> clip_seeds(static_cast<size_t>(spec.n_clips));
    for (auto& s : clip_seeds) s = master.next_u64();

    parallel_for(spec.n_clips, [&](int64_t id) {
        Rng rng(clip_seeds[static_cast<size_t>(id)]);
        cond::EventRoll roll = random_roll(spec, rng);
        dsp::AudioClip clip = synth_toy_clip(vocab, roll, spec.sample_rate);
        dsp::write_wav(clip_wav_path(dir, static_cast<int>(id)), clip, /*float32=*/true);
        cond::write_roll(clip_roll_path(dir, static_cast<int>(id)), roll);
        write_caption_labels(clip_caption_path(dir, static_cast<int>(id)), roll.labels());
    });

    for (int id = 0; id < spec.n_clips; ++id) {
        if (id % 10 == 8)
            manifest.val_ids.push_back(id);
        else if (id % 10 == 9)
            manifest.test_ids.push_back(id);
        else
            manifest.train_ids.push_back(id);
    }

    // Sample edit pairs: a background clip plus a segmented target of a label
    // absent from its caption.
    Rng pair_rng(splitmix64(spec.seed ^ 0xed177a175ULL));
    for (int p = 0; p < n_edit_pairs; ++p) {
        for (int attempt = 0; attempt < 64; ++attempt) {
            const int bg_id = static_cast<int>(pair_rng.uniform_int(0, spec.n_clips - 1));
            Rng bg_rng(clip_seeds[static_cast<size_t>(bg_id)]);
            cond::EventRoll bg_roll = random_roll(spec, bg_rng);
            std::vector<std::string> caption = bg_roll.labels();
            const auto& band = vocab.bands[static_cast<size_t>(
                pair_rng.uniform_int(0, static_cast<int64_t>(vocab.size()) - 1))];
            if (std::find(caption.begin(), caption.end(), band.label) != caption.end()) continue;

            // Synthesize a target burst of this label and segment it.
            cond::EventRoll troll;
            troll.duration = std::min(spec.duration, 4.0);
            const double tlen = pair_rng.uniform(0.5, std::min(1.5, troll.duration * 0.9));
            const double ton = pair_rng.uniform(0.0, troll.duration - tlen);
            troll.events.push_back({band.label, {{ton, ton + tlen}}});
            dsp::AudioClip tclip = synth_toy_clip(vocab, troll, spec.sample_rate);
            auto segments = segment_targets(tclip);
            if (segments.empty()) continue;

            dsp::AudioClip bg = dsp::read_wav(clip_wav_path(dir, bg_id));
            EditSpec::Action action =
                p % 2 == 0 ? EditSpec::Action::insert : EditSpec::Action::remove;
            EditPair pair =
                make_edit_pair(bg, caption, segments[0].audio, band.label, action, pair_rng);

            char buf[16];
            std::snprintf(buf, sizeof(buf), "%04d", p);
            const std::string base = dir + "/pairs/pair_" + buf;
            dsp::write_wav(base + "_in.wav", pair.input_audio, true);
            dsp::write_wav(base + "_out.wav", pair.output_audio, true);
            nlohmann::json j;
            j["instruction"] = format_edit_spec(pair.spec);
            j["background_id"] = bg_id;
            j["caption_labels"] = pair.caption_labels;
            j["edit_mask"] = pair.edit_mask;
            j["input_wav"] = "pair_" + std::string(buf) + "_in.wav";
            j["output_wav"] = "pair_" + std::string(buf) + "_out.wav";
            std::ofstream jf(base + ".json");
            jf << j.dump(2) << '\n';
            break;
        }
    }

    nlohmann::json mj;
    mj["n_clips"] = spec.n_clips;
    mj["duration"] = spec.duration;
    mj["n_labels"] = spec.n_labels;
    mj["min_events"] = spec.min_events;
    mj["max_events"] = spec.max_events;
    mj["seed"] = spec.seed;
    mj["sample_rate"] = spec.sample_rate;
    mj["labels"] = manifest.labels;
    mj["splits"] = {{"train", manifest.train_ids},
                    {"val", manifest.val_ids},
                    {"test", manifest.test_ids}};
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw io_error("cannot write manifest: " + dir);
    mf << mj.dump(2) << '\n';
}

CorpusManifest read_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw io_error("cannot open corpus manifest: " + dir + "/manifest.json");
    nlohmann::json j = nlohmann::json::parse(f);
    CorpusManifest m;
    m.spec.n_clips = j.at("n_clips").get<int>();
    m.spec.duration = j.at("duration").get<double>();
    m.spec.n_labels = j.at("n_labels").get<int>();
    m.spec.min_events = j.at("min_events").get<int>();
    m.spec.max_events = j.at("max_events").get<int>();
    m.spec.seed = j.at("seed").get<uint64_t>();
    m.spec.sample_rate = j.at("sample_rate").get<double>();
    for (const auto& l : j.at("labels")) m.labels.push_back(l.get<std::string>());
    for (const auto& i : j.at("splits").at("train")) m.train_ids.push_back(i.get<int>());
    for (const auto& i : j.at("splits").at("val")) m.val_ids.push_back(i.get<int>());
    for (const auto& i : j.at("splits").at("test")) m.test_ids.push_back(i.get<int>());
    return m;
}

}  // namespace fgc::data
