#include "fgc/data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fgc/vocab.hpp"
#include "test_util.hpp"

using namespace fgc;

namespace {

// Bandpass-energy oracle: fraction of total energy captured by a tone at freq.
double band_energy_ratio(const dsp::AudioClip& clip, double freq) {
    // Hann-windowed single-bin amplitude over the whole clip.
    const size_t n = clip.samples.size();
    double re = 0.0, im = 0.0, wsum = 0.0, total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double w =
            0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n - 1));
        const double v = clip.samples[i] * w;
        const double ang = 2.0 * M_PI * freq * static_cast<double>(i) / clip.sample_rate;
        re += v * std::cos(ang);
        im += v * std::sin(ang);
        wsum += w;
        total += clip.samples[i] * clip.samples[i];
    }
    const double amp = 2.0 * std::sqrt(re * re + im * im) / wsum;
    // Tone energy with amplitude amp over n samples: amp^2 * n / 2.
    const double tone_energy = amp * amp * static_cast<double>(n) / 2.0;
    return total > 0 ? std::min(1.0, tone_energy / total) : 0.0;
}

}  // namespace

TEST_CASE("synth_toy_clip: silence, single band, overlapping bands") {
    auto vocab = Vocabulary::default_toy();

    cond::EventRoll empty;
    empty.duration = 1.0;
    auto silence = data::synth_toy_clip(vocab, empty);
    for (double s : silence.samples) CHECK(s == 0.0);

    cond::EventRoll single;
    single.duration = 1.0;
    single.events.push_back({"bell", {{0.0, 1.0}}});
    auto clip = data::synth_toy_clip(vocab, single);
    CHECK(band_energy_ratio(clip, vocab.freq_of("bell")) > 0.9);

    cond::EventRoll both;
    both.duration = 1.0;
    both.events.push_back({"dog", {{0.0, 0.8}}});
    both.events.push_back({"horn", {{0.2, 1.0}}});
    auto mix = data::synth_toy_clip(vocab, both);
    // During the overlap, energy sits in both bands.
    dsp::AudioClip overlap;
    overlap.sample_rate = mix.sample_rate;
    overlap.samples.assign(mix.samples.begin() + llround(0.3 * 44100),
                           mix.samples.begin() + llround(0.7 * 44100));
    const double r_dog = band_energy_ratio(overlap, vocab.freq_of("dog"));
    const double r_horn = band_energy_ratio(overlap, vocab.freq_of("horn"));
    CHECK(r_dog > 0.2);
    CHECK(r_horn > 0.2);
    CHECK(r_dog + r_horn > 0.9);

    cond::EventRoll unknown;
    unknown.duration = 1.0;
    unknown.events.push_back({"spaceship", {{0.0, 1.0}}});
    CHECK_THROWS_AS(data::synth_toy_clip(vocab, unknown), std::invalid_argument);
}

TEST_CASE("synth_toy_clip is a pure function of the roll") {
    auto vocab = Vocabulary::default_toy();
    cond::EventRoll roll;
    roll.duration = 1.5;
    roll.events.push_back({"drum", {{0.25, 0.9}}});
    roll.events.push_back({"rain", {{0.5, 1.25}}});
    auto a = data::synth_toy_clip(vocab, roll);
    auto b = data::synth_toy_clip(vocab, roll);
    CHECK(a.samples == b.samples);
}

TEST_CASE("segment_targets: silence, burst, long runs") {
    auto silence = testutil::constant_clip(0.0, 2.0);
    CHECK(data::segment_targets(silence).empty());

    // 2 s tone burst inside 10 s of silence.
    dsp::AudioClip burst;
    burst.sample_rate = 44100.0;
    burst.samples.assign(441000, 0.0);
    for (int64_t i = llround(4.0 * 44100); i < llround(6.0 * 44100); ++i)
        burst.samples[static_cast<size_t>(i)] =
            0.5 * std::sin(2.0 * M_PI * 440.0 * static_cast<double>(i) / 44100.0);
    auto segs = data::segment_targets(burst);
    REQUIRE(segs.size() == 1);
    const double fr = 44100.0 / 1025.0;
    CHECK(std::fabs((segs[0].end - segs[0].start) - 2.0) < 2.0 / fr + 1e-9);
    CHECK(std::fabs(segs[0].start - 4.0) < 0.1);

    // 6 s continuous tone: split into pieces <= 4 s covering the run.
    auto tone = testutil::sine_clip(440.0, 6.0, 0.5);
    auto pieces = data::segment_targets(tone);
    REQUIRE(pieces.size() >= 2);
    double covered = 0.0;
    for (const auto& p : pieces) {
        CHECK(p.end - p.start <= 4.0 + 1e-9);
        CHECK(p.end - p.start >= 0.5 - 1e-9);
        covered += p.end - p.start;
    }
    CHECK(covered > 5.8);
}

TEST_CASE("make_edit_pair: construction symmetry, mask, energies, errors") {
    auto vocab = Vocabulary::default_toy();
    cond::EventRoll bg_roll;
    bg_roll.duration = 2.0;
    bg_roll.events.push_back({"dog", {{0.2, 1.6}}});
    auto background = data::synth_toy_clip(vocab, bg_roll);

    cond::EventRoll tgt_roll;
    tgt_roll.duration = 0.8;
    tgt_roll.events.push_back({"bell", {{0.0, 0.8}}});
    auto target = data::synth_toy_clip(vocab, tgt_roll);

    Rng rng_a(42), rng_b(42);
    auto ins = data::make_edit_pair(background, {"dog"}, target, "bell",
                                    EditSpec::Action::insert, rng_a);
    auto rem = data::make_edit_pair(background, {"dog"}, target, "bell",
                                    EditSpec::Action::remove, rng_b);
    // Same seed -> same span; remove output is the insert input.
    CHECK(rem.output_audio.samples == ins.input_audio.samples);
    CHECK(rem.input_audio.samples == ins.output_audio.samples);
    CHECK(ins.spec.start == rem.spec.start);

    // Mask sums to round(span * frame_rate) +- 1.
    int64_t mask_sum = 0;
    for (int m : ins.edit_mask) mask_sum += m;
    const double span = ins.spec.end - ins.spec.start;
    CHECK(std::llabs(mask_sum - llround(span * 43.0)) <= 1);

    // Mixed region has at least the background's RMS.
    auto rms_span = [&](const dsp::AudioClip& clip) {
        const int64_t i0 = llround(ins.spec.start * 44100.0);
        const int64_t i1 = llround(ins.spec.end * 44100.0);
        double acc = 0.0;
        for (int64_t i = i0; i < i1; ++i) acc += clip.samples[static_cast<size_t>(i)] *
                                                 clip.samples[static_cast<size_t>(i)];
        return std::sqrt(acc / static_cast<double>(i1 - i0));
    };
    CHECK(rms_span(ins.output_audio) >= rms_span(ins.input_audio));

    // Outside the span, the mixture is bit-identical to the background.
    const int64_t i0 = llround(ins.spec.start * 44100.0);
    const int64_t i1 = i0 + static_cast<int64_t>(target.samples.size());
    for (int64_t i = 0; i < static_cast<int64_t>(background.samples.size()); ++i) {
        if (i >= i0 && i < i1) continue;
        CHECK(ins.output_audio.samples[static_cast<size_t>(i)] ==
              background.samples[static_cast<size_t>(i)]);
    }

    // Errors: caption overlap, target longer than background.
    Rng rng_c(1);
    CHECK_THROWS_AS(data::make_edit_pair(background, {"dog", "bell"}, target, "bell",
                                         EditSpec::Action::insert, rng_c),
                    std::invalid_argument);
    auto long_target = testutil::sine_clip(440.0, 3.0, 0.4);
    CHECK_THROWS_AS(data::make_edit_pair(background, {"dog"}, long_target, "bell",
                                         EditSpec::Action::insert, rng_c),
                    std::invalid_argument);
}

TEST_CASE("edit pair fuzz: all invariants hold over 1000 pairs") {
    auto vocab = Vocabulary::default_toy();
    Rng rng(2024);
    int built = 0;
    for (int it = 0; it < 1000; ++it) {
        const double bg_dur = rng.uniform(1.0, 3.0);
        cond::EventRoll bg_roll;
        bg_roll.duration = bg_dur;
        const int bg_label = static_cast<int>(rng.uniform_int(0, 11));
        const double on = rng.uniform(0.0, bg_dur * 0.4);
        bg_roll.events.push_back({vocab.bands[static_cast<size_t>(bg_label)].label,
                                  {{on, on + rng.uniform(0.2, bg_dur - on - 1e-6)}}});
        auto background = data::synth_toy_clip(vocab, bg_roll);

        int tgt_label = static_cast<int>(rng.uniform_int(0, 11));
        if (tgt_label == bg_label) tgt_label = (tgt_label + 1) % 12;  // rejection-resample
        const double tgt_dur = rng.uniform(0.5, std::min(4.0, bg_dur));
        cond::EventRoll tgt_roll;
        tgt_roll.duration = tgt_dur;
        tgt_roll.events.push_back(
            {vocab.bands[static_cast<size_t>(tgt_label)].label, {{0.0, tgt_dur}}});
        auto target = data::synth_toy_clip(vocab, tgt_roll);

        auto action = it % 2 == 0 ? EditSpec::Action::insert : EditSpec::Action::remove;
        auto pair = data::make_edit_pair(background, bg_roll.labels(), target,
                                         tgt_roll.events[0].label, action, rng);
        ++built;

        // Type invariants.
        const double dur = pair.spec.end - pair.spec.start;
        CHECK(dur >= 0.5 - 1e-9);
        CHECK(dur <= 4.0 + 1e-9);
        CHECK(pair.spec.start >= 0.0);
        CHECK(pair.spec.end <= bg_dur + 1e-9);
        for (const auto& l : pair.caption_labels) CHECK(l != pair.spec.label);
        for (double s : pair.input_audio.samples) {
            CHECK(std::fabs(s) <= 1.0);
            CHECK(std::isfinite(s));
        }
        for (double s : pair.output_audio.samples) {
            CHECK(std::fabs(s) <= 1.0);
            CHECK(std::isfinite(s));
        }
        CHECK(pair.edit_mask.size() == static_cast<size_t>(cond::frames_for_duration(bg_dur)));
    }
    CHECK(built == 1000);
}

TEST_CASE("corpus writing is reproducible and well formed") {
    testutil::TempDir tmp_a("corpus_a");
    testutil::TempDir tmp_b("corpus_b");
    data::ToyCorpusSpec spec;
    spec.n_clips = 12;
    spec.duration = 1.0;
    spec.seed = 99;
    data::write_toy_corpus(tmp_a.path(), spec, 2);
    data::write_toy_corpus(tmp_b.path(), spec, 2);

    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        REQUIRE(f.good());
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };
    for (int id = 0; id < spec.n_clips; ++id) {
        CHECK(slurp(data::clip_wav_path(tmp_a.path(), id)) ==
              slurp(data::clip_wav_path(tmp_b.path(), id)));
        CHECK(slurp(data::clip_roll_path(tmp_a.path(), id)) ==
              slurp(data::clip_roll_path(tmp_b.path(), id)));
    }
    CHECK(slurp(tmp_a.file("pairs/pair_0000.json")) == slurp(tmp_b.file("pairs/pair_0000.json")));

    auto manifest = data::read_manifest(tmp_a.path());
    CHECK(manifest.spec.n_clips == 12);
    CHECK(manifest.labels.size() == 12);
    CHECK(manifest.train_ids.size() + manifest.val_ids.size() + manifest.test_ids.size() == 12);
    CHECK(!manifest.val_ids.empty());
    CHECK(!manifest.test_ids.empty());

    // Rolls parse and captions match roll labels.
    for (int id = 0; id < spec.n_clips; ++id) {
        auto roll = cond::read_roll(data::clip_roll_path(tmp_a.path(), id));
        auto caption = data::read_caption_labels(data::clip_caption_path(tmp_a.path(), id));
        CHECK(roll.labels() == caption);
        auto clip = dsp::read_wav(data::clip_wav_path(tmp_a.path(), id));
        CHECK(clip.duration() == doctest::Approx(spec.duration));
    }
}
