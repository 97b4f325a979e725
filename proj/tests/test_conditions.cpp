#include "fgc/conditions.hpp"

#include <cmath>

#include "doctest.h"
#include "fgc/dsp.hpp"
#include "test_util.hpp"

using namespace fgc;
using nn::Tensor;

namespace {

dsp::AudioClip vibrato_clip(double base_hz, double dev_hz, double rate_hz, double duration,
                            double amp = 0.8) {
    dsp::AudioClip clip;
    clip.sample_rate = 44100.0;
    const int64_t n = llround(duration * clip.sample_rate);
    clip.samples.resize(static_cast<size_t>(n));
    double phase = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / clip.sample_rate;
        const double f = base_hz + dev_hz * std::sin(2.0 * M_PI * rate_hz * t);
        phase += 2.0 * M_PI * f / clip.sample_rate;
        clip.samples[static_cast<size_t>(i)] = amp * std::sin(phase);
    }
    return clip;
}

}  // namespace

TEST_CASE("extract_loudness on constant, ramp, and silence") {
    auto ones = testutil::constant_clip(1.0, 1.0);
    auto flat = cond::extract_loudness(ones);
    for (double db : flat.db) CHECK(std::fabs(db) < 0.02);  // ~0 dB (center pad dents edges)

    // Linear amplitude ramp: monotonically increasing dB curve.
    dsp::AudioClip ramp;
    ramp.sample_rate = 44100.0;
    ramp.samples.resize(88200);
    for (size_t i = 0; i < ramp.samples.size(); ++i)
        ramp.samples[i] = 0.01 + 0.98 * static_cast<double>(i) / 88200.0;
    auto rising = cond::extract_loudness(ramp);
    int64_t pos = 0, total = 0;
    for (size_t i = 1; i < rising.db.size(); ++i) {
        ++total;
        if (rising.db[i] > rising.db[i - 1]) ++pos;
    }
    CHECK(static_cast<double>(pos) >= 0.9 * static_cast<double>(total));

    auto silence = testutil::constant_clip(0.0, 0.5);
    auto quiet = cond::extract_loudness(silence);
    for (double db : quiet.db) CHECK(db == doctest::Approx(-100.0));
}

TEST_CASE("loudness_to_condition endpoints, broadcast, shape") {
    cond::LoudnessCurve curve;
    curve.db = {-100.0, 0.0};
    auto seq = cond::loudness_to_condition(curve, 4);
    REQUIRE(seq.values.rows == 2);
    REQUIRE(seq.values.cols == 4);
    for (int64_t d = 0; d < 4; ++d) {
        CHECK(seq.values.at(0, d) == doctest::Approx(-1.0));
        CHECK(seq.values.at(1, d) == doctest::Approx(1.0));
    }

    cond::LoudnessCurve any;
    Rng rng(3);
    any.db.resize(50);
    for (auto& v : any.db) v = rng.uniform(-90.0, -5.0);
    auto m = cond::loudness_condition_mat(any, 7);
    for (int64_t t = 0; t < m.rows; ++t)
        for (int64_t d = 1; d < m.cols; ++d) CHECK(m.at(t, d) == m.at(t, 0));

    cond::LoudnessCurve ten_s;
    ten_s.db.assign(430, -30.0);
    auto big = cond::loudness_condition_mat(ten_s, 40);
    CHECK(big.rows == 430);
    CHECK(big.cols == 40);
}

TEST_CASE("extract_pitch: constant tone maps every bin to the zero bin") {
    auto tone = testutil::sine_clip(220.0, 1.0, 0.8);
    // Slightly asymmetric bounds keep 0 in the middle of a bin rather than on
    // a bin edge, where estimator jitter of ~1e-6 would straddle two bins.
    cond::QuantizerStats stats{-3.01, 2.99};
    auto code = cond::extract_pitch(tone, dsp::FrameSpec{}, stats);
    REQUIRE(!code.bins.empty());
    REQUIRE(code.bins[0].size() == 32);
    const int zero_bin = dsp::quantize_value(0.0, 256, stats.lo, stats.hi);
    int64_t hits = 0, cells = 0;
    for (const auto& row : code.bins)
        for (size_t s = 0; s < row.size(); ++s) {
            ++cells;
            if (row[s] == zero_bin) ++hits;
        }
    CHECK(hits == cells);
}

TEST_CASE("extract_pitch is amplitude invariant for clean tones") {
    auto loud = testutil::sine_clip(330.0, 0.7, 0.9);
    auto soft = testutil::sine_clip(330.0, 0.7, 0.2);
    cond::QuantizerStats stats{-3.0, 3.0};
    auto a = cond::extract_pitch(loud, dsp::FrameSpec{}, stats);
    auto b = cond::extract_pitch(soft, dsp::FrameSpec{}, stats);
    CHECK(a.bins == b.bins);
}

TEST_CASE("vibrato: extracted pitch code matches the analytic CWT oracle") {
    const double base = 440.0, dev = 30.0, rate = 5.0, dur = 2.0;
    auto clip = vibrato_clip(base, dev, rate, dur);
    const dsp::FrameSpec spec{};
    const double fr = spec.frame_rate(clip.sample_rate);
    const int64_t frames = static_cast<int64_t>(clip.samples.size()) / spec.hop;

    // Analytic log-f0 at frame centers -> direct CWT -> quantize: the oracle
    // (mean-centered like the extraction pipeline).
    std::vector<double> logf0(static_cast<size_t>(frames));
    double mean = 0.0;
    for (int64_t t = 0; t < frames; ++t) {
        const double tc = (static_cast<double>(t) + 0.5) / fr;
        logf0[static_cast<size_t>(t)] = std::log(base + dev * std::sin(2.0 * M_PI * rate * tc));
        mean += logf0[static_cast<size_t>(t)];
    }
    mean /= static_cast<double>(frames);
    for (double& v : logf0) v -= mean;
    auto scales = cond::default_cwt_scales();
    auto oracle_cwt = dsp::ricker_cwt(logf0, scales);
    auto stats = cond::quantizer_stats_from({oracle_cwt.values});
    auto oracle_bins = dsp::quantize_uniform(oracle_cwt.values, 256, stats.lo, stats.hi);

    auto code = cond::extract_pitch(clip, spec, stats);
    REQUIRE(static_cast<int64_t>(code.bins.size()) == frames);

    // The modulation period is fr/rate ~ 8.6 frames; the scale with the most
    // temporal variance should be small (2-3) in both paths.
    auto best_scale = [&](auto&& value_at, int64_t rows, int64_t cols) {
        int64_t best = -1;
        double best_var = -1.0;
        for (int64_t s = 0; s < rows; ++s) {
            double mean = 0.0, var = 0.0;
            for (int64_t t = 0; t < cols; ++t) mean += value_at(s, t);
            mean /= static_cast<double>(cols);
            for (int64_t t = 0; t < cols; ++t) {
                const double d = value_at(s, t) - mean;
                var += d * d;
            }
            if (var > best_var) {
                best_var = var;
                best = s;
            }
        }
        return best;
    };
    const int64_t oracle_scale = best_scale(
        [&](int64_t s, int64_t t) { return oracle_cwt.values.at(s, t); }, oracle_cwt.values.rows,
        oracle_cwt.values.cols);
    const int64_t extracted_scale = best_scale(
        [&](int64_t s, int64_t t) { return static_cast<double>(code.bins[static_cast<size_t>(t)][static_cast<size_t>(s)]); },
        32, frames);
    CHECK(oracle_scale >= 1);   // scale index 1 => scale 2
    CHECK(oracle_scale <= 2);
    CHECK(extracted_scale == oracle_scale);

    // Bin agreement between oracle and extraction on interior frames.
    int64_t close = 0, cells = 0;
    for (int64_t t = 10; t < frames - 10; ++t)
        for (size_t s = 0; s < 32; ++s) {
            ++cells;
            if (std::abs(code.bins[static_cast<size_t>(t)][s] -
                         oracle_bins[s][static_cast<size_t>(t)]) <= 8)
                ++close;
        }
    CHECK(static_cast<double>(close) >= 0.8 * static_cast<double>(cells));

    // Periodicity: the oracle row at the dominant scale repeats every fr/rate frames.
    const double period = fr / rate;
    std::vector<double> row(static_cast<size_t>(frames));
    for (int64_t t = 0; t < frames; ++t) row[static_cast<size_t>(t)] = oracle_cwt.values.at(oracle_scale, t);
    double best_corr = -1e300;
    int64_t best_lag = 0;
    for (int64_t lag = 4; lag <= 20; ++lag) {
        double corr = 0.0;
        for (int64_t t = 10; t + lag < frames - 10; ++t)
            corr += row[static_cast<size_t>(t)] * row[static_cast<size_t>(t + lag)];
        if (corr > best_corr) {
            best_corr = corr;
            best_lag = lag;
        }
    }
    CHECK(std::fabs(static_cast<double>(best_lag) - period) <= 1.0);
}

TEST_CASE("pitch_to_condition lookup semantics and gradients") {
    // All-zero bins: every frame equals codebook row 0.
    Rng rng(4);
    Tensor codebook = Tensor::randn({256, 6}, rng, 1.0, true);
    cond::PitchCode zeros;
    zeros.bins.assign(5, std::vector<int>(3, 0));
    zeros.codebook_dim = 6;
    Tensor out = cond::pitch_to_condition(zeros, codebook);
    REQUIRE(out.shape() == nn::Shape{5, 6});
    for (int64_t t = 0; t < 5; ++t)
        for (int64_t d = 0; d < 6; ++d)
            CHECK(out.data()[static_cast<size_t>(t * 6 + d)] ==
                  doctest::Approx(codebook.data()[static_cast<size_t>(d)]));

    // Identity codebook: the output row is the per-frame bin histogram / S.
    Tensor identity = Tensor::zeros({256, 256});
    for (int i = 0; i < 256; ++i) identity.mutable_data()[static_cast<size_t>(i * 256 + i)] = 1.0;
    cond::PitchCode code;
    code.bins = {{3, 3, 7}};
    code.codebook_dim = 256;
    Tensor hist = cond::pitch_to_condition(code, identity);
    CHECK(hist.data()[3] == doctest::Approx(2.0 / 3.0));
    CHECK(hist.data()[7] == doctest::Approx(1.0 / 3.0));
    CHECK(hist.data()[5] == doctest::Approx(0.0));

    // Gradient of a loss w.r.t. codebook entries vs finite differences.
    cond::PitchCode rnd;
    rnd.bins.assign(4, std::vector<int>(5));
    for (auto& row : rnd.bins)
        for (auto& b : row) b = static_cast<int>(rng.uniform_int(0, 255));
    Tensor probe = Tensor::randn({4, 6}, rng);
    auto fn = [&]() { return nn::sum(nn::mul(cond::pitch_to_condition(rnd, codebook), probe)); };
    Rng crng(1);
    auto res = nn::check_gradients(fn, {codebook}, crng, 24);
    CHECK(res.max_rel_err < 1e-4);

    // Out-of-range bins are rejected.
    cond::PitchCode bad;
    bad.bins = {{300}};
    CHECK_THROWS_AS(cond::pitch_to_condition(bad, codebook), std::invalid_argument);
}

TEST_CASE("embed_label determinism, norm, and distinctness") {
    auto a1 = cond::embed_label("dog");
    auto a2 = cond::embed_label("dog");
    CHECK(a1.vector == a2.vector);

    double norm = 0.0;
    for (double v : a1.vector) norm += v * v;
    CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-6);

    // Case-insensitive hash.
    auto upper = cond::embed_label("DOG");
    CHECK(upper.vector == a1.vector);

    std::vector<std::string> labels = {"dog",  "cat",  "bell",   "horn",   "drum", "bird",
                                       "siren", "clap", "whistle", "engine", "rain", "chime"};
    for (size_t i = 0; i < labels.size(); ++i)
        for (size_t j = i + 1; j < labels.size(); ++j) {
            auto u = cond::embed_label(labels[i]);
            auto v = cond::embed_label(labels[j]);
            double cos = 0.0;
            for (size_t d = 0; d < u.vector.size(); ++d) cos += u.vector[d] * v.vector[d];
            INFO(labels[i], " vs ", labels[j]);
            CHECK(std::fabs(cos) < 0.5);
        }

    CHECK_THROWS_AS(cond::embed_label(""), std::invalid_argument);
}

TEST_CASE("eventroll_to_condition zero, constant, additive") {
    Rng rng(5);
    Tensor w = Tensor::randn({64, 8}, rng, 0.3, true);

    cond::EventRoll empty;
    empty.duration = 2.0;
    Tensor z = cond::eventroll_to_condition(empty, 43.0, w);
    REQUIRE(z.shape() == nn::Shape{86, 8});
    for (double v : z.data()) CHECK(v == 0.0);

    cond::EventRoll full;
    full.duration = 2.0;
    full.events.push_back({"dog", {{0.0, 2.0}}});
    Tensor c = cond::eventroll_to_condition(full, 43.0, w);
    auto e = cond::embed_label("dog");
    // Expected constant row: e . W column-wise.
    for (int64_t d = 0; d < 8; ++d) {
        double expect = 0.0;
        for (int64_t k = 0; k < 64; ++k)
            expect += e.vector[static_cast<size_t>(k)] * w.data()[static_cast<size_t>(k * 8 + d)];
        for (int64_t t = 0; t < 86; ++t)
            CHECK(c.data()[static_cast<size_t>(t * 8 + d)] == doctest::Approx(expect).epsilon(1e-12));
    }

    // Two events overlapping on [0.8, 1.2]: additivity of the projections.
    cond::EventRoll both;
    both.duration = 2.0;
    both.events.push_back({"dog", {{0.2, 1.2}}});
    both.events.push_back({"cat", {{0.8, 1.8}}});
    cond::EventRoll only_dog;
    only_dog.duration = 2.0;
    only_dog.events.push_back({"dog", {{0.2, 1.2}}});
    cond::EventRoll only_cat;
    only_cat.duration = 2.0;
    only_cat.events.push_back({"cat", {{0.8, 1.8}}});
    Tensor cb = cond::eventroll_to_condition(both, 43.0, w);
    Tensor cd = cond::eventroll_to_condition(only_dog, 43.0, w);
    Tensor cc = cond::eventroll_to_condition(only_cat, 43.0, w);
    for (size_t i = 0; i < cb.data().size(); ++i)
        CHECK(std::fabs(cb.data()[i] - (cd.data()[i] + cc.data()[i])) < 1e-12);
}

TEST_CASE("event condition is shift equivariant on interior frames") {
    Rng rng(6);
    Tensor w = Tensor::randn({64, 4}, rng, 0.3);
    const double fr = 43.0;
    const int shift_frames = 7;
    const double shift = shift_frames / fr;

    // Interval ends deliberately unaligned with frame centers.
    cond::EventRoll a;
    a.duration = 3.0;
    a.events.push_back({"bell", {{0.513, 1.004}}});
    a.events.push_back({"drum", {{0.711, 1.402}}});
    cond::EventRoll b;
    b.duration = 3.0;
    for (const auto& e : a.events) {
        cond::EventInstance inst;
        inst.label = e.label;
        for (auto [on, off] : e.intervals) inst.intervals.emplace_back(on + shift, off + shift);
        b.events.push_back(inst);
    }
    Mat ma = cond::event_active_sum(a, fr);
    Mat mb = cond::event_active_sum(b, fr);
    for (int64_t t = 0; t + shift_frames < ma.rows; ++t)
        for (int64_t d = 0; d < ma.cols; ++d)
            CHECK(mb.at(t + shift_frames, d) == ma.at(t, d));
}

TEST_CASE("additivity over disjoint label sets") {
    Rng rng(7);
    for (int it = 0; it < 20; ++it) {
        cond::EventRoll a, b, u;
        a.duration = b.duration = u.duration = 2.0;
        auto rand_iv = [&](double dur) {
            const double len = rng.uniform(0.1, dur * 0.8);
            const double on = rng.uniform(0.0, dur - len);
            return std::make_pair(on, on + len);
        };
        a.events.push_back({"dog", {rand_iv(2.0)}});
        a.events.push_back({"cat", {rand_iv(2.0)}});
        b.events.push_back({"bell", {rand_iv(2.0)}});
        u.events = a.events;
        u.events.insert(u.events.end(), b.events.begin(), b.events.end());
        Mat mu = cond::event_active_sum(u, 43.0);
        Mat ma = cond::event_active_sum(a, 43.0);
        Mat mb = cond::event_active_sum(b, 43.0);
        for (size_t i = 0; i < mu.v.size(); ++i)
            CHECK(std::fabs(mu.v[i] - (ma.v[i] + mb.v[i])) < 1e-12);
    }
}

TEST_CASE("all extractors agree with duration * frame_rate within one frame") {
    Rng rng(8);
    for (int it = 0; it < 6; ++it) {
        const double dur = rng.uniform(0.5, 4.0);
        auto clip = testutil::sine_clip(220.0, dur, 0.6);
        const int64_t expect = llround(dur * 43.0);

        auto loud = cond::extract_loudness(clip);
        CHECK(std::llabs(static_cast<int64_t>(loud.db.size()) - expect) <= 1);

        cond::QuantizerStats stats{-3.0, 3.0};
        auto pitch = cond::extract_pitch(clip, dsp::FrameSpec{}, stats);
        CHECK(std::llabs(static_cast<int64_t>(pitch.bins.size()) - expect) <= 1);

        cond::EventRoll roll;
        roll.duration = dur;
        roll.events.push_back({"dog", {{0.0, dur}}});
        Mat active = cond::event_active_sum(roll);
        CHECK(std::llabs(active.rows - expect) <= 1);
    }
}

TEST_CASE("event roll json round trip and validation") {
    cond::EventRoll roll;
    roll.duration = 4.0;
    roll.events.push_back({"dog", {{0.5, 1.25}, {2.0, 3.5}}});
    roll.events.push_back({"bell", {{1.0, 2.5}}});
    auto text = cond::roll_to_json_text(roll);
    auto back = cond::roll_from_json_text(text);
    CHECK(back.duration == roll.duration);
    REQUIRE(back.events.size() == 2);
    CHECK(back.events[0].label == "dog");
    CHECK(back.events[0].intervals == roll.events[0].intervals);

    cond::EventRoll bad;
    bad.duration = 1.0;
    bad.events.push_back({"dog", {{0.5, 0.2}}});
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    cond::EventRoll past_end;
    past_end.duration = 1.0;
    past_end.events.push_back({"dog", {{0.5, 1.5}}});
    CHECK_THROWS_AS(past_end.validate(), std::invalid_argument);
}

TEST_CASE("resampling helpers use nearest frames") {
    Mat m(4, 2);
    for (int64_t r = 0; r < 4; ++r) {
        m.at(r, 0) = static_cast<double>(r);
        m.at(r, 1) = 10.0 + static_cast<double>(r);
    }
    Mat up = cond::resample_rows_nearest(m, 8);
    CHECK(up.rows == 8);
    CHECK(up.at(0, 0) == 0.0);
    CHECK(up.at(7, 0) == 3.0);
    Mat down = cond::resample_rows_nearest(m, 2);
    CHECK(down.at(0, 0) == 1.0);  // centers 0.25/0.75 of the way through
    CHECK(down.at(1, 0) == 3.0);
}
