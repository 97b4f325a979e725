#include "fgc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace fgc::eval {

const LabelDetection* DetectionResult::find(const std::string& label) const {
    for (const auto& l : labels)
        if (l.label == label) return &l;
    return nullptr;
}

namespace {

std::vector<double> median3(const std::vector<double>& p) {
    const size_t n = p.size();
    std::vector<double> out(n);
    for (size_t i = 0; i < n; ++i) {
        const double a = p[i > 0 ? i - 1 : i];
        const double b = p[i];
        const double c = p[i + 1 < n ? i + 1 : i];
        out[i] = std::max(std::min(a, b), std::min(std::max(a, b), c));
    }
    return out;
}

PRF prf_from_counts(int64_t tp, int64_t fp, int64_t fn) {
    PRF r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
                                      : 0.0;
    return r;
}

std::vector<std::pair<double, double>> ref_intervals(const cond::EventRoll& ref,
                                                     const std::string& label) {
    std::vector<std::pair<double, double>> out;
    for (const auto& e : ref.events)
        if (e.label == label)
            out.insert(out.end(), e.intervals.begin(), e.intervals.end());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

DetectionResult toy_sed(const dsp::AudioClip& clip, const Vocabulary& vocab) {
    if (vocab.size() == 0) throw std::invalid_argument("toy_sed: empty vocabulary");
    std::vector<double> freqs;
    for (const auto& b : vocab.bands) freqs.push_back(b.freq_hz);
    const dsp::FrameSpec spec{};
    Mat amps = band_amplitudes(clip, freqs, spec);
    const double fr = spec.frame_rate(clip.sample_rate);

    DetectionResult res;
    res.frame_rate = fr;
    for (size_t b = 0; b < vocab.bands.size(); ++b) {
        LabelDetection det;
        det.label = vocab.bands[b].label;
        std::vector<double> probs(static_cast<size_t>(amps.rows));
        for (int64_t t = 0; t < amps.rows; ++t)
            probs[static_cast<size_t>(t)] =
                std::clamp(amps.at(t, static_cast<int64_t>(b)) / kSedAmpRef, 0.0, 1.0);
        det.probs = median3(probs);
        int64_t run_start = -1;
        for (int64_t t = 0; t <= static_cast<int64_t>(det.probs.size()); ++t) {
            const bool active = t < static_cast<int64_t>(det.probs.size()) &&
                                det.probs[static_cast<size_t>(t)] > kSedThreshold;
            if (active && run_start < 0) run_start = t;
            if (!active && run_start >= 0) {
                det.intervals.emplace_back(static_cast<double>(run_start) / fr,
                                           static_cast<double>(t) / fr);
                run_start = -1;
            }
        }
        res.labels.push_back(std::move(det));
    }
    return res;
}

PRF event_f1(const cond::EventRoll& ref, const DetectionResult& hyp, double collar,
             std::map<std::string, PRF>* per_label) {
    if (!(collar > 0)) throw std::invalid_argument("event_f1: collar must be > 0");
    ref.validate();
    std::set<std::string> label_set;
    for (const auto& e : ref.events) label_set.insert(e.label);
    for (const auto& l : hyp.labels)
        if (!l.intervals.empty()) label_set.insert(l.label);

    int64_t tp = 0, fp = 0, fn = 0;
    for (const std::string& label : label_set) {
        const auto refs = ref_intervals(ref, label);
        std::vector<std::pair<double, double>> hyps;
        if (const LabelDetection* det = hyp.find(label)) hyps = det->intervals;
        std::sort(hyps.begin(), hyps.end());

        std::vector<bool> used(hyps.size(), false);
        int64_t matched = 0;
        for (const auto& [r_on, r_off] : refs) {
            const double off_tol = std::max(collar, 0.2 * (r_off - r_on));
            int best = -1;
            double best_delta = 1e300;
            for (size_t h = 0; h < hyps.size(); ++h) {
                if (used[h]) continue;
                const double d_on = std::fabs(hyps[h].first - r_on);
                const double d_off = std::fabs(hyps[h].second - r_off);
                if (d_on <= collar && d_off <= off_tol && d_on < best_delta) {
                    best = static_cast<int>(h);
                    best_delta = d_on;
                }
            }
            if (best >= 0) {
                used[static_cast<size_t>(best)] = true;
                ++matched;
            }
        }
        const int64_t l_tp = matched;
        const int64_t l_fp = static_cast<int64_t>(hyps.size()) - matched;
        const int64_t l_fn = static_cast<int64_t>(refs.size()) - matched;
        tp += l_tp;
        fp += l_fp;
        fn += l_fn;
        if (per_label) (*per_label)[label] = prf_from_counts(l_tp, l_fp, l_fn);
    }
    return prf_from_counts(tp, fp, fn);
}

PRF segment_f1(const cond::EventRoll& ref, const DetectionResult& hyp, double segment_s,
               std::map<std::string, PRF>* per_label) {
    if (!(segment_s > 0)) throw std::invalid_argument("segment_f1: segment must be > 0");
    ref.validate();
    std::set<std::string> label_set;
    for (const auto& e : ref.events) label_set.insert(e.label);
    for (const auto& l : hyp.labels)
        if (!l.intervals.empty()) label_set.insert(l.label);

    const int64_t n_seg = std::max<int64_t>(
        1, static_cast<int64_t>(std::ceil(ref.duration / segment_s - 1e-9)));
    auto overlaps = [&](const std::vector<std::pair<double, double>>& ivs, double lo,
                        double hi) {
        for (const auto& [on, off] : ivs)
            if (std::min(off, hi) - std::max(on, lo) > 1e-12) return true;
        return false;
    };

    int64_t tp = 0, fp = 0, fn = 0;
    for (const std::string& label : label_set) {
        const auto refs = ref_intervals(ref, label);
        std::vector<std::pair<double, double>> hyps;
        if (const LabelDetection* det = hyp.find(label)) hyps = det->intervals;
        int64_t l_tp = 0, l_fp = 0, l_fn = 0;
        for (int64_t s = 0; s < n_seg; ++s) {
            const double lo = static_cast<double>(s) * segment_s;
            const double hi = std::min(ref.duration, lo + segment_s);
            const bool r = overlaps(refs, lo, hi);
            const bool h = overlaps(hyps, lo, hi);
            if (r && h)
                ++l_tp;
            else if (h)
                ++l_fp;
            else if (r)
                ++l_fn;
        }
        tp += l_tp;
        fp += l_fp;
        fn += l_fn;
        if (per_label) (*per_label)[label] = prf_from_counts(l_tp, l_fp, l_fn);
    }
    return prf_from_counts(tp, fp, fn);
}

F1Report evaluate_events(const cond::EventRoll& ref, const DetectionResult& hyp, double collar,
                         double segment_s) {
    F1Report report;
    report.event = event_f1(ref, hyp, collar, &report.per_label_event);
    report.segment = segment_f1(ref, hyp, segment_s, &report.per_label_segment);
    return report;
}

double loudness_mae(const dsp::AudioClip& gen, const cond::LoudnessCurve& target) {
    cond::LoudnessCurve got = cond::extract_loudness(gen);
    const int64_t ng = static_cast<int64_t>(got.db.size());
    const int64_t nt = static_cast<int64_t>(target.db.size());
    if (std::llabs(ng - nt) > 1)
        throw std::invalid_argument("loudness_mae: " + std::to_string(ng) + " frames vs target " +
                                    std::to_string(nt) + " (beyond 1-frame tolerance)");
    const int64_t n = std::min(ng, nt);
    double acc = 0.0;
    for (int64_t t = 0; t < n; ++t)
        acc += std::fabs(got.db[static_cast<size_t>(t)] - target.db[static_cast<size_t>(t)]);
    return acc / static_cast<double>(n);
}

std::optional<double> pitch_mae(const dsp::AudioClip& gen, const dsp::F0Track& target,
                                double fmin, double fmax) {
    const dsp::FrameSpec spec{};
    dsp::F0Track got = dsp::estimate_f0(cond::center_pad(gen, spec), spec, fmin, fmax);
    const size_t n = std::min(got.f0.size(), target.f0.size());
    double acc = 0.0;
    int64_t count = 0;
    for (size_t t = 0; t < n; ++t) {
        if (got.voiced[t] && target.voiced[t]) {
            acc += std::fabs(got.f0[t] - target.f0[t]);
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return acc / static_cast<double>(count);
}

double edit_score(const dsp::AudioClip& clip, const std::string& label, double span_start,
                  double span_end, const Vocabulary& vocab) {
    if (!(span_start < span_end))
        throw std::invalid_argument("edit_score: need span_start < span_end");
    const double freq = vocab.freq_of(label);
    const dsp::FrameSpec spec{};
    Mat amps = band_amplitudes(clip, {freq}, spec);
    std::vector<double> probs(static_cast<size_t>(amps.rows));
    for (int64_t t = 0; t < amps.rows; ++t)
        probs[static_cast<size_t>(t)] = std::clamp(amps.at(t, 0) / kSedAmpRef, 0.0, 1.0);
    probs = median3(probs);
    const double fr = spec.frame_rate(clip.sample_rate);
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t t = 0; t < static_cast<int64_t>(probs.size()); ++t) {
        const double center = (static_cast<double>(t) + 0.5) / fr;
        if (span_start <= center && center < span_end) {
            acc += probs[static_cast<size_t>(t)];
            ++count;
        }
    }
    return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace fgc::eval
