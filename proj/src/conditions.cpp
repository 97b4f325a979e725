#include "fgc/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace fgc::cond {

std::string cond_kind_name(CondKind k) {
    switch (k) {
        case CondKind::loudness: return "loudness";
        case CondKind::pitch: return "pitch";
        case CondKind::event: return "event";
        case CondKind::edit: return "edit";
    }
    return "unknown";
}

CondKind cond_kind_from_name(const std::string& name) {
    if (name == "loudness") return CondKind::loudness;
    if (name == "pitch") return CondKind::pitch;
    if (name == "event" || name == "events") return CondKind::event;
    if (name == "edit") return CondKind::edit;
    throw std::invalid_argument("unknown condition kind: " + name);
}

void EventRoll::validate() const {
    if (!(duration > 0)) throw std::invalid_argument("EventRoll: duration must be > 0");
    for (const auto& e : events) {
        if (e.label.empty()) throw std::invalid_argument("EventRoll: empty label");
        for (const auto& [on, off] : e.intervals) {
            if (!(0.0 <= on && on < off && off <= duration + 1e-9))
                throw std::invalid_argument("EventRoll: bad interval [" + std::to_string(on) + "," +
                                            std::to_string(off) + "] for label " + e.label);
        }
    }
}

bool EventRoll::active(const std::string& label, double time_s) const {
    for (const auto& e : events) {
        if (e.label != label) continue;
        for (const auto& [on, off] : e.intervals)
            if (on <= time_s && time_s < off) return true;
    }
    return false;
}

std::vector<std::string> EventRoll::labels() const {
    std::vector<std::string> out;
    for (const auto& e : events)
        if (std::find(out.begin(), out.end(), e.label) == out.end()) out.push_back(e.label);
    return out;
}

dsp::AudioClip center_pad(const dsp::AudioClip& clip, const dsp::FrameSpec& spec) {
    clip.validate();
    spec.validate();
    const int64_t extra = spec.frame_length - spec.hop;
    const int64_t left = extra / 2;
    const int64_t right = extra - left;
    const int64_t n = static_cast<int64_t>(clip.samples.size());
    // Reflection (edge sample excluded) keeps constants constant, so edge
    // frames carry no phantom fade.
    auto reflect = [&](int64_t i) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * (n - 1) - i;
            if (n == 1) return static_cast<int64_t>(0);
        }
        return i;
    };
    dsp::AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.samples.resize(static_cast<size_t>(n + extra));
    for (int64_t i = 0; i < n + extra; ++i)
        out.samples[static_cast<size_t>(i)] = clip.samples[static_cast<size_t>(reflect(i - left))];
    (void)right;
    return out;
}

LoudnessCurve extract_loudness(const dsp::AudioClip& clip, const dsp::FrameSpec& spec,
                               int savgol_window, int savgol_order, double eps) {
    dsp::AudioClip padded = center_pad(clip, spec);
    std::vector<double> rms = dsp::frame_rms(padded, spec);
    std::vector<double> db = dsp::rms_to_db(rms, eps);
    LoudnessCurve curve;
    curve.db = dsp::savgol_filter(db, savgol_window, savgol_order);
    curve.frame_rate = spec.frame_rate(clip.sample_rate);
    return curve;
}

Mat loudness_condition_mat(const LoudnessCurve& curve, int width) {
    if (width < 1) throw std::invalid_argument("loudness_to_condition: width must be >= 1");
    Mat m(static_cast<int64_t>(curve.db.size()), width);
    for (int64_t t = 0; t < m.rows; ++t) {
        const double unit = (curve.db[static_cast<size_t>(t)] - kDbFloor) / (0.0 - kDbFloor) * 2.0 - 1.0;
        for (int64_t d = 0; d < m.cols; ++d) m.at(t, d) = unit;
    }
    return m;
}

ConditionSequence loudness_to_condition(const LoudnessCurve& curve, int width) {
    ConditionSequence seq;
    seq.kind = CondKind::loudness;
    seq.values = loudness_condition_mat(curve, width);
    seq.frame_rate = curve.frame_rate;
    return seq;
}

std::vector<double> default_cwt_scales(int count) {
    std::vector<double> scales(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) scales[static_cast<size_t>(i)] = static_cast<double>(i + 1);
    return scales;
}

Mat pitch_cwt_matrix(const dsp::AudioClip& clip, const dsp::FrameSpec& spec,
                     const std::vector<double>& scales, double fmin, double fmax) {
    dsp::AudioClip padded = center_pad(clip, spec);
    dsp::F0Track track = dsp::estimate_f0(padded, spec, fmin, fmax);
    std::vector<double> f0 = dsp::fill_unvoiced(track, fmin, fmax);
    std::vector<double> logf0(f0.size());
    double mean = 0.0;
    for (size_t i = 0; i < f0.size(); ++i) {
        logf0[i] = std::log(f0[i]);
        mean += logf0[i];
    }
    mean /= static_cast<double>(logf0.size());
    // Mean removal only changes the first/last kernel-width frames (the
    // wavelets are zero-sum); without it the track's absolute level leaks in
    // as a large step against the implicit zeros beyond the ends.
    for (double& v : logf0) v -= mean;
    dsp::Scalogram sg = dsp::ricker_cwt(logf0, scales);
    return sg.values;  // S x T
}

QuantizerStats quantizer_stats_from(const std::vector<Mat>& cwt_features) {
    QuantizerStats st;
    st.lo = 1e300;
    st.hi = -1e300;
    for (const auto& m : cwt_features)
        for (double v : m.v) {
            st.lo = std::min(st.lo, v);
            st.hi = std::max(st.hi, v);
        }
    if (st.lo > st.hi) {  // no data
        st.lo = -3.0;
        st.hi = 3.0;
    }
    if (st.hi - st.lo < 1e-9) {  // degenerate (e.g. constant-pitch corpus)
        const double mid = 0.5 * (st.lo + st.hi);
        st.lo = mid - 0.5;
        st.hi = mid + 0.5;
    }
    return st;
}

PitchCode extract_pitch(const dsp::AudioClip& clip, const dsp::FrameSpec& spec,
                        const QuantizerStats& stats, const std::vector<double>& scales_in,
                        int n_bins, double fmin, double fmax) {
    const std::vector<double> scales = scales_in.empty() ? default_cwt_scales() : scales_in;
    Mat cwt = pitch_cwt_matrix(clip, spec, scales, fmin, fmax);  // S x T
    auto bins_st = dsp::quantize_uniform(cwt, n_bins, stats.lo, stats.hi);
    PitchCode code;
    const size_t S = bins_st.size();
    const size_t T = S ? bins_st[0].size() : 0;
    code.bins.assign(T, std::vector<int>(S, 0));
    for (size_t s = 0; s < S; ++s)
        for (size_t t = 0; t < T; ++t) code.bins[t][s] = bins_st[s][t];
    return code;
}

nn::Tensor pitch_to_condition(const PitchCode& code, const nn::Tensor& codebook) {
    if (codebook.rank() != 2 || codebook.dim(0) != kPitchBins)
        throw shape_error("pitch_to_condition: codebook must be [256, D], got " +
                          nn::shape_str(codebook.shape()));
    const int64_t T = static_cast<int64_t>(code.bins.size());
    if (T == 0) throw std::invalid_argument("pitch_to_condition: empty PitchCode");
    const int64_t S = static_cast<int64_t>(code.bins[0].size());
    std::vector<int64_t> ids;
    ids.reserve(static_cast<size_t>(T * S));
    for (const auto& row : code.bins) {
        if (static_cast<int64_t>(row.size()) != S)
            throw std::invalid_argument("pitch_to_condition: ragged bins");
        for (int b : row) ids.push_back(b);
    }
    nn::Tensor looked = nn::embedding_lookup(codebook, ids);        // [T*S, D]
    nn::Tensor grouped = nn::reshape(looked, {T, S, codebook.dim(1)});
    return nn::mean_axis(grouped, 1);                               // [T, D]
}

TextEmbedding embed_label(const std::string& label) {
    if (label.empty()) throw std::invalid_argument("embed_label: empty label");
    std::string lowered = label;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    Rng rng(fnv1a64(lowered));
    TextEmbedding emb;
    emb.vector.resize(kTextEmbedWidth);
    double norm2 = 0.0;
    for (double& v : emb.vector) {
        v = rng.gaussian();
        norm2 += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : emb.vector) v *= inv;
    return emb;
}

Mat event_active_sum(const EventRoll& roll, double frame_rate, int64_t frames) {
    roll.validate();
    const int64_t T = frames > 0 ? frames : frames_for_duration(roll.duration, frame_rate);
    Mat active(T, kTextEmbedWidth);
    for (const auto& e : roll.events) {
        TextEmbedding emb = embed_label(e.label);
        for (const auto& [on, off] : e.intervals) {
            for (int64_t t = 0; t < T; ++t) {
                const double center = (static_cast<double>(t) + 0.5) / frame_rate;
                if (on <= center && center < off)
                    for (int d = 0; d < kTextEmbedWidth; ++d) active.at(t, d) += emb.vector[static_cast<size_t>(d)];
            }
        }
    }
    return active;
}

nn::Tensor eventroll_to_condition(const EventRoll& roll, double frame_rate,
                                  const nn::Tensor& proj, int64_t frames) {
    if (proj.rank() != 2 || proj.dim(0) != kTextEmbedWidth)
        throw shape_error("eventroll_to_condition: proj must be [64, D], got " +
                          nn::shape_str(proj.shape()));
    Mat active = event_active_sum(roll, frame_rate, frames);
    return nn::matmul(nn::Tensor::from_mat(active), proj);
}

Mat resample_rows_nearest(const Mat& m, int64_t target_rows) {
    if (m.rows == target_rows) return m;
    if (m.rows < 1) throw std::invalid_argument("resample_rows_nearest: empty matrix");
    Mat out(target_rows, m.cols);
    for (int64_t t = 0; t < target_rows; ++t) {
        const double pos = (static_cast<double>(t) + 0.5) / static_cast<double>(target_rows) *
                           static_cast<double>(m.rows);
        const int64_t src = std::clamp<int64_t>(static_cast<int64_t>(pos), 0, m.rows - 1);
        for (int64_t c = 0; c < m.cols; ++c) out.at(t, c) = m.at(src, c);
    }
    return out;
}

std::vector<std::vector<int>> resample_bins_nearest(const std::vector<std::vector<int>>& bins,
                                                    int64_t target_rows) {
    const int64_t rows = static_cast<int64_t>(bins.size());
    if (rows == target_rows) return bins;
    if (rows < 1) throw std::invalid_argument("resample_bins_nearest: empty bins");
    std::vector<std::vector<int>> out(static_cast<size_t>(target_rows));
    for (int64_t t = 0; t < target_rows; ++t) {
        const double pos = (static_cast<double>(t) + 0.5) / static_cast<double>(target_rows) *
                           static_cast<double>(rows);
        const int64_t src = std::clamp<int64_t>(static_cast<int64_t>(pos), 0, rows - 1);
        out[static_cast<size_t>(t)] = bins[static_cast<size_t>(src)];
    }
    return out;
}

EventRoll roll_from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    EventRoll roll;
    roll.duration = j.at("duration").get<double>();
    for (const auto& ev : j.at("events")) {
        EventInstance inst;
        inst.label = ev.at("label").get<std::string>();
        for (const auto& iv : ev.at("intervals"))
            inst.intervals.emplace_back(iv.at(0).get<double>(), iv.at(1).get<double>());
        roll.events.push_back(std::move(inst));
    }
    roll.validate();
    return roll;
}

std::string roll_to_json_text(const EventRoll& roll) {
    nlohmann::json j;
    j["duration"] = roll.duration;
    j["events"] = nlohmann::json::array();
    for (const auto& e : roll.events) {
        nlohmann::json ev;
        ev["label"] = e.label;
        ev["intervals"] = nlohmann::json::array();
        for (const auto& [on, off] : e.intervals) ev["intervals"].push_back({on, off});
        j["events"].push_back(ev);
    }
    return j.dump(2);
}

EventRoll read_roll(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open event roll: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return roll_from_json_text(text);
    } catch (const nlohmann::json::exception& e) {
        throw io_error("bad event roll JSON in " + path + ": " + e.what());
    }
}

void write_roll(const std::string& path, const EventRoll& roll) {
    std::ofstream f(path);
    if (!f) throw io_error("cannot write event roll: " + path);
    f << roll_to_json_text(roll) << '\n';
}

}  // namespace fgc::cond
