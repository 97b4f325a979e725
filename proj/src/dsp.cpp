#include "fgc/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace fgc::dsp {

void AudioClip::validate() const {
    if (samples.empty()) throw std::invalid_argument("AudioClip: empty sample buffer");
    if (!(sample_rate > 0)) throw std::invalid_argument("AudioClip: sample_rate must be > 0");
    for (double s : samples) {
        if (!std::isfinite(s)) throw numeric_error("AudioClip: non-finite sample");
    }
}

void FrameSpec::validate() const {
    if (frame_length < 1) throw std::invalid_argument("FrameSpec: frame_length must be >= 1");
    if (hop < 1 || hop > frame_length)
        throw std::invalid_argument("FrameSpec: hop must satisfy 1 <= hop <= frame_length");
}

std::vector<double> frame_rms(const AudioClip& clip, const FrameSpec& spec) {
    clip.validate();
    spec.validate();
    const int64_t len = static_cast<int64_t>(clip.samples.size());
    const int64_t frame = spec.frame_length;
    const int64_t hop = spec.hop;
    int64_t t_count = len >= frame ? (len - frame) / hop + 1 : 1;
    std::vector<double> out(static_cast<size_t>(t_count));
    for (int64_t t = 0; t < t_count; ++t) {
        const int64_t start = t * hop;
        double acc = 0.0;
        const int64_t stop = std::min(start + frame, len);  // tail reads as zero
        for (int64_t j = start; j < stop; ++j) acc += clip.samples[static_cast<size_t>(j)] *
                                                      clip.samples[static_cast<size_t>(j)];
        out[static_cast<size_t>(t)] = std::sqrt(acc / static_cast<double>(frame));
    }
    return out;
}

std::vector<double> rms_to_db(const std::vector<double>& rms, double eps) {
    if (!(eps > 0)) throw std::invalid_argument("rms_to_db: eps must be > 0");
    std::vector<double> out(rms.size());
    for (size_t i = 0; i < rms.size(); ++i) out[i] = 20.0 * std::log10(rms[i] + eps);
    return out;
}

namespace {

// Solve A x = b in place by Gaussian elimination with partial pivoting.
std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
        if (std::fabs(a[piv * n + col]) < 1e-14) throw numeric_error("solve_dense: singular matrix");
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(b[col], b[piv]);
        }
        for (int r = col + 1; r < n; ++r) {
            double f = a[r * n + col] / a[col * n + col];
            for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(static_cast<size_t>(n));
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < n; ++c) acc -= a[r * n + c] * x[c];
        x[r] = acc / a[r * n + r];
    }
    return x;
}

}  // namespace

std::vector<double> savgol_coeffs(int window, int poly_order) {
    if (window < 1 || window % 2 == 0) throw std::invalid_argument("savgol: window must be odd");
    if (poly_order < 0 || poly_order >= window)
        throw std::invalid_argument("savgol: poly_order must be < window");
    const int half = window / 2;
    const int n = poly_order + 1;
    // Normal equations for fitting a degree-p polynomial over offsets [-h, h]
    // and evaluating at 0: coefficients are the first row of (A^T A)^-1 A^T.
    std::vector<double> ata(static_cast<size_t>(n * n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = -half; k <= half; ++k) acc += std::pow(static_cast<double>(k), i + j);
            ata[static_cast<size_t>(i * n + j)] = acc;
        }
    std::vector<double> coeffs(static_cast<size_t>(window));
    for (int k = -half; k <= half; ++k) {
        std::vector<double> rhs(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) rhs[static_cast<size_t>(i)] = std::pow(static_cast<double>(k), i);
        std::vector<double> sol = solve_dense(ata, rhs, n);
        coeffs[static_cast<size_t>(k + half)] = sol[0];  // evaluate fitted poly at 0
    }
    return coeffs;
}

std::vector<double> savgol_filter(const std::vector<double>& x, int window, int poly_order) {
    std::vector<double> c = savgol_coeffs(window, poly_order);  // validates args
    const int64_t n = static_cast<int64_t>(x.size());
    if (n < window) return x;
    const int half = window / 2;
    // Mirror padding excluding the edge sample: [.., x2, x1 | x0, x1, ..].
    auto sample = [&](int64_t i) -> double {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
        return x[static_cast<size_t>(i)];
    };
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (int k = -half; k <= half; ++k) acc += c[static_cast<size_t>(k + half)] * sample(t + k);
        out[static_cast<size_t>(t)] = acc;
    }
    return out;
}

F0Track estimate_f0(const AudioClip& clip, const FrameSpec& spec, double fmin, double fmax) {
    clip.validate();
    spec.validate();
    if (!(fmin > 0) || !(fmin < fmax) || !(fmax < clip.sample_rate / 2.0))
        throw std::invalid_argument("estimate_f0: need 0 < fmin < fmax < sample_rate/2");
    const double sr = clip.sample_rate;
    const int64_t frame = spec.frame_length;
    const int64_t half = frame / 2;
    const int64_t tau_min = std::max<int64_t>(2, static_cast<int64_t>(std::ceil(sr / fmax)));
    const int64_t tau_max = std::min<int64_t>(half - 1, static_cast<int64_t>(std::floor(sr / fmin)));
    if (tau_min >= tau_max)
        throw std::invalid_argument("estimate_f0: band incompatible with frame length");
    const double threshold = 0.15;

    const int64_t len = static_cast<int64_t>(clip.samples.size());
    const int64_t t_count = len >= frame ? (len - frame) / spec.hop + 1 : 1;
    F0Track track;
    track.f0.assign(static_cast<size_t>(t_count), 0.0);
    track.voiced.assign(static_cast<size_t>(t_count), false);

    std::vector<double> d(static_cast<size_t>(tau_max + 1));
    std::vector<double> cmndf(static_cast<size_t>(tau_max + 1));
    auto at = [&](int64_t i) -> double { return i < len ? clip.samples[static_cast<size_t>(i)] : 0.0; };

    for (int64_t t = 0; t < t_count; ++t) {
        const int64_t start = t * spec.hop;
        d[0] = 0.0;
        for (int64_t tau = 1; tau <= tau_max; ++tau) {
            double acc = 0.0;
            for (int64_t j = 0; j < half; ++j) {
                double diff = at(start + j) - at(start + j + tau);
                acc += diff * diff;
            }
            d[static_cast<size_t>(tau)] = acc;
        }
        double running = 0.0;
        cmndf[0] = 1.0;
        bool degenerate = false;
        for (int64_t tau = 1; tau <= tau_max; ++tau) {
            running += d[static_cast<size_t>(tau)];
            if (running < 1e-14) {
                degenerate = true;  // silence: difference function identically ~0
                break;
            }
            cmndf[static_cast<size_t>(tau)] =
                d[static_cast<size_t>(tau)] * static_cast<double>(tau) / running;
        }
        if (degenerate) continue;

        int64_t best = -1;
        for (int64_t tau = tau_min; tau <= tau_max; ++tau) {
            if (cmndf[static_cast<size_t>(tau)] < threshold) {
                // Descend to the local minimum of this dip.
                while (tau + 1 <= tau_max &&
                       cmndf[static_cast<size_t>(tau + 1)] < cmndf[static_cast<size_t>(tau)])
                    ++tau;
                best = tau;
                break;
            }
        }
        if (best < 0) continue;

        double tau_hat = static_cast<double>(best);
        if (best > 1 && best < tau_max) {
            const double a = cmndf[static_cast<size_t>(best - 1)];
            const double b = cmndf[static_cast<size_t>(best)];
            const double c = cmndf[static_cast<size_t>(best + 1)];
            const double denom = a - 2.0 * b + c;
            if (std::fabs(denom) > 1e-12) {
                double shift = 0.5 * (a - c) / denom;
                if (shift > -1.0 && shift < 1.0) tau_hat += shift;
            }
        }
        double f0 = sr / tau_hat;
        if (f0 >= fmin && f0 <= fmax) {
            track.f0[static_cast<size_t>(t)] = f0;
            track.voiced[static_cast<size_t>(t)] = true;
        }
    }
    return track;
}

std::vector<double> ricker_kernel(double scale) {
    if (!(scale > 0)) throw std::invalid_argument("ricker_kernel: scale must be > 0");
    const int64_t half = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(5.0 * scale)));
    const int64_t len = 2 * half + 1;
    std::vector<double> k(static_cast<size_t>(len));
    const double amp = 2.0 / (std::sqrt(3.0 * scale) * std::pow(M_PI, 0.25));
    for (int64_t i = -half; i <= half; ++i) {
        const double u = static_cast<double>(i) / scale;
        k[static_cast<size_t>(i + half)] = amp * (1.0 - u * u) * std::exp(-0.5 * u * u);
    }
    // Truncation leaves a small nonzero sum; recenter so constants map to 0.
    double mean = 0.0;
    for (double v : k) mean += v;
    mean /= static_cast<double>(len);
    for (double& v : k) v -= mean;
    return k;
}

Scalogram ricker_cwt(const std::vector<double>& x, const std::vector<double>& scales) {
    if (x.empty()) throw std::invalid_argument("ricker_cwt: empty input");
    if (scales.empty()) throw std::invalid_argument("ricker_cwt: empty scale list");
    for (double s : scales)
        if (!(s > 0)) throw std::invalid_argument("ricker_cwt: scales must be > 0");
    const int64_t n = static_cast<int64_t>(x.size());
    Scalogram sg;
    sg.scales = scales;
    sg.values = Mat(static_cast<int64_t>(scales.size()), n);
    for (size_t s = 0; s < scales.size(); ++s) {
        std::vector<double> k = ricker_kernel(scales[s]);
        const int64_t half = static_cast<int64_t>(k.size()) / 2;
        for (int64_t t = 0; t < n; ++t) {
            double acc = 0.0;
            const int64_t j0 = std::max<int64_t>(-half, -t);
            const int64_t j1 = std::min<int64_t>(half, n - 1 - t);
            for (int64_t j = j0; j <= j1; ++j)
                acc += x[static_cast<size_t>(t + j)] * k[static_cast<size_t>(half + j)];
            sg.values.at(static_cast<int64_t>(s), t) = acc;
        }
    }
    return sg;
}

int quantize_value(double v, int n_bins, double lo, double hi) {
    if (!std::isfinite(v)) throw numeric_error("quantize: non-finite input value");
    int bin = static_cast<int>(std::floor((v - lo) / (hi - lo) * static_cast<double>(n_bins)));
    return std::clamp(bin, 0, n_bins - 1);
}

std::vector<std::vector<int>> quantize_uniform(const Mat& values, int n_bins, double lo, double hi) {
    if (n_bins < 2) throw std::invalid_argument("quantize_uniform: n_bins must be >= 2");
    if (!(lo < hi)) throw std::invalid_argument("quantize_uniform: need lo < hi");
    std::vector<std::vector<int>> out(static_cast<size_t>(values.rows));
    for (int64_t r = 0; r < values.rows; ++r) {
        out[static_cast<size_t>(r)].resize(static_cast<size_t>(values.cols));
        for (int64_t c = 0; c < values.cols; ++c)
            out[static_cast<size_t>(r)][static_cast<size_t>(c)] =
                quantize_value(values.at(r, c), n_bins, lo, hi);
    }
    return out;
}

std::vector<double> fill_unvoiced(const F0Track& track, double fmin, double fmax) {
    const size_t n = track.f0.size();
    std::vector<double> out(n);
    std::vector<size_t> voiced_idx;
    for (size_t i = 0; i < n; ++i)
        if (track.voiced[i]) voiced_idx.push_back(i);
    if (voiced_idx.empty()) {
        std::fill(out.begin(), out.end(), std::sqrt(fmin * fmax));
        return out;
    }
    for (size_t i = 0; i < n; ++i) {
        if (track.voiced[i]) {
            out[i] = track.f0[i];
            continue;
        }
        auto it = std::lower_bound(voiced_idx.begin(), voiced_idx.end(), i);
        if (it == voiced_idx.begin()) {
            out[i] = track.f0[voiced_idx.front()];
        } else if (it == voiced_idx.end()) {
            out[i] = track.f0[voiced_idx.back()];
        } else {
            const size_t hi = *it;
            const size_t lo = *(it - 1);
            const double w = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
            out[i] = (1.0 - w) * track.f0[lo] + w * track.f0[hi];
        }
    }
    return out;
}

// --- WAV -------------------------------------------------------------------

namespace {

uint32_t read_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t read_u16(const unsigned char* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
void put_u32(std::vector<unsigned char>& b, uint32_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    b.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    b.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}
void put_u16(std::vector<unsigned char>& b, uint16_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open WAV file: " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw io_error("not a RIFF/WAVE file: " + path);

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    const unsigned char* data = nullptr;
    uint32_t data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const char* id = reinterpret_cast<const char*>(buf.data() + pos);
        uint32_t sz = read_u32(buf.data() + pos + 4);
        if (pos + 8 + sz > buf.size()) sz = static_cast<uint32_t>(buf.size() - pos - 8);
        if (std::memcmp(id, "fmt ", 4) == 0 && sz >= 16) {
            format = read_u16(buf.data() + pos + 8);
            channels = read_u16(buf.data() + pos + 10);
            rate = read_u32(buf.data() + pos + 12);
            bits = read_u16(buf.data() + pos + 22);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = buf.data() + pos + 8;
            data_len = sz;
        }
        pos += 8 + sz + (sz & 1);
    }
    if (!data || rate == 0) throw io_error("WAV missing fmt/data chunk: " + path);
    if (channels != 1) throw io_error("WAV must be mono: " + path);

    AudioClip clip;
    clip.sample_rate = static_cast<double>(rate);
    if (format == 1 && bits == 16) {
        size_t n = data_len / 2;
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            int16_t s = static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
            clip.samples[i] = static_cast<double>(s) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        size_t n = data_len / 4;
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            uint32_t u = read_u32(data + 4 * i);
            float v;
            std::memcpy(&v, &u, 4);
            clip.samples[i] = static_cast<double>(v);
        }
    } else {
        throw io_error("unsupported WAV encoding (need 16-bit PCM or 32-bit float): " + path);
    }
    if (clip.samples.empty()) throw io_error("WAV has no samples: " + path);
    if (clip.sample_rate != 44100.0) clip = resample_linear(clip, 44100.0);
    return clip;
}

AudioClip resample_linear(const AudioClip& clip, double target_rate) {
    clip.validate();
    if (clip.sample_rate == target_rate) return clip;
    const double ratio = clip.sample_rate / target_rate;
    const int64_t out_n = std::max<int64_t>(
        1, static_cast<int64_t>(std::floor(static_cast<double>(clip.samples.size() - 1) / ratio)) + 1);
    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(static_cast<size_t>(out_n));
    const int64_t n = static_cast<int64_t>(clip.samples.size());
    for (int64_t i = 0; i < out_n; ++i) {
        const double src = static_cast<double>(i) * ratio;
        const int64_t i0 = std::min<int64_t>(static_cast<int64_t>(src), n - 1);
        const int64_t i1 = std::min<int64_t>(i0 + 1, n - 1);
        const double w = src - static_cast<double>(i0);
        out.samples[static_cast<size_t>(i)] = (1.0 - w) * clip.samples[static_cast<size_t>(i0)] +
                                              w * clip.samples[static_cast<size_t>(i1)];
    }
    return out;
}

void write_wav(const std::string& path, const AudioClip& clip, bool float32) {
    clip.validate();
    std::vector<unsigned char> b;
    const uint32_t n = static_cast<uint32_t>(clip.samples.size());
    const uint16_t bytes_per = float32 ? 4 : 2;
    const uint32_t data_len = n * bytes_per;
    b.reserve(44 + data_len);
    b.insert(b.end(), {'R', 'I', 'F', 'F'});
    put_u32(b, 36 + data_len);
    b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(b, 16);
    put_u16(b, float32 ? 3 : 1);
    put_u16(b, 1);
    put_u32(b, static_cast<uint32_t>(clip.sample_rate));
    put_u32(b, static_cast<uint32_t>(clip.sample_rate) * bytes_per);
    put_u16(b, bytes_per);
    put_u16(b, static_cast<uint16_t>(bytes_per * 8));
    b.insert(b.end(), {'d', 'a', 't', 'a'});
    put_u32(b, data_len);
    for (double s : clip.samples) {
        if (float32) {
            float v = static_cast<float>(s);
            uint32_t u;
            std::memcpy(&u, &v, 4);
            put_u32(b, u);
        } else {
            double clamped = std::clamp(s, -1.0, 1.0);
            int32_t q = static_cast<int32_t>(std::lrint(clamped * 32768.0));
            put_u16(b, static_cast<uint16_t>(static_cast<int16_t>(std::clamp(q, -32768, 32767))));
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write WAV file: " + path);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace fgc::dsp
