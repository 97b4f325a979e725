#include "fgc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fgc/fgc1.hpp"
#include "json.hpp"

namespace fgc::model {

using nn::Tensor;

void BackboneConfig::validate() const {
    if (n_mmdit < 1) throw config_error("BackboneConfig: n_mmdit must be >= 1");
    if (n_dit < 0) throw config_error("BackboneConfig: n_dit must be >= 0");
    if (latent_width < 1 || hidden < 1 || heads < 1 || text_width < 1)
        throw config_error("BackboneConfig: widths must be positive");
    if (hidden % heads != 0) throw config_error("BackboneConfig: hidden must divide by heads");
    if (!(duration > 0) || !(frame_rate > 0))
        throw config_error("BackboneConfig: duration and frame_rate must be positive");
}

int64_t count_params(const std::vector<NamedParam>& params) {
    int64_t n = 0;
    for (const auto& p : params)
        if (p.tensor.defined() && p.tensor.requires_grad()) n += p.tensor.numel();
    return n;
}

// --- building blocks ----------------------------------------------------------

Linear Linear::init(int64_t in, int64_t out, Rng& rng, double w_std) {
    const double std = w_std >= 0 ? w_std : 1.0 / std::sqrt(static_cast<double>(in));
    Linear lin;
    lin.w = Tensor::randn({in, out}, rng, std, true);
    lin.b = Tensor::zeros({out}, true);
    return lin;
}

Linear Linear::zeros(int64_t in, int64_t out) {
    Linear lin;
    lin.w = Tensor::zeros({in, out}, true);
    lin.b = Tensor::zeros({out}, true);
    return lin;
}

Tensor Linear::forward(const Tensor& x) const { return nn::add(nn::matmul(x, w), b); }

void Linear::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

Conv1dLayer Conv1dLayer::init(int64_t c_in, int64_t c_out, int k, Rng& rng) {
    Conv1dLayer layer;
    const double std = 1.0 / std::sqrt(static_cast<double>(c_in * k));
    layer.w = Tensor::randn({c_out, c_in, k}, rng, std, true);
    layer.b = Tensor::zeros({c_out}, true);
    layer.padding = k / 2;
    return layer;
}

Tensor Conv1dLayer::forward(const Tensor& x) const { return nn::conv1d(x, w, b, 1, padding); }

void Conv1dLayer::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

LoraSet LoraSet::init_for_attention(const BackboneConfig& cfg, int rank, Rng& rng) {
    LoraSet set;
    set.rank = rank;
    const int64_t d = cfg.hidden;
    auto add_pair = [&](const std::string& key) {
        LoraPair p;
        p.a = Tensor::randn({d, rank}, rng, 1.0 / std::sqrt(static_cast<double>(d)), true);
        p.b = Tensor::zeros({rank, d}, true);  // zero init keeps the adapted model identical
        set.pairs.emplace(key, std::move(p));
    };
    static const char* mats[] = {"q", "k", "v", "o"};
    for (int i = 0; i < cfg.n_mmdit; ++i)
        for (const char* m : mats) {
            add_pair("mmdit" + std::to_string(i) + ".txt." + m);
            add_pair("mmdit" + std::to_string(i) + ".aud." + m);
        }
    for (int i = 0; i < cfg.n_dit; ++i)
        for (const char* m : mats) add_pair("dit" + std::to_string(i) + "." + m);
    return set;
}

void LoraSet::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    for (const auto& [key, pair] : pairs) {
        out.push_back({prefix + "." + key + ".a", pair.a});
        out.push_back({prefix + "." + key + ".b", pair.b});
    }
}

AttentionProj AttentionProj::init(int64_t dim, Rng& rng) {
    AttentionProj p;
    p.q = Linear::init(dim, dim, rng);
    p.k = Linear::init(dim, dim, rng);
    p.v = Linear::init(dim, dim, rng);
    p.o = Linear::init(dim, dim, rng);
    return p;
}

void AttentionProj::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    q.collect(out, prefix + ".q");
    k.collect(out, prefix + ".k");
    v.collect(out, prefix + ".v");
    o.collect(out, prefix + ".o");
}

Tensor lora_apply(const Linear& lin, const Tensor& x, const LoraSet* lora,
                  const std::string& key) {
    Tensor y = lin.forward(x);
    if (lora) {
        auto it = lora->pairs.find(key);
        if (it != lora->pairs.end())
            y = nn::add(y, nn::matmul(nn::matmul(x, it->second.a), it->second.b));
    }
    return y;
}

namespace {

constexpr double kAdaInitStd = 0.02;

struct Modulation {
    Tensor shift1, scale1, gate1, shift2, scale2, gate2;
};

Modulation modulation(const Linear& ada, const Tensor& silu_c, int hidden) {
    Tensor m = ada.forward(silu_c);  // [1, 6*hidden]
    Modulation out;
    out.shift1 = nn::slice(m, 1, 0 * hidden, hidden);
    out.scale1 = nn::slice(m, 1, 1 * hidden, hidden);
    out.gate1 = nn::slice(m, 1, 2 * hidden, hidden);
    out.shift2 = nn::slice(m, 1, 3 * hidden, hidden);
    out.scale2 = nn::slice(m, 1, 4 * hidden, hidden);
    out.gate2 = nn::slice(m, 1, 5 * hidden, hidden);
    return out;
}

Tensor mlp_forward(const Linear& l1, const Linear& l2, const Tensor& x) {
    return l2.forward(nn::silu(l1.forward(x)));
}

}  // namespace

MmditBlock MmditBlock::init(int hidden, Rng& rng) {
    MmditBlock b;
    b.ada_txt = Linear::init(hidden, 6 * hidden, rng, kAdaInitStd);
    b.ada_aud = Linear::init(hidden, 6 * hidden, rng, kAdaInitStd);
    b.attn_txt = AttentionProj::init(hidden, rng);
    b.attn_aud = AttentionProj::init(hidden, rng);
    b.mlp1_txt = Linear::init(hidden, 4 * hidden, rng);
    b.mlp2_txt = Linear::init(4 * hidden, hidden, rng);
    b.mlp1_aud = Linear::init(hidden, 4 * hidden, rng);
    b.mlp2_aud = Linear::init(4 * hidden, hidden, rng);
    return b;
}

void MmditBlock::forward(Tensor& txt, Tensor& aud, const Tensor& cvec, int heads,
                         const LoraSet* lora, const std::string& key) const {
    const int hidden = static_cast<int>(txt.dim(1));
    Tensor silu_c = nn::silu(cvec);
    Modulation mt = modulation(ada_txt, silu_c, hidden);
    Modulation ma = modulation(ada_aud, silu_c, hidden);

    Tensor xt = nn::ada_scale_shift(nn::layer_norm(txt), mt.scale1, mt.shift1);
    Tensor xa = nn::ada_scale_shift(nn::layer_norm(aud), ma.scale1, ma.shift1);

    const int64_t s = txt.dim(0);
    const int64_t t = aud.dim(0);
    Tensor q = nn::concat({lora_apply(attn_txt.q, xt, lora, key + ".txt.q"),
                           lora_apply(attn_aud.q, xa, lora, key + ".aud.q")}, 0);
    Tensor k = nn::concat({lora_apply(attn_txt.k, xt, lora, key + ".txt.k"),
                           lora_apply(attn_aud.k, xa, lora, key + ".aud.k")}, 0);
    Tensor v = nn::concat({lora_apply(attn_txt.v, xt, lora, key + ".txt.v"),
                           lora_apply(attn_aud.v, xa, lora, key + ".aud.v")}, 0);
    Tensor joint = nn::attention(q, k, v, heads);
    Tensor at = nn::slice(joint, 0, 0, s);
    Tensor aa = nn::slice(joint, 0, s, t);

    txt = nn::add(txt, nn::mul(mt.gate1, lora_apply(attn_txt.o, at, lora, key + ".txt.o")));
    aud = nn::add(aud, nn::mul(ma.gate1, lora_apply(attn_aud.o, aa, lora, key + ".aud.o")));

    Tensor xt2 = nn::ada_scale_shift(nn::layer_norm(txt), mt.scale2, mt.shift2);
    Tensor xa2 = nn::ada_scale_shift(nn::layer_norm(aud), ma.scale2, ma.shift2);
    txt = nn::add(txt, nn::mul(mt.gate2, mlp_forward(mlp1_txt, mlp2_txt, xt2)));
    aud = nn::add(aud, nn::mul(ma.gate2, mlp_forward(mlp1_aud, mlp2_aud, xa2)));
}

void MmditBlock::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    ada_txt.collect(out, prefix + ".ada_txt");
    ada_aud.collect(out, prefix + ".ada_aud");
    attn_txt.collect(out, prefix + ".attn_txt");
    attn_aud.collect(out, prefix + ".attn_aud");
    mlp1_txt.collect(out, prefix + ".mlp1_txt");
    mlp2_txt.collect(out, prefix + ".mlp2_txt");
    mlp1_aud.collect(out, prefix + ".mlp1_aud");
    mlp2_aud.collect(out, prefix + ".mlp2_aud");
}

DitBlock DitBlock::init(int hidden, Rng& rng) {
    DitBlock b;
    b.ada = Linear::init(hidden, 6 * hidden, rng, kAdaInitStd);
    b.attn = AttentionProj::init(hidden, rng);
    b.mlp1 = Linear::init(hidden, 4 * hidden, rng);
    b.mlp2 = Linear::init(4 * hidden, hidden, rng);
    return b;
}

void DitBlock::forward(Tensor& x, const Tensor& cvec, int heads, const LoraSet* lora,
                       const std::string& key) const {
    const int hidden = static_cast<int>(x.dim(1));
    Tensor silu_c = nn::silu(cvec);
    Modulation m = modulation(ada, silu_c, hidden);
    Tensor xn = nn::ada_scale_shift(nn::layer_norm(x), m.scale1, m.shift1);
    Tensor q = lora_apply(attn.q, xn, lora, key + ".q");
    Tensor k = lora_apply(attn.k, xn, lora, key + ".k");
    Tensor v = lora_apply(attn.v, xn, lora, key + ".v");
    Tensor a = nn::attention(q, k, v, heads);
    x = nn::add(x, nn::mul(m.gate1, lora_apply(attn.o, a, lora, key + ".o")));
    Tensor x2 = nn::ada_scale_shift(nn::layer_norm(x), m.scale2, m.shift2);
    x = nn::add(x, nn::mul(m.gate2, mlp_forward(mlp1, mlp2, x2)));
}

void DitBlock::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    ada.collect(out, prefix + ".ada");
    attn.collect(out, prefix + ".attn");
    mlp1.collect(out, prefix + ".mlp1");
    mlp2.collect(out, prefix + ".mlp2");
}

OutputHead OutputHead::init(int hidden, int latent, Rng& rng) {
    OutputHead h;
    h.ada = Linear::init(hidden, 2 * hidden, rng, kAdaInitStd);
    h.conv = Conv1dLayer::init(hidden, hidden, 3, rng);
    h.out = Linear::init(hidden, latent, rng);
    return h;
}

Tensor OutputHead::forward(const Tensor& aud, const Tensor& cvec) const {
    const int hidden = static_cast<int>(aud.dim(1));
    Tensor m = ada.forward(nn::silu(cvec));
    Tensor scale = nn::slice(m, 1, 0, hidden);
    Tensor shift = nn::slice(m, 1, hidden, hidden);
    Tensor h = nn::ada_scale_shift(nn::layer_norm(aud), scale, shift);
    Tensor hc = nn::silu(conv.forward(nn::transpose2d(h)));
    return out.forward(nn::transpose2d(hc));
}

void OutputHead::collect(std::vector<NamedParam>& out_params, const std::string& prefix) const {
    ada.collect(out_params, prefix + ".ada");
    conv.collect(out_params, prefix + ".conv");
    out.collect(out_params, prefix + ".out");
}

TextEncoder TextEncoder::init(const std::vector<std::string>& labels, int text_width, int hidden,
                              Rng& rng) {
    TextEncoder enc;
    enc.labels = labels;
    enc.token_table = Tensor::randn(
        {kReservedTokens + static_cast<int64_t>(labels.size()), text_width}, rng, 0.5, true);
    enc.mlp1 = Linear::init(text_width, hidden, rng);
    enc.mlp2 = Linear::init(hidden, hidden, rng);
    return enc;
}

std::vector<int64_t> TextEncoder::tokenize(const std::string& caption, bool null_cond) const {
    if (null_cond) return {kNullToken};
    std::vector<int64_t> ids;
    std::istringstream is(caption);
    std::string word;
    while (is >> word) {
        auto it = std::find(labels.begin(), labels.end(), word);
        if (it == labels.end())
            throw std::invalid_argument("caption word not in vocabulary: " + word);
        ids.push_back(kReservedTokens + (it - labels.begin()));
    }
    if (ids.empty()) ids.push_back(kEmptyToken);
    return ids;
}

void TextEncoder::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    out.push_back({prefix + ".token_table", token_table});
    mlp1.collect(out, prefix + ".mlp1");
    mlp2.collect(out, prefix + ".mlp2");
}

// --- positional / time embeddings ------------------------------------------------

Tensor sinusoidal_position_table(int64_t n, int dim) {
    std::vector<double> data(static_cast<size_t>(n * dim));
    const int half = dim / 2;
    for (int64_t p = 0; p < n; ++p)
        for (int i = 0; i < dim; ++i) {
            const int pair = i < half ? i : i - half;
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(pair) /
                                         std::max(1, half));
            const double angle = static_cast<double>(p) * freq;
            data[static_cast<size_t>(p * dim + i)] = i < half ? std::sin(angle) : std::cos(angle);
        }
    return Tensor::from_data({n, dim}, std::move(data));
}

Tensor sinusoidal_time_vec(double t, int dim) {
    std::vector<double> data(static_cast<size_t>(dim));
    const int half = dim / 2;
    const double pos = t * 1000.0;
    for (int i = 0; i < dim; ++i) {
        const int pair = i < half ? i : i - half;
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(pair) / std::max(1, half));
        data[static_cast<size_t>(i)] = i < half ? std::sin(pos * freq) : std::cos(pos * freq);
    }
    return Tensor::from_data({1, dim}, std::move(data));
}

// --- backbone -----------------------------------------------------------------------

Backbone Backbone::init(const BackboneConfig& cfg, const std::vector<std::string>& labels,
                        Rng& rng) {
    cfg.validate();
    Backbone bb;
    bb.cfg = cfg;
    bb.text = TextEncoder::init(labels, cfg.text_width, cfg.hidden, rng);
    bb.fuse1 = Linear::init(cfg.hidden + cond::kTextEmbedWidth, cfg.hidden, rng);
    bb.fuse2 = Linear::init(cfg.hidden, cfg.hidden, rng);
    bb.input_proj = Linear::init(cfg.latent_width, cfg.hidden, rng);
    for (int i = 0; i < cfg.n_mmdit; ++i) bb.mmdit.push_back(MmditBlock::init(cfg.hidden, rng));
    for (int i = 0; i < cfg.n_dit; ++i) bb.dit.push_back(DitBlock::init(cfg.hidden, rng));
    bb.head = OutputHead::init(cfg.hidden, cfg.latent_width, rng);
    return bb;
}

Backbone::TextCtx Backbone::prepare_text(double t, const std::string& caption,
                                         bool null_cond) const {
    std::vector<int64_t> ids = text.tokenize(caption, null_cond);
    Tensor tokens = nn::embedding_lookup(text.token_table, ids);
    Tensor txt = nn::add(mlp_forward(text.mlp1, text.mlp2, tokens),
                         sinusoidal_position_table(static_cast<int64_t>(ids.size()), cfg.hidden));

    std::vector<double> clap(cond::kTextEmbedWidth, 0.0);
    const bool empty_caption = ids[0] == kEmptyToken;
    if (!null_cond && !empty_caption) clap = cond::embed_label(caption).vector;
    Tensor clap_t = Tensor::from_data({1, cond::kTextEmbedWidth}, std::move(clap));
    Tensor fused = nn::concat({sinusoidal_time_vec(t, cfg.hidden), clap_t}, 1);
    TextCtx ctx;
    ctx.txt_stream = txt;
    ctx.cvec = fuse2.forward(nn::silu(fuse1.forward(fused)));
    return ctx;
}

Tensor Backbone::forward(const Tensor& x_t, double t, const std::string& caption, bool null_cond,
                         LayerInjector* injector, const LoraSet* lora, Trace* trace) const {
    TextCtx ctx = prepare_text(t, caption, null_cond);
    return forward_with_ctx(x_t, ctx, injector, lora, trace);
}

Tensor Backbone::forward_with_ctx(const Tensor& x_t, const TextCtx& ctx, LayerInjector* injector,
                                  const LoraSet* lora, Trace* trace) const {
    if (x_t.rank() != 2 || x_t.dim(1) != cfg.latent_width)
        throw shape_error("backbone: latent must be [T," + std::to_string(cfg.latent_width) +
                          "], got " + nn::shape_str(x_t.shape()));
    Tensor aud = nn::add(input_proj.forward(x_t),
                         sinusoidal_position_table(x_t.dim(0), cfg.hidden));
    Tensor txt = ctx.txt_stream;
    int layer = 0;
    auto inject = [&](Tensor& stream) {
        if (injector) {
            Tensor r = injector->residual(layer, stream);
            if (r.defined()) stream = nn::add(stream, r);
        }
        ++layer;
    };
    for (int i = 0; i < cfg.n_mmdit; ++i) {
        mmdit[static_cast<size_t>(i)].forward(txt, aud, ctx.cvec, cfg.heads, lora,
                                              "mmdit" + std::to_string(i));
        if (trace) trace->mmdit_txt.push_back(txt);
        inject(aud);
    }
    for (int i = 0; i < cfg.n_dit; ++i) {
        dit[static_cast<size_t>(i)].forward(aud, ctx.cvec, cfg.heads, lora,
                                            "dit" + std::to_string(i));
        inject(aud);
    }
    return head.forward(aud, ctx.cvec);
}

void Backbone::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    text.collect(out, prefix + ".text");
    fuse1.collect(out, prefix + ".fuse1");
    fuse2.collect(out, prefix + ".fuse2");
    input_proj.collect(out, prefix + ".input_proj");
    for (size_t i = 0; i < mmdit.size(); ++i)
        mmdit[i].collect(out, prefix + ".mmdit" + std::to_string(i));
    for (size_t i = 0; i < dit.size(); ++i) dit[i].collect(out, prefix + ".dit" + std::to_string(i));
    head.collect(out, prefix + ".head");
}

// --- latent codec ----------------------------------------------------------------------

LatentCodec LatentCodec::seeded(int width, uint64_t seed) {
    LatentCodec codec;
    codec.width = width;
    codec.bias.assign(static_cast<size_t>(width), 0.0);
    Rng rng(splitmix64(seed ^ 0x10a7e47c0dec0deULL));
    constexpr double kFeatureCenter = -0.85;  // silence-dominated band features
    Mat r(width, width);
    for (double& v : r.v) v = rng.gaussian();
    // Gram-Schmidt rows -> orthonormal rotation, so the inverse is the transpose.
    for (int64_t i = 0; i < width; ++i) {
        for (int64_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (int64_t c = 0; c < width; ++c) dot += r.at(i, c) * r.at(j, c);
            for (int64_t c = 0; c < width; ++c) r.at(i, c) -= dot * r.at(j, c);
        }
        double norm = 0.0;
        for (int64_t c = 0; c < width; ++c) norm += r.at(i, c) * r.at(i, c);
        norm = std::sqrt(norm);
        if (norm < 1e-9) throw numeric_error("LatentCodec: degenerate rotation draw");
        for (int64_t c = 0; c < width; ++c) r.at(i, c) /= norm;
    }
    codec.rotation = r;
    codec.rotation_inv = Mat(width, width);
    for (int64_t i = 0; i < width; ++i)
        for (int64_t j = 0; j < width; ++j) codec.rotation_inv.at(j, i) = r.at(i, j);
    // Center the latent distribution: encode(feat) = R (feat - center).
    for (int64_t i = 0; i < width; ++i) {
        double row_sum = 0.0;
        for (int64_t j = 0; j < width; ++j) row_sum += r.at(i, j);
        codec.bias[static_cast<size_t>(i)] = -kFeatureCenter * row_sum;
    }
    return codec;
}

Mat LatentCodec::encode(const Mat& features) const {
    if (features.cols != width)
        throw shape_error("LatentCodec.encode: want width " + std::to_string(width) + ", got " +
                          std::to_string(features.cols));
    Mat out(features.rows, width);
    for (int64_t t = 0; t < features.rows; ++t)
        for (int64_t i = 0; i < width; ++i) {
            double acc = bias[static_cast<size_t>(i)];
            for (int64_t j = 0; j < width; ++j) acc += rotation.at(i, j) * features.at(t, j);
            out.at(t, i) = acc;
        }
    return out;
}

Mat LatentCodec::decode(const Mat& latent) const {
    if (latent.cols != width)
        throw shape_error("LatentCodec.decode: want width " + std::to_string(width) + ", got " +
                          std::to_string(latent.cols));
    Mat out(latent.rows, width);
    for (int64_t t = 0; t < latent.rows; ++t)
        for (int64_t j = 0; j < width; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < width; ++i)
                acc += rotation_inv.at(j, i) * (latent.at(t, i) - bias[static_cast<size_t>(i)]);
            out.at(t, j) = acc;
        }
    return out;
}

// --- condition encoders -------------------------------------------------------------------

CondEncoders CondEncoders::init(cond::CondKind kind, int width, Rng& rng) {
    CondEncoders enc;
    if (kind == cond::CondKind::pitch)
        enc.codebook = Tensor::randn({cond::kPitchBins, width}, rng, 0.3, true);
    if (kind == cond::CondKind::event || kind == cond::CondKind::edit)
        enc.event_proj = Tensor::randn({cond::kTextEmbedWidth, width}, rng,
                                       1.0 / std::sqrt(static_cast<double>(cond::kTextEmbedWidth)),
                                       true);
    return enc;
}

void CondEncoders::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    if (codebook.defined()) out.push_back({prefix + ".codebook", codebook});
    if (event_proj.defined()) out.push_back({prefix + ".event_proj", event_proj});
}

namespace {

// Shared condition assembly for both branch types. frames > 0 resamples to
// that many rows (nearest frame); frames <= 0 keeps the native length, which
// cross-attention consumers can handle directly.
Tensor build_condition(cond::CondKind kind, const CondEncoders& enc, const CondInput& input,
                       int64_t frames, int width) {
    switch (kind) {
        case cond::CondKind::loudness: {
            if (input.loud.cols != width)
                throw shape_error("loudness condition width " + std::to_string(input.loud.cols) +
                                  " != " + std::to_string(width));
            return Tensor::from_mat(frames > 0 ? cond::resample_rows_nearest(input.loud, frames)
                                               : input.loud);
        }
        case cond::CondKind::pitch: {
            cond::PitchCode code;
            code.bins = frames > 0 ? cond::resample_bins_nearest(input.bins, frames) : input.bins;
            code.codebook_dim = width;
            return cond::pitch_to_condition(code, enc.codebook);
        }
        case cond::CondKind::event:
        case cond::CondKind::edit: {
            Mat active = frames > 0 ? cond::resample_rows_nearest(input.active, frames)
                                    : input.active;
            return nn::matmul(Tensor::from_mat(active), enc.event_proj);
        }
    }
    throw config_error("build_condition: unhandled kind");
}

}  // namespace

// --- ControlNet branch ----------------------------------------------------------------------

ControlNetBranch ControlNetBranch::init_from(const Backbone& bb, int depth, cond::CondKind kind,
                                             Rng& rng) {
    if (depth < 1 || depth > bb.cfg.n_blocks())
        throw config_error("ControlNet depth " + std::to_string(depth) + " exceeds " +
                           std::to_string(bb.cfg.n_blocks()) + " backbone layers");
    ControlNetBranch br;
    br.depth = depth;
    br.kind = kind;
    br.zero_in = Linear::zeros(bb.cfg.latent_width, bb.cfg.latent_width);
    // Trainable copies of the backbone weights, ControlNet style.
    auto copy_tensor = [](const Tensor& t) {
        Tensor c = Tensor::from_data(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
        c.set_requires_grad(true);
        return c;
    };
    auto copy_linear = [&](const Linear& l) {
        Linear c;
        c.w = copy_tensor(l.w);
        c.b = copy_tensor(l.b);
        return c;
    };
    br.input_proj_copy = copy_linear(bb.input_proj);
    const int n_mm = std::min(depth, bb.cfg.n_mmdit);
    for (int i = 0; i < n_mm; ++i) {
        const MmditBlock& src = bb.mmdit[static_cast<size_t>(i)];
        MmditBlock c;
        c.ada_txt = copy_linear(src.ada_txt);
        c.ada_aud = copy_linear(src.ada_aud);
        c.attn_txt = {copy_linear(src.attn_txt.q), copy_linear(src.attn_txt.k),
                      copy_linear(src.attn_txt.v), copy_linear(src.attn_txt.o)};
        c.attn_aud = {copy_linear(src.attn_aud.q), copy_linear(src.attn_aud.k),
                      copy_linear(src.attn_aud.v), copy_linear(src.attn_aud.o)};
        c.mlp1_txt = copy_linear(src.mlp1_txt);
        c.mlp2_txt = copy_linear(src.mlp2_txt);
        c.mlp1_aud = copy_linear(src.mlp1_aud);
        c.mlp2_aud = copy_linear(src.mlp2_aud);
        br.mmdit_copy.push_back(std::move(c));
    }
    for (int i = 0; i < depth - n_mm; ++i) {
        const DitBlock& src = bb.dit[static_cast<size_t>(i)];
        DitBlock c;
        c.ada = copy_linear(src.ada);
        c.attn = {copy_linear(src.attn.q), copy_linear(src.attn.k), copy_linear(src.attn.v),
                  copy_linear(src.attn.o)};
        c.mlp1 = copy_linear(src.mlp1);
        c.mlp2 = copy_linear(src.mlp2);
        br.dit_copy.push_back(std::move(c));
    }
    for (int i = 0; i < depth; ++i)
        br.zero_out.push_back(Linear::zeros(bb.cfg.hidden, bb.cfg.hidden));
    br.enc = CondEncoders::init(kind, bb.cfg.latent_width, rng);
    return br;
}

std::vector<Tensor> ControlNetBranch::forward(const Backbone& bb, const Backbone::TextCtx& ctx,
                                              const Tensor& cond) const {
    Tensor z = nn::add(input_proj_copy.forward(zero_in.forward(cond)),
                       sinusoidal_position_table(cond.dim(0), bb.cfg.hidden));
    Tensor txt = ctx.txt_stream;
    std::vector<Tensor> residuals;
    int layer = 0;
    for (const auto& block : mmdit_copy) {
        block.forward(txt, z, ctx.cvec, bb.cfg.heads, nullptr, "");
        residuals.push_back(zero_out[static_cast<size_t>(layer)].forward(z));
        ++layer;
    }
    for (const auto& block : dit_copy) {
        block.forward(z, ctx.cvec, bb.cfg.heads, nullptr, "");
        residuals.push_back(zero_out[static_cast<size_t>(layer)].forward(z));
        ++layer;
    }
    return residuals;
}

Tensor ControlNetBranch::make_condition(const CondInput& input, int64_t frames) const {
    return build_condition(kind, enc, input, frames, static_cast<int>(zero_in.w.dim(0)));
}

void ControlNetBranch::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    zero_in.collect(out, prefix + ".zero_in");
    input_proj_copy.collect(out, prefix + ".input_proj");
    for (size_t i = 0; i < mmdit_copy.size(); ++i)
        mmdit_copy[i].collect(out, prefix + ".mmdit" + std::to_string(i));
    for (size_t i = 0; i < dit_copy.size(); ++i)
        dit_copy[i].collect(out, prefix + ".dit" + std::to_string(i));
    for (size_t i = 0; i < zero_out.size(); ++i)
        zero_out[i].collect(out, prefix + ".zero_out" + std::to_string(i));
    enc.collect(out, prefix + ".enc");
}

// --- Adapter branch -----------------------------------------------------------------------

AdapterBranch AdapterBranch::init(const BackboneConfig& cfg, int depth, cond::CondKind kind,
                                  int in_channels, bool per_layer_kv, Rng& rng) {
    if (depth < 1 || depth > cfg.n_blocks())
        throw config_error("Adapter depth " + std::to_string(depth) + " exceeds " +
                           std::to_string(cfg.n_blocks()) + " backbone layers");
    AdapterBranch br;
    br.depth = depth;
    br.kind = kind;
    br.in_channels = in_channels;
    br.per_layer_kv = per_layer_kv;
    br.enc1 = Conv1dLayer::init(in_channels, cfg.hidden, 3, rng);
    br.enc2 = Conv1dLayer::init(cfg.hidden, cfg.hidden, 3, rng);
    br.enc3 = Conv1dLayer::init(cfg.hidden, 2 * cfg.hidden, 3, rng);
    if (per_layer_kv)
        for (int i = 0; i < depth; ++i) {
            br.k_proj.push_back(Linear::init(cfg.hidden, cfg.hidden, rng));
            br.v_proj.push_back(Linear::init(cfg.hidden, cfg.hidden, rng));
        }
    for (int i = 0; i < depth; ++i) br.zero_out.push_back(Linear::zeros(cfg.hidden, cfg.hidden));
    br.enc = CondEncoders::init(kind, cfg.latent_width, rng);
    return br;
}

AdapterBranch::Prepared AdapterBranch::encode(const Tensor& cond) const {
    if (cond.rank() != 2 || cond.dim(1) != in_channels)
        throw shape_error("adapter: condition must be [T," + std::to_string(in_channels) +
                          "], got " + nn::shape_str(cond.shape()));
    Tensor h = nn::transpose2d(cond);  // [C, T]
    h = nn::silu(enc1.forward(h));
    h = nn::silu(enc2.forward(h));
    h = enc3.forward(h);                      // [2H, T]
    Tensor ht = nn::transpose2d(h);           // [T, 2H]
    const int64_t hidden = ht.dim(1) / 2;
    Prepared kv;
    // Normalized positional keys: content at unit scale plus the frame index,
    // so queries can align by position as well as by content.
    kv.k = nn::add(nn::layer_norm(nn::slice(ht, 1, 0, hidden)),
                   sinusoidal_position_table(ht.dim(0), static_cast<int>(hidden)));
    kv.v = nn::slice(ht, 1, hidden, hidden);
    return kv;
}

Tensor AdapterBranch::residual(int layer, const Tensor& z, const Prepared& kv, int heads) const {
    if (layer < 0 || layer >= depth) throw config_error("adapter residual: bad layer index");
    Tensor k = kv.k;
    Tensor v = kv.v;
    if (per_layer_kv) {
        k = k_proj[static_cast<size_t>(layer)].forward(k);
        v = v_proj[static_cast<size_t>(layer)].forward(v);
    }
    // QK norm: the latent grows with depth through residual accumulation and
    // would otherwise drown the positional term in the logits.
    Tensor q = nn::add(nn::layer_norm(z), sinusoidal_position_table(z.dim(0),
                                                                    static_cast<int>(z.dim(1))));
    Tensor h = nn::attention(q, k, v, heads);
    return zero_out[static_cast<size_t>(layer)].forward(h);
}

Tensor AdapterBranch::make_condition(const CondInput& input, int64_t /*frames*/) const {
    // Cross-attention accepts any key length, so the condition keeps its
    // native frame count (width = in_channels; the editor overrides this path).
    return build_condition(kind, enc, input, -1, in_channels);
}

void AdapterBranch::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    enc1.collect(out, prefix + ".enc1");
    enc2.collect(out, prefix + ".enc2");
    enc3.collect(out, prefix + ".enc3");
    for (size_t i = 0; i < k_proj.size(); ++i) {
        k_proj[i].collect(out, prefix + ".k_proj" + std::to_string(i));
        v_proj[i].collect(out, prefix + ".v_proj" + std::to_string(i));
    }
    for (size_t i = 0; i < zero_out.size(); ++i)
        zero_out[i].collect(out, prefix + ".zero_out" + std::to_string(i));
    enc.collect(out, prefix + ".enc");
}

// --- Editor branch ------------------------------------------------------------------------

EditorBranch EditorBranch::init(const BackboneConfig& cfg, int depth, int lora_rank, Rng& rng) {
    EditorBranch ed;
    ed.adapter = AdapterBranch::init(cfg, depth, cond::CondKind::edit, 2 * cfg.latent_width,
                                     false, rng);
    if (lora_rank > 0) ed.lora = LoraSet::init_for_attention(cfg, lora_rank, rng);
    return ed;
}

Tensor EditorBranch::make_encoder_input(const CondInput& input, int64_t frames) const {
    const int latent = adapter.in_channels / 2;
    if (input.ref_latent.cols != latent)
        throw shape_error("editor: ref latent width " + std::to_string(input.ref_latent.cols) +
                          " != " + std::to_string(latent));
    if (input.ref_latent.rows != frames)
        throw shape_error("editor: ref latent has " + std::to_string(input.ref_latent.rows) +
                          " frames, the noised latent has " + std::to_string(frames));
    Tensor ref = Tensor::from_mat(input.ref_latent);
    Tensor edit_cond = build_condition(cond::CondKind::edit, adapter.enc, input, frames, latent);
    return nn::concat({ref, edit_cond}, 1);
}

void EditorBranch::collect(std::vector<NamedParam>& out, const std::string& prefix) const {
    adapter.collect(out, prefix + ".adapter");
    if (lora) lora->collect(out, prefix + ".lora");
}

// --- composite injector ----------------------------------------------------------------------

Tensor CompositeInjector::residual(int layer, const Tensor& z) {
    std::stable_sort(children_.begin(), children_.end(),
                     [](const auto& a, const auto& b) {
                         return static_cast<int>(a.first) < static_cast<int>(b.first);
                     });
    Tensor total;
    std::vector<Tensor> row;
    for (auto& [kind, child] : children_) {
        Tensor r = child->residual(layer, z);
        row.push_back(r);
        if (!r.defined()) continue;
        total = total.defined() ? nn::add(total, r) : r;
    }
    if (static_cast<int>(recorded_.size()) <= layer) recorded_.resize(static_cast<size_t>(layer + 1));
    recorded_[static_cast<size_t>(layer)] = std::move(row);
    return total;
}

// --- bundle -----------------------------------------------------------------------------------

std::string branch_type_name(BranchType t) {
    switch (t) {
        case BranchType::none: return "none";
        case BranchType::controlnet: return "controlnet";
        case BranchType::adapter: return "adapter";
        case BranchType::editor: return "editor";
    }
    return "none";
}

BranchType branch_type_from_name(const std::string& name) {
    if (name == "none") return BranchType::none;
    if (name == "controlnet") return BranchType::controlnet;
    if (name == "adapter") return BranchType::adapter;
    if (name == "editor") return BranchType::editor;
    throw config_error("unknown branch type: " + name);
}

ModelBundle ModelBundle::init(const BackboneConfig& cfg, const Vocabulary& vocab, uint64_t seed) {
    cfg.validate();
    if (static_cast<int>(vocab.size()) > cfg.latent_width)
        throw config_error("vocabulary larger than latent width");
    ModelBundle b;
    b.config = cfg;
    b.vocab = vocab;
    b.seed = seed;
    Rng rng(seed);
    b.backbone = Backbone::init(cfg, vocab.labels(), rng);
    b.codec = LatentCodec::seeded(cfg.latent_width, seed);
    return b;
}

namespace {

void set_trainable(std::vector<NamedParam>& params, bool trainable) {
    for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

}  // namespace

void ModelBundle::attach_controlnet(int depth, cond::CondKind kind, uint64_t branch_seed) {
    Rng rng(splitmix64(branch_seed ^ 0xc0117011e7ULL));
    controlnet = ControlNetBranch::init_from(backbone, depth, kind, rng);
    branch_type = BranchType::controlnet;
    auto bp = backbone_params();
    set_trainable(bp, false);
}

void ModelBundle::attach_adapter(int depth, cond::CondKind kind, uint64_t branch_seed,
                                 bool per_layer_kv) {
    Rng rng(splitmix64(branch_seed ^ 0xada97e7ULL));
    int in_channels = config.latent_width;
    adapter = AdapterBranch::init(config, depth, kind, in_channels, per_layer_kv, rng);
    branch_type = BranchType::adapter;
    auto bp = backbone_params();
    set_trainable(bp, false);
}

void ModelBundle::attach_editor(int depth, int lora_rank, uint64_t branch_seed) {
    Rng rng(splitmix64(branch_seed ^ 0xed170eULL));
    editor = EditorBranch::init(config, depth, lora_rank, rng);
    branch_type = BranchType::editor;
    auto bp = backbone_params();
    set_trainable(bp, false);
}

std::vector<NamedParam> ModelBundle::backbone_params() const {
    std::vector<NamedParam> out;
    backbone.collect(out, "backbone");
    return out;
}

std::vector<NamedParam> ModelBundle::branch_params() const {
    std::vector<NamedParam> out;
    switch (branch_type) {
        case BranchType::none: break;
        case BranchType::controlnet: controlnet->collect(out, "controlnet"); break;
        case BranchType::adapter: adapter->collect(out, "adapter"); break;
        case BranchType::editor: editor->collect(out, "editor"); break;
    }
    return out;
}

const CondInput* find_cond(const std::vector<CondInput>& conds, cond::CondKind kind) {
    for (const auto& c : conds)
        if (c.kind == kind) return &c;
    return nullptr;
}

Tensor ModelBundle::velocity(const Tensor& x_t, double t, const std::string& caption,
                             bool null_cond, const std::vector<CondInput>& conds,
                             Backbone::Trace* trace) const {
    const int64_t frames = x_t.dim(0);
    switch (branch_type) {
        case BranchType::none:
            return backbone.forward(x_t, t, caption, null_cond, nullptr, nullptr, trace);
        case BranchType::controlnet: {
            Backbone::TextCtx ctx = backbone.prepare_text(t, caption, null_cond);
            const CondInput* ci = null_cond ? nullptr : find_cond(conds, controlnet->kind);
            Tensor cond_t = ci ? controlnet->make_condition(*ci, frames)
                               : Tensor::zeros({frames, config.latent_width});
            std::vector<Tensor> residuals = controlnet->forward(backbone, ctx, cond_t);
            PrecomputedInjector inj(std::move(residuals));
            return backbone.forward_with_ctx(x_t, ctx, &inj, nullptr, trace);
        }
        case BranchType::adapter: {
            Backbone::TextCtx ctx = backbone.prepare_text(t, caption, null_cond);
            const CondInput* ci = null_cond ? nullptr : find_cond(conds, adapter->kind);
            Tensor cond_t = ci ? adapter->make_condition(*ci, frames)
                               : Tensor::zeros({frames, adapter->in_channels});
            AdapterInjector inj(&*adapter, adapter->encode(cond_t), config.heads);
            return backbone.forward_with_ctx(x_t, ctx, &inj, nullptr, trace);
        }
        case BranchType::editor: {
            // Editing replaces the caption with the empty string.
            Backbone::TextCtx ctx = backbone.prepare_text(t, "", null_cond);
            const CondInput* ci = null_cond ? nullptr : find_cond(conds, cond::CondKind::edit);
            Tensor enc_in = ci ? editor->make_encoder_input(*ci, frames)
                               : Tensor::zeros({frames, editor->adapter.in_channels});
            AdapterInjector inj(&editor->adapter, editor->adapter.encode(enc_in), config.heads);
            const LoraSet* lora = editor->lora ? &*editor->lora : nullptr;
            return backbone.forward_with_ctx(x_t, ctx, &inj, lora, trace);
        }
    }
    throw config_error("velocity: unhandled branch type");
}

// --- branch forward wrappers --------------------------------------------------------------------

namespace {

class RecordingInjector : public LayerInjector {
public:
    explicit RecordingInjector(LayerInjector* inner) : inner_(inner) {}
    Tensor residual(int layer, const Tensor& z) override {
        Tensor r = inner_->residual(layer, z);
        if (static_cast<int>(residuals_.size()) <= layer)
            residuals_.resize(static_cast<size_t>(layer) + 1);
        residuals_[static_cast<size_t>(layer)] = r;
        return r;
    }
    std::vector<Tensor> take() { return std::move(residuals_); }

private:
    LayerInjector* inner_;
    std::vector<Tensor> residuals_;
};

}  // namespace

BranchForwardResult controlnet_forward(const ModelBundle& bundle, const Tensor& x_t, double t,
                                       const std::string& caption, const CondInput& cond) {
    if (bundle.branch_type != BranchType::controlnet)
        throw config_error("controlnet_forward: bundle has no ControlNet branch");
    Backbone::TextCtx ctx = bundle.backbone.prepare_text(t, caption, false);
    Tensor cond_t = bundle.controlnet->make_condition(cond, x_t.dim(0));
    BranchForwardResult res;
    res.residuals = bundle.controlnet->forward(bundle.backbone, ctx, cond_t);
    PrecomputedInjector inj(res.residuals);
    res.output = bundle.backbone.forward_with_ctx(x_t, ctx, &inj);
    return res;
}

BranchForwardResult adapter_forward(const ModelBundle& bundle, const Tensor& x_t, double t,
                                    const std::string& caption, const CondInput& cond) {
    if (bundle.branch_type != BranchType::adapter)
        throw config_error("adapter_forward: bundle has no adapter branch");
    Backbone::TextCtx ctx = bundle.backbone.prepare_text(t, caption, false);
    Tensor cond_t = bundle.adapter->make_condition(cond, x_t.dim(0));
    AdapterInjector inj(&*bundle.adapter, bundle.adapter->encode(cond_t), bundle.config.heads);
    RecordingInjector rec(&inj);
    BranchForwardResult res;
    res.output = bundle.backbone.forward_with_ctx(x_t, ctx, &rec);
    res.residuals = rec.take();
    return res;
}

BranchForwardResult editor_forward(const ModelBundle& bundle, const Tensor& x_t, double t,
                                   const CondInput& cond) {
    if (bundle.branch_type != BranchType::editor)
        throw config_error("editor_forward: bundle has no editor branch");
    Backbone::TextCtx ctx = bundle.backbone.prepare_text(t, "", false);
    Tensor enc_in = bundle.editor->make_encoder_input(cond, x_t.dim(0));
    AdapterInjector inj(&bundle.editor->adapter, bundle.editor->adapter.encode(enc_in),
                        bundle.config.heads);
    RecordingInjector rec(&inj);
    const LoraSet* lora = bundle.editor->lora ? &*bundle.editor->lora : nullptr;
    BranchForwardResult res;
    res.output = bundle.backbone.forward_with_ctx(x_t, ctx, &rec, lora);
    res.residuals = rec.take();
    return res;
}

Tensor compose_velocity(const std::vector<const ModelBundle*>& bundles, const Tensor& x_t,
                        double t, const std::string& caption, bool null_cond,
                        const std::vector<CondInput>& conds,
                        std::vector<std::vector<Tensor>>* recorded) {
    if (bundles.empty()) throw config_error("compose_velocity: no bundles");
    const ModelBundle& base = *bundles[0];
    for (const ModelBundle* b : bundles)
        if (b->config.n_blocks() != base.config.n_blocks() ||
            b->config.hidden != base.config.hidden ||
            b->config.latent_width != base.config.latent_width)
            throw config_error("compose_velocity: bundles target different backbone configs");

    Backbone::TextCtx ctx = base.backbone.prepare_text(t, caption, null_cond);
    const int64_t frames = x_t.dim(0);

    CompositeInjector composite;
    std::vector<std::unique_ptr<LayerInjector>> owned;
    for (const ModelBundle* b : bundles) {
        switch (b->branch_type) {
            case BranchType::controlnet: {
                const CondInput* ci = null_cond ? nullptr : find_cond(conds, b->controlnet->kind);
                Tensor cond_t = ci ? b->controlnet->make_condition(*ci, frames)
                                   : Tensor::zeros({frames, b->config.latent_width});
                owned.push_back(std::make_unique<PrecomputedInjector>(
                    b->controlnet->forward(b->backbone, ctx, cond_t)));
                composite.add(b->controlnet->kind, owned.back().get());
                break;
            }
            case BranchType::adapter: {
                const CondInput* ci = null_cond ? nullptr : find_cond(conds, b->adapter->kind);
                Tensor cond_t = ci ? b->adapter->make_condition(*ci, frames)
                                   : Tensor::zeros({frames, b->adapter->in_channels});
                owned.push_back(std::make_unique<AdapterInjector>(
                    &*b->adapter, b->adapter->encode(cond_t), b->config.heads));
                composite.add(b->adapter->kind, owned.back().get());
                break;
            }
            case BranchType::none:
                break;
            case BranchType::editor:
                throw config_error("compose_velocity: editor bundles cannot be composed");
        }
    }
    Tensor out = base.backbone.forward_with_ctx(x_t, ctx, &composite);
    if (recorded) *recorded = composite.recorded();
    return out;
}

// --- checkpoint io ------------------------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const ModelBundle& b) {
    nlohmann::json j;
    j["backbone"] = {{"n_mmdit", b.config.n_mmdit},       {"n_dit", b.config.n_dit},
                     {"latent_width", b.config.latent_width}, {"hidden", b.config.hidden},
                     {"heads", b.config.heads},           {"text_width", b.config.text_width},
                     {"duration", b.config.duration},     {"frame_rate", b.config.frame_rate}};
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& band : b.vocab.bands) vocab.push_back({{"label", band.label}, {"freq", band.freq_hz}});
    j["vocab"] = vocab;
    j["seed"] = b.seed;
    nlohmann::json branch;
    branch["type"] = branch_type_name(b.branch_type);
    switch (b.branch_type) {
        case BranchType::controlnet:
            branch["depth"] = b.controlnet->depth;
            branch["kind"] = cond::cond_kind_name(b.controlnet->kind);
            break;
        case BranchType::adapter:
            branch["depth"] = b.adapter->depth;
            branch["kind"] = cond::cond_kind_name(b.adapter->kind);
            branch["per_layer_kv"] = b.adapter->per_layer_kv;
            break;
        case BranchType::editor:
            branch["depth"] = b.editor->adapter.depth;
            branch["lora_rank"] = b.editor->lora ? b.editor->lora->rank : 0;
            break;
        case BranchType::none:
            break;
    }
    j["branch"] = branch;
    return j;
}

struct ParamBlob {
    std::vector<unsigned char> bytes;
    nlohmann::json manifest = nlohmann::json::array();

    void append(const std::string& name, const nn::Shape& shape, const std::vector<double>& data) {
        fgc1::Record rec;
        rec.dtype = fgc1::Dtype::f64;
        rec.rank = 2;
        const int64_t rows = shape.empty() ? 1 : shape[0];
        const int64_t cols = rows ? static_cast<int64_t>(data.size()) / rows : 0;
        rec.dims[0] = static_cast<uint32_t>(rows);
        rec.dims[1] = static_cast<uint32_t>(cols);
        rec.data = data;
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = shape;
        entry["offset"] = bytes.size();
        manifest.push_back(entry);
        std::vector<unsigned char> enc = fgc1::encode(rec);
        bytes.insert(bytes.end(), enc.begin(), enc.end());
    }
};

}  // namespace

void ModelBundle::save(const std::string& path) const {
    ParamBlob blob;
    for (const auto& p : backbone_params())
        blob.append(p.name, p.tensor.shape(),
                    std::vector<double>(p.tensor.data().begin(), p.tensor.data().end()));
    for (const auto& p : branch_params())
        blob.append(p.name, p.tensor.shape(),
                    std::vector<double>(p.tensor.data().begin(), p.tensor.data().end()));
    blob.append("codec.rotation", {codec.rotation.rows, codec.rotation.cols}, codec.rotation.v);
    blob.append("codec.bias", {static_cast<int64_t>(codec.bias.size())}, codec.bias);

    nlohmann::json manifest_root;
    manifest_root["params"] = blob.manifest;

    nlohmann::json qj;
    qj["lo"] = qstats.lo;
    qj["hi"] = qstats.hi;

    std::vector<fgc1::ZipEntry> entries;
    auto add_text = [&](const std::string& name, const std::string& text) {
        fgc1::ZipEntry e;
        e.name = name;
        e.data.assign(text.begin(), text.end());
        entries.push_back(std::move(e));
    };
    add_text("manifest.json", manifest_root.dump(2));
    add_text("config.json", config_to_json(*this).dump(2));
    add_text("quantizer_stats.json", qj.dump(2));
    fgc1::ZipEntry params_entry;
    params_entry.name = "params.fgc1";
    params_entry.data = std::move(blob.bytes);
    entries.push_back(std::move(params_entry));
    fgc1::zip_write(path, entries);
}

ModelBundle ModelBundle::load(const std::string& path) {
    auto entries = fgc1::zip_read(path);
    auto need = [&](const std::string& name) -> const fgc1::ZipEntry& {
        const fgc1::ZipEntry* e = fgc1::zip_find(entries, name);
        if (!e) throw io_error("checkpoint missing " + name + ": " + path);
        return *e;
    };
    auto parse = [&](const fgc1::ZipEntry& e) {
        return nlohmann::json::parse(std::string(e.data.begin(), e.data.end()));
    };
    nlohmann::json cj = parse(need("config.json"));
    nlohmann::json qj = parse(need("quantizer_stats.json"));
    nlohmann::json mj = parse(need("manifest.json"));
    const fgc1::ZipEntry& pj = need("params.fgc1");

    BackboneConfig cfg;
    const auto& bj = cj.at("backbone");
    cfg.n_mmdit = bj.at("n_mmdit").get<int>();
    cfg.n_dit = bj.at("n_dit").get<int>();
    cfg.latent_width = bj.at("latent_width").get<int>();
    cfg.hidden = bj.at("hidden").get<int>();
    cfg.heads = bj.at("heads").get<int>();
    cfg.text_width = bj.at("text_width").get<int>();
    cfg.duration = bj.at("duration").get<double>();
    cfg.frame_rate = bj.at("frame_rate").get<double>();

    Vocabulary vocab;
    for (const auto& v : cj.at("vocab"))
        vocab.bands.push_back({v.at("label").get<std::string>(), v.at("freq").get<double>()});

    ModelBundle bundle = ModelBundle::init(cfg, vocab, cj.at("seed").get<uint64_t>());
    bundle.qstats.lo = qj.at("lo").get<double>();
    bundle.qstats.hi = qj.at("hi").get<double>();

    const auto& branch = cj.at("branch");
    const BranchType bt = branch_type_from_name(branch.at("type").get<std::string>());
    switch (bt) {
        case BranchType::controlnet:
            bundle.attach_controlnet(branch.at("depth").get<int>(),
                                     cond::cond_kind_from_name(branch.at("kind").get<std::string>()),
                                     bundle.seed);
            break;
        case BranchType::adapter:
            bundle.attach_adapter(branch.at("depth").get<int>(),
                                  cond::cond_kind_from_name(branch.at("kind").get<std::string>()),
                                  bundle.seed, branch.at("per_layer_kv").get<bool>());
            break;
        case BranchType::editor:
            bundle.attach_editor(branch.at("depth").get<int>(), branch.at("lora_rank").get<int>(),
                                 bundle.seed);
            break;
        case BranchType::none:
            break;
    }

    // Overwrite parameter values from the blob by name.
    std::map<std::string, nn::Tensor> by_name;
    for (auto& p : bundle.backbone_params()) by_name.emplace(p.name, p.tensor);
    for (auto& p : bundle.branch_params()) by_name.emplace(p.name, p.tensor);
    size_t restored = 0;
    for (const auto& entry : mj.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        const size_t offset = entry.at("offset").get<size_t>();
        size_t consumed = 0;
        fgc1::Record rec = fgc1::decode(pj.data.data() + offset, pj.data.size() - offset, &consumed);
        if (name == "codec.rotation") {
            bundle.codec.rotation = fgc1::to_mat(rec);
            bundle.codec.width = static_cast<int>(bundle.codec.rotation.rows);
            bundle.codec.rotation_inv = Mat(bundle.codec.rotation.rows, bundle.codec.rotation.cols);
            for (int64_t i = 0; i < bundle.codec.rotation.rows; ++i)
                for (int64_t j = 0; j < bundle.codec.rotation.cols; ++j)
                    bundle.codec.rotation_inv.at(j, i) = bundle.codec.rotation.at(i, j);
            continue;
        }
        if (name == "codec.bias") {
            bundle.codec.bias = rec.data;
            continue;
        }
        auto it = by_name.find(name);
        if (it == by_name.end()) throw io_error("checkpoint has unknown parameter: " + name);
        if (static_cast<int64_t>(rec.data.size()) != it->second.numel())
            throw io_error("checkpoint parameter size mismatch: " + name);
        std::copy(rec.data.begin(), rec.data.end(), it->second.mutable_data().begin());
        ++restored;
    }
    if (restored != by_name.size())
        throw io_error("checkpoint restored " + std::to_string(restored) + " of " +
                       std::to_string(by_name.size()) + " parameters: " + path);
    return bundle;
}

}  // namespace fgc::model
