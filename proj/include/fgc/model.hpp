#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fgc/common.hpp"
#include "fgc/conditions.hpp"
#include "fgc/tensor.hpp"
#include "fgc/vocab.hpp"

namespace fgc::model {

struct BackboneConfig {
    int n_mmdit = 2;          // dual-stream blocks
    int n_dit = 2;            // single-stream blocks
    int latent_width = 16;
    int hidden = 64;
    int heads = 4;
    int text_width = 64;      // token embedding width, matches the text stub
    double duration = 2.0;    // fixed clip length at this scale (s)
    double frame_rate = cond::kDefaultFrameRate;

    int n_blocks() const { return n_mmdit + n_dit; }
    int64_t latent_frames() const { return cond::frames_for_duration(duration, frame_rate); }
    void validate() const;
};

struct NamedParam {
    std::string name;
    nn::Tensor tensor;
};

int64_t count_params(const std::vector<NamedParam>& params);

// --- building blocks ----------------------------------------------------------

struct Linear {
    nn::Tensor w;  // [in, out]
    nn::Tensor b;  // [out]

    static Linear init(int64_t in, int64_t out, Rng& rng, double w_std = -1.0);  // -1: 1/sqrt(in)
    static Linear zeros(int64_t in, int64_t out);  // zero-convolution (kernel size 1)
    nn::Tensor forward(const nn::Tensor& x) const;
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

struct Conv1dLayer {
    nn::Tensor w;  // [C_out, C_in, K]
    nn::Tensor b;  // [C_out]
    int padding = 1;

    static Conv1dLayer init(int64_t c_in, int64_t c_out, int k, Rng& rng);
    nn::Tensor forward(const nn::Tensor& x) const;  // x [C,T]
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

// Additive low-rank delta on a frozen projection: x -> x*A*B (B zero at init).
struct LoraPair {
    nn::Tensor a;  // [in, rank]
    nn::Tensor b;  // [rank, out]
};

struct LoraSet {
    int rank = 64;
    std::map<std::string, LoraPair> pairs;  // keyed by projection name

    static LoraSet init_for_attention(const BackboneConfig& cfg, int rank, Rng& rng);
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

struct AttentionProj {
    Linear q, k, v, o;

    static AttentionProj init(int64_t dim, Rng& rng);
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

nn::Tensor lora_apply(const Linear& lin, const nn::Tensor& x, const LoraSet* lora,
                      const std::string& key);

struct MmditBlock {
    Linear ada_txt, ada_aud;             // hidden -> 6*hidden modulation
    AttentionProj attn_txt, attn_aud;
    Linear mlp1_txt, mlp2_txt, mlp1_aud, mlp2_aud;

    static MmditBlock init(int hidden, Rng& rng);
    // Joint attention over [txt; aud]; residual gates per stream.
    void forward(nn::Tensor& txt, nn::Tensor& aud, const nn::Tensor& cvec, int heads,
                 const LoraSet* lora, const std::string& key) const;
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

struct DitBlock {
    Linear ada;
    AttentionProj attn;
    Linear mlp1, mlp2;

    static DitBlock init(int hidden, Rng& rng);
    void forward(nn::Tensor& x, const nn::Tensor& cvec, int heads, const LoraSet* lora,
                 const std::string& key) const;
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

struct OutputHead {
    Linear ada;        // hidden -> 2*hidden (scale/shift)
    Conv1dLayer conv;  // hidden -> hidden, k=3, same
    Linear out;        // hidden -> latent

    static OutputHead init(int hidden, int latent, Rng& rng);
    nn::Tensor forward(const nn::Tensor& aud, const nn::Tensor& cvec) const;
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

// Reserved token ids in the caption table.
constexpr int64_t kNullToken = 0;   // CFG unconditional
constexpr int64_t kEmptyToken = 1;  // empty caption (editing path)
constexpr int64_t kReservedTokens = 2;

struct TextEncoder {
    std::vector<std::string> labels;  // caption vocabulary words
    nn::Tensor token_table;           // [reserved + labels, text_width]
    Linear mlp1, mlp2;                // text_width -> hidden -> hidden

    static TextEncoder init(const std::vector<std::string>& labels, int text_width, int hidden,
                            Rng& rng);
    // Whitespace-split caption to token ids; null_cond maps to {kNullToken},
    // empty caption to {kEmptyToken}. Unknown words throw.
    std::vector<int64_t> tokenize(const std::string& caption, bool null_cond) const;
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

// --- injector interface -------------------------------------------------------

// Called after every block with the audio-stream latent; a defined return value
// is added to it (audio stream only for MMDiT blocks).
struct LayerInjector {
    virtual ~LayerInjector() = default;
    virtual nn::Tensor residual(int layer, const nn::Tensor& audio_latent) = 0;
};

// --- backbone -------------------------------------------------------------------

struct Backbone {
    BackboneConfig cfg;
    TextEncoder text;
    Linear fuse1, fuse2;  // concat(sin(t), clap) -> hidden -> hidden
    Linear input_proj;    // latent -> hidden
    std::vector<MmditBlock> mmdit;
    std::vector<DitBlock> dit;
    OutputHead head;

    static Backbone init(const BackboneConfig& cfg, const std::vector<std::string>& labels,
                         Rng& rng);

    struct TextCtx {
        nn::Tensor txt_stream;  // [S, hidden]
        nn::Tensor cvec;        // [1, hidden]
    };
    TextCtx prepare_text(double t, const std::string& caption, bool null_cond) const;

    struct Trace {
        std::vector<nn::Tensor> mmdit_txt;  // text-stream latent after each MMDiT block
    };

    nn::Tensor forward(const nn::Tensor& x_t, double t, const std::string& caption,
                       bool null_cond = false, LayerInjector* injector = nullptr,
                       const LoraSet* lora = nullptr, Trace* trace = nullptr) const;
    nn::Tensor forward_with_ctx(const nn::Tensor& x_t, const TextCtx& ctx,
                                LayerInjector* injector = nullptr, const LoraSet* lora = nullptr,
                                Trace* trace = nullptr) const;

    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

// Sinusoidal tables shared by the audio stream and adapter keys.
nn::Tensor sinusoidal_position_table(int64_t n, int dim);
nn::Tensor sinusoidal_time_vec(double t, int dim);  // [1, dim], t scaled by 1000

// --- latent codec (VAE stand-in) ------------------------------------------------

struct LatentCodec {
    Mat rotation;      // [width, width], orthonormal rows
    Mat rotation_inv;  // its transpose
    std::vector<double> bias;
    int width = 0;

    static LatentCodec seeded(int width, uint64_t seed);
    Mat encode(const Mat& features) const;  // [T, width] -> [T, width]
    Mat decode(const Mat& latent) const;
};

// --- condition encoders ------------------------------------------------------------

// Learnable pieces of the condition pipelines that train with a branch.
struct CondEncoders {
    nn::Tensor codebook;    // [256, D] (pitch)
    nn::Tensor event_proj;  // [64, D]  (event/edit)

    static CondEncoders init(cond::CondKind kind, int width, Rng& rng);
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

// Plain-value condition payload attached to a generation or training sample.
struct CondInput {
    cond::CondKind kind = cond::CondKind::loudness;
    Mat loud;                             // loudness: [T, D] broadcast rows
    std::vector<std::vector<int>> bins;   // pitch: T x S
    Mat active;                           // event/edit: [T, 64] summed embeddings
    Mat ref_latent;                       // editor reference latent [T, latent]
};

// --- branches -----------------------------------------------------------------------

struct ControlNetBranch {
    int depth = 0;
    cond::CondKind kind = cond::CondKind::loudness;
    Linear zero_in;          // latent -> latent, zero init
    Linear input_proj_copy;  // latent -> hidden, copied from backbone
    std::vector<MmditBlock> mmdit_copy;
    std::vector<DitBlock> dit_copy;
    std::vector<Linear> zero_out;  // hidden -> hidden per replicated layer
    CondEncoders enc;

    // Copies the first `depth` backbone blocks (MMDiT first) and zeroes the
    // connecting projections.
    static ControlNetBranch init_from(const Backbone& bb, int depth, cond::CondKind kind,
                                      Rng& rng);
    // Residuals are independent of the backbone latents: the branch runs on the
    // condition alone (plus shared text/time context).
    std::vector<nn::Tensor> forward(const Backbone& bb, const Backbone::TextCtx& ctx,
                                    const nn::Tensor& cond) const;
    nn::Tensor make_condition(const CondInput& input, int64_t frames) const;
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

struct AdapterBranch {
    int depth = 0;
    cond::CondKind kind = cond::CondKind::loudness;
    int in_channels = 0;  // condition width (2x latent for the editor)
    bool per_layer_kv = false;
    Conv1dLayer enc1, enc2, enc3;  // in -> H -> H -> 2H
    std::vector<Linear> k_proj, v_proj;  // only when per_layer_kv
    std::vector<Linear> zero_out;
    CondEncoders enc;

    static AdapterBranch init(const BackboneConfig& cfg, int depth, cond::CondKind kind,
                              int in_channels, bool per_layer_kv, Rng& rng);

    struct Prepared {
        nn::Tensor k;  // [Tc, hidden] (+ positional)
        nn::Tensor v;
    };
    Prepared encode(const nn::Tensor& cond) const;  // cond [Tc, in_channels]
    nn::Tensor residual(int layer, const nn::Tensor& z, const Prepared& kv, int heads) const;
    nn::Tensor make_condition(const CondInput& input, int64_t frames) const;
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

struct EditorBranch {
    AdapterBranch adapter;               // encoder input = ref latent ++ edit condition
    std::optional<LoraSet> lora;

    static EditorBranch init(const BackboneConfig& cfg, int depth, int lora_rank, Rng& rng);
    // concat(ref_latent, W_edit * active) along features.
    nn::Tensor make_encoder_input(const CondInput& input, int64_t frames) const;
    void collect(std::vector<NamedParam>& out, const std::string& prefix) const;
};

// --- injectors ------------------------------------------------------------------------

class PrecomputedInjector : public LayerInjector {
public:
    explicit PrecomputedInjector(std::vector<nn::Tensor> residuals)
        : residuals_(std::move(residuals)) {}
    nn::Tensor residual(int layer, const nn::Tensor&) override {
        return layer < static_cast<int>(residuals_.size()) ? residuals_[static_cast<size_t>(layer)]
                                                           : nn::Tensor();
    }

private:
    std::vector<nn::Tensor> residuals_;
};

class AdapterInjector : public LayerInjector {
public:
    AdapterInjector(const AdapterBranch* branch, AdapterBranch::Prepared kv, int heads)
        : branch_(branch), kv_(std::move(kv)), heads_(heads) {}
    nn::Tensor residual(int layer, const nn::Tensor& z) override {
        if (layer >= branch_->depth) return {};
        return branch_->residual(layer, z, kv_, heads_);
    }

private:
    const AdapterBranch* branch_;
    AdapterBranch::Prepared kv_;
    int heads_;
};

// Sums child residuals; children are evaluated against the same pre-injection
// latent and summed in ascending condition-kind order so composition is
// order-invariant across distinct kinds.
class CompositeInjector : public LayerInjector {
public:
    void add(cond::CondKind kind, LayerInjector* child) { children_.push_back({kind, child}); }
    nn::Tensor residual(int layer, const nn::Tensor& z) override;
    // Per-child residual record of the last forward, for composition checks.
    const std::vector<std::vector<nn::Tensor>>& recorded() const { return recorded_; }
    void reset_recording() { recorded_.clear(); }

private:
    std::vector<std::pair<cond::CondKind, LayerInjector*>> children_;
    std::vector<std::vector<nn::Tensor>> recorded_;  // [layer][child-in-canonical-order]
};

// --- bundle --------------------------------------------------------------------------

enum class BranchType { none, controlnet, adapter, editor };
std::string branch_type_name(BranchType t);
BranchType branch_type_from_name(const std::string& name);

struct ModelBundle {
    BackboneConfig config;
    Vocabulary vocab;
    uint64_t seed = 0;
    Backbone backbone;
    LatentCodec codec;
    cond::QuantizerStats qstats;

    BranchType branch_type = BranchType::none;
    std::optional<ControlNetBranch> controlnet;
    std::optional<AdapterBranch> adapter;
    std::optional<EditorBranch> editor;

    static ModelBundle init(const BackboneConfig& cfg, const Vocabulary& vocab, uint64_t seed);

    void attach_controlnet(int depth, cond::CondKind kind, uint64_t seed);
    void attach_adapter(int depth, cond::CondKind kind, uint64_t seed, bool per_layer_kv = false);
    void attach_editor(int depth, int lora_rank, uint64_t seed);  // lora_rank 0 disables LoRA

    std::vector<NamedParam> backbone_params() const;
    std::vector<NamedParam> branch_params() const;  // empty when branch_type == none

    std::vector<double> feature_band_freqs() const {
        return vocab.feature_bands(config.latent_width);
    }

    // Velocity prediction with the attached branch applied (if any).
    nn::Tensor velocity(const nn::Tensor& x_t, double t, const std::string& caption,
                        bool null_cond, const std::vector<CondInput>& conds,
                        Backbone::Trace* trace = nullptr) const;

    void save(const std::string& path) const;
    static ModelBundle load(const std::string& path);
};

// Runs the branch against a backbone pass and returns the per-layer residuals
// plus the controlled output. The freshly initialized contract: all residuals
// exactly zero.
struct BranchForwardResult {
    nn::Tensor output;
    std::vector<nn::Tensor> residuals;
};
BranchForwardResult controlnet_forward(const ModelBundle& bundle, const nn::Tensor& x_t, double t,
                                       const std::string& caption, const CondInput& cond);
BranchForwardResult adapter_forward(const ModelBundle& bundle, const nn::Tensor& x_t, double t,
                                    const std::string& caption, const CondInput& cond);
BranchForwardResult editor_forward(const ModelBundle& bundle, const nn::Tensor& x_t, double t,
                                   const CondInput& cond);

// Multi-condition composition: independently trained control bundles sharing
// one frozen backbone contribute residuals that are summed per layer. Each
// bundle consumes the CondInput matching its branch kind (zeros if absent).
// When `recorded` is given, it receives each child's per-layer residuals in
// canonical kind order.
nn::Tensor compose_velocity(const std::vector<const ModelBundle*>& bundles,
                            const nn::Tensor& x_t, double t, const std::string& caption,
                            bool null_cond, const std::vector<CondInput>& conds,
                            std::vector<std::vector<nn::Tensor>>* recorded = nullptr);

const CondInput* find_cond(const std::vector<CondInput>& conds, cond::CondKind kind);

}  // namespace fgc::model
