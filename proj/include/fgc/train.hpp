#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fgc/common.hpp"
#include "fgc/model.hpp"
#include "fgc/tensor.hpp"

namespace fgc::train {

struct TrainConfig {
    int batch_size = 4;
    double learning_rate = 1e-4;
    int steps = 1000;
    double cfg_drop_prob = 0.10;  // joint caption + condition drop
    uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;
    int checkpoint_every = 0;           // 0 = final only
    std::string checkpoint_path;        // required when checkpoint_every > 0
    std::string metrics_path;           // JSON-lines {step, loss, grad_norm, lr}

    void validate() const;
};

struct SampleConfig {
    int steps = 25;
    double cfg_scale = 4.5;
    uint64_t seed = 0;

    void validate() const;
};

struct EditLossWeights {
    double alpha_edit = 10.0;
    double alpha_no_edit = 1.0;
};

// Velocity-matching objective on the linear path x_t = (1-t) x0 + t eps:
// mean squared error against the path velocity eps - x0. t is part of the
// contract (the caller formed x_t with it) but does not enter the target.
nn::Tensor flow_loss(const nn::Tensor& model_out, const nn::Tensor& x0, const nn::Tensor& eps,
                     double t);

// Frame-weighted squared error: sum_t w_t |err_t|^2 / (D * sum_t w_t) with
// w = alpha_edit inside the mask and alpha_no_edit outside. Equal masks reduce
// exactly to flow_loss.
nn::Tensor edit_loss(const nn::Tensor& model_out, const nn::Tensor& target_velocity,
                     const std::vector<int>& edit_mask, const EditLossWeights& w = {});

// One training example; condition payloads mirror model::CondInput.
struct Sample {
    Mat x0;                                // [T, latent]
    std::string caption;
    std::optional<model::CondInput> cond;  // absent for plain backbone training
    std::vector<int> edit_mask;            // editor only
};

struct TrainStats {
    int64_t null_drop_count = 0;
    int64_t steps_run = 0;
    double first_loss = 0.0;
    double last_loss = 0.0;
    std::vector<double> losses;
};

// Decoupled-weight-decay adaptive optimizer over a fixed parameter list.
class AdamW {
public:
    AdamW(std::vector<nn::Tensor> params, const TrainConfig& cfg);
    void step();
    void zero_grad();
    const std::vector<nn::Tensor>& params() const { return params_; }

private:
    std::vector<nn::Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_, wd_;
    int64_t t_ = 0;
};

// Trains whatever is trainable in the bundle: the backbone when no branch is
// attached, otherwise only the branch (backbone stays frozen).
TrainStats train_model(model::ModelBundle& bundle, const std::vector<Sample>& data,
                       const TrainConfig& cfg);

// Euler integration of dx/dt = v(x, t) from t=1 (noise) to t=0 with uniform
// steps. The velocity function receives plain values (no autodiff).
using VelocityFn = std::function<Mat(const Mat& x, double t)>;
Mat sample_core(const VelocityFn& velocity, int64_t frames, int64_t width,
                const SampleConfig& cfg);

// CFG sampling: v = v_uncond + scale * (v_cond - v_uncond), the unconditional
// pass using the null caption and zero conditions. scale 0 skips the
// conditional pass entirely.
Mat sample(const model::ModelBundle& bundle, const std::string& caption,
           const std::vector<model::CondInput>& conds, const SampleConfig& cfg);

// Multi-condition variant: branch residuals of all bundles are summed (the
// first bundle provides the backbone).
Mat sample_composed(const std::vector<const model::ModelBundle*>& bundles,
                    const std::string& caption, const std::vector<model::CondInput>& conds,
                    const SampleConfig& cfg);

}  // namespace fgc::train
