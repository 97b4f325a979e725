#include "fgc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fgc::train {

using nn::Tensor;

void TrainConfig::validate() const {
    if (batch_size < 1) throw config_error("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0)) throw config_error("TrainConfig: learning_rate must be > 0");
    if (steps < 0) throw config_error("TrainConfig: steps must be >= 0");
    if (cfg_drop_prob < 0.0 || cfg_drop_prob >= 1.0)
        throw config_error("TrainConfig: cfg_drop_prob must be in [0, 1)");
    if (checkpoint_every > 0 && checkpoint_path.empty())
        throw config_error("TrainConfig: checkpoint_every needs checkpoint_path");
}

void SampleConfig::validate() const {
    if (steps < 1) throw config_error("SampleConfig: steps must be >= 1");
    if (cfg_scale < 0.0) throw config_error("SampleConfig: cfg_scale must be >= 0");
}

Tensor flow_loss(const Tensor& model_out, const Tensor& x0, const Tensor& eps, double /*t*/) {
    if (model_out.shape() != x0.shape() || x0.shape() != eps.shape())
        throw shape_error("flow_loss: shape mismatch " + nn::shape_str(model_out.shape()) + " / " +
                          nn::shape_str(x0.shape()) + " / " + nn::shape_str(eps.shape()));
    Tensor target = nn::sub(eps, x0);
    return nn::mse(model_out, target);
}

Tensor edit_loss(const Tensor& model_out, const Tensor& target_velocity,
                 const std::vector<int>& edit_mask, const EditLossWeights& w) {
    if (model_out.shape() != target_velocity.shape())
        throw shape_error("edit_loss: shape mismatch " + nn::shape_str(model_out.shape()) +
                          " vs " + nn::shape_str(target_velocity.shape()));
    if (model_out.rank() != 2 || model_out.numel() == 0)
        throw std::invalid_argument("edit_loss: need a non-empty [T, D] input");
    const int64_t frames = model_out.dim(0);
    if (static_cast<int64_t>(edit_mask.size()) != frames)
        throw std::invalid_argument("edit_loss: mask length " + std::to_string(edit_mask.size()) +
                                    " != " + std::to_string(frames) + " frames");
    std::vector<double> weights(static_cast<size_t>(frames));
    double wsum = 0.0;
    for (int64_t t = 0; t < frames; ++t) {
        const double wt = edit_mask[static_cast<size_t>(t)] ? w.alpha_edit : w.alpha_no_edit;
        weights[static_cast<size_t>(t)] = wt;
        wsum += wt;
    }
    Tensor err = nn::sub(model_out, target_velocity);
    Tensor weighted = nn::mul(nn::mul(err, err), Tensor::from_data({frames, 1}, std::move(weights)));
    return nn::mul_scalar(nn::sum(weighted),
                          1.0 / (static_cast<double>(model_out.dim(1)) * wsum));
}

// --- AdamW ------------------------------------------------------------------------

AdamW::AdamW(std::vector<Tensor> params, const TrainConfig& cfg)
    : params_(std::move(params)),
      lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      eps_(cfg.adam_eps),
      wd_(cfg.weight_decay) {
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        if (!p.has_grad()) continue;
        auto data = p.mutable_data();
        auto grad = p.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        for (size_t i = 0; i < data.size(); ++i) {
            const double g = grad[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * data[i]);
        }
    }
}

// --- training loop ------------------------------------------------------------------

namespace {

std::vector<Tensor> trainable_tensors(model::ModelBundle& bundle) {
    std::vector<model::NamedParam> named = bundle.branch_type == model::BranchType::none
                                               ? bundle.backbone_params()
                                               : bundle.branch_params();
    std::vector<Tensor> out;
    for (auto& p : named)
        if (p.tensor.requires_grad()) out.push_back(p.tensor);
    return out;
}

model::CondInput null_cond_like(const model::CondInput& src) {
    model::CondInput out;
    out.kind = src.kind;
    if (!src.loud.empty()) out.loud = Mat(src.loud.rows, src.loud.cols);
    if (!src.bins.empty())
        out.bins.assign(src.bins.size(), std::vector<int>(src.bins[0].size(), 0));
    if (!src.active.empty()) out.active = Mat(src.active.rows, src.active.cols);
    if (!src.ref_latent.empty()) out.ref_latent = Mat(src.ref_latent.rows, src.ref_latent.cols);
    return out;
}

}  // namespace

TrainStats train_model(model::ModelBundle& bundle, const std::vector<Sample>& data,
                       const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train_model: empty dataset");
    const bool branch_training = bundle.branch_type != model::BranchType::none;
    const bool editor_training = bundle.branch_type == model::BranchType::editor;

    std::vector<Tensor> params = trainable_tensors(bundle);
    if (params.empty()) throw config_error("train_model: nothing is trainable");
    AdamW opt(params, cfg);
    Rng rng(cfg.seed);
    TrainStats stats;

    std::ofstream metrics;
    if (!cfg.metrics_path.empty()) {
        metrics.open(cfg.metrics_path);
        if (!metrics) throw io_error("cannot write metrics log: " + cfg.metrics_path);
    }

    const int64_t frames = bundle.config.latent_frames();
    for (int step = 0; step < cfg.steps; ++step) {
        opt.zero_grad();
        double step_loss = 0.0;
        for (int bi = 0; bi < cfg.batch_size; ++bi) {
            const Sample& s = data[static_cast<size_t>(rng.uniform_int(
                0, static_cast<int64_t>(data.size()) - 1))];
            if (s.x0.rows != frames || s.x0.cols != bundle.config.latent_width)
                throw shape_error("train sample latent is " + std::to_string(s.x0.rows) + "x" +
                                  std::to_string(s.x0.cols) + ", config wants " +
                                  std::to_string(frames) + "x" +
                                  std::to_string(bundle.config.latent_width));
            const double t = rng.uniform();
            Tensor x0 = Tensor::from_mat(s.x0);
            Tensor eps;
            {
                nn::NoGradGuard ng;
                eps = Tensor::randn(x0.shape(), rng);
            }
            // x_t = (1 - t) x0 + t eps, plain values.
            Tensor x_t;
            {
                nn::NoGradGuard ng;
                x_t = nn::add(nn::mul_scalar(x0, 1.0 - t), nn::mul_scalar(eps, t));
            }

            // Joint CFG drop: caption and control condition together.
            const bool drop = cfg.cfg_drop_prob > 0.0 && rng.uniform() < cfg.cfg_drop_prob;
            if (drop) ++stats.null_drop_count;

            std::vector<model::CondInput> conds;
            if (s.cond) conds.push_back(drop ? null_cond_like(*s.cond) : *s.cond);
            Tensor out = bundle.velocity(x_t, t, s.caption, drop, conds);

            Tensor loss;
            if (editor_training) {
                Tensor target;
                {
                    nn::NoGradGuard ng;
                    target = nn::sub(eps, x0);
                }
                loss = edit_loss(out, target, s.edit_mask, {});
            } else {
                loss = flow_loss(out, x0, eps, t);
            }
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw numeric_error("train_model: non-finite loss " + std::to_string(lv) +
                                    " at step " + std::to_string(step));
            step_loss += lv;
            nn::mul_scalar(loss, 1.0 / static_cast<double>(cfg.batch_size)).backward();
        }
        step_loss /= static_cast<double>(cfg.batch_size);

        nn::clip_grad_norm(params, cfg.clip_norm);
        const double gnorm = nn::global_grad_norm(params);
        opt.step();

        if (step == 0) stats.first_loss = step_loss;
        stats.last_loss = step_loss;
        stats.losses.push_back(step_loss);
        ++stats.steps_run;
        if (metrics.is_open()) {
            metrics << "{\"step\":" << step << ",\"loss\":" << step_loss
                    << ",\"grad_norm\":" << gnorm << ",\"lr\":" << cfg.learning_rate << "}\n";
        }
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
            bundle.save(cfg.checkpoint_path);
    }

    if (branch_training) {
        // The frozen-backbone contract is enforced structurally (requires_grad
        // off, optimizer never sees those tensors); tests verify bit-equality.
    }
    return stats;
}

// --- sampling --------------------------------------------------------------------------

Mat sample_core(const VelocityFn& velocity, int64_t frames, int64_t width,
                const SampleConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Mat x(frames, width);
    for (double& v : x.v) v = rng.gaussian();
    const double h = 1.0 / static_cast<double>(cfg.steps);
    for (int k = 0; k < cfg.steps; ++k) {
        const double t = 1.0 - static_cast<double>(k) * h;
        Mat v = velocity(x, t);
        if (v.rows != frames || v.cols != width)
            throw shape_error("sample_core: velocity returned " + std::to_string(v.rows) + "x" +
                              std::to_string(v.cols));
        for (size_t i = 0; i < x.v.size(); ++i) x.v[i] -= h * v.v[i];
    }
    return x;
}

namespace {

Mat bundle_velocity_values(const model::ModelBundle& bundle, const Mat& x, double t,
                           const std::string& caption, bool null_cond,
                           const std::vector<model::CondInput>& conds) {
    nn::NoGradGuard ng;
    Tensor xt = Tensor::from_mat(x);
    return bundle.velocity(xt, t, caption, null_cond, conds).to_mat();
}

}  // namespace

Mat sample(const model::ModelBundle& bundle, const std::string& caption,
           const std::vector<model::CondInput>& conds, const SampleConfig& cfg) {
    const int64_t frames = bundle.config.latent_frames();
    const int64_t width = bundle.config.latent_width;
    auto velocity = [&](const Mat& x, double t) -> Mat {
        Mat v_uncond = bundle_velocity_values(bundle, x, t, caption, true, conds);
        if (cfg.cfg_scale == 0.0) return v_uncond;
        Mat v_cond = bundle_velocity_values(bundle, x, t, caption, false, conds);
        Mat v = v_uncond;
        for (size_t i = 0; i < v.v.size(); ++i)
            v.v[i] = v_uncond.v[i] + cfg.cfg_scale * (v_cond.v[i] - v_uncond.v[i]);
        return v;
    };
    return sample_core(velocity, frames, width, cfg);
}

Mat sample_composed(const std::vector<const model::ModelBundle*>& bundles,
                    const std::string& caption, const std::vector<model::CondInput>& conds,
                    const SampleConfig& cfg) {
    if (bundles.empty()) throw config_error("sample_composed: no bundles");
    const int64_t frames = bundles[0]->config.latent_frames();
    const int64_t width = bundles[0]->config.latent_width;
    auto velocity = [&](const Mat& x, double t) -> Mat {
        nn::NoGradGuard ng;
        Tensor xt = Tensor::from_mat(x);
        Mat v_uncond = model::compose_velocity(bundles, xt, t, caption, true, conds).to_mat();
        if (cfg.cfg_scale == 0.0) return v_uncond;
        Mat v_cond = model::compose_velocity(bundles, xt, t, caption, false, conds).to_mat();
        Mat v = v_uncond;
        for (size_t i = 0; i < v.v.size(); ++i)
            v.v[i] = v_uncond.v[i] + cfg.cfg_scale * (v_cond.v[i] - v_uncond.v[i]);
        return v;
    };
    return sample_core(velocity, frames, width, cfg);
}

}  // namespace fgc::train
