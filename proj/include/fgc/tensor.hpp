#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fgc/common.hpp"

namespace fgc::nn {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;  // leaf parameter flag
    bool needs_grad = false;     // this or some ancestor requires grad
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// When disabled, ops compute values without recording the graph. Thread-local.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(prev_); }

private:
    bool prev_;
};

// When enabled, every op output is scanned for NaN/inf and throws numeric_error.
void set_nan_check(bool on);
bool nan_check_enabled();

// N-dimensional double tensor with reverse-mode autodiff. Value semantics over
// a shared node: copies alias the same storage, as the graph requires.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& s, bool requires_grad = false);
    static Tensor full(const Shape& s, double v, bool requires_grad = false);
    static Tensor from_data(const Shape& s, std::vector<double> data, bool requires_grad = false);
    static Tensor from_mat(const Mat& m, bool requires_grad = false);
    static Tensor randn(const Shape& s, Rng& rng, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    size_t rank() const { return shape().size(); }
    int64_t dim(size_t i) const { return shape()[i]; }
    int64_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();  // leaf edits (optimizer updates, tests)
    double item() const;               // scalar tensors only

    bool requires_grad() const;
    void set_requires_grad(bool rg);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Reverse-mode pass from a scalar root. Topologically orders the recorded
    // graph, visits each node once.
    void backward();

    // Value copy detached from the graph.
    Tensor detach() const;

    Mat to_mat() const;  // rank-1/2 tensors

    detail::Node* node() const { return node_.get(); }

    friend Tensor make_op(const char* name, Shape shape, std::vector<Tensor> inputs,
                          std::function<void(detail::Node&)> backward_fn);

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

// --- elementwise / broadcasting ---------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);   // numpy-style broadcasting
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor silu(const Tensor& a);

// --- shape ops ---------------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& s);
Tensor transpose2d(const Tensor& a);  // swaps the last two dims (rank 2 or 3)
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len);

// --- contractions / neural ops ------------------------------------------------

// a [.., m, k] x b [.., k, n]; leading dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// x [C_in, T] or [B, C_in, T]; w [C_out, C_in, K]; bias [C_out] or undefined.
// Cross-correlation convention. T' = (T + 2*padding - K)/stride + 1, which must
// divide exactly.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride = 1,
              int padding = 0);

// Fused multi-head softmax attention. Q [T_q, D] (or [B, T_q, D]), K/V [T_k, D].
// D must divide by heads.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

// Forward-only attention probabilities for inspection: [heads, T_q, T_k]
// (or [B, heads, T_q, T_k]).
Tensor attention_probs(const Tensor& q, const Tensor& k, int heads);

// Normalizes over the last dim, no affine.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);

// x * (1 + scale) + shift with broadcasting (adaLN modulation).
Tensor ada_scale_shift(const Tensor& x, const Tensor& scale, const Tensor& shift);

// table [N, D], ids in [0, N). Output [len(ids), D]; gradient scatters into table.
Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids);

// --- reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a);                  // scalar
Tensor mean(const Tensor& a);                 // scalar
Tensor sum_axis(const Tensor& a, int axis);
Tensor mean_axis(const Tensor& a, int axis);

// mean((a - b)^2), composed from primitive ops.
Tensor mse(const Tensor& a, const Tensor& b);

// --- parameter utilities ---------------------------------------------------------

double global_grad_norm(const std::vector<Tensor>& params);
void clip_grad_norm(std::vector<Tensor>& params, double max_norm);

struct GradCheckResult {
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

// Central finite differences (step h) against reverse-mode gradients on up to
// coords_per_param sampled coordinates of each parameter. fn must return a
// scalar tensor recomputed from the current parameter values.
GradCheckResult check_gradients(const std::function<Tensor()>& fn, std::vector<Tensor> params,
                                Rng& rng, int coords_per_param = 8, double h = 1e-5);

}  // namespace fgc::nn
