#include "fgc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace fgc::nn {

namespace {
thread_local bool g_grad_enabled = true;
thread_local bool g_nan_check = false;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }
void set_nan_check(bool on) { g_nan_check = on; }
bool nan_check_enabled() { return g_nan_check; }

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

// --- Tensor basics -------------------------------------------------------------

Tensor make_op(const char* name, Shape shape, std::vector<Tensor> inputs,
               std::function<void(detail::Node&)> backward_fn) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value.resize(static_cast<size_t>(shape_numel(node->shape)));
    node->op = name;
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& in : inputs) {
            if (in.defined() && in.node()->needs_grad) {
                needs = true;
                break;
            }
        }
    }
    if (needs) {
        node->needs_grad = true;
        for (auto& in : inputs)
            if (in.defined()) node->inputs.push_back(in.node_);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

namespace {

void check_finite(const detail::Node& n, const char* op) {
    if (!g_nan_check) return;
    for (double v : n.value)
        if (!std::isfinite(v))
            throw numeric_error(std::string("non-finite value produced by op '") + op + "'");
}

}  // namespace

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
    return full(s, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& s, double v, bool requires_grad) {
    auto node = std::make_shared<detail::Node>();
    node->shape = s;
    node->value.assign(static_cast<size_t>(shape_numel(s)), v);
    node->requires_grad = requires_grad;
    node->needs_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(const Shape& s, std::vector<double> data, bool requires_grad) {
    if (static_cast<int64_t>(data.size()) != shape_numel(s))
        throw shape_error("from_data: " + std::to_string(data.size()) +
                          " values do not fill shape " + shape_str(s));
    auto node = std::make_shared<detail::Node>();
    node->shape = s;
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    node->needs_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_mat(const Mat& m, bool requires_grad) {
    return from_data({m.rows, m.cols}, m.v, requires_grad);
}

Tensor Tensor::randn(const Shape& s, Rng& rng, double stddev, bool requires_grad) {
    std::vector<double> data(static_cast<size_t>(shape_numel(s)));
    for (double& v : data) v = rng.gaussian() * stddev;
    return from_data(s, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) throw shape_error("item(): tensor has shape " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool rg) {
    node_->requires_grad = rg;
    node_->needs_grad = rg || !node_->inputs.empty();
}
bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }
std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("grad(): no gradient accumulated");
    return node_->grad;
}
std::span<double> Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}
void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Tensor::backward() {
    if (numel() != 1)
        throw std::logic_error("backward(): root must be scalar, got " + shape_str(shape()));
    // Iterative post-order DFS; each node enters the order exactly once.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    if (node_->needs_grad) stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            detail::Node* child = n->inputs[next++].get();
            if (child->needs_grad && !seen.count(child)) {
                seen.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Tensor Tensor::detach() const {
    return from_data(shape(), node_->value, false);
}

Mat Tensor::to_mat() const {
    if (rank() == 1) {
        Mat m(dim(0), 1);
        m.v = node_->value;
        return m;
    }
    if (rank() == 2) {
        Mat m(dim(0), dim(1));
        m.v = node_->value;
        return m;
    }
    throw shape_error("to_mat(): rank must be 1 or 2, got shape " + shape_str(shape()));
}

// --- broadcasting machinery ------------------------------------------------------

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const size_t nd = std::max(a.size(), b.size());
    Shape out(nd);
    for (size_t i = 0; i < nd; ++i) {
        const int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        const int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            throw shape_error(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                              shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Element strides of `in` aligned to the broadcast result `out` (0 on broadcast dims).
std::vector<int64_t> aligned_strides(const Shape& out, const Shape& in) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (size_t i = 0; i < in.size(); ++i) {
        const size_t d = in.size() - 1 - i;
        const size_t od = out.size() - 1 - i;
        strides[od] = in[d] == 1 ? 0 : s;
        s *= in[d];
    }
    return strides;
}

template <typename Fn>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, Fn&& fn) {
    const int64_t n = shape_numel(out);
    if (out.empty()) {
        if (n == 1) fn(0, 0, 0);
        return;
    }
    const auto sa = aligned_strides(out, a);
    const auto sb = aligned_strides(out, b);
    const int nd = static_cast<int>(out.size());
    std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
    int64_t oa = 0, ob = 0;
    for (int64_t i = 0; i < n; ++i) {
        fn(i, oa, ob);
        for (int d = nd - 1; d >= 0; --d) {
            ++idx[static_cast<size_t>(d)];
            oa += sa[static_cast<size_t>(d)];
            ob += sb[static_cast<size_t>(d)];
            if (idx[static_cast<size_t>(d)] < out[static_cast<size_t>(d)]) break;
            idx[static_cast<size_t>(d)] = 0;
            oa -= sa[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
            ob -= sb[static_cast<size_t>(d)] * out[static_cast<size_t>(d)];
        }
    }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary_op(const char* name, BinOp kind, const Tensor& a, const Tensor& b) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    detail::Node* na = a.node();
    detail::Node* nb = b.node();
    Tensor out = make_op(
        name, out_shape, {a, b},
        [na, nb, kind, sa = a.shape(), sb = b.shape(), os = out_shape](detail::Node& self) {
            const bool ga = na->needs_grad;
            const bool gb = nb->needs_grad;
            if (ga) na->ensure_grad();
            if (gb) nb->ensure_grad();
            for_each_broadcast(os, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) {
                const double g = self.grad[static_cast<size_t>(i)];
                switch (kind) {
                    case BinOp::Add:
                        if (ga) na->grad[static_cast<size_t>(oa)] += g;
                        if (gb) nb->grad[static_cast<size_t>(ob)] += g;
                        break;
                    case BinOp::Sub:
                        if (ga) na->grad[static_cast<size_t>(oa)] += g;
                        if (gb) nb->grad[static_cast<size_t>(ob)] -= g;
                        break;
                    case BinOp::Mul:
                        if (ga) na->grad[static_cast<size_t>(oa)] += g * nb->value[static_cast<size_t>(ob)];
                        if (gb) nb->grad[static_cast<size_t>(ob)] += g * na->value[static_cast<size_t>(oa)];
                        break;
                }
            });
        });
    auto& ov = out.node()->value;
    for_each_broadcast(out_shape, a.shape(), b.shape(), [&](int64_t i, int64_t oa, int64_t ob) {
        const double x = na->value[static_cast<size_t>(oa)];
        const double y = nb->value[static_cast<size_t>(ob)];
        ov[static_cast<size_t>(i)] = kind == BinOp::Add ? x + y
                                    : kind == BinOp::Sub ? x - y
                                                         : x * y;
    });
    check_finite(*out.node(), name);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op("add", BinOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op("sub", BinOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op("mul", BinOp::Mul, a, b); }

Tensor add_scalar(const Tensor& a, double s) {
    detail::Node* na = a.node();
    Tensor out = make_op("add_scalar", a.shape(), {a}, [na](detail::Node& self) {
        if (!na->needs_grad) return;
        na->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
    });
    auto& ov = out.node()->value;
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = na->value[i] + s;
    check_finite(*out.node(), "add_scalar");
    return out;
}

Tensor mul_scalar(const Tensor& a, double s) {
    detail::Node* na = a.node();
    Tensor out = make_op("mul_scalar", a.shape(), {a}, [na, s](detail::Node& self) {
        if (!na->needs_grad) return;
        na->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i] * s;
    });
    auto& ov = out.node()->value;
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = na->value[i] * s;
    check_finite(*out.node(), "mul_scalar");
    return out;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor silu(const Tensor& a) {
    detail::Node* na = a.node();
    Tensor out = make_op("silu", a.shape(), {a}, [na](detail::Node& self) {
        if (!na->needs_grad) return;
        na->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const double x = na->value[i];
            const double sig = 1.0 / (1.0 + std::exp(-x));
            na->grad[i] += self.grad[i] * sig * (1.0 + x * (1.0 - sig));
        }
    });
    auto& ov = out.node()->value;
    for (size_t i = 0; i < ov.size(); ++i) {
        const double x = na->value[i];
        ov[i] = x / (1.0 + std::exp(-x));
    }
    check_finite(*out.node(), "silu");
    return out;
}

// --- shape ops ---------------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& s) {
    if (shape_numel(s) != a.numel())
        throw shape_error("reshape: " + shape_str(a.shape()) + " -> " + shape_str(s) +
                          " changes element count");
    detail::Node* na = a.node();
    Tensor out = make_op("reshape", s, {a}, [na](detail::Node& self) {
        if (!na->needs_grad) return;
        na->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
    });
    out.node()->value = na->value;
    return out;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2 && a.rank() != 3)
        throw shape_error("transpose2d: want rank 2 or 3, got " + shape_str(a.shape()));
    Shape s = a.shape();
    std::swap(s[s.size() - 1], s[s.size() - 2]);
    const int64_t b = a.rank() == 3 ? a.dim(0) : 1;
    const int64_t r = a.shape()[a.rank() - 2];
    const int64_t c = a.shape()[a.rank() - 1];
    detail::Node* na = a.node();
    Tensor out = make_op("transpose2d", s, {a}, [na, b, r, c](detail::Node& self) {
        if (!na->needs_grad) return;
        na->ensure_grad();
        for (int64_t bb = 0; bb < b; ++bb)
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < c; ++j)
                    na->grad[static_cast<size_t>((bb * r + i) * c + j)] +=
                        self.grad[static_cast<size_t>((bb * c + j) * r + i)];
    });
    auto& ov = out.node()->value;
    for (int64_t bb = 0; bb < b; ++bb)
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j)
                ov[static_cast<size_t>((bb * c + j) * r + i)] =
                    na->value[static_cast<size_t>((bb * r + i) * c + j)];
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis < 0 || axis >= static_cast<int>(s0.size()))
        throw shape_error("concat: axis out of range for shape " + shape_str(s0));
    Shape out_shape = s0;
    int64_t total = 0;
    for (const auto& p : parts) {
        const Shape& sp = p.shape();
        if (sp.size() != s0.size())
            throw shape_error("concat: rank mismatch " + shape_str(s0) + " vs " + shape_str(sp));
        for (size_t d = 0; d < sp.size(); ++d)
            if (static_cast<int>(d) != axis && sp[d] != s0[d])
                throw shape_error("concat: shape mismatch " + shape_str(s0) + " vs " + shape_str(sp));
        total += sp[static_cast<size_t>(axis)];
    }
    out_shape[static_cast<size_t>(axis)] = total;

    // outer = product of dims before axis, inner = product after.
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s0[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(axis) + 1; d < s0.size(); ++d) inner *= s0[d];

    std::vector<detail::Node*> nodes;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.shape()[static_cast<size_t>(axis)]);
    }
    Tensor out = make_op("concat", out_shape, parts,
                         [nodes, widths, outer, inner, total](detail::Node& self) {
                             int64_t off = 0;
                             for (size_t pi = 0; pi < nodes.size(); ++pi) {
                                 detail::Node* n = nodes[pi];
                                 const int64_t w = widths[pi];
                                 if (n->needs_grad) {
                                     n->ensure_grad();
                                     for (int64_t o = 0; o < outer; ++o)
                                         for (int64_t a2 = 0; a2 < w; ++a2)
                                             for (int64_t i2 = 0; i2 < inner; ++i2)
                                                 n->grad[static_cast<size_t>((o * w + a2) * inner + i2)] +=
                                                     self.grad[static_cast<size_t>(
                                                         (o * total + off + a2) * inner + i2)];
                                 }
                                 off += w;
                             }
                         });
    auto& ov = out.node()->value;
    int64_t off = 0;
    for (size_t pi = 0; pi < nodes.size(); ++pi) {
        detail::Node* n = nodes[pi];
        const int64_t w = widths[pi];
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t a2 = 0; a2 < w; ++a2)
                for (int64_t i2 = 0; i2 < inner; ++i2)
                    ov[static_cast<size_t>((o * total + off + a2) * inner + i2)] =
                        n->value[static_cast<size_t>((o * w + a2) * inner + i2)];
        off += w;
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
    const Shape& s = a.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw shape_error("slice: axis out of range for shape " + shape_str(s));
    if (start < 0 || len < 1 || start + len > s[static_cast<size_t>(axis)])
        throw shape_error("slice: range [" + std::to_string(start) + "," +
                          std::to_string(start + len) + ") out of bounds for " + shape_str(s));
    Shape out_shape = s;
    out_shape[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
    const int64_t full = s[static_cast<size_t>(axis)];
    detail::Node* na = a.node();
    Tensor out = make_op("slice", out_shape, {a},
                         [na, outer, inner, full, start, len](detail::Node& self) {
                             if (!na->needs_grad) return;
                             na->ensure_grad();
                             for (int64_t o = 0; o < outer; ++o)
                                 for (int64_t a2 = 0; a2 < len; ++a2)
                                     for (int64_t i2 = 0; i2 < inner; ++i2)
                                         na->grad[static_cast<size_t>(
                                             (o * full + start + a2) * inner + i2)] +=
                                             self.grad[static_cast<size_t>((o * len + a2) * inner + i2)];
                         });
    auto& ov = out.node()->value;
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t a2 = 0; a2 < len; ++a2)
            for (int64_t i2 = 0; i2 < inner; ++i2)
                ov[static_cast<size_t>((o * len + a2) * inner + i2)] =
                    na->value[static_cast<size_t>((o * full + start + a2) * inner + i2)];
    return out;
}

// --- matmul ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2)
        throw shape_error("matmul: need rank >= 2, got " + shape_str(sa) + " x " + shape_str(sb));
    const int64_t m = sa[sa.size() - 2];
    const int64_t k = sa[sa.size() - 1];
    const int64_t k2 = sb[sb.size() - 2];
    const int64_t n = sb[sb.size() - 1];
    if (k != k2)
        throw shape_error("matmul: inner dims differ, " + shape_str(sa) + " x " + shape_str(sb));
    Shape lead_a(sa.begin(), sa.end() - 2);
    Shape lead_b(sb.begin(), sb.end() - 2);
    Shape lead = broadcast_shape(lead_a, lead_b, "matmul");
    Shape out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);

    const int64_t batches = shape_numel(lead);
    const auto stride_a = aligned_strides(lead, lead_a);
    const auto stride_b = aligned_strides(lead, lead_b);
    // Per-batch base offsets into a and b.
    std::vector<int64_t> base_a(static_cast<size_t>(batches)), base_b(static_cast<size_t>(batches));
    {
        std::vector<int64_t> idx(lead.size(), 0);
        int64_t oa = 0, ob = 0;
        for (int64_t i = 0; i < batches; ++i) {
            base_a[static_cast<size_t>(i)] = oa;
            base_b[static_cast<size_t>(i)] = ob;
            for (int d = static_cast<int>(lead.size()) - 1; d >= 0; --d) {
                ++idx[static_cast<size_t>(d)];
                oa += stride_a[static_cast<size_t>(d)];
                ob += stride_b[static_cast<size_t>(d)];
                if (idx[static_cast<size_t>(d)] < lead[static_cast<size_t>(d)]) break;
                idx[static_cast<size_t>(d)] = 0;
                oa -= stride_a[static_cast<size_t>(d)] * lead[static_cast<size_t>(d)];
                ob -= stride_b[static_cast<size_t>(d)] * lead[static_cast<size_t>(d)];
            }
        }
    }

    detail::Node* na = a.node();
    detail::Node* nb = b.node();
    Tensor out = make_op(
        "matmul", out_shape, {a, b},
        [na, nb, base_a, base_b, batches, m, k, n](detail::Node& self) {
            const bool ga = na->needs_grad;
            const bool gb = nb->needs_grad;
            if (ga) na->ensure_grad();
            if (gb) nb->ensure_grad();
            for (int64_t bt = 0; bt < batches; ++bt) {
                const double* av = na->value.data() + base_a[static_cast<size_t>(bt)] * m * k;
                const double* bv = nb->value.data() + base_b[static_cast<size_t>(bt)] * k * n;
                const double* gv = self.grad.data() + bt * m * n;
                if (ga) {
                    double* agrad = na->grad.data() + base_a[static_cast<size_t>(bt)] * m * k;
                    // dA[i,k] = sum_j dC[i,j] * B[k,j]: contiguous row dots.
                    for (int64_t i = 0; i < m; ++i) {
                        const double* grow = gv + i * n;
                        for (int64_t kk = 0; kk < k; ++kk) {
                            const double* brow = bv + kk * n;
                            double acc = 0.0;
                            for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                            agrad[i * k + kk] += acc;
                        }
                    }
                }
                if (gb) {
                    double* bgrad = nb->grad.data() + base_b[static_cast<size_t>(bt)] * k * n;
                    // dB = A^T * dC
                    for (int64_t i = 0; i < m; ++i)
                        for (int64_t kk = 0; kk < k; ++kk) {
                            const double av_ik = av[i * k + kk];
                            if (av_ik == 0.0) continue;
                            const double* grow = gv + i * n;
                            double* brow = bgrad + kk * n;
                            for (int64_t j = 0; j < n; ++j) brow[j] += av_ik * grow[j];
                        }
                }
            }
        });
    auto& ov = out.node()->value;
    for (int64_t bt = 0; bt < batches; ++bt) {
        const double* av = na->value.data() + base_a[static_cast<size_t>(bt)] * m * k;
        const double* bv = nb->value.data() + base_b[static_cast<size_t>(bt)] * k * n;
        double* cv = ov.data() + bt * m * n;
        for (int64_t i = 0; i < m; ++i) {
            double* crow = cv + i * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                const double av_ik = av[i * k + kk];
                if (av_ik == 0.0) continue;
                const double* brow = bv + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av_ik * brow[j];
            }
        }
    }
    check_finite(*out.node(), "matmul");
    return out;
}

// --- conv1d ---------------------------------------------------------------------

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
    if (padding < 0) throw std::invalid_argument("conv1d: padding must be >= 0");
    const bool batched = x.rank() == 3;
    if (!batched && x.rank() != 2)
        throw shape_error("conv1d: input must be [C,T] or [B,C,T], got " + shape_str(x.shape()));
    if (w.rank() != 3)
        throw shape_error("conv1d: weight must be [C_out,C_in,K], got " + shape_str(w.shape()));
    const int64_t B = batched ? x.dim(0) : 1;
    const int64_t Cin = batched ? x.dim(1) : x.dim(0);
    const int64_t T = batched ? x.dim(2) : x.dim(1);
    const int64_t Cout = w.dim(0);
    const int64_t K = w.dim(2);
    if (w.dim(1) != Cin)
        throw shape_error("conv1d: channel mismatch " + shape_str(x.shape()) + " vs " +
                          shape_str(w.shape()));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Cout))
        throw shape_error("conv1d: bias must be [C_out], got " + shape_str(bias.shape()));
    const int64_t span = T + 2 * padding - K;
    if (span < 0 || span % stride != 0)
        throw shape_error("conv1d: output length (T + 2p - K)/stride + 1 is not an integer for T=" +
                          std::to_string(T) + " K=" + std::to_string(K) + " p=" +
                          std::to_string(padding) + " s=" + std::to_string(stride));
    const int64_t To = span / stride + 1;
    Shape out_shape = batched ? Shape{B, Cout, To} : Shape{Cout, To};

    detail::Node* nx = x.node();
    detail::Node* nw = w.node();
    detail::Node* nb = bias.defined() ? bias.node() : nullptr;
    std::vector<Tensor> inputs = {x, w};
    if (bias.defined()) inputs.push_back(bias);

    Tensor out = make_op(
        "conv1d", out_shape, inputs,
        [nx, nw, nb, B, Cin, T, Cout, K, To, stride, padding](detail::Node& self) {
            const bool gx = nx->needs_grad;
            const bool gw = nw->needs_grad;
            const bool gb = nb && nb->needs_grad;
            if (gx) nx->ensure_grad();
            if (gw) nw->ensure_grad();
            if (gb) nb->ensure_grad();
            for (int64_t b = 0; b < B; ++b) {
                const double* xv = nx->value.data() + b * Cin * T;
                double* xg = gx ? nx->grad.data() + b * Cin * T : nullptr;
                const double* gv = self.grad.data() + b * Cout * To;
                for (int64_t co = 0; co < Cout; ++co) {
                    for (int64_t to = 0; to < To; ++to) {
                        const double g = gv[co * To + to];
                        if (g == 0.0) continue;
                        if (gb) nb->grad[static_cast<size_t>(co)] += g;
                        const int64_t t0 = to * stride - padding;
                        for (int64_t ci = 0; ci < Cin; ++ci) {
                            const double* wrow = nw->value.data() + (co * Cin + ci) * K;
                            double* wgrow = gw ? nw->grad.data() + (co * Cin + ci) * K : nullptr;
                            for (int64_t kk = 0; kk < K; ++kk) {
                                const int64_t t = t0 + kk;
                                if (t < 0 || t >= T) continue;
                                if (gx) xg[ci * T + t] += g * wrow[kk];
                                if (gw) wgrow[kk] += g * xv[ci * T + t];
                            }
                        }
                    }
                }
            }
        });
    auto& ov = out.node()->value;
    for (int64_t b = 0; b < B; ++b) {
        const double* xv = nx->value.data() + b * Cin * T;
        double* yv = ov.data() + b * Cout * To;
        for (int64_t co = 0; co < Cout; ++co) {
            const double bias_v = nb ? nb->value[static_cast<size_t>(co)] : 0.0;
            for (int64_t to = 0; to < To; ++to) {
                double acc = bias_v;
                const int64_t t0 = to * stride - padding;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const double* wrow = nw->value.data() + (co * Cin + ci) * K;
                    const int64_t klo = std::max<int64_t>(0, -t0);
                    const int64_t khi = std::min<int64_t>(K, T - t0);
                    const double* xrow = xv + ci * T + t0;
                    for (int64_t kk = klo; kk < khi; ++kk) acc += xrow[kk] * wrow[kk];
                }
                yv[co * To + to] = acc;
            }
        }
    }
    check_finite(*out.node(), "conv1d");
    return out;
}

// --- attention --------------------------------------------------------------------

namespace {

void attention_shapes(const Tensor& q, const Tensor& k, const Tensor& v, int heads, int64_t* B,
                      int64_t* Tq, int64_t* Tk, int64_t* D) {
    const bool batched = q.rank() == 3;
    if (!batched && q.rank() != 2)
        throw shape_error("attention: Q must be [T,D] or [B,T,D], got " + shape_str(q.shape()));
    if (k.rank() != q.rank() || v.rank() != q.rank())
        throw shape_error("attention: rank mismatch Q" + shape_str(q.shape()) + " K" +
                          shape_str(k.shape()) + " V" + shape_str(v.shape()));
    *B = batched ? q.dim(0) : 1;
    *Tq = batched ? q.dim(1) : q.dim(0);
    *Tk = batched ? k.dim(1) : k.dim(0);
    *D = batched ? q.dim(2) : q.dim(1);
    const int64_t kd = batched ? k.dim(2) : k.dim(1);
    const int64_t vd = batched ? v.dim(2) : v.dim(1);
    const int64_t vt = batched ? v.dim(1) : v.dim(0);
    const int64_t kb = batched ? k.dim(0) : 1;
    const int64_t vb = batched ? v.dim(0) : 1;
    if (kd != *D || vd != *D || vt != *Tk || kb != *B || vb != *B)
        throw shape_error("attention: incompatible Q" + shape_str(q.shape()) + " K" +
                          shape_str(k.shape()) + " V" + shape_str(v.shape()));
    if (heads < 1 || *D % heads != 0)
        throw shape_error("attention: D=" + std::to_string(*D) + " not divisible by heads=" +
                          std::to_string(heads));
}

// probs laid out [B, H, Tq, Tk].
void attention_forward_probs(const double* qv, const double* kv, int64_t B, int64_t Tq, int64_t Tk,
                             int64_t D, int heads, double* probs) {
    const int64_t dh = D / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int64_t b = 0; b < B; ++b) {
        for (int h = 0; h < heads; ++h) {
            const int64_t hd = h * dh;
            for (int64_t i = 0; i < Tq; ++i) {
                double* row = probs + ((b * heads + h) * Tq + i) * Tk;
                const double* qrow = qv + (b * Tq + i) * D + hd;
                double mx = -1e300;
                for (int64_t j = 0; j < Tk; ++j) {
                    const double* krow = kv + (b * Tk + j) * D + hd;
                    double acc = 0.0;
                    for (int64_t d = 0; d < dh; ++d) acc += qrow[d] * krow[d];
                    row[j] = acc * scale;
                    mx = std::max(mx, row[j]);
                }
                double denom = 0.0;
                for (int64_t j = 0; j < Tk; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    denom += row[j];
                }
                const double inv = 1.0 / denom;
                for (int64_t j = 0; j < Tk; ++j) row[j] *= inv;
            }
        }
    }
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    int64_t B, Tq, Tk, D;
    attention_shapes(q, k, v, heads, &B, &Tq, &Tk, &D);
    const int64_t dh = D / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    auto probs = std::make_shared<std::vector<double>>(
        static_cast<size_t>(B * heads * Tq * Tk));
    detail::Node* nq = q.node();
    detail::Node* nk = k.node();
    detail::Node* nv = v.node();
    attention_forward_probs(nq->value.data(), nk->value.data(), B, Tq, Tk, D, heads, probs->data());

    Tensor out = make_op(
        "attention", q.shape(), {q, k, v},
        [nq, nk, nv, probs, B, Tq, Tk, D, heads, dh, scale](detail::Node& self) {
            const bool gq = nq->needs_grad;
            const bool gk = nk->needs_grad;
            const bool gv = nv->needs_grad;
            if (gq) nq->ensure_grad();
            if (gk) nk->ensure_grad();
            if (gv) nv->ensure_grad();
            std::vector<double> dA(static_cast<size_t>(Tk));
            for (int64_t b = 0; b < B; ++b) {
                for (int h = 0; h < heads; ++h) {
                    const int64_t hd = h * dh;
                    for (int64_t i = 0; i < Tq; ++i) {
                        const double* arow = probs->data() + ((b * heads + h) * Tq + i) * Tk;
                        const double* grow = self.grad.data() + (b * Tq + i) * D + hd;
                        // dV and dA
                        double dot = 0.0;
                        for (int64_t j = 0; j < Tk; ++j) {
                            const double* vrow = nv->value.data() + (b * Tk + j) * D + hd;
                            double acc = 0.0;
                            for (int64_t d = 0; d < dh; ++d) acc += grow[d] * vrow[d];
                            dA[static_cast<size_t>(j)] = acc;
                            dot += acc * arow[j];
                            if (gv) {
                                double* vg = nv->grad.data() + (b * Tk + j) * D + hd;
                                const double a = arow[j];
                                for (int64_t d = 0; d < dh; ++d) vg[d] += a * grow[d];
                            }
                        }
                        if (!gq && !gk) continue;
                        const double* qrow = nq->value.data() + (b * Tq + i) * D + hd;
                        double* qg = gq ? nq->grad.data() + (b * Tq + i) * D + hd : nullptr;
                        for (int64_t j = 0; j < Tk; ++j) {
                            const double ds = arow[j] * (dA[static_cast<size_t>(j)] - dot) * scale;
                            if (ds == 0.0) continue;
                            const double* krow = nk->value.data() + (b * Tk + j) * D + hd;
                            if (gq)
                                for (int64_t d = 0; d < dh; ++d) qg[d] += ds * krow[d];
                            if (gk) {
                                double* kg = nk->grad.data() + (b * Tk + j) * D + hd;
                                for (int64_t d = 0; d < dh; ++d) kg[d] += ds * qrow[d];
                            }
                        }
                    }
                }
            }
        });
    auto& ov = out.node()->value;
    for (int64_t b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h) {
            const int64_t hd = h * dh;
            for (int64_t i = 0; i < Tq; ++i) {
                const double* arow = probs->data() + ((b * heads + h) * Tq + i) * Tk;
                double* orow = ov.data() + (b * Tq + i) * D + hd;
                for (int64_t j = 0; j < Tk; ++j) {
                    const double a = arow[j];
                    if (a == 0.0) continue;
                    const double* vrow = nv->value.data() + (b * Tk + j) * D + hd;
                    for (int64_t d = 0; d < dh; ++d) orow[d] += a * vrow[d];
                }
            }
        }
    check_finite(*out.node(), "attention");
    return out;
}

Tensor attention_probs(const Tensor& q, const Tensor& k, int heads) {
    int64_t B, Tq, Tk, D;
    // V is not involved; synthesize a shape-compatible dummy for validation.
    NoGradGuard ng;
    Tensor dummy_v = Tensor::zeros(k.shape());
    attention_shapes(q, k, dummy_v, heads, &B, &Tq, &Tk, &D);
    Shape s = q.rank() == 3 ? Shape{B, heads, Tq, Tk} : Shape{heads, Tq, Tk};
    Tensor out = Tensor::zeros(s);
    attention_forward_probs(q.data().data(), k.data().data(), B, Tq, Tk, D, heads,
                            out.mutable_data().data());
    return out;
}

// --- layer norm ---------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, double eps) {
    if (x.rank() < 1) throw shape_error("layer_norm: need rank >= 1");
    const int64_t D = x.shape().back();
    const int64_t rows = x.numel() / D;
    detail::Node* nx = x.node();
    Tensor out = make_op("layer_norm", x.shape(), {x}, [nx, D, rows, eps](detail::Node& self) {
        if (!nx->needs_grad) return;
        nx->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const double* xv = nx->value.data() + r * D;
            const double* gy = self.grad.data() + r * D;
            double* gx = nx->grad.data() + r * D;
            double mean = 0.0;
            for (int64_t d = 0; d < D; ++d) mean += xv[d];
            mean /= static_cast<double>(D);
            double var = 0.0;
            for (int64_t d = 0; d < D; ++d) var += (xv[d] - mean) * (xv[d] - mean);
            var /= static_cast<double>(D);
            const double inv = 1.0 / std::sqrt(var + eps);
            double mean_gy = 0.0, mean_gy_xhat = 0.0;
            for (int64_t d = 0; d < D; ++d) {
                const double xhat = (xv[d] - mean) * inv;
                mean_gy += gy[d];
                mean_gy_xhat += gy[d] * xhat;
            }
            mean_gy /= static_cast<double>(D);
            mean_gy_xhat /= static_cast<double>(D);
            for (int64_t d = 0; d < D; ++d) {
                const double xhat = (xv[d] - mean) * inv;
                gx[d] += inv * (gy[d] - mean_gy - xhat * mean_gy_xhat);
            }
        }
    });
    auto& ov = out.node()->value;
    for (int64_t r = 0; r < rows; ++r) {
        const double* xv = nx->value.data() + r * D;
        double* yv = ov.data() + r * D;
        double mean = 0.0;
        for (int64_t d = 0; d < D; ++d) mean += xv[d];
        mean /= static_cast<double>(D);
        double var = 0.0;
        for (int64_t d = 0; d < D; ++d) var += (xv[d] - mean) * (xv[d] - mean);
        var /= static_cast<double>(D);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int64_t d = 0; d < D; ++d) yv[d] = (xv[d] - mean) * inv;
    }
    check_finite(*out.node(), "layer_norm");
    return out;
}

Tensor ada_scale_shift(const Tensor& x, const Tensor& scale, const Tensor& shift) {
    return add(mul(x, add_scalar(scale, 1.0)), shift);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids) {
    if (table.rank() != 2)
        throw shape_error("embedding_lookup: table must be [N,D], got " + shape_str(table.shape()));
    const int64_t N = table.dim(0);
    const int64_t D = table.dim(1);
    for (int64_t id : ids)
        if (id < 0 || id >= N)
            throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                        " out of range [0," + std::to_string(N) + ")");
    const int64_t n = static_cast<int64_t>(ids.size());
    detail::Node* nt = table.node();
    Tensor out = make_op("embedding_lookup", {n, D}, {table}, [nt, ids, D](detail::Node& self) {
        if (!nt->needs_grad) return;
        nt->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            double* trow = nt->grad.data() + ids[i] * D;
            const double* grow = self.grad.data() + static_cast<int64_t>(i) * D;
            for (int64_t d = 0; d < D; ++d) trow[d] += grow[d];
        }
    });
    auto& ov = out.node()->value;
    for (size_t i = 0; i < ids.size(); ++i) {
        const double* trow = nt->value.data() + ids[i] * D;
        double* orow = ov.data() + static_cast<int64_t>(i) * D;
        for (int64_t d = 0; d < D; ++d) orow[d] = trow[d];
    }
    return out;
}

// --- reductions -----------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    detail::Node* na = a.node();
    Tensor out = make_op("sum", Shape{1}, {a}, [na](detail::Node& self) {
        if (!na->needs_grad) return;
        na->ensure_grad();
        const double g = self.grad[0];
        for (double& gv : na->grad) gv += g;
    });
    double acc = 0.0;
    for (double v : na->value) acc += v;
    out.node()->value[0] = acc;
    check_finite(*out.node(), "sum");
    return out;
}

Tensor mean(const Tensor& a) {
    return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, int axis) {
    const Shape& s = a.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw shape_error("sum_axis: axis out of range for " + shape_str(s));
    Shape out_shape;
    for (size_t d = 0; d < s.size(); ++d)
        if (static_cast<int>(d) != axis) out_shape.push_back(s[d]);
    if (out_shape.empty()) out_shape.push_back(1);
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d) inner *= s[d];
    const int64_t w = s[static_cast<size_t>(axis)];
    detail::Node* na = a.node();
    Tensor out = make_op("sum_axis", out_shape, {a}, [na, outer, inner, w](detail::Node& self) {
        if (!na->needs_grad) return;
        na->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t ax = 0; ax < w; ++ax)
                for (int64_t i = 0; i < inner; ++i)
                    na->grad[static_cast<size_t>((o * w + ax) * inner + i)] +=
                        self.grad[static_cast<size_t>(o * inner + i)];
    });
    auto& ov = out.node()->value;
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t ax = 0; ax < w; ++ax)
            for (int64_t i = 0; i < inner; ++i)
                ov[static_cast<size_t>(o * inner + i)] +=
                    na->value[static_cast<size_t>((o * w + ax) * inner + i)];
    check_finite(*out.node(), "sum_axis");
    return out;
}

Tensor mean_axis(const Tensor& a, int axis) {
    const int64_t w = a.shape()[static_cast<size_t>(axis)];
    return mul_scalar(sum_axis(a, axis), 1.0 / static_cast<double>(w));
}

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw shape_error("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    Tensor d = sub(a, b);
    return mean(mul(d, d));
}

// --- parameter utilities ---------------------------------------------------------------

double global_grad_norm(const std::vector<Tensor>& params) {
    double acc = 0.0;
    for (const auto& p : params) {
        if (!p.defined() || !p.has_grad()) continue;
        for (double g : p.grad()) acc += g * g;
    }
    return std::sqrt(acc);
}

void clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm <= max_norm || norm == 0.0) return;
    const double scale = max_norm / norm;
    for (auto& p : params) {
        if (!p.defined() || !p.has_grad()) continue;
        for (double& g : p.mutable_grad()) g *= scale;
    }
}

GradCheckResult check_gradients(const std::function<Tensor()>& fn, std::vector<Tensor> params,
                                Rng& rng, int coords_per_param, double h) {
    Tensor loss = fn();
    if (loss.numel() != 1)
        throw std::logic_error("check_gradients: fn must return a scalar, got " +
                               shape_str(loss.shape()));
    for (auto& p : params) p.zero_grad();
    loss.backward();

    GradCheckResult res;
    for (auto& p : params) {
        std::vector<double> ad(static_cast<size_t>(p.numel()), 0.0);
        if (p.has_grad()) ad.assign(p.grad().begin(), p.grad().end());
        const int64_t n = p.numel();
        const int64_t samples = std::min<int64_t>(coords_per_param, n);
        for (int64_t s = 0; s < samples; ++s) {
            const int64_t i = n <= coords_per_param ? s : rng.uniform_int(0, n - 1);
            auto data = p.mutable_data();
            const double saved = data[static_cast<size_t>(i)];
            double f_plus, f_minus;
            {
                NoGradGuard ng;
                data[static_cast<size_t>(i)] = saved + h;
                f_plus = fn().item();
                data[static_cast<size_t>(i)] = saved - h;
                f_minus = fn().item();
                data[static_cast<size_t>(i)] = saved;
            }
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double a = ad[static_cast<size_t>(i)];
            const double denom = std::max(std::fabs(a), std::fabs(fd));
            ++res.checked;
            if (denom < 1e-6) continue;  // below finite-difference resolution
            res.max_rel_err = std::max(res.max_rel_err, std::fabs(a - fd) / denom);
        }
    }
    return res;
}

}  // namespace fgc::nn
