#include "ttad/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace ttad {

namespace {

std::atomic<uint64_t> g_next_id{1};
thread_local int g_no_grad_depth = 0;

void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite value after op: ") + op);
    }
}

int64_t shape_size(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

bool any_requires_grad(const std::vector<Tensor>& parents) {
    for (const auto& p : parents)
        if (p.requires_grad()) return true;
    return false;
}

Tensor make_op(const char* op, std::vector<int64_t> shape, std::vector<double> value,
               const std::vector<Tensor>& parents, BackwardFn fn) {
    check_finite(op, value);
    auto n = std::make_shared<TensorNode>();
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = grad_enabled() && any_requires_grad(parents);
    if (n->requires_grad) {
        n->parents.reserve(parents.size());
        for (const auto& p : parents) n->parents.push_back(p.handle());
        n->backward_fn = std::move(fn);
    }
    return Tensor(std::move(n));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data, bool requires_grad) {
    if (shape.size() > 2) throw std::invalid_argument("Tensor: rank > 2 unsupported");
    if (shape_size(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("Tensor: data length does not match shape");
    check_finite("from", data);
    auto n = std::make_shared<TensorNode>();
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
    size_t n = static_cast<size_t>(shape_size(shape));
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, double v, bool requires_grad) {
    size_t n = static_cast<size_t>(shape_size(shape));
    return from(std::move(shape), std::vector<double>(n, v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor is not scalar");
    return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) node_->grad.assign(static_cast<size_t>(size()), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(static_cast<size_t>(size()), 0.0); }

void backward(const Tensor& root) {
    if (root.size() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!root.requires_grad()) return;

    // Reachable subgraph, then exact reverse insertion order by id.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<TensorNode*> stack{root.node()};
    seen.insert(root.node());
    while (!stack.empty()) {
        TensorNode* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });

    std::unordered_map<TensorNode*, GradBuf> grads;
    grads[root.node()] = GradBuf{1.0};

    for (TensorNode* n : order) {
        auto it = grads.find(n);
        if (it == grads.end()) continue;  // unreachable via grad-requiring path
        GradBuf gout = std::move(it->second);
        grads.erase(it);
        if (!n->backward_fn) {
            // Leaf: accumulate into the persistent buffer.
            if (n->grad.empty()) n->grad.assign(static_cast<size_t>(n->size()), 0.0);
            for (size_t i = 0; i < gout.size(); ++i) n->grad[i] += gout[i];
            continue;
        }
        // Insert all parent buffers before taking addresses; rehashing keeps
        // mapped values stable only across non-invalidating operations, so
        // collect pointers after the final insertion.
        for (auto& p : n->parents) {
            if (!p->requires_grad) continue;
            GradBuf& buf = grads[p.get()];
            if (buf.empty()) buf.assign(static_cast<size_t>(p->size()), 0.0);
        }
        std::vector<GradBuf*> pg(n->parents.size(), nullptr);
        for (size_t i = 0; i < n->parents.size(); ++i) {
            TensorNode* p = n->parents[i].get();
            if (p->requires_grad) pg[i] = &grads[p];
        }
        n->backward_fn(gout, pg);
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return make_op("add", a.shape(), std::move(out), {a, b},
                   [](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       for (size_t i = 0; i < g.size(); ++i) {
                           if (pg[0]) (*pg[0])[i] += g[i];
                           if (pg[1]) (*pg[1])[i] += g[i];
                       }
                   });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return make_op("sub", a.shape(), std::move(out), {a, b},
                   [](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       for (size_t i = 0; i < g.size(); ++i) {
                           if (pg[0]) (*pg[0])[i] += g[i];
                           if (pg[1]) (*pg[1])[i] -= g[i];
                       }
                   });
}

Tensor operator*(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    std::vector<double> av = a.data(), bv2 = b.data();
    return make_op("mul", a.shape(), std::move(out), {a, b},
                   [av = std::move(av), bv2 = std::move(bv2)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       for (size_t i = 0; i < g.size(); ++i) {
                           if (pg[0]) (*pg[0])[i] += g[i] * bv2[i];
                           if (pg[1]) (*pg[1])[i] += g[i] * av[i];
                       }
                   });
}

Tensor operator/(const Tensor& a, const Tensor& b) {
    require_same_shape("div", a, b);
    std::vector<double> out(a.data());
    const auto& bv = b.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
    std::vector<double> ov = out, bv2 = b.data();
    return make_op("div", a.shape(), std::move(out), {a, b},
                   [ov = std::move(ov), bv2 = std::move(bv2)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       for (size_t i = 0; i < g.size(); ++i) {
                           if (pg[0]) (*pg[0])[i] += g[i] / bv2[i];
                           if (pg[1]) (*pg[1])[i] -= g[i] * ov[i] / bv2[i];
                       }
                   });
}

Tensor operator-(const Tensor& a) { return a * -1.0; }

Tensor operator+(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& x : out) x += s;
    return make_op("add_scalar", a.shape(), std::move(out), {a},
                   [](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                   });
}

Tensor operator+(double s, const Tensor& a) { return a + s; }
Tensor operator-(const Tensor& a, double s) { return a + (-s); }

Tensor operator*(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& x : out) x *= s;
    return make_op("mul_scalar", a.shape(), std::move(out), {a},
                   [s](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * s;
                   });
}

Tensor operator*(double s, const Tensor& a) { return a * s; }
Tensor operator/(const Tensor& a, double s) { return a * (1.0 / s); }

Tensor pow_scalar(const Tensor& a, double p) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::pow(x, p);
    std::vector<double> av = a.data();
    return make_op("pow_scalar", a.shape(), std::move(out), {a},
                   [p, av = std::move(av)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i)
                           (*pg[0])[i] += g[i] * p * std::pow(av[i], p - 1.0);
                   });
}

Tensor exp_t(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::exp(x);
    std::vector<double> ov = out;
    return make_op("exp", a.shape(), std::move(out), {a},
                   [ov = std::move(ov)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * ov[i];
                   });
}

Tensor log_t(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::log(x);
    std::vector<double> av = a.data();
    return make_op("log", a.shape(), std::move(out), {a},
                   [av = std::move(av)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] / av[i];
                   });
}

Tensor abs_t(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::fabs(x);
    std::vector<double> av = a.data();
    return make_op("abs", a.shape(), std::move(out), {a},
                   [av = std::move(av)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) {
                           double s = av[i] > 0.0 ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
                           (*pg[0])[i] += g[i] * s;
                       }
                   });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& x : out) x = 1.0 / (1.0 + std::exp(-x));
    std::vector<double> ov = out;
    return make_op("sigmoid", a.shape(), std::move(out), {a},
                   [ov = std::move(ov)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * ov[i] * (1.0 - ov[i]);
                   });
}

Tensor gelu(const Tensor& a) {
    // Exact erf form: 0.5 x (1 + erf(x / sqrt(2))).
    static const double kInvSqrt2 = 0.7071067811865475244;
    static const double kInvSqrt2Pi = 0.3989422804014326779;
    std::vector<double> out(a.data());
    for (double& x : out) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    std::vector<double> av = a.data();
    return make_op("gelu", a.shape(), std::move(out), {a},
                   [av = std::move(av)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) {
                           double x = av[i];
                           double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                           double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                           (*pg[0])[i] += g[i] * (cdf + x * pdf);
                       }
                   });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    std::vector<double> out(a.data());
    for (double& x : out) x = std::min(std::max(x, lo), hi);
    std::vector<double> av = a.data();
    return make_op("clamp", a.shape(), std::move(out), {a},
                   [lo, hi, av = std::move(av)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i)
                           if (av[i] > lo && av[i] < hi) (*pg[0])[i] += g[i];
                   });
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace {

// C(m x n) += A(m x k) * B(k x n); i-k-j order keeps the inner loop contiguous.
void gemm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x n) += A(m x k) * B^T where Bt is (n x k).
void gemm_bt_acc(const double* a, const double* bt, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = bt + j * k;
            double acc = 0.0;
            for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] += acc;
        }
    }
}

// C(k x n) += A^T * B where A is (m x k), B is (m x n).
void gemm_at_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            double av = arow[kk];
            if (av == 0.0) continue;
            double* crow = c + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("matmul: rank-2 operands required");
    int64_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) throw std::invalid_argument("matmul: inner dimensions disagree");
    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
    gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    std::vector<double> av = a.data(), bv = b.data();
    return make_op("matmul", {m, n}, std::move(out), {a, b},
                   [m, k, n, av = std::move(av), bv = std::move(bv)](const GradBuf& g,
                                                                     const std::vector<GradBuf*>& pg) {
                       if (pg[0]) gemm_bt_acc(g.data(), bv.data(), pg[0]->data(), m, n, k);
                       if (pg[1]) gemm_at_acc(av.data(), g.data(), pg[1]->data(), m, k, n);
                   });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 required");
    int64_t r = a.shape()[0], c = a.shape()[1];
    std::vector<double> out(static_cast<size_t>(r * c));
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(j * r + i)] = a.at(i, j);
    return make_op("transpose", {c, r}, std::move(out), {a},
                   [r, c](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (int64_t i = 0; i < r; ++i)
                           for (int64_t j = 0; j < c; ++j)
                               (*pg[0])[static_cast<size_t>(i * c + j)] += g[static_cast<size_t>(j * r + i)];
                   });
}

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
    if (shape.size() > 2) throw std::invalid_argument("reshape: rank > 2 unsupported");
    if (shape_size(shape) != a.size()) throw std::invalid_argument("reshape: element count mismatch");
    std::vector<double> out(a.data());
    return make_op("reshape", std::move(shape), std::move(out), {a},
                   [](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                   });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return make_op("sum", {1}, {s}, {a}, [](const GradBuf& g, const std::vector<GradBuf*>& pg) {
        if (!pg[0]) return;
        for (double& x : *pg[0]) x += g[0];
    });
}

Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    double inv = 1.0 / static_cast<double>(a.size());
    return make_op("mean", {1}, {s * inv}, {a}, [inv](const GradBuf& g, const std::vector<GradBuf*>& pg) {
        if (!pg[0]) return;
        for (double& x : *pg[0]) x += g[0] * inv;
    });
}

Tensor sum_axis(const Tensor& m, int axis) {
    if (m.rank() != 2) throw std::invalid_argument("sum_axis: rank-2 required");
    if (axis != 0 && axis != 1) throw std::invalid_argument("sum_axis: axis must be 0 or 1");
    int64_t r = m.shape()[0], c = m.shape()[1];
    if (axis == 0) {
        std::vector<double> out(static_cast<size_t>(c), 0.0);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(j)] += m.at(i, j);
        return make_op("sum_axis", {c}, std::move(out), {m},
                       [r, c](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                           if (!pg[0]) return;
                           for (int64_t i = 0; i < r; ++i)
                               for (int64_t j = 0; j < c; ++j)
                                   (*pg[0])[static_cast<size_t>(i * c + j)] += g[static_cast<size_t>(j)];
                       });
    }
    std::vector<double> out(static_cast<size_t>(r), 0.0);
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(i)] += m.at(i, j);
    return make_op("sum_axis", {r}, std::move(out), {m},
                   [r, c](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (int64_t i = 0; i < r; ++i)
                           for (int64_t j = 0; j < c; ++j)
                               (*pg[0])[static_cast<size_t>(i * c + j)] += g[static_cast<size_t>(i)];
                   });
}

Tensor sum_diag(const Tensor& m) {
    if (m.rank() != 2 || m.shape()[0] != m.shape()[1]) throw std::invalid_argument("sum_diag: square matrix required");
    int64_t n = m.shape()[0];
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += m.at(i, i);
    return make_op("sum_diag", {1}, {s}, {m}, [n](const GradBuf& g, const std::vector<GradBuf*>& pg) {
        if (!pg[0]) return;
        for (int64_t i = 0; i < n; ++i) (*pg[0])[static_cast<size_t>(i * n + i)] += g[0];
    });
}

// ---------------------------------------------------------------------------
// Softmax family

namespace {

// Softmax over contiguous slices addressed as base + t*stride, t in [0, len).
void softmax_slice(const double* in, double* out, int64_t len, int64_t stride) {
    double mx = in[0];
    for (int64_t t = 1; t < len; ++t) mx = std::max(mx, in[t * stride]);
    double z = 0.0;
    for (int64_t t = 0; t < len; ++t) {
        double e = std::exp(in[t * stride] - mx);
        out[t * stride] = e;
        z += e;
    }
    for (int64_t t = 0; t < len; ++t) out[t * stride] /= z;
}

void log_softmax_slice(const double* in, double* out, int64_t len, int64_t stride) {
    double mx = in[0];
    for (int64_t t = 1; t < len; ++t) mx = std::max(mx, in[t * stride]);
    double z = 0.0;
    for (int64_t t = 0; t < len; ++t) z += std::exp(in[t * stride] - mx);
    double lz = mx + std::log(z);
    for (int64_t t = 0; t < len; ++t) out[t * stride] = in[t * stride] - lz;
}

struct SliceIter {
    int64_t count, len, stride, step;
};

// Slice geometry for axis softmax on rank 1/2 tensors.
SliceIter slices_for(const Tensor& x, int axis) {
    if (x.rank() == 1) return {1, x.shape()[0], 1, 0};
    if (x.rank() != 2) throw std::invalid_argument("softmax: rank 1 or 2 required");
    int64_t r = x.shape()[0], c = x.shape()[1];
    if (axis == 1) return {r, c, 1, c};       // each row
    if (axis == 0) return {c, r, c, 1};       // each column
    throw std::invalid_argument("softmax: axis must be 0 or 1");
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    SliceIter it = slices_for(x, axis);
    std::vector<double> out(static_cast<size_t>(x.size()));
    for (int64_t s = 0; s < it.count; ++s)
        softmax_slice(x.data().data() + s * it.step, out.data() + s * it.step, it.len, it.stride);
    std::vector<double> ov = out;
    return make_op("softmax", x.shape(), std::move(out), {x},
                   [it, ov = std::move(ov)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (int64_t s = 0; s < it.count; ++s) {
                           const double* o = ov.data() + s * it.step;
                           const double* gr = g.data() + s * it.step;
                           double* gx = pg[0]->data() + s * it.step;
                           double dot = 0.0;
                           for (int64_t t = 0; t < it.len; ++t) dot += gr[t * it.stride] * o[t * it.stride];
                           for (int64_t t = 0; t < it.len; ++t)
                               gx[t * it.stride] += o[t * it.stride] * (gr[t * it.stride] - dot);
                       }
                   });
}

Tensor log_softmax(const Tensor& x, int axis) {
    SliceIter it = slices_for(x, axis);
    std::vector<double> out(static_cast<size_t>(x.size()));
    for (int64_t s = 0; s < it.count; ++s)
        log_softmax_slice(x.data().data() + s * it.step, out.data() + s * it.step, it.len, it.stride);
    std::vector<double> ov = out;
    return make_op("log_softmax", x.shape(), std::move(out), {x},
                   [it, ov = std::move(ov)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (int64_t s = 0; s < it.count; ++s) {
                           const double* o = ov.data() + s * it.step;
                           const double* gr = g.data() + s * it.step;
                           double* gx = pg[0]->data() + s * it.step;
                           double gsum = 0.0;
                           for (int64_t t = 0; t < it.len; ++t) gsum += gr[t * it.stride];
                           for (int64_t t = 0; t < it.len; ++t)
                               gx[t * it.stride] += gr[t * it.stride] - std::exp(o[t * it.stride]) * gsum;
                       }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    int64_t r = x.rows(), c = x.cols();
    if (gain.size() != c || bias.size() != c) throw std::invalid_argument("layer_norm: gain/bias length mismatch");
    std::vector<double> out(static_cast<size_t>(x.size()));
    std::vector<double> xhat(static_cast<size_t>(x.size()));
    std::vector<double> inv_std(static_cast<size_t>(r));
    const auto& xv = x.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    for (int64_t i = 0; i < r; ++i) {
        const double* row = xv.data() + i * c;
        double mu = 0.0;
        for (int64_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(c);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(i)] = is;
        for (int64_t j = 0; j < c; ++j) {
            double xh = (row[j] - mu) * is;
            xhat[static_cast<size_t>(i * c + j)] = xh;
            out[static_cast<size_t>(i * c + j)] = gv[static_cast<size_t>(j)] * xh + bv[static_cast<size_t>(j)];
        }
    }
    std::vector<double> gcopy = gain.data();
    return make_op("layer_norm", x.shape(), std::move(out), {x, gain, bias},
                   [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std),
                    gcopy = std::move(gcopy)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       for (int64_t i = 0; i < r; ++i) {
                           const double* gr = g.data() + i * c;
                           const double* xh = xhat.data() + i * c;
                           if (pg[0]) {
                               double mean_gh = 0.0, mean_ghx = 0.0;
                               for (int64_t j = 0; j < c; ++j) {
                                   double gh = gr[j] * gcopy[static_cast<size_t>(j)];
                                   mean_gh += gh;
                                   mean_ghx += gh * xh[j];
                               }
                               mean_gh /= static_cast<double>(c);
                               mean_ghx /= static_cast<double>(c);
                               double is = inv_std[static_cast<size_t>(i)];
                               double* gx = pg[0]->data() + i * c;
                               for (int64_t j = 0; j < c; ++j) {
                                   double gh = gr[j] * gcopy[static_cast<size_t>(j)];
                                   gx[j] += is * (gh - mean_gh - xh[j] * mean_ghx);
                               }
                           }
                           if (pg[1])
                               for (int64_t j = 0; j < c; ++j) (*pg[1])[static_cast<size_t>(j)] += gr[j] * xh[j];
                           if (pg[2])
                               for (int64_t j = 0; j < c; ++j) (*pg[2])[static_cast<size_t>(j)] += gr[j];
                       }
                   });
}

// ---------------------------------------------------------------------------
// Structure ops

Tensor slice_cols(const Tensor& m, int64_t c0, int64_t c1) {
    if (m.rank() != 2) throw std::invalid_argument("slice_cols: rank-2 required");
    int64_t r = m.shape()[0], c = m.shape()[1];
    if (c0 < 0 || c1 > c || c0 >= c1) throw std::invalid_argument("slice_cols: bad column range");
    int64_t w = c1 - c0;
    std::vector<double> out(static_cast<size_t>(r * w));
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < w; ++j) out[static_cast<size_t>(i * w + j)] = m.at(i, c0 + j);
    return make_op("slice_cols", {r, w}, std::move(out), {m},
                   [r, c, c0, w](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (int64_t i = 0; i < r; ++i)
                           for (int64_t j = 0; j < w; ++j)
                               (*pg[0])[static_cast<size_t>(i * c + c0 + j)] += g[static_cast<size_t>(i * w + j)];
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    int64_t r = parts[0].rows();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.shape()[0] != r) throw std::invalid_argument("concat_cols: row mismatch");
        total += p.shape()[1];
    }
    std::vector<double> out(static_cast<size_t>(r * total));
    std::vector<int64_t> widths;
    int64_t off = 0;
    for (const auto& p : parts) {
        int64_t w = p.shape()[1];
        widths.push_back(w);
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < w; ++j) out[static_cast<size_t>(i * total + off + j)] = p.at(i, j);
        off += w;
    }
    return make_op("concat_cols", {r, total}, std::move(out), parts,
                   [r, total, widths = std::move(widths)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       int64_t off = 0;
                       for (size_t pi = 0; pi < widths.size(); ++pi) {
                           int64_t w = widths[pi];
                           if (pg[pi]) {
                               for (int64_t i = 0; i < r; ++i)
                                   for (int64_t j = 0; j < w; ++j)
                                       (*pg[pi])[static_cast<size_t>(i * w + j)] +=
                                           g[static_cast<size_t>(i * total + off + j)];
                           }
                           off += w;
                       }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    int64_t c = parts[0].cols();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw std::invalid_argument("concat_rows: column mismatch");
        total += p.rows();
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(total * c));
    std::vector<int64_t> heights;
    for (const auto& p : parts) {
        heights.push_back(p.rows());
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    return make_op("concat_rows", {total, c}, std::move(out), parts,
                   [c, heights = std::move(heights)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       int64_t row = 0;
                       for (size_t pi = 0; pi < heights.size(); ++pi) {
                           int64_t h = heights[pi];
                           if (pg[pi]) {
                               for (int64_t i = 0; i < h * c; ++i)
                                   (*pg[pi])[static_cast<size_t>(i)] += g[static_cast<size_t>(row * c + i)];
                           }
                           row += h;
                       }
                   });
}

Tensor take_rows(const Tensor& m, const std::vector<int64_t>& idx) {
    if (m.rank() != 2) throw std::invalid_argument("take_rows: rank-2 required");
    int64_t r = m.shape()[0], c = m.shape()[1];
    std::vector<double> out(idx.size() * static_cast<size_t>(c));
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= r) throw std::invalid_argument("take_rows: index out of range");
        for (int64_t j = 0; j < c; ++j) out[i * static_cast<size_t>(c) + static_cast<size_t>(j)] = m.at(idx[i], j);
    }
    std::vector<int64_t> ix = idx;
    return make_op("take_rows", {static_cast<int64_t>(idx.size()), c}, std::move(out), {m},
                   [c, ix = std::move(ix)](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < ix.size(); ++i)
                           for (int64_t j = 0; j < c; ++j)
                               (*pg[0])[static_cast<size_t>(ix[i] * c + j)] +=
                                   g[i * static_cast<size_t>(c) + static_cast<size_t>(j)];
                   });
}

Tensor mul_colvec(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || v.size() != m.shape()[0])
        throw std::invalid_argument("mul_colvec: need (r x c) and vector of length r");
    int64_t r = m.shape()[0], c = m.shape()[1];
    std::vector<double> out(m.data());
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(i * c + j)] *= v.at(i);
    std::vector<double> mv = m.data(), vv = v.data();
    return make_op("mul_colvec", m.shape(), std::move(out), {m, v},
                   [r, c, mv = std::move(mv), vv = std::move(vv)](const GradBuf& g,
                                                                  const std::vector<GradBuf*>& pg) {
                       for (int64_t i = 0; i < r; ++i)
                           for (int64_t j = 0; j < c; ++j) {
                               size_t at = static_cast<size_t>(i * c + j);
                               if (pg[0]) (*pg[0])[at] += g[at] * vv[static_cast<size_t>(i)];
                               if (pg[1]) (*pg[1])[static_cast<size_t>(i)] += g[at] * mv[at];
                           }
                   });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1 || v.size() != m.shape()[1])
        throw std::invalid_argument("add_rowvec: need (r x c) and vector of length c");
    int64_t r = m.shape()[0], c = m.shape()[1];
    std::vector<double> out(m.data());
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) out[static_cast<size_t>(i * c + j)] += v.at(j);
    return make_op("add_rowvec", m.shape(), std::move(out), {m, v},
                   [r, c](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       for (int64_t i = 0; i < r; ++i)
                           for (int64_t j = 0; j < c; ++j) {
                               size_t at = static_cast<size_t>(i * c + j);
                               if (pg[0]) (*pg[0])[at] += g[at];
                               if (pg[1]) (*pg[1])[static_cast<size_t>(j)] += g[at];
                           }
                   });
}

Tensor st_bernoulli(const Tensor& p, const std::vector<double>& u) {
    if (u.size() != static_cast<size_t>(p.size())) throw std::invalid_argument("st_bernoulli: uniform count mismatch");
    std::vector<double> out(u.size());
    for (size_t i = 0; i < u.size(); ++i) out[i] = u[i] < p.data()[i] ? 1.0 : 0.0;
    return make_op("st_bernoulli", p.shape(), std::move(out), {p},
                   [](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                   });
}

Tensor st_threshold(const Tensor& p) {
    std::vector<double> out(p.data());
    for (double& x : out) x = x >= 0.5 ? 1.0 : 0.0;
    return make_op("st_threshold", p.shape(), std::move(out), {p},
                   [](const GradBuf& g, const std::vector<GradBuf*>& pg) {
                       if (!pg[0]) return;
                       for (size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                   });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, const Tensor& wo) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw std::invalid_argument("attention: rank-2 required");
    int64_t d = q.shape()[1];
    if (k.shape()[1] != d || v.shape()[1] != d) throw std::invalid_argument("attention: feature dims disagree");
    if (k.shape()[0] != v.shape()[0]) throw std::invalid_argument("attention: key/value counts disagree");
    if (heads <= 0 || d % heads != 0) throw std::invalid_argument("attention: heads must divide feature dim");
    if (wo.rank() != 2 || wo.shape()[0] != d || wo.shape()[1] != d)
        throw std::invalid_argument("attention: output projection must be d x d");
    int64_t dh = d / heads;
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = matmul(qh, transpose(kh)) * scale;
        Tensor attn = softmax(scores, 1);
        outs.push_back(matmul(attn, vh));
    }
    Tensor cat = heads == 1 ? outs[0] : concat_cols(outs);
    return matmul(cat, wo);
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg) : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<size_t>(p.size()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.size()), 0.0);
    }
}

void Adam::step() {
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        const std::vector<double>& g = p.grad();
        std::vector<double>& value = p.mutable_data();
        std::vector<double>& m = m_[pi];
        std::vector<double>& v = v_[pi];
        for (size_t i = 0; i < value.size(); ++i) {
            double gi = g[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double tol, double h) {
    // Analytic pass on grad-enabled leaf copies.
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(Tensor::from(in.shape(), in.data(), true));
    Tensor out = f(leaves);
    if (out.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    if (!std::isfinite(out.item())) throw std::runtime_error("grad_check: non-finite forward value");
    backward(out);

    GradCheckReport rep;
    NoGradGuard ng;
    for (size_t li = 0; li < leaves.size(); ++li) {
        const std::vector<double>& analytic = leaves[li].grad();
        for (size_t i = 0; i < analytic.size(); ++i) {
            std::vector<Tensor> probe;
            probe.reserve(leaves.size());
            for (const auto& l : leaves) probe.push_back(Tensor::from(l.shape(), l.data(), false));
            std::vector<double> plus = leaves[li].data();
            plus[i] += h;
            probe[li] = Tensor::from(leaves[li].shape(), plus, false);
            double fp = f(probe).item();
            std::vector<double> minus = leaves[li].data();
            minus[i] -= h;
            probe[li] = Tensor::from(leaves[li].shape(), minus, false);
            double fm = f(probe).item();
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("grad_check: non-finite forward value");
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[i];
            double rel = std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
            ++rep.checked;
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

Tensor xavier_uniform(int64_t fan_in, int64_t fan_out, std::mt19937_64& rng) {
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<double> data(static_cast<size_t>(fan_in * fan_out));
    for (double& x : data) x = dist(rng);
    return Tensor::from({fan_in, fan_out}, std::move(data), true);
}

}  // namespace ttad
