#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace ttad {

// Dense f64 tensor of rank 0..2 with reverse-mode autodiff on a dynamic tape.
// Nodes record parent links at construction; node ids are globally monotone,
// so sorting reachable nodes by id gives the exact reverse insertion order.
// A graph must be built and differentiated on a single thread.

class Tensor;

using GradBuf = std::vector<double>;
// backward_fn(gout, gparents): add contributions into gparents[i]
// (nullptr when that parent does not require grad).
using BackwardFn = std::function<void(const GradBuf&, const std::vector<GradBuf*>&)>;

struct TensorNode {
    uint64_t id = 0;
    std::vector<int64_t> shape;
    std::vector<double> value;
    std::vector<double> grad;  // leaf accumulation buffer, sized on first backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    BackwardFn backward_fn;  // empty for leaves

    int64_t size() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
};

// RAII guard disabling graph construction (forward-only inference).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor from(std::vector<int64_t> shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, double v, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const { return node_->shape; }
    int64_t size() const { return node_->size(); }
    int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
    // Matrix accessors; a rank-1 tensor counts as a single row.
    int64_t rows() const { return rank() == 2 ? node_->shape[0] : 1; }
    int64_t cols() const { return rank() == 2 ? node_->shape[1] : (rank() == 1 ? node_->shape[0] : 1); }

    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& mutable_data() { return node_->value; }
    double item() const;
    double at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }
    double at(int64_t r, int64_t c) const { return node_->value[static_cast<size_t>(r * cols() + c)]; }

    bool requires_grad() const { return node_->requires_grad; }
    const std::vector<double>& grad() const;
    void zero_grad();

    TensorNode* node() const { return node_.get(); }
    std::shared_ptr<TensorNode> handle() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

// Runs reverse-mode accumulation from a scalar root; leaf tensors with
// requires_grad receive += into their grad buffers.
void backward(const Tensor& root);

// Elementwise (same shape).
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, double s);
Tensor operator+(double s, const Tensor& a);
Tensor operator-(const Tensor& a, double s);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor operator/(const Tensor& a, double s);

Tensor pow_scalar(const Tensor& a, double p);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& m, int axis);   // 0: down rows -> {cols}; 1: across cols -> {rows}
Tensor sum_diag(const Tensor& m);             // square matrix -> scalar

Tensor softmax(const Tensor& x, int axis);      // max-subtracted, rank 1 or 2
Tensor log_softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor slice_cols(const Tensor& m, int64_t c0, int64_t c1);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor take_rows(const Tensor& m, const std::vector<int64_t>& idx);

Tensor mul_colvec(const Tensor& m, const Tensor& v);  // scale row i by v[i]
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // add v to every row

// Straight-through Bernoulli gate: forward 1[u_i < p_i], backward identity.
Tensor st_bernoulli(const Tensor& p, const std::vector<double>& u);
// Deterministic gate 1[p_i >= 0.5], backward identity.
Tensor st_threshold(const Tensor& p);

// Multi-head scaled dot-product attention. q: n x d, k/v: m x d, wo: d x d.
// Heads are column slices of width d/heads; scores use 1/sqrt(d/heads);
// concatenated head outputs pass through the output projection wo.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, const Tensor& wo);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    Adam(std::vector<Tensor> params, AdamConfig cfg = {});
    void step();
    void zero_grad();

    int64_t step_count() const { return step_; }
    const std::vector<Tensor>& params() const { return params_; }
    // Serialization access (checkpoint round trips restore exact state).
    std::vector<std::vector<double>>& m() { return m_; }
    std::vector<std::vector<double>>& v() { return v_; }
    void set_step(int64_t s) { step_ = s; }

  private:
    AdamConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    int64_t step_ = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = true;
    int64_t checked = 0;
};

// Central finite differences on every element of every input against
// analytic gradients. f must be a pure function of its inputs.
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           std::vector<Tensor> inputs, double tol = 1e-4, double h = 1e-6);

// Xavier-uniform init for a fan_in x fan_out weight; biases are zero-initialized.
Tensor xavier_uniform(int64_t fan_in, int64_t fan_out, std::mt19937_64& rng);

}  // namespace ttad
