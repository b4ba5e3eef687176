#pragma once

#include <random>
#include <vector>

#include "ttad/nn.hpp"
#include "ttad/tensor.hpp"

namespace ttad {

struct CondenserParams {
    Linear fc1;  // d (or 2d in the time-conditioned variant) -> d/2
    Linear fc2;  // d/2 -> 1
    bool time_conditioned = false;

    static CondenserParams init(int64_t d_model, bool time_conditioned, std::mt19937_64& rng);
    void collect(const std::string& prefix, NamedParams& out) const;
};

// Per-row retention probabilities psi in [1e-6, 1 - 1e-6]. In the
// time-conditioned variant the unmasked time representation is concatenated
// feature-wise before the MLP.
Tensor retention_probs(const CondenserParams& params, const Tensor& z_text, const Tensor* h_time = nullptr);

enum class MaskMode { kTrain, kInfer };

// Train: straight-through Bernoulli with provided uniforms. Infer: the
// deterministic gate 1[psi >= 0.5]. Both pass gradients through unchanged.
Tensor sample_mask(const Tensor& psi, MaskMode mode, std::mt19937_64* rng);

Tensor condense(const Tensor& z_text, const Tensor& mask);

// Compression loss: sum_i KL(Bernoulli(psi_i) || Bernoulli(mu)), nats.
Tensor loss_cc(const Tensor& psi, double mu);
// Smoothness: (1/N) * sum_i |psi_{i+1} - psi_i|.
Tensor loss_sm(const Tensor& psi);
Tensor loss_cl(const Tensor& psi, double mu);

// Finite-channel validator for the variational compression bound.
// Alphabet symbol a has prior px[a] and per-row retention probs psi[a][i];
// the condensed variable is the retained-row pattern in {0,1}^N.
struct Lemma1Channel {
    std::vector<double> px;                // A entries, positive, sum 1
    std::vector<std::vector<double>> psi;  // A x N, entries in (0,1)
};

struct Lemma1Report {
    double mutual_information = 0.0;  // exact I(Z_text; Z_con)
    double bound = 0.0;               // E[KL(P(Z_con|Z_text) || prod Bernoulli(mu))]
    double bound_at_marginal = 0.0;   // same expectation against the true marginal
    bool pass = false;                // I <= bound + 1e-12
};

Lemma1Report lemma1_validate(const Lemma1Channel& channel, double mu);

}  // namespace ttad
