#include "ttad/condenser.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ttad/common.hpp"

namespace ttad {

namespace {
constexpr double kPsiFloor = 1e-6;
}

CondenserParams CondenserParams::init(int64_t d_model, bool time_conditioned, std::mt19937_64& rng) {
    CondenserParams p;
    p.time_conditioned = time_conditioned;
    int64_t in = time_conditioned ? 2 * d_model : d_model;
    p.fc1 = Linear::init(in, d_model / 2, rng);
    p.fc2 = Linear::init(d_model / 2, 1, rng);
    return p;
}

void CondenserParams::collect(const std::string& prefix, NamedParams& out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

Tensor retention_probs(const CondenserParams& params, const Tensor& z_text, const Tensor* h_time) {
    Tensor x = z_text;
    if (params.time_conditioned) {
        if (!h_time) throw std::invalid_argument("retention_probs: variant needs the time representation");
        if (h_time->rows() != z_text.rows()) throw std::invalid_argument("retention_probs: row counts disagree");
        x = concat_cols({z_text, *h_time});
    }
    Tensor logits = params.fc2.apply(gelu(params.fc1.apply(x)));  // N x 1
    Tensor psi = clamp(sigmoid(logits), kPsiFloor, 1.0 - kPsiFloor);
    return reshape(psi, {z_text.rows()});
}

Tensor sample_mask(const Tensor& psi, MaskMode mode, std::mt19937_64* rng) {
    if (mode == MaskMode::kInfer) return st_threshold(psi);
    if (!rng) throw std::invalid_argument("sample_mask: training mode needs an rng");
    std::vector<double> u(static_cast<size_t>(psi.size()));
    for (double& x : u) x = uniform01(*rng);
    return st_bernoulli(psi, u);
}

Tensor condense(const Tensor& z_text, const Tensor& mask) {
    if (mask.size() != z_text.rows()) throw std::invalid_argument("condense: mask length mismatch");
    return mul_colvec(z_text, mask);
}

Tensor loss_cc(const Tensor& psi, double mu) {
    if (mu <= 0.0 || mu >= 1.0) throw std::invalid_argument("loss_cc: mu must lie strictly inside (0,1)");
    for (double v : psi.data())
        if (v <= 0.0 || v >= 1.0) throw std::invalid_argument("loss_cc: psi must lie strictly inside (0,1)");
    Tensor one_m = 1.0 + psi * -1.0;
    Tensor pos = psi * (log_t(psi) + -std::log(mu));
    Tensor neg = one_m * (log_t(one_m) + -std::log(1.0 - mu));
    return sum(pos + neg);
}

Tensor loss_sm(const Tensor& psi) {
    int64_t n = psi.size();
    if (n < 2) return sum(psi * 0.0);  // keeps the graph connected for grad flow
    Tensor col = reshape(psi, {n, 1});
    std::vector<int64_t> hi(static_cast<size_t>(n - 1)), lo(static_cast<size_t>(n - 1));
    for (int64_t i = 0; i < n - 1; ++i) {
        lo[static_cast<size_t>(i)] = i;
        hi[static_cast<size_t>(i)] = i + 1;
    }
    Tensor diff = take_rows(col, hi) - take_rows(col, lo);
    return sum(abs_t(diff)) * (1.0 / static_cast<double>(n));
}

Tensor loss_cl(const Tensor& psi, double mu) { return loss_cc(psi, mu) + loss_sm(psi); }

Lemma1Report lemma1_validate(const Lemma1Channel& channel, double mu) {
    size_t a_count = channel.px.size();
    if (a_count == 0 || channel.psi.size() != a_count) throw std::invalid_argument("lemma1: bad channel spec");
    if (mu <= 0.0 || mu >= 1.0) throw std::invalid_argument("lemma1: mu must lie strictly inside (0,1)");
    size_t n = channel.psi[0].size();
    if (n == 0 || n > 20) throw std::invalid_argument("lemma1: mask width must be in [1, 20]");
    double psum = 0.0;
    for (double p : channel.px) {
        if (p <= 0.0) throw std::invalid_argument("lemma1: alphabet probabilities must be positive");
        psum += p;
    }
    if (std::fabs(psum - 1.0) > 1e-9) throw std::invalid_argument("lemma1: alphabet probabilities must sum to 1");
    for (const auto& row : channel.psi) {
        if (row.size() != n) throw std::invalid_argument("lemma1: ragged psi rows");
        for (double v : row)
            if (v <= 0.0 || v >= 1.0) throw std::invalid_argument("lemma1: psi entries must lie inside (0,1)");
    }

    size_t patterns = size_t{1} << n;
    // P(f | a) for every pattern, the marginal, and the Bernoulli(mu) prior.
    std::vector<std::vector<double>> cond(a_count, std::vector<double>(patterns));
    std::vector<double> marginal(patterns, 0.0), prior(patterns);
    for (size_t f = 0; f < patterns; ++f) {
        double g = 1.0;
        for (size_t i = 0; i < n; ++i) g *= (f >> i) & 1 ? mu : 1.0 - mu;
        prior[f] = g;
    }
    for (size_t a = 0; a < a_count; ++a) {
        for (size_t f = 0; f < patterns; ++f) {
            double p = 1.0;
            for (size_t i = 0; i < n; ++i) {
                double psi = channel.psi[a][i];
                p *= (f >> i) & 1 ? psi : 1.0 - psi;
            }
            cond[a][f] = p;
            marginal[f] += channel.px[a] * p;
        }
    }

    auto entropy = [](const std::vector<double>& p) {
        double h = 0.0;
        for (double v : p)
            if (v > 0.0) h -= v * std::log(v);
        return h;
    };

    Lemma1Report rep;
    // Mutual information through the entropy decomposition,
    // and both expected divergences through direct enumeration.
    double h_cond = 0.0;
    for (size_t a = 0; a < a_count; ++a) h_cond += channel.px[a] * entropy(cond[a]);
    rep.mutual_information = entropy(marginal) - h_cond;
    for (size_t a = 0; a < a_count; ++a) {
        double kl_prior = 0.0, kl_marg = 0.0;
        for (size_t f = 0; f < patterns; ++f) {
            if (cond[a][f] <= 0.0) continue;
            kl_prior += cond[a][f] * std::log(cond[a][f] / prior[f]);
            kl_marg += cond[a][f] * std::log(cond[a][f] / marginal[f]);
        }
        rep.bound += channel.px[a] * kl_prior;
        rep.bound_at_marginal += channel.px[a] * kl_marg;
    }
    rep.pass = rep.mutual_information <= rep.bound + 1e-12;
    return rep;
}

}  // namespace ttad
