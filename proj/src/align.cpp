#include "ttad/align.hpp"

#include <fstream>
#include <stdexcept>

#include "ttad/common.hpp"

namespace ttad {

namespace {

Tensor l2_normalize_rows(const Tensor& x, double eps) {
    Tensor sumsq = sum_axis(x * x, 1);
    Tensor inv = pow_scalar(sumsq + eps, -0.5);
    return mul_colvec(x, inv);
}

}  // namespace

Tensor similarity_matrix(const Tensor& h_time, const Tensor& z_text, double eps) {
    if (h_time.rank() != 2 || z_text.rank() != 2 || h_time.shape()[1] != z_text.shape()[1])
        throw std::invalid_argument("similarity_matrix: feature dims disagree");
    Tensor hn = l2_normalize_rows(h_time, eps);
    Tensor zn = l2_normalize_rows(z_text, eps);
    return matmul(hn, transpose(zn));
}

Tensor loss_ma(const Tensor& h_time, const Tensor& z_text, const AlignLossOptions& opt) {
    if (h_time.rows() != z_text.rows())
        throw std::invalid_argument("loss_ma: time and text token counts disagree");
    if (opt.tau <= 0.0) throw std::invalid_argument("loss_ma: temperature must be positive");
    int64_t n = h_time.rows();
    Tensor s = similarity_matrix(h_time, z_text) * (1.0 / opt.tau);
    // Rows index time tokens, columns text tokens. The diagonal holds the
    // matched pairs; each term is the mean log-probability of the diagonal
    // under a softmax along one axis.
    Tensor text_side = sum_diag(log_softmax(s, opt.symmetric_denominator ? 1 : 0));
    Tensor time_side = sum_diag(log_softmax(s, 0));
    return (text_side + time_side) * (-1.0 / (2.0 * static_cast<double>(n)));
}

void write_similarity_csv(const std::string& path, const Tensor& k) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write similarity csv: " + path);
    for (int64_t i = 0; i < k.rows(); ++i) {
        for (int64_t j = 0; j < k.cols(); ++j) {
            if (j) out << ",";
            out << format_roundtrip(k.at(i, j));
        }
        out << "\n";
    }
}

}  // namespace ttad
