#pragma once

#include <string>

#include "ttad/tensor.hpp"

namespace ttad {

// Row-wise cosine similarity: K[j][g] = cos(h_time[j], z_text[g]).
// Row norms are guarded by eps inside the square root.
Tensor similarity_matrix(const Tensor& h_time, const Tensor& z_text, double eps = 1e-12);

struct AlignLossOptions {
    double tau = 0.07;
    // true: the two InfoNCE terms normalize over opposite axes (text-side and
    // time-side denominators). false: both denominators range over the time axis.
    bool symmetric_denominator = true;
};

// Symmetric InfoNCE over the cosine matrix, scaled by 1/(2N).
Tensor loss_ma(const Tensor& h_time, const Tensor& z_text, const AlignLossOptions& opt = {});

// Convenience for dumps/diagnostics.
void write_similarity_csv(const std::string& path, const Tensor& k);

}  // namespace ttad
