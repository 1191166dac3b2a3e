#pragma once

#include "mammil/pooling.hpp"
#include "mammil/records.hpp"

namespace mammil {

struct LossConfig {
    double beta = 1e-4;      // saliency L1 coefficient
    double pos_weight = 1.0; // malignant up-weight; auto_pos_weight computes the ratio
};

// benign / malignant count ratio of a training split
double auto_pos_weight(const std::vector<CaseRecord>& train_split);

// Case-level loss: weighted BCE on all three heads plus beta times the L1
// norm of every saliency map. Head probabilities are squashed into
// [1e-7, 1-1e-7] before the log. Throws VerificationError naming the head
// when a term comes out non-finite.
Tensor case_loss(Label y, const CaseHeads& heads, const std::vector<Tensor>& saliency_maps,
                 const LossConfig& cfg);

}  // namespace mammil
