#include "mammil/loss.hpp"

#include <cmath>

#include "mammil/errors.hpp"

namespace mammil {

double auto_pos_weight(const std::vector<CaseRecord>& train_split) {
    std::int64_t benign = 0, malignant = 0;
    for (const auto& c : train_split)
        (c.case_label == Label::malignant ? malignant : benign)++;
    if (malignant == 0) throw DataError("pos_weight: training split has no malignant cases");
    return static_cast<double>(benign) / static_cast<double>(malignant);
}

namespace {

constexpr double kEps = 1e-7;

// affine squash into [eps, 1-eps]; smooth, so gradient checks stay clean
Tensor squash(const Tensor& p) {
    return add(scale(p, 1.0 - 2.0 * kEps), Tensor::scalar(kEps));
}

Tensor weighted_bce(Label y, const Tensor& prob, double pos_weight, const char* head_name) {
    Tensor p = squash(prob);
    Tensor term = y == Label::malignant ? scale(log(p), -pos_weight)
                                        : scale(log(sub(Tensor::scalar(1.0), p)), -1.0);
    if (!std::isfinite(term.item()))
        throw VerificationError(std::string("case_loss: non-finite BCE for head ") + head_name +
                                " (p=" + std::to_string(prob.item()) + ")");
    return term;
}

}  // namespace

Tensor case_loss(Label y, const CaseHeads& heads, const std::vector<Tensor>& saliency_maps,
                 const LossConfig& cfg) {
    Tensor loss = weighted_bce(y, heads.y_topt, cfg.pos_weight, "topt");
    loss = add(loss, weighted_bce(y, heads.y_local, cfg.pos_weight, "local"));
    loss = add(loss, weighted_bce(y, heads.y_fusion, cfg.pos_weight, "fusion"));
    if (cfg.beta != 0.0) {
        Tensor l1;
        for (const auto& a : saliency_maps) {
            Tensor term = sum(abs(a));
            l1 = l1.defined() ? add(l1, term) : term;
        }
        if (l1.defined()) loss = add(loss, scale(l1, cfg.beta));
    }
    if (!std::isfinite(loss.item()))
        throw VerificationError("case_loss: non-finite total loss");
    return loss;
}

}  // namespace mammil
