#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mammil/pooling.hpp"

namespace mammil {

struct ModelConfig {
    NetConfig net;  // both feature nets use this layout, with independent weights
    std::int64_t image_h = 64, image_w = 48;
    double t_fraction = 0.02;
    std::int64_t k = 6;
    std::int64_t patch_h = 16, patch_w = 16;
    std::int64_t attention_hidden = 128;
    PoolingSpec pooling;
    std::uint64_t init_seed = 0;
};

struct CaseOutput {
    CaseHeads heads;
    std::vector<FeatureBundle> bundles;     // one per image, input order
    std::vector<double> image_attention;    // effective weights; uniform for mean/max
    std::vector<double> image_probs;        // fusion-head per-image probs (IS only)
    std::vector<Tensor> saliency_maps;      // for the L1 term of the loss
};

// Component names used by the snapshot machinery
inline constexpr const char* kCompGlobal = "global_net";
inline constexpr const char* kCompLocal = "local_net";
inline constexpr const char* kCompHeads = "heads";
inline constexpr const char* kCompImageAtt = "image_attention";
inline constexpr const char* kCompViewAtt = "view_attention";
inline constexpr const char* kCompSideAtt = "side_attention";

class CaseModel {
public:
    explicit CaseModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    std::vector<std::string> components() const;

    std::int64_t sal_h() const { return sal_h_; }
    std::int64_t sal_w() const { return sal_w_; }
    std::int64_t topt_dim() const { return t_; }
    std::int64_t local_dim() const { return cfg_.net.embed_dim; }
    std::int64_t fusion_dim() const { return global_channels_ + cfg_.net.embed_dim; }

    // Per-image pipeline. When frozen_boxes is given the greedy retrieval is
    // skipped and the candidates come from those boxes; finite-difference
    // probes use this to keep the non-differentiable positions fixed.
    FeatureBundle image_forward(const ImageRecord& img,
                                const std::vector<RoiBox>* frozen_boxes = nullptr) const;

    CaseOutput case_forward(const CaseRecord& c,
                            const std::vector<std::vector<RoiBox>>* frozen_boxes = nullptr) const;

    // Replace parameter values by name; shapes and components must agree.
    void load_parameters(const std::vector<Parameter>& loaded);

private:
    Tensor feature_of(const FeatureBundle& b, FeatureKind f) const;
    Tensor head_probability(FeatureKind f, const Tensor& embedding) const;

    ModelConfig cfg_;
    std::int64_t sal_h_ = 0, sal_w_ = 0, t_ = 0, global_channels_ = 0;
    std::vector<Parameter> params_;

    ConvNet global_net_, local_net_;
    Tensor saliency_w_, saliency_b_;  // 1x1 conv
    Linear local_embed_;
    AttentionBlock patch_att_;
    Linear local_head_, fusion_head_;
    std::map<FeatureKind, AttentionBlock> image_att_;  // att/gatt specs
    SideWiseBlock side_block_;                         // att-side specs
};

}  // namespace mammil
