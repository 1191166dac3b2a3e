#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mammil/checkpoint.hpp"
#include "mammil/records.hpp"
#include "mammil/tensor.hpp"

namespace mammil {

// Small configurable CNN: stages of 3x3 stride-2 zero-padded convolutions
// with ReLU. Stands in for the full-scale backbones at desk scale.
struct NetConfig {
    std::vector<std::int64_t> channels_per_stage{8, 16, 32};
    std::int64_t embed_dim = 32;  // local-net output width
};

// Extent after one stride-2 stage (kernel 3, pad 1): ceil(n/2).
std::int64_t staged_extent(std::int64_t n, std::size_t stages);

class ConvNet {
public:
    ConvNet() = default;
    ConvNet(const std::string& name_prefix, const std::string& component,
            std::int64_t in_channels, const std::vector<std::int64_t>& channels, Rng& rng,
            std::vector<Parameter>& params);

    // x: [C_in, H, W] -> [C_last, H', W']
    Tensor forward(const Tensor& x) const;
    std::int64_t out_channels() const { return weights_.empty() ? 0 : weights_.back().shape()[0]; }
    std::size_t stages() const { return weights_.size(); }

private:
    std::vector<Tensor> weights_;  // [c_out, c_in, 3, 3]
    std::vector<Tensor> biases_;   // [c_out]
};

// Affine map y = W x + b exposed as a tensor op on a [d] vector.
class Linear {
public:
    Linear() = default;
    Linear(const std::string& name_prefix, const std::string& component, std::int64_t in_dim,
           std::int64_t out_dim, Rng& rng, std::vector<Parameter>& params);
    Tensor forward(const Tensor& x) const;  // [in] -> [out]
    std::int64_t in_dim() const { return weight_.shape()[1]; }

private:
    Tensor weight_;  // [out, in]
    Tensor bias_;    // [out]
};

// Gated / plain attention over a list of embeddings (Eq. of the MIL
// attention family): logit_m = w^T tanh(V h_m) (optionally gated by
// sigma(U h_m)), weights = softmax over the list.
class AttentionBlock {
public:
    AttentionBlock() = default;
    AttentionBlock(const std::string& name_prefix, const std::string& component,
                   std::int64_t embed_dim, std::int64_t hidden_dim, bool gated, Rng& rng,
                   std::vector<Parameter>& params);
    // embeddings: [M, d] -> weights [M] (softmax over axis 0)
    Tensor weights(const Tensor& stacked) const;
    bool gated() const { return gated_; }

private:
    Tensor v_;  // [hidden, embed]
    Tensor u_;  // [hidden, embed], gated only
    Tensor w_;  // [hidden]
    bool gated_ = false;
};

struct PatchCandidate {
    Grid crop;             // fixed patch_h x patch_w pixels
    RoiBox box;            // model-input-space coordinates
    double saliency_mass = 0.0;
    double attention = 0.0;  // filled by patch pooling
};

struct FeatureBundle {
    Tensor h_topt;    // [t], top saliency values, descending
    Tensor h_local;   // [embed_dim]
    Tensor h_fusion;  // [global channels + embed_dim]
    Tensor saliency;  // [H', W'] in (0,1)
    std::vector<PatchCandidate> patches;
};

// Greedy ROI retrieval on raw saliency values: window of a quarter of each
// saliency extent (min 1), repeatedly take the position with the largest
// summed saliency (ties to the lowest flat index), suppress it with -inf for
// later rounds, and map the window to image space by the resolution ratio.
std::vector<PatchCandidate> retrieve_roi(const Grid& image, const std::vector<double>& saliency,
                                         std::int64_t sal_h, std::int64_t sal_w, std::int64_t k,
                                         std::int64_t patch_h, std::int64_t patch_w);

// t = max(1, round(t_fraction * map size))
std::int64_t topt_count(double t_fraction, std::int64_t sal_h, std::int64_t sal_w);

}  // namespace mammil
