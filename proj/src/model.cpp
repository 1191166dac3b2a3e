#include "mammil/model.hpp"

#include <algorithm>
#include <cmath>

#include "mammil/errors.hpp"

namespace mammil {

CaseModel::CaseModel(const ModelConfig& cfg) : cfg_(cfg) {
    if (cfg.image_h < 8 || cfg.image_w < 8)
        throw ConfigError("model: image extents must be >= 8, got " +
                          std::to_string(cfg.image_h) + "x" + std::to_string(cfg.image_w));
    if (cfg.k < 1) throw ConfigError("model: k must be >= 1");
    Rng rng(cfg.init_seed);

    global_net_ = ConvNet("global", kCompGlobal, 1, cfg.net.channels_per_stage, rng, params_);
    global_channels_ = global_net_.out_channels();
    sal_h_ = staged_extent(cfg.image_h, global_net_.stages());
    sal_w_ = staged_extent(cfg.image_w, global_net_.stages());
    if (sal_h_ < 1 || sal_w_ < 1)
        throw ConfigError("model: image extents too small for the configured stages");
    t_ = topt_count(cfg.t_fraction, sal_h_, sal_w_);

    {
        const double limit = std::sqrt(6.0 / static_cast<double>(global_channels_));
        saliency_w_ = Tensor::rand_uniform({1, global_channels_, 1, 1}, rng, -limit, limit, true);
        saliency_b_ = Tensor::zeros({1}, true);
        params_.push_back(Parameter{"saliency.weight", kCompGlobal, saliency_w_});
        params_.push_back(Parameter{"saliency.bias", kCompGlobal, saliency_b_});
    }

    local_net_ = ConvNet("local", kCompLocal, 1, cfg.net.channels_per_stage, rng, params_);
    local_embed_ = Linear("local.embed", kCompLocal, local_net_.out_channels(), cfg.net.embed_dim,
                          rng, params_);
    patch_att_ = AttentionBlock("patch_att", kCompLocal, cfg.net.embed_dim, cfg.attention_hidden,
                                /*gated=*/true, rng, params_);

    local_head_ = Linear("head.local", kCompHeads, cfg.net.embed_dim, 1, rng, params_);
    fusion_head_ = Linear("head.fusion", kCompHeads, fusion_dim(), 1, rng, params_);

    const std::map<FeatureKind, std::int64_t> dims = {
        {FeatureKind::topt, t_},
        {FeatureKind::local, local_dim()},
        {FeatureKind::fusion, fusion_dim()},
    };
    if (cfg.pooling.uses_image_attention()) {
        const bool gated = cfg.pooling.op == PoolOp::gatt;
        for (FeatureKind f : kFeatureKinds)
            image_att_.emplace(f, AttentionBlock("image_att." + to_string(f), kCompImageAtt,
                                                 dims.at(f), cfg.attention_hidden, gated, rng,
                                                 params_));
    }
    if (cfg.pooling.uses_side_attention()) {
        for (FeatureKind f : kFeatureKinds)
            side_block_.view_att.emplace(
                f, AttentionBlock("view_att." + to_string(f), kCompViewAtt, dims.at(f),
                                  cfg.attention_hidden, /*gated=*/false, rng, params_));
        for (FeatureKind f : kFeatureKinds)
            side_block_.side_att.emplace(
                f, AttentionBlock("side_att." + to_string(f), kCompSideAtt, dims.at(f),
                                  cfg.attention_hidden, /*gated=*/false, rng, params_));
    }
}

std::vector<std::string> CaseModel::components() const {
    std::vector<std::string> out;
    for (const auto& p : params_)
        if (std::find(out.begin(), out.end(), p.component) == out.end())
            out.push_back(p.component);
    return out;
}

namespace {

std::vector<PatchCandidate> candidates_from_boxes(const Grid& image,
                                                  const std::vector<RoiBox>& boxes,
                                                  std::int64_t patch_h, std::int64_t patch_w) {
    std::vector<PatchCandidate> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) {
        PatchCandidate cand;
        cand.box = b;
        Grid crop(b.y1 - b.y0, b.x1 - b.x0);
        for (std::int64_t r = 0; r < crop.h; ++r)
            for (std::int64_t c = 0; c < crop.w; ++c) crop.at(r, c) = image.at(b.y0 + r, b.x0 + c);
        cand.crop = resize_bilinear(crop, patch_h, patch_w);
        out.push_back(std::move(cand));
    }
    return out;
}

}  // namespace

FeatureBundle CaseModel::image_forward(const ImageRecord& img,
                                       const std::vector<RoiBox>* frozen_boxes) const {
    if (img.pixels.h != cfg_.image_h || img.pixels.w != cfg_.image_w)
        throw DataError("model: image is " + std::to_string(img.pixels.h) + "x" +
                        std::to_string(img.pixels.w) + ", expected " +
                        std::to_string(cfg_.image_h) + "x" + std::to_string(cfg_.image_w) +
                        " (preprocess first)");
    FeatureBundle bundle;
    Tensor x = Tensor::from_data({1, cfg_.image_h, cfg_.image_w}, img.pixels.v);
    Tensor fmap = global_net_.forward(x);                      // [C, H', W']
    Tensor pooled_global = max_reduce(fmap, {1, 2});           // [C]
    Tensor sal = sigmoid(conv2d(fmap, saliency_w_, saliency_b_, 1, 0));  // [1, H', W']
    bundle.saliency = reshape(sal, {sal_h_, sal_w_});
    bundle.h_topt = topk(reshape(bundle.saliency, {sal_h_ * sal_w_}), t_);

    bundle.patches = frozen_boxes
                         ? candidates_from_boxes(img.pixels, *frozen_boxes, cfg_.patch_h,
                                                 cfg_.patch_w)
                         : retrieve_roi(img.pixels, bundle.saliency.data(), sal_h_, sal_w_, cfg_.k,
                                        cfg_.patch_h, cfg_.patch_w);

    std::vector<Tensor> patch_embeddings;
    patch_embeddings.reserve(bundle.patches.size());
    for (const auto& cand : bundle.patches) {
        Tensor p = Tensor::from_data({1, cfg_.patch_h, cfg_.patch_w}, cand.crop.v);
        Tensor pe = max_reduce(local_net_.forward(p), {1, 2});
        patch_embeddings.push_back(local_embed_.forward(pe));
    }
    Tensor stacked = stack0(patch_embeddings);            // [k, embed]
    Tensor a = patch_att_.weights(stacked);               // [k]
    const std::int64_t kk = stacked.shape()[0];
    bundle.h_local = sum(mul(reshape(a, {kk, 1}), stacked), {0});
    for (std::size_t j = 0; j < bundle.patches.size(); ++j)
        bundle.patches[j].attention = a.data()[j];

    bundle.h_fusion = concat({pooled_global, bundle.h_local}, 0);
    return bundle;
}

Tensor CaseModel::feature_of(const FeatureBundle& b, FeatureKind f) const {
    switch (f) {
        case FeatureKind::topt: return b.h_topt;
        case FeatureKind::local: return b.h_local;
        case FeatureKind::fusion: return b.h_fusion;
    }
    throw TensorError("unknown feature kind");
}

// The top-t head averages saliency scores that are already probabilities, so
// no second sigmoid is applied there.
Tensor CaseModel::head_probability(FeatureKind f, const Tensor& embedding) const {
    switch (f) {
        case FeatureKind::topt: return mean(embedding);
        case FeatureKind::local: return sigmoid(reshape(local_head_.forward(embedding), {}));
        case FeatureKind::fusion: return sigmoid(reshape(fusion_head_.forward(embedding), {}));
    }
    throw TensorError("unknown feature kind");
}

CaseOutput CaseModel::case_forward(const CaseRecord& c,
                                   const std::vector<std::vector<RoiBox>>* frozen_boxes) const {
    if (c.images.empty()) throw DataError("model: case " + c.case_id + " has no images");
    if (frozen_boxes && frozen_boxes->size() != c.images.size())
        throw TensorError("model: frozen boxes do not match image count");
    CaseOutput out;
    std::vector<ImageTag> tags;
    for (std::size_t i = 0; i < c.images.size(); ++i) {
        const auto* boxes = frozen_boxes ? &(*frozen_boxes)[i] : nullptr;
        out.bundles.push_back(image_forward(c.images[i], boxes));
        out.saliency_maps.push_back(out.bundles.back().saliency);
        tags.push_back(ImageTag{c.images[i].side, c.images[i].view});
    }
    Tensor heads[3];
    for (int fi = 0; fi < 3; ++fi) {
        const FeatureKind f = kFeatureKinds[fi];
        std::vector<Tensor> embeddings;
        embeddings.reserve(c.images.size());
        for (const auto& b : out.bundles) embeddings.push_back(feature_of(b, f));

        PoolBlocks blocks;
        if (cfg_.pooling.uses_image_attention()) blocks.image = &image_att_.at(f);
        if (cfg_.pooling.uses_side_attention()) {
            blocks.view = &side_block_.view_att.at(f);
            blocks.side = &side_block_.side_att.at(f);
        }

        PoolResult pooled;
        if (cfg_.pooling.paradigm == Paradigm::IS) {
            std::vector<Tensor> probs;
            probs.reserve(embeddings.size());
            for (const auto& e : embeddings) probs.push_back(head_probability(f, e));
            if (f == FeatureKind::fusion)
                for (const auto& p : probs) out.image_probs.push_back(p.item());
            pooled = pool_is(probs, embeddings, tags, cfg_.pooling, blocks);
            heads[fi] = pooled.value;
        } else {
            pooled = pool_es(embeddings, tags, cfg_.pooling, blocks);
            heads[fi] = head_probability(f, pooled.value);
        }
        // the reported per-image attention follows the fusion pooling site,
        // matching the head that makes the final prediction
        if (f == FeatureKind::fusion) out.image_attention = pooled.image_weights;
    }
    out.heads.y_topt = heads[0];
    out.heads.y_local = heads[1];
    out.heads.y_fusion = heads[2];
    return out;
}

void CaseModel::load_parameters(const std::vector<Parameter>& loaded) {
    if (loaded.size() != params_.size())
        throw DataError("load_parameters: checkpoint has " + std::to_string(loaded.size()) +
                        " parameters, model has " + std::to_string(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto it = std::find_if(loaded.begin(), loaded.end(),
                               [&](const Parameter& p) { return p.name == params_[i].name; });
        if (it == loaded.end())
            throw DataError("load_parameters: missing parameter '" + params_[i].name + "'");
        if (it->component != params_[i].component)
            throw DataError("load_parameters: component mismatch for '" + params_[i].name + "'");
        if (it->tensor.shape() != params_[i].tensor.shape())
            throw DataError("load_parameters: shape mismatch for '" + params_[i].name + "': " +
                            shape_str(it->tensor.shape()) + " vs " +
                            shape_str(params_[i].tensor.shape()));
        params_[i].tensor.raw_data() = it->tensor.data();
    }
}

}  // namespace mammil
