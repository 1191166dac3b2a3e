#include "mammil/pooling.hpp"

#include <algorithm>

#include "mammil/errors.hpp"

namespace mammil {

PoolingSpec parse_pooling_spec(const std::string& s) {
    PoolingSpec spec;
    std::string rest;
    if (s.rfind("is-", 0) == 0) {
        spec.paradigm = Paradigm::IS;
        rest = s.substr(3);
    } else if (s.rfind("es-", 0) == 0) {
        spec.paradigm = Paradigm::ES;
        rest = s.substr(3);
    } else {
        rest = "?";
    }
    if (rest == "mean")
        spec.op = PoolOp::mean;
    else if (rest == "max")
        spec.op = PoolOp::max;
    else if (rest == "att")
        spec.op = PoolOp::att;
    else if (rest == "gatt")
        spec.op = PoolOp::gatt;
    else if (rest == "att-side")
        spec.op = PoolOp::side_att;
    else {
        std::string valid;
        for (const auto& name : all_pooling_spec_names()) valid += (valid.empty() ? "" : ", ") + name;
        throw ConfigError("unknown pooling spec '" + s + "' (valid: " + valid + ")");
    }
    return spec;
}

std::string to_string(const PoolingSpec& spec) {
    std::string s = spec.paradigm == Paradigm::IS ? "is-" : "es-";
    switch (spec.op) {
        case PoolOp::mean: return s + "mean";
        case PoolOp::max: return s + "max";
        case PoolOp::att: return s + "att";
        case PoolOp::gatt: return s + "gatt";
        case PoolOp::side_att: return s + "att-side";
    }
    return s + "?";
}

std::vector<std::string> all_pooling_spec_names() {
    return {"is-mean", "is-max", "is-att", "is-gatt", "is-att-side",
            "es-mean", "es-max", "es-att", "es-gatt", "es-att-side"};
}

std::string to_string(FeatureKind f) {
    switch (f) {
        case FeatureKind::topt: return "topt";
        case FeatureKind::local: return "local";
        case FeatureKind::fusion: return "fusion";
    }
    return "?";
}

Tensor attention_weights(const Tensor& stacked, const AttentionBlock& block) {
    if (stacked.dim() != 2 || stacked.shape()[0] < 1)
        throw TensorError("attention_weights: expected non-empty [M, d] bag, got " +
                          shape_str(stacked.shape()));
    return block.weights(stacked);
}

SideAttention side_attention(const std::vector<Tensor>& embeddings,
                             const std::vector<ImageTag>& tags, const AttentionBlock& view_block,
                             const AttentionBlock& side_block) {
    if (embeddings.empty()) throw TensorError("sidewise_pool: empty bag");
    if (embeddings.size() != tags.size())
        throw TensorError("sidewise_pool: embeddings/tags size mismatch");

    std::vector<std::size_t> left, right;
    for (std::size_t i = 0; i < tags.size(); ++i)
        (tags[i].side == Side::L ? left : right).push_back(i);

    SideAttention out;
    for (const auto* members : {&left, &right}) {
        if (members->empty()) continue;  // absent side contributes nothing
        std::vector<Tensor> rows;
        rows.reserve(members->size());
        for (auto i : *members) rows.push_back(embeddings[i]);
        Tensor stacked = stack0(rows);                            // [V, d]
        Tensor weights = attention_weights(stacked, view_block);  // [V]
        const std::int64_t v_count = stacked.shape()[0];
        Tensor weighted = mul(reshape(weights, {v_count, 1}), stacked);
        out.members.push_back(*members);
        out.view_weights.push_back(weights);
        out.side_pooled.push_back(sum(weighted, {0}));  // [d]
    }
    Tensor side_stacked = stack0(out.side_pooled);  // [S, d]
    out.side_weights = attention_weights(side_stacked, side_block);
    return out;
}

SideWisePooled sidewise_pool(const std::vector<Tensor>& embeddings,
                             const std::vector<ImageTag>& tags, const AttentionBlock& view_block,
                             const AttentionBlock& side_block) {
    SideAttention att = side_attention(embeddings, tags, view_block, side_block);
    Tensor side_stacked = stack0(att.side_pooled);  // [S, d]
    const std::int64_t s_count = side_stacked.shape()[0];
    Tensor weighted = mul(reshape(att.side_weights, {s_count, 1}), side_stacked);
    SideWisePooled out;
    out.pooled = sum(weighted, {0});
    out.image_weights = effective_image_weights(att, embeddings.size());
    return out;
}

std::vector<double> effective_image_weights(const SideAttention& att, std::size_t n_images) {
    std::vector<double> weights(n_images, 0.0);
    for (std::size_t s = 0; s < att.members.size(); ++s)
        for (std::size_t j = 0; j < att.members[s].size(); ++j)
            weights[att.members[s][j]] = att.side_weights.data()[s] * att.view_weights[s].data()[j];
    return weights;
}

namespace {

const AttentionBlock& require_block(const AttentionBlock* block, const char* what) {
    if (!block) throw TensorError(std::string("pooling: missing ") + what + " attention block");
    return *block;
}

std::vector<double> uniform_weights(std::size_t m) {
    return std::vector<double>(m, 1.0 / static_cast<double>(m));
}

}  // namespace

PoolResult pool_is(const std::vector<Tensor>& probabilities, const std::vector<Tensor>& embeddings,
                   const std::vector<ImageTag>& tags, const PoolingSpec& spec,
                   const PoolBlocks& blocks) {
    if (probabilities.empty()) throw TensorError("pool_is: empty bag");
    const auto m = static_cast<std::int64_t>(probabilities.size());
    std::vector<Tensor> scalars;
    scalars.reserve(probabilities.size());
    for (const auto& p : probabilities) scalars.push_back(reshape(p, {1}));
    Tensor prob_vec = concat(scalars, 0);  // [M]

    PoolResult out;
    out.image_weights = uniform_weights(probabilities.size());
    switch (spec.op) {
        case PoolOp::mean: out.value = mean(prob_vec); break;
        case PoolOp::max: out.value = max_reduce(prob_vec); break;
        case PoolOp::att:
        case PoolOp::gatt: {
            if (embeddings.size() != probabilities.size())
                throw TensorError("pool_is: embeddings required for attention pooling");
            Tensor a = attention_weights(stack0(embeddings), require_block(blocks.image, "image"));
            out.value = sum(mul(a, prob_vec));
            out.image_weights = a.data();
            break;
        }
        case PoolOp::side_att: {
            if (embeddings.size() != probabilities.size())
                throw TensorError("pool_is: embeddings required for side-wise pooling");
            SideAttention att = side_attention(embeddings, tags, require_block(blocks.view, "view"),
                                               require_block(blocks.side, "side"));
            Tensor acc;
            for (std::size_t s = 0; s < att.members.size(); ++s) {
                std::vector<Tensor> side_probs;
                for (auto idx : att.members[s]) side_probs.push_back(reshape(probabilities[idx], {1}));
                Tensor sp = concat(side_probs, 0);
                Tensor side_y = sum(mul(att.view_weights[s], sp));
                Tensor w_s = reshape(narrow(att.side_weights, 0, static_cast<std::int64_t>(s), 1), {});
                Tensor term = mul(w_s, side_y);
                acc = acc.defined() ? add(acc, term) : term;
            }
            out.value = acc;
            out.image_weights = effective_image_weights(att, probabilities.size());
            break;
        }
    }
    (void)m;
    return out;
}

PoolResult pool_es(const std::vector<Tensor>& embeddings, const std::vector<ImageTag>& tags,
                   const PoolingSpec& spec, const PoolBlocks& blocks) {
    if (embeddings.empty()) throw TensorError("pool_es: empty bag");
    const auto m = static_cast<std::int64_t>(embeddings.size());
    PoolResult out;
    out.image_weights = uniform_weights(embeddings.size());
    switch (spec.op) {
        case PoolOp::mean: out.value = mean(stack0(embeddings), {0}); break;
        case PoolOp::max: out.value = max_reduce(stack0(embeddings), {0}); break;
        case PoolOp::att:
        case PoolOp::gatt: {
            Tensor stacked = stack0(embeddings);
            Tensor a = attention_weights(stacked, require_block(blocks.image, "image"));
            out.value = sum(mul(reshape(a, {m, 1}), stacked), {0});
            out.image_weights = a.data();
            break;
        }
        case PoolOp::side_att: {
            SideWisePooled sp = sidewise_pool(embeddings, tags, require_block(blocks.view, "view"),
                                              require_block(blocks.side, "side"));
            out.value = sp.pooled;
            out.image_weights = sp.image_weights;
            break;
        }
    }
    return out;
}

}  // namespace mammil
