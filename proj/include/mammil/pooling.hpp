#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mammil/feature.hpp"

namespace mammil {

enum class Paradigm { IS, ES };
enum class PoolOp { mean, max, att, gatt, side_att };

struct PoolingSpec {
    Paradigm paradigm = Paradigm::ES;
    PoolOp op = PoolOp::side_att;

    bool uses_image_attention() const { return op == PoolOp::att || op == PoolOp::gatt; }
    bool uses_side_attention() const { return op == PoolOp::side_att; }
};

// CLI / config string form: is-mean | is-max | is-att | is-gatt |
// is-att-side | es-mean | es-max | es-att | es-gatt | es-att-side
PoolingSpec parse_pooling_spec(const std::string& s);
std::string to_string(const PoolingSpec& spec);
std::vector<std::string> all_pooling_spec_names();

// The three per-image feature representations pooled at the case level.
enum class FeatureKind { topt, local, fusion };
constexpr FeatureKind kFeatureKinds[3] = {FeatureKind::topt, FeatureKind::local,
                                          FeatureKind::fusion};
std::string to_string(FeatureKind f);

// Six attention blocks of the side-wise pooling: a view-level block shared
// across sides and a side-level block, one pair per feature type.
struct SideWiseBlock {
    std::map<FeatureKind, AttentionBlock> view_att;
    std::map<FeatureKind, AttentionBlock> side_att;
};

struct CaseHeads {
    Tensor y_topt;    // scalar probabilities
    Tensor y_local;
    Tensor y_fusion;
    const Tensor& final() const { return y_fusion; }
};

// Per-image tags needed by the side-wise pooling and the reports.
struct ImageTag {
    Side side = Side::L;
    View view = View::CC;
};

// weights over a bag of embeddings [M, d]; singleton bags yield [1.0]
Tensor attention_weights(const Tensor& stacked, const AttentionBlock& block);

// Two-stage attention of the side-wise block: softmax over the views present
// on each side, then softmax over the present sides (computed from the
// view-pooled embeddings). Absent views and sides contribute nothing. The IS
// variant applies these same scores to image probabilities.
struct SideAttention {
    std::vector<std::vector<std::size_t>> members;  // image indices per present side
    std::vector<Tensor> view_weights;               // [V_s] per present side
    std::vector<Tensor> side_pooled;                // [d] per present side
    Tensor side_weights;                            // [S] over present sides
};
SideAttention side_attention(const std::vector<Tensor>& embeddings,
                             const std::vector<ImageTag>& tags, const AttentionBlock& view_block,
                             const AttentionBlock& side_block);

// Side-wise pooled case embedding (ES form).
struct SideWisePooled {
    Tensor pooled;                      // [d]
    std::vector<double> image_weights;  // effective per-image weight a_s * a_sv
};
SideWisePooled sidewise_pool(const std::vector<Tensor>& embeddings,
                             const std::vector<ImageTag>& tags, const AttentionBlock& view_block,
                             const AttentionBlock& side_block);

// effective per-image weights a_s * a_sv in image order
std::vector<double> effective_image_weights(const SideAttention& att, std::size_t n_images);

// Blocks a pooling site may need; null pointers for operators that do not
// use them.
struct PoolBlocks {
    const AttentionBlock* image = nullptr;
    const AttentionBlock* view = nullptr;
    const AttentionBlock* side = nullptr;
};

struct PoolResult {
    Tensor value;                       // case probability (IS) or case embedding (ES)
    std::vector<double> image_weights;  // attention per image; uniform for mean/max
};

// Instance-space pooling of per-image probabilities. Attention operators
// compute their weights from the matching embeddings; the side-wise variant
// applies the ES-computed view and side scores to the probabilities.
PoolResult pool_is(const std::vector<Tensor>& probabilities, const std::vector<Tensor>& embeddings,
                   const std::vector<ImageTag>& tags, const PoolingSpec& spec,
                   const PoolBlocks& blocks);

// Embedded-space pooling of per-image embeddings into a case embedding.
PoolResult pool_es(const std::vector<Tensor>& embeddings, const std::vector<ImageTag>& tags,
                   const PoolingSpec& spec, const PoolBlocks& blocks);

}  // namespace mammil
