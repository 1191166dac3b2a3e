#include "mammil/feature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mammil/errors.hpp"

namespace mammil {

std::int64_t staged_extent(std::int64_t n, std::size_t stages) {
    for (std::size_t i = 0; i < stages; ++i) n = (n + 1) / 2;
    return n;
}

namespace {

Tensor he_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor::rand_uniform(std::move(shape), rng, -limit, limit, /*requires_grad=*/true);
}

void push_param(std::vector<Parameter>& params, const std::string& name,
                const std::string& component, Tensor t) {
    for (const auto& p : params)
        if (p.name == name) throw TensorError("duplicate parameter name '" + name + "'");
    params.push_back(Parameter{name, component, std::move(t)});
}

}  // namespace

ConvNet::ConvNet(const std::string& name_prefix, const std::string& component,
                 std::int64_t in_channels, const std::vector<std::int64_t>& channels, Rng& rng,
                 std::vector<Parameter>& params) {
    if (channels.empty()) throw ConfigError("net: channels_per_stage must have >= 1 stage");
    std::int64_t cin = in_channels;
    for (std::size_t s = 0; s < channels.size(); ++s) {
        const std::int64_t cout = channels[s];
        if (cout < 1) throw ConfigError("net: non-positive channel count");
        Tensor w = he_uniform({cout, cin, 3, 3}, cin * 9, rng);
        Tensor b = Tensor::zeros({cout}, /*requires_grad=*/true);
        push_param(params, name_prefix + ".stage" + std::to_string(s) + ".weight", component, w);
        push_param(params, name_prefix + ".stage" + std::to_string(s) + ".bias", component, b);
        weights_.push_back(std::move(w));
        biases_.push_back(std::move(b));
        cin = cout;
    }
}

Tensor ConvNet::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t s = 0; s < weights_.size(); ++s)
        h = relu(conv2d(h, weights_[s], biases_[s], /*stride=*/2, /*pad=*/1));
    return h;
}

Linear::Linear(const std::string& name_prefix, const std::string& component, std::int64_t in_dim,
               std::int64_t out_dim, Rng& rng, std::vector<Parameter>& params) {
    weight_ = he_uniform({out_dim, in_dim}, in_dim, rng);
    bias_ = Tensor::zeros({out_dim}, /*requires_grad=*/true);
    push_param(params, name_prefix + ".weight", component, weight_);
    push_param(params, name_prefix + ".bias", component, bias_);
}

Tensor Linear::forward(const Tensor& x) const {
    const std::int64_t in = weight_.shape()[1];
    const std::int64_t out = weight_.shape()[0];
    Tensor col = reshape(x, {in, 1});
    Tensor y = reshape(matmul(weight_, col), {out});
    return add(y, bias_);
}

AttentionBlock::AttentionBlock(const std::string& name_prefix, const std::string& component,
                               std::int64_t embed_dim, std::int64_t hidden_dim, bool gated,
                               Rng& rng, std::vector<Parameter>& params)
    : gated_(gated) {
    v_ = he_uniform({hidden_dim, embed_dim}, embed_dim, rng);
    push_param(params, name_prefix + ".V", component, v_);
    if (gated) {
        u_ = he_uniform({hidden_dim, embed_dim}, embed_dim, rng);
        push_param(params, name_prefix + ".U", component, u_);
    }
    w_ = he_uniform({hidden_dim}, hidden_dim, rng);
    push_param(params, name_prefix + ".w", component, w_);
}

Tensor AttentionBlock::weights(const Tensor& stacked) const {
    if (stacked.dim() != 2)
        throw TensorError("attention: expected [M, d] embeddings, got " + shape_str(stacked.shape()));
    const std::int64_t m = stacked.shape()[0];
    Tensor pre = tanh(matmul(stacked, transpose2d(v_)));  // [M, hidden]
    if (gated_) pre = mul(pre, sigmoid(matmul(stacked, transpose2d(u_))));
    const std::int64_t hidden = w_.shape()[0];
    Tensor logits = reshape(matmul(pre, reshape(w_, {hidden, 1})), {m});
    return softmax(logits, 0);
}

std::int64_t topt_count(double t_fraction, std::int64_t sal_h, std::int64_t sal_w) {
    if (t_fraction <= 0.0 || t_fraction > 1.0)
        throw ConfigError("t_fraction must be in (0, 1], got " + std::to_string(t_fraction));
    const auto t = static_cast<std::int64_t>(
        std::llround(t_fraction * static_cast<double>(sal_h * sal_w)));
    return std::max<std::int64_t>(1, t);
}

std::vector<PatchCandidate> retrieve_roi(const Grid& image, const std::vector<double>& saliency,
                                         std::int64_t sal_h, std::int64_t sal_w, std::int64_t k,
                                         std::int64_t patch_h, std::int64_t patch_w) {
    if (k < 1) throw TensorError("retrieve_roi: k must be >= 1");
    const std::int64_t win_h = std::max<std::int64_t>(1, sal_h / 4);
    const std::int64_t win_w = std::max<std::int64_t>(1, sal_w / 4);
    if (win_h > sal_h || win_w > sal_w)
        throw TensorError("retrieve_roi: window does not fit in saliency map");
    const std::int64_t pos_h = sal_h - win_h + 1;
    const std::int64_t pos_w = sal_w - win_w + 1;

    std::vector<double> work = saliency;  // suppressed copy
    std::vector<char> used(static_cast<std::size_t>(pos_h * pos_w), 0);
    const double ratio_h = static_cast<double>(image.h) / static_cast<double>(sal_h);
    const double ratio_w = static_cast<double>(image.w) / static_cast<double>(sal_w);

    std::vector<PatchCandidate> out;
    out.reserve(static_cast<std::size_t>(k));
    for (std::int64_t iter = 0; iter < k; ++iter) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_pos = -1;
        for (std::int64_t r = 0; r < pos_h; ++r) {
            for (std::int64_t c = 0; c < pos_w; ++c) {
                const std::int64_t pos = r * pos_w + c;
                if (used[static_cast<std::size_t>(pos)]) continue;
                double acc = 0.0;
                for (std::int64_t dr = 0; dr < win_h; ++dr)
                    for (std::int64_t dc = 0; dc < win_w; ++dc)
                        acc += work[static_cast<std::size_t>((r + dr) * sal_w + (c + dc))];
                // strict > with a flat-order scan resolves ties to the
                // lowest flat index; best_pos < 0 admits all-suppressed maps
                if (best_pos < 0 || acc > best) {
                    best = acc;
                    best_pos = pos;
                }
            }
        }
        if (best_pos < 0) break;  // every position consumed
        used[static_cast<std::size_t>(best_pos)] = 1;
        const std::int64_t r = best_pos / pos_w;
        const std::int64_t c = best_pos % pos_w;

        PatchCandidate cand;
        cand.saliency_mass = 0.0;
        for (std::int64_t dr = 0; dr < win_h; ++dr)
            for (std::int64_t dc = 0; dc < win_w; ++dc) {
                const std::size_t i = static_cast<std::size_t>((r + dr) * sal_w + (c + dc));
                cand.saliency_mass += saliency[i];
                work[i] = -std::numeric_limits<double>::infinity();
            }
        cand.box.x0 = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::floor(static_cast<double>(c) * ratio_w)), 0, image.w - 1);
        cand.box.y0 = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::floor(static_cast<double>(r) * ratio_h)), 0, image.h - 1);
        cand.box.x1 = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::ceil(static_cast<double>(c + win_w) * ratio_w)),
            cand.box.x0 + 1, image.w);
        cand.box.y1 = std::clamp<std::int64_t>(
            static_cast<std::int64_t>(std::ceil(static_cast<double>(r + win_h) * ratio_h)),
            cand.box.y0 + 1, image.h);

        Grid crop(cand.box.y1 - cand.box.y0, cand.box.x1 - cand.box.x0);
        for (std::int64_t rr = 0; rr < crop.h; ++rr)
            for (std::int64_t cc = 0; cc < crop.w; ++cc)
                crop.at(rr, cc) = image.at(cand.box.y0 + rr, cand.box.x0 + cc);
        cand.crop = resize_bilinear(crop, patch_h, patch_w);
        out.push_back(std::move(cand));
    }
    return out;
}

}  // namespace mammil
