#include "mammil/snapshot.hpp"

#include <algorithm>

#include "mammil/errors.hpp"

namespace mammil {

ComponentRegistry::ComponentRegistry(const std::vector<Parameter>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].component.empty())
            throw TensorError("registry: parameter '" + params[i].name + "' has empty component");
        auto [it, inserted] = indices_.try_emplace(params[i].component);
        if (inserted) order_.push_back(params[i].component);
        it->second.push_back(i);
    }
}

const std::vector<std::size_t>& ComponentRegistry::param_indices(
    const std::string& component) const {
    auto it = indices_.find(component);
    if (it == indices_.end()) throw TensorError("registry: unknown component '" + component + "'");
    return it->second;
}

SnapshotStore::SnapshotStore(const ComponentRegistry& registry,
                             const std::vector<Parameter>& params, Optimizer& optimizer)
    : registry_(&registry), params_(params), optimizer_(&optimizer) {
    capture_all();
}

void SnapshotStore::capture(const std::string& component) {
    Entry e;
    for (auto i : registry_->param_indices(component)) {
        e.weights.push_back(params_[i].tensor.data());
        e.states.push_back(optimizer_->state(i));
    }
    entries_[component] = std::move(e);
}

void SnapshotStore::restore(const std::string& component) {
    auto it = entries_.find(component);
    if (it == entries_.end())
        throw TensorError("snapshot: component '" + component + "' was never captured");
    const auto& idx = registry_->param_indices(component);
    for (std::size_t j = 0; j < idx.size(); ++j) {
        params_[idx[j]].tensor.raw_data() = it->second.weights[j];
        optimizer_->state(idx[j]) = it->second.states[j];
    }
}

void SnapshotStore::capture_all() {
    for (const auto& comp : registry_->components()) capture(comp);
}

std::set<std::string> participating_components(const CaseRecord& representative,
                                               const PoolingSpec& spec,
                                               const std::vector<std::string>& existing) {
    std::set<std::string> parts;
    std::size_t n_left = 0, n_right = 0;
    for (const auto& img : representative.images)
        (img.side == Side::L ? n_left : n_right)++;
    const std::size_t bag = representative.images.size();

    for (const auto& comp : existing) {
        if (comp == kCompGlobal || comp == kCompLocal || comp == kCompHeads) {
            parts.insert(comp);
        } else if (comp == kCompImageAtt) {
            if (spec.uses_image_attention() && bag > 1) parts.insert(comp);
        } else if (comp == kCompViewAtt) {
            if (spec.uses_side_attention() && (n_left > 1 || n_right > 1)) parts.insert(comp);
        } else if (comp == kCompSideAtt) {
            if (spec.uses_side_attention() && n_left > 0 && n_right > 0) parts.insert(comp);
        }
    }
    return parts;
}

double default_step(CaseModel& model, Optimizer& optimizer, const LossConfig& loss_cfg,
                    const std::vector<const CaseRecord*>& batch,
                    std::vector<double>* final_probs) {
    if (batch.empty()) throw DataError("train step: empty batch");
    optimizer.zero_grad();
    Tensor total;
    for (const CaseRecord* c : batch) {
        CaseOutput out = model.case_forward(*c);
        Tensor l = case_loss(c->case_label, out.heads, out.saliency_maps, loss_cfg);
        total = total.defined() ? add(total, l) : l;
        if (final_probs) final_probs->push_back(out.heads.final().item());
    }
    total = scale(total, 1.0 / static_cast<double>(batch.size()));
    backward(total);
    optimizer.step();
    const double loss_value = total.item();
    optimizer.zero_grad();
    return loss_value;
}

double dynamic_step(CaseModel& model, Optimizer& optimizer, const LossConfig& loss_cfg,
                    const std::vector<const CaseRecord*>& batch, SnapshotStore& snapshots,
                    std::vector<double>* final_probs) {
    if (batch.empty()) throw DataError("train step: empty batch");
    const std::string key = view_combination_key(*batch.front());
    for (const CaseRecord* c : batch)
        if (view_combination_key(*c) != key)
            throw DataError("dynamic_step: batch is not view-combination homogeneous (" + key +
                            " vs " + view_combination_key(*c) + ")");
    const double loss_value = default_step(model, optimizer, loss_cfg, batch, final_probs);
    const auto parts =
        participating_components(*batch.front(), model.config().pooling, model.components());
    for (const auto& comp : model.components()) {
        if (parts.count(comp))
            snapshots.capture(comp);
        else
            snapshots.restore(comp);
    }
    return loss_value;
}

}  // namespace mammil
