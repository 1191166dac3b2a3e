#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mammil/loss.hpp"
#include "mammil/model.hpp"
#include "mammil/optimizer.hpp"

namespace mammil {

// Component id -> indices into the model's parameter list. Every parameter
// belongs to exactly one component.
class ComponentRegistry {
public:
    explicit ComponentRegistry(const std::vector<Parameter>& params);
    const std::vector<std::string>& components() const { return order_; }
    const std::vector<std::size_t>& param_indices(const std::string& component) const;

private:
    std::vector<std::string> order_;
    std::map<std::string, std::vector<std::size_t>> indices_;
};

// Last-participating state per component: deep copies of weights, optimizer
// moments and step counts. Restores are bit-exact. Parameter handles share
// storage with the model, so restores land in the live weights.
class SnapshotStore {
public:
    SnapshotStore(const ComponentRegistry& registry, const std::vector<Parameter>& params,
                  Optimizer& optimizer);

    void capture(const std::string& component);
    void restore(const std::string& component);
    void capture_all();

private:
    struct Entry {
        std::vector<std::vector<double>> weights;
        std::vector<Optimizer::ParamState> states;
    };
    const ComponentRegistry* registry_;
    std::vector<Parameter> params_;
    Optimizer* optimizer_;
    std::map<std::string, Entry> entries_;
};

// Which components take part in a forward pass over a view-combination
// homogeneous batch: the feature nets and heads always, the image-wise
// attention only for bags of more than one image, the view-level attention
// only when some present side has more than one view, the side-level
// attention only when both sides are present.
std::set<std::string> participating_components(const CaseRecord& representative,
                                               const PoolingSpec& spec,
                                               const std::vector<std::string>& existing);

// One optimizer step over a batch, averaging the per-case losses. Returns
// the batch loss.
double default_step(CaseModel& model, Optimizer& optimizer, const LossConfig& loss_cfg,
                    const std::vector<const CaseRecord*>& batch,
                    std::vector<double>* final_probs = nullptr);

// default_step followed by restoring every non-participating component from
// its snapshot and refreshing the snapshots of the participating ones. The
// batch must be view-combination homogeneous.
double dynamic_step(CaseModel& model, Optimizer& optimizer, const LossConfig& loss_cfg,
                    const std::vector<const CaseRecord*>& batch, SnapshotStore& snapshots,
                    std::vector<double>* final_probs = nullptr);

}  // namespace mammil
