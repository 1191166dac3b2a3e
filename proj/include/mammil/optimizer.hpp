#pragma once

#include <cstdint>
#include <vector>

#include "mammil/checkpoint.hpp"

namespace mammil {

enum class OptimKind { sgd, adam };

struct OptimConfig {
    OptimKind kind = OptimKind::adam;
    double lr = 1e-4;
    double weight_decay = 1e-5;  // coupled L2, added to the gradient
    double momentum = 0.0;       // sgd only
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;  // adam only
};

// SGD / Adam over a fixed parameter list. A parameter with no accumulated
// gradient steps with g = 0, which still moves it whenever moments or weight
// decay are non-zero; dynamic training exists to undo exactly that.
class Optimizer {
public:
    struct ParamState {
        std::vector<double> m, v;   // adam moments
        std::vector<double> buf;    // sgd momentum buffer
        std::int64_t step_count = 0;
    };

    Optimizer(std::vector<Parameter> params, OptimConfig cfg);

    void step();
    void zero_grad();

    const OptimConfig& config() const { return cfg_; }
    std::size_t size() const { return params_.size(); }
    const Parameter& param(std::size_t i) const { return params_[i]; }
    ParamState& state(std::size_t i) { return states_[i]; }
    const ParamState& state(std::size_t i) const { return states_[i]; }

private:
    std::vector<Parameter> params_;
    std::vector<ParamState> states_;
    OptimConfig cfg_;
};

}  // namespace mammil
