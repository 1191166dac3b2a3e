#include "mammil/optimizer.hpp"

#include <cmath>

namespace mammil {

Optimizer::Optimizer(std::vector<Parameter> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    states_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto n = static_cast<std::size_t>(params_[i].tensor.numel());
        if (cfg_.kind == OptimKind::adam) {
            states_[i].m.assign(n, 0.0);
            states_[i].v.assign(n, 0.0);
        } else if (cfg_.momentum != 0.0) {
            states_[i].buf.assign(n, 0.0);
        }
    }
}

void Optimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& t = params_[i].tensor;
        auto& data = t.raw_data();
        auto& st = states_[i];
        // missing grad means g = 0; the step still runs and the counter still
        // advances for every parameter the optimizer owns
        const std::vector<double>* grad = t.has_grad() ? &t.grad() : nullptr;
        ++st.step_count;
        if (cfg_.kind == OptimKind::adam) {
            const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(st.step_count));
            const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(st.step_count));
            for (std::size_t j = 0; j < data.size(); ++j) {
                const double g = (grad ? (*grad)[j] : 0.0) + cfg_.weight_decay * data[j];
                st.m[j] = cfg_.beta1 * st.m[j] + (1.0 - cfg_.beta1) * g;
                st.v[j] = cfg_.beta2 * st.v[j] + (1.0 - cfg_.beta2) * g * g;
                const double m_hat = st.m[j] / bc1;
                const double v_hat = st.v[j] / bc2;
                data[j] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
            }
        } else {
            for (std::size_t j = 0; j < data.size(); ++j) {
                double g = (grad ? (*grad)[j] : 0.0) + cfg_.weight_decay * data[j];
                if (cfg_.momentum != 0.0) {
                    st.buf[j] = cfg_.momentum * st.buf[j] + g;
                    g = st.buf[j];
                }
                data[j] -= cfg_.lr * g;
            }
        }
    }
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace mammil
