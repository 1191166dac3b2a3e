#include "mammil/gradcheck.hpp"

#include <cmath>
#include <string>

namespace mammil {

namespace {

double rel_error(double analytic, double numeric, const std::string& where) {
    if (!std::isfinite(analytic) || !std::isfinite(numeric))
        throw VerificationError("grad_check: non-finite value at " + where + " (analytic=" +
                                std::to_string(analytic) + ", fd=" + std::to_string(numeric) + ")");
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

double eval_scalar(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                   const std::string& where) {
    Tensor y = f(x);
    if (y.numel() != 1)
        throw VerificationError("grad_check: f must produce a scalar, got " + shape_str(y.shape()));
    const double v = y.item();
    if (!std::isfinite(v)) throw VerificationError("grad_check: non-finite loss at " + where);
    return v;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    if (eps <= 0.0) throw VerificationError("grad_check: eps must be positive");
    Tensor probe = Tensor::from_data(x.shape(), x.data(), /*requires_grad=*/true);
    Tensor loss = f(probe);
    if (loss.numel() != 1)
        throw VerificationError("grad_check: f must produce a scalar, got " +
                                shape_str(loss.shape()));
    backward(loss);
    // an unused input legitimately ends up with no grad; treat as zero
    std::vector<double> analytic(static_cast<std::size_t>(x.numel()), 0.0);
    if (probe.has_grad()) analytic = probe.grad();

    Tensor work = Tensor::from_data(x.shape(), x.data(), /*requires_grad=*/false);
    double max_err = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double saved = work.raw_data()[i];
        const std::string where = "entry " + std::to_string(i);
        work.raw_data()[i] = saved + eps;
        const double up = eval_scalar(f, work, where);
        work.raw_data()[i] = saved - eps;
        const double down = eval_scalar(f, work, where);
        work.raw_data()[i] = saved;
        const double fd = (up - down) / (2.0 * eps);
        max_err = std::max(max_err, rel_error(analytic[i], fd, where));
    }
    return max_err;
}

double grad_check_params(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double eps) {
    if (eps <= 0.0) throw VerificationError("grad_check: eps must be positive");
    for (auto p : params) p.zero_grad();
    Tensor loss = f();
    if (loss.numel() != 1)
        throw VerificationError("grad_check: f must produce a scalar, got " +
                                shape_str(loss.shape()));
    backward(loss);
    double max_err = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        std::vector<double> analytic(static_cast<std::size_t>(p.numel()), 0.0);
        if (p.has_grad()) analytic = p.grad();
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const std::string where = "param " + std::to_string(pi) + " entry " + std::to_string(i);
            const double saved = p.raw_data()[i];
            p.raw_data()[i] = saved + eps;
            Tensor up = f();
            p.raw_data()[i] = saved - eps;
            Tensor down = f();
            p.raw_data()[i] = saved;
            if (!std::isfinite(up.item()) || !std::isfinite(down.item()))
                throw VerificationError("grad_check: non-finite loss at " + where);
            const double fd = (up.item() - down.item()) / (2.0 * eps);
            max_err = std::max(max_err, rel_error(analytic[i], fd, where));
        }
    }
    return max_err;
}

}  // namespace mammil
