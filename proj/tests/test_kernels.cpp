#include <doctest.h>

#include <cstring>
#include <tuple>
#include <vector>

#include "mammil/kernels.hpp"
#include "mammil/rng.hpp"

using namespace mammil;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * 8) == 0;
}

}  // namespace

TEST_CASE("matmul serial and parallel agree bitwise") {
    Rng rng(11);
    const std::tuple<std::int64_t, std::int64_t, std::int64_t> shapes[] = {
        {1, 1, 1}, {3, 5, 2}, {17, 9, 23}, {64, 32, 48}};
    for (auto [m, k, n] : shapes) {
        std::vector<double> a(static_cast<std::size_t>(m * k)), b(static_cast<std::size_t>(k * n));
        for (auto& v : a) v = rng.uniform(-1.0, 1.0);
        for (auto& v : b) v = rng.uniform(-1.0, 1.0);
        std::vector<double> cs(static_cast<std::size_t>(m * n)), cp(cs.size());
        kernels::matmul_serial(a.data(), b.data(), cs.data(), m, k, n);
        kernels::matmul_parallel(a.data(), b.data(), cp.data(), m, k, n);
        CHECK(bitwise_equal(cs, cp));
    }
}

TEST_CASE("matmul reference value") {
    // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
    const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
    std::vector<double> c(4);
    kernels::matmul_serial(a.data(), b.data(), c.data(), 2, 2, 2);
    CHECK(c == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("conv2d forward matches a hand computation") {
    // 1x3x3 input, 1x1x2x2 kernel of ones, stride 1, no padding: 2x2 window sums
    kernels::Conv2dDims d;
    d.cin = 1;
    d.h = d.w = 3;
    d.cout = 1;
    d.kh = d.kw = 2;
    d.stride = 1;
    d.pad = 0;
    const std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9};
    const std::vector<double> w{1, 1, 1, 1};
    std::vector<double> y(4);
    kernels::conv2d_forward_serial(x.data(), w.data(), nullptr, y.data(), d);
    CHECK(y == std::vector<double>{12, 16, 24, 28});
}

TEST_CASE("conv2d kernels agree bitwise across backends") {
    Rng rng(13);
    for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}, {3, 2}}) {
        kernels::Conv2dDims d;
        d.cin = 3;
        d.h = 14;
        d.w = 11;
        d.cout = 5;
        d.kh = d.kw = 3;
        d.stride = stride;
        d.pad = pad;
        std::vector<double> x(static_cast<std::size_t>(d.cin * d.h * d.w));
        std::vector<double> w(static_cast<std::size_t>(d.cout * d.cin * 9));
        std::vector<double> bias(static_cast<std::size_t>(d.cout));
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        for (auto& v : w) v = rng.uniform(-1.0, 1.0);
        for (auto& v : bias) v = rng.uniform(-1.0, 1.0);
        const auto out_count = static_cast<std::size_t>(d.cout * d.oh() * d.ow());

        std::vector<double> ys(out_count), yp(out_count);
        kernels::conv2d_forward_serial(x.data(), w.data(), bias.data(), ys.data(), d);
        kernels::conv2d_forward_parallel(x.data(), w.data(), bias.data(), yp.data(), d);
        CHECK(bitwise_equal(ys, yp));

        std::vector<double> dy(out_count);
        for (auto& v : dy) v = rng.uniform(-1.0, 1.0);
        std::vector<double> dxs(x.size()), dxp(x.size());
        kernels::conv2d_grad_input_serial(dy.data(), w.data(), dxs.data(), d);
        kernels::conv2d_grad_input_parallel(dy.data(), w.data(), dxp.data(), d);
        CHECK(bitwise_equal(dxs, dxp));

        std::vector<double> dws(w.size()), dwp(w.size());
        kernels::conv2d_grad_weight_serial(dy.data(), x.data(), dws.data(), d);
        kernels::conv2d_grad_weight_parallel(dy.data(), x.data(), dwp.data(), d);
        CHECK(bitwise_equal(dws, dwp));
    }
}

TEST_CASE("backend switch is honored") {
    const auto saved = kernels::active_backend();
    kernels::set_backend(kernels::Backend::serial);
    CHECK(kernels::active_backend() == kernels::Backend::serial);
    kernels::set_backend(saved);
}
