// Times the serial reference kernels against the OpenMP versions and checks
// that both produce bitwise identical results.
#include <CLI11.hpp>
#include <chrono>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <vector>

#include "mammil/kernels.hpp"
#include "mammil/rng.hpp"

using namespace mammil;
using Clock = std::chrono::steady_clock;

namespace {

double time_ms(const std::function<void()>& fn, int iters) {
    fn();  // warmup
    const auto start = Clock::now();
    for (int i = 0; i < iters; ++i) fn();
    const auto stop = Clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / iters;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool identical) {
    std::cout << std::left << std::setw(24) << name << std::right << std::fixed
              << std::setprecision(3) << std::setw(12) << serial_ms << std::setw(12) << parallel_ms
              << std::setw(10) << std::setprecision(2) << serial_ms / parallel_ms
              << (identical ? "   bitwise-identical" : "   MISMATCH") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Benchmark serial vs OpenMP kernels"};
    int iters = 5;
    std::int64_t mat_n = 384;
    std::int64_t conv_c = 16, conv_hw = 128;
    app.add_option("--iters", iters, "iterations per measurement");
    app.add_option("--matmul-n", mat_n, "square matmul extent");
    app.add_option("--conv-channels", conv_c, "conv2d channels");
    app.add_option("--conv-extent", conv_hw, "conv2d spatial extent");
    CLI11_PARSE(app, argc, argv);

    Rng rng(7);
    std::cout << std::left << std::setw(24) << "kernel" << std::right << std::setw(12)
              << "serial ms" << std::setw(12) << "omp ms" << std::setw(10) << "speedup"
              << "\n";

    bool all_identical = true;
    {
        std::vector<double> a(static_cast<std::size_t>(mat_n * mat_n));
        std::vector<double> b(a.size());
        for (auto& v : a) v = rng.uniform(-1.0, 1.0);
        for (auto& v : b) v = rng.uniform(-1.0, 1.0);
        std::vector<double> cs(a.size()), cp(a.size());
        const double ts = time_ms(
            [&] { kernels::matmul_serial(a.data(), b.data(), cs.data(), mat_n, mat_n, mat_n); },
            iters);
        const double tp = time_ms(
            [&] { kernels::matmul_parallel(a.data(), b.data(), cp.data(), mat_n, mat_n, mat_n); },
            iters);
        const bool same = bitwise_equal(cs, cp);
        all_identical = all_identical && same;
        report("matmul", ts, tp, same);
    }
    {
        kernels::Conv2dDims d;
        d.cin = conv_c;
        d.cout = conv_c;
        d.h = d.w = conv_hw;
        d.kh = d.kw = 3;
        d.stride = 2;
        d.pad = 1;
        std::vector<double> x(static_cast<std::size_t>(d.cin * d.h * d.w));
        std::vector<double> w(static_cast<std::size_t>(d.cout * d.cin * 9));
        std::vector<double> bias(static_cast<std::size_t>(d.cout));
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        for (auto& v : w) v = rng.uniform(-1.0, 1.0);
        for (auto& v : bias) v = rng.uniform(-1.0, 1.0);
        const auto out_count = static_cast<std::size_t>(d.cout * d.oh() * d.ow());
        std::vector<double> ys(out_count), yp(out_count);
        double ts = time_ms(
            [&] { kernels::conv2d_forward_serial(x.data(), w.data(), bias.data(), ys.data(), d); },
            iters);
        double tp = time_ms(
            [&] { kernels::conv2d_forward_parallel(x.data(), w.data(), bias.data(), yp.data(), d); },
            iters);
        bool same = bitwise_equal(ys, yp);
        all_identical = all_identical && same;
        report("conv2d forward", ts, tp, same);

        std::vector<double> dy(out_count);
        for (auto& v : dy) v = rng.uniform(-1.0, 1.0);
        std::vector<double> dxs(x.size()), dxp(x.size());
        ts = time_ms([&] { kernels::conv2d_grad_input_serial(dy.data(), w.data(), dxs.data(), d); },
                     iters);
        tp = time_ms(
            [&] { kernels::conv2d_grad_input_parallel(dy.data(), w.data(), dxp.data(), d); },
            iters);
        same = bitwise_equal(dxs, dxp);
        all_identical = all_identical && same;
        report("conv2d grad_input", ts, tp, same);

        std::vector<double> dws(w.size()), dwp(w.size());
        ts = time_ms(
            [&] { kernels::conv2d_grad_weight_serial(dy.data(), x.data(), dws.data(), d); }, iters);
        tp = time_ms(
            [&] { kernels::conv2d_grad_weight_parallel(dy.data(), x.data(), dwp.data(), d); },
            iters);
        same = bitwise_equal(dws, dwp);
        all_identical = all_identical && same;
        report("conv2d grad_weight", ts, tp, same);
    }
    if (!all_identical) {
        std::cerr << "serial and parallel kernels disagree\n";
        return 1;
    }
    return 0;
}
