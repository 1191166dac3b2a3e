#include "mammil/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <utility>
#include <vector>

namespace mammil::kernels {

namespace {

Backend initial_backend() {
    if (const char* env = std::getenv("MAMMIL_KERNEL_BACKEND")) {
        if (std::strcmp(env, "serial") == 0) return Backend::serial;
        if (std::strcmp(env, "parallel") == 0) return Backend::parallel;
    }
    return Backend::parallel;
}

std::atomic<Backend> g_backend{initial_backend()};

}  // namespace

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }
std::string backend_name(Backend b) { return b == Backend::serial ? "serial" : "parallel"; }

void matmul_serial(const double* a, const double* b, double* c,
                   std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void matmul_parallel(const double* a, const double* b, double* c,
                     std::int64_t m, std::int64_t k, std::int64_t n) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void matmul(const double* a, const double* b, double* c,
            std::int64_t m, std::int64_t k, std::int64_t n) {
    if (active_backend() == Backend::parallel && m * n >= 65536)
        matmul_parallel(a, b, c, m, k, n);
    else
        matmul_serial(a, b, c, m, k, n);
}

namespace {

// Tap validity separates by axis: which kernel rows hit a given output row
// depends only on (oh, stride, pad, h), and likewise for columns. These
// tables make the inner loops branch-free without changing any summation
// order, so serial and parallel stay bitwise identical.
struct TapTable {
    // per outer index: [begin, end) into the flattened (tap, src) pairs
    std::vector<std::int32_t> offsets;
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;  // (kernel tap, source index)
};

// taps valid for each output position: src = o * stride - pad + tap in [0, extent)
TapTable forward_taps(std::int64_t out, std::int64_t kernel, std::int64_t stride,
                      std::int64_t pad, std::int64_t extent) {
    TapTable t;
    t.offsets.resize(static_cast<std::size_t>(out) + 1, 0);
    for (std::int64_t o = 0; o < out; ++o) {
        t.offsets[static_cast<std::size_t>(o)] = static_cast<std::int32_t>(t.pairs.size());
        for (std::int64_t tap = 0; tap < kernel; ++tap) {
            const std::int64_t src = o * stride - pad + tap;
            if (src >= 0 && src < extent)
                t.pairs.emplace_back(static_cast<std::int32_t>(tap),
                                     static_cast<std::int32_t>(src));
        }
    }
    t.offsets[static_cast<std::size_t>(out)] = static_cast<std::int32_t>(t.pairs.size());
    return t;
}

// taps valid for each input position: o = (src + pad - tap) / stride when
// divisible and within [0, out)
TapTable backward_taps(std::int64_t extent, std::int64_t kernel, std::int64_t stride,
                       std::int64_t pad, std::int64_t out) {
    TapTable t;
    t.offsets.resize(static_cast<std::size_t>(extent) + 1, 0);
    for (std::int64_t src = 0; src < extent; ++src) {
        t.offsets[static_cast<std::size_t>(src)] = static_cast<std::int32_t>(t.pairs.size());
        for (std::int64_t tap = 0; tap < kernel; ++tap) {
            const std::int64_t num = src + pad - tap;
            if (num < 0 || num % stride != 0) continue;
            const std::int64_t o = num / stride;
            if (o < out)
                t.pairs.emplace_back(static_cast<std::int32_t>(tap), static_cast<std::int32_t>(o));
        }
    }
    t.offsets[static_cast<std::size_t>(extent)] = static_cast<std::int32_t>(t.pairs.size());
    return t;
}

template <bool Parallel>
void conv2d_forward_impl(const double* x, const double* w, const double* bias, double* y,
                         const Conv2dDims& d) {
    const std::int64_t oh = d.oh(), ow = d.ow();
    const TapTable rows = forward_taps(oh, d.kh, d.stride, d.pad, d.h);
    const TapTable cols = forward_taps(ow, d.kw, d.stride, d.pad, d.w);
    const std::int64_t total = d.cout * oh;
#pragma omp parallel for schedule(static) if (Parallel)
    for (std::int64_t t = 0; t < total; ++t) {
        const std::int64_t co = t / oh;
        const std::int64_t o_r = t % oh;
        const double b = bias ? bias[co] : 0.0;
        double* yp = y + (co * oh + o_r) * ow;
        for (std::int64_t o_s = 0; o_s < ow; ++o_s) {
            double acc = 0.0;
            for (std::int64_t ci = 0; ci < d.cin; ++ci) {
                const double* xp = x + ci * d.h * d.w;
                const double* wp = w + ((co * d.cin + ci) * d.kh) * d.kw;
                for (std::int32_t ri = rows.offsets[o_r]; ri < rows.offsets[o_r + 1]; ++ri) {
                    const auto [kr, ih] = rows.pairs[static_cast<std::size_t>(ri)];
                    const double* xrow = xp + static_cast<std::int64_t>(ih) * d.w;
                    const double* wrow = wp + static_cast<std::int64_t>(kr) * d.kw;
                    for (std::int32_t si = cols.offsets[o_s]; si < cols.offsets[o_s + 1]; ++si) {
                        const auto [ks, iw] = cols.pairs[static_cast<std::size_t>(si)];
                        acc += xrow[iw] * wrow[ks];
                    }
                }
            }
            yp[o_s] = acc + b;
        }
    }
}

template <bool Parallel>
void conv2d_grad_input_impl(const double* dy, const double* w, double* dx, const Conv2dDims& d) {
    const std::int64_t oh = d.oh(), ow = d.ow();
    const TapTable rows = backward_taps(d.h, d.kh, d.stride, d.pad, oh);
    const TapTable cols = backward_taps(d.w, d.kw, d.stride, d.pad, ow);
    const std::int64_t total = d.cin * d.h;
#pragma omp parallel for schedule(static) if (Parallel)
    for (std::int64_t t = 0; t < total; ++t) {
        const std::int64_t ci = t / d.h;
        const std::int64_t ih = t % d.h;
        double* dxp = dx + (ci * d.h + ih) * d.w;
        for (std::int64_t iw = 0; iw < d.w; ++iw) {
            double acc = 0.0;
            for (std::int64_t co = 0; co < d.cout; ++co) {
                const double* dyp = dy + co * oh * ow;
                const double* wp = w + ((co * d.cin + ci) * d.kh) * d.kw;
                for (std::int32_t ri = rows.offsets[ih]; ri < rows.offsets[ih + 1]; ++ri) {
                    const auto [kr, o_r] = rows.pairs[static_cast<std::size_t>(ri)];
                    const double* dyrow = dyp + static_cast<std::int64_t>(o_r) * ow;
                    const double* wrow = wp + static_cast<std::int64_t>(kr) * d.kw;
                    for (std::int32_t si = cols.offsets[iw]; si < cols.offsets[iw + 1]; ++si) {
                        const auto [ks, o_s] = cols.pairs[static_cast<std::size_t>(si)];
                        acc += dyrow[o_s] * wrow[ks];
                    }
                }
            }
            dxp[iw] = acc;
        }
    }
}

template <bool Parallel>
void conv2d_grad_weight_impl(const double* dy, const double* x, double* dw, const Conv2dDims& d) {
    const std::int64_t oh = d.oh(), ow = d.ow();
    const TapTable rows = forward_taps(oh, d.kh, d.stride, d.pad, d.h);
    const TapTable cols = forward_taps(ow, d.kw, d.stride, d.pad, d.w);
    const std::int64_t total = d.cout * d.cin;
    // per (kernel tap row, kernel tap col): stream the valid output positions
#pragma omp parallel for schedule(static) if (Parallel)
    for (std::int64_t t = 0; t < total; ++t) {
        const std::int64_t co = t / d.cin;
        const std::int64_t ci = t % d.cin;
        const double* dyp = dy + co * oh * ow;
        const double* xp = x + ci * d.h * d.w;
        double* dwp = dw + ((co * d.cin + ci) * d.kh) * d.kw;
        for (std::int64_t i = 0; i < d.kh * d.kw; ++i) dwp[i] = 0.0;
        for (std::int64_t o_r = 0; o_r < oh; ++o_r) {
            for (std::int32_t ri = rows.offsets[o_r]; ri < rows.offsets[o_r + 1]; ++ri) {
                const auto [kr, ih] = rows.pairs[static_cast<std::size_t>(ri)];
                const double* xrow = xp + static_cast<std::int64_t>(ih) * d.w;
                double* dwrow = dwp + static_cast<std::int64_t>(kr) * d.kw;
                const double* dyrow = dyp + o_r * ow;
                for (std::int64_t o_s = 0; o_s < ow; ++o_s) {
                    const double g = dyrow[o_s];
                    for (std::int32_t si = cols.offsets[o_s]; si < cols.offsets[o_s + 1]; ++si) {
                        const auto [ks, iw] = cols.pairs[static_cast<std::size_t>(si)];
                        dwrow[ks] += g * xrow[iw];
                    }
                }
            }
        }
    }
}

}  // namespace

void conv2d_forward_serial(const double* x, const double* w, const double* bias, double* y,
                           const Conv2dDims& d) {
    conv2d_forward_impl<false>(x, w, bias, y, d);
}

void conv2d_forward_parallel(const double* x, const double* w, const double* bias, double* y,
                             const Conv2dDims& d) {
    conv2d_forward_impl<true>(x, w, bias, y, d);
}

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d) {
    if (active_backend() == Backend::parallel && d.cout * d.oh() * d.ow() >= 16384)
        conv2d_forward_parallel(x, w, bias, y, d);
    else
        conv2d_forward_serial(x, w, bias, y, d);
}

void conv2d_grad_input_serial(const double* dy, const double* w, double* dx,
                              const Conv2dDims& d) {
    conv2d_grad_input_impl<false>(dy, w, dx, d);
}

void conv2d_grad_input_parallel(const double* dy, const double* w, double* dx,
                                const Conv2dDims& d) {
    conv2d_grad_input_impl<true>(dy, w, dx, d);
}

void conv2d_grad_input(const double* dy, const double* w, double* dx, const Conv2dDims& d) {
    if (active_backend() == Backend::parallel && d.cin * d.h * d.w >= 16384)
        conv2d_grad_input_parallel(dy, w, dx, d);
    else
        conv2d_grad_input_serial(dy, w, dx, d);
}

void conv2d_grad_weight_serial(const double* dy, const double* x, double* dw,
                               const Conv2dDims& d) {
    conv2d_grad_weight_impl<false>(dy, x, dw, d);
}

void conv2d_grad_weight_parallel(const double* dy, const double* x, double* dw,
                                 const Conv2dDims& d) {
    conv2d_grad_weight_impl<true>(dy, x, dw, d);
}

void conv2d_grad_weight(const double* dy, const double* x, double* dw, const Conv2dDims& d) {
    if (active_backend() == Backend::parallel && d.cout * d.cin >= 2048)
        conv2d_grad_weight_parallel(dy, x, dw, d);
    else
        conv2d_grad_weight_serial(dy, x, dw, d);
}

void conv2d_grad_bias(const double* dy, double* db, const Conv2dDims& d) {
    const std::int64_t spatial = d.oh() * d.ow();
    for (std::int64_t co = 0; co < d.cout; ++co) {
        double acc = 0.0;
        const double* dyp = dy + co * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) acc += dyp[i];
        db[co] = acc;
    }
}

}  // namespace mammil::kernels
