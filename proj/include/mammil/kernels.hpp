#pragma once

#include <cstdint>
#include <string>

// Dense numeric kernels behind the tensor ops. Each kernel exists in a
// serial reference version and an OpenMP version. Both iterate reductions
// in the same fixed order per output element, so results are bitwise
// identical regardless of backend or thread count; tests and the
// bench_kernels tool rely on that.
namespace mammil::kernels {

enum class Backend { serial, parallel };

// Process-wide switch. Defaults to parallel; the MAMMIL_KERNEL_BACKEND
// environment variable ("serial"/"parallel") overrides at startup.
Backend active_backend();
void set_backend(Backend b);
std::string backend_name(Backend b);

// C[m,n] = sum_k A[m,k] * B[k,n], row-major.
void matmul_serial(const double* a, const double* b, double* c,
                   std::int64_t m, std::int64_t k, std::int64_t n);
void matmul_parallel(const double* a, const double* b, double* c,
                     std::int64_t m, std::int64_t k, std::int64_t n);
void matmul(const double* a, const double* b, double* c,
            std::int64_t m, std::int64_t k, std::int64_t n);

struct Conv2dDims {
    std::int64_t cin = 0, h = 0, w = 0;     // input
    std::int64_t cout = 0, kh = 0, kw = 0;  // weight
    std::int64_t stride = 1, pad = 0;
    std::int64_t oh() const { return (h + 2 * pad - kh) / stride + 1; }
    std::int64_t ow() const { return (w + 2 * pad - kw) / stride + 1; }
};

// x: [cin,h,w], w: [cout,cin,kh,kw], bias: [cout] or nullptr, y: [cout,oh,ow]
void conv2d_forward_serial(const double* x, const double* w, const double* bias,
                           double* y, const Conv2dDims& d);
void conv2d_forward_parallel(const double* x, const double* w, const double* bias,
                             double* y, const Conv2dDims& d);
void conv2d_forward(const double* x, const double* w, const double* bias,
                    double* y, const Conv2dDims& d);

// Gather-form gradients: each output element owns its reduction, so the
// parallel version stays deterministic.
void conv2d_grad_input_serial(const double* dy, const double* w, double* dx,
                              const Conv2dDims& d);
void conv2d_grad_input_parallel(const double* dy, const double* w, double* dx,
                                const Conv2dDims& d);
void conv2d_grad_input(const double* dy, const double* w, double* dx,
                       const Conv2dDims& d);

void conv2d_grad_weight_serial(const double* dy, const double* x, double* dw,
                               const Conv2dDims& d);
void conv2d_grad_weight_parallel(const double* dy, const double* x, double* dw,
                                 const Conv2dDims& d);
void conv2d_grad_weight(const double* dy, const double* x, double* dw,
                        const Conv2dDims& d);

void conv2d_grad_bias(const double* dy, double* db, const Conv2dDims& d);

}  // namespace mammil::kernels
