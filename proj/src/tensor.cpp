#include "mammil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mammil/kernels.hpp"

namespace mammil {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

std::vector<double>& TensorNode::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

// ---- construction ----------------------------------------------------------

static NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw TensorError("tensor: shape " + shape_str(shape) + " does not match data length " +
                          std::to_string(data.size()));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto count = static_cast<std::size_t>(shape_numel(shape));
    return Tensor(make_leaf(std::move(shape), std::vector<double>(count, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto count = static_cast<std::size_t>(shape_numel(shape));
    return Tensor(make_leaf(std::move(shape), std::vector<double>(count, value), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_leaf(Shape{}, {value}, requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
    auto count = static_cast<std::size_t>(shape_numel(shape));
    std::vector<double> d(count);
    for (auto& v : d) v = rng.uniform(lo, hi);
    return Tensor(make_leaf(std::move(shape), std::move(d), requires_grad));
}

double Tensor::item() const {
    if (numel() != 1)
        throw TensorError("item: tensor has " + std::to_string(numel()) + " elements, expected 1");
    return node_->data[0];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) throw TensorError("grad: no gradient has been accumulated");
    return node_->grad;
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node_->shape;
    n->data = node_->data;  // copy; detached view must not alias tape state
    n->requires_grad = false;
    return Tensor(n);
}

Tensor Tensor::clone() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node_->shape;
    n->data = node_->data;
    n->requires_grad = node_->requires_grad;
    return Tensor(n);
}

// ---- shared helpers --------------------------------------------------------

namespace {

std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size());
    std::int64_t acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

// numpy-style broadcast of two shapes; throws with op context on mismatch
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        const std::int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1)
            throw TensorError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                              shape_str(b) + " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

// strides of `in` viewed under `out` (0 where broadcast)
std::vector<std::int64_t> strides_under(const Shape& in, const Shape& out) {
    auto in_strides = row_major_strides(in);
    std::vector<std::int64_t> st(out.size(), 0);
    const std::size_t off = out.size() - in.size();
    for (std::size_t i = 0; i < in.size(); ++i)
        st[off + i] = in[i] == 1 ? 0 : in_strides[i];
    return st;
}

NodePtr make_result(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
                    std::function<void(TensorNode&)> backward_fn) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

// odometer over `shape` calling fn(out_flat, flat_a, flat_b)
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, Fn&& fn) {
    const std::int64_t total = shape_numel(out);
    std::vector<std::int64_t> idx(out.size(), 0);
    std::int64_t fa = 0, fb = 0;
    for (std::int64_t flat = 0; flat < total; ++flat) {
        fn(flat, fa, fb);
        for (std::size_t ax = out.size(); ax-- > 0;) {
            ++idx[ax];
            fa += sa[ax];
            fb += sb[ax];
            if (idx[ax] < out[ax]) break;
            fa -= sa[ax] * out[ax];
            fb -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

enum class BinKind { add, sub, mul };

Tensor binary_op(const Tensor& ta, const Tensor& tb, BinKind kind, const char* name) {
    const auto& a = ta.node();
    const auto& b = tb.node();
    Shape out = broadcast_shape(a->shape, b->shape, name);
    auto sa = strides_under(a->shape, out);
    auto sb = strides_under(b->shape, out);
    std::vector<double> data(static_cast<std::size_t>(shape_numel(out)));
    for_each_broadcast(out, sa, sb, [&](std::int64_t o, std::int64_t fa, std::int64_t fb) {
        const double x = a->data[fa], y = b->data[fb];
        data[o] = kind == BinKind::add ? x + y : kind == BinKind::sub ? x - y : x * y;
    });
    auto fn = [a, b, out, sa, sb, kind](TensorNode& self) {
        const auto& dy = self.grad;
        if (a->requires_grad) {
            auto& ga = a->grad_buffer();
            for_each_broadcast(out, sa, sb, [&](std::int64_t o, std::int64_t fa, std::int64_t fb) {
                switch (kind) {
                    case BinKind::add:
                    case BinKind::sub: ga[fa] += dy[o]; break;
                    case BinKind::mul: ga[fa] += dy[o] * b->data[fb]; break;
                }
            });
        }
        if (b->requires_grad) {
            auto& gb = b->grad_buffer();
            for_each_broadcast(out, sa, sb, [&](std::int64_t o, std::int64_t fa, std::int64_t fb) {
                switch (kind) {
                    case BinKind::add: gb[fb] += dy[o]; break;
                    case BinKind::sub: gb[fb] -= dy[o]; break;
                    case BinKind::mul: gb[fb] += dy[o] * a->data[fa]; break;
                }
            });
        }
    };
    return Tensor(make_result(std::move(out), std::move(data), {a, b}, std::move(fn)));
}

template <typename FwdFn, typename BwdFn>
Tensor unary_op(const Tensor& tx, FwdFn fwd, BwdFn bwd) {
    // bwd(x_value, y_value) -> local derivative
    const auto& x = tx.node();
    std::vector<double> data(x->data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = fwd(x->data[i]);
    auto fn = [x, bwd](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i)
            gx[i] += self.grad[i] * bwd(x->data[i], self.data[i]);
    };
    return Tensor(make_result(x->shape, std::move(data), {x}, std::move(fn)));
}

void normalize_axes(std::vector<std::int64_t>& axes, std::int64_t rank, const char* op) {
    for (auto& ax : axes) {
        if (ax < 0) ax += rank;
        if (ax < 0 || ax >= rank)
            throw TensorError(std::string(op) + ": axis " + std::to_string(ax) +
                              " out of range for rank " + std::to_string(rank));
    }
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
}

struct ReducePlan {
    Shape out_shape;
    std::vector<std::int64_t> out_stride_for_in_axis;  // 0 on reduced axes
    std::int64_t group_size = 1;
};

ReducePlan plan_reduce(const Shape& in, const std::vector<std::int64_t>& axes, bool keepdims) {
    ReducePlan plan;
    std::vector<bool> reduced(in.size(), false);
    for (auto ax : axes) reduced[static_cast<std::size_t>(ax)] = true;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (reduced[i])
            plan.group_size *= in[i];
        if (!reduced[i])
            plan.out_shape.push_back(in[i]);
        else if (keepdims)
            plan.out_shape.push_back(1);
    }
    auto out_strides = row_major_strides(plan.out_shape);
    plan.out_stride_for_in_axis.assign(in.size(), 0);
    std::size_t oi = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (reduced[i]) {
            if (keepdims) ++oi;  // extent-1 axis, stride contribution stays 0
            continue;
        }
        plan.out_stride_for_in_axis[i] = out_strides[oi];
        ++oi;
    }
    return plan;
}

// map every input flat index to its output group index
template <typename Fn>
void for_each_reduce(const Shape& in, const ReducePlan& plan, Fn&& fn) {
    const std::int64_t total = shape_numel(in);
    std::vector<std::int64_t> idx(in.size(), 0);
    std::int64_t out_flat = 0;
    for (std::int64_t flat = 0; flat < total; ++flat) {
        fn(flat, out_flat);
        for (std::size_t ax = in.size(); ax-- > 0;) {
            ++idx[ax];
            out_flat += plan.out_stride_for_in_axis[ax];
            if (idx[ax] < in[ax]) break;
            out_flat -= plan.out_stride_for_in_axis[ax] * in[ax];
            idx[ax] = 0;
        }
    }
}

std::vector<std::int64_t> all_axes(std::int64_t rank) {
    std::vector<std::int64_t> axes(static_cast<std::size_t>(rank));
    std::iota(axes.begin(), axes.end(), 0);
    return axes;
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::mul, "mul"); }

Tensor relu(const Tensor& x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor abs(const Tensor& x) {
    return unary_op(
        x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v >= 0.0 ? 1.0 : -1.0; });
}

Tensor scale(const Tensor& tx, double s) {
    const auto& x = tx.node();
    std::vector<double> data(x->data.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = x->data[i] * s;
    auto fn = [x, s](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * s;
    };
    return Tensor(make_result(x->shape, std::move(data), {x}, std::move(fn)));
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& ta, const Tensor& tb) {
    const auto& a = ta.node();
    const auto& b = tb.node();
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
        throw TensorError("matmul: incompatible shapes " + shape_str(a->shape) + " x " +
                          shape_str(b->shape));
    const std::int64_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    std::vector<double> data(static_cast<std::size_t>(m * n));
    kernels::matmul(a->data.data(), b->data.data(), data.data(), m, k, n);
    auto fn = [a, b, m, k, n](TensorNode& self) {
        if (a->requires_grad) {
            // dA = dC * B^T
            auto& ga = a->grad_buffer();
            std::vector<double> bt(static_cast<std::size_t>(n * k));
            for (std::int64_t i = 0; i < k; ++i)
                for (std::int64_t j = 0; j < n; ++j) bt[j * k + i] = b->data[i * n + j];
            std::vector<double> da(static_cast<std::size_t>(m * k));
            kernels::matmul(self.grad.data(), bt.data(), da.data(), m, n, k);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += da[i];
        }
        if (b->requires_grad) {
            // dB = A^T * dC
            auto& gb = b->grad_buffer();
            std::vector<double> at(static_cast<std::size_t>(k * m));
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < k; ++j) at[j * m + i] = a->data[i * k + j];
            std::vector<double> db(static_cast<std::size_t>(k * n));
            kernels::matmul(at.data(), self.grad.data(), db.data(), k, m, n);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db[i];
        }
    };
    return Tensor(make_result({m, n}, std::move(data), {a, b}, std::move(fn)));
}

Tensor conv2d(const Tensor& tx, const Tensor& tw, const Tensor& tbias, std::int64_t stride,
              std::int64_t pad) {
    const auto& x = tx.node();
    const auto& w = tw.node();
    if (x->shape.size() != 3 || w->shape.size() != 4)
        throw TensorError("conv2d: expected input [C,H,W] and weight [Co,Ci,Kh,Kw], got " +
                          shape_str(x->shape) + " and " + shape_str(w->shape));
    if (x->shape[0] != w->shape[1])
        throw TensorError("conv2d: input channels " + std::to_string(x->shape[0]) +
                          " != weight channels " + std::to_string(w->shape[1]));
    kernels::Conv2dDims d;
    d.cin = x->shape[0];
    d.h = x->shape[1];
    d.w = x->shape[2];
    d.cout = w->shape[0];
    d.kh = w->shape[2];
    d.kw = w->shape[3];
    d.stride = stride;
    d.pad = pad;
    if (d.oh() < 1 || d.ow() < 1)
        throw TensorError("conv2d: input " + shape_str(x->shape) + " too small for kernel " +
                          shape_str(w->shape) + " stride " + std::to_string(stride) + " pad " +
                          std::to_string(pad));
    NodePtr bias = tbias.defined() ? tbias.node() : nullptr;
    if (bias && (bias->shape.size() != 1 || bias->shape[0] != d.cout))
        throw TensorError("conv2d: bias shape " + shape_str(bias->shape) + " != [" +
                          std::to_string(d.cout) + "]");
    std::vector<double> data(static_cast<std::size_t>(d.cout * d.oh() * d.ow()));
    kernels::conv2d_forward(x->data.data(), w->data.data(), bias ? bias->data.data() : nullptr,
                            data.data(), d);
    std::vector<NodePtr> parents = {x, w};
    if (bias) parents.push_back(bias);
    auto fn = [x, w, bias, d](TensorNode& self) {
        if (x->requires_grad) {
            std::vector<double> dx(x->data.size());
            kernels::conv2d_grad_input(self.grad.data(), w->data.data(), dx.data(), d);
            auto& gx = x->grad_buffer();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += dx[i];
        }
        if (w->requires_grad) {
            std::vector<double> dw(w->data.size());
            kernels::conv2d_grad_weight(self.grad.data(), x->data.data(), dw.data(), d);
            auto& gw = w->grad_buffer();
            for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw[i];
        }
        if (bias && bias->requires_grad) {
            std::vector<double> db(bias->data.size());
            kernels::conv2d_grad_bias(self.grad.data(), db.data(), d);
            auto& gb = bias->grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db[i];
        }
    };
    return Tensor(make_result({d.cout, d.oh(), d.ow()}, std::move(data), std::move(parents),
                              std::move(fn)));
}

// ---- reductions --------------------------------------------------------------

static Tensor reduce_sum_impl(const Tensor& tx, std::vector<std::int64_t> axes, bool keepdims,
                              bool take_mean) {
    const auto& x = tx.node();
    normalize_axes(axes, static_cast<std::int64_t>(x->shape.size()), take_mean ? "mean" : "sum");
    auto plan = plan_reduce(x->shape, axes, keepdims);
    std::vector<double> data(static_cast<std::size_t>(shape_numel(plan.out_shape)), 0.0);
    for_each_reduce(x->shape, plan,
                    [&](std::int64_t flat, std::int64_t out) { data[out] += x->data[flat]; });
    const double inv = take_mean ? 1.0 / static_cast<double>(plan.group_size) : 1.0;
    if (take_mean)
        for (auto& v : data) v *= inv;
    auto fn = [x, plan, inv](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for_each_reduce(x->shape, plan,
                        [&](std::int64_t flat, std::int64_t out) { gx[flat] += self.grad[out] * inv; });
    };
    return Tensor(make_result(plan.out_shape, std::move(data), {x}, std::move(fn)));
}

Tensor sum(const Tensor& x) { return reduce_sum_impl(x, all_axes(x.dim()), false, false); }
Tensor sum(const Tensor& x, const std::vector<std::int64_t>& axes, bool keepdims) {
    return reduce_sum_impl(x, axes, keepdims, false);
}
Tensor mean(const Tensor& x) { return reduce_sum_impl(x, all_axes(x.dim()), false, true); }
Tensor mean(const Tensor& x, const std::vector<std::int64_t>& axes, bool keepdims) {
    return reduce_sum_impl(x, axes, keepdims, true);
}

static Tensor reduce_max_impl(const Tensor& tx, std::vector<std::int64_t> axes, bool keepdims) {
    const auto& x = tx.node();
    normalize_axes(axes, static_cast<std::int64_t>(x->shape.size()), "max");
    auto plan = plan_reduce(x->shape, axes, keepdims);
    const auto out_count = static_cast<std::size_t>(shape_numel(plan.out_shape));
    std::vector<double> data(out_count, -std::numeric_limits<double>::infinity());
    // lowest flat index wins ties: strict > comparison while scanning in flat order
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out_count, -1);
    for_each_reduce(x->shape, plan, [&](std::int64_t flat, std::int64_t out) {
        if (x->data[flat] > data[out]) {
            data[out] = x->data[flat];
            (*argmax)[out] = flat;
        }
    });
    auto fn = [x, argmax](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for (std::size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += self.grad[o];
    };
    return Tensor(make_result(plan.out_shape, std::move(data), {x}, std::move(fn)));
}

Tensor max_reduce(const Tensor& x) { return reduce_max_impl(x, all_axes(x.dim()), false); }
Tensor max_reduce(const Tensor& x, const std::vector<std::int64_t>& axes, bool keepdims) {
    return reduce_max_impl(x, axes, keepdims);
}

std::vector<std::int64_t> argtopk(const Tensor& tx, std::int64_t k) {
    const auto& x = tx.node();
    if (k < 1 || k > x->numel())
        throw TensorError("topk: k=" + std::to_string(k) + " out of range for " +
                          std::to_string(x->numel()) + " elements");
    std::vector<std::int64_t> order(static_cast<std::size_t>(x->numel()));
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](std::int64_t i, std::int64_t j) {
                          if (x->data[i] != x->data[j]) return x->data[i] > x->data[j];
                          return i < j;  // ties resolve to the lowest flat index
                      });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

Tensor topk(const Tensor& tx, std::int64_t k) {
    const auto& x = tx.node();
    auto idx = std::make_shared<std::vector<std::int64_t>>(argtopk(tx, k));
    std::vector<double> data(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = x->data[(*idx)[i]];
    auto fn = [x, idx](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for (std::size_t i = 0; i < idx->size(); ++i) gx[(*idx)[i]] += self.grad[i];
    };
    return Tensor(make_result({k}, std::move(data), {x}, std::move(fn)));
}

// ---- softmax ----------------------------------------------------------------

Tensor softmax(const Tensor& tx, std::int64_t axis) {
    const auto& x = tx.node();
    const auto rank = static_cast<std::int64_t>(x->shape.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw TensorError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(x->shape));
    const std::int64_t extent = x->shape[static_cast<std::size_t>(axis)];
    std::int64_t inner = 1, outer = 1;
    for (std::int64_t i = axis + 1; i < rank; ++i) inner *= x->shape[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < axis; ++i) outer *= x->shape[static_cast<std::size_t>(i)];
    std::vector<double> data(x->data.size());
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * extent * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t e = 0; e < extent; ++e)
                mx = std::max(mx, x->data[base + e * inner]);
            double z = 0.0;
            for (std::int64_t e = 0; e < extent; ++e) {
                const double v = std::exp(x->data[base + e * inner] - mx);
                data[base + e * inner] = v;
                z += v;
            }
            for (std::int64_t e = 0; e < extent; ++e) data[base + e * inner] /= z;
        }
    }
    auto fn = [x, extent, inner, outer](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * extent * inner + in;
                double dot = 0.0;
                for (std::int64_t e = 0; e < extent; ++e) {
                    const std::int64_t i = base + e * inner;
                    dot += self.grad[i] * self.data[i];
                }
                for (std::int64_t e = 0; e < extent; ++e) {
                    const std::int64_t i = base + e * inner;
                    gx[i] += self.data[i] * (self.grad[i] - dot);
                }
            }
        }
    };
    return Tensor(make_result(x->shape, std::move(data), {x}, std::move(fn)));
}

// ---- shape ops ----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& xs, std::int64_t axis) {
    if (xs.empty()) throw TensorError("concat: empty input list");
    const auto rank = static_cast<std::int64_t>(xs[0].dim());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw TensorError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                          std::to_string(rank));
    Shape out = xs[0].shape();
    std::int64_t axis_total = 0;
    for (const auto& t : xs) {
        if (t.dim() != rank)
            throw TensorError("concat: rank mismatch " + shape_str(t.shape()) + " vs " +
                              shape_str(xs[0].shape()));
        for (std::int64_t i = 0; i < rank; ++i)
            if (i != axis && t.shape()[static_cast<std::size_t>(i)] != out[static_cast<std::size_t>(i)])
                throw TensorError("concat: shape mismatch " + shape_str(t.shape()) + " vs " +
                                  shape_str(xs[0].shape()) + " outside axis " +
                                  std::to_string(axis));
        axis_total += t.shape()[static_cast<std::size_t>(axis)];
    }
    out[static_cast<std::size_t>(axis)] = axis_total;
    std::int64_t inner = 1, outer = 1;
    for (std::int64_t i = axis + 1; i < rank; ++i) inner *= out[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < axis; ++i) outer *= out[static_cast<std::size_t>(i)];
    std::vector<double> data(static_cast<std::size_t>(shape_numel(out)));
    std::vector<NodePtr> parents;
    parents.reserve(xs.size());
    std::int64_t offset = 0;
    std::vector<std::int64_t> offsets;
    for (const auto& t : xs) {
        const std::int64_t ext = t.shape()[static_cast<std::size_t>(axis)];
        offsets.push_back(offset);
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* src = t.data().data() + o * ext * inner;
            double* dst = data.data() + (o * axis_total + offset) * inner;
            std::copy(src, src + ext * inner, dst);
        }
        offset += ext;
        parents.push_back(t.node());
    }
    auto fn = [parents, offsets, axis_total, inner, outer, axis](TensorNode& self) {
        for (std::size_t pi = 0; pi < parents.size(); ++pi) {
            const auto& p = parents[pi];
            if (!p->requires_grad) continue;
            const std::int64_t ext = p->shape[static_cast<std::size_t>(axis)];
            auto& g = p->grad_buffer();
            for (std::int64_t o = 0; o < outer; ++o) {
                const double* src = self.grad.data() + (o * axis_total + offsets[pi]) * inner;
                double* dst = g.data() + o * ext * inner;
                for (std::int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
            }
        }
    };
    return Tensor(make_result(std::move(out), std::move(data), std::move(parents), std::move(fn)));
}

Tensor reshape(const Tensor& tx, Shape shape) {
    const auto& x = tx.node();
    if (shape_numel(shape) != x->numel())
        throw TensorError("reshape: cannot view " + shape_str(x->shape) + " as " +
                          shape_str(shape));
    std::vector<double> data = x->data;
    auto fn = [x](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    };
    return Tensor(make_result(std::move(shape), std::move(data), {x}, std::move(fn)));
}

Tensor transpose2d(const Tensor& tx) {
    const auto& x = tx.node();
    if (x->shape.size() != 2)
        throw TensorError("transpose2d: expected rank 2, got " + shape_str(x->shape));
    const std::int64_t r = x->shape[0], c = x->shape[1];
    std::vector<double> data(x->data.size());
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) data[j * r + i] = x->data[i * c + j];
    auto fn = [x, r, c](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
    };
    return Tensor(make_result({c, r}, std::move(data), {x}, std::move(fn)));
}

Tensor narrow(const Tensor& tx, std::int64_t axis, std::int64_t start, std::int64_t len) {
    const auto& x = tx.node();
    const auto rank = static_cast<std::int64_t>(x->shape.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank)
        throw TensorError("narrow: axis " + std::to_string(axis) + " out of range");
    const std::int64_t ext = x->shape[static_cast<std::size_t>(axis)];
    if (start < 0 || len < 1 || start + len > ext)
        throw TensorError("narrow: range [" + std::to_string(start) + "," +
                          std::to_string(start + len) + ") out of extent " + std::to_string(ext));
    std::int64_t inner = 1, outer = 1;
    for (std::int64_t i = axis + 1; i < rank; ++i) inner *= x->shape[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < axis; ++i) outer *= x->shape[static_cast<std::size_t>(i)];
    Shape out = x->shape;
    out[static_cast<std::size_t>(axis)] = len;
    std::vector<double> data(static_cast<std::size_t>(outer * len * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
        const double* src = x->data.data() + (o * ext + start) * inner;
        std::copy(src, src + len * inner, data.data() + o * len * inner);
    }
    auto fn = [x, ext, start, len, inner, outer](TensorNode& self) {
        if (!x->requires_grad) return;
        auto& gx = x->grad_buffer();
        for (std::int64_t o = 0; o < outer; ++o) {
            double* dst = gx.data() + (o * ext + start) * inner;
            const double* src = self.grad.data() + o * len * inner;
            for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    };
    return Tensor(make_result(std::move(out), std::move(data), {x}, std::move(fn)));
}

Tensor stack0(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw TensorError("stack0: empty input list");
    std::vector<Tensor> rows;
    rows.reserve(xs.size());
    for (const auto& t : xs) {
        Shape s = t.shape();
        s.insert(s.begin(), 1);
        rows.push_back(reshape(t, s));
    }
    return concat(rows, 0);
}

// ---- dispatcher -----------------------------------------------------------------

std::string op_name(OpKind kind) {
    switch (kind) {
        case OpKind::matmul: return "matmul";
        case OpKind::conv2d: return "conv2d";
        case OpKind::relu: return "relu";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::softmax: return "softmax";
        case OpKind::exp: return "exp";
        case OpKind::log: return "log";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::mul: return "mul";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::max: return "max";
        case OpKind::topk: return "topk";
        case OpKind::concat: return "concat";
        case OpKind::abs: return "abs";
        case OpKind::scalar_scale: return "scalar-scale";
    }
    return "?";
}

static void expect_arity(OpKind kind, const std::vector<Tensor>& in, std::size_t n) {
    if (in.size() != n)
        throw TensorError(op_name(kind) + ": expected " + std::to_string(n) + " inputs, got " +
                          std::to_string(in.size()));
}

Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
    switch (kind) {
        case OpKind::matmul:
            expect_arity(kind, inputs, 2);
            return matmul(inputs[0], inputs[1]);
        case OpKind::conv2d:
            if (inputs.size() == 2) return conv2d(inputs[0], inputs[1], Tensor(), attrs.stride, attrs.pad);
            expect_arity(kind, inputs, 3);
            return conv2d(inputs[0], inputs[1], inputs[2], attrs.stride, attrs.pad);
        case OpKind::relu:
            expect_arity(kind, inputs, 1);
            return relu(inputs[0]);
        case OpKind::tanh:
            expect_arity(kind, inputs, 1);
            return tanh(inputs[0]);
        case OpKind::sigmoid:
            expect_arity(kind, inputs, 1);
            return sigmoid(inputs[0]);
        case OpKind::softmax:
            expect_arity(kind, inputs, 1);
            return softmax(inputs[0], attrs.axes.empty() ? -1 : attrs.axes[0]);
        case OpKind::exp:
            expect_arity(kind, inputs, 1);
            return exp(inputs[0]);
        case OpKind::log:
            expect_arity(kind, inputs, 1);
            return log(inputs[0]);
        case OpKind::add:
            expect_arity(kind, inputs, 2);
            return add(inputs[0], inputs[1]);
        case OpKind::sub:
            expect_arity(kind, inputs, 2);
            return sub(inputs[0], inputs[1]);
        case OpKind::mul:
            expect_arity(kind, inputs, 2);
            return mul(inputs[0], inputs[1]);
        case OpKind::sum:
            expect_arity(kind, inputs, 1);
            return attrs.axes.empty() ? sum(inputs[0]) : sum(inputs[0], attrs.axes, attrs.keepdims);
        case OpKind::mean:
            expect_arity(kind, inputs, 1);
            return attrs.axes.empty() ? mean(inputs[0]) : mean(inputs[0], attrs.axes, attrs.keepdims);
        case OpKind::max:
            expect_arity(kind, inputs, 1);
            return attrs.axes.empty() ? max_reduce(inputs[0])
                                      : max_reduce(inputs[0], attrs.axes, attrs.keepdims);
        case OpKind::topk:
            expect_arity(kind, inputs, 1);
            return topk(inputs[0], attrs.k);
        case OpKind::concat:
            return concat(inputs, attrs.axes.empty() ? 0 : attrs.axes[0]);
        case OpKind::abs:
            expect_arity(kind, inputs, 1);
            return abs(inputs[0]);
        case OpKind::scalar_scale:
            expect_arity(kind, inputs, 1);
            return scale(inputs[0], attrs.scalar);
    }
    throw TensorError("apply: unknown op kind");
}

// ---- reverse pass -----------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw TensorError("backward: loss must be a defined scalar, got " +
                          (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
    // iterative post-order over the recorded graph
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

}  // namespace mammil
