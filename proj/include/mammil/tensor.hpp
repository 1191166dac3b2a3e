#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mammil/errors.hpp"
#include "mammil/rng.hpp"

namespace mammil {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// One cell of the recorded computation. Result nodes carry their parents and
// a closure that routes the incoming gradient to them; leaves carry neither.
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool is_leaf() const { return !backward_fn; }
    std::vector<double>& grad_buffer();  // allocate zeros on demand
};

// Value-semantic handle onto a shared node. Copies alias the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi,
                               bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t dim() const { return static_cast<std::int64_t>(node_->shape.size()); }
    std::int64_t numel() const { return node_->numel(); }
    double item() const;

    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& raw_data() { return node_->data; }
    double at(std::int64_t flat) const { return node_->data[static_cast<std::size_t>(flat)]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    std::vector<double>& grad_buffer() { return node_->grad_buffer(); }
    void zero_grad();

    Tensor detach() const;  // shares nothing with the graph; same values
    Tensor clone() const;   // deep copy of values, fresh leaf

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

// ---- recorded operations -------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, singleton broadcast
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::int64_t stride, std::int64_t pad);  // bias may be undefined
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x, std::int64_t axis);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor scale(const Tensor& x, double s);
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, const std::vector<std::int64_t>& axes, bool keepdims = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, const std::vector<std::int64_t>& axes, bool keepdims = false);
Tensor max_reduce(const Tensor& x);
Tensor max_reduce(const Tensor& x, const std::vector<std::int64_t>& axes, bool keepdims = false);
Tensor topk(const Tensor& x, std::int64_t k);  // over flattened input, descending
std::vector<std::int64_t> argtopk(const Tensor& x, std::int64_t k);  // companion, no grad
Tensor concat(const std::vector<Tensor>& xs, std::int64_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose2d(const Tensor& x);
Tensor narrow(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t len);
Tensor stack0(const std::vector<Tensor>& xs);  // [D...] each -> [N, D...]

// ---- uniform dispatcher (one entry per recorded op kind) ------------------

enum class OpKind {
    matmul, conv2d, relu, tanh, sigmoid, softmax, exp, log,
    add, sub, mul, sum, mean, max, topk, concat, abs, scalar_scale,
};

struct OpAttrs {
    std::vector<std::int64_t> axes;  // reductions / softmax / concat axis in axes[0]
    std::int64_t k = 0;              // topk
    std::int64_t stride = 1;         // conv2d
    std::int64_t pad = 0;            // conv2d
    double scalar = 1.0;             // scalar_scale
    bool keepdims = false;
};

Tensor apply(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs = {});
std::string op_name(OpKind kind);

// ---- reverse pass ----------------------------------------------------------

// Accumulates d loss / d leaf into every reachable grad-requiring leaf.
// Repeated calls without zero_grad keep accumulating.
void backward(const Tensor& loss);

}  // namespace mammil
