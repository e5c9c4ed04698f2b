#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

// Dense float32 tensors with reverse-mode autodiff. One tape per thread;
// primitives record themselves when any operand requires grad, backward()
// replays the tape in reverse and clears it.
namespace rgauge {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until backward touches this tensor
    bool requires_grad = false;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
    }
};

struct TensorFactory;
}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> data,
                            bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return impl_->numel(); }
    int64_t dim(size_t i) const { return impl_->shape[i]; }

    std::span<const float> data() const { return impl_->data; }
    std::span<float> data() { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on) { impl_->requires_grad = on; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::span<const float> grad() const;
    void zero_grad();

    // Value of a scalar (1-element) tensor.
    float item() const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
        : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend struct detail::TensorFactory;
};

// Per-thread record of executed primitives, in execution (topological) order.
class Tape {
public:
    struct Node {
        std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
        std::shared_ptr<detail::TensorImpl> output;
        std::function<void()> backward_fn;  // accumulates into input grads
        std::string op;
    };

    static Tape& active();

    size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    void clear() { nodes_.clear(); }
    void record(Node node) { nodes_.push_back(std::move(node)); }

    // Runs reverse accumulation from `loss` and clears the tape.
    // Returns the number of nodes visited.
    size_t run_backward(Tensor& loss);

private:
    std::vector<Node> nodes_;
};

// --- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// x: [N,C,H,W], w: [F,C,kh,kw], bias: [F] (may be undefined Tensor for none)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride = 1, int padding = 0);
Tensor relu(const Tensor& x);
Tensor max_pool2d(const Tensor& x, int kernel = 2, int stride = 2);
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or b = row bias
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, float k);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor sum(const Tensor& x);  // scalar, accumulated in double
// Mean cross-entropy of row-wise softmax(logits) against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels);

// Row-wise argmax of a [N,K] tensor.
std::vector<int> argmax_rows(const Tensor& logits);

// Reverse pass from a scalar loss; fills grad of every requires_grad tensor
// reachable on the tape, then clears the tape. Returns nodes visited.
size_t backward(Tensor& loss);

// --- SGD ------------------------------------------------------------------

// Velocity buffers keyed by parameter identity.
class SgdState {
public:
    std::vector<float>& velocity_for(const Tensor& param);

private:
    std::unordered_map<const void*, std::vector<float>> velocity_;
};

// v <- momentum*v + (grad + weight_decay*param); param <- param - lr*v.
// Zeroes parameter grads afterwards. Throws if any param lacks a grad.
void sgd_step(std::vector<Tensor>& params, SgdState& state, float lr,
              float momentum, float weight_decay);

}  // namespace rgauge
