#include "rgauge/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace rgauge {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a,
                              const Shape& b) {
    throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) +
                                " vs " + shape_str(b));
}

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape,
                                              std::vector<float> data,
                                              bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                    " does not match data length " +
                                    std::to_string(data.size()));
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return impl;
}

}  // namespace

namespace detail {
struct TensorFactory {
    static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) {
        return Tensor(std::move(impl));
    }
};
}  // namespace detail

namespace {

using TensorAccess = detail::TensorFactory;

Tensor make_output(Shape shape, std::vector<float> data, bool requires_grad) {
    return TensorAccess::wrap(
        make_impl(std::move(shape), std::move(data), requires_grad));
}

// A = [m,k], B = [k,n], C += or = A*B depending on beta.
void sgemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
           const float* a, int64_t lda, const float* b, int64_t ldb, float* c,
           int64_t ldc, float beta) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), 1.0f, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
                static_cast<int>(ldc));
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const Tensor* t : ts)
        if (t->defined() && t->requires_grad()) return true;
    return false;
}

void record_if_needed(std::initializer_list<const Tensor*> inputs,
                      const Tensor& output, std::function<void()> backward_fn,
                      const char* op) {
    if (!output.requires_grad()) return;
    Tape::Node node;
    for (const Tensor* t : inputs)
        if (t->defined()) node.inputs.push_back(t->impl_ptr());
    node.output = output.impl_ptr();
    node.backward_fn = std::move(backward_fn);
    node.op = op;
    Tape::active().record(std::move(node));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return TensorAccess::wrap(make_impl(
        std::move(shape), std::vector<float>(static_cast<size_t>(n), 0.0f),
        requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    auto n = shape_numel(shape);
    return TensorAccess::wrap(make_impl(
        std::move(shape), std::vector<float>(static_cast<size_t>(n), value),
        requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data,
                         bool requires_grad) {
    return TensorAccess::wrap(
        make_impl(std::move(shape), std::move(data), requires_grad));
}

std::span<const float> Tensor::grad() const {
    if (!impl_ || impl_->grad.empty())
        throw std::logic_error("tensor: grad accessed before backward");
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_ && !impl_->grad.empty())
        std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

float Tensor::item() const {
    if (numel() != 1)
        throw std::logic_error("tensor: item() on non-scalar shape " +
                               shape_str(shape()));
    return impl_->data[0];
}

Tape& Tape::active() {
    static thread_local Tape tape;
    return tape;
}

size_t Tape::run_backward(Tensor& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(loss.shape()));
    if (nodes_.empty())
        throw std::logic_error("backward: tape is empty");
    auto* limpl = loss.impl();
    limpl->ensure_grad();
    limpl->grad[0] = 1.0f;
    size_t visited = 0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        ++visited;
        if (!it->output->grad.empty()) it->backward_fn();
    }
    clear();
    return visited;
}

size_t backward(Tensor& loss) { return Tape::active().run_backward(loss); }

// --- matmul ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 ||
        a.dim(1) != b.dim(0))
        shape_error("matmul", a.shape(), b.shape());
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = make_output({m, n},
                             std::vector<float>(static_cast<size_t>(m * n)),
                             any_requires_grad({&a, &b}));
    sgemm(false, false, m, n, k, a.data().data(), k, b.data().data(), n,
          out.data().data(), n, 0.0f);

    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    record_if_needed({&a, &b}, out,
        [ai, bi, oi, m, n, k] {
            const float* go = oi->grad.data();
            if (ai->requires_grad) {
                ai->ensure_grad();
                // dA += dC * B^T
                sgemm(false, true, m, k, n, go, n, bi->data.data(), n,
                      ai->grad.data(), k, 1.0f);
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                // dB += A^T * dC
                sgemm(true, false, k, n, m, ai->data.data(), k, go, n,
                      bi->grad.data(), n, 1.0f);
            }
        },
        "matmul");
    return out;
}

// --- conv2d (im2col + gemm) ----------------------------------------------

namespace {

struct ConvDims {
    int64_t n, c, h, w, f, kh, kw, oh, ow;
    int stride, padding;
};

// cols: [c*kh*kw, n*oh*ow]
void im2col(const float* x, const ConvDims& d, float* cols) {
    const int64_t patch = d.c * d.kh * d.kw;
    const int64_t positions = d.n * d.oh * d.ow;
    for (int64_t row = 0; row < patch; ++row) {
        const int64_t c = row / (d.kh * d.kw);
        const int64_t ki = (row / d.kw) % d.kh;
        const int64_t kj = row % d.kw;
        float* dst = cols + row * positions;
        for (int64_t n = 0; n < d.n; ++n) {
            const float* img = x + (n * d.c + c) * d.h * d.w;
            for (int64_t oh = 0; oh < d.oh; ++oh) {
                const int64_t ih = oh * d.stride - d.padding + ki;
                for (int64_t ow = 0; ow < d.ow; ++ow) {
                    const int64_t iw = ow * d.stride - d.padding + kj;
                    *dst++ = (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w)
                                 ? img[ih * d.w + iw]
                                 : 0.0f;
                }
            }
        }
    }
}

void col2im_accumulate(const float* cols, const ConvDims& d, float* dx) {
    const int64_t patch = d.c * d.kh * d.kw;
    const int64_t positions = d.n * d.oh * d.ow;
    for (int64_t row = 0; row < patch; ++row) {
        const int64_t c = row / (d.kh * d.kw);
        const int64_t ki = (row / d.kw) % d.kh;
        const int64_t kj = row % d.kw;
        const float* src = cols + row * positions;
        for (int64_t n = 0; n < d.n; ++n) {
            float* img = dx + (n * d.c + c) * d.h * d.w;
            for (int64_t oh = 0; oh < d.oh; ++oh) {
                const int64_t ih = oh * d.stride - d.padding + ki;
                for (int64_t ow = 0; ow < d.ow; ++ow, ++src) {
                    const int64_t iw = ow * d.stride - d.padding + kj;
                    if (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w)
                        img[ih * d.w + iw] += *src;
                }
            }
        }
    }
}

// [f, n*oh*ow] (position-major per image) <-> [n, f, oh, ow]
void scatter_rows_to_nchw(const float* mat, const ConvDims& d, float* out) {
    const int64_t hw = d.oh * d.ow;
    for (int64_t f = 0; f < d.f; ++f)
        for (int64_t n = 0; n < d.n; ++n)
            std::copy_n(mat + f * d.n * hw + n * hw, hw,
                        out + (n * d.f + f) * hw);
}

void gather_nchw_to_rows(const float* x, const ConvDims& d, float* mat) {
    const int64_t hw = d.oh * d.ow;
    for (int64_t f = 0; f < d.f; ++f)
        for (int64_t n = 0; n < d.n; ++n)
            std::copy_n(x + (n * d.f + f) * hw, hw,
                        mat + f * d.n * hw + n * hw);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              int stride, int padding) {
    if (x.shape().size() != 4 || w.shape().size() != 4 ||
        x.dim(1) != w.dim(1))
        shape_error("conv2d", x.shape(), w.shape());
    if (bias.defined() && bias.numel() != w.dim(0))
        shape_error("conv2d bias", bias.shape(), w.shape());
    ConvDims d;
    d.n = x.dim(0); d.c = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
    d.f = w.dim(0); d.kh = w.dim(2); d.kw = w.dim(3);
    d.stride = stride; d.padding = padding;
    d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
    d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
    if (d.oh <= 0 || d.ow <= 0)
        shape_error("conv2d: kernel larger than padded input", x.shape(),
                    w.shape());

    const int64_t patch = d.c * d.kh * d.kw;
    const int64_t positions = d.n * d.oh * d.ow;
    auto cols = std::make_shared<std::vector<float>>(
        static_cast<size_t>(patch * positions));
    im2col(x.data().data(), d, cols->data());

    std::vector<float> out_mat(static_cast<size_t>(d.f * positions));
    sgemm(false, false, d.f, positions, patch, w.data().data(), patch,
          cols->data(), positions, out_mat.data(), positions, 0.0f);

    Tensor out = make_output(
        {d.n, d.f, d.oh, d.ow},
        std::vector<float>(static_cast<size_t>(d.n * d.f * d.oh * d.ow)),
        any_requires_grad({&x, &w, &bias}));
    scatter_rows_to_nchw(out_mat.data(), d, out.data().data());
    if (bias.defined()) {
        float* o = out.data().data();
        const float* bv = bias.data().data();
        const int64_t hw = d.oh * d.ow;
        for (int64_t n = 0; n < d.n; ++n)
            for (int64_t f = 0; f < d.f; ++f) {
                float* p = o + (n * d.f + f) * hw;
                for (int64_t i = 0; i < hw; ++i) p[i] += bv[f];
            }
    }

    auto xi = x.impl_ptr(), wi = w.impl_ptr(), oi = out.impl_ptr();
    auto bi = bias.defined() ? bias.impl_ptr() : nullptr;
    record_if_needed({&x, &w, &bias}, out,
        [xi, wi, bi, oi, d, cols, patch, positions] {
            std::vector<float> grad_mat(
                static_cast<size_t>(d.f * positions));
            gather_nchw_to_rows(oi->grad.data(), d, grad_mat.data());
            if (wi->requires_grad) {
                wi->ensure_grad();
                // dW += dOut * cols^T
                sgemm(false, true, d.f, patch, positions, grad_mat.data(),
                      positions, cols->data(), positions, wi->grad.data(),
                      patch, 1.0f);
            }
            if (bi && bi->requires_grad) {
                bi->ensure_grad();
                for (int64_t f = 0; f < d.f; ++f) {
                    double acc = 0.0;
                    const float* g = grad_mat.data() + f * positions;
                    for (int64_t i = 0; i < positions; ++i) acc += g[i];
                    bi->grad[static_cast<size_t>(f)] +=
                        static_cast<float>(acc);
                }
            }
            if (xi->requires_grad) {
                xi->ensure_grad();
                std::vector<float> dcols(
                    static_cast<size_t>(patch * positions));
                // dcols = W^T * dOut
                sgemm(true, false, patch, positions, d.f, wi->data.data(),
                      patch, grad_mat.data(), positions, dcols.data(),
                      positions, 0.0f);
                col2im_accumulate(dcols.data(), d, xi->grad.data());
            }
        },
        "conv2d");
    return out;
}

// --- elementwise ----------------------------------------------------------

Tensor relu(const Tensor& x) {
    std::vector<float> out(x.data().begin(), x.data().end());
    for (float& v : out) v = v > 0.0f ? v : 0.0f;
    Tensor result =
        make_output(x.shape(), std::move(out), x.requires_grad());
    auto xi = x.impl_ptr(), oi = result.impl_ptr();
    record_if_needed({&x}, result,
        [xi, oi] {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            const size_t n = xi->data.size();
            for (size_t i = 0; i < n; ++i)
                if (xi->data[i] > 0.0f) xi->grad[i] += oi->grad[i];
        },
        "relu");
    return result;
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride) {
    if (x.shape().size() != 4)
        throw std::invalid_argument("max_pool2d: expected 4-d input, got " +
                                    shape_str(x.shape()));
    const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = (h - kernel) / stride + 1;
    const int64_t ow = (w - kernel) / stride + 1;
    std::vector<float> out(static_cast<size_t>(n * c * oh * ow));
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
    const float* xv = x.data().data();
    size_t oidx = 0;
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const float* plane = xv + nc * h * w;
        for (int64_t i = 0; i < oh; ++i)
            for (int64_t j = 0; j < ow; ++j, ++oidx) {
                float best = -std::numeric_limits<float>::infinity();
                int64_t best_at = 0;
                for (int64_t ki = 0; ki < kernel; ++ki)
                    for (int64_t kj = 0; kj < kernel; ++kj) {
                        const int64_t at =
                            (i * stride + ki) * w + (j * stride + kj);
                        if (plane[at] > best) { best = plane[at]; best_at = at; }
                    }
                out[oidx] = best;
                (*argmax)[oidx] = nc * h * w + best_at;
            }
    }
    Tensor result =
        make_output({n, c, oh, ow}, std::move(out), x.requires_grad());
    auto xi = x.impl_ptr(), oi = result.impl_ptr();
    record_if_needed({&x}, result,
        [xi, oi, argmax] {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (size_t i = 0; i < argmax->size(); ++i)
                xi->grad[static_cast<size_t>((*argmax)[i])] += oi->grad[i];
        },
        "max_pool2d");
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
    const bool bias_add = a.shape().size() == 2 && b.shape().size() == 1 &&
                          b.dim(0) == a.dim(1);
    if (!bias_add && a.shape() != b.shape())
        shape_error("add", a.shape(), b.shape());
    std::vector<float> out(a.data().begin(), a.data().end());
    if (bias_add) {
        const int64_t rows = a.dim(0), cols = a.dim(1);
        const float* bv = b.data().data();
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t cidx = 0; cidx < cols; ++cidx)
                out[static_cast<size_t>(r * cols + cidx)] += bv[cidx];
    } else {
        const float* bv = b.data().data();
        for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    }
    Tensor result =
        make_output(a.shape(), std::move(out), any_requires_grad({&a, &b}));
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = result.impl_ptr();
    record_if_needed({&a, &b}, result,
        [ai, bi, oi, bias_add] {
            const auto& go = oi->grad;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < go.size(); ++i) ai->grad[i] += go[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                if (bias_add) {
                    const int64_t cols = bi->numel();
                    const int64_t rows = ai->numel() / cols;
                    for (int64_t cidx = 0; cidx < cols; ++cidx) {
                        double acc = 0.0;
                        for (int64_t r = 0; r < rows; ++r)
                            acc += go[static_cast<size_t>(r * cols + cidx)];
                        bi->grad[static_cast<size_t>(cidx)] +=
                            static_cast<float>(acc);
                    }
                } else {
                    for (size_t i = 0; i < go.size(); ++i)
                        bi->grad[i] += go[i];
                }
            }
        },
        "add");
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
    std::vector<float> out(a.data().begin(), a.data().end());
    const float* bv = b.data().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    Tensor result =
        make_output(a.shape(), std::move(out), any_requires_grad({&a, &b}));
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = result.impl_ptr();
    record_if_needed({&a, &b}, result,
        [ai, bi, oi] {
            const auto& go = oi->grad;
            if (ai->requires_grad) {
                ai->ensure_grad();
                for (size_t i = 0; i < go.size(); ++i)
                    ai->grad[i] += go[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                for (size_t i = 0; i < go.size(); ++i)
                    bi->grad[i] += go[i] * ai->data[i];
            }
        },
        "mul");
    return result;
}

Tensor scale(const Tensor& x, float k) {
    std::vector<float> out(x.data().begin(), x.data().end());
    for (float& v : out) v *= k;
    Tensor result =
        make_output(x.shape(), std::move(out), x.requires_grad());
    auto xi = x.impl_ptr(), oi = result.impl_ptr();
    record_if_needed({&x}, result,
        [xi, oi, k] {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (size_t i = 0; i < oi->grad.size(); ++i)
                xi->grad[i] += oi->grad[i] * k;
        },
        "scale");
    return result;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        shape_error("reshape", x.shape(), new_shape);
    Tensor result = make_output(
        std::move(new_shape),
        std::vector<float>(x.data().begin(), x.data().end()),
        x.requires_grad());
    auto xi = x.impl_ptr(), oi = result.impl_ptr();
    record_if_needed({&x}, result,
        [xi, oi] {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            for (size_t i = 0; i < oi->grad.size(); ++i)
                xi->grad[i] += oi->grad[i];
        },
        "reshape");
    return result;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (float v : x.data()) acc += v;
    Tensor result = make_output({1}, {static_cast<float>(acc)},
                                x.requires_grad());
    auto xi = x.impl_ptr(), oi = result.impl_ptr();
    record_if_needed({&x}, result,
        [xi, oi] {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            const float g = oi->grad[0];
            for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += g;
        },
        "sum");
    return result;
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels) {
    if (logits.shape().size() != 2)
        throw std::invalid_argument(
            "softmax_cross_entropy: expected [N,K] logits, got " +
            shape_str(logits.shape()));
    const int64_t n = logits.dim(0), k = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n)
        throw std::invalid_argument(
            "softmax_cross_entropy: " + std::to_string(labels.size()) +
            " labels for " + std::to_string(n) + " rows");
    for (int label : labels)
        if (label < 0 || label >= k)
            throw std::invalid_argument(
                "softmax_cross_entropy: label " + std::to_string(label) +
                " outside 0.." + std::to_string(k - 1));

    auto probs = std::make_shared<std::vector<float>>(
        static_cast<size_t>(n * k));
    const float* lv = logits.data().data();
    double loss_acc = 0.0;
    for (int64_t r = 0; r < n; ++r) {
        const float* row = lv + r * k;
        float m = row[0];
        for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < k; ++j)
            denom += std::exp(static_cast<double>(row[j] - m));
        const double log_denom = std::log(denom);
        for (int64_t j = 0; j < k; ++j)
            (*probs)[static_cast<size_t>(r * k + j)] = static_cast<float>(
                std::exp(static_cast<double>(row[j] - m)) / denom);
        loss_acc -= static_cast<double>(row[labels[static_cast<size_t>(r)]] -
                                        m) - log_denom;
    }
    Tensor result =
        make_output({1}, {static_cast<float>(loss_acc / static_cast<double>(n))},
                    logits.requires_grad());
    auto li = logits.impl_ptr(), oi = result.impl_ptr();
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    record_if_needed({&logits}, result,
        [li, oi, probs, labels_copy, n, k] {
            if (!li->requires_grad) return;
            li->ensure_grad();
            const float g = oi->grad[0] / static_cast<float>(n);
            for (int64_t r = 0; r < n; ++r) {
                const int y = (*labels_copy)[static_cast<size_t>(r)];
                for (int64_t j = 0; j < k; ++j) {
                    const size_t at = static_cast<size_t>(r * k + j);
                    float d = (*probs)[at];
                    if (j == y) d -= 1.0f;
                    li->grad[at] += g * d;
                }
            }
        },
        "softmax_cross_entropy");
    return result;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.shape().size() != 2)
        throw std::invalid_argument("argmax_rows: expected [N,K], got " +
                                    shape_str(logits.shape()));
    const int64_t n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(n));
    const float* lv = logits.data().data();
    for (int64_t r = 0; r < n; ++r) {
        const float* row = lv + r * k;
        int best = 0;
        for (int64_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = static_cast<int>(j);
        out[static_cast<size_t>(r)] = best;
    }
    return out;
}

// --- SGD ------------------------------------------------------------------

std::vector<float>& SgdState::velocity_for(const Tensor& param) {
    auto& v = velocity_[param.impl()];
    if (v.empty()) v.assign(static_cast<size_t>(param.numel()), 0.0f);
    return v;
}

void sgd_step(std::vector<Tensor>& params, SgdState& state, float lr,
              float momentum, float weight_decay) {
    for (Tensor& p : params)
        if (!p.has_grad())
            throw std::logic_error("sgd_step: parameter " +
                                   shape_str(p.shape()) + " has no grad");
    for (Tensor& p : params) {
        auto& v = state.velocity_for(p);
        auto d = p.data();
        auto g = p.grad();
        for (size_t i = 0; i < v.size(); ++i) {
            v[i] = momentum * v[i] + (g[i] + weight_decay * d[i]);
            d[i] -= lr * v[i];
        }
        p.zero_grad();
    }
}

}  // namespace rgauge
