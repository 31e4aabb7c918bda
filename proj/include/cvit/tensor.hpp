#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// Every operation that sees a grad-tracked input while a Tape is active
// records one node on that tape. Nodes are appended in execution order, which
// is already a topological order of the computation, so Tape::backward simply
// replays the recorded backward rules in reverse and accumulates gradients
// into every tracked leaf. One tape and the tensors recorded on it belong to
// a single thread.

namespace cvit {

using Shape = std::vector<std::size_t>;

namespace detail {

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;)
        strides[i - 1] = strides[i] * shape[i];
    return strides;
}

}  // namespace detail

struct TensorData {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient is first accumulated
    bool requires_grad = false;
};

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        return from(std::move(shape), {});
    }

    static Tensor full(Shape shape, double value) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.data().begin(), t.data().end(), value);
        return t;
    }

    static Tensor scalar(double value) {
        Tensor t = zeros({1});
        t.data()[0] = value;
        return t;
    }

    // values may be empty (zero fill) or must match the shape's element count.
    static Tensor from(Shape shape, std::vector<double> values) {
        for (std::size_t d : shape) {
            if (d == 0)
                throw std::invalid_argument("Tensor: zero-sized dimension in shape " +
                                            detail::shape_str(shape));
        }
        const std::size_t n = detail::numel(shape);
        auto d = std::make_shared<TensorData>();
        d->shape = std::move(shape);
        if (values.empty()) {
            d->data.assign(n, 0.0);
        } else {
            if (values.size() != n)
                throw std::invalid_argument(
                    "Tensor: " + std::to_string(values.size()) + " values for shape " +
                    detail::shape_str(d->shape));
            d->data = std::move(values);
        }
        Tensor t;
        t.d_ = std::move(d);
        return t;
    }

    static Tensor param(Shape shape, std::vector<double> values) {
        Tensor t = from(std::move(shape), std::move(values));
        t.set_requires_grad(true);
        return t;
    }

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    std::size_t rank() const { return d_->shape.size(); }
    std::size_t size() const { return d_->data.size(); }

    std::vector<double>& data() { return d_->data; }
    const std::vector<double>& data() const { return d_->data; }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool flag) {
        d_->requires_grad = flag;
        if (flag && d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0);
    }

    bool has_grad() const { return !d_->grad.empty(); }

    // Allocates (zero-filled) on first touch.
    std::vector<double>& grad() {
        if (d_->grad.empty()) d_->grad.assign(d_->data.size(), 0.0);
        return d_->grad;
    }
    const std::vector<double>& grad() const { return d_->grad; }

    void zero_grad() {
        if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
    }

    double value() const {
        if (size() != 1)
            throw std::invalid_argument("Tensor::value: tensor of shape " +
                                        detail::shape_str(shape()) + " is not scalar");
        return d_->data[0];
    }

    double& at(std::initializer_list<std::size_t> idx) {
        return d_->data[flat_index(idx)];
    }
    double at(std::initializer_list<std::size_t> idx) const {
        return d_->data[flat_index(idx)];
    }

    // Identity of the underlying buffer, used to detect shared storage.
    const void* id() const { return d_.get(); }

private:
    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != rank())
            throw std::invalid_argument("Tensor::at: index rank mismatch for shape " +
                                        detail::shape_str(shape()));
        const auto strides = detail::row_major_strides(shape());
        std::size_t flat = 0, i = 0;
        for (std::size_t v : idx) {
            if (v >= shape()[i])
                throw std::out_of_range("Tensor::at: index out of range");
            flat += v * strides[i++];
        }
        return flat;
    }

    std::shared_ptr<TensorData> d_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

class Tape {
public:
    struct Node {
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward;
    };

    void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
        nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
    }

    std::size_t node_count() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays the recorded rules in reverse
    // order. The tape is cleared afterwards.
    void backward(Tensor loss) {
        if (loss.size() != 1)
            throw std::invalid_argument("Tape::backward: loss must be scalar, got shape " +
                                        detail::shape_str(loss.shape()));
        loss.grad()[0] += 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& node = nodes_[i];
            if (!node.output.has_grad()) continue;  // not on the path to the loss
            node.backward();
        }
        clear();
    }

private:
    std::vector<Node> nodes_;
};

namespace detail {

inline Tape*& active_tape_slot() {
    thread_local Tape* tape = nullptr;
    return tape;
}

}  // namespace detail

inline Tape* active_tape() { return detail::active_tape_slot(); }

// Activates a tape for the current scope; restores the previous one on exit.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) : prev_(detail::active_tape_slot()) {
        detail::active_tape_slot() = &tape;
    }
    ~TapeScope() { detail::active_tape_slot() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// ---------------------------------------------------------------------------
// Broadcasting helpers
// ---------------------------------------------------------------------------

namespace detail {

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) +
                                        " and " + shape_str(b) + " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `from` aligned to the (broadcast) shape `to`, with stride 0 on
// every broadcast dimension.
inline std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to) {
    const auto base = row_major_strides(from);
    std::vector<std::size_t> strides(to.size(), 0);
    const std::size_t offset = to.size() - from.size();
    for (std::size_t i = 0; i < from.size(); ++i)
        strides[offset + i] = from[i] == 1 ? 0 : base[i];
    return strides;
}

// Walks `shape` in row-major order, maintaining flat offsets for two operands
// whose (possibly zero) strides are given. fn(out_flat, a_flat, b_flat).
template <typename Fn>
inline void for_each_broadcast(const Shape& shape, const std::vector<std::size_t>& sa,
                               const std::vector<std::size_t>& sb, Fn&& fn) {
    const std::size_t total = numel(shape);
    const std::size_t rank = shape.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t out = 0; out < total; ++out) {
        fn(out, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < shape[d]) break;
            ia -= sa[d] * shape[d];
            ib -= sb[d] * shape[d];
            idx[d] = 0;
        }
    }
}

inline void maybe_record(const char* /*op*/, std::vector<Tensor> inputs, Tensor& out,
                         std::function<void()> backward) {
    Tape* tape = active_tape();
    if (!tape) return;
    bool tracked = false;
    for (const Tensor& t : inputs) tracked = tracked || t.requires_grad();
    if (!tracked) return;
    out.set_requires_grad(true);
    tape->record(std::move(inputs), out, std::move(backward));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise operations
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fwd, typename BwdA, typename BwdB>
inline Tensor binary_broadcast(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                               BwdA dfda, BwdB dfdb) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    Tensor out = Tensor::zeros(out_shape);
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    {
        const auto& av = a.data();
        const auto& bv = b.data();
        auto& ov = out.data();
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t io, std::size_t ia, std::size_t ib) {
            ov[io] = fwd(av[ia], bv[ib]);
        });
    }
    Tensor ax = a, bx = b;  // non-const handles for the backward rule
    maybe_record(name, {a, b}, out, [=]() mutable {
        const auto& og = out.grad();
        const auto& av = ax.data();
        const auto& bv = bx.data();
        const bool need_a = ax.requires_grad();
        const bool need_b = bx.requires_grad();
        auto* ga = need_a ? &ax.grad() : nullptr;
        auto* gb = need_b ? &bx.grad() : nullptr;
        for_each_broadcast(out.shape(), sa, sb,
                           [&](std::size_t io, std::size_t ia, std::size_t ib) {
                               if (need_a) (*ga)[ia] += og[io] * dfda(av[ia], bv[ib]);
                               if (need_b) (*gb)[ib] += og[io] * dfdb(av[ia], bv[ib]);
                           });
    });
    return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_broadcast(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_broadcast(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_broadcast(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double factor) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * factor;
    Tensor ax = a;
    detail::maybe_record("scale", {a}, out, [=]() mutable {
        auto& ga = ax.grad();
        const auto& og = out.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += og[i] * factor;
    });
    return out;
}

inline Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i)
        out.data()[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    Tensor ax = a;
    detail::maybe_record("relu", {a}, out, [=]() mutable {
        auto& ga = ax.grad();
        const auto& og = out.grad();
        const auto& av = ax.data();
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (av[i] > 0.0) ga[i] += og[i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// Matrix multiplication
// ---------------------------------------------------------------------------

namespace detail {

// C += A(m x k) * B(k x n)
inline void mm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A(m x k) * B(n x k)^T   (row-by-row dot products)
inline void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double sum = 0.0;
            for (std::size_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
            c[i * n + j] += sum;
        }
    }
}

// C += A(m x k)^T * B(m x n)
inline void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

struct MatmulPlan {
    Shape out_shape;
    Shape batch_shape;
    std::vector<std::size_t> sa, sb;  // batch strides (in matrices) with broadcast zeros
    std::size_t m, k, n;
};

inline MatmulPlan matmul_plan(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw std::invalid_argument("matmul: operands must have rank >= 2, got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    MatmulPlan plan;
    plan.m = a.shape()[a.rank() - 2];
    plan.k = a.shape()[a.rank() - 1];
    const std::size_t kb = b.shape()[b.rank() - 2];
    plan.n = b.shape()[b.rank() - 1];
    if (plan.k != kb)
        throw std::invalid_argument("matmul: inner dimensions differ for shapes " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    plan.batch_shape = broadcast_shape(a_batch, b_batch, "matmul");
    plan.sa = broadcast_strides(a_batch, plan.batch_shape);
    plan.sb = broadcast_strides(b_batch, plan.batch_shape);
    plan.out_shape = plan.batch_shape;
    plan.out_shape.push_back(plan.m);
    plan.out_shape.push_back(plan.n);
    return plan;
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto plan = detail::matmul_plan(a, b);
    Tensor out = Tensor::zeros(plan.out_shape);
    const std::size_t a_mat = plan.m * plan.k;
    const std::size_t b_mat = plan.k * plan.n;
    const std::size_t o_mat = plan.m * plan.n;
    if (plan.batch_shape.empty()) {
        detail::mm_acc(a.data().data(), b.data().data(), out.data().data(), plan.m, plan.k,
                       plan.n);
    } else {
        std::size_t batch = 0;
        detail::for_each_broadcast(plan.batch_shape, plan.sa, plan.sb,
                                   [&](std::size_t, std::size_t ia, std::size_t ib) {
                                       detail::mm_acc(a.data().data() + ia * a_mat,
                                                      b.data().data() + ib * b_mat,
                                                      out.data().data() + batch * o_mat, plan.m,
                                                      plan.k, plan.n);
                                       ++batch;
                                   });
    }
    Tensor ax = a, bx = b;
    detail::maybe_record("matmul", {a, b}, out, [=]() mutable {
        const auto& og = out.grad();
        const bool need_a = ax.requires_grad();
        const bool need_b = bx.requires_grad();
        auto* ga = need_a ? &ax.grad() : nullptr;
        auto* gb = need_b ? &bx.grad() : nullptr;
        auto one = [&](std::size_t ia, std::size_t ib, std::size_t io) {
            // dA = dC * B^T, dB = A^T * dC
            if (need_a)
                detail::mm_nt_acc(og.data() + io * o_mat, bx.data().data() + ib * b_mat,
                                  ga->data() + ia * a_mat, plan.m, plan.n, plan.k);
            if (need_b)
                detail::mm_tn_acc(ax.data().data() + ia * a_mat, og.data() + io * o_mat,
                                  gb->data() + ib * b_mat, plan.m, plan.k, plan.n);
        };
        if (plan.batch_shape.empty()) {
            one(0, 0, 0);
        } else {
            std::size_t batch = 0;
            detail::for_each_broadcast(plan.batch_shape, plan.sa, plan.sb,
                                       [&](std::size_t, std::size_t ia, std::size_t ib) {
                                           one(ia, ib, batch);
                                           ++batch;
                                       });
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Softmax / layer norm
// ---------------------------------------------------------------------------

namespace detail {

struct AxisSplit {
    std::size_t outer, len, inner;
};

inline AxisSplit axis_split(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size())
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                    " invalid for shape " + shape_str(shape));
    AxisSplit s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace detail

// Numerically stable softmax along `axis` (max subtraction per slice).
inline Tensor softmax(const Tensor& x, std::size_t axis) {
    const auto split = detail::axis_split(x.shape(), axis, "softmax");
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
        for (std::size_t in = 0; in < split.inner; ++in) {
            const std::size_t base = o * split.len * split.inner + in;
            double max_val = xv[base];
            for (std::size_t j = 1; j < split.len; ++j)
                max_val = std::max(max_val, xv[base + j * split.inner]);
            double sum = 0.0;
            for (std::size_t j = 0; j < split.len; ++j) {
                const double e = std::exp(xv[base + j * split.inner] - max_val);
                ov[base + j * split.inner] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < split.len; ++j) ov[base + j * split.inner] /= sum;
        }
    }
    Tensor xx = x;
    detail::maybe_record("softmax", {x}, out, [=]() mutable {
        // dx_j = y_j * (dy_j - sum_k dy_k y_k)
        auto& gx = xx.grad();
        const auto& og = out.grad();
        const auto& yv = out.data();
        for (std::size_t o = 0; o < split.outer; ++o) {
            for (std::size_t in = 0; in < split.inner; ++in) {
                const std::size_t base = o * split.len * split.inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < split.len; ++j) {
                    const std::size_t p = base + j * split.inner;
                    dot += og[p] * yv[p];
                }
                for (std::size_t j = 0; j < split.len; ++j) {
                    const std::size_t p = base + j * split.inner;
                    gx[p] += yv[p] * (og[p] - dot);
                }
            }
        }
    });
    return out;
}

// Normalizes over the last axis, then applies the affine transform
// gain * xhat + bias. gain and bias are rank-1 with the last-axis length.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
    if (x.rank() == 0)
        throw std::invalid_argument("layer_norm: input must have rank >= 1");
    const std::size_t len = x.shape().back();
    if (gain.shape() != Shape{len} || bias.shape() != Shape{len})
        throw std::invalid_argument("layer_norm: gain/bias shapes " +
                                    detail::shape_str(gain.shape()) + "/" +
                                    detail::shape_str(bias.shape()) +
                                    " do not match last axis of " +
                                    detail::shape_str(x.shape()));
    const std::size_t slices = x.size() / len;
    Tensor out = Tensor::zeros(x.shape());
    auto normed = std::make_shared<std::vector<double>>(x.size());  // xhat, kept for backward
    auto inv_std = std::make_shared<std::vector<double>>(slices);
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t s = 0; s < slices; ++s) {
        const std::size_t base = s * len;
        double mean = 0.0;
        for (std::size_t j = 0; j < len; ++j) mean += xv[base + j];
        mean /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
            const double d = xv[base + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(len);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[s] = inv;
        for (std::size_t j = 0; j < len; ++j) {
            const double xh = (xv[base + j] - mean) * inv;
            (*normed)[base + j] = xh;
            ov[base + j] = gain.data()[j] * xh + bias.data()[j];
        }
    }
    Tensor xx = x, gainx = gain, biasx = bias;
    detail::maybe_record("layer_norm", {x, gain, bias}, out, [=]() mutable {
        const auto& og = out.grad();
        const auto& xh = *normed;
        const bool need_x = xx.requires_grad();
        const bool need_g = gainx.requires_grad();
        const bool need_b = biasx.requires_grad();
        auto* gx = need_x ? &xx.grad() : nullptr;
        auto* gg = need_g ? &gainx.grad() : nullptr;
        auto* gb = need_b ? &biasx.grad() : nullptr;
        const double inv_len = 1.0 / static_cast<double>(len);
        for (std::size_t s = 0; s < slices; ++s) {
            const std::size_t base = s * len;
            if (need_g || need_b) {
                for (std::size_t j = 0; j < len; ++j) {
                    if (need_g) (*gg)[j] += og[base + j] * xh[base + j];
                    if (need_b) (*gb)[j] += og[base + j];
                }
            }
            if (need_x) {
                // dx = inv * (g - mean(g) - xhat * mean(g . xhat)),  g = dy * gain
                double g_mean = 0.0, gx_mean = 0.0;
                for (std::size_t j = 0; j < len; ++j) {
                    const double g = og[base + j] * gain.data()[j];
                    g_mean += g;
                    gx_mean += g * xh[base + j];
                }
                g_mean *= inv_len;
                gx_mean *= inv_len;
                const double inv = (*inv_std)[s];
                for (std::size_t j = 0; j < len; ++j) {
                    const double g = og[base + j] * gain.data()[j];
                    (*gx)[base + j] += inv * (g - g_mean - xh[base + j] * gx_mean);
                }
            }
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape new_shape) {
    if (detail::numel(new_shape) != x.size())
        throw std::invalid_argument("reshape: cannot view " + detail::shape_str(x.shape()) +
                                    " as " + detail::shape_str(new_shape));
    Tensor out = Tensor::from(std::move(new_shape), x.data());
    Tensor xx = x;
    detail::maybe_record("reshape", {x}, out, [=]() mutable {
        auto& gx = xx.grad();
        const auto& og = out.grad();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += og[i];
    });
    return out;
}

inline Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b) {
    if (axis_a >= x.rank() || axis_b >= x.rank())
        throw std::invalid_argument("transpose: axes out of range for shape " +
                                    detail::shape_str(x.shape()));
    Shape out_shape = x.shape();
    std::swap(out_shape[axis_a], out_shape[axis_b]);
    Tensor out = Tensor::zeros(out_shape);
    const auto in_strides = detail::row_major_strides(x.shape());
    auto map_strides = in_strides;
    std::swap(map_strides[axis_a], map_strides[axis_b]);
    const std::size_t rank = x.rank();
    const auto& xv = x.data();
    auto& ov = out.data();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < out.size(); ++o) {
        ov[o] = xv[src];
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            src += map_strides[d];
            if (idx[d] < out_shape[d]) break;
            src -= map_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    Tensor xx = x;
    detail::maybe_record("transpose", {x}, out, [=]() mutable {
        auto& gx = xx.grad();
        const auto& og = out.grad();
        std::vector<std::size_t> ridx(rank, 0);
        std::size_t rsrc = 0;
        for (std::size_t o = 0; o < og.size(); ++o) {
            gx[rsrc] += og[o];
            for (std::size_t d = rank; d-- > 0;) {
                ++ridx[d];
                rsrc += map_strides[d];
                if (ridx[d] < out_shape[d]) break;
                rsrc -= map_strides[d] * out_shape[d];
                ridx[d] = 0;
            }
        }
    });
    return out;
}

inline Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
    if (a.rank() != b.rank())
        throw std::invalid_argument("concat: rank mismatch between " +
                                    detail::shape_str(a.shape()) + " and " +
                                    detail::shape_str(b.shape()));
    if (axis >= a.rank())
        throw std::invalid_argument("concat: axis out of range for shape " +
                                    detail::shape_str(a.shape()));
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (i != axis && a.shape()[i] != b.shape()[i])
            throw std::invalid_argument("concat: shapes " + detail::shape_str(a.shape()) +
                                        " and " + detail::shape_str(b.shape()) +
                                        " differ outside axis " + std::to_string(axis));
    }
    Shape out_shape = a.shape();
    out_shape[axis] += b.shape()[axis];
    Tensor out = Tensor::zeros(out_shape);
    const auto split = detail::axis_split(out_shape, axis, "concat");
    const std::size_t la = a.shape()[axis], lb = b.shape()[axis];
    const std::size_t block_a = la * split.inner, block_b = lb * split.inner;
    const std::size_t block_o = split.len * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o) {
        std::copy_n(a.data().begin() + o * block_a, block_a, out.data().begin() + o * block_o);
        std::copy_n(b.data().begin() + o * block_b, block_b,
                    out.data().begin() + o * block_o + block_a);
    }
    Tensor ax = a, bx = b;
    detail::maybe_record("concat", {a, b}, out, [=]() mutable {
        const auto& og = out.grad();
        const bool need_a = ax.requires_grad();
        const bool need_b = bx.requires_grad();
        auto* ga = need_a ? &ax.grad() : nullptr;
        auto* gb = need_b ? &bx.grad() : nullptr;
        for (std::size_t o = 0; o < split.outer; ++o) {
            if (need_a)
                for (std::size_t i = 0; i < block_a; ++i)
                    (*ga)[o * block_a + i] += og[o * block_o + i];
            if (need_b)
                for (std::size_t i = 0; i < block_b; ++i)
                    (*gb)[o * block_b + i] += og[o * block_o + block_a + i];
        }
    });
    return out;
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    const auto split = detail::axis_split(x.shape(), axis, "slice");
    if (len == 0 || start + len > split.len)
        throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) + ") invalid for axis " +
                                    std::to_string(axis) + " of shape " +
                                    detail::shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[axis] = len;
    Tensor out = Tensor::zeros(out_shape);
    const std::size_t block_x = split.len * split.inner;
    const std::size_t block_o = len * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o)
        std::copy_n(x.data().begin() + o * block_x + start * split.inner, block_o,
                    out.data().begin() + o * block_o);
    Tensor xx = x;
    detail::maybe_record("slice", {x}, out, [=]() mutable {
        auto& gx = xx.grad();
        const auto& og = out.grad();
        for (std::size_t o = 0; o < split.outer; ++o)
            for (std::size_t i = 0; i < block_o; ++i)
                gx[o * block_x + start * split.inner + i] += og[o * block_o + i];
    });
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    Tensor out = Tensor::scalar(total);
    Tensor xx = x;
    detail::maybe_record("sum", {x}, out, [=]() mutable {
        auto& gx = xx.grad();
        const double g = out.grad()[0];
        for (double& v : gx) v += g;
    });
    return out;
}

inline Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.size());
    double total = 0.0;
    for (double v : x.data()) total += v;
    Tensor out = Tensor::scalar(total * inv);
    Tensor xx = x;
    detail::maybe_record("mean", {x}, out, [=]() mutable {
        auto& gx = xx.grad();
        const double g = out.grad()[0] * inv;
        for (double& v : gx) v += g;
    });
    return out;
}

}  // namespace cvit
