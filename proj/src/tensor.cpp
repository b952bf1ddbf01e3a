#include "docsegtr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace docsegtr {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

static void check_shape_valid(const Shape& shape) {
    for (auto d : shape) {
        if (d < 1) throw ShapeError("tensor dimensions must be >= 1, got " + shape_str(shape));
    }
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    check_shape_valid(shape);
    d_ = std::make_shared<TensorData>();
    d_->values.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
    d_->shape = std::move(shape);
    d_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape_valid(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    }
    d_ = std::make_shared<TensorData>();
    d_->shape = std::move(shape);
    d_->values = std::move(values);
    d_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() requires a scalar tensor, got " + shape_str(shape()));
    return d_->values[0];
}

std::vector<double>& Tensor::grad() {
    if (d_->grad.empty()) throw ContractError("tensor has no gradient (backward not run or not required)");
    return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (d_->grad.empty()) throw ContractError("tensor has no gradient (backward not run or not required)");
    return d_->grad;
}

void Tensor::zero_grad() {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    return Tensor(d_->shape, d_->values, false);
}

// ---- tape ----

Tape& Tape::active() {
    thread_local Tape tape;
    return tape;
}

std::int64_t Tape::record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
    return static_cast<std::int64_t>(nodes_.size()) - 1;
}

void Tape::clear() {
    nodes_.clear();
    ++epoch_;
}

void Tape::backward_from(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
    }
    auto d = loss.ptr();
    if (d->node < 0 || d->tape_epoch != epoch_) {
        throw ContractError("loss is not on the active tape (detached or tape already consumed)");
    }
    detail::ensure_grad(*d);
    d->grad[0] = 1.0;
    for (std::int64_t i = d->node; i >= 0; --i) {
        nodes_[static_cast<std::size_t>(i)]();
    }
    clear();
}

void backward(const Tensor& loss) { Tape::active().backward_from(loss); }

namespace detail {

void ensure_grad(TensorData& t) {
    if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
}

static thread_local bool g_grad_enabled = true;

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

}  // namespace detail

namespace {

using detail::ensure_grad;

bool needs_grad(const Tensor& t) { return detail::grad_enabled() && t.requires_grad(); }

void record_node(Tensor& out, std::function<void()> fn) {
    out.set_requires_grad(true);
    auto& tape = Tape::active();
    out.ptr()->node = tape.record(std::move(fn));
    out.ptr()->tape_epoch = tape.epoch();
}

// Output grad of `out` present and nonzero-sized, else nothing to do.
const std::vector<double>* out_grad(const std::shared_ptr<TensorData>& out) {
    if (out->grad.empty()) return nullptr;
    return &out->grad;
}

}  // namespace

// ---- elementwise add / mul with trailing broadcast ----

static void check_suffix(const Tensor& a, const Tensor& b, const char* opname) {
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    if (sb.size() > sa.size() ||
        !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
        throw ShapeError(std::string(opname) + ": shape " + shape_str(sb) +
                         " is not broadcastable (trailing) to " + shape_str(sa));
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_suffix(a, b, "add");
    const std::int64_t n = a.numel();
    const std::int64_t m = b.numel();
    std::vector<double> out(static_cast<std::size_t>(n));
    const auto& va = a.values();
    const auto& vb = b.values();
    for (std::int64_t i = 0; i < n; ++i) out[i] = va[i] + vb[i % m];
    Tensor y(a.shape(), std::move(out));
    if (needs_grad(a) || needs_grad(b)) {
        auto pa = a.ptr(); auto pb = b.ptr(); auto py = y.ptr();
        bool ga = needs_grad(a), gb = needs_grad(b);
        record_node(y, [pa, pb, py, ga, gb, n, m]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            if (ga) {
                ensure_grad(*pa);
                for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += (*gy)[i];
            }
            if (gb) {
                ensure_grad(*pb);
                for (std::int64_t i = 0; i < n; ++i) pb->grad[i % m] += (*gy)[i];
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_suffix(a, b, "mul");
    const std::int64_t n = a.numel();
    const std::int64_t m = b.numel();
    std::vector<double> out(static_cast<std::size_t>(n));
    const auto& va = a.values();
    const auto& vb = b.values();
    for (std::int64_t i = 0; i < n; ++i) out[i] = va[i] * vb[i % m];
    Tensor y(a.shape(), std::move(out));
    if (needs_grad(a) || needs_grad(b)) {
        auto pa = a.ptr(); auto pb = b.ptr(); auto py = y.ptr();
        bool ga = needs_grad(a), gb = needs_grad(b);
        record_node(y, [pa, pb, py, ga, gb, n, m]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            if (ga) {
                ensure_grad(*pa);
                for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += (*gy)[i] * pb->values[i % m];
            }
            if (gb) {
                ensure_grad(*pb);
                for (std::int64_t i = 0; i < n; ++i) pb->grad[i % m] += (*gy)[i] * pa->values[i];
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& a, double s) {
    const std::int64_t n = a.numel();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.values()[i] * s;
    Tensor y(a.shape(), std::move(out));
    if (needs_grad(a)) {
        auto pa = a.ptr(); auto py = y.ptr();
        record_node(y, [pa, py, s, n]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            ensure_grad(*pa);
            for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += (*gy)[i] * s;
        });
    }
    return y;
}

// ---- matmul / bmm / linear ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    }
    const std::int64_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
    Tensor y(Shape{m, p});
    const auto& va = a.values();
    const auto& vb = b.values();
    auto& vy = y.values();
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t t = 0; t < k; ++t) {
            const double av = va[i * k + t];
            if (av == 0.0) continue;
            for (std::int64_t j = 0; j < p; ++j) vy[i * p + j] += av * vb[t * p + j];
        }
    }
    if (needs_grad(a) || needs_grad(b)) {
        auto pa = a.ptr(); auto pb = b.ptr(); auto py = y.ptr();
        bool ga = needs_grad(a), gb = needs_grad(b);
        record_node(y, [pa, pb, py, ga, gb, m, k, p]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            if (ga) {
                ensure_grad(*pa);  // dA = dY B^T
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t j = 0; j < p; ++j) {
                        const double g = (*gy)[i * p + j];
                        if (g == 0.0) continue;
                        for (std::int64_t t = 0; t < k; ++t)
                            pa->grad[i * k + t] += g * pb->values[t * p + j];
                    }
            }
            if (gb) {
                ensure_grad(*pb);  // dB = A^T dY
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t t = 0; t < k; ++t) {
                        const double av = pa->values[i * k + t];
                        if (av == 0.0) continue;
                        for (std::int64_t j = 0; j < p; ++j)
                            pb->grad[t * p + j] += av * (*gy)[i * p + j];
                    }
            }
        });
    }
    return y;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    }
    const std::int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), p = b.dim(2);
    Tensor y(Shape{bs, m, p});
    const auto& va = a.values();
    const auto& vb = b.values();
    auto& vy = y.values();
    for (std::int64_t q = 0; q < bs; ++q) {
        const double* A = va.data() + q * m * k;
        const double* B = vb.data() + q * k * p;
        double* Y = vy.data() + q * m * p;
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t t = 0; t < k; ++t) {
                const double av = A[i * k + t];
                for (std::int64_t j = 0; j < p; ++j) Y[i * p + j] += av * B[t * p + j];
            }
    }
    if (needs_grad(a) || needs_grad(b)) {
        auto pa = a.ptr(); auto pb = b.ptr(); auto py = y.ptr();
        bool ga = needs_grad(a), gb = needs_grad(b);
        record_node(y, [pa, pb, py, ga, gb, bs, m, k, p]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            if (ga) ensure_grad(*pa);
            if (gb) ensure_grad(*pb);
            for (std::int64_t q = 0; q < bs; ++q) {
                const double* G = gy->data() + q * m * p;
                const double* A = pa->values.data() + q * m * k;
                const double* B = pb->values.data() + q * k * p;
                if (ga) {
                    double* dA = pa->grad.data() + q * m * k;
                    for (std::int64_t i = 0; i < m; ++i)
                        for (std::int64_t j = 0; j < p; ++j) {
                            const double g = G[i * p + j];
                            for (std::int64_t t = 0; t < k; ++t) dA[i * k + t] += g * B[t * p + j];
                        }
                }
                if (gb) {
                    double* dB = pb->grad.data() + q * k * p;
                    for (std::int64_t i = 0; i < m; ++i)
                        for (std::int64_t t = 0; t < k; ++t) {
                            const double av = A[i * k + t];
                            for (std::int64_t j = 0; j < p; ++j) dB[t * p + j] += av * G[i * p + j];
                        }
                }
            }
        });
    }
    return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() < 1 || w.rank() != 2 || b.rank() != 1) {
        throw ShapeError("linear: expected x[...,in], w[in,out], b[out]");
    }
    const std::int64_t in = w.dim(0), out = w.dim(1);
    if (x.shape().back() != in || b.dim(0) != out) {
        throw ShapeError("linear: shape mismatch x" + shape_str(x.shape()) + " w" +
                         shape_str(w.shape()) + " b" + shape_str(b.shape()));
    }
    const std::int64_t rows = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out;
    Tensor y(std::move(out_shape));
    const auto& vx = x.values();
    const auto& vw = w.values();
    const auto& vb = b.values();
    auto& vy = y.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        double* Y = vy.data() + r * out;
        for (std::int64_t j = 0; j < out; ++j) Y[j] = vb[j];
        const double* X = vx.data() + r * in;
        for (std::int64_t t = 0; t < in; ++t) {
            const double xv = X[t];
            if (xv == 0.0) continue;
            const double* W = vw.data() + t * out;
            for (std::int64_t j = 0; j < out; ++j) Y[j] += xv * W[j];
        }
    }
    if (needs_grad(x) || needs_grad(w) || needs_grad(b)) {
        auto px = x.ptr(); auto pw = w.ptr(); auto pb = b.ptr(); auto py = y.ptr();
        bool gx = needs_grad(x), gw = needs_grad(w), gb = needs_grad(b);
        record_node(y, [px, pw, pb, py, gx, gw, gb, rows, in, out]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            if (gx) ensure_grad(*px);
            if (gw) ensure_grad(*pw);
            if (gb) ensure_grad(*pb);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* G = gy->data() + r * out;
                const double* X = px->values.data() + r * in;
                if (gb) for (std::int64_t j = 0; j < out; ++j) pb->grad[j] += G[j];
                if (gx) {
                    double* dX = px->grad.data() + r * in;
                    for (std::int64_t t = 0; t < in; ++t) {
                        const double* W = pw->values.data() + t * out;
                        double acc = 0.0;
                        for (std::int64_t j = 0; j < out; ++j) acc += G[j] * W[j];
                        dX[t] += acc;
                    }
                }
                if (gw) {
                    for (std::int64_t t = 0; t < in; ++t) {
                        const double xv = X[t];
                        if (xv == 0.0) continue;
                        double* dW = pw->grad.data() + t * out;
                        for (std::int64_t j = 0; j < out; ++j) dW[j] += xv * G[j];
                    }
                }
            }
        });
    }
    return y;
}

// ---- conv2d ----

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::int64_t stride, std::int64_t padding) {
    if (x.rank() != 3 || w.rank() != 4 || bias.rank() != 1) {
        throw ShapeError("conv2d: expected x[Cin,H,W], w[Cout,Cin,kh,kw], bias[Cout]");
    }
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const std::int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != cin) {
        throw ShapeError("conv2d: channel mismatch x" + shape_str(x.shape()) + " w" + shape_str(w.shape()));
    }
    if (bias.dim(0) != cout) throw ShapeError("conv2d: bias size mismatch");
    if (kh > h + 2 * padding || kw > wd + 2 * padding) {
        throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
    }
    const std::int64_t oh = (h + 2 * padding - kh) / stride + 1;
    const std::int64_t ow = (wd + 2 * padding - kw) / stride + 1;
    Tensor y(Shape{cout, oh, ow});
    const auto& vx = x.values();
    const auto& vw = w.values();
    const auto& vb = bias.values();
    auto& vy = y.values();
    for (std::int64_t co = 0; co < cout; ++co) {
        double* Y = vy.data() + co * oh * ow;
        const double bv = vb[co];
        for (std::int64_t i = 0; i < oh * ow; ++i) Y[i] = bv;
        for (std::int64_t ci = 0; ci < cin; ++ci) {
            const double* X = vx.data() + ci * h * wd;
            const double* W = vw.data() + ((co * cin + ci) * kh) * kw;
            for (std::int64_t ky = 0; ky < kh; ++ky) {
                for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const double wv = W[ky * kw + kx];
                    if (wv == 0.0) continue;
                    for (std::int64_t oy = 0; oy < oh; ++oy) {
                        const std::int64_t iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= h) continue;
                        const double* Xrow = X + iy * wd;
                        double* Yrow = Y + oy * ow;
                        for (std::int64_t ox = 0; ox < ow; ++ox) {
                            const std::int64_t ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= wd) continue;
                            Yrow[ox] += wv * Xrow[ix];
                        }
                    }
                }
            }
        }
    }
    if (needs_grad(x) || needs_grad(w) || needs_grad(bias)) {
        auto px = x.ptr(); auto pw = w.ptr(); auto pb = bias.ptr(); auto py = y.ptr();
        bool gx = needs_grad(x), gw = needs_grad(w), gb = needs_grad(bias);
        record_node(y, [px, pw, pb, py, gx, gw, gb, cin, h, wd, cout, kh, kw, oh, ow, stride, padding]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            if (gx) ensure_grad(*px);
            if (gw) ensure_grad(*pw);
            if (gb) ensure_grad(*pb);
            for (std::int64_t co = 0; co < cout; ++co) {
                const double* G = gy->data() + co * oh * ow;
                if (gb) {
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < oh * ow; ++i) acc += G[i];
                    pb->grad[co] += acc;
                }
                for (std::int64_t ci = 0; ci < cin; ++ci) {
                    const double* X = px->values.data() + ci * h * wd;
                    const double* W = pw->values.data() + ((co * cin + ci) * kh) * kw;
                    double* dX = gx ? px->grad.data() + ci * h * wd : nullptr;
                    double* dW = gw ? pw->grad.data() + ((co * cin + ci) * kh) * kw : nullptr;
                    for (std::int64_t ky = 0; ky < kh; ++ky) {
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const double wv = W[ky * kw + kx];
                            double wacc = 0.0;
                            for (std::int64_t oy = 0; oy < oh; ++oy) {
                                const std::int64_t iy = oy * stride + ky - padding;
                                if (iy < 0 || iy >= h) continue;
                                const double* Grow = G + oy * ow;
                                for (std::int64_t ox = 0; ox < ow; ++ox) {
                                    const std::int64_t ix = ox * stride + kx - padding;
                                    if (ix < 0 || ix >= wd) continue;
                                    const double g = Grow[ox];
                                    if (gx) dX[iy * wd + ix] += wv * g;
                                    if (gw) wacc += X[iy * wd + ix] * g;
                                }
                            }
                            if (gw) dW[ky * kw + kx] += wacc;
                        }
                    }
                }
            }
        });
    }
    return y;
}

// ---- activations ----

namespace {

Tensor unary_op(const Tensor& x, const std::function<double(double)>& f,
                const std::function<double(double)>& df) {
    const std::int64_t n = x.numel();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(x.values()[i]);
    Tensor y(x.shape(), std::move(out));
    if (needs_grad(x)) {
        auto px = x.ptr(); auto py = y.ptr();
        record_node(y, [px, py, df, n]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            ensure_grad(*px);
            for (std::int64_t i = 0; i < n; ++i) px->grad[i] += (*gy)[i] * df(px->values[i]);
        });
    }
    return y;
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor relu(const Tensor& x) {
    return unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                    [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    auto s = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    return unary_op(x, s, [s](double v) { const double sv = s(v); return sv * (1.0 - sv); });
}

Tensor gelu(const Tensor& x) {
    auto phi = [](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)); };
    return unary_op(x, [phi](double v) { return v * phi(v); },
                    [phi](double v) { return phi(v) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
}

// ---- layer norm ----

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be > 0");
    if (gamma.rank() != 1 || beta.rank() != 1) throw ShapeError("layer_norm: gamma/beta must be 1-d");
    const std::int64_t c = x.shape().back();
    if (gamma.dim(0) != c || beta.dim(0) != c) {
        throw ShapeError("layer_norm: channel mismatch, x" + shape_str(x.shape()) + " gamma" +
                         shape_str(gamma.shape()) + " beta" + shape_str(beta.shape()));
    }
    const std::int64_t rows = x.numel() / c;
    Tensor y(x.shape());
    std::vector<double> xhat(static_cast<std::size_t>(x.numel()));
    std::vector<double> rstd(static_cast<std::size_t>(rows));
    const auto& vx = x.values();
    const auto& vg = gamma.values();
    const auto& vb = beta.values();
    auto& vy = y.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* X = vx.data() + r * c;
        double mu = 0.0;
        for (std::int64_t j = 0; j < c; ++j) mu += X[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t j = 0; j < c; ++j) { const double d = X[j] - mu; var += d * d; }
        var /= static_cast<double>(c);
        const double rs = 1.0 / std::sqrt(var + eps);
        rstd[r] = rs;
        for (std::int64_t j = 0; j < c; ++j) {
            const double xh = (X[j] - mu) * rs;
            xhat[r * c + j] = xh;
            vy[r * c + j] = vg[j] * xh + vb[j];
        }
    }
    if (needs_grad(x) || needs_grad(gamma) || needs_grad(beta)) {
        auto px = x.ptr(); auto pg = gamma.ptr(); auto pb = beta.ptr(); auto py = y.ptr();
        bool gx = needs_grad(x), gg = needs_grad(gamma), gb = needs_grad(beta);
        auto xh = std::make_shared<std::vector<double>>(std::move(xhat));
        auto rs = std::make_shared<std::vector<double>>(std::move(rstd));
        record_node(y, [px, pg, pb, py, gx, gg, gb, xh, rs, rows, c]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            if (gx) ensure_grad(*px);
            if (gg) ensure_grad(*pg);
            if (gb) ensure_grad(*pb);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* G = gy->data() + r * c;
                const double* XH = xh->data() + r * c;
                if (gb) for (std::int64_t j = 0; j < c; ++j) pb->grad[j] += G[j];
                if (gg) for (std::int64_t j = 0; j < c; ++j) pg->grad[j] += G[j] * XH[j];
                if (gx) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::int64_t j = 0; j < c; ++j) {
                        const double gj = G[j] * pg->values[j];
                        s1 += gj;
                        s2 += gj * XH[j];
                    }
                    s1 /= static_cast<double>(c);
                    s2 /= static_cast<double>(c);
                    double* dX = px->grad.data() + r * c;
                    for (std::int64_t j = 0; j < c; ++j) {
                        const double gj = G[j] * pg->values[j];
                        dX[j] += ((*rs)[r]) * (gj - s1 - XH[j] * s2);
                    }
                }
            }
        });
    }
    return y;
}

// ---- softmax ----

Tensor softmax_lastdim(const Tensor& x) {
    const std::int64_t c = x.shape().back();
    const std::int64_t rows = x.numel() / c;
    Tensor y(x.shape());
    const auto& vx = x.values();
    auto& vy = y.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* X = vx.data() + r * c;
        double* Y = vy.data() + r * c;
        double mx = X[0];
        for (std::int64_t j = 0; j < c; ++j) {
            if (std::isnan(X[j])) throw NumericError("softmax_lastdim: NaN input");
            mx = std::max(mx, X[j]);
        }
        double sum = 0.0;
        for (std::int64_t j = 0; j < c; ++j) { Y[j] = std::exp(X[j] - mx); sum += Y[j]; }
        for (std::int64_t j = 0; j < c; ++j) Y[j] /= sum;
    }
    if (needs_grad(x)) {
        auto px = x.ptr(); auto py = y.ptr();
        record_node(y, [px, py, rows, c]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            ensure_grad(*px);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* Y = py->values.data() + r * c;
                const double* G = gy->data() + r * c;
                double dot = 0.0;
                for (std::int64_t j = 0; j < c; ++j) dot += Y[j] * G[j];
                double* dX = px->grad.data() + r * c;
                for (std::int64_t j = 0; j < c; ++j) dX[j] += Y[j] * (G[j] - dot);
            }
        });
    }
    return y;
}

// ---- reductions ----

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor y = Tensor::scalar(s);
    if (needs_grad(x)) {
        auto px = x.ptr(); auto py = y.ptr();
        record_node(y, [px, py]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            ensure_grad(*px);
            const double g = (*gy)[0];
            for (auto& gv : px->grad) gv += g;
        });
    }
    return y;
}

Tensor mean_all(const Tensor& x) {
    return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

// ---- pooling / resampling ----

Tensor adaptive_avg_pool2d(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
    if (x.rank() != 3) throw ShapeError("adaptive_avg_pool2d: expected CHW, got " + shape_str(x.shape()));
    if (out_h < 1 || out_w < 1) throw ShapeError("adaptive_avg_pool2d: output dims must be >= 1");
    const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor y(Shape{c, out_h, out_w});
    auto bin = [](std::int64_t i, std::int64_t in, std::int64_t out) {
        const std::int64_t lo = (i * in) / out;
        const std::int64_t hi = ((i + 1) * in + out - 1) / out;
        return std::pair<std::int64_t, std::int64_t>{lo, hi};
    };
    const auto& vx = x.values();
    auto& vy = y.values();
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
            auto [y0, y1] = bin(oy, h, out_h);
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                auto [x0, x1] = bin(ox, w, out_w);
                double s = 0.0;
                for (std::int64_t iy = y0; iy < y1; ++iy)
                    for (std::int64_t ix = x0; ix < x1; ++ix) s += vx[(ci * h + iy) * w + ix];
                vy[(ci * out_h + oy) * out_w + ox] = s / static_cast<double>((y1 - y0) * (x1 - x0));
            }
        }
    if (needs_grad(x)) {
        auto px = x.ptr(); auto py = y.ptr();
        record_node(y, [px, py, bin, c, h, w, out_h, out_w]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            ensure_grad(*px);
            for (std::int64_t ci = 0; ci < c; ++ci)
                for (std::int64_t oy = 0; oy < out_h; ++oy) {
                    auto [y0, y1] = bin(oy, h, out_h);
                    for (std::int64_t ox = 0; ox < out_w; ++ox) {
                        auto [x0, x1] = bin(ox, w, out_w);
                        const double g = (*gy)[(ci * out_h + oy) * out_w + ox] /
                                         static_cast<double>((y1 - y0) * (x1 - x0));
                        for (std::int64_t iy = y0; iy < y1; ++iy)
                            for (std::int64_t ix = x0; ix < x1; ++ix)
                                px->grad[(ci * h + iy) * w + ix] += g;
                    }
                }
        });
    }
    return y;
}

Tensor upsample_nearest2d(const Tensor& x, std::int64_t out_h, std::int64_t out_w) {
    if (x.rank() != 3) throw ShapeError("upsample_nearest2d: expected CHW, got " + shape_str(x.shape()));
    const std::int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor y(Shape{c, out_h, out_w});
    const auto& vx = x.values();
    auto& vy = y.values();
    for (std::int64_t ci = 0; ci < c; ++ci)
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const std::int64_t iy = (oy * h) / out_h;
            for (std::int64_t ox = 0; ox < out_w; ++ox) {
                const std::int64_t ix = (ox * w) / out_w;
                vy[(ci * out_h + oy) * out_w + ox] = vx[(ci * h + iy) * w + ix];
            }
        }
    if (needs_grad(x)) {
        auto px = x.ptr(); auto py = y.ptr();
        record_node(y, [px, py, c, h, w, out_h, out_w]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            ensure_grad(*px);
            for (std::int64_t ci = 0; ci < c; ++ci)
                for (std::int64_t oy = 0; oy < out_h; ++oy) {
                    const std::int64_t iy = (oy * h) / out_h;
                    for (std::int64_t ox = 0; ox < out_w; ++ox) {
                        const std::int64_t ix = (ox * w) / out_w;
                        px->grad[(ci * h + iy) * w + ix] += (*gy)[(ci * out_h + oy) * out_w + ox];
                    }
                }
        });
    }
    return y;
}

// ---- shape manipulation ----

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& ref = parts[0].shape();
    if (axis >= ref.size()) throw ShapeError("concat: axis out of range");
    std::int64_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != ref.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < ref.size(); ++d) {
            if (d != axis && p.shape()[d] != ref[d]) {
                throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " + shape_str(ref));
            }
        }
        total += p.shape()[axis];
    }
    Shape out_shape = ref;
    out_shape[axis] = total;
    // outer = product of dims before axis, inner = product after
    std::int64_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
    for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
    Tensor y(out_shape);
    auto& vy = y.values();
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t ax = p.shape()[axis];
        const auto& vp = p.values();
        for (std::int64_t o = 0; o < outer; ++o) {
            std::copy(vp.begin() + o * ax * inner, vp.begin() + (o + 1) * ax * inner,
                      vy.begin() + (o * total + offset) * inner);
        }
        offset += ax;
    }
    bool any_grad = false;
    for (const auto& p : parts) any_grad = any_grad || needs_grad(p);
    if (any_grad) {
        std::vector<std::shared_ptr<TensorData>> ps;
        std::vector<bool> gs;
        std::vector<std::int64_t> axes;
        for (const auto& p : parts) {
            ps.push_back(p.ptr());
            gs.push_back(needs_grad(p));
            axes.push_back(p.shape()[axis]);
        }
        auto py = y.ptr();
        record_node(y, [ps, gs, axes, py, outer, inner, total]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            std::int64_t offset = 0;
            for (std::size_t i = 0; i < ps.size(); ++i) {
                const std::int64_t ax = axes[i];
                if (gs[i]) {
                    ensure_grad(*ps[i]);
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const double* src = gy->data() + (o * total + offset) * inner;
                        double* dst = ps[i]->grad.data() + o * ax * inner;
                        for (std::int64_t t = 0; t < ax * inner; ++t) dst[t] += src[t];
                    }
                }
                offset += ax;
            }
        });
    }
    return y;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
    }
    Tensor y(new_shape, x.values());
    if (needs_grad(x)) {
        auto px = x.ptr(); auto py = y.ptr();
        record_node(y, [px, py]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            ensure_grad(*px);
            for (std::size_t i = 0; i < gy->size(); ++i) px->grad[i] += (*gy)[i];
        });
    }
    return y;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const std::size_t r = x.rank();
    if (perm.size() != r) throw ShapeError("permute: axis list size mismatch");
    std::vector<bool> seen(r, false);
    for (auto p : perm) {
        if (p >= r || seen[p]) throw ShapeError("permute: invalid axis permutation");
        seen[p] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.shape()[perm[i]];
    std::vector<std::int64_t> in_strides(r, 1), out_strides(r, 1);
    for (std::int64_t i = static_cast<std::int64_t>(r) - 2; i >= 0; --i) {
        in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];
        out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
    }
    // map: output flat index -> input flat index
    const std::int64_t n = x.numel();
    auto index_map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
    std::vector<std::int64_t> coord(r, 0);
    for (std::int64_t of = 0; of < n; ++of) {
        std::int64_t rem = of;
        std::int64_t inf = 0;
        for (std::size_t d = 0; d < r; ++d) {
            const std::int64_t cd = rem / out_strides[d];
            rem -= cd * out_strides[d];
            inf += cd * in_strides[perm[d]];
        }
        (*index_map)[of] = inf;
    }
    Tensor y(out_shape);
    auto& vy = y.values();
    const auto& vx = x.values();
    for (std::int64_t of = 0; of < n; ++of) vy[of] = vx[(*index_map)[of]];
    if (needs_grad(x)) {
        auto px = x.ptr(); auto py = y.ptr();
        record_node(y, [px, py, index_map, n]() {
            auto* gy = out_grad(py);
            if (!gy) return;
            ensure_grad(*px);
            for (std::int64_t of = 0; of < n; ++of) px->grad[(*index_map)[of]] += (*gy)[of];
        });
    }
    return y;
}

}  // namespace docsegtr
