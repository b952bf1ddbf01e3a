#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace docsegtr {

class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;      // empty until backward touches it
    bool requires_grad = false;
    std::int64_t node = -1;        // index on the tape that produced this tensor
    std::uint64_t tape_epoch = 0;  // which tape generation `node` refers to
};

/// Dense row-major N-d tensor of doubles with shared-ownership value
/// semantics. Copying a Tensor aliases the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(d_->values.size()); }
    std::int64_t dim(std::size_t i) const { return d_->shape.at(i); }
    std::size_t rank() const { return d_->shape.size(); }

    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }
    double& at(std::int64_t flat) { return d_->values[static_cast<std::size_t>(flat)]; }
    double at(std::int64_t flat) const { return d_->values[static_cast<std::size_t>(flat)]; }

    /// Scalar extraction; throws ContractError unless numel() == 1.
    double item() const;

    bool requires_grad() const { return d_->requires_grad; }
    Tensor& set_requires_grad(bool rg) { d_->requires_grad = rg; return *this; }

    bool has_grad() const { return !d_->grad.empty(); }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    /// Copy of the values with no grad tracking.
    Tensor detach() const;

    std::shared_ptr<TensorData> ptr() const { return d_; }

private:
    std::shared_ptr<TensorData> d_;
};

/// Reverse-mode tape. One thread-local tape is implicitly active; every
/// recorded op appends a node whose closure propagates output grads to
/// input grads. A tape is consumed by exactly one backward() pass.
class Tape {
public:
    static Tape& active();

    std::int64_t record(std::function<void()> backward_fn);
    std::size_t size() const { return nodes_.size(); }
    std::uint64_t epoch() const { return epoch_; }
    void clear();

    /// Runs the reverse pass from `loss` (scalar) and consumes the tape.
    void backward_from(const Tensor& loss);

private:
    std::vector<std::function<void()>> nodes_;
    std::uint64_t epoch_ = 1;
};

/// backward() on the thread's active tape. Populates .grad() of every
/// requires_grad tensor that participated in computing `loss`.
void backward(const Tensor& loss);

namespace detail {
void ensure_grad(TensorData& t);
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
private:
    bool prev_;
};
}  // namespace detail

// ---- differentiable primitives ----

/// Elementwise a+b. b may broadcast: its shape must be a trailing suffix
/// of a's shape (e.g. bias [C] added to [N,C]).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor matmul(const Tensor& a, const Tensor& b);            // [m,k]x[k,p]
Tensor bmm(const Tensor& a, const Tensor& b);               // [B,m,k]x[B,k,p]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // [...,in] -> [...,out]

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::int64_t stride, std::int64_t padding);    // CHW in, [Cout,Cin,kh,kw]

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor softmax_lastdim(const Tensor& x);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor adaptive_avg_pool2d(const Tensor& x, std::int64_t out_h, std::int64_t out_w);  // CHW
Tensor upsample_nearest2d(const Tensor& x, std::int64_t out_h, std::int64_t out_w);   // CHW

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);

}  // namespace docsegtr
