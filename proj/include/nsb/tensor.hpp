#pragma once

// Dense tensors with tape-free reverse-mode autodiff. Every op output that
// depends on a requires_grad tensor keeps a Node pointing at its inputs;
// backward() walks that DAG in reverse topological order.
//
// Layout for image-like tensors is NCHW.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nsb {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OpKind {
    conv2d,
    stride2_downsample,
    nearest_upsample2x,
    concat_channels,
    leaky_relu,
    add,
    mse_loss,
};

inline constexpr OpKind kAllOpKinds[] = {
    OpKind::conv2d,   OpKind::stride2_downsample, OpKind::nearest_upsample2x, OpKind::concat_channels,
    OpKind::leaky_relu, OpKind::add,              OpKind::mse_loss,
};

std::string_view op_name(OpKind kind);

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <typename T>
struct Node {
    OpKind kind;
    std::vector<ImplPtr<T>> inputs;
    // Accumulates d(loss)/d(input) into each input that requires grad.
    std::function<void(std::span<const T> grad_out, const std::vector<ImplPtr<T>>& inputs)> backward;
};

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<Node<T>> grad_fn;
};

}  // namespace detail

template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(detail::ImplPtr<T> impl) : impl_(std::move(impl)) {}

    static BasicTensor zeros(Shape shape, bool requires_grad = false);
    static BasicTensor full(Shape shape, T value, bool requires_grad = false);
    static BasicTensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false);
    static BasicTensor scalar(T value, bool requires_grad = false) {
        return from_values({}, {value}, requires_grad);
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t size() const { return impl_->values.size(); }

    std::span<T> values() { return impl_->values; }
    std::span<const T> values() const { return impl_->values; }
    T item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    BasicTensor& set_requires_grad(bool flag);
    bool is_leaf() const { return impl_->grad_fn == nullptr; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> grad_mut() { return impl_->grad; }
    void zero_grad();
    void clear_grad() { impl_->grad.clear(); }

    /// Copy of the values with no graph history.
    BasicTensor detach() const;

    const detail::ImplPtr<T>& impl() const { return impl_; }

private:
    detail::ImplPtr<T> impl_;
};

using Tensor = BasicTensor<double>;
using Tensor32 = BasicTensor<float>;

namespace ops {

/// Zero same-padding, stride 1. x: [N,Cin,H,W], weight: [Cout,Cin,K,K] with K
/// odd, bias: [Cout] or undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

/// Halves H and W by averaging each 2x2 block (a stride-2 box filter).
template <typename T>
BasicTensor<T> stride2_downsample(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> nearest_upsample2x(const BasicTensor<T>& x);

/// Concatenates along axis 1; all other extents must agree.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Mean of squared differences; rank-0 result.
template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& prediction, const BasicTensor<T>& target);

}  // namespace ops

struct OpAttrs {
    double slope = 0.2;  // leaky_relu
};

/// Uniform entry point over the seven op kinds. conv2d takes (x, w) or (x, w, b).
template <typename T>
BasicTensor<T> forward_op(OpKind kind, std::span<const BasicTensor<T>> inputs, const OpAttrs& attrs = {});

/// Populates grad on every requires_grad leaf reachable from loss.
/// Leaf grads accumulate across calls; intermediate grads are recomputed.
template <typename T>
void backward(const BasicTensor<T>& loss);

// --- Adam -------------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    AdamState(std::span<const BasicTensor<T>> params, AdamConfig config);

    AdamConfig config;
    std::uint64_t step_count = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
};

/// Bias-corrected Adam update. Leaves grads in place.
template <typename T>
void adam_step(std::span<BasicTensor<T>> params, AdamState<T>& state);

// --- Gradient checking (64-bit only) ------------------------------------------

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t samples_per_param = 24;  // 0 = every element
    std::uint64_t seed = 0;
    /// Leave out entries whose +-step evaluation flips the sign of any
    /// leaky_relu input.
    bool skip_kink_crossings = false;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    std::size_t kink_crossings = 0;  // entries left out under skip_kink_crossings
    bool passed = false;
};

/// Compares autodiff against central differences on sampled parameter
/// entries: |ad - fd| / max(|fd|, 1e-8). forward() must rebuild the graph
/// from the current parameter values each call. Non-finite op outputs raise
/// NonFiniteError naming the op.
GradCheckReport grad_check(const std::function<Tensor()>& forward, std::span<Tensor> params, double tolerance,
                           const GradCheckOptions& options = {});

/// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// While alive, op outputs are checked for NaN/inf on this thread.
class ScopedFiniteCheck {
public:
    ScopedFiniteCheck();
    ~ScopedFiniteCheck();
    ScopedFiniteCheck(const ScopedFiniteCheck&) = delete;
    ScopedFiniteCheck& operator=(const ScopedFiniteCheck&) = delete;

private:
    bool previous_;
};

namespace fault {

/// Test hook: scales the upstream gradient handed to every backward rule of
/// `kind` on this thread, producing a wrong derivative.
class ScopedBackwardCorruption {
public:
    ScopedBackwardCorruption(OpKind kind, double scale);
    ~ScopedBackwardCorruption();
    ScopedBackwardCorruption(const ScopedBackwardCorruption&) = delete;
    ScopedBackwardCorruption& operator=(const ScopedBackwardCorruption&) = delete;
};

}  // namespace fault

// --- Checkpoint container "NSBW" -----------------------------------------------

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor32 tensor;
};

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> entries);
std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> entries);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace nsb
