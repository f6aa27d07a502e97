#include "nsb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "nsb/binary_io.hpp"
#include "nsb/parallel.hpp"

namespace nsb {

using std::ptrdiff_t;
using std::size_t;

size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::conv2d: return "conv2d";
        case OpKind::stride2_downsample: return "stride2_downsample";
        case OpKind::nearest_upsample2x: return "nearest_upsample2x";
        case OpKind::concat_channels: return "concat_channels";
        case OpKind::leaky_relu: return "leaky_relu";
        case OpKind::add: return "add";
        case OpKind::mse_loss: return "mse_loss";
    }
    return "unknown";
}

namespace {

thread_local bool t_check_finite = false;
thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_op_counter = 0;
thread_local bool t_corrupt_active = false;
thread_local OpKind t_corrupt_kind = OpKind::add;
thread_local double t_corrupt_scale = 1.0;
thread_local std::vector<bool>* t_kink_trace = nullptr;  // leaky_relu input signs, in op order

[[noreturn]] void shape_mismatch(OpKind kind, const Shape& a, const Shape& b, std::string_view detail) {
    throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b) + " (" + std::string(detail) + ")");
}

template <typename T>
using Impl = detail::TensorImpl<T>;
template <typename T>
using ImplPtr = detail::ImplPtr<T>;
template <typename T>
using BackwardFn = decltype(detail::Node<T>::backward);

template <typename T>
std::span<T> grad_buffer(Impl<T>& t) {
    if (t.grad.empty()) t.grad.assign(t.values.size(), T(0));
    return t.grad;
}

template <typename T>
BasicTensor<T> make_output(Shape shape, std::vector<T> values, OpKind kind, std::vector<ImplPtr<T>> inputs,
                           BackwardFn<T> fn) {
    const auto index = t_op_counter++;
    if (t_check_finite) {
        for (size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(static_cast<double>(values[i]))) {
                throw NonFiniteError("non-finite output from " + std::string(op_name(kind)) + " (op #" +
                                     std::to_string(index) + ", element " + std::to_string(i) + ")");
            }
        }
    }
    auto impl = std::make_shared<Impl<T>>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    const bool tracked = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const auto& p) { return p->requires_grad; });
    if (tracked) {
        impl->requires_grad = true;
        impl->grad_fn = std::make_shared<detail::Node<T>>(detail::Node<T>{kind, std::move(inputs), std::move(fn)});
    }
    return BasicTensor<T>(std::move(impl));
}

void require_rank(OpKind kind, const Shape& s, size_t rank, std::string_view what) {
    if (s.size() != rank) {
        throw ShapeError(std::string(op_name(kind)) + ": " + std::string(what) + " must have rank " +
                         std::to_string(rank) + ", got " + shape_string(s));
    }
}

}  // namespace

// --- BasicTensor -------------------------------------------------------------

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
    const size_t n = shape_size(shape);
    return from_values(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_values(Shape shape, std::vector<T> values, bool requires_grad) {
    for (size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
    }
    if (values.size() != shape_size(shape)) {
        throw ShapeError("tensor of shape " + shape_string(shape) + " needs " + std::to_string(shape_size(shape)) +
                         " values, got " + std::to_string(values.size()));
    }
    auto impl = std::make_shared<Impl<T>>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    return BasicTensor(std::move(impl));
}

template <typename T>
T BasicTensor<T>::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return impl_->values[0];
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool flag) {
    if (!is_leaf()) throw std::logic_error("requires_grad can only be changed on leaf tensors");
    impl_->requires_grad = flag;
    return *this;
}

template <typename T>
void BasicTensor<T>::zero_grad() {
    impl_->grad.assign(impl_->values.size(), T(0));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
    return from_values(impl_->shape, impl_->values, false);
}

// --- ops -----------------------------------------------------------------------

namespace ops {

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
    constexpr auto kind = OpKind::conv2d;
    require_rank(kind, x.shape(), 4, "input");
    require_rank(kind, weight.shape(), 4, "weight");
    const size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const size_t Co = weight.dim(0), K = weight.dim(2);
    if (weight.dim(1) != Ci) shape_mismatch(kind, x.shape(), weight.shape(), "weight input channels");
    if (weight.dim(3) != K || K % 2 == 0) shape_mismatch(kind, x.shape(), weight.shape(), "kernel must be square and odd");
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != Co)) {
        shape_mismatch(kind, weight.shape(), bias.shape(), "bias must be [Cout]");
    }

    const size_t HW = H * W;
    const ptrdiff_t r = static_cast<ptrdiff_t>(K / 2);
    const ptrdiff_t h = static_cast<ptrdiff_t>(H), w = static_cast<ptrdiff_t>(W);
    std::vector<T> out(N * Co * HW, T(0));
    {
        const T* xv = x.values().data();
        const T* wv = weight.values().data();
        const T* bv = has_bias ? bias.values().data() : nullptr;
        T* ov = out.data();
#pragma omp parallel for num_threads(thread_count()) schedule(static)
        for (ptrdiff_t job = 0; job < static_cast<ptrdiff_t>(N * Co); ++job) {
            const size_t n = static_cast<size_t>(job) / Co, co = static_cast<size_t>(job) % Co;
            T* o = ov + static_cast<size_t>(job) * HW;
            if (bv) std::fill(o, o + HW, bv[co]);
            for (size_t ci = 0; ci < Ci; ++ci) {
                const T* in = xv + (n * Ci + ci) * HW;
                const T* wk = wv + (co * Ci + ci) * K * K;
                for (ptrdiff_t y = 0; y < h; ++y) {
                    T* orow = o + y * w;
                    for (ptrdiff_t ky = 0; ky < static_cast<ptrdiff_t>(K); ++ky) {
                        const ptrdiff_t sy = y + ky - r;
                        if (sy < 0 || sy >= h) continue;
                        const T* irow = in + sy * w;
                        for (ptrdiff_t kx = 0; kx < static_cast<ptrdiff_t>(K); ++kx) {
                            const ptrdiff_t dx = kx - r;
                            const T wt = wk[ky * static_cast<ptrdiff_t>(K) + kx];
                            const ptrdiff_t x0 = std::max<ptrdiff_t>(0, -dx), x1 = std::min(w, w - dx);
                            for (ptrdiff_t xx = x0; xx < x1; ++xx) orow[xx] += wt * irow[xx + dx];
                        }
                    }
                }
            }
        }
    }

    std::vector<ImplPtr<T>> inputs{x.impl(), weight.impl()};
    if (has_bias) inputs.push_back(bias.impl());
    auto fn = [N, Ci, H, W, Co, K, has_bias](std::span<const T> gout, const std::vector<ImplPtr<T>>& in) {
        const size_t HW = H * W;
        const ptrdiff_t r = static_cast<ptrdiff_t>(K / 2);
        const ptrdiff_t h = static_cast<ptrdiff_t>(H), w = static_cast<ptrdiff_t>(W);
        const ptrdiff_t k = static_cast<ptrdiff_t>(K);
        const T* xv = in[0]->values.data();
        const T* wv = in[1]->values.data();
        const T* gv = gout.data();
        if (in[0]->requires_grad) {
            T* gx = grad_buffer(*in[0]).data();
#pragma omp parallel for num_threads(thread_count()) schedule(static)
            for (ptrdiff_t job = 0; job < static_cast<ptrdiff_t>(N * Ci); ++job) {
                const size_t n = static_cast<size_t>(job) / Ci, ci = static_cast<size_t>(job) % Ci;
                T* gplane = gx + static_cast<size_t>(job) * HW;
                for (size_t co = 0; co < Co; ++co) {
                    const T* g = gv + (n * Co + co) * HW;
                    const T* wk = wv + (co * Ci + ci) * K * K;
                    for (ptrdiff_t y = 0; y < h; ++y) {
                        const T* grow = g + y * w;
                        for (ptrdiff_t ky = 0; ky < k; ++ky) {
                            const ptrdiff_t sy = y + ky - r;
                            if (sy < 0 || sy >= h) continue;
                            T* xrow = gplane + sy * w;
                            for (ptrdiff_t kx = 0; kx < k; ++kx) {
                                const ptrdiff_t dx = kx - r;
                                const T wt = wk[ky * k + kx];
                                const ptrdiff_t x0 = std::max<ptrdiff_t>(0, -dx), x1 = std::min(w, w - dx);
                                for (ptrdiff_t xx = x0; xx < x1; ++xx) xrow[xx + dx] += wt * grow[xx];
                            }
                        }
                    }
                }
            }
        }
        if (in[1]->requires_grad) {
            T* gw = grad_buffer(*in[1]).data();
#pragma omp parallel for num_threads(thread_count()) schedule(static)
            for (ptrdiff_t job = 0; job < static_cast<ptrdiff_t>(Co * Ci); ++job) {
                const size_t co = static_cast<size_t>(job) / Ci, ci = static_cast<size_t>(job) % Ci;
                std::vector<T> lanes(W);
                for (ptrdiff_t ky = 0; ky < k; ++ky) {
                    for (ptrdiff_t kx = 0; kx < k; ++kx) {
                        const ptrdiff_t dy = ky - r, dx = kx - r;
                        const ptrdiff_t y0 = std::max<ptrdiff_t>(0, -dy), y1 = std::min(h, h - dy);
                        const ptrdiff_t x0 = std::max<ptrdiff_t>(0, -dx), x1 = std::min(w, w - dx);
                        std::fill(lanes.begin(), lanes.end(), T(0));
                        for (size_t n = 0; n < N; ++n) {
                            const T* g = gv + (n * Co + co) * HW;
                            const T* xin = xv + (n * Ci + ci) * HW;
                            for (ptrdiff_t y = y0; y < y1; ++y) {
                                const T* grow = g + y * w;
                                const T* xrow = xin + (y + dy) * w + dx;
                                for (ptrdiff_t xx = x0; xx < x1; ++xx) lanes[xx] += grow[xx] * xrow[xx];
                            }
                        }
                        T acc = 0;
                        for (ptrdiff_t xx = x0; xx < x1; ++xx) acc += lanes[xx];
                        gw[static_cast<size_t>(job) * K * K + static_cast<size_t>(ky * k + kx)] += acc;
                    }
                }
            }
        }
        if (has_bias && in[2]->requires_grad) {
            T* gb = grad_buffer(*in[2]).data();
            for (size_t co = 0; co < Co; ++co) {
                T acc = 0;
                for (size_t n = 0; n < N; ++n) {
                    const T* g = gv + (n * Co + co) * HW;
                    for (size_t i = 0; i < HW; ++i) acc += g[i];
                }
                gb[co] += acc;
            }
        }
    };
    return make_output<T>({N, Co, H, W}, std::move(out), kind, std::move(inputs), std::move(fn));
}

template <typename T>
BasicTensor<T> stride2_downsample(const BasicTensor<T>& x) {
    constexpr auto kind = OpKind::stride2_downsample;
    require_rank(kind, x.shape(), 4, "input");
    const size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2) {
        throw ShapeError("stride2_downsample: spatial extents must be even, got " + shape_string(x.shape()));
    }
    const size_t Ho = H / 2, Wo = W / 2, planes = N * C;
    std::vector<T> out(planes * Ho * Wo);
    const T* xv = x.values().data();
    for (size_t p = 0; p < planes; ++p) {
        const T* in = xv + p * H * W;
        T* o = out.data() + p * Ho * Wo;
        for (size_t y = 0; y < Ho; ++y) {
            const T* r0 = in + (2 * y) * W;
            const T* r1 = r0 + W;
            for (size_t xx = 0; xx < Wo; ++xx) {
                o[y * Wo + xx] = T(0.25) * ((r0[2 * xx] + r0[2 * xx + 1]) + (r1[2 * xx] + r1[2 * xx + 1]));
            }
        }
    }
    auto fn = [planes, H, W, Ho, Wo](std::span<const T> gout, const std::vector<ImplPtr<T>>& in) {
        if (!in[0]->requires_grad) return;
        T* gx = grad_buffer(*in[0]).data();
        for (size_t p = 0; p < planes; ++p) {
            const T* g = gout.data() + p * Ho * Wo;
            T* gp = gx + p * H * W;
            for (size_t y = 0; y < H; ++y) {
                for (size_t xx = 0; xx < W; ++xx) gp[y * W + xx] += T(0.25) * g[(y / 2) * Wo + xx / 2];
            }
        }
    };
    return make_output<T>({N, C, Ho, Wo}, std::move(out), kind, {x.impl()}, std::move(fn));
}

template <typename T>
BasicTensor<T> nearest_upsample2x(const BasicTensor<T>& x) {
    constexpr auto kind = OpKind::nearest_upsample2x;
    require_rank(kind, x.shape(), 4, "input");
    const size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const size_t Ho = 2 * H, Wo = 2 * W, planes = N * C;
    std::vector<T> out(planes * Ho * Wo);
    const T* xv = x.values().data();
    for (size_t p = 0; p < planes; ++p) {
        const T* in = xv + p * H * W;
        T* o = out.data() + p * Ho * Wo;
        for (size_t y = 0; y < Ho; ++y) {
            for (size_t xx = 0; xx < Wo; ++xx) o[y * Wo + xx] = in[(y / 2) * W + xx / 2];
        }
    }
    auto fn = [planes, H, W, Ho, Wo](std::span<const T> gout, const std::vector<ImplPtr<T>>& in) {
        if (!in[0]->requires_grad) return;
        T* gx = grad_buffer(*in[0]).data();
        for (size_t p = 0; p < planes; ++p) {
            const T* g = gout.data() + p * Ho * Wo;
            T* gp = gx + p * H * W;
            for (size_t y = 0; y < H; ++y) {
                for (size_t xx = 0; xx < W; ++xx) {
                    const T* g0 = g + (2 * y) * Wo + 2 * xx;
                    gp[y * W + xx] += (g0[0] + g0[1]) + (g0[Wo] + g0[Wo + 1]);
                }
            }
        }
    };
    return make_output<T>({N, C, Ho, Wo}, std::move(out), kind, {x.impl()}, std::move(fn));
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
    constexpr auto kind = OpKind::concat_channels;
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Shape& first = parts[0].shape();
    require_rank(kind, first, 4, "input");
    size_t C = 0;
    std::vector<size_t> channels;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != 4 || s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
            shape_mismatch(kind, first, s, "batch and spatial extents must agree");
        }
        channels.push_back(s[1]);
        C += s[1];
    }
    const size_t N = first[0], HW = first[2] * first[3];
    std::vector<T> out(N * C * HW);
    for (size_t n = 0; n < N; ++n) {
        size_t offset = 0;
        for (size_t i = 0; i < parts.size(); ++i) {
            const T* src = parts[i].values().data() + n * channels[i] * HW;
            std::copy(src, src + channels[i] * HW, out.data() + (n * C + offset) * HW);
            offset += channels[i];
        }
    }
    std::vector<ImplPtr<T>> inputs;
    for (const auto& p : parts) inputs.push_back(p.impl());
    auto fn = [N, C, HW, channels](std::span<const T> gout, const std::vector<ImplPtr<T>>& in) {
        size_t offset = 0;
        for (size_t i = 0; i < in.size(); ++i) {
            if (in[i]->requires_grad) {
                T* g = grad_buffer(*in[i]).data();
                for (size_t n = 0; n < N; ++n) {
                    const T* src = gout.data() + (n * C + offset) * HW;
                    T* dst = g + n * channels[i] * HW;
                    for (size_t j = 0; j < channels[i] * HW; ++j) dst[j] += src[j];
                }
            }
            offset += channels[i];
        }
    };
    return make_output<T>({N, C, first[2], first[3]}, std::move(out), kind, std::move(inputs), std::move(fn));
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, T slope) {
    std::vector<T> out(x.values().begin(), x.values().end());
    if (t_kink_trace) {
        for (T v : out) t_kink_trace->push_back(v > T(0));
    }
    for (T& v : out) v = v > T(0) ? v : slope * v;
    auto fn = [slope](std::span<const T> gout, const std::vector<ImplPtr<T>>& in) {
        if (!in[0]->requires_grad) return;
        auto g = grad_buffer(*in[0]);
        const auto& xv = in[0]->values;
        for (size_t i = 0; i < g.size(); ++i) g[i] += xv[i] > T(0) ? gout[i] : slope * gout[i];
    };
    return make_output<T>(x.shape(), std::move(out), OpKind::leaky_relu, {x.impl()}, std::move(fn));
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.shape() != b.shape()) shape_mismatch(OpKind::add, a.shape(), b.shape(), "operands must match");
    std::vector<T> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto fn = [](std::span<const T> gout, const std::vector<ImplPtr<T>>& in) {
        for (const auto& operand : in) {
            if (!operand->requires_grad) continue;
            auto g = grad_buffer(*operand);
            for (size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
        }
    };
    return make_output<T>(a.shape(), std::move(out), OpKind::add, {a.impl(), b.impl()}, std::move(fn));
}

template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& prediction, const BasicTensor<T>& target) {
    if (prediction.shape() != target.shape()) {
        shape_mismatch(OpKind::mse_loss, prediction.shape(), target.shape(), "prediction and target must match");
    }
    const size_t n = prediction.size();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(prediction.values()[i]) - static_cast<double>(target.values()[i]);
        acc += d * d;
    }
    auto fn = [n](std::span<const T> gout, const std::vector<ImplPtr<T>>& in) {
        const T scale = T(2) * gout[0] / static_cast<T>(n);
        const auto& p = in[0]->values;
        const auto& t = in[1]->values;
        if (in[0]->requires_grad) {
            auto g = grad_buffer(*in[0]);
            for (size_t i = 0; i < n; ++i) g[i] += scale * (p[i] - t[i]);
        }
        if (in[1]->requires_grad) {
            auto g = grad_buffer(*in[1]);
            for (size_t i = 0; i < n; ++i) g[i] -= scale * (p[i] - t[i]);
        }
    };
    return make_output<T>({}, {static_cast<T>(acc / static_cast<double>(n))}, OpKind::mse_loss,
                          {prediction.impl(), target.impl()}, std::move(fn));
}

}  // namespace ops

template <typename T>
BasicTensor<T> forward_op(OpKind kind, std::span<const BasicTensor<T>> inputs, const OpAttrs& attrs) {
    auto arity = [&](size_t lo, size_t hi) {
        if (inputs.size() < lo || inputs.size() > hi) {
            throw std::invalid_argument(std::string(op_name(kind)) + ": expected " + std::to_string(lo) +
                                        (hi != lo ? "-" + std::to_string(hi) : std::string()) + " inputs, got " +
                                        std::to_string(inputs.size()));
        }
    };
    switch (kind) {
        case OpKind::conv2d:
            arity(2, 3);
            return ops::conv2d(inputs[0], inputs[1], inputs.size() == 3 ? inputs[2] : BasicTensor<T>());
        case OpKind::stride2_downsample: arity(1, 1); return ops::stride2_downsample(inputs[0]);
        case OpKind::nearest_upsample2x: arity(1, 1); return ops::nearest_upsample2x(inputs[0]);
        case OpKind::concat_channels: arity(1, inputs.size() + 1); return ops::concat_channels(inputs);
        case OpKind::leaky_relu: arity(1, 1); return ops::leaky_relu(inputs[0], static_cast<T>(attrs.slope));
        case OpKind::add: arity(2, 2); return ops::add(inputs[0], inputs[1]);
        case OpKind::mse_loss: arity(2, 2); return ops::mse_loss(inputs[0], inputs[1]);
    }
    throw std::invalid_argument("unknown op kind");
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
    if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_string(loss.shape()));
    if (!loss.requires_grad()) throw std::invalid_argument("backward: loss does not depend on any requires_grad tensor");

    // Iterative post-order DFS; reversed it is a topological order.
    std::vector<Impl<T>*> order;
    std::unordered_set<Impl<T>*> visited;
    std::vector<std::pair<Impl<T>*, size_t>> stack{{loss.impl().get(), 0}};
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto* fn = node->grad_fn.get();
        if (fn && next < fn->inputs.size()) {
            Impl<T>* child = fn->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Impl<T>* node : order) {
        if (node->grad_fn) node->grad.assign(node->values.size(), T(0));
    }
    grad_buffer(*loss.impl())[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Impl<T>* node = *it;
        if (!node->grad_fn) continue;
        const auto& fn = *node->grad_fn;
        if (t_corrupt_active && fn.kind == t_corrupt_kind) {
            std::vector<T> scaled(node->grad);
            for (T& g : scaled) g = static_cast<T>(g * t_corrupt_scale);
            fn.backward(scaled, fn.inputs);
        } else {
            fn.backward(node->grad, fn.inputs);
        }
    }
}

// --- Adam ----------------------------------------------------------------------

template <typename T>
AdamState<T>::AdamState(std::span<const BasicTensor<T>> params, AdamConfig cfg) : config(cfg) {
    if (!(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1)) {
        throw std::invalid_argument("Adam betas must lie in [0, 1)");
    }
    if (!(cfg.epsilon > 0)) throw std::invalid_argument("Adam epsilon must be positive");
    if (!(cfg.learning_rate > 0)) throw std::invalid_argument("Adam learning rate must be positive");
    for (const auto& p : params) {
        first_moment.emplace_back(p.size(), T(0));
        second_moment.emplace_back(p.size(), T(0));
    }
}

template <typename T>
void adam_step(std::span<BasicTensor<T>> params, AdamState<T>& state) {
    if (params.size() != state.first_moment.size()) {
        throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                                    " parameters, got " + std::to_string(params.size()));
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) throw std::invalid_argument("adam_step: parameter " + std::to_string(i) + " has no grad");
        if (params[i].size() != state.first_moment[i].size()) {
            throw ShapeError("adam_step: moment buffer shape does not match parameter " + std::to_string(i));
        }
    }
    ++state.step_count;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    for (size_t i = 0; i < params.size(); ++i) {
        auto v = params[i].values();
        auto g = params[i].grad();
        auto& m1 = state.first_moment[i];
        auto& m2 = state.second_moment[i];
        for (size_t j = 0; j < v.size(); ++j) {
            m1[j] = b1 * m1[j] + (T(1) - b1) * g[j];
            m2[j] = b2 * m2[j] + (T(1) - b2) * g[j] * g[j];
            const double mhat = static_cast<double>(m1[j]) / bc1;
            const double vhat = static_cast<double>(m2[j]) / bc2;
            v[j] = static_cast<T>(static_cast<double>(v[j]) - c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon));
        }
    }
}

// --- grad check --------------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

ScopedFiniteCheck::ScopedFiniteCheck() : previous_(t_check_finite) { t_check_finite = true; }
ScopedFiniteCheck::~ScopedFiniteCheck() { t_check_finite = previous_; }

namespace fault {
ScopedBackwardCorruption::ScopedBackwardCorruption(OpKind kind, double scale) {
    t_corrupt_active = true;
    t_corrupt_kind = kind;
    t_corrupt_scale = scale;
}
ScopedBackwardCorruption::~ScopedBackwardCorruption() { t_corrupt_active = false; }
}  // namespace fault

GradCheckReport grad_check(const std::function<Tensor()>& forward, std::span<Tensor> params, double tolerance,
                           const GradCheckOptions& options) {
    ScopedFiniteCheck finite;
    std::vector<bool> base_signs, signs;
    struct TraceGuard {
        explicit TraceGuard(std::vector<bool>* trace) { t_kink_trace = trace; }
        ~TraceGuard() { t_kink_trace = nullptr; }
    };
    auto traced = [&](std::vector<bool>& into) {
        into.clear();
        TraceGuard guard(options.skip_kink_crossings ? &into : nullptr);
        return forward();
    };

    for (auto& p : params) p.zero_grad();
    const Tensor loss = traced(base_signs);
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

    GradCheckReport report;
    std::mt19937_64 rng(options.seed);
    const double h = options.step;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto values = params[pi].values();
        std::vector<size_t> indices;
        if (options.samples_per_param == 0 || options.samples_per_param >= values.size()) {
            indices.resize(values.size());
            std::iota(indices.begin(), indices.end(), size_t{0});
        } else {
            std::uniform_int_distribution<size_t> pick(0, values.size() - 1);
            for (size_t s = 0; s < options.samples_per_param; ++s) indices.push_back(pick(rng));
        }
        for (size_t idx : indices) {
            const double original = values[idx];
            values[idx] = original + h;
            const double plus = traced(signs).item();
            bool crossed = signs != base_signs;
            values[idx] = original - h;
            const double minus = traced(signs).item();
            crossed = crossed || signs != base_signs;
            values[idx] = original;
            if (crossed) {
                ++report.kink_crossings;
                continue;
            }
            const double fd = (plus - minus) / (2 * h);
            const double err = std::abs(analytic[pi][idx] - fd) / std::max(std::abs(fd), 1e-8);
            ++report.checked;
            if (report.checked == 1 || err > report.max_relative_error) {
                report.max_relative_error = err;
                report.worst_param = pi;
                report.worst_index = idx;
            }
        }
    }
    report.passed = report.checked > 0 && report.max_relative_error < tolerance;
    return report;
}

// --- checkpoint -----------------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> entries) {
    ByteWriter out;
    out.put_bytes("NSBW");
    out.put_u16(kCheckpointVersion);
    for (const auto& e : entries) {
        if (e.name.size() > 0xffff) throw std::invalid_argument("checkpoint entry name too long: " + e.name);
        if (e.tensor.rank() > 0xff) throw std::invalid_argument("checkpoint tensor rank too large: " + e.name);
        out.put_u16(static_cast<std::uint16_t>(e.name.size()));
        out.put_bytes(e.name);
        out.put_u8(static_cast<std::uint8_t>(e.tensor.rank()));
        for (size_t extent : e.tensor.shape()) out.put_u32(static_cast<std::uint32_t>(extent));
        for (float v : e.tensor.values()) out.put_f32(v);
    }
    return std::move(out).take();
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("NSBW");
    in.expect_version(kCheckpointVersion);
    std::vector<NamedTensor> entries;
    while (!in.at_end()) {
        NamedTensor e;
        e.name = in.bytes(in.u16());
        const auto rank = in.u8();
        Shape shape;
        for (unsigned i = 0; i < rank; ++i) {
            const auto extent = in.u32();
            if (extent == 0) throw FormatError(FormatErrorKind::malformed, "zero extent in entry " + e.name);
            shape.push_back(extent);
        }
        const size_t n = shape_size(shape);
        if (in.remaining() / 4 < n) {
            throw FormatError(FormatErrorKind::truncated_payload, "entry " + e.name + " needs " + std::to_string(n) + " floats");
        }
        std::vector<float> values(n);
        for (auto& v : values) v = in.f32();
        e.tensor = Tensor32::from_values(std::move(shape), std::move(values));
        entries.push_back(std::move(e));
    }
    return entries;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> entries) {
    write_file(path, encode_checkpoint(entries));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path));
}

#define NSB_INSTANTIATE(T)                                                                                   \
    template class BasicTensor<T>;                                                                           \
    template BasicTensor<T> ops::conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> ops::stride2_downsample(const BasicTensor<T>&);                                  \
    template BasicTensor<T> ops::nearest_upsample2x(const BasicTensor<T>&);                                  \
    template BasicTensor<T> ops::concat_channels(std::span<const BasicTensor<T>>);                            \
    template BasicTensor<T> ops::leaky_relu(const BasicTensor<T>&, T);                                        \
    template BasicTensor<T> ops::add(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template BasicTensor<T> ops::mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> forward_op(OpKind, std::span<const BasicTensor<T>>, const OpAttrs&);              \
    template void backward(const BasicTensor<T>&);                                                           \
    template struct AdamState<T>;                                                                            \
    template void adam_step(std::span<BasicTensor<T>>, AdamState<T>&);

NSB_INSTANTIATE(float)
NSB_INSTANTIATE(double)

#undef NSB_INSTANTIATE

}  // namespace nsb
