#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spectraflake/cube.hpp"
#include "spectraflake/parallel.hpp"
#include "spectraflake/tensor.hpp"

namespace spectraflake {

enum class Activation : std::uint32_t { linear = 0, relu = 1, tanh = 2 };

inline std::string to_string(Activation a) {
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    }
    return "linear";
}

// Same-size stride-1 convolution. Weights are laid out (O, kh, kw, Cin).
template <typename T>
struct ConvLayer {
    std::size_t out_channels = 0;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t in_channels = 0;
    std::vector<T> weights;
    std::vector<T> biases;
    Activation activation = Activation::linear;

    ConvLayer() = default;
    ConvLayer(std::size_t out, std::size_t kh, std::size_t kw, std::size_t in, Activation act)
        : out_channels(out), kernel_h(kh), kernel_w(kw), in_channels(in),
          weights(out * kh * kw * in, T(0)), biases(out, T(0)), activation(act) {
        validate();
    }

    std::size_t filter_size() const { return kernel_h * kernel_w * in_channels; }
    std::size_t radius() const { return std::max(kernel_h, kernel_w) / 2; }

    T& weight(std::size_t o, std::size_t dy, std::size_t dx, std::size_t c) {
        return weights[((o * kernel_h + dy) * kernel_w + dx) * in_channels + c];
    }
    T weight(std::size_t o, std::size_t dy, std::size_t dx, std::size_t c) const {
        return weights[((o * kernel_h + dy) * kernel_w + dx) * in_channels + c];
    }

    void validate() const {
        if (kernel_h % 2 == 0 || kernel_w % 2 == 0)
            throw ValidationError("convolution kernels must have odd size, got " + std::to_string(kernel_h) + "x" +
                                  std::to_string(kernel_w));
        if (out_channels == 0 || in_channels == 0) throw ValidationError("convolution with zero channels");
        if (weights.size() != out_channels * filter_size() || biases.size() != out_channels)
            throw ValidationError("convolution parameter buffers do not match the layer shape");
    }

    template <typename U>
    ConvLayer<U> cast() const {
        ConvLayer<U> out;
        out.out_channels = out_channels;
        out.kernel_h = kernel_h;
        out.kernel_w = kernel_w;
        out.in_channels = in_channels;
        out.weights.assign(weights.begin(), weights.end());
        out.biases.assign(biases.begin(), biases.end());
        out.activation = activation;
        return out;
    }

    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

namespace detail {

// Dot product with a fixed accumulation order that depends only on n, so
// identical operands always round identically regardless of where they
// live in memory.
// Accumulates in double.
template <typename T>
inline double dot(const T* a, const T* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i]) * b[i];
        s1 += static_cast<double>(a[i + 1]) * b[i + 1];
        s2 += static_cast<double>(a[i + 2]) * b[i + 2];
        s3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
    return (s0 + s1) + (s2 + s3);
}

template <typename T>
inline void axpy(T* y, T a, const T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline void require_rank3(const std::vector<std::size_t>& shape, const char* op) {
    if (shape.size() != 3) throw ValidationError(std::string(op) + ": expected an (H, W, C) tensor");
}

// Fixed row partition for gradient reductions; independent of thread count.
inline constexpr std::size_t kReductionBlocks = 8;

} // namespace detail

// out(y,x,o) = b_o + sum in(y+dy-rh, x+dx-rw, c) w(o,dy,dx,c), zero padded.
// The activation is not applied.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayer<T>& layer) {
    detail::require_rank3(input.shape(), "conv2d_forward");
    if (input.channels() != layer.in_channels)
        throw ValidationError("conv2d_forward: input has " + std::to_string(input.channels()) +
                              " channels, layer expects " + std::to_string(layer.in_channels));
    const std::size_t H = input.height(), W = input.width(), C = layer.in_channels;
    const std::size_t O = layer.out_channels, KH = layer.kernel_h, KW = layer.kernel_w;
    const auto rh = static_cast<std::ptrdiff_t>(KH / 2), rw = static_cast<std::ptrdiff_t>(KW / 2);
    auto out = Tensor<T>::hwc(H, W, O);

    parallel_for(0, H, [&](std::size_t y) {
        for (std::size_t x = 0; x < W; ++x) {
            const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(x) - rw;
            const std::size_t dx0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -ix0));
            const std::size_t dx1 = static_cast<std::size_t>(
                std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(KW), static_cast<std::ptrdiff_t>(W) - ix0));
            const std::size_t span = (dx1 - dx0) * C;
            T* dst = out.ptr(y, x);
            for (std::size_t o = 0; o < O; ++o) {
                double acc = 0;
                for (std::size_t dy = 0; dy < KH; ++dy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - rh;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    const T* src = input.ptr(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix0 + static_cast<std::ptrdiff_t>(dx0)));
                    const T* w = layer.weights.data() + ((o * KH + dy) * KW + dx0) * C;
                    acc += detail::dot(src, w, span);
                }
                dst[o] = static_cast<T>(acc + static_cast<double>(layer.biases[o]));
            }
        }
    });
    return out;
}

template <typename T>
struct ConvGradients {
    Tensor<T> input;
    std::vector<T> weights;
    std::vector<T> biases;
};

// Exact gradients of conv2d_forward with respect to input, weights and biases.
template <typename T>
ConvGradients<T> conv2d_backward(const Tensor<T>& input, const ConvLayer<T>& layer, const Tensor<T>& grad_out,
                                 bool need_input_grad = true) {
    detail::require_rank3(input.shape(), "conv2d_backward");
    detail::require_rank3(grad_out.shape(), "conv2d_backward");
    if (input.channels() != layer.in_channels || grad_out.channels() != layer.out_channels ||
        grad_out.height() != input.height() || grad_out.width() != input.width())
        throw ValidationError("conv2d_backward: input, layer and grad_out shapes are inconsistent");
    const std::size_t H = input.height(), W = input.width(), C = layer.in_channels;
    const std::size_t O = layer.out_channels, KH = layer.kernel_h, KW = layer.kernel_w;
    const auto rh = static_cast<std::ptrdiff_t>(KH / 2), rw = static_cast<std::ptrdiff_t>(KW / 2);

    ConvGradients<T> g;
    if (need_input_grad) {
        g.input = Tensor<T>::hwc(H, W, C);
        // grad_in(y,x,c) = sum g(y+rh-dy, x+rw-dx, o) w(o,dy,dx,c)
        parallel_for(0, H, [&](std::size_t y) {
            for (std::size_t x = 0; x < W; ++x) {
                T* acc = g.input.ptr(y, x);
                for (std::size_t dy = 0; dy < KH; ++dy) {
                    const std::ptrdiff_t gy = static_cast<std::ptrdiff_t>(y) + rh - static_cast<std::ptrdiff_t>(dy);
                    if (gy < 0 || gy >= static_cast<std::ptrdiff_t>(H)) continue;
                    for (std::size_t dx = 0; dx < KW; ++dx) {
                        const std::ptrdiff_t gx = static_cast<std::ptrdiff_t>(x) + rw - static_cast<std::ptrdiff_t>(dx);
                        if (gx < 0 || gx >= static_cast<std::ptrdiff_t>(W)) continue;
                        const T* go = grad_out.ptr(static_cast<std::size_t>(gy), static_cast<std::size_t>(gx));
                        for (std::size_t o = 0; o < O; ++o) {
                            if (go[o] == T(0)) continue;
                            detail::axpy(acc, go[o], layer.weights.data() + ((o * KH + dy) * KW + dx) * C, C);
                        }
                    }
                }
            }
        });
    }

    const std::size_t blocks = std::min(detail::kReductionBlocks, std::max<std::size_t>(H, 1));
    const std::size_t rows_per_block = (H + blocks - 1) / blocks;
    std::vector<std::vector<T>> part_w(blocks), part_b(blocks);
    parallel_for(0, blocks, [&](std::size_t b) {
        auto& pw = part_w[b];
        auto& pb = part_b[b];
        pw.assign(layer.weights.size(), T(0));
        pb.assign(O, T(0));
        const std::size_t y_end = std::min(H, (b + 1) * rows_per_block);
        for (std::size_t y = b * rows_per_block; y < y_end; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const T* go = grad_out.ptr(y, x);
                const std::ptrdiff_t ix0 = static_cast<std::ptrdiff_t>(x) - rw;
                const std::size_t dx0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -ix0));
                const std::size_t dx1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
                    static_cast<std::ptrdiff_t>(KW), static_cast<std::ptrdiff_t>(W) - ix0));
                const std::size_t span = (dx1 - dx0) * C;
                for (std::size_t o = 0; o < O; ++o) {
                    if (go[o] == T(0)) continue;
                    pb[o] += go[o];
                    for (std::size_t dy = 0; dy < KH; ++dy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - rh;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                        const T* src = input.ptr(static_cast<std::size_t>(iy),
                                                 static_cast<std::size_t>(ix0 + static_cast<std::ptrdiff_t>(dx0)));
                        detail::axpy(pw.data() + ((o * KH + dy) * KW + dx0) * C, go[o], src, span);
                    }
                }
            }
    });
    g.weights.assign(layer.weights.size(), T(0));
    g.biases.assign(O, T(0));
    for (std::size_t b = 0; b < blocks; ++b) {
        for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] += part_w[b][i];
        for (std::size_t o = 0; o < O; ++o) g.biases[o] += part_b[b][o];
    }
    return g;
}

template <typename T>
Tensor<T> activation_forward(Activation kind, Tensor<T> t) {
    switch (kind) {
    case Activation::linear: break;
    case Activation::relu:
        for (T& v : t.data()) v = v > T(0) ? v : T(0);
        break;
    case Activation::tanh:
        for (T& v : t.data()) v = std::tanh(v);
        break;
    }
    return t;
}

// Multiplies the upstream gradient by the local derivative evaluated at the
// pre-activation input.
template <typename T>
Tensor<T> activation_backward(Activation kind, const Tensor<T>& pre_activation, Tensor<T> grad) {
    if (pre_activation.shape() != grad.shape())
        throw ValidationError("activation_backward: shape mismatch");
    auto g = grad.data();
    auto x = pre_activation.data();
    switch (kind) {
    case Activation::linear: break;
    case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(x[i] > T(0))) g[i] = T(0);
        break;
    case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T th = std::tanh(x[i]);
            g[i] *= T(1) - th * th;
        }
        break;
    }
    return grad;
}

// Channel-wise softmax with max shift.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    detail::require_rank3(logits.shape(), "softmax");
    Tensor<T> out = logits;
    const std::size_t n = logits.channels();
    for (std::size_t p = 0; p < logits.height() * logits.width(); ++p) {
        T* v = out.data().data() + p * n;
        const T mx = *std::max_element(v, v + n);
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            v[k] = std::exp(v[k] - mx);
            sum += v[k];
        }
        for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<T>(v[k] / sum);
    }
    return out;
}

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor<T> grad_logits;
};

// Mean cross-entropy over all pixels; grad = (softmax - onehot) / pixels.
template <typename T>
LossResult<T> softmax_xent(const Tensor<T>& logits, const LabelMask& target) {
    detail::require_rank3(logits.shape(), "softmax_xent");
    if (target.height != logits.height() || target.width != logits.width())
        throw ValidationError("softmax_xent: target mask does not match logits");
    const std::size_t n = logits.channels();
    target.check_range(n);
    const std::size_t pixels = target.labels.size();
    LossResult<T> r{0.0, Tensor<T>(logits.shape())};
    if (pixels == 0) return r;
    const double inv = 1.0 / static_cast<double>(pixels);
    double total = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
        const T* z = logits.data().data() + p * n;
        T* g = r.grad_logits.data().data() + p * n;
        const double mx = *std::max_element(z, z + n);
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) sum += std::exp(static_cast<double>(z[k]) - mx);
        const double lse = mx + std::log(sum);
        const std::size_t t = target.labels[p];
        total += lse - static_cast<double>(z[t]);
        for (std::size_t k = 0; k < n; ++k) {
            const double prob = std::exp(static_cast<double>(z[k]) - lse);
            g[k] = static_cast<T>((prob - (k == t ? 1.0 : 0.0)) * inv);
        }
    }
    r.loss = total * inv;
    return r;
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    AdamConfig config;
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::size_t t = 0;
};

// One bias-corrected Adam update. Moment buffers are allocated on the
// first call and must keep the same shapes afterwards.
template <typename T>
void adam_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state) {
    if (params.size() != grads.size()) throw ValidationError("adam_step: parameter and gradient counts differ");
    if (state.m.empty() && state.t == 0) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), T(0));
            state.v.emplace_back(p.size(), T(0));
        }
    }
    if (state.m.size() != params.size()) throw ValidationError("adam_step: state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].size() != grads[i].size() || state.m[i].size() != params[i].size())
            throw ValidationError("adam_step: shape mismatch for parameter " + std::to_string(i));

    ++state.t;
    const auto& cfg = state.config;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i];
        auto g = grads[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gk = g[k];
            const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            m[k] = static_cast<T>(mk);
            v[k] = static_cast<T>(vk);
            const double mhat = mk / bc1;
            const double vhat = vk / bc2;
            p[k] = static_cast<T>(p[k] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

// Glorot-uniform weights, zero biases.
template <typename T, typename Rng>
void init_weights(ConvLayer<T>& layer, Rng& rng) {
    const double fan_in = static_cast<double>(layer.filter_size());
    const double fan_out = static_cast<double>(layer.out_channels * layer.kernel_h * layer.kernel_w);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (T& w : layer.weights) w = static_cast<T>(dist(rng));
    std::fill(layer.biases.begin(), layer.biases.end(), T(0));
}

} // namespace spectraflake
