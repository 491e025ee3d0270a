#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectraflake/cube.hpp"
#include "spectraflake/nn.hpp"
#include "spectraflake/parallel.hpp"
#include "spectraflake/tensor.hpp"

namespace spectraflake {

// Mean spectrum per class. labels[i] is the class index of spectra[i].
struct ReferenceSpectra {
    std::vector<std::uint8_t> labels;
    std::vector<std::vector<double>> spectra;
    std::vector<std::size_t> pixel_counts;

    std::size_t size() const { return labels.size(); }
    std::size_t channels() const { return spectra.empty() ? 0 : spectra.front().size(); }
};

struct LabeledCube {
    HSCube cube;
    LabelMask mask;
};

// Per-class mean over labeled pixels. Background (label 0) is included
// unless include_background is false. Every requested class needs at least
// one pixel.
inline ReferenceSpectra compute_reference_spectra(std::span<const LabeledCube> set, const ClassCatalog& catalog,
                                                  bool include_background = true) {
    if (set.empty()) throw ValidationError("compute_reference_spectra: empty training set");
    const std::size_t C = set.front().cube.channels();
    const std::size_t n = catalog.size();
    std::vector<std::vector<double>> sums(n, std::vector<double>(C, 0.0));
    std::vector<std::size_t> counts(n, 0);
    for (const auto& item : set) {
        if (item.cube.channels() != C) throw ValidationError("compute_reference_spectra: channel counts differ");
        if (item.mask.height != item.cube.height() || item.mask.width != item.cube.width())
            throw ValidationError("compute_reference_spectra: mask does not match cube");
        item.mask.check_range(n);
        for (std::size_t y = 0; y < item.cube.height(); ++y)
            for (std::size_t x = 0; x < item.cube.width(); ++x) {
                const auto l = item.mask(y, x);
                auto px = item.cube.pixel(y, x);
                for (std::size_t c = 0; c < C; ++c) sums[l][c] += px[c];
                ++counts[l];
            }
    }
    ReferenceSpectra refs;
    for (std::size_t l = include_background ? 0 : 1; l < n; ++l) {
        if (counts[l] == 0)
            throw ValidationError("compute_reference_spectra: class '" + catalog.name(l) + "' has no labeled pixels");
        for (double& v : sums[l]) v /= static_cast<double>(counts[l]);
        refs.labels.push_back(static_cast<std::uint8_t>(l));
        refs.spectra.push_back(std::move(sums[l]));
        refs.pixel_counts.push_back(counts[l]);
    }
    return refs;
}

// Classic spectral angle mapping: argmin over references of
// acos(clamp(x.r / (|x| |r|))). Ties go to the earlier reference;
// zero-norm pixels are background.
inline LabelMask sam_classify_oracle(const HSCube& cube, const ReferenceSpectra& refs) {
    if (refs.size() == 0) throw ValidationError("sam_classify_oracle: no reference spectra");
    if (refs.channels() != cube.channels())
        throw ValidationError("sam_classify_oracle: references have " + std::to_string(refs.channels()) +
                              " channels, cube has " + std::to_string(cube.channels()));
    std::vector<double> ref_norm(refs.size());
    for (std::size_t k = 0; k < refs.size(); ++k) {
        double s = 0.0;
        for (double v : refs.spectra[k]) s += v * v;
        ref_norm[k] = std::sqrt(s);
    }
    LabelMask mask(cube.height(), cube.width());
    for (std::size_t y = 0; y < cube.height(); ++y)
        for (std::size_t x = 0; x < cube.width(); ++x) {
            auto px = cube.pixel(y, x);
            double nx = 0.0;
            for (float v : px) nx += static_cast<double>(v) * v;
            nx = std::sqrt(nx);
            if (nx == 0.0) {
                mask(y, x) = 0;
                continue;
            }
            double best = std::numeric_limits<double>::infinity();
            std::uint8_t label = 0;
            for (std::size_t k = 0; k < refs.size(); ++k) {
                double d = 0.0;
                for (std::size_t c = 0; c < px.size(); ++c) d += px[c] * refs.spectra[k][c];
                const double denom = nx * ref_norm[k];
                const double cosine = denom > 0.0 ? std::clamp(d / denom, -1.0, 1.0) : -1.0;
                const double angle = std::acos(cosine);
                if (angle < best) {
                    best = angle;
                    label = refs.labels[k];
                }
            }
            mask(y, x) = label;
        }
    return mask;
}

enum class ModelKind : std::uint32_t { custom = 0, samnet = 1, samnet3 = 2, mlpnet = 3, plasticnet = 4, plasticnetxl = 5 };

inline std::string to_string(ModelKind k) {
    switch (k) {
    case ModelKind::custom: return "custom";
    case ModelKind::samnet: return "samnet";
    case ModelKind::samnet3: return "samnet3";
    case ModelKind::mlpnet: return "mlpnet";
    case ModelKind::plasticnet: return "plasticnet";
    case ModelKind::plasticnetxl: return "plasticnetxl";
    }
    return "custom";
}

inline ModelKind parse_model_kind(const std::string& s) {
    for (auto k : {ModelKind::samnet, ModelKind::samnet3, ModelKind::mlpnet, ModelKind::plasticnet,
                   ModelKind::plasticnetxl})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown model '" + s + "' (expected samnet, samnet3, mlpnet, plasticnet, plasticnetxl)");
}

// Cosine heads normalize every input pixel to unit length and score with a
// linear convolution; softmax heads turn the last layer into probabilities.
enum class Head { softmax, cosine };

inline Head head_for(ModelKind k) {
    return (k == ModelKind::samnet || k == ModelKind::samnet3) ? Head::cosine : Head::softmax;
}

template <typename T>
struct Model {
    ModelKind kind = ModelKind::custom;
    std::vector<ConvLayer<T>> layers;
    bool trainable = true;

    Head head() const { return head_for(kind); }
    std::size_t input_channels() const { return layers.empty() ? 0 : layers.front().in_channels; }
    std::size_t n_classes() const { return layers.empty() ? 0 : layers.back().out_channels; }

    template <typename U>
    Model<U> cast() const {
        Model<U> m;
        m.kind = kind;
        m.trainable = trainable;
        for (const auto& l : layers) m.layers.push_back(l.template cast<U>());
        return m;
    }

    friend bool operator==(const Model&, const Model&) = default;
};

// Layer-chain checks plus the per-kind structure (layer count, kernel sizes,
// activations). Channel widths may differ from the 224-band layouts because
// models are rebuilt for the pre-processed channel count.
template <typename T>
void validate_model(const Model<T>& m) {
    if (m.layers.empty()) throw ValidationError("model has no layers");
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        m.layers[i].validate();
        if (i > 0 && m.layers[i].in_channels != m.layers[i - 1].out_channels)
            throw ValidationError("layer " + std::to_string(i) + " expects " +
                                  std::to_string(m.layers[i].in_channels) + " input channels but layer " +
                                  std::to_string(i - 1) + " produces " + std::to_string(m.layers[i - 1].out_channels));
        if (!std::all_of(m.layers[i].weights.begin(), m.layers[i].weights.end(), [](T v) { return std::isfinite(v); }))
            throw ValidationError("layer " + std::to_string(i) + " has non-finite weights");
    }
    auto expect = [&](std::vector<std::size_t> kernels, std::vector<Activation> acts) {
        if (m.layers.size() != kernels.size())
            throw ValidationError(to_string(m.kind) + " must have " + std::to_string(kernels.size()) + " layers");
        for (std::size_t i = 0; i < kernels.size(); ++i)
            if (m.layers[i].kernel_h != kernels[i] || m.layers[i].kernel_w != kernels[i] ||
                m.layers[i].activation != acts[i])
                throw ValidationError(to_string(m.kind) + " layer " + std::to_string(i) + " has the wrong shape");
    };
    using A = Activation;
    switch (m.kind) {
    case ModelKind::custom: break;
    case ModelKind::samnet: expect({1}, {A::linear}); break;
    case ModelKind::samnet3: expect({3}, {A::linear}); break;
    case ModelKind::mlpnet: expect({1, 1, 1}, {A::tanh, A::tanh, A::linear}); break;
    case ModelKind::plasticnet: expect({3, 5, 7, 1}, {A::relu, A::relu, A::relu, A::linear}); break;
    case ModelKind::plasticnetxl: expect({3, 7, 13, 1}, {A::relu, A::relu, A::relu, A::linear}); break;
    }
}

// One filter per reference spectrum, replicated over a footprint x footprint
// window, then the whole filter scaled to unit Euclidean norm. Biases are
// zero and the weights are frozen unless the caller enables training.
template <typename T = float>
Model<T> build_samnet(const ReferenceSpectra& refs, std::size_t footprint = 1) {
    if (footprint != 1 && footprint != 3)
        throw ValidationError("build_samnet: unsupported footprint " + std::to_string(footprint) + " (expected 1 or 3)");
    if (refs.size() == 0) throw ValidationError("build_samnet: no reference spectra");
    for (std::size_t k = 0; k < refs.size(); ++k)
        if (refs.labels[k] != k)
            throw ValidationError("build_samnet: reference spectra must cover classes 0..n-1 in order");
    const std::size_t C = refs.channels();
    Model<T> m;
    m.kind = footprint == 1 ? ModelKind::samnet : ModelKind::samnet3;
    m.trainable = false;
    ConvLayer<T> layer(refs.size(), footprint, footprint, C, Activation::linear);
    for (std::size_t o = 0; o < refs.size(); ++o) {
        double sq = 0.0;
        for (double v : refs.spectra[o]) sq += v * v;
        const double norm = std::sqrt(sq * static_cast<double>(footprint * footprint));
        if (!(norm > 0.0)) throw ValidationError("build_samnet: reference spectrum " + std::to_string(o) + " is zero");
        for (std::size_t dy = 0; dy < footprint; ++dy)
            for (std::size_t dx = 0; dx < footprint; ++dx)
                for (std::size_t c = 0; c < C; ++c)
                    layer.weight(o, dy, dx, c) = static_cast<T>(refs.spectra[o][c] / norm);
    }
    m.layers.push_back(std::move(layer));
    return m;
}

// 1x1 layers C -> C -> 256 -> n with TanH hidden activations.
template <typename T = float>
Model<T> build_mlpnet(std::size_t channels = 224, std::size_t n_classes = 5, std::uint64_t seed = 0) {
    if (channels == 0 || n_classes == 0) throw ValidationError("build_mlpnet: channels and classes must be positive");
    std::mt19937_64 rng(seed);
    Model<T> m;
    m.kind = ModelKind::mlpnet;
    m.layers.emplace_back(channels, 1, 1, channels, Activation::tanh);
    m.layers.emplace_back(256, 1, 1, channels, Activation::tanh);
    m.layers.emplace_back(n_classes, 1, 1, 256, Activation::linear);
    for (auto& l : m.layers) init_weights(l, rng);
    return m;
}

// Hidden widths C/2, C/4, C/8 (112, 56, 28 for 224 bands) with kernels
// 3/5/7 (default) or 3/7/13 (XL), ReLU activations and a 1x1 class layer.
template <typename T = float>
Model<T> build_plasticnet(std::size_t channels = 224, std::size_t n_classes = 5, bool xl = false,
                          std::uint64_t seed = 0) {
    if (channels == 0 || n_classes == 0)
        throw ValidationError("build_plasticnet: channels and classes must be positive");
    std::mt19937_64 rng(seed);
    Model<T> m;
    m.kind = xl ? ModelKind::plasticnetxl : ModelKind::plasticnet;
    const std::size_t w1 = std::max<std::size_t>(channels / 2, 1);
    const std::size_t w2 = std::max<std::size_t>(channels / 4, 1);
    const std::size_t w3 = std::max<std::size_t>(channels / 8, 1);
    m.layers.emplace_back(w1, 3, 3, channels, Activation::relu);
    m.layers.emplace_back(w2, xl ? 7 : 5, xl ? 7 : 5, w1, Activation::relu);
    m.layers.emplace_back(w3, xl ? 13 : 7, xl ? 13 : 7, w2, Activation::relu);
    m.layers.emplace_back(n_classes, 1, 1, w3, Activation::linear);
    for (auto& l : m.layers) init_weights(l, rng);
    return m;
}

template <typename T = float>
Model<T> build_model(ModelKind kind, std::size_t channels, std::size_t n_classes, std::uint64_t seed = 0,
                     const ReferenceSpectra* refs = nullptr) {
    switch (kind) {
    case ModelKind::samnet:
    case ModelKind::samnet3:
        if (!refs) throw ValidationError(to_string(kind) + " needs reference spectra");
        return build_samnet<T>(*refs, kind == ModelKind::samnet ? 1 : 3);
    case ModelKind::mlpnet: return build_mlpnet<T>(channels, n_classes, seed);
    case ModelKind::plasticnet: return build_plasticnet<T>(channels, n_classes, false, seed);
    case ModelKind::plasticnetxl: return build_plasticnet<T>(channels, n_classes, true, seed);
    case ModelKind::custom: break;
    }
    throw ValidationError("build_model: cannot build a custom model");
}

struct ComplexityReport {
    std::uint64_t ops_per_pixel = 0;
    std::uint64_t parameters = 0;

    friend bool operator==(const ComplexityReport&, const ComplexityReport&) = default;
};

// Multiplies per output pixel and weight + bias count.
template <typename T>
ComplexityReport count_complexity(const Model<T>& m) {
    ComplexityReport r;
    for (const auto& l : m.layers) {
        const std::uint64_t ops = static_cast<std::uint64_t>(l.out_channels) * l.kernel_h * l.kernel_w * l.in_channels;
        r.ops_per_pixel += ops;
        r.parameters += ops + l.out_channels;
    }
    return r;
}

// Sum of kernel half-widths; stride-1 convolutions only.
template <typename T>
std::size_t receptive_field_radius(const Model<T>& m) {
    std::size_t r = 0;
    for (const auto& l : m.layers) r += l.radius();
    return r;
}

template <typename T>
void normalize_pixels(Tensor<T>& t) {
    const std::size_t n = t.channels();
    for (std::size_t p = 0; p < t.height() * t.width(); ++p) {
        T* v = t.data().data() + p * n;
        double sq = 0.0;
        for (std::size_t k = 0; k < n; ++k) sq += static_cast<double>(v[k]) * v[k];
        if (sq == 0.0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<T>(v[k] * inv);
    }
}

// Last-layer outputs before the softmax: logits, or cosine scores for
// cosine heads.
template <typename T>
Tensor<T> forward_scores(const Model<T>& m, Tensor<T> input) {
    if (input.channels() != m.input_channels())
        throw ValidationError("model expects " + std::to_string(m.input_channels()) + " input channels, got " +
                              std::to_string(input.channels()));
    if (m.head() == Head::cosine) normalize_pixels(input);
    for (const auto& layer : m.layers) input = activation_forward(layer.activation, conv2d_forward(input, layer));
    return input;
}

// Per-class probabilities for softmax heads, cosine scores otherwise.
template <typename T>
Tensor<T> forward(const Model<T>& m, Tensor<T> input) {
    auto scores = forward_scores(m, std::move(input));
    if (m.head() == Head::softmax) return softmax(scores);
    return scores;
}

// Per-pixel argmax; ties resolve to the lowest class index.
template <typename T>
LabelMask argmax_labels(const Tensor<T>& scores) {
    LabelMask mask(scores.height(), scores.width());
    const std::size_t n = scores.channels();
    for (std::size_t p = 0; p < mask.labels.size(); ++p) {
        const T* s = scores.data().data() + p * n;
        mask.labels[p] = static_cast<std::uint8_t>(std::max_element(s, s + n) - s);
    }
    return mask;
}

template <typename T>
LabelMask predict(const Model<T>& m, const Tensor<T>& input) {
    return argmax_labels(forward_scores(m, input));
}

template <typename T>
LabelMask predict(const Model<T>& m, const HSCube& cube) {
    return predict(m, to_tensor<T>(cube));
}

} // namespace spectraflake
