#pragma once

// Runtime sanity checks exposed through the CLI: analytic vs numeric
// gradients, SAMNet vs the angle classifier, tiled vs whole-image inference.

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "spectraflake/models.hpp"
#include "spectraflake/nn.hpp"
#include "spectraflake/pipeline.hpp"

namespace spectraflake {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

inline double fd_rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-2});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
    }
    return worst;
}

inline std::vector<double> central_differences(std::vector<double>& x, const std::function<double()>& f, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// Loss of a full model on one tile plus the analytic gradient of every
// parameter, by the same backward sweep the trainer uses.
inline double model_loss(const Model<double>& m, const Tensor<double>& x, const LabelMask& target) {
    return softmax_xent(forward_scores(m, x), target).loss;
}

inline std::vector<std::vector<double>> model_gradients(const Model<double>& m, const Tensor<double>& x,
                                                        const LabelMask& target, std::vector<double>* input_grad) {
    ForwardCache<double> cache;
    auto loss = softmax_xent(forward_train(m, x, cache), target);
    Tensor<double> g = std::move(loss.grad_logits);
    std::vector<std::vector<double>> out(2 * m.layers.size());
    for (std::size_t l = m.layers.size(); l-- > 0;) {
        g = activation_backward(m.layers[l].activation, cache.pre[l], std::move(g));
        auto cg = conv2d_backward(cache.inputs[l], m.layers[l], g, true);
        out[2 * l] = std::move(cg.weights);
        out[2 * l + 1] = std::move(cg.biases);
        g = std::move(cg.input);
    }
    if (input_grad) input_grad->assign(g.data().begin(), g.data().end());
    return out;
}

} // namespace detail

// Central-difference check of every layer's weights and biases, the input
// and the loss, on small random models in double precision.
inline CheckResult check_gradients(std::size_t seeds = 20, double tolerance = 1e-4) {
    CheckResult r{"gradients", true, ""};
    double worst = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(1000 + s);
        std::uniform_int_distribution<std::size_t> dim(3, 6), ch(2, 4);
        const Activation acts[] = {Activation::relu, Activation::tanh, Activation::linear};
        Model<double> m;
        std::size_t in = ch(rng);
        const std::size_t channels = in;
        for (std::size_t k : {std::size_t{3}, std::size_t{1}, std::size_t{3}}) {
            const std::size_t out = ch(rng);
            m.layers.emplace_back(out, k, k, in, acts[(s + m.layers.size()) % 3]);
            in = out;
        }
        m.layers.emplace_back(3, 1, 1, in, Activation::linear);
        for (auto& l : m.layers) {
            init_weights(l, rng);
            std::uniform_real_distribution<double> b(-0.2, 0.2);
            for (double& v : l.biases) v = b(rng);
        }
        const std::size_t H = dim(rng), W = dim(rng);
        Tensor<double> x = Tensor<double>::hwc(H, W, channels);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (double& v : x.data()) v = u(rng);
        LabelMask target(H, W);
        std::uniform_int_distribution<int> lab(0, 2);
        for (auto& l : target.labels) l = static_cast<std::uint8_t>(lab(rng));

        std::vector<double> input_grad;
        const auto grads = detail::model_gradients(m, x, target, &input_grad);
        const auto f = [&] { return detail::model_loss(m, x, target); };
        for (std::size_t l = 0; l < m.layers.size(); ++l) {
            worst = std::max(worst, detail::fd_rel_error(grads[2 * l], detail::central_differences(m.layers[l].weights, f, 1e-5)));
            worst = std::max(worst, detail::fd_rel_error(grads[2 * l + 1], detail::central_differences(m.layers[l].biases, f, 1e-5)));
        }
        worst = std::max(worst, detail::fd_rel_error(input_grad, detail::central_differences(x.storage(), f, 1e-5)));
    }
    r.passed = worst <= tolerance;
    char buf[96];
    std::snprintf(buf, sizeof buf, "max relative error %.3e over %zu seeds", worst, seeds);
    r.detail = buf;
    return r;
}

// SAMNet (footprint 1) against sam_classify_oracle on random positive cubes.
inline CheckResult check_sam_equivalence(std::size_t cubes = 100) {
    CheckResult r{"sam-equivalence", true, ""};
    std::size_t mismatched = 0;
    for (std::size_t i = 0; i < cubes; ++i) {
        std::mt19937_64 rng(2000 + i);
        std::uniform_real_distribution<double> u(0.01, 1.0);
        ReferenceSpectra refs;
        for (std::uint8_t k = 0; k < 5; ++k) {
            std::vector<double> s(24);
            for (double& v : s) v = u(rng);
            refs.labels.push_back(k);
            refs.spectra.push_back(std::move(s));
            refs.pixel_counts.push_back(1);
        }
        HSCube cube(16, 16, 24);
        for (float& v : cube.data()) v = static_cast<float>(u(rng));
        const auto net = predict(build_samnet<double>(refs, 1), cube);
        const auto ref = sam_classify_oracle(cube, refs);
        for (std::size_t p = 0; p < net.labels.size(); ++p) mismatched += net.labels[p] != ref.labels[p];
    }
    r.passed = mismatched == 0;
    r.detail = std::to_string(mismatched) + " mismatched pixels over " + std::to_string(cubes) + " cubes";
    return r;
}

// infer_tiled with margin = receptive-field radius against one whole-image pass.
inline CheckResult check_tiling(ModelKind kind, std::size_t size = 300, std::size_t channels = 32,
                                std::size_t tile = 64) {
    CheckResult r{"tiling-" + to_string(kind), true, ""};
    const auto model = build_model<float>(kind, channels, 5, 77);
    const std::size_t margin = receptive_field_radius(model);
    std::mt19937_64 rng(3000);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    HSCube cube(size, size, channels);
    for (float& v : cube.data()) v = static_cast<float>(u(rng));
    const auto whole = predict(model, cube);
    const auto tiled = infer_tiled(model, cube, tile, margin);
    std::size_t diff = 0;
    for (std::size_t p = 0; p < whole.labels.size(); ++p) diff += whole.labels[p] != tiled.labels[p];
    r.passed = diff == 0;
    r.detail = std::to_string(diff) + " differing labels, margin " + std::to_string(margin) + ", tile " +
               std::to_string(tile);
    return r;
}

} // namespace spectraflake
