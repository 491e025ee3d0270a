#pragma once

// Independent reference implementations used only by the tests. None of
// these call into the code paths they check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "spectraflake/cube.hpp"
#include "spectraflake/nn.hpp"

namespace oracle {

using spectraflake::ConvLayer;
using spectraflake::HSCube;
using spectraflake::LabelMask;
using spectraflake::Tensor;

inline HSCube random_cube(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c, double lo = 0.0,
                          double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    HSCube cube(h, w, c);
    for (float& v : cube.data()) v = static_cast<float>(d(rng));
    return cube;
}

// Values are multiples of 2^-12 below 2, so they carry at most 13
// significant bits. Scaling by dyadic_scale() or shifting by dyadic_offset()
// is then exact in float32, and an invariance check sees the transform's own
// rounding rather than rounding in the perturbed input.
inline constexpr float kDyadicStep = 1.0f / 4096.0f;

inline HSCube dyadic_cube(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c) {
    std::uniform_int_distribution<int> d(1, 8191);
    HSCube cube(h, w, c);
    for (float& v : cube.data()) v = static_cast<float>(d(rng)) * kDyadicStep;
    return cube;
}

// Multiples of 1/64 in [1/64, 16].
inline float dyadic_scale(std::mt19937_64& rng) {
    return static_cast<float>(std::uniform_int_distribution<int>(1, 1024)(rng)) / 64.0f;
}

// Multiples of 2^-12 in [-1, 2] with magnitude at least 0.05.
inline float dyadic_offset(std::mt19937_64& rng) {
    int k = 0;
    while (std::abs(k) < 205) k = std::uniform_int_distribution<int>(-4096, 8192)(rng);
    return static_cast<float>(k) * kDyadicStep;
}

template <typename T>
Tensor<T> random_tensor(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c, double scale = 1.0) {
    std::uniform_real_distribution<double> d(-scale, scale);
    auto t = Tensor<T>::hwc(h, w, c);
    for (T& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

template <typename T>
ConvLayer<T> random_layer(std::mt19937_64& rng, std::size_t out, std::size_t k, std::size_t in,
                          spectraflake::Activation act = spectraflake::Activation::linear) {
    ConvLayer<T> l(out, k, k, in, act);
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    for (T& w : l.weights) w = static_cast<T>(d(rng));
    for (T& b : l.biases) b = static_cast<T>(d(rng));
    return l;
}

// Six nested loops, zero padding by explicit bounds checks.
template <typename T>
std::vector<double> naive_conv(const Tensor<T>& in, const ConvLayer<T>& l) {
    const long H = static_cast<long>(in.height()), W = static_cast<long>(in.width());
    const long KH = static_cast<long>(l.kernel_h), KW = static_cast<long>(l.kernel_w);
    std::vector<double> out(static_cast<std::size_t>(H * W) * l.out_channels);
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x)
            for (std::size_t o = 0; o < l.out_channels; ++o) {
                double s = l.biases[o];
                for (long dy = 0; dy < KH; ++dy)
                    for (long dx = 0; dx < KW; ++dx)
                        for (std::size_t c = 0; c < l.in_channels; ++c) {
                            const long iy = y + dy - KH / 2, ix = x + dx - KW / 2;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            s += static_cast<double>(in(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), c)) *
                                 l.weight(o, static_cast<std::size_t>(dy), static_cast<std::size_t>(dx), c);
                        }
                out[static_cast<std::size_t>(y * W + x) * l.out_channels + o] = s;
            }
    return out;
}

// Central differences of a scalar function over every entry of `params`.
inline std::vector<double> central_diff(std::vector<double>& params, const std::function<double()>& f, double h) {
    std::vector<double> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double fp = f();
        params[i] = keep - h;
        const double fm = f();
        params[i] = keep;
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

// max |a-b| / max(1, |b|) style relative error with a floor so tiny
// gradients do not dominate.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-2) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
    return worst;
}

// Explicit acos-angle SAM with per-reference norms computed inline.
inline std::vector<std::uint8_t> sam_by_angles(const HSCube& cube, const std::vector<std::vector<double>>& refs) {
    std::vector<std::uint8_t> out;
    for (std::size_t y = 0; y < cube.height(); ++y)
        for (std::size_t x = 0; x < cube.width(); ++x) {
            std::vector<double> angles;
            for (const auto& r : refs) {
                long double d = 0, a = 0, b = 0;
                for (std::size_t c = 0; c < r.size(); ++c) {
                    d += static_cast<long double>(cube(y, x, c)) * r[c];
                    a += static_cast<long double>(cube(y, x, c)) * cube(y, x, c);
                    b += static_cast<long double>(r[c]) * r[c];
                }
                long double cosv = d / std::sqrt(a * b);
                if (cosv > 1) cosv = 1;
                if (cosv < -1) cosv = -1;
                angles.push_back(static_cast<double>(std::acos(cosv)));
            }
            std::size_t best = 0;
            for (std::size_t k = 1; k < angles.size(); ++k)
                if (angles[k] < angles[best]) best = k;
            out.push_back(static_cast<std::uint8_t>(best));
        }
    return out;
}

inline LabelMask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t n) {
    LabelMask m(h, w);
    std::uniform_int_distribution<int> d(0, static_cast<int>(n) - 1);
    for (auto& l : m.labels) l = static_cast<std::uint8_t>(d(rng));
    return m;
}

} // namespace oracle
