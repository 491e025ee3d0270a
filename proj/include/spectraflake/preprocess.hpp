#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spectraflake/cube.hpp"
#include "spectraflake/parallel.hpp"

namespace spectraflake {

enum class PreprocVariant { none, first_deriv, second_deriv, log_deriv, spectral_norm, hyper_hue, hyper_hsv };

struct PreprocKind {
    PreprocVariant variant = PreprocVariant::none;
    double eps = 1e-8;
};

inline std::string to_string(PreprocVariant v) {
    switch (v) {
    case PreprocVariant::none: return "none";
    case PreprocVariant::first_deriv: return "d1";
    case PreprocVariant::second_deriv: return "d2";
    case PreprocVariant::log_deriv: return "logd";
    case PreprocVariant::spectral_norm: return "snorm";
    case PreprocVariant::hyper_hue: return "hyperhue";
    case PreprocVariant::hyper_hsv: return "hyperhsv";
    }
    return "none";
}

inline PreprocVariant parse_preproc(const std::string& s) {
    for (auto v : {PreprocVariant::none, PreprocVariant::first_deriv, PreprocVariant::second_deriv,
                   PreprocVariant::log_deriv, PreprocVariant::spectral_norm, PreprocVariant::hyper_hue,
                   PreprocVariant::hyper_hsv})
        if (to_string(v) == s) return v;
    throw ValidationError("unknown pre-processing '" + s +
                          "' (expected none, d1, d2, logd, snorm, hyperhue, hyperhsv)");
}

inline std::size_t output_channels(PreprocVariant v, std::size_t channels) {
    switch (v) {
    case PreprocVariant::none:
    case PreprocVariant::spectral_norm:
    case PreprocVariant::hyper_hsv: return channels;
    case PreprocVariant::first_deriv:
    case PreprocVariant::log_deriv: return channels >= 1 ? channels - 1 : 0;
    case PreprocVariant::second_deriv:
    case PreprocVariant::hyper_hue: return channels >= 2 ? channels - 2 : 0;
    }
    return channels;
}

namespace detail {

inline void require_channels(const HSCube& cube, std::size_t min, const char* op) {
    if (cube.channels() < min)
        throw ValidationError(std::string(op) + " needs at least " + std::to_string(min) +
                              " channels, cube has " + std::to_string(cube.channels()));
}

// Applies fn(in_pixel, out_pixel) to every pixel, parallel over rows.
template <typename Fn>
HSCube map_pixels(const HSCube& cube, std::size_t out_channels, Fn&& fn) {
    HSCube out(cube.height(), cube.width(), out_channels);
    parallel_for(0, cube.height(), [&](std::size_t y) {
        for (std::size_t x = 0; x < cube.width(); ++x) fn(cube.pixel(y, x), out.pixel(y, x));
    });
    return out;
}

inline std::vector<double> tail_wavelengths(const HSCube& cube, std::size_t drop) {
    if (cube.wavelengths().empty()) return {};
    return {cube.wavelengths().begin() + static_cast<std::ptrdiff_t>(drop), cube.wavelengths().end()};
}

} // namespace detail

// v'_i = v_i - v_{i-1}; output channel i-1 holds v'_i.
inline HSCube first_derivative(const HSCube& cube) {
    detail::require_channels(cube, 2, "first_derivative");
    auto out = detail::map_pixels(cube, cube.channels() - 1, [](auto in, auto o) {
        for (std::size_t i = 1; i < in.size(); ++i) o[i - 1] = in[i] - in[i - 1];
    });
    out.set_wavelengths(detail::tail_wavelengths(cube, 1));
    return out;
}

// v''_i = v'_i - v'_{i-1} = v_i - 2 v_{i-1} + v_{i-2}.
inline HSCube second_derivative(const HSCube& cube) {
    detail::require_channels(cube, 3, "second_derivative");
    auto out = detail::map_pixels(cube, cube.channels() - 2, [](auto in, auto o) {
        for (std::size_t i = 2; i < in.size(); ++i) {
            const float d1 = in[i] - in[i - 1];
            const float d0 = in[i - 1] - in[i - 2];
            o[i - 2] = d1 - d0;
        }
    });
    out.set_wavelengths(detail::tail_wavelengths(cube, 2));
    return out;
}

// ld(v_i) = v_i / v_{i-1} - 1. Denominators with |v| < eps are replaced by
// +-eps (sign of v, zero counts as positive); the number of such guards is
// written to *guarded when provided.
inline HSCube log_derivative(const HSCube& cube, double eps = 1e-8, std::size_t* guarded = nullptr) {
    detail::require_channels(cube, 2, "log_derivative");
    std::atomic<std::size_t> count{0};
    auto out = detail::map_pixels(cube, cube.channels() - 1, [&](auto in, auto o) {
        std::size_t local = 0;
        for (std::size_t i = 1; i < in.size(); ++i) {
            double den = in[i - 1];
            if (std::abs(den) < eps) {
                den = den >= 0.0 ? eps : -eps;
                ++local;
            }
            o[i - 1] = static_cast<float>(static_cast<double>(in[i]) / den - 1.0);
        }
        if (local) count += local;
    });
    if (guarded) *guarded = count.load();
    out.set_wavelengths(detail::tail_wavelengths(cube, 1));
    return out;
}

// sn(v) = v / |v|; all-zero pixels stay zero. Each element is evaluated as
// sign(v_i) * sqrt(v_i^2 / sum v^2) in double, which maps inputs that differ
// by an exactly representable scale factor to identical outputs.
inline void spectral_norm_pixel(std::span<const float> in, std::span<float> out) {
    double sum_sq = 0.0;
    for (float v : in) sum_sq += static_cast<double>(v) * v;
    if (sum_sq == 0.0) {
        std::fill(out.begin(), out.end(), 0.0f);
        return;
    }
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double v = in[i];
        const double mag = std::sqrt((v * v) / sum_sq);
        out[i] = static_cast<float>(v < 0 ? -mag : mag);
    }
}

inline HSCube spectral_norm(const HSCube& cube) {
    auto out = detail::map_pixels(cube, cube.channels(), [](auto in, auto o) { spectral_norm_pixel(in, o); });
    out.set_wavelengths(cube.wavelengths());
    return out;
}

// (C-1) x C Helmert basis of the hyperplane orthogonal to the diagonal,
// row-major. Row k-1 (k = 1..C-1) has 1/sqrt(k(k+1)) in columns 0..k-1,
// -k/sqrt(k(k+1)) in column k and zeros after.
inline std::vector<double> helmert_basis(std::size_t channels) {
    if (channels < 2) throw ValidationError("helmert_basis needs at least 2 channels");
    std::vector<double> u((channels - 1) * channels, 0.0);
    for (std::size_t k = 1; k < channels; ++k) {
        const double s = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
        for (std::size_t j = 0; j < k; ++j) u[(k - 1) * channels + j] = s;
        u[(k - 1) * channels + k] = -static_cast<double>(k) * s;
    }
    return u;
}

// Hue angles, saturation and value of one spectrum.
//
// V is the mean of v and p = v - V*1 its component orthogonal to the gray
// diagonal. p is expressed in the Helmert basis as z (C-1 coordinates) with
// S = |z| = |p|. The hue is the direction z/S written as C-2 generalized
// spherical angles: phi_i = atan2(|z_{i+1..}|, z_i) for i < C-3 (range [0, pi])
// and phi_{C-3} = atan2(z_{C-2}, z_{C-3}) (range (-pi, pi]). When S <= eps all
// angles are 0.
struct HyperHsvPixel {
    std::vector<double> hue;
    double saturation = 0.0;
    double value = 0.0;
};

inline HyperHsvPixel hyper_hsv_pixel(std::span<const float> v, double eps = 1e-8) {
    const std::size_t c = v.size();
    if (c < 3) throw ValidationError("hyper_hsv needs at least 3 channels");
    HyperHsvPixel px;
    double sum = 0.0;
    for (float e : v) sum += e;
    px.value = sum / static_cast<double>(c);

    const std::size_t n = c - 1;
    std::vector<double> z(n);
    double prefix = 0.0;
    for (std::size_t k = 1; k < c; ++k) {
        prefix += v[k - 1] - px.value;
        const double pk = v[k] - px.value;
        z[k - 1] = (prefix - static_cast<double>(k) * pk) / std::sqrt(static_cast<double>(k) * (k + 1));
    }

    std::vector<double> tail(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) tail[i] = tail[i + 1] + z[i] * z[i];
    px.saturation = std::sqrt(tail[0]);

    px.hue.assign(c - 2, 0.0);
    if (px.saturation <= eps) return px;
    for (std::size_t i = 0; i + 2 < n; ++i) px.hue[i] = std::atan2(std::sqrt(tail[i + 1]), z[i]);
    px.hue[n - 2] = std::atan2(z[n - 1], z[n - 2]);
    return px;
}

// Inverse of hyper_hsv_pixel: rebuilds the spectrum from (hue, S, V).
inline std::vector<double> hyper_hsv_inverse(std::span<const double> hue, double saturation, double value) {
    const std::size_t c = hue.size() + 2;
    const std::size_t n = c - 1;
    std::vector<double> z(n);
    double sin_prod = saturation;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        z[i] = sin_prod * std::cos(hue[i]);
        sin_prod *= std::sin(hue[i]);
    }
    z[n - 1] = sin_prod;

    // p = U^T z
    std::vector<double> v(c, value);
    double suffix = 0.0; // sum over k > j of z_{k-1} / sqrt(k(k+1))
    for (std::size_t j = c; j-- > 0;) {
        double pj = suffix;
        if (j >= 1) pj -= static_cast<double>(j) * z[j - 1] / std::sqrt(static_cast<double>(j) * (j + 1));
        v[j] += pj;
        if (j >= 1) suffix += z[j - 1] / std::sqrt(static_cast<double>(j) * (j + 1));
    }
    return v;
}

// Channel order: [C-2 hue angles, S, V].
inline HSCube hyper_hsv(const HSCube& cube, double eps = 1e-8) {
    detail::require_channels(cube, 3, "hyper_hsv");
    const std::size_t c = cube.channels();
    return detail::map_pixels(cube, c, [&](auto in, auto o) {
        const auto px = hyper_hsv_pixel(in, eps);
        for (std::size_t i = 0; i < px.hue.size(); ++i) o[i] = static_cast<float>(px.hue[i]);
        o[c - 2] = static_cast<float>(px.saturation);
        o[c - 1] = static_cast<float>(px.value);
    });
}

inline HSCube hyper_hue(const HSCube& cube, double eps = 1e-8) {
    detail::require_channels(cube, 3, "hyper_hue");
    return detail::map_pixels(cube, cube.channels() - 2, [&](auto in, auto o) {
        const auto px = hyper_hsv_pixel(in, eps);
        for (std::size_t i = 0; i < px.hue.size(); ++i) o[i] = static_cast<float>(px.hue[i]);
    });
}

inline HSCube apply(const PreprocKind& kind, const HSCube& cube, std::size_t* guarded = nullptr) {
    if (guarded) *guarded = 0;
    switch (kind.variant) {
    case PreprocVariant::none: return cube;
    case PreprocVariant::first_deriv: return first_derivative(cube);
    case PreprocVariant::second_deriv: return second_derivative(cube);
    case PreprocVariant::log_deriv: return log_derivative(cube, kind.eps, guarded);
    case PreprocVariant::spectral_norm: return spectral_norm(cube);
    case PreprocVariant::hyper_hue: return hyper_hue(cube, kind.eps);
    case PreprocVariant::hyper_hsv: return hyper_hsv(cube, kind.eps);
    }
    return cube;
}

inline HSCube apply(PreprocVariant variant, const HSCube& cube) { return apply(PreprocKind{variant}, cube); }

} // namespace spectraflake
