#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectraflake/cube.hpp"
#include "spectraflake/models.hpp"

namespace spectraflake {

struct SynthConfig {
    std::uint64_t seed = 1;
    std::size_t height = 128;
    std::size_t width = 128;
    std::size_t channels = 32;
    std::size_t n_classes = 5;         // including background
    std::size_t flakes_per_class = 4;
    double flake_radius_min = 6.0;     // px
    double flake_radius_max = 16.0;    // px
    double noise_sigma = 0.01;         // reflectance units, applied before exposure
    double specular_probability = 0.2;
    double exposure = 1.0;

    void validate() const {
        if (!(exposure > 0.0)) throw ValidationError("synth: exposure factor must be positive");
        if (height == 0 || width == 0 || channels == 0) throw ValidationError("synth: empty cube dimensions");
        if (n_classes < 2) throw ValidationError("synth: need at least one polymer class besides background");
        if (n_classes > 255) throw ValidationError("synth: at most 255 classes");
        if (!(flake_radius_min > 0.0) || flake_radius_max < flake_radius_min)
            throw ValidationError("synth: invalid flake radius range");
        if (noise_sigma < 0.0) throw ValidationError("synth: negative noise sigma");
        if (specular_probability < 0.0 || specular_probability > 1.0)
            throw ValidationError("synth: specular probability must lie in [0, 1]");
    }
};

inline constexpr double kBackgroundLevel = 0.05;
inline constexpr double kOccupancyCap = 0.6;
inline constexpr double kMinSignatureAngle = 0.05; // rad

// Scene values are snapped to multiples of 3 * 2^-22 before the exposure is
// applied, so a 1/3 exposure divides every value exactly.
inline constexpr double kSceneQuantum = 3.0 / 4194304.0;

namespace detail {

inline double spectral_angle(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::acos(std::clamp(d / std::sqrt(na * nb), -1.0, 1.0));
}

} // namespace detail

// Smooth positive signatures for polymer classes 1..n_classes-1: a 0.6
// baseline with 3-6 Gaussian absorption dips. Every pair of signatures, and
// every signature against the flat background, is at least 0.05 rad apart.
inline ReferenceSpectra signature_library(std::uint64_t seed, std::size_t n_classes, std::size_t channels) {
    if (n_classes < 2) throw ValidationError("signature_library: need at least 2 classes");
    if (channels < 2) throw ValidationError("signature_library: need at least 2 channels");
    std::mt19937_64 rng(seed ^ 0x5157A7u);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double C = static_cast<double>(channels);
    const std::vector<double> flat(channels, kBackgroundLevel);

    for (int attempt = 0; attempt < 100; ++attempt) {
        ReferenceSpectra lib;
        for (std::size_t l = 1; l < n_classes; ++l) {
            std::vector<double> s(channels, 0.6);
            const int dips = 3 + static_cast<int>(std::uniform_int_distribution<int>(0, 3)(rng));
            for (int d = 0; d < dips; ++d) {
                const double center = unit(rng) * (C - 1.0);
                const double width = std::max(1.0, C / 32.0) + unit(rng) * C / 12.0;
                const double depth = 0.08 + unit(rng) * 0.22;
                for (std::size_t c = 0; c < channels; ++c) {
                    const double t = (static_cast<double>(c) - center) / width;
                    s[c] -= depth * std::exp(-0.5 * t * t);
                }
            }
            for (double& v : s) v = std::clamp(v, 0.05, 1.15);
            lib.labels.push_back(static_cast<std::uint8_t>(l));
            lib.spectra.push_back(std::move(s));
            lib.pixel_counts.push_back(0);
        }
        bool ok = true;
        for (std::size_t i = 0; i < lib.size() && ok; ++i) {
            if (detail::spectral_angle(lib.spectra[i], flat) < kMinSignatureAngle) ok = false;
            for (std::size_t j = i + 1; j < lib.size() && ok; ++j)
                if (detail::spectral_angle(lib.spectra[i], lib.spectra[j]) < kMinSignatureAngle) ok = false;
        }
        if (ok) return lib;
    }
    throw ValidationError("signature_library: could not separate signatures by 0.05 rad after 100 retries");
}

struct Point {
    double x = 0;
    double y = 0;
};

struct Flake {
    std::uint8_t label = 0;
    std::vector<Point> polygon; // convex, counter-clockwise in image coordinates
    double multiplier = 1.0;
    bool specular = false;
    std::size_t pixels = 0;
};

struct Scene {
    HSCube cube;
    LabelMask mask;
    std::vector<Flake> flakes;
    std::size_t dropped_flakes = 0;
};

// Pixels whose centers (x + 0.5, y + 0.5) fall inside a convex polygon.
inline std::vector<std::pair<std::size_t, std::size_t>> rasterize_convex(const std::vector<Point>& poly,
                                                                         std::size_t height, std::size_t width) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    double ymin = poly[0].y, ymax = poly[0].y;
    for (const auto& p : poly) {
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    const auto y0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(ymin - 0.5)));
    const auto y1 = std::min(static_cast<std::ptrdiff_t>(height) - 1, static_cast<std::ptrdiff_t>(std::ceil(ymax)));
    for (std::ptrdiff_t y = y0; y <= y1; ++y) {
        const double yc = static_cast<double>(y) + 0.5;
        double xl = std::numeric_limits<double>::infinity(), xr = -xl;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            const Point& a = poly[i];
            const Point& b = poly[(i + 1) % poly.size()];
            if ((a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y)) {
                const double xi = a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y);
                xl = std::min(xl, xi);
                xr = std::max(xr, xi);
            }
        }
        if (!(xl <= xr)) continue;
        const auto x0 = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(xl - 0.5)));
        const auto x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(width) - 1,
                                                 static_cast<std::ptrdiff_t>(std::floor(xr - 0.5)));
        for (std::ptrdiff_t x = x0; x <= x1; ++x) out.emplace_back(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    }
    return out;
}

// Flakes are convex polygons with 6-12 vertices on a random ellipse, placed
// class by class without overlap. Each flake pixel is its class signature
// times a per-flake multiplier in [0.7, 1.3] plus Gaussian noise; specular
// flakes get a bright, nearly flat patch over at most 20% of their area.
// Finally the cube is scaled by the exposure factor.
inline Scene generate_scene(const SynthConfig& cfg, const ReferenceSpectra& signatures) {
    cfg.validate();
    if (signatures.size() + 1 != cfg.n_classes || signatures.channels() != cfg.channels)
        throw ValidationError("generate_scene: signature library does not match config (" +
                              std::to_string(signatures.size()) + " signatures of " +
                              std::to_string(signatures.channels()) + " channels)");
    const std::size_t H = cfg.height, W = cfg.width, C = cfg.channels;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Scene scene;
    scene.mask = LabelMask(H, W);
    std::vector<int> owner(H * W, -1);
    std::size_t occupied = 0;
    const auto cap = static_cast<std::size_t>(kOccupancyCap * static_cast<double>(H * W));

    for (std::size_t l = 1; l < cfg.n_classes; ++l)
        for (std::size_t f = 0; f < cfg.flakes_per_class; ++f) {
            bool placed = false, over_cap = false;
            for (int attempt = 0; attempt < 50 && !placed && !over_cap; ++attempt) {
                const double a = cfg.flake_radius_min + unit(rng) * (cfg.flake_radius_max - cfg.flake_radius_min);
                const double b = cfg.flake_radius_min + unit(rng) * (a - cfg.flake_radius_min);
                const double rot = unit(rng) * std::numbers::pi;
                const double margin_y = std::min(a, static_cast<double>(H) / 2.0);
                const double margin_x = std::min(a, static_cast<double>(W) / 2.0);
                const double cy = margin_y + unit(rng) * (static_cast<double>(H) - 2.0 * margin_y);
                const double cx = margin_x + unit(rng) * (static_cast<double>(W) - 2.0 * margin_x);
                const int nv = std::uniform_int_distribution<int>(6, 12)(rng);
                std::vector<double> angles(static_cast<std::size_t>(nv));
                for (auto& t : angles) t = unit(rng) * 2.0 * std::numbers::pi;
                std::sort(angles.begin(), angles.end());
                Flake flake;
                flake.label = static_cast<std::uint8_t>(l);
                for (double t : angles) {
                    const double ex = a * std::cos(t), ey = b * std::sin(t);
                    flake.polygon.push_back({cx + ex * std::cos(rot) - ey * std::sin(rot),
                                             cy + ex * std::sin(rot) + ey * std::cos(rot)});
                }
                flake.multiplier = 0.7 + 0.6 * unit(rng);
                flake.specular = unit(rng) < cfg.specular_probability;
                const auto pix = rasterize_convex(flake.polygon, H, W);
                if (pix.empty()) continue;
                if (occupied + pix.size() > cap) {
                    over_cap = true;
                    break;
                }
                const bool overlaps = std::any_of(pix.begin(), pix.end(),
                                                  [&](const auto& p) { return owner[p.first * W + p.second] >= 0; });
                if (overlaps) continue;
                const int id = static_cast<int>(scene.flakes.size());
                for (const auto& p : pix) {
                    owner[p.first * W + p.second] = id;
                    scene.mask(p.first, p.second) = flake.label;
                }
                flake.pixels = pix.size();
                occupied += pix.size();
                scene.flakes.push_back(std::move(flake));
                placed = true;
            }
            if (!placed) ++scene.dropped_flakes;
        }

    // Specular patches: disk around a random flake pixel, area <= 20% of the flake.
    std::vector<bool> specular(H * W, false);
    for (std::size_t id = 0; id < scene.flakes.size(); ++id) {
        const auto& flake = scene.flakes[id];
        if (!flake.specular) continue;
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < owner.size(); ++i)
            if (owner[i] == static_cast<int>(id)) members.push_back(i);
        const std::size_t center = members[std::uniform_int_distribution<std::size_t>(0, members.size() - 1)(rng)];
        const double radius = std::sqrt(0.2 * static_cast<double>(members.size()) / std::numbers::pi);
        const double cy = static_cast<double>(center / W), cx = static_cast<double>(center % W);
        std::size_t budget = members.size() / 5;
        for (std::size_t i : members) {
            if (budget == 0) break;
            const double dy = static_cast<double>(i / W) - cy, dx = static_cast<double>(i % W) - cx;
            if (dy * dy + dx * dx <= radius * radius) {
                specular[i] = true;
                --budget;
            }
        }
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<float> data(H * W * C);
    for (std::size_t i = 0; i < H * W; ++i)
        for (std::size_t c = 0; c < C; ++c) {
            double v;
            if (owner[i] < 0) {
                v = kBackgroundLevel;
            } else if (specular[i]) {
                v = 1.05 - 0.03 * static_cast<double>(c) / static_cast<double>(C);
            } else {
                const auto& flake = scene.flakes[static_cast<std::size_t>(owner[i])];
                v = signatures.spectra[flake.label - 1][c] * flake.multiplier;
            }
            if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * noise(rng);
            const double q = std::round(v / kSceneQuantum) * kSceneQuantum;
            data[i * C + c] = static_cast<float>(q * cfg.exposure);
        }

    std::vector<double> wl(C);
    for (std::size_t c = 0; c < C; ++c)
        wl[c] = C == 1 ? 900.0 : 900.0 + 800.0 * static_cast<double>(c) / static_cast<double>(C - 1);
    scene.cube = HSCube(H, W, C, std::move(data), std::move(wl));
    return scene;
}

inline nlohmann::json scene_manifest(const SynthConfig& cfg, const Scene& scene) {
    using nlohmann::json;
    json flakes = json::array();
    for (const auto& f : scene.flakes) {
        json poly = json::array();
        for (const auto& p : f.polygon) poly.push_back({p.x, p.y});
        flakes.push_back({{"label", f.label},
                          {"polygon", poly},
                          {"multiplier", f.multiplier},
                          {"specular", f.specular},
                          {"pixels", f.pixels}});
    }
    return {{"seed", cfg.seed},
            {"config",
             {{"height", cfg.height},
              {"width", cfg.width},
              {"channels", cfg.channels},
              {"n_classes", cfg.n_classes},
              {"flakes_per_class", cfg.flakes_per_class},
              {"flake_radius_min", cfg.flake_radius_min},
              {"flake_radius_max", cfg.flake_radius_max},
              {"noise_sigma", cfg.noise_sigma},
              {"specular_probability", cfg.specular_probability},
              {"exposure", cfg.exposure}}},
            {"dropped_flakes", scene.dropped_flakes},
            {"flakes", flakes}};
}

} // namespace spectraflake
