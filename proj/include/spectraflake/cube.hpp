#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spectraflake/error.hpp"

namespace spectraflake {

// Hyper-spectral cube stored in (y, x, c) row-major order so that the
// spectrum of one pixel is contiguous.
class HSCube {
public:
    HSCube() = default;

    HSCube(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f)
        : height_(height), width_(width), channels_(channels),
          data_(height * width * channels, fill) {}

    HSCube(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> data,
           std::vector<double> wavelengths = {})
        : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
        if (data_.size() != height_ * width_ * channels_)
            throw ValidationError("cube data length " + std::to_string(data_.size()) +
                                  " does not match " + std::to_string(height_) + "x" +
                                  std::to_string(width_) + "x" + std::to_string(channels_));
        set_wavelengths(std::move(wavelengths));
    }

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t channels() const { return channels_; }
    std::size_t pixels() const { return height_ * width_; }
    bool empty() const { return data_.empty(); }

    float& operator()(std::size_t y, std::size_t x, std::size_t c) {
        return data_[(y * width_ + x) * channels_ + c];
    }
    float operator()(std::size_t y, std::size_t x, std::size_t c) const {
        return data_[(y * width_ + x) * channels_ + c];
    }

    std::span<float> pixel(std::size_t y, std::size_t x) {
        return {data_.data() + (y * width_ + x) * channels_, channels_};
    }
    std::span<const float> pixel(std::size_t y, std::size_t x) const {
        return {data_.data() + (y * width_ + x) * channels_, channels_};
    }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    const std::vector<double>& wavelengths() const { return wavelengths_; }

    // Empty list clears the wavelengths; otherwise length must equal the
    // channel count and values must be strictly increasing.
    void set_wavelengths(std::vector<double> wl) {
        if (!wl.empty()) {
            if (wl.size() != channels_)
                throw ValidationError("wavelength list has " + std::to_string(wl.size()) +
                                      " entries, cube has " + std::to_string(channels_) +
                                      " channels");
            for (std::size_t i = 1; i < wl.size(); ++i)
                if (!(wl[i] > wl[i - 1]))
                    throw ValidationError("wavelengths must be strictly increasing");
        }
        wavelengths_ = std::move(wl);
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
    }

    friend bool operator==(const HSCube&, const HSCube&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t channels_ = 0;
    std::vector<float> data_;
    std::vector<double> wavelengths_;
};

// Row-major (x, c) grid, used for the per-column reference means.
struct ColumnGrid {
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> values;

    double operator()(std::size_t x, std::size_t c) const { return values[x * channels + c]; }
    double& operator()(std::size_t x, std::size_t c) { return values[x * channels + c]; }

    friend bool operator==(const ColumnGrid&, const ColumnGrid&) = default;
};

struct ReferenceProfile {
    ColumnGrid bright;
    ColumnGrid dark;

    std::size_t width() const { return bright.width; }
    std::size_t channels() const { return bright.channels; }
};

class ClassCatalog {
public:
    ClassCatalog() : names_{"BG", "PE", "PP", "PS", "PET"} {}

    explicit ClassCatalog(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.empty()) throw ValidationError("class catalog must contain background");
        for (std::size_t i = 0; i < names_.size(); ++i)
            for (std::size_t j = i + 1; j < names_.size(); ++j)
                if (names_[i] == names_[j])
                    throw ValidationError("duplicate class name '" + names_[i] + "'");
    }

    // Default names extended with C<k> for catalogs larger than five classes.
    static ClassCatalog with_size(std::size_t n) {
        ClassCatalog def;
        std::vector<std::string> names;
        for (std::size_t i = 0; i < n; ++i)
            names.push_back(i < def.size() ? def.name(i) : "C" + std::to_string(i));
        return ClassCatalog(std::move(names));
    }

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
};

struct LabelMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> labels;

    LabelMask() = default;
    LabelMask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
        : height(h), width(w), labels(h * w, fill) {}

    std::uint8_t& operator()(std::size_t y, std::size_t x) { return labels[y * width + x]; }
    std::uint8_t operator()(std::size_t y, std::size_t x) const { return labels[y * width + x]; }

    // Throws ClassRangeError on the first label >= n.
    void check_range(std::size_t n) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] >= n)
                throw ClassRangeError("label " + std::to_string(labels[i]) + " at pixel (" +
                                      std::to_string(i / std::max<std::size_t>(width, 1)) + ", " +
                                      std::to_string(i % std::max<std::size_t>(width, 1)) +
                                      ") is outside the " + std::to_string(n) + "-class catalog");
    }

    friend bool operator==(const LabelMask&, const LabelMask&) = default;
};

// Mean over y of every (x, c) column.
inline ColumnGrid column_mean(const HSCube& reference_raw) {
    if (reference_raw.height() == 0)
        throw ValidationError("column_mean: reference cube has zero height");
    ColumnGrid out{reference_raw.width(), reference_raw.channels(),
                   std::vector<double>(reference_raw.width() * reference_raw.channels(), 0.0)};
    for (std::size_t y = 0; y < reference_raw.height(); ++y) {
        auto row = reference_raw.data().subspan(y * reference_raw.width() * reference_raw.channels(),
                                                 out.values.size());
        for (std::size_t i = 0; i < row.size(); ++i) out.values[i] += row[i];
    }
    const double inv = 1.0 / static_cast<double>(reference_raw.height());
    for (double& v : out.values) v *= inv;
    return out;
}

inline ReferenceProfile make_reference_profile(const HSCube& bright_raw, const HSCube& dark_raw) {
    ReferenceProfile refs{column_mean(bright_raw), column_mean(dark_raw)};
    if (refs.bright.width != refs.dark.width || refs.bright.channels != refs.dark.channels)
        throw ValidationError("bright and dark references differ in width or channel count");
    return refs;
}

struct CorrectionResult {
    HSCube cube;
    // Number of (x, c) columns where bright <= dark + eps and the denominator was clamped.
    std::size_t clamped_columns = 0;
};

// out = (raw - D) / max(B - D, eps), stored as reflectance. No clipping to [0, 1].
inline CorrectionResult reflectance_correct(const HSCube& raw, const ReferenceProfile& refs,
                                            double eps = 1e-6) {
    if (!(eps > 0.0)) throw ValidationError("reflectance_correct: eps must be positive");
    if (refs.bright.width != refs.dark.width || refs.bright.channels != refs.dark.channels)
        throw ValidationError("bright and dark references differ in width or channel count");
    if (raw.width() != refs.width() || raw.channels() != refs.channels())
        throw ValidationError("reflectance_correct: cube is " + std::to_string(raw.width()) + "x" +
                              std::to_string(raw.channels()) + " (width x channels), references are " +
                              std::to_string(refs.width()) + "x" + std::to_string(refs.channels()));

    const std::size_t row = raw.width() * raw.channels();
    std::vector<double> inv_span(row);
    CorrectionResult result;
    for (std::size_t i = 0; i < row; ++i) {
        const double span = refs.bright.values[i] - refs.dark.values[i];
        if (!(span > eps)) {
            ++result.clamped_columns;
            inv_span[i] = 1.0 / eps;
        } else {
            inv_span[i] = 1.0 / span;
        }
    }

    std::vector<float> out(raw.data().size());
    const auto in = raw.data();
    for (std::size_t y = 0; y < raw.height(); ++y)
        for (std::size_t i = 0; i < row; ++i) {
            const std::size_t k = y * row + i;
            out[k] = static_cast<float>((in[k] - refs.dark.values[i]) * inv_span[i]);
        }
    result.cube = HSCube(raw.height(), raw.width(), raw.channels(), std::move(out), raw.wavelengths());
    return result;
}

} // namespace spectraflake
