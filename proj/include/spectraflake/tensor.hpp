#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spectraflake/cube.hpp"

namespace spectraflake {

// Dense row-major tensor. The networks use rank 3, (H, W, C).
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
        : shape_(std::move(shape)), data_(count(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw ValidationError("tensor data length " + std::to_string(data_.size()) +
                                  " does not match its shape");
    }

    static Tensor hwc(std::size_t h, std::size_t w, std::size_t c, T fill = T(0)) { return Tensor({h, w, c}, fill); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    // Rank-3 accessors.
    std::size_t height() const { return shape_.at(0); }
    std::size_t width() const { return shape_.at(1); }
    std::size_t channels() const { return shape_.at(2); }

    T& operator()(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * shape_[1] + x) * shape_[2] + c]; }
    T operator()(std::size_t y, std::size_t x, std::size_t c) const {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }

    T* ptr(std::size_t y, std::size_t x) { return data_.data() + (y * shape_[1] + x) * shape_[2]; }
    const T* ptr(std::size_t y, std::size_t x) const { return data_.data() + (y * shape_[1] + x) * shape_[2]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

// Rows [y0, y0+h) and columns [x0, x0+w) of a cube as an (h, w, C) tensor.
// Coordinates outside the cube read as zero.
template <typename T>
Tensor<T> to_tensor(const HSCube& cube, std::ptrdiff_t y0, std::ptrdiff_t x0, std::size_t h, std::size_t w) {
    auto t = Tensor<T>::hwc(h, w, cube.channels());
    const auto H = static_cast<std::ptrdiff_t>(cube.height());
    const auto W = static_cast<std::ptrdiff_t>(cube.width());
    for (std::size_t y = 0; y < h; ++y) {
        const std::ptrdiff_t sy = y0 + static_cast<std::ptrdiff_t>(y);
        if (sy < 0 || sy >= H) continue;
        for (std::size_t x = 0; x < w; ++x) {
            const std::ptrdiff_t sx = x0 + static_cast<std::ptrdiff_t>(x);
            if (sx < 0 || sx >= W) continue;
            auto px = cube.pixel(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            std::copy(px.begin(), px.end(), t.ptr(y, x));
        }
    }
    return t;
}

template <typename T>
Tensor<T> to_tensor(const HSCube& cube) {
    return to_tensor<T>(cube, 0, 0, cube.height(), cube.width());
}

} // namespace spectraflake
