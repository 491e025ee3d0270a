#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spectraflake/models.hpp"

namespace spectraflake {

// SFW1 layout, all fields 32-bit little-endian:
//   "SFW1" | kind | layer count |
//   per layer: O | kh | kw | Cin | activation | O*kh*kw*Cin float weights | O float biases
namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f32(std::vector<char>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class ByteReader {
public:
    ByteReader(const std::vector<char>& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

    std::uint32_t u32(const char* what) {
        if (pos_ + 4 > bytes_.size())
            throw TruncationError("weight file '" + name_ + "' is truncated while reading " + what + " at byte " +
                                  std::to_string(pos_));
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    void require(std::size_t n, const char* what) const {
        if (pos_ + n > bytes_.size())
            throw TruncationError("weight file '" + name_ + "' is truncated: " + what + " needs " + std::to_string(n) +
                                  " bytes at offset " + std::to_string(pos_) + ", file has " +
                                  std::to_string(bytes_.size()));
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    const std::vector<char>& bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline constexpr std::array<char, 4> kWeightMagic{'S', 'F', 'W', '1'};

template <typename T>
std::vector<char> serialize_weights(const Model<T>& m) {
    validate_model(m);
    std::vector<char> out(kWeightMagic.begin(), kWeightMagic.end());
    detail::put_u32(out, static_cast<std::uint32_t>(m.kind));
    detail::put_u32(out, static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& l : m.layers) {
        detail::put_u32(out, static_cast<std::uint32_t>(l.out_channels));
        detail::put_u32(out, static_cast<std::uint32_t>(l.kernel_h));
        detail::put_u32(out, static_cast<std::uint32_t>(l.kernel_w));
        detail::put_u32(out, static_cast<std::uint32_t>(l.in_channels));
        detail::put_u32(out, static_cast<std::uint32_t>(l.activation));
        for (T w : l.weights) detail::put_f32(out, static_cast<float>(w));
        for (T b : l.biases) detail::put_f32(out, static_cast<float>(b));
    }
    return out;
}

template <typename T = float>
Model<T> deserialize_weights(const std::vector<char>& bytes, const std::string& name = "<memory>") {
    if (bytes.size() < 4 || !std::equal(kWeightMagic.begin(), kWeightMagic.end(), bytes.begin()))
        throw ParseError("weight file '" + name + "' has a bad magic (expected SFW1)");
    detail::ByteReader in(bytes, name);
    in.u32("magic");
    Model<T> m;
    const auto kind = in.u32("kind tag");
    if (kind > static_cast<std::uint32_t>(ModelKind::plasticnetxl))
        throw ParseError("weight file '" + name + "' has unknown kind tag " + std::to_string(kind));
    m.kind = static_cast<ModelKind>(kind);
    m.trainable = head_for(m.kind) != Head::cosine;
    const auto count = in.u32("layer count");
    if (count == 0 || count > 64) throw ParseError("weight file '" + name + "' declares " + std::to_string(count) + " layers");
    for (std::uint32_t i = 0; i < count; ++i) {
        ConvLayer<T> l;
        l.out_channels = in.u32("out channels");
        l.kernel_h = in.u32("kernel height");
        l.kernel_w = in.u32("kernel width");
        l.in_channels = in.u32("in channels");
        const auto act = in.u32("activation");
        if (act > static_cast<std::uint32_t>(Activation::tanh))
            throw ParseError("weight file '" + name + "' has unknown activation code " + std::to_string(act));
        l.activation = static_cast<Activation>(act);
        const std::size_t nw = l.out_channels * l.kernel_h * l.kernel_w * l.in_channels;
        in.require((nw + l.out_channels) * 4, "layer parameters");
        l.weights.resize(nw);
        for (auto& w : l.weights) w = static_cast<T>(in.f32("weights"));
        l.biases.resize(l.out_channels);
        for (auto& b : l.biases) b = static_cast<T>(in.f32("biases"));
        m.layers.push_back(std::move(l));
    }
    if (in.remaining() != 0)
        throw ParseError("weight file '" + name + "' has " + std::to_string(in.remaining()) + " trailing bytes");
    validate_model(m);
    return m;
}

template <typename T>
void save_weights(const Model<T>& m, const std::filesystem::path& path) {
    const auto bytes = serialize_weights(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

template <typename T = float>
Model<T> load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight file '" + path.string() + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_weights<T>(bytes, path.string());
}

} // namespace spectraflake
