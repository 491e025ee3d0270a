#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "spectraflake/cube.hpp"

namespace spectraflake {

namespace detail {

// Next whitespace-delimited token of a PNM header, skipping '#' comments.
inline std::string pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

inline std::size_t pnm_number(std::istream& in, const char* what) {
    const auto tok = pnm_token(in);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw ParseError(std::string("PGM header: invalid ") + what + " '" + tok + "'");
    return std::stoul(tok);
}

} // namespace detail

// Binary PGM (P5, maxval 255); pixel value is the class index. When
// n_classes is given, every label must be < n_classes.
inline LabelMask read_mask(const std::filesystem::path& path,
                           std::optional<std::size_t> n_classes = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open mask '" + path.string() + "'");
    const auto magic = detail::pnm_token(in);
    if (magic != "P5") throw ParseError("mask '" + path.string() + "': expected P5 magic, got '" + magic + "'");
    const std::size_t width = detail::pnm_number(in, "width");
    const std::size_t height = detail::pnm_number(in, "height");
    const std::size_t maxval = detail::pnm_number(in, "maxval");
    if (maxval != 255) throw ParseError("mask '" + path.string() + "': maxval must be 255");
    LabelMask mask(height, width);
    in.read(reinterpret_cast<char*>(mask.labels.data()), static_cast<std::streamsize>(mask.labels.size()));
    if (static_cast<std::size_t>(in.gcount()) != mask.labels.size())
        throw TruncationError("mask '" + path.string() + "' is truncated: expected " +
                              std::to_string(mask.labels.size()) + " pixel bytes, got " +
                              std::to_string(in.gcount()));
    if (n_classes) mask.check_range(*n_classes);
    return mask;
}

inline void write_mask(const LabelMask& mask, const std::filesystem::path& path) {
    if (mask.labels.size() != mask.height * mask.width)
        throw ValidationError("write_mask: label buffer does not match dimensions");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create '" + path.string() + "'");
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(mask.labels.data()), static_cast<std::streamsize>(mask.labels.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// BG black, PE red, PP green, PS blue, PET yellow; further classes cycle
// through a fixed secondary palette.
inline std::array<std::uint8_t, 3> class_color(std::size_t label) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 8> palette{{
        {0, 0, 0}, {255, 0, 0}, {0, 255, 0}, {0, 0, 255},
        {255, 255, 0}, {255, 0, 255}, {0, 255, 255}, {255, 255, 255},
    }};
    return palette[label % palette.size()];
}

// False-color P6 preview of a mask.
inline void write_preview(const LabelMask& mask, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create '" + path.string() + "'");
    out << "P6\n" << mask.width << " " << mask.height << "\n255\n";
    for (auto label : mask.labels) {
        const auto rgb = class_color(label);
        out.write(reinterpret_cast<const char*>(rgb.data()), 3);
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace spectraflake
