#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spectraflake/cube.hpp"

namespace spectraflake {

enum class Interleave { bsq, bil, bip };

inline std::string to_string(Interleave il) {
    switch (il) {
    case Interleave::bsq: return "bsq";
    case Interleave::bil: return "bil";
    case Interleave::bip: return "bip";
    }
    return "bsq";
}

inline Interleave parse_interleave(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "bsq") return Interleave::bsq;
    if (s == "bil") return Interleave::bil;
    if (s == "bip") return Interleave::bip;
    throw ParseError("invalid value for header field 'interleave': '" + s + "'");
}

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return s;
}

// Offset of element (line y, sample x, band c) within the stored file.
inline std::size_t stored_index(Interleave il, std::size_t y, std::size_t x, std::size_t c,
                                std::size_t lines, std::size_t samples, std::size_t bands) {
    switch (il) {
    case Interleave::bsq: return (c * lines + y) * samples + x;
    case Interleave::bil: return (y * bands + c) * samples + x;
    case Interleave::bip: return (y * samples + x) * bands + c;
    }
    return 0;
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace detail

// Key/value pairs from an ENVI text header. Keys are lower-cased; brace
// values may span lines and are stored without the braces.
inline std::map<std::string, std::string> parse_envi_header(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "ENVI")
        throw ParseError("ENVI header must start with the line 'ENVI'");
    std::map<std::string, std::string> fields;
    while (std::getline(in, line)) {
        const auto trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed[0] == ';') continue;
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) throw ParseError("garbled header line: '" + trimmed + "'");
        std::string key = detail::lower(detail::trim(std::string_view(trimmed).substr(0, eq)));
        std::string value = detail::trim(std::string_view(trimmed).substr(eq + 1));
        if (!value.empty() && value.front() == '{') {
            while (value.find('}') == std::string::npos) {
                std::string more;
                if (!std::getline(in, more))
                    throw ParseError("unterminated '{' in header field '" + key + "'");
                value += ' ' + more;
            }
            const auto close = value.find('}');
            value = detail::trim(std::string_view(value).substr(1, close - 1));
        }
        fields[key] = value;
    }
    return fields;
}

namespace detail {

inline std::size_t require_count(const std::map<std::string, std::string>& f, const std::string& key) {
    auto it = f.find(key);
    if (it == f.end()) throw ParseError("missing header field '" + key + "'");
    std::size_t v = 0;
    const auto& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError("invalid value for header field '" + key + "': '" + s + "'");
    return v;
}

inline std::vector<double> parse_number_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto t = trim(item);
        if (t.empty()) continue;
        double v = 0;
        auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (res.ec != std::errc() || res.ptr != t.data() + t.size())
            throw ParseError("invalid value for header field '" + key + "': '" + t + "'");
        out.push_back(v);
    }
    return out;
}

inline std::filesystem::path find_companion(const std::filesystem::path& header) {
    namespace fs = std::filesystem;
    fs::path base = header;
    if (detail::lower(base.extension().string()) == ".hdr") base.replace_extension();
    for (const char* ext : {"", ".raw", ".img", ".dat", ".bin"}) {
        fs::path candidate = base;
        candidate += ext;
        if (candidate != header && fs::is_regular_file(candidate)) return candidate;
    }
    throw IoError("no raw companion found for header '" + header.string() + "'");
}

template <typename T>
T byteswap_value(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
}

template <typename T>
std::vector<float> decode_samples(const std::vector<char>& bytes, bool big_endian) {
    const std::size_t n = bytes.size() / sizeof(T);
    std::vector<float> out(n);
    const bool swap = big_endian != (std::endian::native == std::endian::big);
    for (std::size_t i = 0; i < n; ++i) {
        T v;
        std::memcpy(&v, bytes.data() + i * sizeof(T), sizeof(T));
        if (swap) v = byteswap_value(v);
        out[i] = static_cast<float>(v);
    }
    return out;
}

} // namespace detail

// Reads an ENVI header plus raw companion into canonical (y, x, c) layout.
// Supported data types: 1 (uint8), 12 (uint16), 4 (float32). Integer DN
// values are converted without rescaling.
inline HSCube read_envi(const std::filesystem::path& header_path) {
    std::ifstream hdr(header_path);
    if (!hdr) throw IoError("cannot open header '" + header_path.string() + "'");
    const auto fields = parse_envi_header(hdr);

    const std::size_t samples = detail::require_count(fields, "samples");
    const std::size_t lines = detail::require_count(fields, "lines");
    const std::size_t bands = detail::require_count(fields, "bands");
    const std::size_t data_type = detail::require_count(fields, "data type");
    auto il_it = fields.find("interleave");
    if (il_it == fields.end()) throw ParseError("missing header field 'interleave'");
    const Interleave il = parse_interleave(il_it->second);

    std::size_t offset = 0;
    if (fields.count("header offset")) offset = detail::require_count(fields, "header offset");
    bool big_endian = false;
    if (fields.count("byte order")) {
        const auto bo = detail::require_count(fields, "byte order");
        if (bo > 1) throw ParseError("invalid value for header field 'byte order'");
        big_endian = bo == 1;
    }

    std::size_t elem_size = 0;
    switch (data_type) {
    case 1: elem_size = 1; break;
    case 12: elem_size = 2; break;
    case 4: elem_size = 4; break;
    default:
        throw ParseError("invalid value for header field 'data type': " + std::to_string(data_type) +
                         " (supported: 1, 12, 4)");
    }

    std::vector<double> wavelengths;
    if (auto it = fields.find("wavelength"); it != fields.end()) {
        wavelengths = detail::parse_number_list("wavelength", it->second);
        if (wavelengths.size() != bands)
            throw ParseError("header field 'wavelength' has " + std::to_string(wavelengths.size()) +
                             " entries, expected " + std::to_string(bands));
    }

    const auto raw_path = detail::find_companion(header_path);
    std::ifstream raw(raw_path, std::ios::binary);
    if (!raw) throw IoError("cannot open raw file '" + raw_path.string() + "'");
    const std::size_t count = samples * lines * bands;
    const std::size_t expected = count * elem_size + offset;
    const auto actual = static_cast<std::size_t>(std::filesystem::file_size(raw_path));
    if (actual != expected)
        throw SizeError("raw file '" + raw_path.string() + "' has " + std::to_string(actual) +
                        " bytes, expected " + std::to_string(expected));
    raw.seekg(static_cast<std::streamoff>(offset));
    std::vector<char> bytes(count * elem_size);
    raw.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!raw) throw IoError("short read from '" + raw_path.string() + "'");

    std::vector<float> stored;
    switch (data_type) {
    case 1: stored = detail::decode_samples<std::uint8_t>(bytes, big_endian); break;
    case 12: stored = detail::decode_samples<std::uint16_t>(bytes, big_endian); break;
    default: stored = detail::decode_samples<float>(bytes, big_endian); break;
    }

    HSCube cube(lines, samples, bands);
    for (std::size_t y = 0; y < lines; ++y)
        for (std::size_t x = 0; x < samples; ++x)
            for (std::size_t c = 0; c < bands; ++c)
                cube(y, x, c) = stored[detail::stored_index(il, y, x, c, lines, samples, bands)];
    if (!cube.all_finite()) throw ValidationError("cube '" + raw_path.string() + "' contains NaN or Inf");
    try {
        cube.set_wavelengths(std::move(wavelengths));
    } catch (const ValidationError& e) {
        throw ParseError(std::string("invalid value for header field 'wavelength': ") + e.what());
    }
    return cube;
}

// Writes <base>.hdr and <base>.raw as little-endian float32.
inline void write_envi(const HSCube& cube, const std::filesystem::path& base_path,
                       Interleave il = Interleave::bsq) {
    if (cube.height() == 0 || cube.width() == 0 || cube.channels() == 0)
        throw ValidationError("write_envi: cube has an empty dimension (" + std::to_string(cube.height()) +
                              "x" + std::to_string(cube.width()) + "x" + std::to_string(cube.channels()) +
                              ")");
    const std::size_t lines = cube.height(), samples = cube.width(), bands = cube.channels();

    std::filesystem::path hdr_path = base_path;
    hdr_path += ".hdr";
    std::filesystem::path raw_path = base_path;
    raw_path += ".raw";

    std::vector<float> stored(cube.data().size());
    for (std::size_t y = 0; y < lines; ++y)
        for (std::size_t x = 0; x < samples; ++x)
            for (std::size_t c = 0; c < bands; ++c)
                stored[detail::stored_index(il, y, x, c, lines, samples, bands)] = cube(y, x, c);
    if constexpr (std::endian::native == std::endian::big)
        for (float& v : stored) v = detail::byteswap_value(v);

    std::ofstream raw(raw_path, std::ios::binary | std::ios::trunc);
    if (!raw) throw IoError("cannot create '" + raw_path.string() + "'");
    raw.write(reinterpret_cast<const char*>(stored.data()),
              static_cast<std::streamsize>(stored.size() * sizeof(float)));
    if (!raw) throw IoError("write failed for '" + raw_path.string() + "'");

    std::ofstream hdr(hdr_path, std::ios::trunc);
    if (!hdr) throw IoError("cannot create '" + hdr_path.string() + "'");
    hdr << "ENVI\n"
        << "file type = ENVI Standard\n"
        << "samples = " << samples << "\n"
        << "lines = " << lines << "\n"
        << "bands = " << bands << "\n"
        << "header offset = 0\n"
        << "data type = 4\n"
        << "interleave = " << to_string(il) << "\n"
        << "byte order = 0\n";
    if (!cube.wavelengths().empty()) {
        hdr << "wavelength units = Nanometers\n";
        hdr << "wavelength = {";
        for (std::size_t i = 0; i < cube.wavelengths().size(); ++i)
            hdr << (i ? ", " : "") << detail::format_double(cube.wavelengths()[i]);
        hdr << "}\n";
    }
    if (!hdr) throw IoError("write failed for '" + hdr_path.string() + "'");
}

} // namespace spectraflake
