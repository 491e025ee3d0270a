#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "spectraflake/cube.hpp"
#include "spectraflake/envi.hpp"
#include "spectraflake/mask_io.hpp"

namespace fs = std::filesystem;
using namespace spectraflake;

namespace {

fs::path scratch_dir() {
    auto dir = fs::temp_directory_path() / ("spectraflake_cube_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

void write_raw_file(const fs::path& base, const std::string& header_body, const std::vector<float>& values) {
    std::ofstream hdr(base.string() + ".hdr");
    hdr << "ENVI\n" << header_body;
    std::ofstream raw(base.string() + ".raw", std::ios::binary);
    raw.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
}

std::vector<float> iota_values(std::size_t n) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<float>(i);
    return v;
}

} // namespace

TEST(Envi, BsqLayoutMapsBandsToChannels) {
    const auto base = scratch_dir() / "bsq";
    write_raw_file(base, "samples = 2\nlines = 2\nbands = 3\ndata type = 4\ninterleave = bsq\n", iota_values(12));
    const auto cube = read_envi(base.string() + ".hdr");
    ASSERT_EQ(cube.height(), 2u);
    ASSERT_EQ(cube.width(), 2u);
    ASSERT_EQ(cube.channels(), 3u);
    EXPECT_EQ(cube(0, 0, 0), 0.0f);
    EXPECT_EQ(cube(0, 0, 1), 4.0f);
    EXPECT_EQ(cube(0, 0, 2), 8.0f);
    EXPECT_EQ(cube(1, 1, 2), 11.0f);
}

TEST(Envi, BipOfSameValuesGivesSameCanonicalCube) {
    const auto dir = scratch_dir();
    write_raw_file(dir / "a", "samples = 2\nlines = 2\nbands = 3\ndata type = 4\ninterleave = bsq\n", iota_values(12));
    const auto bsq = read_envi((dir / "a.hdr"));
    // Re-store the canonical cube in BIP order by hand.
    std::vector<float> bip(12);
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t c = 0; c < 3; ++c) bip[(y * 2 + x) * 3 + c] = bsq(y, x, c);
    write_raw_file(dir / "b", "samples = 2\nlines = 2\nbands = 3\ndata type = 4\ninterleave = bip\n", bip);
    EXPECT_EQ(read_envi(dir / "b.hdr"), bsq);
}

TEST(Envi, RoundTripIsBitExactForAllInterleaves) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<std::size_t> dim(1, 9);
        auto cube = oracle::random_cube(rng, dim(rng), dim(rng), dim(rng), -2.0, 5.0);
        for (auto il : {Interleave::bsq, Interleave::bil, Interleave::bip}) {
            const auto base = scratch_dir() / ("rt_" + std::to_string(trial) + to_string(il));
            write_envi(cube, base, il);
            const auto back = read_envi(base.string() + ".hdr");
            ASSERT_EQ(back.data().size(), cube.data().size());
            EXPECT_EQ(std::memcmp(back.data().data(), cube.data().data(), cube.data().size() * 4), 0);
        }
    }
}

TEST(Envi, RandomSevenByFiveByNineRoundTrip) {
    std::mt19937_64 rng(7);
    auto cube = oracle::random_cube(rng, 7, 5, 9);
    const auto base = scratch_dir() / "r759";
    write_envi(cube, base, Interleave::bil);
    EXPECT_EQ(read_envi(base.string() + ".hdr"), cube);
}

TEST(Envi, WavelengthsAreWrittenVerbatim) {
    HSCube cube(1, 1, 3, {0.1f, 0.2f, 0.3f}, {900.5, 1000.25, 1700});
    const auto base = scratch_dir() / "wl";
    write_envi(cube, base);
    std::ifstream in(base.string() + ".hdr");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("wavelength = {900.5, 1000.25, 1700}"), std::string::npos) << text;
    EXPECT_EQ(read_envi(base.string() + ".hdr").wavelengths(), cube.wavelengths());
}

TEST(Envi, EmptyCubeIsRejected) {
    HSCube cube(0, 4, 3);
    EXPECT_THROW(write_envi(cube, scratch_dir() / "empty"), ValidationError);
}

TEST(Envi, MissingFieldNamesTheField) {
    const auto base = scratch_dir() / "nolines";
    write_raw_file(base, "samples = 2\nbands = 3\ndata type = 4\ninterleave = bsq\n", iota_values(12));
    try {
        read_envi(base.string() + ".hdr");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("'lines'"), std::string::npos) << e.what();
    }
}

TEST(Envi, GarbledFieldNamesTheField) {
    const auto base = scratch_dir() / "garbled";
    write_raw_file(base, "samples = two\nlines = 2\nbands = 3\ndata type = 4\ninterleave = bsq\n", iota_values(12));
    try {
        read_envi(base.string() + ".hdr");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("'samples'"), std::string::npos) << e.what();
    }
}

TEST(Envi, SizeMismatchReportsExpectedAndActualBytes) {
    const auto base = scratch_dir() / "short";
    write_raw_file(base, "samples = 2\nlines = 2\nbands = 3\ndata type = 4\ninterleave = bsq\n", iota_values(11));
    try {
        read_envi(base.string() + ".hdr");
        FAIL() << "expected SizeError";
    } catch (const SizeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("44 bytes"), std::string::npos) << msg;
        EXPECT_NE(msg.find("expected 48"), std::string::npos) << msg;
    }
}

TEST(Envi, Uint16DigitalNumbersAreNotRescaled) {
    const auto dir = scratch_dir();
    {
        std::ofstream hdr(dir / "dn.hdr");
        hdr << "ENVI\nsamples = 2\nlines = 1\nbands = 2\ndata type = 12\ninterleave = bip\nbyte order = 0\n"
               "wavelength = {\n 901.0,\n 905.0 }\n";
        const std::uint16_t vals[4] = {0, 1000, 4095, 65535};
        std::ofstream raw(dir / "dn.raw", std::ios::binary);
        raw.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    }
    const auto cube = read_envi(dir / "dn.hdr");
    EXPECT_EQ(cube(0, 0, 1), 1000.0f);
    EXPECT_EQ(cube(0, 1, 0), 4095.0f);
    EXPECT_EQ(cube(0, 1, 1), 65535.0f);
    EXPECT_EQ(cube.wavelengths(), (std::vector<double>{901.0, 905.0}));
}

TEST(ColumnMean, ConstantCube) {
    HSCube cube(5, 3, 2, 7.0f);
    const auto g = column_mean(cube);
    for (double v : g.values) EXPECT_EQ(v, 7.0);
}

TEST(ColumnMean, ArithmeticMean) {
    HSCube cube(2, 1, 1, {2.0f, 4.0f});
    EXPECT_EQ(column_mean(cube)(0, 0), 3.0);
}

TEST(ColumnMean, MatchesBruteForceLoop) {
    std::mt19937_64 rng(3);
    const auto cube = oracle::random_cube(rng, 64, 8, 4, 100.0, 4000.0);
    const auto g = column_mean(cube);
    for (std::size_t x = 0; x < 8; ++x)
        for (std::size_t c = 0; c < 4; ++c) {
            double s = 0;
            for (std::size_t y = 0; y < 64; ++y) s += cube(y, x, c);
            const double ref = s / 64.0;
            EXPECT_LE(std::abs(g(x, c) - ref), 1e-6 * std::abs(ref));
        }
}

TEST(ColumnMean, ZeroHeightIsRejected) {
    HSCube cube(0, 3, 2);
    EXPECT_THROW(column_mean(cube), ValidationError);
}

TEST(Reflectance, BrightMapsToOneDarkToZero) {
    std::mt19937_64 rng(5);
    const auto bright_raw = oracle::random_cube(rng, 6, 4, 3, 3000.0, 4000.0);
    const auto dark_raw = oracle::random_cube(rng, 6, 4, 3, 100.0, 200.0);
    const auto refs = make_reference_profile(bright_raw, dark_raw);
    HSCube at_bright(3, 4, 3), at_dark(3, 4, 3);
    for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t x = 0; x < 4; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                at_bright(y, x, c) = static_cast<float>(refs.bright(x, c));
                at_dark(y, x, c) = static_cast<float>(refs.dark(x, c));
            }
    const auto ones = reflectance_correct(at_bright, refs);
    const auto zeros = reflectance_correct(at_dark, refs);
    EXPECT_EQ(ones.clamped_columns, 0u);
    for (float v : ones.cube.data()) EXPECT_NEAR(v, 1.0f, 1e-6);
    for (float v : zeros.cube.data()) EXPECT_NEAR(v, 0.0f, 1e-6);
}

TEST(Reflectance, DirectSubstitution) {
    ReferenceProfile refs{{1, 1, {10.0}}, {1, 1, {2.0}}};
    HSCube raw(1, 1, 1, {5.0f});
    EXPECT_FLOAT_EQ(reflectance_correct(raw, refs).cube(0, 0, 0), 0.375f);
}

TEST(Reflectance, DeadColumnsAreClampedAndCounted) {
    ReferenceProfile refs{{2, 1, {10.0, 3.0}}, {2, 1, {2.0, 3.0}}};
    HSCube raw(2, 2, 1, {5.0f, 4.0f, 6.0f, 2.0f});
    const auto r = reflectance_correct(raw, refs, 1e-6);
    EXPECT_EQ(r.clamped_columns, 1u);
    EXPECT_TRUE(r.cube.all_finite());
    EXPECT_FLOAT_EQ(r.cube(0, 1, 0), static_cast<float>(1.0 / 1e-6));
}

TEST(Reflectance, AffineInRaw) {
    // correct(a*B + (1-a)*D) = a for any a.
    ReferenceProfile refs{{1, 1, {900.0}}, {1, 1, {100.0}}};
    for (double a : {-0.5, 0.0, 0.25, 1.0, 1.2}) {
        HSCube raw(1, 1, 1, {static_cast<float>(a * 900.0 + (1 - a) * 100.0)});
        EXPECT_NEAR(reflectance_correct(raw, refs).cube(0, 0, 0), a, 1e-6);
    }
}

TEST(Reflectance, DimensionMismatchIsRejected) {
    ReferenceProfile refs{{3, 2, std::vector<double>(6, 2.0)}, {3, 2, std::vector<double>(6, 1.0)}};
    EXPECT_THROW(reflectance_correct(HSCube(2, 4, 2), refs), ValidationError);
    EXPECT_THROW(reflectance_correct(HSCube(2, 3, 3), refs), ValidationError);
}

TEST(Mask, RoundTrips) {
    const auto dir = scratch_dir();
    LabelMask zeros(5, 7);
    write_mask(zeros, dir / "z.pgm");
    EXPECT_EQ(read_mask(dir / "z.pgm"), zeros);

    LabelMask all(3, 5);
    for (std::size_t i = 0; i < all.labels.size(); ++i) all.labels[i] = static_cast<std::uint8_t>(i % 5);
    write_mask(all, dir / "a.pgm");
    EXPECT_EQ(read_mask(dir / "a.pgm", 5), all);
}

TEST(Mask, OutOfCatalogLabelIsRejected) {
    const auto dir = scratch_dir();
    LabelMask m(2, 2);
    m(1, 1) = 9;
    write_mask(m, dir / "nine.pgm");
    EXPECT_THROW(read_mask(dir / "nine.pgm", ClassCatalog().size()), ClassRangeError);
    EXPECT_NO_THROW(read_mask(dir / "nine.pgm"));
}

TEST(Mask, NonP5MagicIsRejected) {
    const auto dir = scratch_dir();
    std::ofstream(dir / "p2.pgm") << "P2\n1 1\n255\n0\n";
    EXPECT_THROW(read_mask(dir / "p2.pgm"), ParseError);
}

TEST(Catalog, DefaultsAndUniqueness) {
    ClassCatalog cat;
    EXPECT_EQ(cat.size(), 5u);
    EXPECT_EQ(cat.name(0), "BG");
    EXPECT_EQ(cat.name(4), "PET");
    EXPECT_THROW(ClassCatalog({"BG", "PE", "PE"}), ValidationError);
}

TEST(Cube, WavelengthInvariants) {
    HSCube cube(1, 1, 3);
    EXPECT_THROW(cube.set_wavelengths({900, 950}), ValidationError);
    EXPECT_THROW(cube.set_wavelengths({900, 950, 950}), ValidationError);
    EXPECT_NO_THROW(cube.set_wavelengths({900, 950, 951}));
}
