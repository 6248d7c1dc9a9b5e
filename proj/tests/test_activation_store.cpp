#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "featscope/activation_store.hpp"
#include "oracles.hpp"

using namespace featscope;
namespace fs = std::filesystem;

namespace {

ActivationMatrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed, AxisCoord axis = {}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 3.0f);
    std::vector<float> v(n * d);
    for (auto& x : v) x = normal(rng);
    return ActivationMatrix(n, d, std::move(v), axis);
}

}  // namespace

TEST(ActivationStore, ZeroMatrixRoundTrip) {
    const auto dir = oracle::scratch_dir("zero");
    const auto path = (dir / "zero.esad").string();
    ActivationMatrix m(2, 3, std::vector<float>(6, 0.0f));
    write_dump(m, oracle::make_meta(2), path);
    EXPECT_EQ(fs::file_size(path), kDumpHeaderBytes + 24);
    auto dump = read_dump(path);
    EXPECT_EQ(dump.matrix, m);
    EXPECT_EQ(dump.meta, oracle::make_meta(2));
}

TEST(ActivationStore, NanMatrixRefused) {
    const auto dir = oracle::scratch_dir("nan");
    const auto path = (dir / "nan.esad").string();
    std::vector<float> v(6, 1.0f);
    v[4] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_THROW(
        {
            ActivationMatrix m(2, 3, v);
            write_dump(m, oracle::make_meta(2), path);
        },
        ValidationError);
    EXPECT_FALSE(fs::exists(path));
    v[4] = std::numeric_limits<float>::infinity();
    EXPECT_THROW(ActivationMatrix(2, 3, v), ValidationError);
}

TEST(ActivationStore, RandomRoundTripIsBitExact) {
    const auto dir = oracle::scratch_dir("random");
    const auto path = (dir / "r.esad").string();
    const auto m = random_matrix(100, 16, 42, {70'000'000, 143'000, 5});
    write_dump(m, oracle::make_meta(100), path);
    const auto back = read_dump(path).matrix;
    ASSERT_EQ(back.n_samples(), 100u);
    ASSERT_EQ(back.dim(), 16u);
    for (std::size_t i = 0; i < 1600; ++i)
        EXPECT_EQ(std::bit_cast<std::uint32_t>(back.data()[i]), std::bit_cast<std::uint32_t>(m.data()[i]));
    EXPECT_EQ(back.axis(), m.axis());
}

TEST(ActivationStore, HeaderDeclaresShape) {
    const auto bytes = encode_dump(random_matrix(7, 5, 1));
    const auto m = decode_dump(bytes);
    EXPECT_EQ(m.n_samples(), 7u);
    EXPECT_EQ(m.dim(), 5u);
}

TEST(ActivationStore, TruncatedPayloadNamesByteCounts) {
    auto bytes = encode_dump(random_matrix(3, 4, 2));
    bytes.resize(bytes.size() - 4);
    try {
        decode_dump(bytes);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("48"), std::string::npos) << msg;
        EXPECT_NE(msg.find("44"), std::string::npos) << msg;
    }
}

TEST(ActivationStore, RejectsBadMagicAndVersion) {
    auto bytes = encode_dump(random_matrix(2, 2, 3));
    auto bad_magic = bytes;
    bad_magic[0] = std::byte{'X'};
    EXPECT_THROW(decode_dump(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = std::byte{2};
    EXPECT_THROW(decode_dump(bad_version), FormatError);
    auto oversized = bytes;
    oversized.push_back(std::byte{0});
    EXPECT_THROW(decode_dump(oversized), FormatError);
}

TEST(ActivationStore, NonFinitePayloadRejectedOnLoad) {
    auto bytes = encode_dump(random_matrix(2, 2, 4));
    // 0x7fc00000 little-endian: quiet NaN in the first payload slot.
    bytes[64] = std::byte{0x00};
    bytes[65] = std::byte{0x00};
    bytes[66] = std::byte{0xc0};
    bytes[67] = std::byte{0x7f};
    EXPECT_THROW(decode_dump(bytes), ValidationError);
}

// The expected bytes are spelled out by hand, so this holds on any host byte order.
TEST(ActivationStore, LittleEndianLayoutIsHostIndependent) {
    ActivationMatrix m(1, 2, {1.0f, -2.5f}, {12, 3, 1});
    const auto bytes = encode_dump(m);
    ASSERT_EQ(bytes.size(), 72u);
    const unsigned char expected_header[48] = {
        'E', 'S', 'A', 'D', 1, 0, 0, 0,  //
        1,   0,   0,   0,   0, 0, 0, 0,  // N
        2,   0,   0,   0,   0, 0, 0, 0,  // d
        12,  0,   0,   0,   0, 0, 0, 0,  // param_count
        3,   0,   0,   0,   0, 0, 0, 0,  // checkpoint_step
        1,   0,   0,   0,   0, 0, 0, 0,  // layer_index
    };
    for (std::size_t i = 0; i < 48; ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[i]), expected_header[i]) << i;
    for (std::size_t i = 48; i < 64; ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[i]), 0u);
    // 1.0f = 0x3f800000, -2.5f = 0xc0200000
    const unsigned char payload[8] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0};
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(static_cast<unsigned char>(bytes[64 + i]), payload[i]);

    std::vector<std::byte> hand(72, std::byte{0});
    for (std::size_t i = 0; i < 48; ++i) hand[i] = std::byte{expected_header[i]};
    for (std::size_t i = 0; i < 8; ++i) hand[64 + i] = std::byte{payload[i]};
    EXPECT_EQ(decode_dump(hand), m);
}

TEST(ActivationStore, MetadataValidation) {
    const auto dir = oracle::scratch_dir("meta");
    const auto path = (dir / "m.esad").string();
    const auto m = random_matrix(3, 2, 5);
    EXPECT_THROW(write_dump(m, oracle::make_meta(2), path), ValidationError);

    auto dup = oracle::make_meta(3);
    dup[2].sample_id = dup[0].sample_id;
    EXPECT_THROW(write_dump(m, dup, path), ValidationError);

    auto empty_text = oracle::make_meta(3);
    empty_text[1].text.clear();
    EXPECT_THROW(write_dump(m, empty_text, path), ValidationError);
}

TEST(ActivationStore, MissingFilesAreIoErrors) {
    EXPECT_THROW(read_dump("/nonexistent/featscope.esad"), IoError);
    const auto dir = oracle::scratch_dir("nosidecar");
    const auto path = (dir / "x.esad").string();
    write_dump(random_matrix(2, 2, 6), oracle::make_meta(2), path);
    fs::remove(sidecar_path(path));
    EXPECT_THROW(read_dump(path), IoError);
}

TEST(ActivationStore, MetadataSurvivesUnicodeAndQuotes) {
    const auto dir = oracle::scratch_dir("unicode");
    const auto path = (dir / "u.esad").string();
    std::vector<SampleMeta> meta = {{"a", "physics", "Newton’s \"laws\"\nline two"}, {"b", "law", "été"}};
    write_dump(random_matrix(2, 3, 7), meta, path);
    EXPECT_EQ(read_dump(path).meta, meta);
}

TEST(AxisCoord, LayerIndexBoundedByBlockCount) {
    AxisCoord c{12'000'000'000, 143'000, 35};
    EXPECT_NO_THROW(c.check_layer(36));
    c.layer_index = 36;
    EXPECT_THROW(c.check_layer(36), ValidationError);
}

TEST(ActivationMatrix, RejectsEmptyAndMismatchedShapes) {
    EXPECT_THROW(ActivationMatrix(0, 3, {}), ValidationError);
    EXPECT_THROW(ActivationMatrix(2, 0, {}), ValidationError);
    EXPECT_THROW(ActivationMatrix(2, 3, std::vector<float>(5)), ValidationError);
}
