#pragma once

// Host-independent little-endian encoding helpers shared by the dump,
// checkpoint and alignment formats.

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace featscope::detail {

inline void put_u32(std::byte* out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xffu);
}

inline void put_u64(std::byte* out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xffu);
}

inline std::uint32_t get_u32(const std::byte* in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(const std::byte* in) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
    return v;
}

inline void put_f32(std::byte* out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32(const std::byte* in) { return std::bit_cast<float>(get_u32(in)); }

/// Appends `values` as little-endian IEEE-754 binary32.
inline void append_f32(std::vector<std::byte>& buf, std::span<const float> values) {
    const std::size_t base = buf.size();
    buf.resize(base + 4 * values.size());
    for (std::size_t i = 0; i < values.size(); ++i) put_f32(buf.data() + base + 4 * i, values[i]);
}

inline void decode_f32(std::span<const std::byte> bytes, std::span<float> out) {
    if (bytes.size() != 4 * out.size())
        throw std::logic_error("decode_f32: byte count does not match element count");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = get_f32(bytes.data() + 4 * i);
}

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

/// 64-bit FNV-1a. Used for fixture keys and artifact checksums.
constexpr std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t h = kFnvOffset) {
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = kFnvOffset) {
    return fnv1a64(std::as_bytes(std::span(text.data(), text.size())), h);
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

inline std::vector<std::byte> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    const auto size = static_cast<std::size_t>(in.tellg());
    std::vector<std::byte> buf(size);
    in.seekg(0);
    if (size > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size)))
        throw std::runtime_error("failed reading '" + path + "'");
    return buf;
}

inline void write_file_bytes(const std::string& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace featscope::detail
