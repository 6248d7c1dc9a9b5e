#pragma once

// SAE checkpoint file, little-endian throughout:
//   0  char[4] magic "ESAE"
//   4  u32     version (1)
//   8  u64     m (latent width)
//   16 u64     d (input dim)
//   24 u64     k
//   32 u64     flags (bit 0: input mean block present)
//   40 u8[8]   reserved
//   48         E, m*d binary32 row-major
//              D, d*m binary32 row-major
//              [mean, d binary32]

#include <cstring>
#include <string>
#include <vector>

#include "featscope/detail/binary_io.hpp"
#include "featscope/sae.hpp"

namespace featscope {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 48;
inline constexpr char kCheckpointMagic[4] = {'E', 'S', 'A', 'E'};

inline std::vector<std::byte> encode_checkpoint(const SaeModel& model) {
    model.validate();
    const auto m = model.latent_width();
    const auto d = model.input_dim();
    const bool has_mean = model.input_mean.size() != 0;
    std::vector<std::byte> buf(kCheckpointHeaderBytes, std::byte{0});
    std::memcpy(buf.data(), kCheckpointMagic, 4);
    detail::put_u32(buf.data() + 4, kCheckpointVersion);
    detail::put_u64(buf.data() + 8, m);
    detail::put_u64(buf.data() + 16, d);
    detail::put_u64(buf.data() + 24, model.sparsity_k);
    detail::put_u64(buf.data() + 32, has_mean ? 1u : 0u);
    buf.reserve(buf.size() + 4 * (2 * m * d + (has_mean ? d : 0)));

    std::vector<float> row(d);
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < d; ++c)
            row[c] = model.encoder(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        detail::append_f32(buf, row);
    }
    row.resize(m);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < m; ++c)
            row[c] = model.decoder(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        detail::append_f32(buf, row);
    }
    if (has_mean)
        detail::append_f32(buf, std::span<const float>(model.input_mean.data(), d));
    return buf;
}

inline SaeModel decode_checkpoint(std::span<const std::byte> bytes) {
    if (bytes.size() < kCheckpointHeaderBytes) throw FormatError("checkpoint header truncated");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic");
    const auto version = detail::get_u32(bytes.data() + 4);
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto m = detail::get_u64(bytes.data() + 8);
    const auto d = detail::get_u64(bytes.data() + 16);
    const auto k = detail::get_u64(bytes.data() + 24);
    const auto flags = detail::get_u64(bytes.data() + 32);
    if (m == 0 || d == 0 || d > (UINT64_MAX / 8) / m) throw FormatError("checkpoint dimensions invalid");
    if (flags > 1) throw FormatError("unknown checkpoint flags " + std::to_string(flags));
    const bool has_mean = (flags & 1u) != 0;
    const std::uint64_t expected = 4 * (2 * m * d + (has_mean ? d : 0));
    const std::uint64_t actual = bytes.size() - kCheckpointHeaderBytes;
    if (actual != expected)
        throw FormatError("checkpoint payload: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(actual));

    SaeModel model;
    model.sparsity_k = k;
    std::vector<float> buf(m * d);
    auto payload = bytes.subspan(kCheckpointHeaderBytes);
    detail::decode_f32(payload.subspan(0, 4 * m * d), buf);
    model.encoder = Eigen::Map<const SaeModel::Matrix>(buf.data(), static_cast<Eigen::Index>(m),
                                                       static_cast<Eigen::Index>(d));
    detail::decode_f32(payload.subspan(4 * m * d, 4 * m * d), buf);
    model.decoder = Eigen::Map<const SaeModel::Matrix>(buf.data(), static_cast<Eigen::Index>(d),
                                                       static_cast<Eigen::Index>(m));
    if (has_mean) {
        std::vector<float> mean(d);
        detail::decode_f32(payload.subspan(8 * m * d, 4 * d), mean);
        model.input_mean = Eigen::Map<const SaeModel::Vector>(mean.data(), static_cast<Eigen::Index>(d));
    }
    try {
        model.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("checkpoint invalid: ") + e.what());
    }
    return model;
}

inline void write_checkpoint(const SaeModel& model, const std::string& path) {
    try {
        detail::write_file_bytes(path, encode_checkpoint(model));
    } catch (const Error&) {
        throw;
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
}

inline SaeModel read_checkpoint(const std::string& path) {
    std::vector<std::byte> bytes;
    try {
        bytes = detail::read_file_bytes(path);
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
    return decode_checkpoint(bytes);
}

/// Stable identifier of a model's exact weights.
inline std::string checkpoint_checksum(const SaeModel& model) {
    return detail::hex64(detail::fnv1a64(encode_checkpoint(model)));
}

inline bool bitwise_equal(const SaeModel& a, const SaeModel& b) { return encode_checkpoint(a) == encode_checkpoint(b); }

}  // namespace featscope
