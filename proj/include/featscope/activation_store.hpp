#pragma once

// Persistence of residual-stream activation matrices.
//
// A dump is two files:
//   <path>            64-byte little-endian header followed by N*d binary32 values (row-major)
//   <path>.meta.jsonl one JSON object per sample: {"sample_id", "subject", "text"}
//
// Header layout (all integers little-endian):
//   0  char[4] magic "ESAD"
//   4  u32     version (1)
//   8  u64     N (rows)
//   16 u64     d (columns)
//   24 u64     param_count
//   32 u64     checkpoint_step
//   40 u64     layer_index
//   48 u8[16]  reserved, written as zero

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "featscope/detail/binary_io.hpp"
#include "featscope/error.hpp"

namespace featscope {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Position of an activation matrix along the three study axes.
struct AxisCoord {
    std::uint64_t param_count = 0;
    std::uint64_t checkpoint_step = 0;
    std::uint64_t layer_index = 0;

    /// Checks the layer index against the block count of the source model.
    void check_layer(std::uint64_t block_count) const {
        if (layer_index >= block_count)
            throw ValidationError("layer_index " + std::to_string(layer_index) +
                                  " out of range for a model with " + std::to_string(block_count) +
                                  " blocks");
    }

    friend bool operator==(const AxisCoord&, const AxisCoord&) = default;
};

struct SampleMeta {
    std::string sample_id;
    std::string subject;
    std::string text;

    friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

/// Immutable N x d matrix of finite binary32 values.
class ActivationMatrix {
public:
    ActivationMatrix(std::size_t n_samples, std::size_t dim, std::vector<float> data, AxisCoord axis = {})
        : n_(n_samples), d_(dim), data_(std::move(data)), axis_(axis) {
        if (n_ == 0 || d_ == 0) throw ValidationError("activation matrix must have N > 0 and d > 0");
        if (data_.size() != n_ * d_)
            throw ValidationError("activation matrix holds " + std::to_string(data_.size()) +
                                  " values, expected N*d = " + std::to_string(n_ * d_));
        for (std::size_t i = 0; i < data_.size(); ++i)
            if (!std::isfinite(data_[i]))
                throw ValidationError("non-finite activation at row " + std::to_string(i / d_) +
                                      ", column " + std::to_string(i % d_));
    }

    template <typename Derived>
    static ActivationMatrix from_eigen(const Eigen::MatrixBase<Derived>& m, AxisCoord axis = {}) {
        RowMatrixXf rm = m.template cast<float>();
        std::vector<float> data(rm.data(), rm.data() + rm.size());
        return ActivationMatrix(static_cast<std::size_t>(rm.rows()), static_cast<std::size_t>(rm.cols()),
                                std::move(data), axis);
    }

    std::size_t n_samples() const { return n_; }
    std::size_t dim() const { return d_; }
    const AxisCoord& axis() const { return axis_; }
    std::span<const float> data() const { return data_; }

    std::span<const float> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
    float operator()(std::size_t i, std::size_t j) const { return data_[i * d_ + j]; }

    Eigen::Map<const RowMatrixXf> view() const {
        return {data_.data(), static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(d_)};
    }

    /// Double-precision copy for the linear-algebra routines.
    RowMatrixXd to_double() const { return view().cast<double>(); }

    ActivationMatrix with_axis(AxisCoord axis) const { return ActivationMatrix(n_, d_, data_, axis); }

    /// Bitwise equality, including the axis tag.
    friend bool operator==(const ActivationMatrix& a, const ActivationMatrix& b) {
        if (a.n_ != b.n_ || a.d_ != b.d_ || !(a.axis_ == b.axis_)) return false;
        for (std::size_t i = 0; i < a.data_.size(); ++i)
            if (std::bit_cast<std::uint32_t>(a.data_[i]) != std::bit_cast<std::uint32_t>(b.data_[i]))
                return false;
        return true;
    }

private:
    std::size_t n_;
    std::size_t d_;
    std::vector<float> data_;
    AxisCoord axis_;
};

struct Dump {
    ActivationMatrix matrix;
    std::vector<SampleMeta> meta;
};

inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::size_t kDumpHeaderBytes = 64;
inline constexpr char kDumpMagic[4] = {'E', 'S', 'A', 'D'};

inline std::string sidecar_path(const std::string& dump_path) { return dump_path + ".meta.jsonl"; }

inline void validate_meta(std::span<const SampleMeta> meta, std::size_t n_samples) {
    if (meta.size() != n_samples)
        throw ValidationError("metadata has " + std::to_string(meta.size()) + " rows but matrix has " +
                              std::to_string(n_samples) + " samples");
    std::unordered_set<std::string> seen;
    for (const auto& m : meta) {
        if (m.text.empty()) throw ValidationError("sample '" + m.sample_id + "' has empty text");
        if (!seen.insert(m.sample_id).second)
            throw ValidationError("duplicate sample_id '" + m.sample_id + "'");
    }
}

/// Serialises the header and payload of a dump (no sidecar).
inline std::vector<std::byte> encode_dump(const ActivationMatrix& m) {
    std::vector<std::byte> buf(kDumpHeaderBytes, std::byte{0});
    std::memcpy(buf.data(), kDumpMagic, 4);
    detail::put_u32(buf.data() + 4, kDumpVersion);
    detail::put_u64(buf.data() + 8, m.n_samples());
    detail::put_u64(buf.data() + 16, m.dim());
    detail::put_u64(buf.data() + 24, m.axis().param_count);
    detail::put_u64(buf.data() + 32, m.axis().checkpoint_step);
    detail::put_u64(buf.data() + 40, m.axis().layer_index);
    detail::append_f32(buf, m.data());
    return buf;
}

inline ActivationMatrix decode_dump(std::span<const std::byte> bytes) {
    if (bytes.size() < kDumpHeaderBytes)
        throw FormatError("dump header truncated: expected " + std::to_string(kDumpHeaderBytes) +
                          " bytes, found " + std::to_string(bytes.size()));
    if (std::memcmp(bytes.data(), kDumpMagic, 4) != 0) throw FormatError("bad dump magic (expected \"ESAD\")");
    const auto version = detail::get_u32(bytes.data() + 4);
    if (version != kDumpVersion)
        throw FormatError("unsupported dump version " + std::to_string(version) + " (expected " +
                          std::to_string(kDumpVersion) + ")");
    const auto n = detail::get_u64(bytes.data() + 8);
    const auto d = detail::get_u64(bytes.data() + 16);
    AxisCoord axis{detail::get_u64(bytes.data() + 24), detail::get_u64(bytes.data() + 32),
                   detail::get_u64(bytes.data() + 40)};
    if (n == 0 || d == 0) throw FormatError("dump header declares an empty matrix");
    if (d > (UINT64_MAX / 4) / n) throw FormatError("dump header dimensions overflow");
    const std::uint64_t expected = n * d * 4;
    const std::uint64_t actual = bytes.size() - kDumpHeaderBytes;
    if (actual != expected)
        throw FormatError((actual < expected ? "truncated payload" : "oversized payload") +
                          std::string(": expected ") + std::to_string(expected) + " bytes, found " +
                          std::to_string(actual));
    std::vector<float> data(n * d);
    detail::decode_f32(bytes.subspan(kDumpHeaderBytes), data);
    return ActivationMatrix(n, d, std::move(data), axis);
}

inline void write_meta(const std::string& path, std::span<const SampleMeta> meta) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (const auto& m : meta)
        out << nlohmann::json{{"sample_id", m.sample_id}, {"subject", m.subject}, {"text", m.text}}.dump() << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::vector<SampleMeta> read_meta(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metadata sidecar '" + path + "'");
    std::vector<SampleMeta> meta;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            meta.push_back({j.at("sample_id").get<std::string>(), j.at("subject").get<std::string>(),
                            j.at("text").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return meta;
}

inline void write_dump(const ActivationMatrix& matrix, std::span<const SampleMeta> meta, const std::string& path) {
    validate_meta(meta, matrix.n_samples());
    try {
        detail::write_file_bytes(path, encode_dump(matrix));
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
    write_meta(sidecar_path(path), meta);
}

inline Dump read_dump(const std::string& path) {
    std::vector<std::byte> bytes;
    try {
        bytes = detail::read_file_bytes(path);
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
    auto matrix = decode_dump(bytes);
    auto meta = read_meta(sidecar_path(path));
    validate_meta(meta, matrix.n_samples());
    return {std::move(matrix), std::move(meta)};
}

}  // namespace featscope
