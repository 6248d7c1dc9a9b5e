#pragma once

// Cross-width alignment of activation matrices by orthogonal Procrustes, and the
// similarity scores used to judge it.
//
// An alignment is persisted as two files:
//   <path>               the map W (d_m x d_ref) in the activation dump format
//   <path>.metrics.json  {"n_samples", "d_m", "d_ref", "centered", "residual", "cka", "cos_corr",
//                         "mean_m", "mean_ref"}

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "featscope/activation_store.hpp"
#include "featscope/cosine.hpp"
#include "featscope/error.hpp"

namespace featscope {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {

inline void require_same_rows(const Matrix& x, const Matrix& y, const char* what) {
    if (x.rows() != y.rows())
        throw DimensionError(std::string(what) + ": sample counts " + std::to_string(x.rows()) + " and " +
                             std::to_string(y.rows()) + " differ");
}

inline Matrix center_columns(const Matrix& x) { return x.rowwise() - x.colwise().mean(); }

/// Rows scaled to unit length; a zero row is an error.
inline Matrix unit_rows(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double n = x.row(i).norm();
        if (n == 0.0) throw ValidationError("row " + std::to_string(i) + " is zero");
        out.row(i) /= n;
    }
    return out;
}

}  // namespace detail

/// Linear CKA of the column-centred inputs.
inline double linear_cka(const Matrix& x, const Matrix& y) {
    detail::require_same_rows(x, y, "linear_cka");
    const Matrix xc = detail::center_columns(x), yc = detail::center_columns(y);
    const double xx = (xc.transpose() * xc).norm();
    const double yy = (yc.transpose() * yc).norm();
    if (xx == 0.0 || yy == 0.0) throw ValidationError("linear_cka: input has zero variance");
    const double xy = (xc.transpose() * yc).squaredNorm();
    return xy / (xx * yy);
}

/// Pearson correlation between the strict upper triangles of the two N x N row-cosine
/// matrices. Rows are processed in blocks so the full matrices are never held.
inline double cosine_matrix_correlation(const Matrix& x, const Matrix& y, Eigen::Index block = 256) {
    detail::require_same_rows(x, y, "cosine_matrix_correlation");
    const Eigen::Index n = x.rows();
    if (n < 3) throw ValidationError("cosine_matrix_correlation needs at least 3 samples");
    const Matrix xu = detail::unit_rows(x), yu = detail::unit_rows(y);
    const double pairs = 0.5 * double(n) * double(n - 1);

    auto for_each_block = [&](auto&& fn) {
        for (Eigen::Index start = 0; start < n - 1; start += block) {
            const Eigen::Index rows = std::min(block, n - 1 - start);
            const Matrix cx = xu.middleRows(start, rows) * xu.transpose();
            const Matrix cy = yu.middleRows(start, rows) * yu.transpose();
            for (Eigen::Index r = 0; r < rows; ++r) {
                const Eigen::Index i = start + r, tail = n - i - 1;
                fn(cx.row(r).tail(tail), cy.row(r).tail(tail));
            }
        }
    };

    double sx = 0, sy = 0;
    for_each_block([&](const auto& a, const auto& b) {
        sx += a.sum();
        sy += b.sum();
    });
    const double mx = sx / pairs, my = sy / pairs;
    double sxx = 0, syy = 0, sxy = 0;
    for_each_block([&](const auto& a, const auto& b) {
        const auto da = (a.array() - mx), db = (b.array() - my);
        sxx += (da * da).sum();
        syy += (db * db).sum();
        sxy += (da * db).sum();
    });
    if (sxx == 0.0 || syy == 0.0) throw ValidationError("cosine_matrix_correlation: cosine matrix is constant");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct AlignmentResult {
    Matrix map_w;     // d_m x d_ref, orthonormal rows
    Vector mean_m;    // column means removed before alignment (zero when not centred)
    Vector mean_ref;
    bool centered = true;
    std::size_t n_samples = 0;
    double residual = 0.0;  // ||X_m W - X_ref||_F / ||X_ref||_F
    double cka = 0.0;
    double cos_corr = 0.0;

    /// Maps rows of a d_m-wide matrix into the reference basis.
    Matrix apply(const Matrix& x) const {
        if (x.cols() != map_w.rows())
            throw DimensionError("alignment expects width " + std::to_string(map_w.rows()) + ", got " +
                                 std::to_string(x.cols()));
        return ((x.rowwise() - mean_m.transpose()) * map_w).rowwise() + mean_ref.transpose();
    }
};

/// W = U V^T from the thin SVD of X_m^T X_ref, the minimiser of ||X_m W - X_ref||_F over
/// maps with orthonormal rows. With `center`, both inputs are column-centred first and the
/// scores are computed on the centred pair.
inline AlignmentResult procrustes_align(const Matrix& x_m, const Matrix& x_ref, bool center = true) {
    detail::require_same_rows(x_m, x_ref, "procrustes_align");
    if (x_m.cols() > x_ref.cols())
        throw DimensionError("procrustes_align: source width " + std::to_string(x_m.cols()) + " exceeds reference width " +
                             std::to_string(x_ref.cols()));
    if (!x_m.allFinite() || !x_ref.allFinite()) throw ValidationError("procrustes_align: non-finite input");

    AlignmentResult out;
    out.centered = center;
    out.n_samples = static_cast<std::size_t>(x_m.rows());
    out.mean_m = center ? Vector(x_m.colwise().mean().transpose()) : Vector::Zero(x_m.cols());
    out.mean_ref = center ? Vector(x_ref.colwise().mean().transpose()) : Vector::Zero(x_ref.cols());
    const Matrix a = x_m.rowwise() - out.mean_m.transpose();
    const Matrix b = x_ref.rowwise() - out.mean_ref.transpose();

    const Matrix cross = a.transpose() * b;
    Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw NumericalError("procrustes_align: SVD did not converge");
    const auto& sigma = svd.singularValues();
    if (sigma.size() == 0 || !(sigma(0) > 0.0) || !std::isfinite(sigma(0)))
        throw NumericalError("procrustes_align: cross-covariance is degenerate");
    out.map_w = svd.matrixU() * svd.matrixV().transpose();

    const double ref_norm = b.norm();
    if (ref_norm == 0.0) throw NumericalError("procrustes_align: reference matrix is zero");
    const Matrix aligned = a * out.map_w;
    out.residual = (aligned - b).norm() / ref_norm;
    out.cka = linear_cka(aligned, b);
    out.cos_corr = cosine_matrix_correlation(aligned, b);
    return out;
}

inline AlignmentResult procrustes_align(const ActivationMatrix& x_m, const ActivationMatrix& x_ref, bool center = true) {
    return procrustes_align(Matrix(x_m.to_double()), Matrix(x_ref.to_double()), center);
}

/// Source activations expressed in the reference basis, keeping the source axis tag.
inline ActivationMatrix align_to_reference(const ActivationMatrix& x_m, const AlignmentResult& alignment) {
    return ActivationMatrix::from_eigen(alignment.apply(Matrix(x_m.to_double())), x_m.axis());
}

/// L x L cosine similarities between per-layer representation vectors.
inline Matrix layer_similarity_matrix(std::span<const Vector> layers) {
    if (layers.size() < 2) throw ValidationError("layer_similarity_matrix needs at least 2 layers");
    const auto l = static_cast<Eigen::Index>(layers.size());
    Matrix s(l, l);
    for (Eigen::Index a = 0; a < l; ++a) {
        s(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < l; ++b) s(a, b) = s(b, a) = cosine_similarity(layers[a], layers[b]);
    }
    return s;
}

/// Mean-vector form: each layer is represented by the column mean of its activations.
inline Matrix layer_similarity_matrix(std::span<const ActivationMatrix> layers) {
    std::vector<Vector> means;
    for (const auto& m : layers) {
        if (!means.empty() && static_cast<Eigen::Index>(m.dim()) != means.front().size())
            throw DimensionError("layer_similarity_matrix: layers have widths " + std::to_string(means.front().size()) +
                                 " and " + std::to_string(m.dim()));
        means.push_back(m.to_double().colwise().mean().transpose());
    }
    return layer_similarity_matrix(std::span<const Vector>(means));
}

inline std::string metrics_path(const std::string& path) { return path + ".metrics.json"; }

inline void write_alignment(const AlignmentResult& r, const std::string& path) {
    const auto w = ActivationMatrix::from_eigen(r.map_w);
    try {
        detail::write_file_bytes(path, encode_dump(w));
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
    const nlohmann::json j = {{"n_samples", r.n_samples},
                              {"d_m", r.map_w.rows()},
                              {"d_ref", r.map_w.cols()},
                              {"centered", r.centered},
                              {"residual", r.residual},
                              {"cka", r.cka},
                              {"cos_corr", r.cos_corr},
                              {"mean_m", std::vector<double>(r.mean_m.data(), r.mean_m.data() + r.mean_m.size())},
                              {"mean_ref", std::vector<double>(r.mean_ref.data(), r.mean_ref.data() + r.mean_ref.size())}};
    std::ofstream out(metrics_path(path), std::ios::binary);
    if (!out) throw IoError("cannot write " + metrics_path(path));
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + metrics_path(path));
}

/// The map comes back at binary32 precision; everything else is exact.
inline AlignmentResult read_alignment(const std::string& path) {
    std::vector<std::byte> bytes;
    try {
        bytes = detail::read_file_bytes(path);
    } catch (const std::runtime_error& e) {
        throw IoError(e.what());
    }
    const auto w = decode_dump(bytes);
    std::ifstream in(metrics_path(path), std::ios::binary);
    if (!in) throw IoError("cannot open " + metrics_path(path));
    AlignmentResult r;
    try {
        const auto j = nlohmann::json::parse(in);
        r.n_samples = j.at("n_samples").get<std::size_t>();
        r.centered = j.at("centered").get<bool>();
        r.residual = j.at("residual").get<double>();
        r.cka = j.at("cka").get<double>();
        r.cos_corr = j.at("cos_corr").get<double>();
        const auto mm = j.at("mean_m").get<std::vector<double>>();
        const auto mr = j.at("mean_ref").get<std::vector<double>>();
        r.mean_m = Eigen::Map<const Vector>(mm.data(), static_cast<Eigen::Index>(mm.size()));
        r.mean_ref = Eigen::Map<const Vector>(mr.data(), static_cast<Eigen::Index>(mr.size()));
        if (j.at("d_m").get<std::size_t>() != w.n_samples() || j.at("d_ref").get<std::size_t>() != w.dim())
            throw FormatError(metrics_path(path) + ": shape disagrees with " + path);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(metrics_path(path) + ": " + e.what());
    }
    r.map_w = w.to_double();
    if (static_cast<std::size_t>(r.mean_m.size()) != w.n_samples() || static_cast<std::size_t>(r.mean_ref.size()) != w.dim())
        throw FormatError(metrics_path(path) + ": mean vector widths disagree with the map");
    return r;
}

}  // namespace featscope
