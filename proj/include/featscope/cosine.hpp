#pragma once

#include <algorithm>
#include <string>

#include <Eigen/Core>

#include "featscope/error.hpp"

namespace featscope {

template <typename A, typename B>
double cosine_similarity(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
    if (u.size() != v.size())
        throw DimensionError("cosine_similarity: lengths " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
    const double nu = u.template cast<double>().norm();
    const double nv = v.template cast<double>().norm();
    if (nu == 0.0 || nv == 0.0) throw ValidationError("cosine_similarity: zero vector");
    return std::clamp(u.template cast<double>().dot(v.template cast<double>()) / (nu * nv), -1.0, 1.0);
}

}  // namespace featscope
