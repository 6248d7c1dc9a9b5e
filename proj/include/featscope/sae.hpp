#pragma once

// Top-k sparse autoencoder without bias terms:
//   z = E x,  z~ = topk(z, k),  x^ = D z~,  loss = ||x - x^||^2
// E is m x d, D is d x m. The trainer adds the multi-k auxiliary
// reconstructions and aux-k promotion of long-silent latents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "featscope/activation_store.hpp"
#include "featscope/error.hpp"

namespace featscope {

using Index = std::size_t;

template <typename Scalar>
struct BasicSaeModel {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Matrix encoder;     // m x d, rows are latent read directions
    ColMatrix decoder;  // d x m, columns are dictionary atoms
    std::size_t sparsity_k = 1;
    /// Subtracted from every input before encoding; empty when centering is off.
    Vector input_mean;

    std::size_t latent_width() const { return static_cast<std::size_t>(encoder.rows()); }
    std::size_t input_dim() const { return static_cast<std::size_t>(encoder.cols()); }

    void validate() const {
        if (encoder.rows() == 0 || encoder.cols() == 0) throw ValidationError("SAE has an empty encoder");
        if (decoder.rows() != encoder.cols() || decoder.cols() != encoder.rows())
            throw DimensionError("decoder is " + std::to_string(decoder.rows()) + "x" +
                                 std::to_string(decoder.cols()) + ", expected " +
                                 std::to_string(encoder.cols()) + "x" + std::to_string(encoder.rows()));
        if (sparsity_k < 1 || sparsity_k > latent_width())
            throw ValidationError("sparsity_k must lie in [1, latent_width]");
        if (input_mean.size() != 0 && static_cast<std::size_t>(input_mean.size()) != input_dim())
            throw DimensionError("input_mean length does not match input_dim");
    }

    template <typename Other>
    BasicSaeModel<Other> cast() const {
        BasicSaeModel<Other> out;
        out.encoder = encoder.template cast<Other>();
        out.decoder = decoder.template cast<Other>();
        out.sparsity_k = sparsity_k;
        out.input_mean = input_mean.template cast<Other>();
        return out;
    }
};

using SaeModel = BasicSaeModel<float>;

template <typename Scalar, typename Derived>
typename BasicSaeModel<Scalar>::Vector encode(const BasicSaeModel<Scalar>& model,
                                              const Eigen::MatrixBase<Derived>& x) {
    if (static_cast<std::size_t>(x.size()) != model.input_dim())
        throw DimensionError("encode: input has length " + std::to_string(x.size()) + ", expected " +
                             std::to_string(model.input_dim()));
    return model.encoder * x;
}

/// Indices of the k largest-magnitude entries of z, largest first; ties go to the lower index.
template <typename Derived>
std::vector<Index> topk_indices(const Eigen::MatrixBase<Derived>& z, std::size_t k) {
    const auto m = static_cast<std::size_t>(z.size());
    if (k < 1 || k > m)
        throw ValidationError("top-k budget " + std::to_string(k) + " outside [1, " + std::to_string(m) + "]");
    std::vector<Index> idx(m);
    std::iota(idx.begin(), idx.end(), Index{0});
    auto before = [&](Index a, Index b) {
        const auto ma = std::abs(z(static_cast<Eigen::Index>(a)));
        const auto mb = std::abs(z(static_cast<Eigen::Index>(b)));
        return ma > mb || (ma == mb && a < b);
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), before);
    idx.resize(k);
    return idx;
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> topk_mask(const Eigen::MatrixBase<Derived>& z,
                                                                     std::size_t k) {
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> out =
        Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>::Zero(z.size());
    for (Index j : topk_indices(z, k)) out(static_cast<Eigen::Index>(j)) = z(static_cast<Eigen::Index>(j));
    return out;
}

template <typename Scalar, typename Derived>
typename BasicSaeModel<Scalar>::Vector decode(const BasicSaeModel<Scalar>& model,
                                              const Eigen::MatrixBase<Derived>& z_masked) {
    if (static_cast<std::size_t>(z_masked.size()) != model.latent_width())
        throw DimensionError("decode: code has length " + std::to_string(z_masked.size()) + ", expected " +
                             std::to_string(model.latent_width()));
    return model.decoder * z_masked;
}

/// Squared Euclidean distance, accumulated in double.
template <typename DerivedA, typename DerivedB>
double reconstruction_loss(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& x_hat) {
    if (x.size() != x_hat.size())
        throw DimensionError("reconstruction_loss: lengths " + std::to_string(x.size()) + " and " +
                             std::to_string(x_hat.size()) + " differ");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double diff = static_cast<double>(x(i)) - static_cast<double>(x_hat(i));
        acc += diff * diff;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Loss and gradients with a fixed gate.

/// One reconstruction term: the latents allowed through and the term's weight.
struct MaskLevel {
    std::vector<Index> support;
    double weight = 1.0;
};

template <typename Scalar>
struct SaeGradients {
    typename BasicSaeModel<Scalar>::Matrix d_encoder;
    typename BasicSaeModel<Scalar>::ColMatrix d_decoder;

    explicit SaeGradients(const BasicSaeModel<Scalar>& model)
        : d_encoder(BasicSaeModel<Scalar>::Matrix::Zero(model.encoder.rows(), model.encoder.cols())),
          d_decoder(BasicSaeModel<Scalar>::ColMatrix::Zero(model.decoder.rows(), model.decoder.cols())) {}

    void set_zero() {
        d_encoder.setZero();
        d_decoder.setZero();
    }
};

/// sum_l w_l * ||x - D_{S_l} z_{S_l}||^2 for pre-centered x, gates held fixed.
template <typename Scalar, typename Derived>
double gated_loss(const BasicSaeModel<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
                  std::span<const MaskLevel> levels) {
    const auto z = encode(model, x);
    double total = 0.0;
    typename BasicSaeModel<Scalar>::Vector x_hat(x.size());
    for (const auto& level : levels) {
        x_hat.setZero();
        for (Index j : level.support) {
            const auto jj = static_cast<Eigen::Index>(j);
            x_hat += model.decoder.col(jj) * z(jj);
        }
        total += level.weight * reconstruction_loss(x, x_hat);
    }
    return total;
}

/// Adds the gradient of gated_loss at x into `grads` and returns the loss.
/// `z` must equal encode(model, x).
template <typename Scalar, typename DerivedX, typename DerivedZ>
double accumulate_gradients(const BasicSaeModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& x,
                            const Eigen::MatrixBase<DerivedZ>& z, std::span<const MaskLevel> levels,
                            SaeGradients<Scalar>& grads, Scalar scale = Scalar(1)) {
    using Vector = typename BasicSaeModel<Scalar>::Vector;
    const auto m = static_cast<Eigen::Index>(model.latent_width());
    Vector residual(x.size());
    Vector dz = Vector::Zero(m);
    double total = 0.0;
    for (const auto& level : levels) {
        residual = -x;
        for (Index j : level.support) {
            const auto jj = static_cast<Eigen::Index>(j);
            residual += model.decoder.col(jj) * z(jj);
        }
        total += level.weight * static_cast<double>(residual.squaredNorm());
        const Scalar coef = Scalar(2) * static_cast<Scalar>(level.weight) * scale;
        for (Index j : level.support) {
            const auto jj = static_cast<Eigen::Index>(j);
            grads.d_decoder.col(jj) += (coef * z(jj)) * residual;
            dz(jj) += coef * model.decoder.col(jj).dot(residual);
        }
    }
    for (Eigen::Index j = 0; j < m; ++j)
        if (dz(j) != Scalar(0)) grads.d_encoder.row(j) += dz(j) * x.transpose();
    return total;
}

/// Gradient of w * ||e - D_P z_P||^2 where e = x - x^ is the primary residual, held constant.
/// Only the latents in `promoted` receive gradient. Returns the unweighted loss.
template <typename Scalar, typename DerivedX, typename DerivedE, typename DerivedZ>
double accumulate_aux_gradients(const BasicSaeModel<Scalar>& model, const Eigen::MatrixBase<DerivedX>& x,
                                const Eigen::MatrixBase<DerivedE>& primary_residual,
                                const Eigen::MatrixBase<DerivedZ>& z, std::span<const Index> promoted, double weight,
                                SaeGradients<Scalar>& grads, Scalar scale = Scalar(1)) {
    using Vector = typename BasicSaeModel<Scalar>::Vector;
    if (promoted.empty()) return 0.0;
    Vector r = -primary_residual;
    for (Index j : promoted) {
        const auto jj = static_cast<Eigen::Index>(j);
        r += model.decoder.col(jj) * z(jj);
    }
    const Scalar coef = Scalar(2) * static_cast<Scalar>(weight) * scale;
    for (Index j : promoted) {
        const auto jj = static_cast<Eigen::Index>(j);
        grads.d_decoder.col(jj) += (coef * z(jj)) * r;
        grads.d_encoder.row(jj) += (coef * model.decoder.col(jj).dot(r)) * x.transpose();
    }
    return static_cast<double>(r.squaredNorm());
}

// ---------------------------------------------------------------------------
// Training.

struct KLevel {
    std::size_t multiple = 1;  // budget is multiple * sparsity_k, capped at latent_width
    double weight = 1.0;
};

struct TrainConfig {
    std::size_t sparsity_k = 1;
    std::size_t latent_width = 512;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::vector<KLevel> multi_k_levels{{1, 1.0}, {4, 0.125}};
    std::size_t auxk_count = 32;  // 0 disables aux-k
    double auxk_weight = 1.0;  // weight of the promoted-latent residual term
    std::uint64_t dead_threshold_steps = 256;
    std::uint64_t seed = 0;
    bool center_inputs = false;

    void validate() const {
        if (latent_width == 0) throw ValidationError("latent_width must be positive");
        if (sparsity_k < 1 || sparsity_k > latent_width)
            throw ValidationError("sparsity_k must lie in [1, latent_width]");
        if (epochs == 0 || batch_size == 0) throw ValidationError("epochs and batch_size must be positive");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ValidationError("learning_rate must be finite and non-negative");
        if (multi_k_levels.empty() || multi_k_levels.front().multiple != 1 || multi_k_levels.front().weight != 1.0)
            throw ValidationError("the first multi-k level must be the primary budget with weight 1");
        for (const auto& l : multi_k_levels)
            if (l.multiple < 1 || !(l.weight >= 0.0))
                throw ValidationError("multi-k levels need multiple >= 1 and non-negative weight");
        if (dead_threshold_steps < 1) throw ValidationError("dead_threshold_steps must be >= 1");
    }

    std::size_t level_budget(const KLevel& l) const { return std::min(l.multiple * sparsity_k, latent_width); }
};

struct LatentStats {
    std::vector<std::uint64_t> fire_counts;      // samples with positive primary-mask activation
    std::vector<std::uint64_t> last_fired_step;  // step after the last firing (0 = never)

    explicit LatentStats(std::size_t m = 0) : fire_counts(m, 0), last_fired_step(m, 0) {}

    std::size_t latent_width() const { return fire_counts.size(); }
    std::size_t dead_count() const {
        return static_cast<std::size_t>(std::count(fire_counts.begin(), fire_counts.end(), std::uint64_t{0}));
    }
    std::size_t ever_active_count() const { return latent_width() - dead_count(); }
    std::uint64_t miss_counter(Index j, std::uint64_t current_step) const {
        return current_step > last_fired_step[j] ? current_step - last_fired_step[j] : 0;
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;  // mean ||x - x^||^2 over the dataset at the end of the epoch
    std::size_t dead_count = 0;
};

struct TrainResult {
    SaeModel model;
    LatentStats stats;
    std::vector<EpochRecord> trace;
};

/// Latents whose miss counter exceeds the dead threshold, longest-silent first, capped at
/// auxk_count. Their counters are reset to `current_step`.
inline std::vector<Index> auxk_step(LatentStats& stats, const TrainConfig& cfg, std::uint64_t current_step) {
    std::vector<Index> silent;
    if (cfg.auxk_count == 0) return silent;
    for (Index j = 0; j < stats.latent_width(); ++j)
        if (stats.miss_counter(j, current_step) > cfg.dead_threshold_steps) silent.push_back(j);
    std::stable_sort(silent.begin(), silent.end(),
                     [&](Index a, Index b) { return stats.last_fired_step[a] < stats.last_fired_step[b]; });
    if (silent.size() > cfg.auxk_count) silent.resize(cfg.auxk_count);
    for (Index j : silent) stats.last_fired_step[j] = current_step;
    return silent;
}

/// Random unit-norm decoder columns with the encoder tied to the decoder transpose.
inline SaeModel init_model(std::size_t input_dim, const TrainConfig& cfg) {
    cfg.validate();
    if (input_dim == 0) throw ValidationError("input_dim must be positive");
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    SaeModel model;
    model.sparsity_k = cfg.sparsity_k;
    model.decoder.resize(static_cast<Eigen::Index>(input_dim), static_cast<Eigen::Index>(cfg.latent_width));
    for (Eigen::Index j = 0; j < model.decoder.cols(); ++j) {
        for (Eigen::Index i = 0; i < model.decoder.rows(); ++i) model.decoder(i, j) = normal(rng);
        model.decoder.col(j).normalize();
    }
    model.encoder = model.decoder.transpose();
    return model;
}

template <typename Scalar>
void normalize_decoder_columns(BasicSaeModel<Scalar>& model) {
    for (Eigen::Index j = 0; j < model.decoder.cols(); ++j) {
        const Scalar n = model.decoder.col(j).norm();
        if (n > Scalar(0)) model.decoder.col(j) /= n;
    }
}

/// Copies row i of the data into x, subtracting the model's input mean when present.
template <typename Scalar>
void load_input(const BasicSaeModel<Scalar>& model, const ActivationMatrix& data, Index i,
                typename BasicSaeModel<Scalar>::Vector& x) {
    const auto row = data.row(i);
    x.resize(static_cast<Eigen::Index>(row.size()));
    for (std::size_t c = 0; c < row.size(); ++c) x(static_cast<Eigen::Index>(c)) = static_cast<Scalar>(row[c]);
    if (model.input_mean.size() != 0) x -= model.input_mean;
}

/// Mean primary reconstruction loss over the dataset, in row order.
inline double mean_reconstruction_loss(const SaeModel& model, const ActivationMatrix& data) {
    SaeModel::Vector x, z, x_hat(static_cast<Eigen::Index>(data.dim()));
    double total = 0.0;
    for (Index i = 0; i < data.n_samples(); ++i) {
        load_input(model, data, i, x);
        z = encode(model, x);
        x_hat.setZero();
        for (Index j : topk_indices(z, model.sparsity_k)) {
            const auto jj = static_cast<Eigen::Index>(j);
            x_hat += model.decoder.col(jj) * z(jj);
        }
        total += reconstruction_loss(x, x_hat);
    }
    return total / static_cast<double>(data.n_samples());
}

namespace detail {

template <typename M>
struct AdamSlot {
    M first;
    M second;
};

template <typename M>
void adam_update(M& param, const M& grad, AdamSlot<M>& slot, const TrainConfig& cfg, std::uint64_t t) {
    using S = typename M::Scalar;
    const auto b1 = static_cast<S>(cfg.beta1);
    const auto b2 = static_cast<S>(cfg.beta2);
    slot.first = b1 * slot.first + (S(1) - b1) * grad;
    slot.second = b2 * slot.second + (S(1) - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const auto step = static_cast<S>(cfg.learning_rate / c1);
    const auto eps = static_cast<S>(cfg.adam_eps);
    const auto inv_c2 = static_cast<S>(1.0 / c2);
    param.array() -= step * slot.first.array() / ((slot.second.array() * inv_c2).sqrt() + eps);
}

}  // namespace detail

/// Called after every optimizer step (and renormalisation of the columns it moved) with the step count.
using StepObserver = std::function<void(std::uint64_t step, const SaeModel& model)>;

/// Trains a top-k SAE with Adam. Deterministic for a given config and dataset.
inline TrainResult train(const ActivationMatrix& data, const TrainConfig& cfg, const StepObserver& on_step = {}) {
    cfg.validate();
    const std::size_t n = data.n_samples();
    const std::size_t d = data.dim();
    const std::size_t m = cfg.latent_width;

    TrainResult result{init_model(d, cfg), LatentStats(m), {}};
    SaeModel& model = result.model;
    LatentStats& stats = result.stats;
    if (cfg.center_inputs) model.input_mean = data.view().colwise().mean().transpose();

    std::size_t max_budget = 0;
    for (const auto& l : cfg.multi_k_levels) max_budget = std::max(max_budget, cfg.level_budget(l));

    SaeGradients<float> grads(model);
    detail::AdamSlot<SaeModel::Matrix> enc_slot{SaeModel::Matrix::Zero(model.encoder.rows(), model.encoder.cols()),
                                                SaeModel::Matrix::Zero(model.encoder.rows(), model.encoder.cols())};
    detail::AdamSlot<SaeModel::ColMatrix> dec_slot{
        SaeModel::ColMatrix::Zero(model.decoder.rows(), model.decoder.cols()),
        SaeModel::ColMatrix::Zero(model.decoder.rows(), model.decoder.cols())};

    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<MaskLevel> levels(cfg.multi_k_levels.size());
    std::vector<char> fired(m, 0);
    std::vector<Index> aux_targets;
    SaeModel::Vector x, z, residual;
    SaeModel::ColMatrix prev_decoder;
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const auto promoted = auxk_step(stats, cfg, step);
            grads.set_zero();
            std::fill(fired.begin(), fired.end(), 0);
            double batch_loss = 0.0;
            const float scale = 1.0f / static_cast<float>(stop - start);

            for (std::size_t b = start; b < stop; ++b) {
                load_input(model, data, order[b], x);
                z = encode(model, x);
                const auto ranked = topk_indices(z, max_budget);
                for (std::size_t l = 0; l < levels.size(); ++l) {
                    const auto budget = cfg.level_budget(cfg.multi_k_levels[l]);
                    levels[l].support.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(budget));
                    levels[l].weight = cfg.multi_k_levels[l].weight;
                }
                for (std::size_t r = 0; r < cfg.sparsity_k; ++r) {
                    const Index j = ranked[r];
                    if (z(static_cast<Eigen::Index>(j)) > 0.0f) {
                        ++stats.fire_counts[j];
                        fired[j] = 1;
                    }
                }
                batch_loss += accumulate_gradients(model, x, z, std::span<const MaskLevel>(levels), grads, scale);
                if (!promoted.empty()) {
                    aux_targets.clear();
                    for (Index j : promoted)
                        if (std::find(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(cfg.sparsity_k), j) ==
                            ranked.begin() + static_cast<std::ptrdiff_t>(cfg.sparsity_k))
                            aux_targets.push_back(j);
                    residual = x;
                    for (std::size_t r = 0; r < cfg.sparsity_k; ++r) {
                        const auto jj = static_cast<Eigen::Index>(ranked[r]);
                        residual -= model.decoder.col(jj) * z(jj);
                    }
                    accumulate_aux_gradients(model, x, residual, z, std::span<const Index>(aux_targets),
                                             cfg.auxk_weight, grads, scale);
                }
            }
            if (!std::isfinite(batch_loss))
                throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(step));

            ++step;
            for (Index j = 0; j < m; ++j)
                if (fired[j]) stats.last_fired_step[j] = step;
            detail::adam_update(model.encoder, grads.d_encoder, enc_slot, cfg, step);
            prev_decoder = model.decoder;
            detail::adam_update(model.decoder, grads.d_decoder, dec_slot, cfg, step);
            for (Eigen::Index j = 0; j < model.decoder.cols(); ++j) {
                if (model.decoder.col(j) == prev_decoder.col(j)) continue;
                const float norm = model.decoder.col(j).norm();
                if (norm > 0.0f) model.decoder.col(j) /= norm;
            }
            if (on_step) on_step(step, model);
        }
        const double loss = mean_reconstruction_loss(model, data);
        if (!std::isfinite(loss))
            throw NumericalError("non-finite reconstruction loss after epoch " + std::to_string(epoch));
        result.trace.push_back({epoch, loss, stats.dead_count()});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Firing profiles.

struct Firing {
    Index sample = 0;
    float activation = 0.0f;
};

/// For each latent, the samples on which its post-top-k activation is strictly positive,
/// in ascending sample order.
struct FiringProfile {
    std::vector<std::string> sample_ids;
    std::vector<std::vector<Firing>> neurons;

    std::size_t n_samples() const { return sample_ids.size(); }
    std::size_t latent_width() const { return neurons.size(); }
    std::size_t total_firings() const {
        std::size_t t = 0;
        for (const auto& f : neurons) t += f.size();
        return t;
    }
};

inline FiringProfile firing_profile(const SaeModel& model, const ActivationMatrix& data,
                                    std::span<const SampleMeta> meta) {
    model.validate();
    if (data.dim() != model.input_dim())
        throw DimensionError("firing_profile: data has d=" + std::to_string(data.dim()) + ", SAE expects " +
                             std::to_string(model.input_dim()));
    if (meta.size() != data.n_samples())
        throw DimensionError("firing_profile: " + std::to_string(meta.size()) + " metadata rows for " +
                             std::to_string(data.n_samples()) + " samples");
    FiringProfile profile;
    profile.sample_ids.reserve(meta.size());
    for (const auto& s : meta) profile.sample_ids.push_back(s.sample_id);
    profile.neurons.resize(model.latent_width());
    SaeModel::Vector x, z;
    for (Index i = 0; i < data.n_samples(); ++i) {
        load_input(model, data, i, x);
        z = encode(model, x);
        for (Index j : topk_indices(z, model.sparsity_k)) {
            const float a = z(static_cast<Eigen::Index>(j));
            if (a > 0.0f) profile.neurons[j].push_back({i, a});
        }
    }
    return profile;
}

}  // namespace featscope
