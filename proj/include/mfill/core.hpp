#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfill/errors.hpp"
#include "mfill/matrix.hpp"

namespace mfill {

/// Axis-aligned hypercube of admissible parameters. Intervals are closed:
/// points exactly on a face are valid members.
class ParamBox {
public:
    ParamBox(std::vector<double> lower, std::vector<double> upper)
        : lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.empty() || lower_.size() != upper_.size())
            throw ConfigError("ParamBox: bounds must be non-empty and of equal dimension");
        for (std::size_t i = 0; i < lower_.size(); ++i) {
            if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i]))
                throw ConfigError("ParamBox: requires finite lower[i] < upper[i] at index " +
                                  std::to_string(i));
        }
    }

    std::size_t dim() const { return lower_.size(); }
    const std::vector<double>& lower() const { return lower_; }
    const std::vector<double>& upper() const { return upper_; }
    double edge(std::size_t i) const { return upper_[i] - lower_[i]; }

    double volume() const {
        double v = 1.0;
        for (std::size_t i = 0; i < dim(); ++i) v *= edge(i);
        return v;
    }

    double diameter() const {
        double s = 0.0;
        for (std::size_t i = 0; i < dim(); ++i) s += edge(i) * edge(i);
        return std::sqrt(s);
    }

    double min_edge() const {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < dim(); ++i) m = std::min(m, edge(i));
        return m;
    }

    bool contains(std::span<const double> x) const {
        if (x.size() != dim()) return false;
        for (std::size_t i = 0; i < dim(); ++i)
            if (!(x[i] >= lower_[i] && x[i] <= upper_[i])) return false;
        return true;
    }

private:
    std::vector<double> lower_, upper_;
};

/// Unnormalized target density on the output space, with respect to Hausdorff
/// measure on the model manifold. Only ratios of values ever matter.
struct TargetDensity {
    std::function<double(std::span<const double>)> eval;

    double operator()(std::span<const double> y) const {
        const double v = eval(y);
        if (!std::isfinite(v) || v < 0.0)
            throw Error("TargetDensity: returned a negative or non-finite value");
        return v;
    }
};

/// Density a set of points was drawn from; resampling needs its reciprocal.
class ProposalDensity {
public:
    virtual ~ProposalDensity() = default;
    virtual double density(std::span<const double> x) const = 0;
};

/// Uniform density on a box; the conventional iteration-0 proposal.
class UniformDensity final : public ProposalDensity {
public:
    explicit UniformDensity(const ParamBox& box) : inv_volume_(1.0 / box.volume()) {}
    double density(std::span<const double>) const override { return inv_volume_; }

private:
    double inv_volume_;
};

/// A computer experiment: a deterministic map from the parameter box into
/// output space, with whatever derivative information is available.
///
/// `eval` must be a pure function of its input. `differential` (when present)
/// returns the full dim_out x dim_in derivative matrix. `jacobian` (when
/// present) returns the m-dimensional Jacobian directly and takes precedence;
/// closed forms can be evaluated in log space where the determinant route
/// underflows. `fd_fallback` opts in to central-difference differentials for
/// models that expose neither.
struct ModelSpec {
    std::size_t dim_in = 0;
    std::size_t dim_out = 0;
    std::function<std::vector<double>(std::span<const double>)> eval;
    std::function<Matrix(std::span<const double>)> differential;   // optional
    std::function<double(std::span<const double>)> jacobian;       // optional
    std::function<Matrix(const Matrix&)> eval_batch;               // optional
    bool fd_fallback = false;
    bool reentrant = true;
};

/// Volume of the unit ball in R^m.
inline double unit_ball_volume(std::size_t m) {
    if (m < 1) throw ConfigError("unit_ball_volume: dimension must be >= 1");
    const double md = static_cast<double>(m);
    return std::pow(3.14159265358979323846, md / 2.0) / std::tgamma(md / 2.0 + 1.0);
}

namespace detail {

/// sqrt(det(G)) of a symmetric positive definite matrix via Cholesky.
/// Returns NaN when G is not positive definite.
inline double sqrt_det_spd(const Matrix& g) {
    const std::size_t m = g.rows();
    Matrix l(m, m, 0.0);
    double sqrt_det = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
        double d = g(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) return std::numeric_limits<double>::quiet_NaN();
        l(j, j) = std::sqrt(d);
        sqrt_det *= l(j, j);
        for (std::size_t i = j + 1; i < m; ++i) {
            double s = g(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return sqrt_det;
}

/// Central-difference differential with per-coordinate step
/// eps^(1/3) * max(1, |x_i|), clamped to a one-sided difference at the box
/// boundary.
inline Matrix fd_differential(const ModelSpec& model, const ParamBox& box,
                              std::span<const double> x) {
    const std::size_t m = model.dim_in, n = model.dim_out;
    const double cbrt_eps = std::cbrt(std::numeric_limits<double>::epsilon());
    Matrix df(n, m);
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end());
    for (std::size_t i = 0; i < m; ++i) {
        const double step = cbrt_eps * std::max(1.0, std::abs(x[i]));
        double hi = std::min(x[i] + step, box.upper()[i]);
        double lo = std::max(x[i] - step, box.lower()[i]);
        xp[i] = hi;
        xm[i] = lo;
        const auto fp = model.eval(xp);
        const auto fm = model.eval(xm);
        const double denom = hi - lo;
        for (std::size_t r = 0; r < n; ++r) df(r, i) = (fp[r] - fm[r]) / denom;
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return df;
}

} // namespace detail

/// m-dimensional Jacobian sqrt(det(Df^T Df)) at x. Prefers a model-supplied
/// closed form, then the analytic differential, then (if opted in) finite
/// differences. A non-finite or non-positive result is an error: it signals
/// that the model violates the rank assumption at x.
inline double jacobian_m(const ModelSpec& model, const ParamBox& box,
                         std::span<const double> x) {
    double j;
    if (model.jacobian) {
        j = model.jacobian(x);
    } else {
        Matrix df;
        if (model.differential) {
            df = model.differential(x);
        } else if (model.fd_fallback) {
            df = detail::fd_differential(model, box, x);
        } else {
            throw ConfigError(
                "jacobian_m: model has no differential and fd_fallback is disabled");
        }
        const std::size_t m = model.dim_in, n = model.dim_out;
        Matrix g(m, m, 0.0);
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a; b < m; ++b) {
                double s = 0.0;
                for (std::size_t r = 0; r < n; ++r) s += df(r, a) * df(r, b);
                g(a, b) = g(b, a) = s;
            }
        j = detail::sqrt_det_spd(g);
    }
    if (!std::isfinite(j) || !(j > 0.0))
        throw NonFiniteJacobian("jacobian_m: non-finite or non-positive Jacobian at a point");
    return j;
}

/// N design points with cached images, normalized weights, and a handle to
/// the density the points were drawn from.
struct Ensemble {
    Matrix points;   // N x m
    Matrix images;   // N x n, images.row(i) == model.eval(points.row(i))
    std::vector<double> weights;
    std::shared_ptr<const ProposalDensity> proposal;

    std::size_t size() const { return points.rows(); }

    void validate(const ParamBox& box) const {
        if (points.rows() != images.rows() || points.rows() != weights.size())
            throw SizeMismatch("Ensemble: inconsistent row counts");
        for (std::size_t i = 0; i < points.rows(); ++i)
            if (!box.contains(points.row(i)))
                throw Error("Ensemble: point " + std::to_string(i) + " is outside the box");
        double s = compensated_sum(weights);
        if (std::abs(s - 1.0) > 1e-12) throw Error("Ensemble: weights do not sum to 1");
        for (double w : weights)
            if (!(w >= 0.0)) throw Error("Ensemble: negative weight");
    }
};

enum class AlgorithmKind { derivative_free, jacobian };
enum class KernelId { biweight, triweight, tricube };

/// Algorithm selection plus every tunable of a run.
struct RunConfig {
    AlgorithmKind algorithm = AlgorithmKind::jacobian;
    std::size_t sample_count = 0;                                 // N
    double mix_uniform = 0.1;                                     // q
    double bandwidth = 0.0;                                       // h
    double truncation = std::numeric_limits<double>::infinity();  // b
    std::size_t neighbor_count = 0;                               // k; 0 = rate-optimal default
    std::size_t max_iterations = 10;
    double stop_tol = 0.0;  // 0 disables the relative-change stopping rule
    std::uint64_t seed = 0;
    KernelId kernel = KernelId::biweight;
};

/// Rate-optimal neighbor count ceil(N^((m+2)/(2(m+1)))).
inline std::size_t default_neighbor_count(std::size_t n_samples, std::size_t m) {
    const double expo = (static_cast<double>(m) + 2.0) / (2.0 * (static_cast<double>(m) + 1.0));
    const auto k = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n_samples), expo)));
    return std::clamp<std::size_t>(k, 1, n_samples);
}

inline void validate_config(const RunConfig& cfg, const ParamBox& box) {
    if (cfg.sample_count < 2) throw ConfigError("config: N must be at least 2");
    if (!(cfg.mix_uniform > 0.0 && cfg.mix_uniform < 1.0))
        throw ConfigError("config: q must lie strictly inside (0,1)");
    if (!(cfg.bandwidth > 0.0)) throw ConfigError("config: h must be positive");
    if (!(cfg.bandwidth < box.min_edge()))
        throw ConfigError("config: h must be smaller than the shortest box edge");
    if (std::isfinite(cfg.truncation) && !(cfg.truncation > cfg.mix_uniform / box.volume()))
        throw ConfigError("config: finite b must exceed q/volume");
    if (cfg.neighbor_count > cfg.sample_count)
        throw ConfigError("config: k must not exceed N");
    if (cfg.max_iterations < 1) throw ConfigError("config: max_iterations must be >= 1");
    if (cfg.stop_tol < 0.0) throw ConfigError("config: stop_tol must be >= 0");
}

/// One row of the per-iteration run log.
struct IterationRecord {
    std::size_t iteration = 0;
    double w1_successive = 0.0;  // W1 between this and the previous image cloud
    double ess = 0.0;            // 1 / sum of squared resampling weights
    double min_weight = 0.0;
    double max_weight = 0.0;
    std::uint64_t f_evaluations = 0;  // cumulative
};

struct Diagnostics {
    std::vector<IterationRecord> records;
    bool hit_iteration_limit = false;
    double alpha_rate = 0.0;       // alpha(N) annotation for the configured N, m
    double kernel_lipschitz = 0.0; // grid-estimated Lipschitz bounds of the scaled kernel
    double kernel_grad_lipschitz = 0.0;
    double image_scale = 0.0;      // mean pairwise image distance at iteration 0
};

/// Normalize nonnegative log-weights in place: max-subtracted exponentiation
/// followed by one compensated renormalization pass.
inline std::vector<double> normalize_log_weights(std::span<const double> log_w) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double lw : log_w) {
        if (std::isnan(lw)) throw Error("weights: NaN log-weight");
        mx = std::max(mx, lw);
    }
    if (!std::isfinite(mx))
        throw AllZeroWeights("weights: every potential value is zero on this ensemble");
    std::vector<double> w(log_w.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_w[i] - mx);
    const double total = compensated_sum(w);
    for (double& wi : w) wi /= total;
    return w;
}

} // namespace mfill
