#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mfill/core.hpp"
#include "mfill/estimate.hpp"
#include "mfill/parallel.hpp"
#include "mfill/perturb.hpp"
#include "mfill/resample.hpp"
#include "mfill/rng.hpp"
#include "mfill/transport.hpp"

namespace mfill {

/// Convergence-rate function alpha(N) for an m-dimensional parameter space;
/// diagnostics annotation only.
inline double rate_alpha(std::size_t n_samples, std::size_t m) {
    if (n_samples < 1 || m < 1) throw ConfigError("rate_alpha: requires N >= 1 and m >= 1");
    const auto n = static_cast<double>(n_samples);
    if (m == 1) return 1.0 / std::sqrt(n);
    if (m == 2) return std::log(n + 1.0) / std::sqrt(n);
    return std::pow(n, -1.0 / static_cast<double>(m));
}

/// Relative-change stopping rule: stop once the W1 distance between
/// successive image ensembles stays below stop_tol times the iteration-0
/// mean pairwise image distance for two consecutive iterations.
/// stop_tol <= 0 disables the rule (run to max_iterations).
inline bool stopping_check(const Diagnostics& diag, const RunConfig& cfg) {
    if (cfg.stop_tol <= 0.0 || diag.records.size() < 2) return false;
    const double threshold = cfg.stop_tol * diag.image_scale;
    const auto& recs = diag.records;
    return recs[recs.size() - 1].w1_successive < threshold &&
           recs[recs.size() - 2].w1_successive < threshold;
}

struct RunResult {
    Ensemble ensemble;
    Diagnostics diagnostics;
};

using ProgressCallback = std::function<void(const IterationRecord&)>;

namespace detail {

inline Matrix evaluate_batch(const ModelSpec& model, const Matrix& points, int threads) {
    if (model.eval_batch) return model.eval_batch(points);
    Matrix images(points.rows(), model.dim_out);
    parallel_for(points.rows(), model.reentrant ? threads : 1, [&](std::size_t i) {
        const auto y = model.eval(points.row(i));
        if (y.size() != model.dim_out)
            throw Error("engine: model returned a vector of the wrong dimension");
        std::copy(y.begin(), y.end(), images.row(i).begin());
    });
    return images;
}

inline double mean_pairwise_distance(const Matrix& points) {
    const std::size_t n = points.rows();
    if (n < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            acc += euclidean_distance(points.row(i), points.row(j));
    return acc / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

/// Per-iteration W1 between successive image clouds: exact for small
/// ensembles, sliced (64 projections from a dedicated stream) above that.
inline double successive_w1(const Matrix& current, const Matrix& previous,
                            const RunConfig& cfg, std::size_t iteration, int threads) {
    if (current.rows() <= 1024) return w1_exact(current, previous, GroundMetric::euclidean, threads);
    SplitMix64 rng = substream(cfg.seed, {stream::diag, iteration});
    return w1_sliced(current, previous, 64, rng);
}

} // namespace detail

/// The full iteration loop: evaluate the model on the current points, compute
/// resampling weights (k-NN or Jacobian variant), resample, perturb through
/// the mixture proposal, and repeat until the stopping rule or the iteration
/// cap fires. Returns the post-resampling ensemble of the final iteration, so
/// every returned point carries an image that has already been paid for;
/// total model evaluations are exactly N * (iterations + 1).
inline RunResult run(const ModelSpec& model, const TargetDensity& target, const ParamBox& box,
                     const RunConfig& cfg, const Matrix* init = nullptr,
                     const ProgressCallback& progress = {}, int threads = 1) {
    validate_config(cfg, box);
    const std::size_t n = cfg.sample_count;
    const std::size_t m = box.dim();
    if (model.dim_in != m) throw ConfigError("engine: model input dimension differs from box");
    const std::size_t k = cfg.neighbor_count ? cfg.neighbor_count : default_neighbor_count(n, m);

    // initial ensemble: caller-provided points or iid uniforms on the box
    Matrix points(n, m);
    if (init) {
        if (init->rows() != n || init->cols() != m)
            throw ConfigError("engine: initial points have the wrong shape");
        points = *init;
        for (std::size_t i = 0; i < n; ++i)
            if (!box.contains(points.row(i)))
                throw ConfigError("engine: initial point outside the box");
    } else {
        parallel_for(n, threads, [&](std::size_t slot) {
            SplitMix64 rng = substream(cfg.seed, {stream::init, slot});
            auto row = points.row(slot);
            for (std::size_t c = 0; c < m; ++c)
                row[c] = box.lower()[c] + rng.next_double() * box.edge(c);
        });
    }

    Diagnostics diag;
    std::uint64_t evals = 0;

    Ensemble current;
    current.points = std::move(points);
    current.images = detail::evaluate_batch(model, current.points, threads);
    evals += n;
    current.weights.assign(n, 1.0 / static_cast<double>(n));
    // iteration-0 proposal handle: the density the initial points came from.
    // For caller-provided points the generating density is unknown; a uniform
    // handle is stored, and since a constant cancels in the weight
    // normalization this only matters if the caller's initial density was
    // far from flat.
    current.proposal = std::make_shared<UniformDensity>(box);

    diag.image_scale = detail::mean_pairwise_distance(current.images);
    diag.alpha_rate = rate_alpha(n, m);
    {
        const ReflectedKernel kern(cfg.kernel, cfg.bandwidth, box);
        diag.kernel_lipschitz = kern.lipschitz();
        diag.kernel_grad_lipschitz = kern.grad_lipschitz();
    }

    Matrix previous_images = current.images;
    const bool truncate = cfg.algorithm == AlgorithmKind::derivative_free &&
                          std::isfinite(cfg.truncation);

    for (std::size_t iteration = 1;; ++iteration) {
        const auto weights =
            cfg.algorithm == AlgorithmKind::derivative_free
                ? weights_knn(current, target, k, threads)
                : weights_jacobian(current, target, model, box);

        IterationRecord rec;
        rec.iteration = iteration;
        rec.min_weight = *std::min_element(weights.begin(), weights.end());
        rec.max_weight = *std::max_element(weights.begin(), weights.end());
        double sum_sq = 0.0;
        for (double w : weights) sum_sq += w * w;
        rec.ess = 1.0 / sum_sq;

        SplitMix64 resample_rng = substream(cfg.seed, {stream::resample, iteration});
        Ensemble resampled = resample_multinomial(current, weights, resample_rng);

        Proposal prop = truncate ? perturb_truncated(resampled, box, cfg, iteration, threads)
                                 : perturb_plain(resampled, box, cfg, iteration, threads);

        Ensemble next;
        next.points = std::move(prop.points);
        next.images = detail::evaluate_batch(model, next.points, threads);
        evals += n;
        next.weights.assign(n, 1.0 / static_cast<double>(n));
        next.proposal = prop.density;

        rec.w1_successive =
            detail::successive_w1(next.images, previous_images, cfg, iteration, threads);
        rec.f_evaluations = evals;
        previous_images = next.images;
        current = std::move(next);

        diag.records.push_back(rec);
        if (progress) progress(rec);

        if (iteration >= cfg.max_iterations) {
            diag.hit_iteration_limit = true;
            return {std::move(resampled), std::move(diag)};
        }
        if (stopping_check(diag, cfg)) return {std::move(resampled), std::move(diag)};
    }
}

} // namespace mfill
