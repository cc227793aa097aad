#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "mfill/core.hpp"
#include "mfill/estimate.hpp"
#include "mfill/rng.hpp"

namespace mfill {

/// Derivative-free resampling weights: G_i proportional to
/// r^m(f(x_i)) * mu(f(x_i)), normalized. Independent of the scale of mu and
/// of every constant factor of the k-NN density estimate. Products are formed
/// in log space and max-subtracted before exponentiation.
inline std::vector<double> weights_knn(const Ensemble& ensemble, const TargetDensity& target,
                                       std::size_t k, int threads = 1) {
    const std::size_t n = ensemble.size();
    const auto m = static_cast<double>(ensemble.points.cols());
    const auto radii = knn_radii(ensemble.images, k, threads);
    std::vector<double> log_w(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(radii[i] > 0.0))
            throw DuplicateImages(
                "weights_knn: duplicate images give a zero k-NN radius; deduplicate or raise k");
        const double mu = target(ensemble.images.row(i));
        log_w[i] = m * std::log(radii[i]) + std::log(mu);  // log(0) = -inf is fine
    }
    return normalize_log_weights(log_w);
}

/// Derivative-based resampling weights: G_i proportional to
/// mu(f(x_i)) * J_m f(x_i) / d(x_i) with d the density the points were drawn
/// from. Invariant to the scale of mu and of d.
inline std::vector<double> weights_jacobian(const Ensemble& ensemble, const TargetDensity& target,
                                            const ModelSpec& model, const ParamBox& box) {
    const std::size_t n = ensemble.size();
    if (!ensemble.proposal)
        throw ConfigError("weights_jacobian: ensemble carries no proposal-density handle");
    std::vector<double> log_w(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = ensemble.points.row(i);
        const double mu = target(ensemble.images.row(i));
        const double jac = jacobian_m(model, box, x);
        const double dens = ensemble.proposal->density(x);
        if (!(dens > 0.0) || !std::isfinite(dens))
            throw Error("weights_jacobian: proposal density must be positive and finite");
        log_w[i] = std::log(mu) + std::log(jac) - std::log(dens);
    }
    return normalize_log_weights(log_w);
}

/// Multinomial (iid) resampling: N categorical draws with P(pick j) = w_j,
/// realized by merging one sorted batch of N uniforms against the cumulative
/// weight vector. The returned ensemble has uniform weights and inherits the
/// cached images; no model evaluations happen here.
inline Ensemble resample_multinomial(const Ensemble& ensemble, std::span<const double> weights,
                                     SplitMix64& rng) {
    const std::size_t n = ensemble.size();
    if (weights.size() != n) throw SizeMismatch("resample_multinomial: weight count mismatch");

    std::vector<double> draws(n);
    for (double& d : draws) d = rng.next_double();
    std::sort(draws.begin(), draws.end());

    // running compensated prefix sum of weights; final category absorbs the
    // remaining tail so roundoff cannot push a draw past the end
    Ensemble out;
    out.points = Matrix(n, ensemble.points.cols());
    out.images = Matrix(n, ensemble.images.cols());
    out.weights.assign(n, 1.0 / static_cast<double>(n));
    out.proposal = ensemble.proposal;

    std::size_t category = 0;
    double cum = weights[0], comp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        while (category + 1 < n && draws[i] >= cum + comp) {
            ++category;
            const double w = weights[category];
            const double t = cum + w;
            if (std::abs(cum) >= std::abs(w))
                comp += (cum - t) + w;
            else
                comp += (w - t) + cum;
            cum = t;
        }
        const auto src_p = ensemble.points.row(category);
        const auto src_y = ensemble.images.row(category);
        std::copy(src_p.begin(), src_p.end(), out.points.row(i).begin());
        std::copy(src_y.begin(), src_y.end(), out.images.row(i).begin());
    }
    return out;
}

} // namespace mfill
