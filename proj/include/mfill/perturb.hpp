#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "mfill/core.hpp"
#include "mfill/estimate.hpp"
#include "mfill/parallel.hpp"
#include "mfill/rng.hpp"

namespace mfill {

/// Freshly perturbed design points plus the density they were drawn from.
/// Images are deliberately absent: the engine evaluates the model once per
/// iteration on the final points only.
struct Proposal {
    Matrix points;
    std::shared_ptr<const MixtureDensity> density;
};

namespace detail {

/// One proposal draw from the untruncated mixture: uniform on the box with
/// probability q, otherwise a reflected-kernel draw around a uniformly chosen
/// center.
inline void draw_mixture_point(const MixtureDensity& mixture, SplitMix64& rng,
                               std::span<double> out) {
    const auto& box = mixture.box();
    const std::size_t m = box.dim();
    if (rng.next_double() < mixture.mix_uniform()) {
        for (std::size_t i = 0; i < m; ++i)
            out[i] = box.lower()[i] + rng.next_double() * box.edge(i);
    } else {
        const std::size_t c = rng.next_below(mixture.centers().rows());
        mixture.kernel().sample(mixture.centers().row(c), rng, out);
    }
}

inline constexpr std::uint64_t kStallLimit = 1000000;

inline Proposal perturb_impl(const Ensemble& resampled, const ParamBox& box,
                             const RunConfig& cfg, std::size_t iteration, double truncation,
                             int threads) {
    const std::size_t n = resampled.size();
    const std::size_t m = box.dim();
    for (double w : resampled.weights)
        if (std::abs(w - 1.0 / static_cast<double>(n)) > 1e-9)
            throw ConfigError("perturb: expects a resampled ensemble with uniform weights");

    auto mixture = std::make_shared<MixtureDensity>(
        cfg.mix_uniform, ReflectedKernel(cfg.kernel, cfg.bandwidth, box), resampled.points,
        truncation);

    Proposal out;
    out.points = Matrix(n, m);
    out.density = mixture;
    const bool truncated = std::isfinite(truncation);

    parallel_for(n, threads, [&](std::size_t slot) {
        SplitMix64 rng = substream(cfg.seed, {stream::perturb, iteration, slot});
        auto row = out.points.row(slot);
        if (!truncated) {
            draw_mixture_point(*mixture, rng, row);
            return;
        }
        // acceptance-rejection against the truncated density min(b, d):
        // proposal density d dominates, acceptance probability min(a,b)/a
        for (std::uint64_t rejections = 0;; ++rejections) {
            if (rejections > kStallLimit)
                throw StallGuard("perturb: rejection budget exceeded; raise b or rethink q,h");
            draw_mixture_point(*mixture, rng, row);
            const double a = mixture->untruncated(row);
            if (a <= truncation) break;  // acceptance probability 1, no draw consumed
            if (rng.next_double() * a <= truncation) break;
        }
    });
    return out;
}

} // namespace detail

/// Step 1 + Step 2 without truncation: N independent draws from the mixture
/// q * uniform + (1-q) * kernel smoothing of the resampled points.
inline Proposal perturb_plain(const Ensemble& resampled, const ParamBox& box,
                              const RunConfig& cfg, std::size_t iteration, int threads = 1) {
    return detail::perturb_impl(resampled, box, cfg, iteration,
                                std::numeric_limits<double>::infinity(), threads);
}

/// Truncated variant: acceptance-rejection with the untruncated mixture as
/// the proposal and min(b, d) as the target. With b = inf this follows the
/// exact same draw sequence as perturb_plain, bit for bit.
inline Proposal perturb_truncated(const Ensemble& resampled, const ParamBox& box,
                                  const RunConfig& cfg, std::size_t iteration, int threads = 1) {
    return detail::perturb_impl(resampled, box, cfg, iteration, cfg.truncation, threads);
}

} // namespace mfill
