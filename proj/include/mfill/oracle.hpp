#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "mfill/core.hpp"
#include "mfill/models.hpp"
#include "mfill/parallel.hpp"
#include "mfill/rng.hpp"

namespace mfill {

/// Exact draws from a target distribution on a benchmark manifold: the
/// parameter-space draws plus their images.
struct OracleDraw {
    Matrix params;
    Matrix images;
};

namespace detail {

/// Generic acceptance-rejection sampler on a box with an unnormalized target
/// density and a constant envelope. Each sample index owns an RNG substream,
/// so chunked parallel generation is reproducible. Any density value above
/// the envelope aborts: the envelope is part of the sampler's correctness.
template <typename Density, typename Map>
OracleDraw rejection_sample_box(const ParamBox& box, Density&& density, double envelope,
                                Map&& map, std::size_t dim_out, std::size_t count,
                                std::uint64_t seed, int threads) {
    OracleDraw out;
    const std::size_t m = box.dim();
    out.params = Matrix(count, m);
    out.images = Matrix(count, dim_out);
    parallel_for(count, threads, [&](std::size_t idx) {
        SplitMix64 rng = substream(seed, {stream::oracle, idx});
        auto x = out.params.row(idx);
        while (true) {
            for (std::size_t c = 0; c < m; ++c)
                x[c] = box.lower()[c] + rng.next_double() * box.edge(c);
            const double g = density(x);
            if (g > envelope)
                throw Error("oracle: proposal density exceeded its envelope constant");
            if (rng.next_double() * envelope <= g) break;
        }
        map(x, out.images.row(idx));
    });
    return out;
}

/// Numeric maximum of a density over an endpoint-inclusive uniform grid,
/// sharpened by one local refinement pass around the coarse argmax (the
/// benchmark densities peak on box edges, where cell-center grids undershoot
/// beyond the safety factor), times the safety factor.
template <typename Density>
double grid_envelope(const ParamBox& box, Density&& density, std::size_t grid_per_axis,
                     double safety, int threads) {
    const std::size_t m = box.dim();
    if (m != 2) throw ConfigError("grid_envelope: only 2-D boxes are used here");

    auto scan = [&](double lo0, double hi0, double lo1, double hi1, std::size_t g,
                    double& arg0, double& arg1) {
        std::vector<double> row_max(g, 0.0);
        std::vector<std::size_t> row_arg(g, 0);
        parallel_for(g, threads, [&](std::size_t i) {
            double best = -1.0;
            std::size_t best_j = 0;
            double x[2];
            x[0] = lo0 + static_cast<double>(i) / static_cast<double>(g - 1) * (hi0 - lo0);
            for (std::size_t j = 0; j < g; ++j) {
                x[1] = lo1 + static_cast<double>(j) / static_cast<double>(g - 1) * (hi1 - lo1);
                const double v = density(std::span<const double>(x, 2));
                if (v > best) {
                    best = v;
                    best_j = j;
                }
            }
            row_max[i] = best;
            row_arg[i] = best_j;
        });
        double best = -1.0;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < g; ++i)
            if (row_max[i] > best) {
                best = row_max[i];
                best_i = i;
            }
        arg0 = lo0 + static_cast<double>(best_i) / static_cast<double>(g - 1) * (hi0 - lo0);
        arg1 = lo1 + static_cast<double>(row_arg[best_i]) / static_cast<double>(g - 1) * (hi1 - lo1);
        return best;
    };

    double arg0 = 0.0, arg1 = 0.0;
    double best = scan(box.lower()[0], box.upper()[0], box.lower()[1], box.upper()[1],
                       grid_per_axis, arg0, arg1);
    // refine in a two-cell neighbourhood of the coarse argmax
    const double cell0 = box.edge(0) / static_cast<double>(grid_per_axis - 1);
    const double cell1 = box.edge(1) / static_cast<double>(grid_per_axis - 1);
    double fine0 = 0.0, fine1 = 0.0;
    const double refined = scan(std::max(box.lower()[0], arg0 - 2.0 * cell0),
                                std::min(box.upper()[0], arg0 + 2.0 * cell0),
                                std::max(box.lower()[1], arg1 - 2.0 * cell1),
                                std::min(box.upper()[1], arg1 + 2.0 * cell1), 257, fine0, fine1);
    return std::max(best, refined) * safety;
}

} // namespace detail

/// Uniform distribution on the torus (w.r.t. surface measure): psi is
/// uniform, theta follows density (R + r cos theta)/(2 pi R) via
/// acceptance-rejection with the analytic envelope (R + r)/(2 pi R).
inline OracleDraw torus_uniform_oracle(const TorusModel& model, std::size_t count,
                                       std::uint64_t seed, int threads = 1) {
    OracleDraw out;
    out.params = Matrix(count, 2);
    out.images = Matrix(count, 3);
    const double big_r = model.major_radius, small_r = model.minor_radius;
    parallel_for(count, threads, [&](std::size_t idx) {
        SplitMix64 rng = substream(seed, {stream::oracle, idx});
        double theta;
        while (true) {
            theta = kTwoPi * rng.next_double();
            const double g = big_r + small_r * std::cos(theta);
            if (g > big_r + small_r)
                throw Error("oracle: proposal density exceeded its envelope constant");
            if (rng.next_double() * (big_r + small_r) <= g) break;
        }
        const double psi = kTwoPi * rng.next_double();
        out.params(idx, 0) = theta;
        out.params(idx, 1) = psi;
        const auto y = model.eval(theta, psi);
        for (int c = 0; c < 3; ++c) out.images(idx, c) = y[c];
    });
    return out;
}

/// Density on the torus proportional to the reciprocal squared distance from
/// the probe point (0, 1, 0), pulled back through the area formula:
/// acceptance-rejection on the parameter square with the expanded density
///   (R + r cos t) / ((R + r cos t)^2 - 2 (R + r cos t) sin p + 1 + r^2 sin^2 t)
/// and a 1024^2-grid envelope with a 5% safety factor.
inline OracleDraw torus_nonuniform_oracle(const TorusModel& model, std::size_t count,
                                          std::uint64_t seed, int threads = 1) {
    const double big_r = model.major_radius, small_r = model.minor_radius;
    auto density = [big_r, small_r](std::span<const double> x) {
        const double ring = big_r + small_r * std::cos(x[0]);
        const double st = small_r * std::sin(x[0]);
        const double denom = ring * ring - 2.0 * ring * std::sin(x[1]) + 1.0 + st * st;
        return ring / denom;
    };
    const double envelope = detail::grid_envelope(model.box(), density, 1024, 1.05, threads);
    return detail::rejection_sample_box(
        model.box(), density, envelope,
        [&](std::span<const double> x, std::span<double> y) {
            const auto img = model.eval(x[0], x[1]);
            for (int c = 0; c < 3; ++c) y[c] = img[c];
        },
        3, count, seed, threads);
}

/// Uniform distribution on the exponential-model manifold: sampling density
/// proportional to the Jacobian, 2048^2-grid envelope with 5% safety.
inline OracleDraw expo_oracle(const ExponentialModel& model, std::size_t count,
                              std::uint64_t seed, int threads = 1) {
    auto density = [&model](std::span<const double> x) { return model.jacobian(x[0], x[1]); };
    const double envelope = detail::grid_envelope(model.box(), density, 2048, 1.05, threads);
    return detail::rejection_sample_box(
        model.box(), density, envelope,
        [&](std::span<const double> x, std::span<double> y) {
            const auto img = model.eval(x[0], x[1]);
            for (int c = 0; c < 3; ++c) y[c] = img[c];
        },
        3, count, seed, threads);
}

} // namespace mfill
