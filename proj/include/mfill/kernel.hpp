#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mfill/core.hpp"
#include "mfill/rng.hpp"

namespace mfill {

/// 1-D kernel density, normalized to unit integral on [-1, 1], zero outside.
inline double kernel_density_1d(KernelId id, double u) {
    const double a = std::abs(u);
    if (a > 1.0) return 0.0;
    switch (id) {
        case KernelId::biweight: {
            const double t = 1.0 - u * u;
            return (15.0 / 16.0) * t * t;
        }
        case KernelId::triweight: {
            const double t = 1.0 - u * u;
            return (35.0 / 32.0) * t * t * t;
        }
        case KernelId::tricube: {
            const double t = 1.0 - a * a * a;
            return (70.0 / 81.0) * t * t * t;
        }
    }
    return 0.0;
}

/// Closed-form CDF of the 1-D kernel.
inline double kernel_cdf_1d(KernelId id, double u) {
    if (u <= -1.0) return 0.0;
    if (u >= 1.0) return 1.0;
    switch (id) {
        case KernelId::biweight: {
            const double u3 = u * u * u, u5 = u3 * u * u;
            return 0.5 + (15.0 / 16.0) * (u - (2.0 / 3.0) * u3 + 0.2 * u5);
        }
        case KernelId::triweight: {
            const double u3 = u * u * u, u5 = u3 * u * u, u7 = u5 * u * u;
            return 0.5 + (35.0 / 32.0) * (u - u3 + 0.6 * u5 - u7 / 7.0);
        }
        case KernelId::tricube: {
            const double a = std::abs(u);
            const double a4 = a * a * a * a, a7 = a4 * a * a * a, a10 = a7 * a * a * a;
            const double half = (70.0 / 81.0) * (a - 0.75 * a4 + (3.0 / 7.0) * a7 - 0.1 * a10);
            return u >= 0.0 ? 0.5 + half : 0.5 - half;
        }
    }
    return 0.0;
}

namespace detail {

inline constexpr std::size_t quantile_knots = 4096;

/// Tabulated inverse CDF at p = j/4096, j = 0..4096, built once per family by
/// bisection on the closed-form CDF. Sampling interpolates linearly between
/// knots; since interpolation stays inside the bracketing knots, the induced
/// CDF error is below 1/4096 everywhere.
inline const std::array<double, quantile_knots + 1>& quantile_table(KernelId id) {
    static const auto tables = [] {
        std::array<std::array<double, quantile_knots + 1>, 3> all{};
        for (int fam = 0; fam < 3; ++fam) {
            const auto kid = static_cast<KernelId>(fam);
            auto& tab = all[fam];
            tab[0] = -1.0;
            tab[quantile_knots] = 1.0;
            for (std::size_t j = 1; j < quantile_knots; ++j) {
                const double p = static_cast<double>(j) / quantile_knots;
                double lo = -1.0, hi = 1.0;
                for (int it = 0; it < 80; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (kernel_cdf_1d(kid, mid) < p ? lo : hi) = mid;
                }
                tab[j] = 0.5 * (lo + hi);
            }
        }
        return all;
    }();
    return tables[static_cast<int>(id)];
}

} // namespace detail

/// Quantile function of the 1-D kernel, via the tabulated inverse CDF.
inline double kernel_quantile_1d(KernelId id, double p) {
    const auto& tab = detail::quantile_table(id);
    const double scaled = p * detail::quantile_knots;
    auto j = static_cast<std::size_t>(scaled);
    if (j >= detail::quantile_knots) j = detail::quantile_knots - 1;
    const double frac = scaled - static_cast<double>(j);
    return tab[j] + frac * (tab[j + 1] - tab[j]);
}

/// Product-form multivariate kernel at unit bandwidth; zero outside the unit
/// sup-ball.
inline double kernel_eval_base(KernelId id, std::span<const double> u) {
    double p = 1.0;
    for (double ui : u) {
        p *= kernel_density_1d(id, ui);
        if (p == 0.0) return 0.0;
    }
    return p;
}

/// Grid-estimated sup of |kappa'| on [-1,1]; diagnostics only.
inline double kernel_lipschitz_1d(KernelId id) {
    double best = 0.0;
    const int n = 1 << 16;
    double prev = kernel_density_1d(id, -1.0);
    for (int i = 1; i <= n; ++i) {
        const double u = -1.0 + 2.0 * i / n;
        const double cur = kernel_density_1d(id, u);
        best = std::max(best, std::abs(cur - prev) / (2.0 / n));
        prev = cur;
    }
    return best;
}

/// Boundary-reflected scaled kernel on a box. Mass that the scaled base
/// kernel would place beyond a face is folded back by mirror reflection, so
/// evaluation sums the base kernel over the center and its per-coordinate
/// single reflections, and sampling folds out-of-box coordinates back in.
/// Requires h < min edge so that at most one reflection per face can carry
/// mass; every contribution beyond that bound is identically zero.
class ReflectedKernel {
public:
    ReflectedKernel(KernelId family, double h, ParamBox box)
        : family_(family), h_(h), box_(std::move(box)) {
        if (!(h_ > 0.0)) throw ConfigError("ReflectedKernel: bandwidth must be positive");
        if (box_.dim() > kMaxDim)
            throw ConfigError("ReflectedKernel: dimension above compile-time limit");
        if (!(h_ < box_.min_edge()))
            throw BandwidthTooLarge(
                "ReflectedKernel: bandwidth must be smaller than the shortest box edge");
    }

    KernelId family() const { return family_; }
    double bandwidth() const { return h_; }
    const ParamBox& box() const { return box_; }

    /// Density at x of the reflected kernel centered at y, both inside the
    /// box. Enumerates the candidate centers (original, low reflection, high
    /// reflection per coordinate), skipping candidates farther than h from x;
    /// the skipped terms are exactly zero, so lazy enumeration is bit-equal
    /// to summing over all 3^m reflected centers in the same order.
    double eval(std::span<const double> x, std::span<const double> y) const {
        const std::size_t m = box_.dim();
        // per-coordinate candidate offsets (x_i - center_i)/h, up to 3 each
        double cand[kMaxDim][3];
        std::size_t counts[kMaxDim];
        for (std::size_t i = 0; i < m; ++i) {
            const double d0 = x[i] - y[i];
            if (std::abs(d0) > h_) return 0.0;  // reflections are farther still
            std::size_t c = 0;
            cand[i][c++] = d0 / h_;
            const double dlo = x[i] - (2.0 * box_.lower()[i] - y[i]);
            if (std::abs(dlo) <= h_) cand[i][c++] = dlo / h_;
            const double dhi = x[i] - (2.0 * box_.upper()[i] - y[i]);
            if (std::abs(dhi) <= h_) cand[i][c++] = dhi / h_;
            counts[i] = c;
        }
        const double inv_h = 1.0 / h_;
        double sum = 0.0;
        std::size_t idx[kMaxDim] = {0};
        while (true) {
            double term = 1.0;
            for (std::size_t i = 0; i < m; ++i)
                term *= kernel_density_1d(family_, cand[i][idx[i]]) * inv_h;
            sum += term;
            std::size_t i = m;
            while (i > 0) {
                --i;
                if (++idx[i] < counts[i]) break;
                idx[i] = 0;
                if (i == 0) return sum;
            }
        }
    }

    /// Exact draw from eval(., y): sample each coordinate from the base
    /// kernel, shift by the center, and fold at most once per face.
    void sample(std::span<const double> y, SplitMix64& rng, std::span<double> out) const {
        const std::size_t m = box_.dim();
        for (std::size_t i = 0; i < m; ++i) {
            const double u = kernel_quantile_1d(family_, rng.next_double());
            double z = y[i] + h_ * u;
            const double lo = box_.lower()[i], up = box_.upper()[i];
            if (z < lo)
                z = 2.0 * lo - z;
            else if (z > up)
                z = 2.0 * up - z;
            out[i] = z;
        }
    }

    /// Grid-estimated Lipschitz bound of the scaled product kernel
    /// zeta_h(u) = prod kappa(u_i/h)/h. Diagnostics annotation only.
    double lipschitz() const {
        const std::size_t m = box_.dim();
        const double k0 = kernel_density_1d(family_, 0.0);
        return std::sqrt(static_cast<double>(m)) * kernel_lipschitz_1d(family_) *
               std::pow(k0, static_cast<double>(m - 1)) /
               std::pow(h_, static_cast<double>(m + 1));
    }

    /// Grid-estimated Lipschitz bound of the gradient of the scaled kernel.
    double grad_lipschitz() const {
        const std::size_t m = box_.dim();
        const double k0 = kernel_density_1d(family_, 0.0);
        // sup |kappa''| on a fine grid
        double best = 0.0;
        const int n = 1 << 14;
        const double step = 2.0 / n;
        double prev = kernel_density_1d(family_, -1.0);
        double cur = kernel_density_1d(family_, -1.0 + step);
        for (int i = 2; i <= n; ++i) {
            const double next = kernel_density_1d(family_, -1.0 + i * step);
            best = std::max(best, std::abs(next - 2.0 * cur + prev) / (step * step));
            prev = cur;
            cur = next;
        }
        return static_cast<double>(m) * best * std::pow(k0, static_cast<double>(m - 1)) /
               std::pow(h_, static_cast<double>(m + 2));
    }

    static constexpr std::size_t kMaxDim = 16;

private:
    KernelId family_;
    double h_;
    ParamBox box_;
};

} // namespace mfill
