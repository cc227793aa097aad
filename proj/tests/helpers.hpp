#pragma once

// Shared test utilities: quadrature rules and statistics used as independent
// oracles. Everything here is deliberately implemented without touching the
// library's own evaluation paths.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "mfill/matrix.hpp"

namespace testutil {

/// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on the
/// Legendre polynomial.
inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(3.14159265358979323846 * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

/// Composite Gauss-Legendre on [a, b]: 16-node rule on `panels` uniform
/// panels. Accurate well past 1e-10 even for integrands with isolated C^1
/// kinks, which plain 64-node global rules are not.
inline double integrate_1d(const std::function<double(double)>& f, double a, double b,
                           int panels = 32) {
    static std::vector<double> nodes, weights;
    if (nodes.empty()) gauss_legendre(16, nodes, weights);
    double total = 0.0;
    const double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * width;
        for (std::size_t i = 0; i < nodes.size(); ++i)
            total += 0.5 * width * weights[i] * f(lo + 0.5 * width * (nodes[i] + 1.0));
    }
    return total;
}

/// Tensor-product composite Gauss-Legendre over a 2-D rectangle.
inline double integrate_2d(const std::function<double(double, double)>& f, double ax, double bx,
                           double ay, double by, int panels = 32) {
    return integrate_1d(
        [&](double x) {
            return integrate_1d([&](double y) { return f(x, y); }, ay, by, panels);
        },
        ax, bx, panels);
}

/// Two-sided Kolmogorov-Smirnov statistic of samples against a CDF.
inline double ks_statistic(std::vector<double> samples,
                           const std::function<double(double)>& cdf) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double c = cdf(samples[i]);
        worst = std::max(worst, std::abs(c - static_cast<double>(i) / n));
        worst = std::max(worst, std::abs(static_cast<double>(i + 1) / n - c));
    }
    return worst;
}

inline double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
    const double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

/// Mean of one column of a matrix.
inline double column_mean(const mfill::Matrix& m, std::size_t col) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, col);
    return acc / static_cast<double>(m.rows());
}

inline std::vector<double> column(const mfill::Matrix& m, std::size_t col) {
    std::vector<double> v(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, col);
    return v;
}

} // namespace testutil
