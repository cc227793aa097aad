#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "mfill/core.hpp"
#include "mfill/parallel.hpp"
#include "mfill/rng.hpp"

namespace mfill {

enum class GroundMetric { euclidean, l1 };

namespace detail {

/// Exact minimal-cost square assignment by shortest augmenting paths with
/// dual potentials (the dense Dijkstra scheme of Crouse 2016, as used for
/// rectangular LSAP in common scientific stacks). Deterministic: scan order
/// is fixed and ties prefer unassigned columns, then lower scan index.
inline double solve_assignment(const std::vector<double>& cost, std::size_t n) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n, 0.0), v(n, 0.0), shortest(n);
    std::vector<std::int64_t> path(n, -1), col4row(n, -1), row4col(n, -1);
    std::vector<std::size_t> remaining(n);
    std::vector<char> scanned_row(n), scanned_col(n);

    for (std::size_t cur_row = 0; cur_row < n; ++cur_row) {
        double min_val = 0.0;
        std::size_t i = cur_row;
        std::size_t num_remaining = n;
        for (std::size_t jp = 0; jp < n; ++jp) {
            remaining[jp] = n - 1 - jp;
            shortest[jp] = kInf;
            scanned_row[jp] = scanned_col[jp] = 0;
        }
        std::int64_t sink = -1;
        while (sink == -1) {
            std::size_t index = 0;
            double lowest = kInf;
            scanned_row[i] = 1;
            for (std::size_t it = 0; it < num_remaining; ++it) {
                const std::size_t j = remaining[it];
                const double r = min_val + cost[i * n + j] - u[i] - v[j];
                if (r < shortest[j]) {
                    path[j] = static_cast<std::int64_t>(i);
                    shortest[j] = r;
                }
                if (shortest[j] < lowest ||
                    (shortest[j] == lowest && row4col[j] == -1)) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            if (!(min_val < kInf))
                throw Error("assignment: infeasible cost matrix (non-finite entries?)");
            const std::size_t j = remaining[index];
            if (row4col[j] == -1)
                sink = static_cast<std::int64_t>(j);
            else
                i = static_cast<std::size_t>(row4col[j]);
            scanned_col[j] = 1;
            remaining[index] = remaining[--num_remaining];
        }
        u[cur_row] += min_val;
        for (std::size_t ip = 0; ip < n; ++ip)
            if (scanned_row[ip] && ip != cur_row)
                u[ip] += min_val - shortest[static_cast<std::size_t>(col4row[ip])];
        for (std::size_t jp = 0; jp < n; ++jp)
            if (scanned_col[jp]) v[jp] -= min_val - shortest[jp];
        // augment backwards from the sink
        std::size_t j = static_cast<std::size_t>(sink);
        while (true) {
            const auto ip = static_cast<std::size_t>(path[j]);
            row4col[j] = static_cast<std::int64_t>(ip);
            const std::int64_t previous = col4row[ip];
            col4row[ip] = static_cast<std::int64_t>(j);
            if (ip == cur_row) break;
            j = static_cast<std::size_t>(previous);
        }
    }
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r)
        total += cost[r * n + static_cast<std::size_t>(col4row[r])];
    return total;
}

inline double ground_distance(std::span<const double> a, std::span<const double> b,
                              GroundMetric metric) {
    return metric == GroundMetric::euclidean ? euclidean_distance(a, b) : l1_distance(a, b);
}

} // namespace detail

/// Exact W1 between two equal-size equal-weight empirical measures: the
/// minimal mean matching cost over permutations, solved as an assignment
/// problem on the full cost matrix.
inline double w1_exact(const Matrix& a, const Matrix& b,
                       GroundMetric metric = GroundMetric::euclidean, int threads = 1) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw SizeMismatch("w1_exact: sample sets must have equal counts and dimension");
    const std::size_t n = a.rows();
    if (n == 0) throw SizeMismatch("w1_exact: empty sample sets");
    if (n > 4096)
        throw TooLarge("w1_exact: more than 4096 points; use w1_sliced for monitoring");
    std::vector<double> cost(n * n);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto ra = a.row(i);
        for (std::size_t j = 0; j < n; ++j)
            cost[i * n + j] = detail::ground_distance(ra, b.row(j), metric);
    });
    return detail::solve_assignment(cost, n) / static_cast<double>(n);
}

/// 1-D W1 by sorted quantile matching; equals w1_exact on the same inputs.
inline double w1_1d(std::vector<double> a, std::vector<double> b) {
    if (a.size() != b.size()) throw SizeMismatch("w1_1d: sample counts differ");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

/// Sliced W1: average 1-D W1 over random unit directions. Scalable progress
/// monitor for large ensembles; never a substitute for w1_exact in checks.
inline double w1_sliced(const Matrix& a, const Matrix& b, std::size_t num_projections,
                        SplitMix64& rng) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw SizeMismatch("w1_sliced: sample sets must have equal counts and dimension");
    const std::size_t n = a.rows(), d = a.cols();
    std::vector<double> dir(d), pa(n), pb(n);
    double acc = 0.0;
    for (std::size_t p = 0; p < num_projections; ++p) {
        // standard Gaussian direction via Box-Muller, then normalized
        double norm = 0.0;
        for (std::size_t c = 0; c < d; c += 2) {
            const double u1 = 1.0 - rng.next_double();
            const double u2 = rng.next_double();
            const double radius = std::sqrt(-2.0 * std::log(u1));
            dir[c] = radius * std::cos(6.283185307179586477 * u2);
            if (c + 1 < d) dir[c + 1] = radius * std::sin(6.283185307179586477 * u2);
        }
        for (double v : dir) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            double sa = 0.0, sb = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                sa += a(i, c) * dir[c] / norm;
                sb += b(i, c) * dir[c] / norm;
            }
            pa[i] = sa;
            pb[i] = sb;
        }
        acc += w1_1d(pa, pb);
    }
    return acc / static_cast<double>(num_projections);
}

} // namespace mfill
