#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "mfill/core.hpp"
#include "mfill/kernel.hpp"
#include "mfill/parallel.hpp"

namespace mfill {

namespace detail {

/// k-th smallest squared distance from query to the rows of points,
/// self-inclusive. Distances are always accumulated coordinate-major so the
/// brute-force and tree paths produce bit-identical values.
inline double kth_dsq_bruteforce(const Matrix& points, std::span<const double> query,
                                 std::size_t k, std::vector<double>& scratch) {
    const std::size_t n = points.rows();
    scratch.resize(n);
    for (std::size_t j = 0; j < n; ++j) scratch[j] = squared_distance(query, points.row(j));
    std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
    return scratch[k - 1];
}

/// Static median-split kd-tree over the rows of a matrix; exact k-NN only.
class KdTree {
public:
    explicit KdTree(const Matrix& points) : points_(points), order_(points.rows()) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        nodes_.reserve(2 * points.rows());
        root_ = build(0, points.rows());
    }

    /// k-th smallest squared distance to query, self-inclusive.
    double kth_dsq(std::span<const double> query, std::size_t k) const {
        Heap heap;
        heap.reserve(k);
        search(root_, query, k, heap);
        return heap.front();
    }

private:
    using Heap = std::vector<double>;  // max-heap of the k best squared distances

    struct Node {
        double split = 0.0;
        int axis = -1;  // -1 marks a leaf
        std::size_t begin = 0, end = 0;
        int left = -1, right = -1;
    };

    static constexpr std::size_t kLeafSize = 16;

    int build(std::size_t begin, std::size_t end) {
        Node node;
        node.begin = begin;
        node.end = end;
        if (end - begin > kLeafSize) {
            // split the widest coordinate at its median
            const std::size_t dim = points_.cols();
            int axis = 0;
            double best_spread = -1.0;
            for (std::size_t c = 0; c < dim; ++c) {
                double lo = std::numeric_limits<double>::infinity(), hi = -lo;
                for (std::size_t i = begin; i < end; ++i) {
                    const double v = points_(order_[i], c);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                if (hi - lo > best_spread) {
                    best_spread = hi - lo;
                    axis = static_cast<int>(c);
                }
            }
            const std::size_t mid = begin + (end - begin) / 2;
            std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                             [&](std::size_t a, std::size_t b) {
                                 return points_(a, axis) < points_(b, axis);
                             });
            node.axis = axis;
            node.split = points_(order_[mid], axis);
            const int self = static_cast<int>(nodes_.size());
            nodes_.push_back(node);
            const int left = build(begin, mid);
            const int right = build(mid, end);
            nodes_[self].left = left;
            nodes_[self].right = right;
            return self;
        }
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        return self;
    }

    static void heap_offer(Heap& heap, std::size_t k, double dsq) {
        if (heap.size() < k) {
            heap.push_back(dsq);
            std::push_heap(heap.begin(), heap.end());
        } else if (dsq < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = dsq;
            std::push_heap(heap.begin(), heap.end());
        }
    }

    void search(int node_id, std::span<const double> query, std::size_t k, Heap& heap) const {
        const Node& node = nodes_[node_id];
        if (node.axis < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i)
                heap_offer(heap, k, squared_distance(query, points_.row(order_[i])));
            return;
        }
        const double delta = query[node.axis] - node.split;
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        search(near, query, k, heap);
        if (heap.size() < k || delta * delta <= heap.front()) search(far, query, k, heap);
    }

    const Matrix& points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

} // namespace detail

/// Distance from each row to its k-th nearest row (Euclidean, self counts as
/// the first neighbor at distance 0). Public brute-force variant; used
/// directly for N <= 2048 and as the test oracle for the tree path.
inline std::vector<double> knn_radii_bruteforce(const Matrix& images, std::size_t k,
                                                int threads = 1) {
    const std::size_t n = images.rows();
    if (k < 1 || k > n) throw ConfigError("knn_radii: requires 1 <= k <= N");
    std::vector<double> radii(n);
    parallel_for(n, threads, [&](std::size_t i) {
        thread_local std::vector<double> scratch;
        radii[i] = std::sqrt(detail::kth_dsq_bruteforce(images, images.row(i), k, scratch));
    });
    return radii;
}

/// Exact k-NN radii; switches from brute force to a kd-tree above 2048 rows.
/// Both paths return bit-identical values.
inline std::vector<double> knn_radii(const Matrix& images, std::size_t k, int threads = 1) {
    const std::size_t n = images.rows();
    if (k < 1 || k > n) throw ConfigError("knn_radii: requires 1 <= k <= N");
    if (n <= 2048) return knn_radii_bruteforce(images, k, threads);
    detail::KdTree tree(images);
    std::vector<double> radii(n);
    parallel_for(n, threads, [&](std::size_t i) {
        radii[i] = std::sqrt(tree.kth_dsq(images.row(i), k));
    });
    return radii;
}

/// k-NN density estimate (k/N) / (Gamma_m r^m) per point, where m is the
/// manifold (input) dimension, not the ambient output dimension.
inline std::vector<double> knn_density(const Matrix& images, std::size_t k,
                                       std::size_t manifold_dim, int threads = 1) {
    auto radii = knn_radii(images, k, threads);
    const double gamma_m = unit_ball_volume(manifold_dim);
    const double ratio = static_cast<double>(k) / static_cast<double>(images.rows());
    for (double& r : radii) {
        if (!(r > 0.0))
            throw DuplicateImages(
                "knn_density: zero k-NN radius; deduplicate design points or raise k");
        r = ratio / (gamma_m * std::pow(r, static_cast<double>(manifold_dim)));
    }
    return radii;
}

/// Step-1 proposal: mixture of the uniform distribution on the box and the
/// reflected-kernel smoothing of the previous ensemble, optionally truncated
/// at level b. `untruncated` is the raw mixture value d(x); the
/// ProposalDensity interface reports the density actually sampled from
/// (min(b, d)/Z when b is finite). The truncation normalizer is only ever
/// needed for reporting, so it is computed lazily by quasi-uniform
/// quadrature.
class MixtureDensity final : public ProposalDensity {
public:
    MixtureDensity(double mix_uniform, ReflectedKernel kernel, Matrix centers,
                   double truncation = std::numeric_limits<double>::infinity())
        : q_(mix_uniform),
          kernel_(std::move(kernel)),
          centers_(std::move(centers)),
          truncation_(truncation),
          uniform_part_(q_ / kernel_.box().volume()) {
        if (!(q_ >= 0.0 && q_ <= 1.0))
            throw ConfigError("MixtureDensity: mixture weight must lie in [0,1]");
        if (std::isfinite(truncation_) && !(truncation_ > uniform_part_))
            throw ConfigError("MixtureDensity: finite truncation must exceed q/volume");
    }

    /// Untruncated mixture value d(x) = q/V + (1-q) mean of reflected kernels.
    double untruncated(std::span<const double> x) const {
        const std::size_t n = centers_.rows();
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += kernel_.eval(x, centers_.row(i));
        return uniform_part_ + (1.0 - q_) * acc / static_cast<double>(n);
    }

    double density(std::span<const double> x) const override {
        const double d = untruncated(x);
        if (!std::isfinite(truncation_)) return d;
        return std::min(truncation_, d) / truncated_normalizer();
    }

    /// Normalizer of min(b, d(.)) over the box; quasi-uniform quadrature with
    /// a rank-1 Kronecker lattice of 1e5 points. Exactly 1 when b = inf.
    double truncated_normalizer() const {
        if (!std::isfinite(truncation_)) return 1.0;
        std::call_once(normalizer_once_, [&] {
            const std::size_t count = 100000;
            const auto& box = kernel_.box();
            const std::size_t m = box.dim();
            static constexpr double primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37,
                                                41, 43, 47, 53};
            std::vector<double> alpha(m), x(m);
            for (std::size_t i = 0; i < m; ++i) {
                const double s = std::sqrt(primes[i % 16]);
                alpha[i] = s - std::floor(s);
            }
            double acc = 0.0;
            for (std::size_t j = 1; j <= count; ++j) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double frac = std::fmod(static_cast<double>(j) * alpha[i], 1.0);
                    x[i] = box.lower()[i] + frac * box.edge(i);
                }
                acc += std::min(truncation_, untruncated(x));
            }
            normalizer_ = acc / static_cast<double>(count) * box.volume();
        });
        return normalizer_;
    }

    double mix_uniform() const { return q_; }
    double truncation() const { return truncation_; }
    const Matrix& centers() const { return centers_; }
    const ReflectedKernel& kernel() const { return kernel_; }
    const ParamBox& box() const { return kernel_.box(); }

private:
    double q_;
    ReflectedKernel kernel_;
    Matrix centers_;
    double truncation_;
    double uniform_part_;
    mutable std::once_flag normalizer_once_;
    mutable double normalizer_ = 1.0;
};

} // namespace mfill
