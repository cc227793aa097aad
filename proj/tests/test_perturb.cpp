#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mfill/perturb.hpp"

using namespace mfill;

namespace {

Ensemble uniform_weight_ensemble(Matrix pts) {
    Ensemble e;
    const std::size_t n = pts.rows();
    e.images = Matrix(n, pts.cols());
    e.points = std::move(pts);
    e.weights.assign(n, 1.0 / static_cast<double>(n));
    return e;
}

RunConfig base_config(std::size_t n, double q, double h) {
    RunConfig cfg;
    cfg.sample_count = n;
    cfg.mix_uniform = q;
    cfg.bandwidth = h;
    cfg.seed = 17;
    return cfg;
}

} // namespace

TEST_CASE("pure uniform branch fills the box uniformly", "[perturb]") {
    const std::size_t n = 100000;
    ParamBox box({0.0, -1.0}, {1.0, 1.0});
    Matrix centers(n, 2);  // all at one spot; q = 1 must ignore them
    for (std::size_t i = 0; i < n; ++i) {
        centers(i, 0) = 0.5;
        centers(i, 1) = 0.0;
    }
    auto e = uniform_weight_ensemble(std::move(centers));
    const auto prop = perturb_plain(e, box, base_config(n, 1.0, 0.1), 1, 4);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto vals = testutil::column(prop.points, c);
        const double lo = box.lower()[c], width = box.edge(c);
        const double ks = testutil::ks_statistic(
            vals, [lo, width](double v) { return (v - lo) / width; });
        REQUIRE(ks < 0.02);
    }
}

TEST_CASE("pure kernel branch stays within bandwidth of the centers", "[perturb]") {
    const std::size_t n = 20000;
    ParamBox box({0.0}, {1.0});
    Matrix centers(n, 1);
    for (std::size_t i = 0; i < n; ++i) centers(i, 0) = 0.5;
    auto e = uniform_weight_ensemble(std::move(centers));
    const auto prop = perturb_plain(e, box, base_config(n, 0.0, 0.05), 1);
    for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(prop.points(i, 0) >= 0.45);
        REQUIRE(prop.points(i, 0) <= 0.55);
    }
}

TEST_CASE("mixture level outside the kernel support is the uniform part", "[perturb]") {
    const std::size_t n = 100000;
    ParamBox box({0.0}, {1.0});
    Matrix centers(n, 1);
    for (std::size_t i = 0; i < n; ++i) centers(i, 0) = 0.5;
    auto e = uniform_weight_ensemble(std::move(centers));
    const auto prop = perturb_plain(e, box, base_config(n, 0.5, 0.2), 3);
    // density on [0, 0.1] is exactly q (kernel support starts at 0.3)
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (prop.points(i, 0) < 0.1) ++hits;
    const double density_estimate = static_cast<double>(hits) / n / 0.1;
    REQUIRE(std::abs(density_estimate - 0.5) < 0.05);
}

TEST_CASE("infinite truncation is bit-identical to the plain path", "[perturb]") {
    const std::size_t n = 5000;
    ParamBox box({0.0, 0.0}, {1.0, 1.0});
    SplitMix64 rng(5);
    Matrix centers(n, 2);
    for (auto& v : centers.data()) v = rng.next_double();
    auto e = uniform_weight_ensemble(std::move(centers));
    RunConfig cfg = base_config(n, 0.3, 0.15);
    cfg.truncation = std::numeric_limits<double>::infinity();
    const auto plain = perturb_plain(e, box, cfg, 2, 2);
    const auto trunc = perturb_truncated(e, box, cfg, 2, 2);
    REQUIRE(plain.points == trunc.points);
}

TEST_CASE("truncated sampler matches the analytic density", "[perturb]") {
    // 1-D fixture: q = 0.2, centers at 0.5, h = 0.1, b = 1.0. Draws are
    // accumulated over 100 perturbation rounds of a 1000-slot ensemble so
    // the O(slots x centers) density evaluations stay cheap.
    const std::size_t slots = 1000;
    const std::size_t rounds = 100;
    ParamBox box({0.0}, {1.0});
    Matrix centers(slots, 1);
    for (std::size_t i = 0; i < slots; ++i) centers(i, 0) = 0.5;
    auto e = uniform_weight_ensemble(std::move(centers));
    RunConfig cfg = base_config(slots, 0.2, 0.1);
    cfg.truncation = 1.0;

    std::vector<double> draws;
    draws.reserve(slots * rounds);
    for (std::size_t round = 1; round <= rounds; ++round) {
        const auto prop = perturb_truncated(e, box, cfg, round, 4);
        for (std::size_t i = 0; i < slots; ++i) draws.push_back(prop.points(i, 0));
    }

    // analytic truncated density via quadrature on each histogram bin
    auto clipped = [&](double x) {
        const double u = (x - 0.5) / 0.1;
        const double d = 0.2 + 0.8 * kernel_density_1d(KernelId::biweight, u) / 0.1;
        return std::min(1.0, d);
    };
    const int bins = 50;
    std::vector<double> expected(bins);
    double z = 0.0;
    for (int b = 0; b < bins; ++b) {
        expected[b] = testutil::integrate_1d(clipped, b / double(bins), (b + 1) / double(bins), 8);
        z += expected[b];
    }
    std::vector<double> observed(bins, 0.0);
    for (double v : draws) {
        auto b = static_cast<int>(v * bins);
        if (b == bins) b = bins - 1;
        observed[b] += 1.0 / static_cast<double>(draws.size());
    }
    double tv = 0.0;
    for (int b = 0; b < bins; ++b) tv += std::abs(observed[b] - expected[b] / z);
    tv *= 0.5;
    REQUIRE(tv < 0.02);

    // acceptance probability 1 when b dominates the density sup
    RunConfig cfg_hi = cfg;
    cfg_hi.truncation = 100.0;  // above max d = 0.2 + 0.8 * k(0)/h = 7.7
    const auto easy = perturb_truncated(e, box, cfg_hi, 1, 4);
    const auto plain = perturb_plain(e, box, cfg_hi, 1, 4);
    REQUIRE(easy.points == plain.points);
}

TEST_CASE("every perturbed point lies in the closed box", "[perturb]") {
    SplitMix64 rng(55);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t n = 2000;
        ParamBox box({-2.0, 1.0}, {-1.0, 3.5});
        Matrix centers(n, 2);
        for (std::size_t i = 0; i < n; ++i) {
            centers(i, 0) = -2.0 + rng.next_double();
            centers(i, 1) = 1.0 + 2.5 * rng.next_double();
        }
        auto e = uniform_weight_ensemble(std::move(centers));
        RunConfig cfg = base_config(n, 0.25, 0.6);
        cfg.seed = 100 + rep;
        const auto prop = perturb_plain(e, box, cfg, 1, 4);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(box.contains(prop.points.row(i)));
    }
}

TEST_CASE("thread count does not change perturbation output", "[perturb]") {
    const std::size_t n = 4000;
    ParamBox box({0.0, 0.0}, {1.0, 1.0});
    SplitMix64 rng(77);
    Matrix centers(n, 2);
    for (auto& v : centers.data()) v = rng.next_double();
    auto e = uniform_weight_ensemble(std::move(centers));
    RunConfig cfg = base_config(n, 0.3, 0.2);
    const auto a = perturb_plain(e, box, cfg, 4, 1);
    const auto b = perturb_plain(e, box, cfg, 4, 8);
    REQUIRE(a.points == b.points);
}

TEST_CASE("stall guard trips on a hopeless truncation level", "[perturb]") {
    const std::size_t n = 2;
    ParamBox box({0.0}, {1.0});
    Matrix centers(n, 1);
    centers(0, 0) = centers(1, 0) = 0.5;
    auto e = uniform_weight_ensemble(std::move(centers));
    RunConfig cfg = base_config(n, 1e-9, 1e-4);
    cfg.truncation = 3e-9;  // barely above q/V while the kernel peak is ~1e4
    REQUIRE_THROWS_AS(perturb_truncated(e, box, cfg, 1), StallGuard);
}
