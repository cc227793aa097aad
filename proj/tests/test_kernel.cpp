#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "mfill/kernel.hpp"
#include "mfill/rng.hpp"

using namespace mfill;

namespace {

/// Reference evaluation of the reflected kernel: sum of the scaled base
/// kernel over all 3^m reflected centers, enumerated in the same odometer
/// order as the library's lazy enumeration. Exact-equality oracle.
double brute_force_reflected(KernelId id, double h, const ParamBox& box,
                             std::span<const double> x, std::span<const double> y) {
    const std::size_t m = box.dim();
    const double inv_h = 1.0 / h;
    std::vector<std::size_t> idx(m, 0);
    double sum = 0.0;
    while (true) {
        double term = 1.0;
        for (std::size_t i = 0; i < m; ++i) {
            double center = y[i];
            if (idx[i] == 1) center = 2.0 * box.lower()[i] - y[i];
            if (idx[i] == 2) center = 2.0 * box.upper()[i] - y[i];
            term *= kernel_density_1d(id, (x[i] - center) / h) * inv_h;
        }
        sum += term;
        std::size_t i = m;
        bool done = false;
        while (i > 0) {
            --i;
            if (++idx[i] < 3) break;
            idx[i] = 0;
            if (i == 0) done = true;
        }
        if (done) break;
    }
    return sum;
}

double simpson_1024(const std::function<double(double)>& f, double a, double b) {
    const int n = 1024;  // even
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

} // namespace

TEST_CASE("base kernel values and normalization", "[kernel]") {
    const double zero[] = {0.0};
    REQUIRE(kernel_eval_base(KernelId::biweight, zero) == Catch::Approx(15.0 / 16.0));
    REQUIRE(kernel_eval_base(KernelId::triweight, zero) == Catch::Approx(35.0 / 32.0));
    REQUIRE(kernel_eval_base(KernelId::tricube, zero) == Catch::Approx(70.0 / 81.0));

    const double outside[] = {1.0001, 0.0};
    for (auto id : {KernelId::biweight, KernelId::triweight, KernelId::tricube})
        REQUIRE(kernel_eval_base(id, outside) == 0.0);

    for (auto id : {KernelId::biweight, KernelId::triweight, KernelId::tricube}) {
        const double mass =
            simpson_1024([id](double u) { return kernel_density_1d(id, u); }, -1.0, 1.0);
        REQUIRE(mass == Catch::Approx(1.0).margin(1e-10));
    }
}

TEST_CASE("closed-form CDF matches quadrature and quantile inverts it", "[kernel]") {
    for (auto id : {KernelId::biweight, KernelId::triweight, KernelId::tricube}) {
        for (double u : {-0.9, -0.4, 0.0, 0.3, 0.77}) {
            const double by_quad = testutil::integrate_1d(
                [id](double v) { return kernel_density_1d(id, v); }, -1.0, u, 16);
            REQUIRE(kernel_cdf_1d(id, u) == Catch::Approx(by_quad).margin(1e-12));
        }
        REQUIRE(kernel_quantile_1d(id, 0.5) == Catch::Approx(0.0).margin(1e-9));
        for (double p : {0.01, 0.2, 0.5, 0.8, 0.999}) {
            const double u = kernel_quantile_1d(id, p);
            REQUIRE(kernel_cdf_1d(id, u) == Catch::Approx(p).margin(3e-4));
        }
    }
}

TEST_CASE("reflected kernel hand cases", "[kernel]") {
    ParamBox unit({0.0}, {1.0});
    ReflectedKernel kern(KernelId::biweight, 0.5, unit);

    // center at the corner coincides with its own reflection
    const double zero[] = {0.0};
    REQUIRE(kern.eval(zero, zero) == Catch::Approx(2.0 * (15.0 / 16.0) / 0.5));

    // interior pair far from every face: exactly the scaled base kernel
    ParamBox square({0.0, 0.0}, {1.0, 1.0});
    ReflectedKernel kern2(KernelId::biweight, 0.2, square);
    const double x[] = {0.5, 0.45};
    const double y[] = {0.55, 0.5};
    const double expected = kernel_density_1d(KernelId::biweight, (x[0] - y[0]) / 0.2) / 0.2 *
                            (kernel_density_1d(KernelId::biweight, (x[1] - y[1]) / 0.2) / 0.2);
    REQUIRE(kern2.eval(x, y) == Catch::Approx(expected).epsilon(1e-14));

    // compact support in the sup norm
    const double far[] = {0.5, 0.71};
    REQUIRE(kern2.eval(far, y) == 0.0);

    REQUIRE_THROWS_AS(ReflectedKernel(KernelId::biweight, 1.0, unit), BandwidthTooLarge);
}

TEST_CASE("lazy enumeration equals the full 3^m sum exactly", "[kernel]") {
    SplitMix64 rng(999);
    for (int rep = 0; rep < 10000; ++rep) {
        const std::size_t m = 1 + rng.next_below(3);
        std::vector<double> lo(m), hi(m), x(m), y(m);
        for (std::size_t i = 0; i < m; ++i) {
            lo[i] = -1.0 + 2.0 * rng.next_double();
            hi[i] = lo[i] + 0.5 + rng.next_double();
        }
        ParamBox box(lo, hi);
        const double h = box.min_edge() * (0.2 + 0.7 * rng.next_double());
        const auto id = static_cast<KernelId>(rng.next_below(3));
        ReflectedKernel kern(id, h, box);
        for (std::size_t i = 0; i < m; ++i) {
            x[i] = lo[i] + rng.next_double() * (hi[i] - lo[i]);
            y[i] = lo[i] + rng.next_double() * (hi[i] - lo[i]);
        }
        const double lazy = kern.eval(x, y);
        const double full = brute_force_reflected(id, h, box, x, y);
        REQUIRE(lazy == full);  // bit-exact
    }
}

TEST_CASE("reflected kernel has unit mass, including corners and faces", "[kernel]") {
    ParamBox square({0.0, 0.0}, {1.0, 1.0});
    ReflectedKernel kern(KernelId::biweight, 0.3, square);
    SplitMix64 rng(5);
    std::vector<std::array<double, 2>> centers = {
        {0.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}, {0.5, 0.0}, {1.0, 0.5}};  // corners and faces
    for (int i = 0; i < 15; ++i)
        centers.push_back({rng.next_double(), rng.next_double()});
    for (const auto& c : centers) {
        const double mass = testutil::integrate_2d(
            [&](double a, double b) {
                const double x[] = {a, b};
                const double y[] = {c[0], c[1]};
                return kern.eval(x, y);
            },
            0.0, 1.0, 0.0, 1.0, 24);
        REQUIRE(mass == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("fold sampler matches the analytic folded CDF at a corner", "[kernel]") {
    ParamBox unit({0.0}, {1.0});
    const double h = 0.4;
    ReflectedKernel kern(KernelId::biweight, h, unit);
    SplitMix64 rng(31337);
    const double y[] = {0.0};
    const std::size_t n = 100000;
    std::vector<double> samples(n);
    double out[1];
    for (std::size_t i = 0; i < n; ++i) {
        kern.sample(y, rng, out);
        REQUIRE(out[0] >= 0.0);
        REQUIRE(out[0] <= h);
        samples[i] = out[0];
    }
    // folded density 2 * zeta_h(z) on [0, h]
    const double ks = testutil::ks_statistic(samples, [h](double z) {
        return 2.0 * (kernel_cdf_1d(KernelId::biweight, z / h) - 0.5);
    });
    REQUIRE(ks < 0.02);
}

TEST_CASE("interior sampling is unbiased", "[kernel]") {
    ParamBox unit({0.0}, {1.0});
    ReflectedKernel kern(KernelId::biweight, 0.2, unit);
    SplitMix64 rng(77);
    const double y[] = {0.5};
    const std::size_t n = 100000;
    std::vector<double> samples(n);
    double out[1];
    for (std::size_t i = 0; i < n; ++i) {
        kern.sample(y, rng, out);
        samples[i] = out[0];
    }
    const double m = testutil::mean(samples);
    const double sd = testutil::sample_sd(samples);
    REQUIRE(std::abs(m - 0.5) < 3.0 * sd / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("lipschitz diagnostics are positive and finite", "[kernel]") {
    ParamBox square({0.0, 0.0}, {1.0, 1.0});
    ReflectedKernel kern(KernelId::biweight, 0.3, square);
    REQUIRE(kern.lipschitz() > 0.0);
    REQUIRE(std::isfinite(kern.lipschitz()));
    REQUIRE(kern.grad_lipschitz() > 0.0);
    REQUIRE(std::isfinite(kern.grad_lipschitz()));
}
