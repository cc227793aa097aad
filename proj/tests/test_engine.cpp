#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "mfill/engine.hpp"
#include "mfill/models.hpp"
#include "mfill/oracle.hpp"

using namespace mfill;

namespace {

const TargetDensity kFlat{[](std::span<const double>) { return 1.0; }};

ModelSpec identity_model() {
    ModelSpec m;
    m.dim_in = m.dim_out = 2;
    m.eval = [](std::span<const double> x) { return std::vector<double>(x.begin(), x.end()); };
    m.jacobian = [](std::span<const double>) { return 1.0; };
    return m;
}

} // namespace

TEST_CASE("rate alpha of the sample size", "[engine]") {
    REQUIRE(rate_alpha(100, 1) == Catch::Approx(0.1));
    REQUIRE(rate_alpha(100, 2) == Catch::Approx(0.461512051684126));
    REQUIRE(rate_alpha(1000000, 3) == Catch::Approx(0.01));
}

TEST_CASE("identity model is a fixed point of the scheme", "[engine]") {
    const ModelSpec model = identity_model();
    ParamBox box({0.0, 0.0}, {1.0, 1.0});
    RunConfig cfg;
    cfg.algorithm = AlgorithmKind::jacobian;
    cfg.sample_count = 600;
    cfg.mix_uniform = 0.2;
    cfg.bandwidth = 0.3;
    cfg.max_iterations = 6;
    cfg.seed = 21;

    const auto result = run(model, kFlat, box, cfg);
    REQUIRE(result.diagnostics.records.size() == 6);
    for (const auto& rec : result.diagnostics.records) {
        REQUIRE(rec.ess > 0.8 * static_cast<double>(cfg.sample_count));
        REQUIRE(rec.max_weight < 5.0 / static_cast<double>(cfg.sample_count));
    }
    // successive W1 fluctuates at the noise floor without a trend
    const auto& recs = result.diagnostics.records;
    const double early = (recs[0].w1_successive + recs[1].w1_successive) / 2.0;
    const double late = (recs[4].w1_successive + recs[5].w1_successive) / 2.0;
    REQUIRE(late < 2.0 * early);
    REQUIRE(early < 2.0 * late);
}

TEST_CASE("evaluation budget is exactly N per iteration plus the initial batch", "[engine]") {
    ModelSpec model = identity_model();
    auto evals = std::make_shared<std::atomic<std::uint64_t>>(0);
    auto base_eval = model.eval;
    model.eval = [base_eval, evals](std::span<const double> x) {
        evals->fetch_add(1);
        return base_eval(x);
    };
    ParamBox box({0.0, 0.0}, {1.0, 1.0});
    RunConfig cfg;
    cfg.sample_count = 100;
    cfg.bandwidth = 0.25;
    cfg.max_iterations = 4;
    cfg.seed = 3;
    const auto result = run(model, kFlat, box, cfg);
    REQUIRE(evals->load() == 100 * (4 + 1));
    REQUIRE(result.diagnostics.records.back().f_evaluations == 500);
    REQUIRE(result.diagnostics.hit_iteration_limit);
    // monotone evaluation counter
    for (std::size_t i = 1; i < result.diagnostics.records.size(); ++i)
        REQUIRE(result.diagnostics.records[i].f_evaluations >
                result.diagnostics.records[i - 1].f_evaluations);
}

TEST_CASE("same seed gives bit-identical runs regardless of thread count", "[engine]") {
    TorusModel torus(1.0, 0.9);
    const ModelSpec model = torus.spec();
    const ParamBox box = torus.box();
    RunConfig cfg;
    cfg.algorithm = AlgorithmKind::jacobian;
    cfg.sample_count = 400;
    cfg.mix_uniform = 0.1;
    cfg.bandwidth = 0.5;
    cfg.max_iterations = 3;
    cfg.seed = 99;

    const auto a = run(model, kFlat, box, cfg, nullptr, {}, 1);
    const auto b = run(model, kFlat, box, cfg, nullptr, {}, 8);
    REQUIRE(a.ensemble.points == b.ensemble.points);
    REQUIRE(a.ensemble.images == b.ensemble.images);
    REQUIRE(a.diagnostics.records.size() == b.diagnostics.records.size());
    for (std::size_t i = 0; i < a.diagnostics.records.size(); ++i) {
        REQUIRE(a.diagnostics.records[i].w1_successive ==
                b.diagnostics.records[i].w1_successive);
        REQUIRE(a.diagnostics.records[i].ess == b.diagnostics.records[i].ess);
    }

    const auto c = run(model, kFlat, box, cfg, nullptr, {}, 1);
    REQUIRE(a.ensemble.points == c.ensemble.points);
}

TEST_CASE("derivative-free algorithm runs with truncation", "[engine]") {
    TorusModel torus(1.0, 0.9);
    const ModelSpec model = torus.spec();
    const ParamBox box = torus.box();
    RunConfig cfg;
    cfg.algorithm = AlgorithmKind::derivative_free;
    cfg.sample_count = 400;
    cfg.mix_uniform = 0.1;
    cfg.bandwidth = 0.5;
    cfg.truncation = 1000.0 * cfg.mix_uniform / box.volume();
    cfg.max_iterations = 2;
    cfg.seed = 7;
    const auto result = run(model, kFlat, box, cfg, nullptr, {}, 4);
    REQUIRE(result.ensemble.size() == 400);
    result.ensemble.validate(box);
}

TEST_CASE("stopping rule, iteration cap, and callbacks", "[engine]") {
    const ModelSpec model = identity_model();
    ParamBox box({0.0, 0.0}, {1.0, 1.0});
    RunConfig cfg;
    cfg.sample_count = 200;
    cfg.bandwidth = 0.3;
    cfg.max_iterations = 1;
    cfg.seed = 5;
    std::size_t callbacks = 0;
    const auto one = run(model, kFlat, box, cfg, nullptr,
                         [&callbacks](const IterationRecord&) { ++callbacks; });
    REQUIRE(one.diagnostics.records.size() == 1);
    REQUIRE(callbacks == 1);
    REQUIRE(one.diagnostics.hit_iteration_limit);

    // a huge relative tolerance stops at the first eligible check (two
    // consecutive quiet iterations)
    cfg.max_iterations = 50;
    cfg.stop_tol = 100.0;
    const auto stopped = run(model, kFlat, box, cfg);
    REQUIRE(stopped.diagnostics.records.size() == 2);
    REQUIRE_FALSE(stopped.diagnostics.hit_iteration_limit);
}

TEST_CASE("torus run with a practical tolerance stops within five iterations", "[engine]") {
    // At this scale the per-iteration diagnostic is the sliced W1, whose
    // noise floor sits well under 0.05 x the image scale once the run
    // stabilizes.
    TorusModel torus(1.0, 0.9);
    const ModelSpec model = torus.spec();
    const ParamBox box = torus.box();
    int stopped_early = 0;
    for (std::uint64_t seed : {31u, 32u, 33u}) {
        RunConfig cfg;
        cfg.algorithm = AlgorithmKind::jacobian;
        cfg.sample_count = 2000;
        cfg.mix_uniform = 0.1;
        cfg.bandwidth = 0.5;
        cfg.max_iterations = 8;
        cfg.stop_tol = 0.05;
        cfg.seed = seed;
        const auto result = run(model, kFlat, box, cfg, nullptr, {}, 4);
        if (result.diagnostics.records.size() <= 5) ++stopped_early;
    }
    REQUIRE(stopped_early >= 2);  // three-seed majority
}

TEST_CASE("algorithm output approaches the torus target", "[engine]") {
    TorusModel torus(1.0, 0.9);
    const ModelSpec model = torus.spec();
    const ParamBox box = torus.box();
    RunConfig cfg;
    cfg.algorithm = AlgorithmKind::jacobian;
    cfg.sample_count = 500;
    cfg.mix_uniform = 0.1;
    cfg.bandwidth = 0.5;
    cfg.max_iterations = 3;
    cfg.seed = 13;
    const auto result = run(model, kFlat, box, cfg, nullptr, {}, 4);

    const auto oracle = torus_uniform_oracle(torus, 500, 1013, 4);
    const double after = w1_exact(result.ensemble.images, oracle.images, GroundMetric::l1, 4);

    // naive uniform-in-box design as the baseline
    Matrix naive(500, 3);
    SplitMix64 rng(77);
    for (std::size_t i = 0; i < 500; ++i) {
        const auto y = torus.eval(kTwoPi * rng.next_double(), kTwoPi * rng.next_double());
        std::copy(y.begin(), y.end(), naive.row(i).begin());
    }
    const double before = w1_exact(naive, oracle.images, GroundMetric::l1, 4);
    REQUIRE(after < before);
}

TEST_CASE("engine validates inputs", "[engine]") {
    const ModelSpec model = identity_model();
    ParamBox box({0.0, 0.0}, {1.0, 1.0});
    RunConfig cfg;
    cfg.sample_count = 50;
    cfg.bandwidth = 0.2;
    cfg.seed = 1;

    Matrix bad_init(10, 2);  // wrong row count
    REQUIRE_THROWS_AS(run(model, kFlat, box, cfg, &bad_init), ConfigError);

    Matrix outside(50, 2);
    for (auto& v : outside.data()) v = 2.0;  // out of the box
    REQUIRE_THROWS_AS(run(model, kFlat, box, cfg, &outside), ConfigError);

    RunConfig bad_cfg = cfg;
    bad_cfg.bandwidth = 5.0;
    REQUIRE_THROWS_AS(run(model, kFlat, box, bad_cfg), ConfigError);
}
