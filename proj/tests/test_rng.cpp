#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <vector>

#include "helpers.hpp"
#include "mfill/rng.hpp"

using namespace mfill;

TEST_CASE("splitmix64 is deterministic and uniform-ish", "[rng]") {
    SplitMix64 a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    SplitMix64 g(7);
    std::vector<double> draws(100000);
    for (double& d : draws) d = g.next_double();
    for (double d : draws) {
        REQUIRE(d >= 0.0);
        REQUIRE(d < 1.0);
    }
    const double ks = testutil::ks_statistic(draws, [](double x) { return x; });
    REQUIRE(ks < 0.01);
}

TEST_CASE("substreams with different paths are distinct, same paths identical", "[rng]") {
    SplitMix64 a = substream(1, {stream::perturb, 3, 17});
    SplitMix64 a2 = substream(1, {stream::perturb, 3, 17});
    SplitMix64 b = substream(1, {stream::perturb, 3, 18});
    SplitMix64 c = substream(2, {stream::perturb, 3, 17});
    REQUIRE(a.next_u64() == a2.next_u64());
    SplitMix64 a3 = substream(1, {stream::perturb, 3, 17});
    REQUIRE(a3.next_u64() != b.next_u64());
    SplitMix64 a4 = substream(1, {stream::perturb, 3, 17});
    REQUIRE(a4.next_u64() != c.next_u64());

    // neighbouring slots should not produce identical streams
    std::set<std::uint64_t> firsts;
    for (std::uint64_t slot = 0; slot < 1000; ++slot)
        firsts.insert(substream(0, {stream::perturb, 1, slot}).next_u64());
    REQUIRE(firsts.size() == 1000);
}

TEST_CASE("next_below stays in range", "[rng]") {
    SplitMix64 g(123);
    for (int i = 0; i < 10000; ++i) {
        const auto v = g.next_below(17);
        REQUIRE(v < 17);
    }
}
