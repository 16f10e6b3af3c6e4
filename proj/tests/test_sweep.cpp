#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rebal/sweep.hpp"

using namespace rebal;

namespace {

std::vector<GenSpec> corpus(std::uint64_t first, std::uint64_t last, double active) {
    std::vector<GenSpec> specs;
    for (std::uint64_t seed = first; seed <= last; ++seed) {
        GenSpec spec;
        spec.seed = seed;
        spec.n_cfmms = 4 + seed % 5;
        spec.n_tokens = 5;
        spec.active_fraction = active;
        specs.push_back(spec);
    }
    return specs;
}

bool same(const SweepOutcome& a, const SweepOutcome& b) {
    return a.seed == b.seed && a.prone == b.prone && a.log_gain == b.log_gain &&
           a.improvement == b.improvement && a.kkt_residual == b.kkt_residual &&
           a.equivalence_ok == b.equivalence_ok && a.passive_pinning == b.passive_pinning &&
           a.plan_mismatch == b.plan_mismatch && a.plan_ok == b.plan_ok &&
           a.conversion_min_gain == b.conversion_min_gain &&
           a.conversion_max_gain == b.conversion_max_gain &&
           a.conversion_ok == b.conversion_ok && a.error == b.error;
}

}  // namespace

TEST_CASE("parallel sweep reproduces the serial reference exactly") {
    const auto specs = corpus(1, 64, 1.0);
    const auto serial = run_sweep_serial(specs);
    const auto parallel = run_sweep_parallel(specs);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) CHECK(same(serial[i], parallel[i]));
}

TEST_CASE("sweep outcomes carry the per-case checks") {
    const auto outcomes = run_sweep_serial(corpus(1, 32, 1.0));
    int prone = 0;
    for (const auto& o : outcomes) {
        CHECK(o.error.empty());
        CHECK(o.equivalence_ok);
        CHECK(o.plan_ok);
        if (o.prone) {
            ++prone;
            CHECK(o.conversion_ok);
            CHECK(o.log_gain > 0.0);
        }
    }
    CHECK(prone > 0);
}

TEST_CASE("restricted sweeps report passive pinning") {
    const auto outcomes = run_sweep_serial(corpus(200, 232, 0.5));
    for (const auto& o : outcomes) {
        CHECK(o.error.empty());
        if (o.restricted) CHECK(o.passive_pinning <= 1e-7);
        CHECK(o.plan_ok);
    }
}
