#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "rebal/core.hpp"

using namespace rebal;
using namespace rebal::testing;

namespace {

TradingFunction sample_function(std::mt19937_64& rng) {
    const double pick = uniform(rng, 0.0, 1.0);
    if (pick < 0.4) return TradingFunction::constant_product();
    if (pick < 0.8) {
        const double w1 = uniform(rng, 0.2, 0.8);
        return TradingFunction::weighted_geometric_mean(w1, 1.0 - w1);
    }
    return TradingFunction::linear(uniform(rng, 0.5, 2.0), uniform(rng, 0.5, 2.0));
}

CfmmState sample_cfmm(std::mt19937_64& rng, double gamma = 1.0) {
    CfmmState c;
    c.pool_tokens = {TokenId{"A"}, TokenId{"B"}};
    c.pools = {uniform(rng, 0.1, 10.0), uniform(rng, 0.1, 10.0)};
    c.function = sample_function(rng);
    c.fee = gamma;
    return c;
}

}  // namespace

TEST_CASE("liquidity matches the trading function") {
    CfmmState c;
    c.pool_tokens = {usd(), gbp()};
    c.pools = {1.0, 3.0};
    CHECK(liquidity(c) == doctest::Approx(3.0));
    c.pools = {2.0, 2.0};
    CHECK(liquidity(c) == doctest::Approx(4.0));
    c.function = TradingFunction::linear(1.0, 1.0);
    c.pools = {5.0, 7.0};
    CHECK(liquidity(c) == doctest::Approx(12.0));
}

TEST_CASE("spot price is the gradient ratio") {
    CfmmState c;
    c.pool_tokens = {usd(), eur()};
    c.pools = {1.0, 2.0};
    CHECK(spot_price(c) == doctest::Approx(2.0));  // one dollar is worth two euros

    c.pools = {7.5, 7.5};
    CHECK(spot_price(c) == doctest::Approx(1.0));

    c.function = TradingFunction::linear(1.0, 1.0);
    c.pools = {123.0, 0.25};
    CHECK(spot_price(c) == doctest::Approx(1.0));
}

TEST_CASE("spot price equals the finite-difference gradient ratio") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const CfmmState c = sample_cfmm(rng);
        const double x1 = c.pools[0], x2 = c.pools[1];
        const double h1 = 1e-6 * x1, h2 = 1e-6 * x2;
        const double d1 = (c.function.value(x1 + h1, x2) - c.function.value(x1 - h1, x2)) /
                          (2.0 * h1);
        const double d2 = (c.function.value(x1, x2 + h2) - c.function.value(x1, x2 - h2)) /
                          (2.0 * h2);
        CHECK(spot_price(c) == doctest::Approx(d1 / d2).epsilon(1e-5));
    }
}

TEST_CASE("analytic gradient matches finite differences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const CfmmState c = sample_cfmm(rng);
        const double x1 = c.pools[0], x2 = c.pools[1];
        const auto g = c.function.gradient(x1, x2);
        const double h1 = 1e-6 * x1, h2 = 1e-6 * x2;
        const double d1 = (c.function.value(x1 + h1, x2) - c.function.value(x1 - h1, x2)) /
                          (2.0 * h1);
        const double d2 = (c.function.value(x1, x2 + h2) - c.function.value(x1, x2 - h2)) /
                          (2.0 * h2);
        CHECK(g[0] == doctest::Approx(d1).epsilon(1e-6));
        CHECK(g[1] == doctest::Approx(d2).epsilon(1e-6));
    }
}

TEST_CASE("log-evaluation is concave (midpoint inequality)") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const TradingFunction f = sample_function(rng);
        const double a1 = uniform(rng, 0.05, 20.0), a2 = uniform(rng, 0.05, 20.0);
        const double b1 = uniform(rng, 0.05, 20.0), b2 = uniform(rng, 0.05, 20.0);
        const double mid = f.log_value(0.5 * (a1 + b1), 0.5 * (a2 + b2));
        const double chord = 0.5 * (f.log_value(a1, a2) + f.log_value(b1, b2));
        CHECK(mid >= chord - 1e-12);
    }
}

TEST_CASE("trades reproduce the worked example") {
    // Sell $1 to C = (USD 1, GBP 3): out 1.5 pounds, pools become (2, 1.5).
    CfmmState c;
    c.pool_tokens = {usd(), gbp()};
    c.pools = {1.0, 3.0};
    const auto r1 = apply_trade(c, 1.0, 0);
    CHECK(r1.amount_out == doctest::Approx(1.5));
    CHECK(r1.new_state.pools[0] == doctest::Approx(2.0));
    CHECK(r1.new_state.pools[1] == doctest::Approx(1.5));
    CHECK(r1.fee_paid == doctest::Approx(0.0));

    // Sell the 1.5 pounds to B = (GBP 1, EUR 3): out 1.8 euros.
    CfmmState b;
    b.pool_tokens = {gbp(), eur()};
    b.pools = {1.0, 3.0};
    const auto r2 = apply_trade(b, 1.5, 0);
    CHECK(r2.amount_out == doctest::Approx(1.8));
}

TEST_CASE("fee-free trades preserve liquidity") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const CfmmState c = sample_cfmm(rng);
        const int side = (rng() & 1) ? 1 : 0;
        const double amount = uniform(rng, 1e-4, 2.0) * c.pools[side];
        TradeResult r{};
        try {
            r = apply_trade(c, amount, side);
        } catch (const PoolExhausted&) {
            continue;  // linear kinds can legitimately run out
        }
        const double before = liquidity(c);
        const double after = liquidity(r.new_state);
        CHECK(std::abs(after - before) / before <= 1e-10);
    }
}

TEST_CASE("fee trades keep the invariant and report the remainder") {
    // The pool absorbs gamma*amount_in and the output preserves F exactly;
    // the (1-gamma) remainder goes to the LPs as separately-reported revenue.
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const CfmmState c = sample_cfmm(rng, uniform(rng, 0.9, 0.999));
        const int side = (rng() & 1) ? 1 : 0;
        const double amount = uniform(rng, 1e-3, 0.5) * c.pools[side];
        try {
            const auto r = apply_trade(c, amount, side);
            CHECK(std::abs(liquidity(r.new_state) - liquidity(c)) / liquidity(c) <= 1e-10);
            CHECK(r.new_state.pools[side] ==
                  doctest::Approx(c.pools[side] + c.fee * amount));
            CHECK(r.fee_paid == doctest::Approx((1.0 - c.fee) * amount));
        } catch (const PoolExhausted&) {
        }
    }
}

TEST_CASE("fees shrink the payout") {
    CfmmState c;
    c.pool_tokens = {usd(), gbp()};
    c.pools = {4.0, 9.0};
    const double gross = apply_trade(c, 1.0, 0).amount_out;
    c.fee = 0.95;
    const double net = apply_trade(c, 1.0, 0).amount_out;
    CHECK(net < gross);
    CHECK(net == doctest::Approx(9.0 * 0.95 / (4.0 + 0.95)));
}

TEST_CASE("weighted-mean trade agrees with the closed form") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        CfmmState c;
        c.pool_tokens = {TokenId{"A"}, TokenId{"B"}};
        c.pools = {uniform(rng, 0.2, 5.0), uniform(rng, 0.2, 5.0)};
        const double w1 = uniform(rng, 0.25, 0.75);
        c.function = TradingFunction::weighted_geometric_mean(w1, 1.0 - w1);
        c.fee = uniform(rng, 0.9, 1.0);
        const double amount = uniform(rng, 0.01, 1.0) * c.pools[0];
        const auto r = apply_trade(c, amount, 0);
        const double expected =
            c.pools[1] *
            (1.0 - std::pow(c.pools[0] / (c.pools[0] + c.fee * amount), w1 / (1.0 - w1)));
        CHECK(r.amount_out == doctest::Approx(expected).epsilon(1e-11));
    }
}

TEST_CASE("trades that drain the output pool are rejected") {
    CfmmState c;
    c.pool_tokens = {usd(), gbp()};
    c.function = TradingFunction::linear(2.0, 1.0);
    c.pools = {1.0, 3.0};
    CHECK_THROWS_AS(apply_trade(c, 5.0, 0), PoolExhausted);
    // Oracles have unbounded effective reserves.
    c.mode = Mode::Oracle;
    const auto r = apply_trade(c, 5.0, 0);
    CHECK(r.amount_out == doctest::Approx(10.0));
    CHECK(r.new_state.pools[1] == doctest::Approx(-7.0));
}

TEST_CASE("edge construction on the triangle") {
    const Configuration config = make_triangle();
    const EdgeSet edges = build_edges(config);
    REQUIRE(edges.edges.size() == 3);
    CHECK(edges.edges[0] == Edge{0, 0, 1, 1});  // EUR
    CHECK(edges.edges[1] == Edge{0, 1, 2, 0});  // USD
    CHECK(edges.edges[2] == Edge{1, 0, 2, 1});  // GBP
}

TEST_CASE("edge construction corner cases") {
    Configuration config = make_triangle();
    config.cfmms.resize(1);
    CHECK(build_edges(config).edges.empty());

    Configuration disjoint;
    disjoint.tokens = {TokenId{"A"}, TokenId{"B"}, TokenId{"C"}, TokenId{"D"}};
    CfmmState c1, c2;
    c1.pool_tokens = {TokenId{"A"}, TokenId{"B"}};
    c1.pools = {1.0, 1.0};
    c2.pool_tokens = {TokenId{"C"}, TokenId{"D"}};
    c2.pools = {1.0, 1.0};
    disjoint.cfmms = {c1, c2};
    CHECK(build_edges(disjoint).edges.empty());

    Configuration mixed = make_mixed_triangle();
    CHECK(build_edges(mixed).edges.size() == 3);
    CHECK(build_edges(mixed, /*restrict_to_active=*/true).edges.empty());
    mixed.cfmms[1].mode = Mode::Active;
    CHECK(build_edges(mixed, true).edges.size() == 1);
}

TEST_CASE("the defensive transfer set balances the triangle") {
    const Configuration config = make_triangle();
    Rebalancing reb;
    reb.deltas[{0, 0, 1, 1}] = -1.0;  // EUR 1 from B to A
    reb.deltas[{1, 0, 2, 1}] = -1.0;  // GBP 1 from C to B
    reb.deltas[{0, 1, 2, 0}] = 1.0;   // USD 1 from A to C
    const Configuration after = apply_rebalancing(config, reb);
    for (const auto& c : after.cfmms) {
        CHECK(c.pools[0] == doctest::Approx(2.0));
        CHECK(c.pools[1] == doctest::Approx(2.0));
        CHECK(liquidity(c) == doctest::Approx(4.0));
    }
}

TEST_CASE("rebalancing feasibility violations") {
    const Configuration config = make_triangle();
    Rebalancing empty;
    CHECK_THROWS_AS(apply_rebalancing(config, empty), InfeasibleRebalancing);

    Rebalancing zero;
    zero.deltas[{0, 0, 1, 1}] = 0.0;
    CHECK_THROWS_AS(apply_rebalancing(config, zero), InfeasibleRebalancing);

    Rebalancing drain;
    drain.deltas[{0, 0, 1, 1}] = 1.0;  // removes A's entire euro pool
    CHECK_THROWS_AS(apply_rebalancing(config, drain), InfeasibleRebalancing);

    Rebalancing bogus;
    bogus.deltas[{0, 0, 1, 0}] = 0.5;  // EUR pool against the GBP pool
    CHECK_THROWS_AS(apply_rebalancing(config, bogus), ValidationError);
}

TEST_CASE("rebalancing conserves tokens and inverts cleanly") {
    std::mt19937_64 rng(29);
    const Configuration config = make_triangle();
    const EdgeSet edges = build_edges(config);
    for (int trial = 0; trial < 50; ++trial) {
        Rebalancing reb;
        for (const auto& e : edges.edges) reb.deltas[e] = uniform(rng, -0.4, 0.4);

        Configuration after;
        try {
            after = apply_rebalancing(config, reb);
        } catch (const InfeasibleRebalancing&) {
            continue;
        }
        std::map<TokenId, double> before_total, after_total;
        for (std::size_t i = 0; i < config.cfmms.size(); ++i) {
            for (int j = 0; j < 2; ++j) {
                before_total[config.cfmms[i].pool_tokens[j]] += config.cfmms[i].pools[j];
                after_total[after.cfmms[i].pool_tokens[j]] += after.cfmms[i].pools[j];
            }
        }
        for (const auto& [token, total] : before_total)
            CHECK(after_total[token] == doctest::Approx(total).epsilon(1e-9));

        Rebalancing inverse;
        for (const auto& [e, d] : reb.deltas) inverse.deltas[e] = -d;
        const Configuration restored = apply_rebalancing(after, inverse);
        for (std::size_t i = 0; i < config.cfmms.size(); ++i)
            for (int j = 0; j < 2; ++j)
                CHECK(restored.cfmms[i].pools[j] ==
                      doctest::Approx(config.cfmms[i].pools[j]).epsilon(1e-9));
    }
}

TEST_CASE("configuration validation") {
    Configuration config = make_triangle();
    config.cfmms[0].pools[0] = 0.0;
    CHECK_THROWS_AS(validate(config), ValidationError);

    config = make_triangle();
    config.cfmms[1].fee = 1.5;
    CHECK_THROWS_AS(validate(config), ValidationError);

    config = make_triangle();
    config.tokens.push_back(usd());
    CHECK_THROWS_AS(validate(config), ValidationError);

    config = make_triangle();
    config.cfmms[2].mode = Mode::Oracle;  // still constant-product
    CHECK_THROWS_AS(validate(config), ValidationError);

    config = make_triangle();
    config.cfmms[0].pool_tokens = {usd(), usd()};
    CHECK_THROWS_AS(validate(config), ValidationError);

    CHECK_NOTHROW(validate(make_oracle_triangle()));
}
