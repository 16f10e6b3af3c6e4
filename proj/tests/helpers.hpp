#pragma once

// Shared fixtures for the test suites: the worked three-CFMM examples and a
// few deterministic sampling helpers.

#include <random>

#include "rebal/core.hpp"

namespace rebal::testing {

inline TokenId eur() { return {"EUR"}; }
inline TokenId gbp() { return {"GBP"}; }
inline TokenId usd() { return {"USD"}; }

// A: (EUR 1, USD 3), B: (GBP 1, EUR 3), C: (USD 1, GBP 3), all x1*x2 = 3.
inline Configuration make_triangle() {
    Configuration config;
    config.tokens = {eur(), gbp(), usd()};
    CfmmState a;
    a.pool_tokens = {eur(), usd()};
    a.pools = {1.0, 3.0};
    CfmmState b;
    b.pool_tokens = {gbp(), eur()};
    b.pools = {1.0, 3.0};
    CfmmState c;
    c.pool_tokens = {usd(), gbp()};
    c.pools = {1.0, 3.0};
    config.cfmms = {a, b, c};
    return config;
}

inline Configuration make_balanced_triangle() {
    Configuration config = make_triangle();
    for (auto& c : config.cfmms) c.pools = {2.0, 2.0};
    return config;
}

// B and C refuse direct transfers; only A rebalances.
inline Configuration make_mixed_triangle() {
    Configuration config = make_triangle();
    config.cfmms[1].mode = Mode::Passive;
    config.cfmms[2].mode = Mode::Passive;
    return config;
}

// C is replaced by a USD/GBP oracle trading at par.
inline Configuration make_oracle_triangle() {
    Configuration config = make_mixed_triangle();
    auto& c = config.cfmms[2];
    c.mode = Mode::Oracle;
    c.function = TradingFunction::linear(1.0, 1.0);
    c.pools = {1000.0, 1000.0};
    return config;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (static_cast<double>(rng() >> 11) * 0x1.0p-53) * (hi - lo);
}

}  // namespace rebal::testing
