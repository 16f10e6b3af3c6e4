#include "rebal/scenario_gen.hpp"

#include <cmath>
#include <random>

namespace rebal {

namespace {

// Distribution helpers hand-rolled on raw engine output so the same seed
// gives the same scenario on every standard library.
double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::exp(std::log(lo) + uniform01(rng) * (std::log(hi) - std::log(lo)));
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

}  // namespace

Configuration generate(const GenSpec& spec) {
    if (spec.n_tokens < 2) throw InfeasibleSpec("need at least two tokens");
    if (spec.n_tokens > 99) throw InfeasibleSpec("token universe capped at 99");
    if (spec.n_cfmms < 1) throw InfeasibleSpec("need at least one CFMM");
    if (!(spec.pool_min > 0.0) || !(spec.pool_max >= spec.pool_min))
        throw InfeasibleSpec("pool bounds must satisfy 0 < min <= max");
    if (!(spec.fee_min > 0.0) || spec.fee_max > 1.0 || spec.fee_min > spec.fee_max)
        throw InfeasibleSpec("fee bounds must lie in (0,1]");
    if (spec.oracle_count >= spec.n_cfmms)
        throw InfeasibleSpec("need at least one non-oracle CFMM");
    if (spec.ensure_connected && spec.n_cfmms < spec.n_tokens - 1)
        throw InfeasibleSpec("connectivity needs at least n_tokens-1 CFMMs");

    std::mt19937_64 rng(spec.seed);

    Configuration config;
    config.tokens.reserve(spec.n_tokens);
    for (std::size_t t = 0; t < spec.n_tokens; ++t) {
        char name[8];
        std::snprintf(name, sizeof(name), "TK%02zu", t);
        config.tokens.push_back({name});
    }

    // Hidden price vector keeps multiple oracles mutually consistent.
    std::vector<double> oracle_price(spec.n_tokens);
    for (auto& v : oracle_price) v = std::exp(2.0 * uniform01(rng) - 1.0);

    for (std::size_t i = 0; i < spec.n_cfmms; ++i) {
        std::size_t a, b;
        if (spec.ensure_connected && i + 1 < spec.n_tokens) {
            // Spanning tree first: CFMM i links token i+1 into the tree.
            b = i + 1;
            a = uniform_index(rng, b);
        } else {
            a = uniform_index(rng, spec.n_tokens);
            b = uniform_index(rng, spec.n_tokens - 1);
            if (b >= a) ++b;
        }
        if (uniform01(rng) < 0.5) std::swap(a, b);

        CfmmState c;
        c.pool_tokens = {config.tokens[a], config.tokens[b]};
        c.pools = {log_uniform(rng, spec.pool_min, spec.pool_max),
                   log_uniform(rng, spec.pool_min, spec.pool_max)};
        if (uniform01(rng) < spec.weighted_fraction) {
            const double w1 = 0.2 + 0.6 * uniform01(rng);
            c.function = TradingFunction::weighted_geometric_mean(w1, 1.0 - w1);
        } else {
            c.function = TradingFunction::constant_product();
        }
        c.fee = spec.fee_min +
                uniform01(rng) * (spec.fee_max - spec.fee_min);
        c.mode = (uniform01(rng) < spec.active_fraction) ? Mode::Active : Mode::Passive;
        config.cfmms.push_back(std::move(c));
    }

    for (std::size_t o = 0; o < spec.oracle_count; ++o) {
        auto& c = config.cfmms[spec.n_cfmms - 1 - o];
        std::size_t a = 0, b = 0;
        for (std::size_t t = 0; t < spec.n_tokens; ++t) {
            if (config.tokens[t] == c.pool_tokens[0]) a = t;
            if (config.tokens[t] == c.pool_tokens[1]) b = t;
        }
        c.mode = Mode::Oracle;
        c.function = TradingFunction::linear(oracle_price[a], oracle_price[b]);
        c.pools = {1000.0 * spec.pool_max, 1000.0 * spec.pool_max};
        c.fee = 1.0;
    }

    bool any_active = false;
    for (const auto& c : config.cfmms) any_active |= c.mode == Mode::Active;
    if (!any_active) {
        for (auto& c : config.cfmms) {
            if (c.mode != Mode::Oracle) {
                c.mode = Mode::Active;
                break;
            }
        }
    }

    validate(config);
    return config;
}

}  // namespace rebal
