#include "rebal/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rebal {

// ----------------------------- TradingFunction ------------------------------

TradingFunction TradingFunction::constant_product() {
    return {FnKind::ConstantProduct, 0.0, 0.0};
}

TradingFunction TradingFunction::weighted_geometric_mean(double w1, double w2) {
    if (!(w1 > 0.0) || !(w2 > 0.0) || std::abs(w1 + w2 - 1.0) > 1e-12)
        throw ValidationError("weighted geometric mean requires w1,w2 > 0 with w1+w2 = 1");
    return {FnKind::WeightedGeometricMean, w1, w2};
}

TradingFunction TradingFunction::linear(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0))
        throw ValidationError("linear trading function requires a,b > 0");
    return {FnKind::Linear, a, b};
}

double TradingFunction::value(double x1, double x2) const {
    switch (kind_) {
        case FnKind::ConstantProduct: return x1 * x2;
        case FnKind::WeightedGeometricMean: return std::pow(x1, p1_) * std::pow(x2, p2_);
        case FnKind::Linear: return p1_ * x1 + p2_ * x2;
    }
    return 0.0;
}

std::array<double, 2> TradingFunction::gradient(double x1, double x2) const {
    switch (kind_) {
        case FnKind::ConstantProduct: return {x2, x1};
        case FnKind::WeightedGeometricMean: {
            const double f = value(x1, x2);
            return {p1_ * f / x1, p2_ * f / x2};
        }
        case FnKind::Linear: return {p1_, p2_};
    }
    return {0.0, 0.0};
}

double TradingFunction::log_value(double x1, double x2) const {
    switch (kind_) {
        case FnKind::ConstantProduct: return std::log(x1) + std::log(x2);
        case FnKind::WeightedGeometricMean: return p1_ * std::log(x1) + p2_ * std::log(x2);
        case FnKind::Linear: return std::log(p1_ * x1 + p2_ * x2);
    }
    return 0.0;
}

std::array<double, 2> TradingFunction::log_gradient(double x1, double x2) const {
    switch (kind_) {
        case FnKind::ConstantProduct: return {1.0 / x1, 1.0 / x2};
        case FnKind::WeightedGeometricMean: return {p1_ / x1, p2_ / x2};
        case FnKind::Linear: {
            const double f = p1_ * x1 + p2_ * x2;
            return {p1_ / f, p2_ / f};
        }
    }
    return {0.0, 0.0};
}

std::array<double, 3> TradingFunction::log_hessian(double x1, double x2) const {
    switch (kind_) {
        case FnKind::ConstantProduct: return {-1.0 / (x1 * x1), 0.0, -1.0 / (x2 * x2)};
        case FnKind::WeightedGeometricMean:
            return {-p1_ / (x1 * x1), 0.0, -p2_ / (x2 * x2)};
        case FnKind::Linear: {
            const double f = p1_ * x1 + p2_ * x2;
            const double f2 = f * f;
            return {-p1_ * p1_ / f2, -p1_ * p2_ / f2, -p2_ * p2_ / f2};
        }
    }
    return {0.0, 0.0, 0.0};
}

// ------------------------------- validation ---------------------------------

void validate(const Configuration& config) {
    std::set<TokenId> universe;
    for (const auto& t : config.tokens) {
        if (t.symbol.empty()) throw ValidationError("empty token symbol in universe");
        if (!universe.insert(t).second)
            throw ValidationError("duplicate token in universe: " + t.symbol);
    }
    for (std::size_t i = 0; i < config.cfmms.size(); ++i) {
        const auto& c = config.cfmms[i];
        const std::string tag = "cfmm " + std::to_string(i);
        if (c.pool_tokens[0] == c.pool_tokens[1])
            throw ValidationError(tag + ": pool tokens must be distinct");
        for (int j = 0; j < 2; ++j) {
            if (!universe.count(c.pool_tokens[j]))
                throw ValidationError(tag + ": token " + c.pool_tokens[j].symbol +
                                      " not in universe");
            if (c.mode != Mode::Oracle && !(c.pools[j] > 0.0))
                throw ValidationError(tag + ": pool " + std::to_string(j + 1) +
                                      " must be strictly positive");
            if (!std::isfinite(c.pools[j]))
                throw ValidationError(tag + ": non-finite pool balance");
        }
        if (!(c.fee > 0.0) || c.fee > 1.0)
            throw ValidationError(tag + ": fee must lie in (0,1]");
        if (c.mode == Mode::Oracle && c.function.kind() != FnKind::Linear)
            throw ValidationError(tag + ": oracle mode requires a linear trading function");
        if (c.mode != Mode::Oracle && !(liquidity(c) > 0.0))
            throw ValidationError(tag + ": liquidity must be strictly positive");
    }
}

// -------------------------------- operations --------------------------------

double liquidity(const CfmmState& cfmm) {
    return cfmm.function.value(cfmm.pools[0], cfmm.pools[1]);
}

double spot_price(const CfmmState& cfmm) {
    const auto g = cfmm.function.gradient(cfmm.pools[0], cfmm.pools[1]);
    if (!(g[0] > 0.0) || !(g[1] > 0.0))
        throw UndefinedGradient("gradient not strictly positive at current pools");
    return g[0] / g[1];
}

TradeResult apply_trade(const CfmmState& cfmm, double amount_in, int input_pool) {
    if (!(amount_in > 0.0) || !std::isfinite(amount_in))
        throw ValidationError("trade amount must be positive and finite");
    if (input_pool != 0 && input_pool != 1)
        throw ValidationError("input pool index must be 0 or 1");

    const int out_pool = 1 - input_pool;
    const double x_in = cfmm.pools[input_pool];
    const double x_out = cfmm.pools[out_pool];
    const double gamma = cfmm.fee;
    const double eff_in = gamma * amount_in;
    const bool bounded = cfmm.mode != Mode::Oracle;

    double amount_out = 0.0;
    switch (cfmm.function.kind()) {
        case FnKind::ConstantProduct:
            amount_out = x_out * eff_in / (x_in + eff_in);
            break;
        case FnKind::Linear: {
            // a*x1 + b*x2 invariant: output is proportional to input.
            const double a = cfmm.function.param1();
            const double b = cfmm.function.param2();
            const double rate = (input_pool == 0) ? a / b : b / a;
            amount_out = rate * eff_in;
            break;
        }
        default: {
            // Solve F(x_in + eff_in, x_out - out) = F(x_in, x_out) for out in
            // (0, x_out): bisection bracket, then Newton polish.
            const double target = (input_pool == 0)
                                      ? cfmm.function.value(x_in, x_out)
                                      : cfmm.function.value(x_out, x_in);
            auto invariant_gap = [&](double out) {
                const double xi = x_in + eff_in;
                const double xo = x_out - out;
                return (input_pool == 0 ? cfmm.function.value(xi, xo)
                                        : cfmm.function.value(xo, xi)) -
                       target;
            };
            double lo = 0.0, hi = x_out;  // gap(lo) > 0, gap(hi) < 0
            for (int it = 0; it < 200 && (hi - lo) > 1e-15 * x_out; ++it) {
                const double mid = 0.5 * (lo + hi);
                (invariant_gap(mid) > 0.0 ? lo : hi) = mid;
            }
            amount_out = 0.5 * (lo + hi);
            for (int it = 0; it < 8; ++it) {
                const double xi = x_in + eff_in;
                const double xo = x_out - amount_out;
                const auto g = (input_pool == 0) ? cfmm.function.gradient(xi, xo)
                                                 : cfmm.function.gradient(xo, xi);
                const double slope = -g[input_pool == 0 ? 1 : 0];
                const double gap = invariant_gap(amount_out);
                if (slope == 0.0) break;
                const double next = amount_out - gap / slope;
                if (!(next > lo) || !(next < hi)) break;
                if (std::abs(next - amount_out) <= 1e-14 * std::max(1.0, amount_out)) {
                    amount_out = next;
                    break;
                }
                amount_out = next;
            }
            break;
        }
    }

    if (bounded && amount_out >= x_out)
        throw PoolExhausted("trade would drain the output pool");
    if (!std::isfinite(amount_out) || amount_out < 0.0)
        throw SolverDiverged("trade output solve failed");

    CfmmState next = cfmm;
    next.pools[input_pool] = x_in + eff_in;
    next.pools[out_pool] = x_out - amount_out;
    return {amount_out, next, (1.0 - gamma) * amount_in};
}

EdgeSet build_edges(const Configuration& config, bool restrict_to_active) {
    EdgeSet set;
    const auto& cs = config.cfmms;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        if (restrict_to_active && cs[i].mode != Mode::Active) continue;
        for (int j = 0; j < 2; ++j) {
            for (std::size_t k = i + 1; k < cs.size(); ++k) {
                if (restrict_to_active && cs[k].mode != Mode::Active) continue;
                for (int l = 0; l < 2; ++l) {
                    if (cs[i].pool_tokens[j] == cs[k].pool_tokens[l])
                        set.edges.push_back({i, j, k, l});
                }
            }
        }
    }
    std::sort(set.edges.begin(), set.edges.end());
    return set;
}

Configuration apply_rebalancing(const Configuration& config, const Rebalancing& reb) {
    const EdgeSet valid = build_edges(config);
    bool any_nonzero = false;
    for (const auto& [edge, delta] : reb.deltas) {
        if (!std::binary_search(valid.edges.begin(), valid.edges.end(), edge))
            throw ValidationError("rebalancing keyed on an edge outside the edge set");
        if (delta != 0.0) any_nonzero = true;
    }
    if (!any_nonzero)
        throw InfeasibleRebalancing("a feasible rebalancing needs some nonzero delta");

    Configuration out = config;
    for (const auto& [edge, delta] : reb.deltas) {
        out.cfmms[edge.i].pools[edge.j] -= delta;
        out.cfmms[edge.k].pools[edge.l] += delta;
    }
    for (std::size_t i = 0; i < out.cfmms.size(); ++i) {
        if (out.cfmms[i].mode == Mode::Oracle) continue;
        for (int j = 0; j < 2; ++j) {
            if (!(out.cfmms[i].pools[j] > 0.0))
                throw InfeasibleRebalancing("pool (" + std::to_string(i) + "," +
                                            std::to_string(j) + ") driven to <= 0");
        }
    }

    // Self-funding: direct transfers never create or destroy tokens.
    std::map<TokenId, double> before, after;
    for (std::size_t i = 0; i < config.cfmms.size(); ++i) {
        for (int j = 0; j < 2; ++j) {
            before[config.cfmms[i].pool_tokens[j]] += config.cfmms[i].pools[j];
            after[out.cfmms[i].pool_tokens[j]] += out.cfmms[i].pools[j];
        }
    }
    for (const auto& [token, total] : before) {
        if (std::abs(after[token] - total) > 1e-9)
            throw SolverDiverged("token conservation violated for " + token.symbol);
    }
    return out;
}

}  // namespace rebal
