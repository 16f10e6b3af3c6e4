#pragma once

// Arbitrage protection using trades alone: move every CFMM along its own
// invariant level set until spot prices admit a consistent valuation, and
// minimize the squared per-token slack the agent must inject or withdraw.
// The program is nonconvex; it is attacked by deterministic multi-start
// penalty iterations.

#include "rebal/arbitrage.hpp"
#include "rebal/core.hpp"

namespace rebal {

struct TradeOnlyOptions {
    int starts = 16;           // deterministic low-discrepancy starts
    int penalty_stages = 6;    // mu: 10 -> 1e6, x10 per stage
    double mu0 = 10.0;
    double mu_factor = 10.0;
    double feas_tol = 1e-8;    // consistency equalities must reach this
    bool parallel = true;      // starts are independent
};

struct TradeOnlySolution {
    std::vector<std::array<double, 2>> final_pools;
    Basket sigma;         // positive = withdrawn from the system
    Valuation valuation;  // consistent with final spot prices
    double objective;     // sum of sigma^2
    int start_index;      // which start won (ties to the lowest index)
    double max_residual;  // worst consistency violation at the solution
};

// Throws NoFeasiblePoint when no start satisfies the consistency equalities
// within feas_tol (e.g. price oracles pinning incompatible fixed rates).
TradeOnlySolution solve_trade_only(const Configuration& config,
                                   const TradeOnlyOptions& opts = {});

}  // namespace rebal
