#pragma once

// Arbitrage exposure analysis over the exchange-rate graph: classify a
// configuration as arbitrage-free (with a consistent token valuation as the
// certificate) or arbitrage-prone (with a profitable trade cycle), size the
// optimal single-cycle arbitrage, and convert any profitable trade sequence
// into a liquidity-improving pool update.

#include <functional>
#include <vector>

#include "rebal/core.hpp"

namespace rebal {

// Per-token prices in an arbitrary numeraire, strictly positive, normalized
// so the lexicographically-first token of each connected component is 1.
struct Valuation {
    std::map<TokenId, double> values;
};

// One hop of a trade cycle: sell into `cfmm`, paying into pool `input_pool`.
struct CycleStep {
    std::size_t cfmm;
    int input_pool;  // 0 or 1
};

struct Cycle {
    std::vector<CycleStep> steps;

    TokenId input_token(const Configuration& config, std::size_t hop) const {
        const auto& s = steps[hop];
        return config.cfmms[s.cfmm].pool_tokens[s.input_pool];
    }
    TokenId output_token(const Configuration& config, std::size_t hop) const {
        const auto& s = steps[hop];
        return config.cfmms[s.cfmm].pool_tokens[1 - s.input_pool];
    }
};

struct ArbitrageCertificate {
    bool prone = false;
    Valuation valuation;  // meaningful when !prone
    Cycle cycle;          // meaningful when prone
    double log_gain = 0.0;
};

struct DetectOptions {
    double tol = 1e-7;      // threshold on mean log-rate gain per cycle edge
    bool fee_aware = false; // discount marginal rates by gamma when classifying
};

// Builds the directed multigraph whose edges are CFMM spot rates (each CFMM
// contributes both directions, with weights -log rate and +log rate) and
// searches it for a cycle whose total weight is below -tol times its length.
// Returns Prone with that cycle, or Free with per-token potentials propagated
// over a spanning tree and verified against every edge. Disconnected token
// universes are handled per component with independent numeraires.
ArbitrageCertificate detect(const Configuration& config, const DetectOptions& opts = {});

// Profit (in start-token units) of pushing `amount_in` around the cycle once.
// Pool exhaustion along the way counts as -infinity.
double cycle_profit(const Configuration& config, const Cycle& cycle, double amount_in);

struct CycleArbitrage {
    double input_amount;
    double profit;
};

// Maximizes cycle_profit over the input amount by bracket expansion plus
// golden-section refinement (relative tolerance 1e-9). The cycle must start
// at `start_token`. Throws NotProfitable when the maximum is <= 0.
CycleArbitrage optimal_cycle_arbitrage(const Configuration& config, const Cycle& cycle,
                                       const TokenId& start_token);

// One executed trade of a simulated arbitrage sequence.
struct TradeStep {
    std::size_t cfmm;
    double amount_in;
    int input_pool;
};

// Chooses which CFMM receives a profit deposit of `token`; candidates are the
// indices of CFMMs trading that token.
using DepositPolicy =
    std::function<std::size_t(const Configuration&, const TokenId&,
                              const std::vector<std::size_t>& candidates)>;

// Default policy: the candidate with the smallest liquidity, ties broken by
// the lowest CFMM index.
std::size_t smallest_liquidity_policy(const Configuration& config, const TokenId& token,
                                      const std::vector<std::size_t>& candidates);

// Replays `trades` against the configuration while tracking the agent's
// basket (borrowed funds allowed mid-sequence), verifies the final basket is
// componentwise >= 0 with some component > 0, then deposits each positive
// profit component into a pool chosen by `policy`. The returned configuration
// has every liquidity >= the original and at least one strictly greater.
// Throws NotAnArbitrage when the simulated profit vector fails verification.
Configuration arbitrage_to_rebalancing(const Configuration& config,
                                       const std::vector<TradeStep>& trades,
                                       DepositPolicy policy = {});

}  // namespace rebal
