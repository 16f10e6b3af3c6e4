#pragma once

// Batch evaluation over generated scenarios: detect, solve, plan, replay, and
// cross-check each case. Cases are independent, so the batch runs either on a
// plain serial loop (the reference used by tests) or an OpenMP-parallel loop;
// both produce identical outcome vectors.

#include <vector>

#include "rebal/scenario_gen.hpp"
#include "rebal/solver.hpp"

namespace rebal {

struct SweepOptions {
    double detect_tol = 1e-7;
    double improvement_tol = 1e-7;  // boundary for the free/improvement agreement
    bool run_plan = true;           // plan + replay each solved case
    bool run_arbitrage_conversion = true;  // convert prone cycles to pool updates
};

struct SweepOutcome {
    std::uint64_t seed = 0;
    bool prone = false;
    double log_gain = 0.0;
    double improvement = 0.0;
    double kkt_residual = 0.0;
    bool equivalence_ok = false;   // prone <=> improvement above tolerance
    bool restricted = false;
    double passive_pinning = 0.0;  // max |log k' - log k| over passive CFMMs
    // Plan replay fidelity; the replay itself already enforces non-negative
    // agent balances and zero residue after repay.
    double plan_mismatch = 0.0;    // max relative pool gap, replay vs solver
    bool plan_ok = false;
    // Arbitrage-to-rebalancing conversion (prone cases only).
    double conversion_min_gain = 0.0;  // min (k'-k)/k over CFMMs
    double conversion_max_gain = 0.0;  // max (k'-k)/k over CFMMs
    bool conversion_ok = false;
    std::string error;  // non-empty if the case threw
};

SweepOutcome run_case(const GenSpec& spec, const SweepOptions& opts);

// Serial reference implementation.
std::vector<SweepOutcome> run_sweep_serial(const std::vector<GenSpec>& specs,
                                           const SweepOptions& opts = {});

// OpenMP-parallel variant; falls back to the serial loop when built without
// OpenMP. Outcomes are positionally identical to the serial reference.
std::vector<SweepOutcome> run_sweep_parallel(const std::vector<GenSpec>& specs,
                                             const SweepOptions& opts = {});

}  // namespace rebal
