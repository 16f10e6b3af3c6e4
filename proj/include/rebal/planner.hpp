#pragma once

// Turns a rebalance solution into an executable atomic plan: direct transfers
// between active pools, standard trades against passive CFMMs, and a flash
// borrow basket covering any temporary shortfall. Plans replay through the
// core trade/transfer semantics so a counterparty can re-verify them.

#include <optional>
#include <variant>
#include <vector>

#include "rebal/core.hpp"
#include "rebal/solver.hpp"

namespace rebal {

struct PoolRef {
    std::size_t cfmm;
    int pool;  // 0 or 1

    bool operator==(const PoolRef&) const = default;
};

// Direct token movement; a missing endpoint is the agent's own account.
struct TransferStep {
    std::optional<PoolRef> from;
    std::optional<PoolRef> to;
    TokenId token;
    double amount;
};

// Standard trade against a passive (or oracle) CFMM.
struct PlanTrade {
    std::size_t cfmm;
    TokenId token_in;
    double amount_in;
    TokenId token_out;
    double expected_out;
    double fee_paid;  // (1-gamma)*amount_in retained by the LPs
};

using PlanStep = std::variant<TransferStep, PlanTrade>;

struct ExecutionPlan {
    Basket borrow;  // first action: flash-borrow this basket
    std::vector<PlanStep> steps;
    Basket repay;   // last action: repay exactly the borrow
    // Final pool values the plan is expected to reach (checked on replay).
    std::vector<std::array<double, 2>> expected_final;

    bool empty() const { return steps.empty(); }
};

// Builds a plan reaching solution.final_pools from `config`. Passive CFMMs
// get a single invariant-preserving Trade (their pinned liquidity makes the
// net pool change a valid trade; violation throws InconsistentPassiveDelta).
// Active pools exchange the canonical transfer amounts directly, with any
// passive-facing residue routed through the agent. Steps are ordered greedily
// to minimize the borrow basket: whatever is executable with current holdings
// is emitted, and when everything stalls the cheapest missing amount joins
// the borrow basket.
ExecutionPlan plan(const Configuration& config, const RebalanceSolution& solution);

// Replays the plan step by step through core-model semantics, enforcing
// non-negative agent balances, pool feasibility, trade-output agreement, and
// zero residue after repay. Throws StepInfeasible (with the step index) or
// PlanMismatch. Returns the final configuration.
Configuration simulate(const Configuration& config, const ExecutionPlan& plan);

}  // namespace rebal
