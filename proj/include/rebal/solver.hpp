#pragma once

// Liquidity rebalancing as convex optimization: maximize the weighted sum of
// log-liquidities over the objective scope, subject to pool positivity,
// per-CFMM liquidity non-reduction, and the linear conservation equations
// tying final pools to edge transfers (gamma-discounted inflows for passive
// CFMMs when fees are present). Solved by a primal log-barrier Newton method
// on the transfer variables; deterministic by construction.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rebal/core.hpp"

namespace rebal {

enum class SolveMode { Full, Restricted };

struct RebalanceProblem {
    Configuration config;
    std::vector<double> weights;  // per-CFMM, > 0; empty means all 1
    SolveMode mode = SolveMode::Full;
    // Restricted mode: objective scope. Empty means "derive from CFMM modes"
    // (every Mode::Active member). Oracle CFMMs may never be active.
    std::vector<std::size_t> active_override;
    // Represent oracle pools as given (possibly negative) instead of
    // substituting large synthetic reserves.
    bool oracle_negative_pools = false;
};

struct SolverOptions {
    double tol = 1e-8;        // KKT stationarity and complementarity target
    int max_newton = 200;     // Newton iterations per barrier stage
    int max_stages = 12;      // barrier continuation stages
    double mu_factor = 0.2;   // geometric barrier decrease
    // Optional interior starting transfers (defaults to zero).
    std::vector<double> initial_delta;
    // Optional per-stage trace: (stage, mu, newton iterations, grad norm).
    std::function<void(int, double, int, double)> trace;
};

enum class SolveStatus { Optimal, NoImprovement };

struct RebalanceSolution {
    SolveStatus status = SolveStatus::Optimal;
    std::vector<std::array<double, 2>> final_pools;
    EdgeSet edges;
    std::vector<double> deltas;  // canonical minimum-norm transfers, per edge
    double objective_initial = 0.0;
    double objective_value = 0.0;
    double improvement = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;

    Rebalancing rebalancing() const {
        Rebalancing r;
        for (std::size_t e = 0; e < edges.edges.size(); ++e)
            if (deltas[e] != 0.0) r.deltas[edges.edges[e]] = deltas[e];
        return r;
    }
};

// Objective scope of a problem: all CFMMs in Full mode, the active set in
// Restricted mode. Throws ValidationError on an invalid problem (Full mode
// with passive members, empty active set, oracle in the active set, ...).
std::vector<std::size_t> objective_scope(const RebalanceProblem& problem);

// Solves the rebalancing program. Returns a NoImprovement solution (zero
// deltas, unchanged pools) when the configuration is already optimal within
// tolerance. Throws SolverDiverged when the KKT residual cannot be driven
// below tol within the stage/iteration budget.
RebalanceSolution solve(const RebalanceProblem& problem, const SolverOptions& opts = {});

// Sum of w_i * log F_i over `scope`. Throws NonPositiveLiquidity.
double objective_value(const Configuration& config, const std::vector<double>& weights,
                       const std::vector<std::size_t>& scope);

struct CheckResult {
    std::string name;
    bool pass;
    double residual;
};

struct VerificationReport {
    std::vector<CheckResult> checks;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

// Cheap participant-side validation of a proposed solution: liquidity
// non-reduction, conservation of the transfer system, pool positivity,
// passive-equality in restricted mode, and arbitrage-freeness of the final
// configuration. Failures are reported, never thrown.
VerificationReport verify(const RebalanceProblem& problem, const RebalanceSolution& solution,
                          double tol = 1e-6);

}  // namespace rebal
