#include "rebal/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rebal/arbitrage.hpp"
#include "rebal/planner.hpp"

namespace rebal {

namespace {

double rel_gap(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

SweepOutcome run_case(const GenSpec& spec, const SweepOptions& opts) {
    SweepOutcome out;
    out.seed = spec.seed;
    try {
        const Configuration config = generate(spec);

        const auto cert = detect(config, {.tol = opts.detect_tol});
        out.prone = cert.prone;
        out.log_gain = cert.log_gain;

        RebalanceProblem problem;
        problem.config = config;
        bool all_active = true;
        for (const auto& c : config.cfmms) all_active &= c.mode == Mode::Active;
        problem.mode = all_active ? SolveMode::Full : SolveMode::Restricted;
        out.restricted = !all_active;

        const auto sol = solve(problem);
        out.improvement = sol.improvement;
        out.kkt_residual = sol.kkt_residual;
        out.equivalence_ok = out.prone == (out.improvement > opts.improvement_tol);

        if (out.restricted) {
            const auto scope = objective_scope(problem);
            std::vector<char> active(config.cfmms.size(), 0);
            for (std::size_t i : scope) active[i] = 1;
            for (std::size_t i = 0; i < config.cfmms.size(); ++i) {
                if (active[i]) continue;
                const auto& c0 = config.cfmms[i];
                const double before = c0.function.log_value(c0.pools[0], c0.pools[1]);
                const double after = c0.function.log_value(sol.final_pools[i][0],
                                                           sol.final_pools[i][1]);
                out.passive_pinning = std::max(out.passive_pinning, std::abs(after - before));
            }
        }

        if (opts.run_plan) {
            const auto exec_plan = plan(config, sol);
            const auto replayed = simulate(config, exec_plan);
            for (std::size_t i = 0; i < config.cfmms.size(); ++i)
                for (int j = 0; j < 2; ++j)
                    out.plan_mismatch =
                        std::max(out.plan_mismatch,
                                 rel_gap(replayed.cfmms[i].pools[j], sol.final_pools[i][j]));
            out.plan_ok = out.plan_mismatch <= 1e-7;
        }

        if (opts.run_arbitrage_conversion && out.prone) {
            const TokenId start = cert.cycle.input_token(config, 0);
            const auto best = optimal_cycle_arbitrage(config, cert.cycle, start);
            std::vector<TradeStep> trades;
            double held = best.input_amount;
            Configuration walk = config;
            for (const auto& s : cert.cycle.steps) {
                trades.push_back({s.cfmm, held, s.input_pool});
                const auto r = apply_trade(walk.cfmms[s.cfmm], held, s.input_pool);
                walk.cfmms[s.cfmm] = r.new_state;
                held = r.amount_out;
            }
            const auto improved = arbitrage_to_rebalancing(config, trades);
            out.conversion_min_gain = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < config.cfmms.size(); ++i) {
                const double before = liquidity(config.cfmms[i]);
                const double after = liquidity(improved.cfmms[i]);
                const double gain = (after - before) / before;
                out.conversion_min_gain = std::min(out.conversion_min_gain, gain);
                out.conversion_max_gain = std::max(out.conversion_max_gain, gain);
            }
            out.conversion_ok =
                out.conversion_min_gain >= -1e-10 && out.conversion_max_gain > 1e-12;
        }
    } catch (const Error& e) {
        out.error = e.what();
        out.equivalence_ok = false;
    }
    return out;
}

std::vector<SweepOutcome> run_sweep_serial(const std::vector<GenSpec>& specs,
                                           const SweepOptions& opts) {
    std::vector<SweepOutcome> outcomes(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) outcomes[i] = run_case(specs[i], opts);
    return outcomes;
}

std::vector<SweepOutcome> run_sweep_parallel(const std::vector<GenSpec>& specs,
                                             const SweepOptions& opts) {
    std::vector<SweepOutcome> outcomes(specs.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 0; i < static_cast<long>(specs.size()); ++i)
        outcomes[static_cast<std::size_t>(i)] =
            run_case(specs[static_cast<std::size_t>(i)], opts);
    return outcomes;
}

}  // namespace rebal
