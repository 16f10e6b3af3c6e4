#include "rebal/planner.hpp"

#include <algorithm>
#include <cmath>

namespace rebal {

namespace {

double rel_gap(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct Candidate {
    PlanStep step;
    bool emitted = false;
};

// Amount the step needs from the agent (0 for pool-funded transfers).
double agent_need(const PlanStep& s, TokenId& token_out) {
    if (const auto* tr = std::get_if<TransferStep>(&s)) {
        if (!tr->from.has_value()) {
            token_out = tr->token;
            return tr->amount;
        }
        return 0.0;
    }
    const auto& trade = std::get<PlanTrade>(s);
    token_out = trade.token_in;
    return trade.amount_in;
}

}  // namespace

ExecutionPlan plan(const Configuration& config, const RebalanceSolution& solution) {
    validate(config);
    const std::size_t n = config.cfmms.size();
    if (solution.final_pools.size() != n)
        throw ValidationError("solution does not match the configuration");

    auto scale_eps = [](double x) { return 1e-11 * std::max(1.0, std::abs(x)); };

    // Net pool changes.
    std::vector<std::array<double, 2>> delta(n);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j)
            delta[i][j] = solution.final_pools[i][j] - config.cfmms[i].pools[j];

    std::vector<Candidate> cands;

    // Passive CFMMs: the net change must be one invariant-preserving trade.
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = config.cfmms[i];
        if (c.mode == Mode::Active) continue;
        const double eps0 = scale_eps(c.pools[0]);
        const double eps1 = scale_eps(c.pools[1]);
        if (std::abs(delta[i][0]) <= eps0 && std::abs(delta[i][1]) <= eps1) continue;

        int in_pool;
        if (delta[i][0] > eps0 && delta[i][1] < -eps1) in_pool = 0;
        else if (delta[i][1] > eps1 && delta[i][0] < -eps0) in_pool = 1;
        else
            throw InconsistentPassiveDelta("CFMM " + std::to_string(i) +
                                           ": net change is not a trade");
        const int out_pool = 1 - in_pool;
        const double amount_in = delta[i][in_pool] / c.fee;
        const double expected_out = -delta[i][out_pool];
        const double before = c.function.log_value(c.pools[0], c.pools[1]);
        const double after = c.function.log_value(solution.final_pools[i][0],
                                                  solution.final_pools[i][1]);
        if (std::abs(after - before) > 1e-7)
            throw InconsistentPassiveDelta("CFMM " + std::to_string(i) +
                                           ": net change does not preserve liquidity");
        cands.push_back({PlanTrade{i, c.pool_tokens[in_pool], amount_in,
                                   c.pool_tokens[out_pool], expected_out,
                                   (1.0 - c.fee) * amount_in}});
    }

    // Active-active edges become direct pool-to-pool transfers.
    std::vector<std::array<double, 2>> direct_effect(n, {0.0, 0.0});
    for (std::size_t e = 0; e < solution.edges.edges.size(); ++e) {
        const Edge& ed = solution.edges.edges[e];
        if (e >= solution.deltas.size()) break;
        const double d = solution.deltas[e];
        if (config.cfmms[ed.i].mode != Mode::Active ||
            config.cfmms[ed.k].mode != Mode::Active)
            continue;
        if (std::abs(d) <= scale_eps(config.cfmms[ed.i].pools[ed.j])) continue;
        PoolRef src{ed.i, ed.j}, dst{ed.k, ed.l};
        if (d < 0.0) std::swap(src, dst);
        cands.push_back({TransferStep{src, dst, config.cfmms[ed.i].pool_tokens[ed.j],
                                      std::abs(d)}});
        direct_effect[ed.i][ed.j] -= d;
        direct_effect[ed.k][ed.l] += d;
    }

    // Whatever the direct transfers do not explain flows through the agent.
    std::vector<Candidate> deposits;
    for (std::size_t i = 0; i < n; ++i) {
        if (config.cfmms[i].mode != Mode::Active) continue;
        for (int j = 0; j < 2; ++j) {
            const double r = delta[i][j] - direct_effect[i][j];
            if (std::abs(r) <= scale_eps(config.cfmms[i].pools[j])) continue;
            const TokenId token = config.cfmms[i].pool_tokens[j];
            if (r < 0.0)
                cands.push_back({TransferStep{PoolRef{i, j}, std::nullopt, token, -r}});
            else
                deposits.push_back({TransferStep{std::nullopt, PoolRef{i, j}, token, r}});
        }
    }
    // Withdrawals and transfers were appended first; trades sit between them
    // in candidate order already, deposits go last.
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        auto rank = [](const Candidate& c) {
            if (const auto* tr = std::get_if<TransferStep>(&c.step)) {
                if (!tr->to.has_value()) return 0;  // pool -> agent
                return 1;                           // pool -> pool
            }
            return 2;  // trade
        };
        return rank(a) < rank(b);
    });
    for (auto& d : deposits) cands.push_back(std::move(d));

    // Greedy emission.
    ExecutionPlan out;
    out.expected_final = solution.final_pools;
    std::vector<std::array<double, 2>> pool_bal(n);
    for (std::size_t i = 0; i < n; ++i) pool_bal[i] = config.cfmms[i].pools;
    Basket agent;
    std::size_t remaining = cands.size();

    auto executable = [&](const PlanStep& s) {
        const double slack = 1e-9;
        if (const auto* tr = std::get_if<TransferStep>(&s)) {
            if (tr->from.has_value()) {
                const auto& p = *tr->from;
                const bool oracle = config.cfmms[p.cfmm].mode == Mode::Oracle;
                return oracle || pool_bal[p.cfmm][p.pool] >= tr->amount - slack;
            }
            return agent[tr->token] >= tr->amount - slack;
        }
        const auto& trade = std::get<PlanTrade>(s);
        return agent[trade.token_in] >= trade.amount_in - slack;
    };
    auto apply = [&](const PlanStep& s) {
        if (const auto* tr = std::get_if<TransferStep>(&s)) {
            if (tr->from.has_value())
                pool_bal[tr->from->cfmm][tr->from->pool] -= tr->amount;
            else
                agent[tr->token] -= tr->amount;
            if (tr->to.has_value())
                pool_bal[tr->to->cfmm][tr->to->pool] += tr->amount;
            else
                agent[tr->token] += tr->amount;
            return;
        }
        const auto& trade = std::get<PlanTrade>(s);
        agent[trade.token_in] -= trade.amount_in;
        agent[trade.token_out] += trade.expected_out;
        const auto& c = config.cfmms[trade.cfmm];
        pool_bal[trade.cfmm][c.pool_of(trade.token_in)] += c.fee * trade.amount_in;
        pool_bal[trade.cfmm][c.pool_of(trade.token_out)] -= trade.expected_out;
    };

    while (remaining > 0) {
        bool progress = false;
        for (auto& cand : cands) {
            if (cand.emitted || !executable(cand.step)) continue;
            apply(cand.step);
            out.steps.push_back(cand.step);
            cand.emitted = true;
            --remaining;
            progress = true;
        }
        if (progress) continue;

        // Stuck: grow the borrow basket by the cheapest missing amount.
        double best_short = 0.0;
        TokenId best_token;
        bool found = false;
        for (const auto& cand : cands) {
            if (cand.emitted) continue;
            TokenId token;
            const double need = agent_need(cand.step, token);
            if (need <= 0.0) continue;  // pool-funded; waiting on inflows
            const double shortfall = need - agent[token];
            if (shortfall <= 0.0) continue;
            if (!found || shortfall < best_short) {
                found = true;
                best_short = shortfall;
                best_token = token;
            }
        }
        if (!found)
            throw SolverDiverged("planner stalled on pool-funded transfers");
        out.borrow[best_token] += best_short;
        agent[best_token] += best_short;
    }

    out.repay = out.borrow;
    for (const auto& [token, amount] : agent) {
        const double residue = amount - (out.borrow.count(token) ? out.borrow.at(token) : 0.0);
        if (std::abs(residue) > 1e-9)
            throw SolverDiverged("plan is not self-funding: residue in " + token.symbol);
    }
    return out;
}

Configuration simulate(const Configuration& config, const ExecutionPlan& plan) {
    validate(config);
    Configuration work = config;
    Basket agent = plan.borrow;
    for (const auto& [token, amount] : agent)
        if (amount < 0.0) throw PlanMismatch("negative borrow of " + token.symbol);

    const double slack = 1e-9;
    for (std::size_t idx = 0; idx < plan.steps.size(); ++idx) {
        const auto& s = plan.steps[idx];
        if (const auto* tr = std::get_if<TransferStep>(&s)) {
            if (!(tr->amount > 0.0))
                throw StepInfeasible(idx, "non-positive transfer amount");
            if (tr->from.has_value()) {
                auto& c = work.cfmms.at(tr->from->cfmm);
                if (c.pool_tokens.at(tr->from->pool) != tr->token)
                    throw StepInfeasible(idx, "transfer token does not match source pool");
                if (c.mode != Mode::Oracle &&
                    c.pools[tr->from->pool] < tr->amount - slack)
                    throw StepInfeasible(idx, "source pool exhausted");
                c.pools[tr->from->pool] -= tr->amount;
            } else {
                if (agent[tr->token] < tr->amount - slack)
                    throw StepInfeasible(idx, "agent balance below transfer amount");
                agent[tr->token] -= tr->amount;
            }
            if (tr->to.has_value()) {
                auto& c = work.cfmms.at(tr->to->cfmm);
                if (c.pool_tokens.at(tr->to->pool) != tr->token)
                    throw StepInfeasible(idx, "transfer token does not match target pool");
                c.pools[tr->to->pool] += tr->amount;
            } else {
                agent[tr->token] += tr->amount;
            }
        } else {
            const auto& trade = std::get<PlanTrade>(s);
            auto& c = work.cfmms.at(trade.cfmm);
            const int in_pool = c.pool_of(trade.token_in);
            if (in_pool < 0 || c.pool_of(trade.token_out) != 1 - in_pool)
                throw StepInfeasible(idx, "trade tokens do not match the CFMM");
            if (agent[trade.token_in] < trade.amount_in - slack)
                throw StepInfeasible(idx, "agent balance below trade input");
            TradeResult r{};
            try {
                r = apply_trade(c, trade.amount_in, in_pool);
            } catch (const Error& e) {
                throw StepInfeasible(idx, e.what());
            }
            if (rel_gap(r.amount_out, trade.expected_out) > 1e-7)
                throw StepInfeasible(idx, "trade output disagrees with the plan");
            agent[trade.token_in] -= trade.amount_in;
            agent[trade.token_out] += r.amount_out;
            c = r.new_state;
        }
    }

    for (const auto& [token, amount] : plan.repay) {
        agent[token] -= amount;
        if (agent[token] < -slack)
            throw PlanMismatch("cannot repay borrow of " + token.symbol);
    }
    for (const auto& [token, amount] : agent)
        if (std::abs(amount) > 1e-9)
            throw PlanMismatch("agent residue in " + token.symbol +
                               " after repay: " + std::to_string(amount));

    if (!plan.expected_final.empty()) {
        if (plan.expected_final.size() != work.cfmms.size())
            throw PlanMismatch("expected final pool count mismatch");
        for (std::size_t i = 0; i < work.cfmms.size(); ++i)
            for (int j = 0; j < 2; ++j)
                if (rel_gap(work.cfmms[i].pools[j], plan.expected_final[i][j]) > 1e-7)
                    throw PlanMismatch("final pools disagree with the plan at CFMM " +
                                       std::to_string(i));
    }
    return work;
}

}  // namespace rebal
