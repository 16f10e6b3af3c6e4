#include "rebal/arbitrage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rebal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Directed exchange-rate edge between token indices.
struct GraphEdge {
    int from;
    int to;
    double weight;  // -log(marginal rate from -> to)
    std::size_t cfmm;
    int input_pool;
};

struct RateGraph {
    std::vector<GraphEdge> edges;
    std::vector<std::vector<int>> components;  // token indices, each sorted
};

RateGraph build_rate_graph(const Configuration& config, bool fee_aware) {
    std::map<TokenId, int> index;
    for (std::size_t t = 0; t < config.tokens.size(); ++t)
        index[config.tokens[t]] = static_cast<int>(t);

    RateGraph g;
    const int n_tokens = static_cast<int>(config.tokens.size());
    std::vector<std::vector<int>> adj(n_tokens);
    for (std::size_t i = 0; i < config.cfmms.size(); ++i) {
        const auto& c = config.cfmms[i];
        const double spot = spot_price(c);
        const double gamma = fee_aware ? c.fee : 1.0;
        const int a = index.at(c.pool_tokens[0]);
        const int b = index.at(c.pool_tokens[1]);
        g.edges.push_back({a, b, -std::log(gamma * spot), i, 0});
        g.edges.push_back({b, a, -std::log(gamma / spot), i, 1});
        adj[a].push_back(b);
        adj[b].push_back(a);
    }

    std::vector<int> comp(n_tokens, -1);
    for (int t = 0; t < n_tokens; ++t) {
        if (comp[t] >= 0) continue;
        const int id = static_cast<int>(g.components.size());
        g.components.emplace_back();
        std::vector<int> stack{t};
        comp[t] = id;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            g.components[id].push_back(u);
            for (int v : adj[u]) {
                if (comp[v] < 0) {
                    comp[v] = id;
                    stack.push_back(v);
                }
            }
        }
        std::sort(g.components[id].begin(), g.components[id].end());
    }
    return g;
}

struct CandidateCycle {
    std::vector<int> edge_ids;  // into RateGraph::edges
    double mean = kInf;
    double total = 0.0;
};

// Scans a walk (node sequence plus the edge taken at each step) for repeated
// nodes and returns the best enclosed cycle by mean weight.
CandidateCycle best_cycle_on_walk(const RateGraph& g, const std::vector<int>& nodes,
                                  const std::vector<int>& edge_ids) {
    CandidateCycle best;
    std::map<int, std::size_t> last_pos;
    last_pos[nodes[0]] = 0;
    for (std::size_t p = 1; p < nodes.size(); ++p) {
        auto it = last_pos.find(nodes[p]);
        if (it != last_pos.end()) {
            CandidateCycle cand;
            cand.edge_ids.assign(edge_ids.begin() + static_cast<long>(it->second),
                                 edge_ids.begin() + static_cast<long>(p));
            cand.total = 0.0;
            for (int e : cand.edge_ids) cand.total += g.edges[e].weight;
            cand.mean = cand.total / static_cast<double>(cand.edge_ids.size());
            if (cand.mean < best.mean) best = cand;
        }
        last_pos[nodes[p]] = p;
    }
    return best;
}

// Karp's minimum mean cycle on one component. Returns the mean and, when a
// cycle below `tol_mean` exists, the cycle itself.
struct ComponentScan {
    double min_mean = kInf;
    CandidateCycle cycle;
};

ComponentScan scan_component(const RateGraph& g, const std::vector<int>& nodes,
                             double tol_mean) {
    ComponentScan out;
    const int V = static_cast<int>(nodes.size());
    std::map<int, int> local;
    for (int i = 0; i < V; ++i) local[nodes[i]] = i;

    std::vector<int> eids;
    for (std::size_t e = 0; e < g.edges.size(); ++e)
        if (local.count(g.edges[e].from)) eids.push_back(static_cast<int>(e));
    if (eids.empty()) return out;

    // d[k][v]: minimum weight of a k-edge walk from the root to v.
    std::vector<std::vector<double>> d(static_cast<std::size_t>(V) + 1,
                                       std::vector<double>(V, kInf));
    std::vector<std::vector<int>> pred(static_cast<std::size_t>(V) + 1,
                                       std::vector<int>(V, -1));
    d[0][0] = 0.0;  // nodes are sorted; nodes[0] is the component root
    for (int k = 1; k <= V; ++k) {
        for (int e : eids) {
            const auto& ed = g.edges[e];
            const int u = local.at(ed.from);
            const int v = local.at(ed.to);
            if (d[k - 1][u] == kInf) continue;
            const double w = d[k - 1][u] + ed.weight;
            if (w < d[k][v]) {
                d[k][v] = w;
                pred[k][v] = e;
            }
        }
    }

    int best_v = -1;
    for (int v = 0; v < V; ++v) {
        if (d[V][v] == kInf) continue;
        double worst = -kInf;
        for (int k = 0; k < V; ++k) {
            if (d[k][v] == kInf) continue;
            worst = std::max(worst, (d[V][v] - d[k][v]) / static_cast<double>(V - k));
        }
        if (worst > -kInf && worst < out.min_mean) {
            out.min_mean = worst;
            best_v = v;
        }
    }
    if (best_v < 0 || out.min_mean >= tol_mean) return out;

    // Walk the predecessor levels back from best_v; some cycle on this walk
    // attains the minimum mean.
    std::vector<int> walk_nodes(static_cast<std::size_t>(V) + 1);
    std::vector<int> walk_edges(V);
    int cur = best_v;
    walk_nodes[V] = cur;
    for (int k = V; k >= 1; --k) {
        const int e = pred[k][cur];
        walk_edges[k - 1] = e;
        cur = local.at(g.edges[e].from);
        walk_nodes[k - 1] = cur;
    }
    // Re-express in global node ids for the scanner.
    for (auto& n : walk_nodes) n = nodes[n];
    out.cycle = best_cycle_on_walk(g, walk_nodes, walk_edges);
    if (out.cycle.mean < tol_mean) return out;

    // Fallback: Bellman-Ford on weights shifted by -tol_mean; any negative
    // cycle it finds has mean below tol_mean under the original weights.
    std::vector<double> dist(V, 0.0);
    std::vector<int> pe(V, -1);
    int touched = -1;
    for (int round = 0; round <= V; ++round) {
        touched = -1;
        for (int e : eids) {
            const auto& ed = g.edges[e];
            const int u = local.at(ed.from);
            const int v = local.at(ed.to);
            const double w = dist[u] + (ed.weight - tol_mean);
            if (w < dist[v] - 1e-15) {
                dist[v] = w;
                pe[v] = e;
                touched = v;
            }
        }
        if (touched < 0) break;
    }
    if (touched >= 0) {
        std::vector<int> wn, we;
        int v = touched;
        wn.push_back(v);
        for (int s = 0; s <= V && pe[v] >= 0; ++s) {
            const int e = pe[v];
            we.push_back(e);
            v = local.at(g.edges[e].from);
            wn.push_back(v);
        }
        std::reverse(wn.begin(), wn.end());
        std::reverse(we.begin(), we.end());
        for (auto& n : wn) n = nodes[n];
        const auto cand = best_cycle_on_walk(g, wn, we);
        if (cand.mean < out.cycle.mean) out.cycle = cand;
    }
    if (out.cycle.mean >= tol_mean)
        throw SolverDiverged("negative-cycle extraction failed");
    return out;
}

}  // namespace

std::size_t smallest_liquidity_policy(const Configuration& config, const TokenId&,
                                      const std::vector<std::size_t>& candidates) {
    std::size_t best = candidates.front();
    double best_liq = liquidity(config.cfmms[best]);
    for (std::size_t idx : candidates) {
        const double l = liquidity(config.cfmms[idx]);
        if (l < best_liq) {
            best = idx;
            best_liq = l;
        }
    }
    return best;
}

ArbitrageCertificate detect(const Configuration& config, const DetectOptions& opts) {
    validate(config);
    const RateGraph g = build_rate_graph(config, opts.fee_aware);

    ComponentScan best;
    for (const auto& nodes : g.components) {
        const auto scan = scan_component(g, nodes, -opts.tol);
        if (scan.cycle.mean < best.cycle.mean) best = scan;
        best.min_mean = std::min(best.min_mean, scan.min_mean);
    }

    ArbitrageCertificate cert;
    if (best.cycle.mean < -opts.tol) {
        cert.prone = true;
        cert.log_gain = -best.cycle.total;
        for (int e : best.cycle.edge_ids)
            cert.cycle.steps.push_back({g.edges[e].cfmm, g.edges[e].input_pool});
        return cert;
    }

    // Arbitrage-free: propagate log-valuations over a spanning tree of each
    // component, rooted at its lexicographically-first token, then check every
    // CFMM against the potentials. The valuation always uses undiscounted spot
    // rates; in fee-aware mode the strict consistency check is skipped because
    // classification tolerates rate gaps inside the fee band.
    const RateGraph spot_graph =
        opts.fee_aware ? build_rate_graph(config, false) : g;
    const int n_tokens = static_cast<int>(config.tokens.size());
    std::vector<std::vector<std::pair<int, double>>> out_edges(n_tokens);
    for (const auto& e : spot_graph.edges) out_edges[e.from].push_back({e.to, e.weight});

    std::vector<double> phi(n_tokens, 0.0);
    for (const auto& nodes : spot_graph.components) {
        // Numeraire: the lexicographically-first token of the component.
        int root = nodes[0];
        for (int t : nodes)
            if (config.tokens[t].symbol < config.tokens[root].symbol) root = t;
        std::vector<bool> seen(n_tokens, false);
        std::vector<int> queue{root};
        seen[root] = true;
        phi[root] = 0.0;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int u = queue[qi];
            for (const auto& [v, w] : out_edges[u]) {
                if (seen[v]) continue;
                seen[v] = true;
                phi[v] = phi[u] + w;
                queue.push_back(v);
            }
        }
        if (!opts.fee_aware) {
            const double bound =
                opts.tol * static_cast<double>(nodes.size() + 1) + 1e-12;
            for (const auto& e : spot_graph.edges) {
                if (!seen[e.from]) continue;
                if (std::abs(phi[e.from] + e.weight - phi[e.to]) > bound)
                    throw SolverDiverged("potentials inconsistent with edge rates");
            }
        }
    }
    for (int t = 0; t < n_tokens; ++t)
        cert.valuation.values[config.tokens[t]] = std::exp(phi[t]);
    return cert;
}

double cycle_profit(const Configuration& config, const Cycle& cycle, double amount_in) {
    std::vector<CfmmState> states;
    states.reserve(cycle.steps.size());
    for (const auto& s : cycle.steps) states.push_back(config.cfmms[s.cfmm]);

    double held = amount_in;
    try {
        for (std::size_t h = 0; h < cycle.steps.size(); ++h) {
            const auto r = apply_trade(states[h], held, cycle.steps[h].input_pool);
            states[h] = r.new_state;
            held = r.amount_out;
        }
    } catch (const PoolExhausted&) {
        return -kInf;
    }
    return held - amount_in;
}

CycleArbitrage optimal_cycle_arbitrage(const Configuration& config, const Cycle& cycle,
                                       const TokenId& start_token) {
    if (cycle.steps.empty()) throw ValidationError("empty cycle");
    if (cycle.input_token(config, 0) != start_token)
        throw ValidationError("cycle does not start at the requested token");
    for (std::size_t h = 0; h < cycle.steps.size(); ++h) {
        const auto next = (h + 1) % cycle.steps.size();
        if (cycle.output_token(config, h) != cycle.input_token(config, next))
            throw ValidationError("cycle hops do not chain");
    }

    const double scale = config.cfmms[cycle.steps[0].cfmm].pools[cycle.steps[0].input_pool];

    // Log-spaced scan to bracket the maximum, then golden-section refinement.
    const int lo_exp = -40, hi_exp = 40;
    double best_a = 0.0, best_p = 0.0;
    int best_j = lo_exp - 1;
    for (int j = lo_exp; j <= hi_exp; ++j) {
        const double a = scale * std::pow(2.0, j);
        const double p = cycle_profit(config, cycle, a);
        if (p > best_p) {
            best_p = p;
            best_a = a;
            best_j = j;
        }
        if (p == -kInf && best_j >= lo_exp) break;  // exhaustion beyond the optimum
    }
    if (!(best_p > 0.0)) throw NotProfitable("no input amount yields positive profit");

    double lo = scale * std::pow(2.0, best_j - 1);
    double hi = (best_j < hi_exp) ? scale * std::pow(2.0, best_j + 1) : best_a * 2.0;
    const double invphi = 0.6180339887498949;
    double x1 = hi - invphi * (hi - lo);
    double x2 = lo + invphi * (hi - lo);
    double f1 = cycle_profit(config, cycle, x1);
    double f2 = cycle_profit(config, cycle, x2);
    for (int it = 0; it < 300 && (hi - lo) > 1e-12 * std::max(1.0, hi); ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = cycle_profit(config, cycle, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = cycle_profit(config, cycle, x1);
        }
    }
    const double a_star = (f1 > f2) ? x1 : x2;
    const double p_star = std::max(f1, f2);
    if (!(p_star > 0.0)) throw NotProfitable("no input amount yields positive profit");
    return {a_star, p_star};
}

Configuration arbitrage_to_rebalancing(const Configuration& config,
                                       const std::vector<TradeStep>& trades,
                                       DepositPolicy policy) {
    if (!policy) policy = smallest_liquidity_policy;

    Configuration work = config;
    Basket balance;
    double flow_scale = 1.0;
    for (const auto& t : trades) {
        const auto& cfmm = work.cfmms.at(t.cfmm);
        const TokenId token_in = cfmm.pool_tokens[t.input_pool];
        const TokenId token_out = cfmm.pool_tokens[1 - t.input_pool];
        const auto r = apply_trade(cfmm, t.amount_in, t.input_pool);
        work.cfmms[t.cfmm] = r.new_state;
        balance[token_in] -= t.amount_in;
        balance[token_out] += r.amount_out;
        flow_scale = std::max({flow_scale, t.amount_in, r.amount_out});
    }

    // The loan nets out: the final balance vector is the profit vector.
    const double eps = 1e-11 * flow_scale;
    bool any_positive = false;
    for (const auto& [token, amount] : balance) {
        if (amount < -eps)
            throw NotAnArbitrage("trade sequence loses " + token.symbol);
        if (amount > eps) any_positive = true;
    }
    if (!any_positive) throw NotAnArbitrage("trade sequence yields no profit");

    for (const auto& token : work.tokens) {
        const auto it = balance.find(token);
        if (it == balance.end() || it->second <= eps) continue;
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < work.cfmms.size(); ++i)
            if (work.cfmms[i].pool_of(token) >= 0) candidates.push_back(i);
        if (candidates.empty())
            throw NotAnArbitrage("no pool trades profit token " + token.symbol);
        const std::size_t target = policy(work, token, candidates);
        work.cfmms[target].pools[work.cfmms[target].pool_of(token)] += it->second;
    }
    return work;
}

}  // namespace rebal
