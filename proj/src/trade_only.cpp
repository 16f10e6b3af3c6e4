#include "rebal/trade_only.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rebal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double halton(int index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * (index % base);
        index /= base;
    }
    return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47};

// Each CFMM moves along its invariant level set, parameterized by one scalar:
//   constant product        (x1 e^t,       x2 e^-t)        log spot - 2t
//   weighted geometric mean (x1 e^{w2 t},  x2 e^{-w1 t})   log spot - t
//   linear                  (x1 + t,       x2 - (a/b) t)   log spot fixed
struct CurvePoint {
    double x1, x2;    // pools
    double dx1, dx2;  // derivatives wrt t
    double log_spot;
    double dlog_spot;
};

CurvePoint curve_point(const CfmmState& c, double t) {
    CurvePoint p{};
    switch (c.function.kind()) {
        case FnKind::ConstantProduct: {
            const double e = std::exp(t);
            p.x1 = c.pools[0] * e;
            p.x2 = c.pools[1] / e;
            p.dx1 = p.x1;
            p.dx2 = -p.x2;
            p.log_spot = std::log(c.pools[1] / c.pools[0]) - 2.0 * t;
            p.dlog_spot = -2.0;
            break;
        }
        case FnKind::WeightedGeometricMean: {
            const double w1 = c.function.param1(), w2 = c.function.param2();
            p.x1 = c.pools[0] * std::exp(w2 * t);
            p.x2 = c.pools[1] * std::exp(-w1 * t);
            p.dx1 = w2 * p.x1;
            p.dx2 = -w1 * p.x2;
            p.log_spot = std::log(w1 * p.x2 / (w2 * p.x1));
            p.dlog_spot = -1.0;
            break;
        }
        case FnKind::Linear: {
            const double a = c.function.param1(), b = c.function.param2();
            p.x1 = c.pools[0] + t;
            p.x2 = c.pools[1] - (a / b) * t;
            p.dx1 = 1.0;
            p.dx2 = -a / b;
            p.log_spot = std::log(a / b);
            p.dlog_spot = 0.0;
            break;
        }
    }
    return p;
}

struct Layout {
    std::vector<int> token_index;     // per cfmm: [a, b] token ids
    std::vector<int> phi_var;         // per token: variable index or -1 (root)
    std::vector<int> component_of;    // per token
    std::vector<int> roots;           // per component: root token
    std::size_t n = 0;                // cfmms
    std::size_t n_tokens = 0;
    std::size_t dim = 0;              // n + free phi count
};

Layout make_layout(const Configuration& config) {
    Layout lay;
    lay.n = config.cfmms.size();
    lay.n_tokens = config.tokens.size();
    std::map<TokenId, int> index;
    for (std::size_t t = 0; t < lay.n_tokens; ++t)
        index[config.tokens[t]] = static_cast<int>(t);

    lay.token_index.resize(2 * lay.n);
    std::vector<std::vector<int>> adj(lay.n_tokens);
    for (std::size_t i = 0; i < lay.n; ++i) {
        const int a = index.at(config.cfmms[i].pool_tokens[0]);
        const int b = index.at(config.cfmms[i].pool_tokens[1]);
        lay.token_index[2 * i] = a;
        lay.token_index[2 * i + 1] = b;
        adj[a].push_back(b);
        adj[b].push_back(a);
    }

    lay.component_of.assign(lay.n_tokens, -1);
    for (std::size_t t = 0; t < lay.n_tokens; ++t) {
        if (lay.component_of[t] >= 0) continue;
        const int id = static_cast<int>(lay.roots.size());
        std::vector<int> members;
        std::vector<int> stack{static_cast<int>(t)};
        lay.component_of[t] = id;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            members.push_back(u);
            for (int v : adj[u]) {
                if (lay.component_of[v] < 0) {
                    lay.component_of[v] = id;
                    stack.push_back(v);
                }
            }
        }
        int root = members[0];
        for (int u : members)
            if (config.tokens[u].symbol < config.tokens[root].symbol) root = u;
        lay.roots.push_back(root);
    }

    lay.phi_var.assign(lay.n_tokens, -1);
    std::size_t var = lay.n;
    std::vector<bool> is_root(lay.n_tokens, false);
    for (int r : lay.roots) is_root[r] = true;
    for (std::size_t t = 0; t < lay.n_tokens; ++t)
        if (!is_root[t]) lay.phi_var[t] = static_cast<int>(var++);
    lay.dim = var;
    return lay;
}

struct StartResult {
    bool feasible = false;
    double objective = kInf;
    double max_residual = kInf;
    Eigen::VectorXd z;
};

// One multi-start instance: augmented-Lagrangian penalty stages with
// Gauss-Newton inner steps, then a minimum-norm feasibility polish.
class TradeOnlySolver {
  public:
    TradeOnlySolver(const Configuration& config, const Layout& lay,
                    const TradeOnlyOptions& opts)
        : cfg_(config), lay_(lay), opts_(opts) {}

    StartResult run(const Eigen::VectorXd& z0) const {
        StartResult result;
        Eigen::VectorXd z = z0;
        if (!positive(z)) return result;

        Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<long>(lay_.n));
        double mu = opts_.mu0;
        for (int stage = 0; stage < opts_.penalty_stages; ++stage) {
            gauss_newton(z, lambda, mu);
            lambda += mu * consistency(z);
            mu *= opts_.mu_factor;
        }
        polish(z);

        const Eigen::VectorXd r = consistency(z);
        result.max_residual = r.lpNorm<Eigen::Infinity>();
        result.z = z;
        result.feasible = result.max_residual <= opts_.feas_tol && positive(z);
        if (result.feasible) {
            const Eigen::VectorXd s = slacks(z);
            result.objective = s.squaredNorm();
        }
        return result;
    }

    Eigen::VectorXd slacks(const Eigen::VectorXd& z) const {
        Eigen::VectorXd sigma(static_cast<long>(lay_.n_tokens));
        for (std::size_t t = 0; t < lay_.n_tokens; ++t) sigma(static_cast<long>(t)) = 0.0;
        for (std::size_t i = 0; i < lay_.n; ++i) {
            const auto p = curve_point(cfg_.cfmms[i], z(static_cast<long>(i)));
            sigma(lay_.token_index[2 * i]) += cfg_.cfmms[i].pools[0] - p.x1;
            sigma(lay_.token_index[2 * i + 1]) += cfg_.cfmms[i].pools[1] - p.x2;
        }
        return sigma;
    }

    Eigen::VectorXd consistency(const Eigen::VectorXd& z) const {
        Eigen::VectorXd r(static_cast<long>(lay_.n));
        for (std::size_t i = 0; i < lay_.n; ++i) {
            const auto p = curve_point(cfg_.cfmms[i], z(static_cast<long>(i)));
            r(static_cast<long>(i)) = p.log_spot - phi(z, lay_.token_index[2 * i]) +
                                      phi(z, lay_.token_index[2 * i + 1]);
        }
        return r;
    }

    double phi(const Eigen::VectorXd& z, int token) const {
        const int v = lay_.phi_var[token];
        return v < 0 ? 0.0 : z(v);
    }

    bool positive(const Eigen::VectorXd& z) const {
        for (std::size_t i = 0; i < lay_.n; ++i) {
            if (cfg_.cfmms[i].mode == Mode::Oracle) continue;
            const auto p = curve_point(cfg_.cfmms[i], z(static_cast<long>(i)));
            if (!(p.x1 > 0.0) || !(p.x2 > 0.0)) return false;
            if (!std::isfinite(p.x1) || !std::isfinite(p.x2)) return false;
        }
        return true;
    }

  private:
    // Stacked residual [sigma; sqrt(mu/2) (r + lambda/mu)] and its Jacobian.
    void residuals(const Eigen::VectorXd& z, const Eigen::VectorXd& lambda, double mu,
                   Eigen::VectorXd& rho, Eigen::MatrixXd& J) const {
        const long T = static_cast<long>(lay_.n_tokens);
        const long N = static_cast<long>(lay_.n);
        rho.setZero(T + N);
        J.setZero(T + N, static_cast<long>(lay_.dim));

        rho.head(T) = slacks(z);
        for (std::size_t i = 0; i < lay_.n; ++i) {
            const auto p = curve_point(cfg_.cfmms[i], z(static_cast<long>(i)));
            J(lay_.token_index[2 * i], static_cast<long>(i)) -= p.dx1;
            J(lay_.token_index[2 * i + 1], static_cast<long>(i)) -= p.dx2;
        }

        const double scale = std::sqrt(0.5 * mu);
        const Eigen::VectorXd r = consistency(z);
        for (std::size_t i = 0; i < lay_.n; ++i) {
            const long row = T + static_cast<long>(i);
            rho(row) = scale * (r(static_cast<long>(i)) + lambda(static_cast<long>(i)) / mu);
            const auto p = curve_point(cfg_.cfmms[i], z(static_cast<long>(i)));
            J(row, static_cast<long>(i)) = scale * p.dlog_spot;
            const int va = lay_.phi_var[lay_.token_index[2 * i]];
            const int vb = lay_.phi_var[lay_.token_index[2 * i + 1]];
            if (va >= 0) J(row, va) -= scale;
            if (vb >= 0) J(row, vb) += scale;
        }
    }

    void gauss_newton(Eigen::VectorXd& z, const Eigen::VectorXd& lambda, double mu) const {
        Eigen::VectorXd rho;
        Eigen::MatrixXd J;
        for (int it = 0; it < 80; ++it) {
            residuals(z, lambda, mu, rho, J);
            const Eigen::VectorXd grad = J.transpose() * rho;
            if (grad.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, rho.norm())) break;

            Eigen::MatrixXd JtJ = J.transpose() * J;
            JtJ.diagonal().array() += 1e-10 * std::max(1.0, JtJ.diagonal().maxCoeff());
            const Eigen::VectorXd dir = JtJ.ldlt().solve(-grad);
            if (!(grad.dot(dir) < 0.0)) break;

            const double f0 = rho.squaredNorm();
            double alpha = 1.0;
            bool accepted = false;
            for (int bt = 0; bt < 50; ++bt) {
                const Eigen::VectorXd trial = z + alpha * dir;
                if (positive(trial)) {
                    Eigen::VectorXd rho_t;
                    Eigen::MatrixXd J_t;
                    residuals(trial, lambda, mu, rho_t, J_t);
                    if (rho_t.squaredNorm() <= f0 + 1e-4 * alpha * grad.dot(dir)) {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
        }
    }

    // Drive the consistency equalities to machine precision with least-change
    // Gauss-Newton steps; the objective moves only O(residual).
    void polish(Eigen::VectorXd& z) const {
        for (int it = 0; it < 40; ++it) {
            const Eigen::VectorXd r = consistency(z);
            if (r.lpNorm<Eigen::Infinity>() <= 1e-13) break;

            Eigen::MatrixXd Jr =
                Eigen::MatrixXd::Zero(static_cast<long>(lay_.n), static_cast<long>(lay_.dim));
            for (std::size_t i = 0; i < lay_.n; ++i) {
                const auto p = curve_point(cfg_.cfmms[i], z(static_cast<long>(i)));
                Jr(static_cast<long>(i), static_cast<long>(i)) = p.dlog_spot;
                const int va = lay_.phi_var[lay_.token_index[2 * i]];
                const int vb = lay_.phi_var[lay_.token_index[2 * i + 1]];
                if (va >= 0) Jr(static_cast<long>(i), va) -= 1.0;
                if (vb >= 0) Jr(static_cast<long>(i), vb) += 1.0;
            }
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Jr);
            const Eigen::VectorXd dir = cod.solve(-r);
            double alpha = 1.0;
            const double f0 = r.squaredNorm();
            bool accepted = false;
            for (int bt = 0; bt < 40; ++bt) {
                const Eigen::VectorXd trial = z + alpha * dir;
                if (positive(trial) &&
                    consistency(trial).squaredNorm() < f0) {
                    z = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
        }
    }

    const Configuration& cfg_;
    const Layout& lay_;
    const TradeOnlyOptions& opts_;
};

}  // namespace

TradeOnlySolution solve_trade_only(const Configuration& config,
                                   const TradeOnlyOptions& opts) {
    validate(config);
    if (config.cfmms.empty()) throw ValidationError("no CFMMs to protect");
    const Layout lay = make_layout(config);
    TradeOnlySolver solver(config, lay, opts);

    // Start 0 is the identity; the rest spread over trade-space by a Halton
    // sequence. Linear CFMMs get token-unit steps scaled to stay interior.
    const int n_starts = std::max(1, opts.starts);
    std::vector<Eigen::VectorXd> starts(static_cast<std::size_t>(n_starts));
    for (int s = 0; s < n_starts; ++s) {
        Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<long>(lay.dim));
        if (s > 0) {
            for (std::size_t i = 0; i < lay.n; ++i) {
                const int base = kPrimes[i % (sizeof(kPrimes) / sizeof(kPrimes[0]))];
                const double u = 2.0 * halton(s, base) - 1.0;
                const auto& c = config.cfmms[i];
                if (c.function.kind() == FnKind::Linear) {
                    const double span =
                        0.5 * std::min(c.pools[0],
                                       c.pools[1] * c.function.param2() / c.function.param1());
                    z(static_cast<long>(i)) = u * span;
                } else {
                    z(static_cast<long>(i)) = 1.5 * u;
                }
            }
        }
        // Valuation guess: propagate spot rates at the start point over a
        // spanning tree of the token graph.
        std::vector<double> phi(lay.n_tokens, 0.0);
        std::vector<bool> seen(lay.n_tokens, false);
        for (int root : lay.roots) seen[root] = true;
        bool grew = true;
        while (grew) {
            grew = false;
            for (std::size_t i = 0; i < lay.n; ++i) {
                const int a = lay.token_index[2 * i];
                const int b = lay.token_index[2 * i + 1];
                if (seen[a] == seen[b]) continue;
                const auto p = curve_point(config.cfmms[i], z(static_cast<long>(i)));
                if (seen[a]) {
                    phi[b] = phi[a] - p.log_spot;
                    seen[b] = true;
                } else {
                    phi[a] = phi[b] + p.log_spot;
                    seen[a] = true;
                }
                grew = true;
            }
        }
        for (std::size_t t = 0; t < lay.n_tokens; ++t)
            if (lay.phi_var[t] >= 0) z(lay.phi_var[t]) = phi[t];
        starts[static_cast<std::size_t>(s)] = std::move(z);
    }

    std::vector<StartResult> results(starts.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (opts.parallel)
#endif
    for (long s = 0; s < static_cast<long>(starts.size()); ++s)
        results[static_cast<std::size_t>(s)] = solver.run(starts[static_cast<std::size_t>(s)]);

    int best = -1;
    for (std::size_t s = 0; s < results.size(); ++s) {
        if (!results[s].feasible) continue;
        if (best < 0 || results[s].objective <
                            results[static_cast<std::size_t>(best)].objective - 1e-15)
            best = static_cast<int>(s);
    }
    if (best < 0)
        throw NoFeasiblePoint("no start satisfied the consistency equalities");

    const auto& win = results[static_cast<std::size_t>(best)];
    TradeOnlySolution sol;
    sol.objective = win.objective;
    sol.start_index = best;
    sol.max_residual = win.max_residual;
    sol.final_pools.resize(lay.n);
    for (std::size_t i = 0; i < lay.n; ++i) {
        const auto p = curve_point(config.cfmms[i], win.z(static_cast<long>(i)));
        sol.final_pools[i] = {p.x1, p.x2};
    }
    const Eigen::VectorXd sigma = solver.slacks(win.z);
    for (std::size_t t = 0; t < lay.n_tokens; ++t)
        sol.sigma[config.tokens[t]] = sigma(static_cast<long>(t));
    for (std::size_t t = 0; t < lay.n_tokens; ++t)
        sol.valuation.values[config.tokens[t]] =
            std::exp(solver.phi(win.z, static_cast<int>(t)));
    return sol;
}

}  // namespace rebal
