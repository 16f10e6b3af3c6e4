#pragma once

// Domain model for networks of two-pool constant-function market makers:
// trading functions, CFMM states, configurations, trades, transfer edges,
// and direct pool-to-pool rebalancings.

#include <array>
#include <compare>
#include <map>
#include <string>
#include <vector>

#include "rebal/errors.hpp"

namespace rebal {

struct TokenId {
    std::string symbol;

    auto operator<=>(const TokenId&) const = default;
};

// =============================================================================
// Trading functions
// =============================================================================

enum class FnKind {
    ConstantProduct,        // F = x1 * x2
    WeightedGeometricMean,  // F = x1^w1 * x2^w2, w1+w2 = 1
    Linear,                 // F = a*x1 + b*x2
};

// Strictly increasing, log-concave trading function of two pool balances.
// Value objects; all evaluation is pure.
class TradingFunction {
  public:
    static TradingFunction constant_product();
    static TradingFunction weighted_geometric_mean(double w1, double w2);
    static TradingFunction linear(double a, double b);

    FnKind kind() const { return kind_; }
    double param1() const { return p1_; }  // w1 or a (unused for CP)
    double param2() const { return p2_; }  // w2 or b

    double value(double x1, double x2) const;
    std::array<double, 2> gradient(double x1, double x2) const;

    // log F and its derivatives; the solver works entirely in log space.
    double log_value(double x1, double x2) const;
    std::array<double, 2> log_gradient(double x1, double x2) const;
    // Hessian of log F as (h11, h12, h22).
    std::array<double, 3> log_hessian(double x1, double x2) const;

    bool operator==(const TradingFunction&) const = default;

  private:
    TradingFunction(FnKind k, double p1, double p2) : kind_(k), p1_(p1), p2_(p2) {}
    FnKind kind_;
    double p1_;
    double p2_;
};

// =============================================================================
// CFMM states and configurations
// =============================================================================

enum class Mode { Active, Passive, Oracle };

struct CfmmState {
    std::array<double, 2> pools{};
    std::array<TokenId, 2> pool_tokens{};
    TradingFunction function = TradingFunction::constant_product();
    double fee = 1.0;  // gamma in (0,1]; 1 = no fee
    Mode mode = Mode::Active;

    // Pool index (0/1) holding `token`, or -1.
    int pool_of(const TokenId& token) const {
        if (pool_tokens[0] == token) return 0;
        if (pool_tokens[1] == token) return 1;
        return -1;
    }
};

struct Configuration {
    std::vector<CfmmState> cfmms;
    std::vector<TokenId> tokens;  // token universe
};

// Throws ValidationError when an invariant fails: empty/duplicate token
// symbols, pool tokens outside the universe, non-positive pools on non-oracle
// CFMMs, fees outside (0,1], oracle CFMMs without a linear trading function.
void validate(const Configuration& config);

// =============================================================================
// Transfer edges and rebalancings
// =============================================================================

// Pools (i,j) and (k,l) hold the same token type; canonical form has i < k.
struct Edge {
    std::size_t i;
    int j;  // 0 or 1
    std::size_t k;
    int l;

    auto operator<=>(const Edge&) const = default;
};

struct EdgeSet {
    std::vector<Edge> edges;  // sorted, no duplicates
};

// Signed transfer amounts keyed by edge; positive moves tokens (i,j) -> (k,l).
struct Rebalancing {
    std::map<Edge, double> deltas;
};

// Signed per-token amounts (an agent's holdings, a profit vector, ...).
using Basket = std::map<TokenId, double>;

// =============================================================================
// Operations
// =============================================================================

// F(x1, x2) at the CFMM's current pools.
double liquidity(const CfmmState& cfmm);

// Price of one unit of token 1 in units of token 2: the gradient ratio
// (dF/dx1)/(dF/dx2) at the current pools. Throws UndefinedGradient if either
// partial is non-positive.
double spot_price(const CfmmState& cfmm);

struct TradeResult {
    double amount_out;
    CfmmState new_state;
    double fee_paid;  // (1-gamma)*amount_in, in input-token units
};

// Executes a fee-discounted trade: the receiving pool gains gamma*amount_in
// and amount_out is drawn from the other pool so the invariant is preserved,
// F(x_in + gamma*in, x_out - out) = F(x_in, x_out). The fee remainder is
// reported separately, not credited to any pool. Constant-product and linear
// functions use closed forms; other kinds are solved by bracketed bisection
// with a Newton polish to 1e-12 relative.
// `input_pool` is the index (0/1) of the pool that receives the input.
TradeResult apply_trade(const CfmmState& cfmm, double amount_in, int input_pool);

// All canonical quadruples (i,j,k,l), i < k, whose pools hold the same token.
// With restrict_to_active, both endpoint CFMMs must be Active.
EdgeSet build_edges(const Configuration& config, bool restrict_to_active = false);

// Applies a rebalancing and returns the new configuration (input untouched).
// Throws InfeasibleRebalancing if every delta is zero or a non-oracle pool is
// driven to <= 0. Per-token totals are preserved exactly (checked to 1e-9).
Configuration apply_rebalancing(const Configuration& config, const Rebalancing& reb);

}  // namespace rebal
