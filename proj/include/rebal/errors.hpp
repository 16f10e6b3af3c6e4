#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rebal {

// Base class for all domain errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
    using Error::Error;
};

// spot_price: a partial derivative is non-positive at the current state.
struct UndefinedGradient : Error {
    using Error::Error;
};

// apply_trade: the requested output would drain the output pool.
struct PoolExhausted : Error {
    using Error::Error;
};

// apply_rebalancing: all-zero delta map or a non-oracle pool driven to <= 0.
struct InfeasibleRebalancing : Error {
    using Error::Error;
};

struct NotProfitable : Error {
    using Error::Error;
};

struct NotAnArbitrage : Error {
    using Error::Error;
};

struct NonPositiveLiquidity : Error {
    using Error::Error;
};

struct SolverDiverged : Error {
    using Error::Error;
};

struct NoFeasiblePoint : Error {
    using Error::Error;
};

struct InfeasibleSpec : Error {
    using Error::Error;
};

struct InconsistentPassiveDelta : Error {
    using Error::Error;
};

// Plan replay failed at a specific step.
struct StepInfeasible : Error {
    StepInfeasible(std::size_t index, const std::string& what)
        : Error("step " + std::to_string(index) + ": " + what), step_index(index) {}
    std::size_t step_index;
};

// Plan replayed cleanly but the outcome disagrees with the plan's expectations.
struct PlanMismatch : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

}  // namespace rebal
