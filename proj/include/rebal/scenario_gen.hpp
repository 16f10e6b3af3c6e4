#pragma once

// Deterministic random CFMM-network scenarios for property tests, the
// acceptance corpus, and benchmarks.

#include <cstdint>

#include "rebal/core.hpp"

namespace rebal {

struct GenSpec {
    std::uint64_t seed = 1;
    std::size_t n_cfmms = 3;
    std::size_t n_tokens = 3;
    double pool_min = 0.1;  // log-uniform pool bounds
    double pool_max = 10.0;
    double active_fraction = 1.0;  // at least one CFMM stays active
    std::size_t oracle_count = 0;  // trailing CFMMs become mutually-consistent oracles
    double fee_min = 1.0;
    double fee_max = 1.0;
    bool ensure_connected = true;
    double weighted_fraction = 0.0;  // share of weighted-geometric-mean CFMMs
};

// Same spec, same configuration. Token pairs are sampled spanning-tree-first
// when connectivity is requested. Throws InfeasibleSpec when the counts make
// the request impossible (e.g. fewer CFMMs than tree edges).
Configuration generate(const GenSpec& spec);

}  // namespace rebal
