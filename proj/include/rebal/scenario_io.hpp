#pragma once

// Scenario and plan (de)serialization. Amounts travel as decimal strings so
// files round-trip exactly; schema version "v1".

#include <string>

#include "rebal/core.hpp"
#include "rebal/planner.hpp"

namespace rebal {

// Shortest decimal string that parses back to exactly `x`.
std::string format_amount(double x);

// Throws ParseError on malformed input or failed validation.
Configuration parse_scenario(const std::string& json_text);
std::string serialize_scenario(const Configuration& config);

Configuration load_scenario(const std::string& path);
void save_scenario(const Configuration& config, const std::string& path);

ExecutionPlan parse_plan(const std::string& json_text);
std::string serialize_plan(const ExecutionPlan& plan);

ExecutionPlan load_plan(const std::string& path);
void save_plan(const ExecutionPlan& plan, const std::string& path);

}  // namespace rebal
