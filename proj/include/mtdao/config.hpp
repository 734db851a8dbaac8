// SPDX-License-Identifier: Apache-2.0
//
// JSON configuration documents for the command-line tool. Parsing is strict:
// unknown keys are rejected and every error message names the offending key.
// The to_json functions emit the fully resolved form, defaults included.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtdao/cost_model.hpp"
#include "mtdao/simulation.hpp"
#include "mtdao/theory.hpp"

namespace mtdao {

using Json = nlohmann::ordered_json;

/// Cluster settings shared by every seed. The seed feeds the gradient noise, the
/// sync coins, the heterogeneity offsets and the MI coordinate sample; the problem
/// instance keeps its own seed so all runs see the same objective.
struct ExperimentConfig {
  ClusterConfig cluster;
  double noise_sigma = 0.0;
  std::vector<std::uint64_t> seeds{0};

  ClusterConfig for_seed(std::uint64_t seed) const;
};

ExperimentConfig parse_experiment(const Json& doc);
Json to_json(const ExperimentConfig& config);

TheoryParams parse_theory(const Json& doc);
Json to_json(const TheoryParams& params);

struct CostConfig {
  CostParams params;
  std::vector<double> bandwidths_gbps;
  std::vector<Strategy> strategies;
};

CostConfig parse_cost(const Json& doc);
Json to_json(const CostConfig& config);

/// Reads and parses a JSON file; syntax errors come back as Error.
Json load_json(const std::string& path);

}  // namespace mtdao
