#pragma once

#include "json.hpp"

#include <string>
#include <vector>

namespace atlasdiffeo {

// One evaluated inequality `lhs relation rhs`.
struct Check {
  std::string name;
  std::string chart;
  double lhs = 0.0;
  std::string relation = "<";
  double rhs = 0.0;
  bool holds = true;

  double margin() const;
  nlohmann::json to_json() const;
};

struct Certificate {
  std::string criterion;
  bool pass = true;
  int resolution = 0;
  double safety_factor = 1.0;
  std::vector<Check> checks;
  nlohmann::json details = nlohmann::json::object();

  // Evaluates and records `lhs relation rhs`; returns whether it holds.
  bool require(const std::string& name, const std::string& chart, double lhs, const std::string& relation,
               double rhs);
  void merge(const Certificate& other, const std::string& prefix = "");
  // Name of the first failing check, empty if all pass.
  std::string first_failure() const;
  nlohmann::json to_json() const;
};

}  // namespace atlasdiffeo
