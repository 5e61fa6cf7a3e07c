#include "atlasdiffeo/certificate.hpp"

#include "atlasdiffeo/errors.hpp"

namespace atlasdiffeo {

double Check::margin() const {
  if (relation == ">" || relation == ">=") return lhs - rhs;
  if (relation == "==") return -std::abs(lhs - rhs);
  return rhs - lhs;
}

nlohmann::json Check::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  if (!chart.empty()) j["chart"] = chart;
  j["lhs"] = lhs;
  j["relation"] = relation;
  j["rhs"] = rhs;
  j["margin"] = margin();
  j["holds"] = holds;
  return j;
}

bool Certificate::require(const std::string& name, const std::string& chart, double lhs,
                          const std::string& relation, double rhs) {
  bool ok = false;
  if (relation == "<") ok = lhs < rhs;
  else if (relation == "<=") ok = lhs <= rhs;
  else if (relation == ">") ok = lhs > rhs;
  else if (relation == ">=") ok = lhs >= rhs;
  else if (relation == "==") ok = lhs == rhs;
  else throw Error(ErrorCode::InvalidArgument, "unknown relation '" + relation + "'");
  checks.push_back({name, chart, lhs, relation, rhs, ok});
  pass = pass && ok;
  return ok;
}

void Certificate::merge(const Certificate& other, const std::string& prefix) {
  for (Check c : other.checks) {
    c.name = prefix + c.name;
    checks.push_back(c);
  }
  pass = pass && other.pass;
}

std::string Certificate::first_failure() const {
  for (const auto& c : checks)
    if (!c.holds) return c.name;
  return {};
}

nlohmann::json Certificate::to_json() const {
  nlohmann::json j;
  j["criterion"] = criterion;
  j["pass"] = pass;
  j["resolution"] = resolution;
  j["safety_factor"] = safety_factor;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks) arr.push_back(c.to_json());
  j["checks"] = arr;
  const std::string f = first_failure();
  if (!f.empty()) j["failed_clause"] = f;
  if (!details.empty()) j["details"] = details;
  return j;
}

}  // namespace atlasdiffeo
