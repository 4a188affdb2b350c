#include "ebpolicy/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ebpolicy/errors.hpp"

namespace ebpolicy {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& section, std::set<std::string> allowed) {
  if (!j.is_object()) throw InputError("config: '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw InputError("config: unknown key '" + key + "' in '" + section + "'");
    }
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError("config: '" + section + "." + key + "' has the wrong type");
  }
}

double p_value(const json& v) {
  if (v.is_string()) return parse_p(v.get<std::string>());
  if (v.is_number()) {
    const double p = v.get<double>();
    if (!(p >= 1.0)) throw InputError("config: p must be at least 1 or \"inf\"");
    return p;
  }
  throw InputError("config: p must be a number or \"inf\"");
}

json p_json(double p) { return std::isinf(p) ? json("inf") : json(p); }

std::vector<double> p_list_value(const json& v) {
  std::vector<double> out;
  if (!v.is_array()) throw InputError("config: p_list must be an array");
  for (const auto& e : v) out.push_back(p_value(e));
  return out;
}

json p_list_json(const std::vector<double>& ps) {
  json a = json::array();
  for (double p : ps) a.push_back(p_json(p));
  return a;
}

}  // namespace

EbOptions RunConfig::eb_options(std::uint64_t seed) const {
  EbOptions o;
  o.moments = moments;
  o.grid_points = npmle.grid_points;
  o.padding = npmle.padding;
  o.npmle.tol = npmle.tol;
  o.npmle.max_iter = npmle.max_iter;
  o.npmle.restarts = npmle.restarts;
  o.npmle.kappa_check = npmle.kappa_check;
  o.npmle.accelerate = npmle.accelerate;
  o.npmle.seed = seed;
  return o;
}

PlannerConfig RunConfig::planner_config(const std::vector<std::string>& policy_ids, double p,
                                        double mu) const {
  PlannerConfig pc;
  pc.mu = mu;
  pc.p = p;
  pc.radius = planner.radius;
  pc.eta = planner.eta;
  if (pc.eta.size() > 1 && pc.eta.size() != policy_ids.size()) {
    throw InputError("config: planner.eta has " + std::to_string(pc.eta.size()) +
                     " entries for " + std::to_string(policy_ids.size()) + " policies");
  }
  if (!planner.frozen.empty()) {
    pc.frozen.assign(policy_ids.size(), false);
    for (const auto& id : planner.frozen) {
      const auto it = std::find(policy_ids.begin(), policy_ids.end(), id);
      if (it == policy_ids.end()) throw InputError("config: frozen policy '" + id + "' not found");
      pc.frozen[static_cast<std::size_t>(it - policy_ids.begin())] = true;
    }
  }
  pc.validate();
  return pc;
}

DgpFamily RunConfig::dgp_family() const {
  int part = 0;
  if (simulate.dgp == "corners") part = 1;
  if (simulate.dgp == "corners_shifted") part = 2;
  if (part == 0) throw InputError("config: unknown simulate.dgp '" + simulate.dgp + "'");
  SigmaLaw law = SigmaLaw::fixed;
  if (simulate.sigma_law == "heteroscedastic") {
    law = SigmaLaw::heteroscedastic;
  } else if (simulate.sigma_law != "fixed") {
    throw InputError("config: simulate.sigma_law must be 'fixed' or 'heteroscedastic'");
  }
  return [part, law](int J, std::uint64_t seed) {
    return corner_dgp(part, J, Mat2::Identity(), seed, law);
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  check_keys(j, "config",
             {"input", "output_dir", "planner", "npmle", "moments", "bootstrap", "simulate",
              "threads"});
  if (j.contains("input")) {
    const auto& s = j.at("input");
    check_keys(s, "input", {"dataset", "shrunk"});
    read(s, "dataset", c.input.dataset, "input");
    read(s, "shrunk", c.input.shrunk, "input");
  }
  read(j, "output_dir", c.output_dir, "config");
  read(j, "threads", c.threads, "config");
  if (c.threads < 1) throw InputError("config: threads must be at least 1");

  if (j.contains("planner")) {
    const auto& s = j.at("planner");
    check_keys(s, "planner", {"mu", "eta", "p", "radius", "frozen", "p_list", "mu_list"});
    read(s, "mu", c.planner.mu, "planner");
    if (s.contains("eta")) {
      const auto& e = s.at("eta");
      if (e.is_number()) {
        c.planner.eta = {e.get<double>()};
      } else {
        read(s, "eta", c.planner.eta, "planner");
      }
    }
    if (s.contains("p")) c.planner.p = p_value(s.at("p"));
    read(s, "radius", c.planner.radius, "planner");
    read(s, "frozen", c.planner.frozen, "planner");
    if (s.contains("p_list")) c.planner.p_list = p_list_value(s.at("p_list"));
    read(s, "mu_list", c.planner.mu_list, "planner");
  }
  if (j.contains("npmle")) {
    const auto& s = j.at("npmle");
    check_keys(s, "npmle",
               {"grid_points", "padding", "tol", "max_iter", "restarts", "kappa_check",
                "accelerate"});
    read(s, "grid_points", c.npmle.grid_points, "npmle");
    read(s, "padding", c.npmle.padding, "npmle");
    read(s, "tol", c.npmle.tol, "npmle");
    read(s, "max_iter", c.npmle.max_iter, "npmle");
    read(s, "restarts", c.npmle.restarts, "npmle");
    read(s, "kappa_check", c.npmle.kappa_check, "npmle");
    read(s, "accelerate", c.npmle.accelerate, "npmle");
  }
  if (j.contains("moments")) {
    const auto& s = j.at("moments");
    check_keys(s, "moments", {"eigen_floor", "variance_denominator"});
    read(s, "eigen_floor", c.moments.eigen_floor, "moments");
    if (c.moments.eigen_floor < 0.0) throw InputError("config: moments.eigen_floor must be >= 0");
    std::string denom = "population";
    read(s, "variance_denominator", denom, "moments");
    if (denom == "population") {
      c.moments.denominator = VarianceDenominator::population;
    } else if (denom == "unbiased") {
      c.moments.denominator = VarianceDenominator::unbiased;
    } else {
      throw InputError("config: moments.variance_denominator must be 'population' or 'unbiased'");
    }
  }
  if (j.contains("bootstrap")) {
    const auto& s = j.at("bootstrap");
    check_keys(s, "bootstrap", {"kappa", "replications", "seed"});
    read(s, "kappa", c.bootstrap.kappa, "bootstrap");
    read(s, "replications", c.bootstrap.replications, "bootstrap");
    read(s, "seed", c.bootstrap.seed, "bootstrap");
  }
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    check_keys(s, "simulate",
               {"dgp", "sigma_law", "J_list", "p_list", "pipelines", "replications", "seed"});
    read(s, "dgp", c.simulate.dgp, "simulate");
    read(s, "sigma_law", c.simulate.sigma_law, "simulate");
    read(s, "J_list", c.simulate.J_list, "simulate");
    if (s.contains("p_list")) c.simulate.p_list = p_list_value(s.at("p_list"));
    read(s, "pipelines", c.simulate.pipelines, "simulate");
    read(s, "replications", c.simulate.replications, "simulate");
    read(s, "seed", c.simulate.seed, "simulate");
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  return {
      {"input", {{"dataset", c.input.dataset}, {"shrunk", c.input.shrunk}}},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
      {"planner",
       {{"mu", c.planner.mu},
        {"eta", c.planner.eta},
        {"p", p_json(c.planner.p)},
        {"radius", c.planner.radius},
        {"frozen", c.planner.frozen},
        {"p_list", p_list_json(c.planner.p_list)},
        {"mu_list", c.planner.mu_list}}},
      {"npmle",
       {{"grid_points", c.npmle.grid_points},
        {"padding", c.npmle.padding},
        {"tol", c.npmle.tol},
        {"max_iter", c.npmle.max_iter},
        {"restarts", c.npmle.restarts},
        {"kappa_check", c.npmle.kappa_check},
        {"accelerate", c.npmle.accelerate}}},
      {"moments",
       {{"eigen_floor", c.moments.eigen_floor},
        {"variance_denominator", c.moments.denominator == VarianceDenominator::population
                                     ? "population"
                                     : "unbiased"}}},
      {"bootstrap",
       {{"kappa", c.bootstrap.kappa},
        {"replications", c.bootstrap.replications},
        {"seed", c.bootstrap.seed}}},
      {"simulate",
       {{"dgp", c.simulate.dgp},
        {"sigma_law", c.simulate.sigma_law},
        {"J_list", c.simulate.J_list},
        {"p_list", p_list_json(c.simulate.p_list)},
        {"pipelines", c.simulate.pipelines},
        {"replications", c.simulate.replications},
        {"seed", c.simulate.seed}}},
  };
}

}  // namespace ebpolicy
