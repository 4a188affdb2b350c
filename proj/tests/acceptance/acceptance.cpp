// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "ebpolicy/bootstrap.hpp"
#include "ebpolicy/cli.hpp"
#include "ebpolicy/npmle.hpp"
#include "ebpolicy/planner.hpp"
#include "ebpolicy/posterior.hpp"
#include "ebpolicy/simulate.hpp"
#include "support.hpp"

using namespace ebpolicy;
using namespace ebpolicy::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = true;
  std::string detail;
};

int threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Independent reference norm.
double ref_norm(const Eigen::VectorXd& x, double p) {
  if (std::isinf(p)) return x.cwiseAbs().maxCoeff();
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += std::pow(std::abs(x(i)), p);
  return std::pow(s, 1.0 / p);
}

double conjugate(double p) {
  if (p == 1.0) return kInfinity;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

Outcome tweedie_equivalence() {
  CounterRng rng(101, Stream::test, 1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int atoms = 1 + static_cast<int>(rng.uniform() * 12.0);
    const DiscretePrior prior = random_prior(rng, atoms, 2.5);
    const Mat2 psi = random_spd(rng, 0.05, 4.0);
    const Vec2 z = random_vec(rng, 3.0);
    const Vec2 a = tweedie_mean(z, psi, prior);
    const Vec2 b = posterior_mean_residual(z, psi, prior);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10, "1000 instances, max componentwise difference " + fmt("%.3g", worst)};
}

Outcome dual_norm_solver() {
  CounterRng rng(202, Stream::test, 2);
  const std::vector<double> ps = {1.0, 1.5, 2.0, 3.0, kInfinity};
  const int points = 100000;
  double worst_identity = 0.0;
  double worst_margin = kInfinity;
  double worst_feasibility = 0.0;
  for (double p : ps) {
    for (int J : {3, 10, 50}) {
      const double radius = 1.5;
      Eigen::MatrixXd feasible(points, J);
      for (int r = 0; r < points; ++r) {
        Eigen::VectorXd x(J);
        for (int j = 0; j < J; ++j) {
          x(j) = std::isinf(p) && r % 2 ? 2.0 * rng.uniform() - 1.0 : rng.normal();
        }
        const double scale = (r % 4 == 3 ? rng.uniform() : 1.0) * radius / ref_norm(x, p);
        feasible.row(r) = (x * scale).transpose();
      }
      Eigen::MatrixXd grads(J, 100);
      for (int k = 0; k < 100; ++k) {
        for (int j = 0; j < J; ++j) grads(j, k) = (k % 5 == 0 ? 10.0 : 1.0) * rng.normal();
      }
      const Eigen::MatrixXd values = feasible * grads;
      PlannerConfig cfg;
      cfg.p = p;
      cfg.radius = radius;
      for (int k = 0; k < 100; ++k) {
        const Eigen::VectorXd g = grads.col(k);
        const SpendingRule rule = solve_ball(g, cfg);
        const double closed = radius * ref_norm(g, conjugate(p));
        worst_identity = std::max({worst_identity, std::abs(rule.objective - closed),
                                   std::abs(g.dot(rule.v) - closed)});
        worst_feasibility = std::max(worst_feasibility, ref_norm(rule.v, p) - radius);
        worst_margin = std::min(worst_margin, rule.objective - values.col(k).maxCoeff());
      }
    }
  }
  const bool ok = worst_identity <= 1e-9 && worst_margin >= -1e-9 && worst_feasibility <= 1e-9;
  return {ok, "15 cases x 100 gradients; |objective - radius*||g||_q| max " +
                  fmt("%.3g", worst_identity) + ", min margin over 1e5 feasible points " +
                  fmt("%.4g", worst_margin) + ", norm excess " + fmt("%.3g", worst_feasibility)};
}

Outcome coupled_bootstrap() {
  Outcome out;
  std::ostringstream detail;
  for (double kappa : {1.0, 0.25}) {
    const int n = 100000;
    CounterRng rng(3030, Stream::test, static_cast<std::uint64_t>(kappa * 100));
    std::vector<PolicyRecord> recs;
    std::vector<Vec2> theta;
    for (int j = 0; j < n; ++j) {
      theta.push_back(random_vec(rng, 2.0));
      recs.push_back(record("p" + std::to_string(j), 0,
                            theta.back() + Vec2(rng.normal(), rng.normal()), Mat2::Identity()));
    }
    const CoupledDraws d = couple(recs, kappa, 17);
    Mat2 c11 = Mat2::Zero(), c22 = Mat2::Zero(), c12 = Mat2::Zero();
    for (int j = 0; j < n; ++j) {
      const Vec2 a = d.y1[j] - theta[j];
      const Vec2 b = d.y2[j] - theta[j];
      c11 += a * a.transpose();
      c22 += b * b.transpose();
      c12 += a * b.transpose();
    }
    c11 /= n;
    c22 /= n;
    c12 /= n;
    double rel = 0.0;
    for (int i = 0; i < 2; ++i) {
      rel = std::max(rel, std::abs(c11(i, i) / (1.0 + kappa) - 1.0));
      rel = std::max(rel, std::abs(c22(i, i) / (1.0 + 1.0 / kappa) - 1.0));
    }
    const double se = std::sqrt((1.0 + kappa) * (1.0 + 1.0 / kappa) / n);
    const double cross = c12.cwiseAbs().maxCoeff() / se;

    // y1-adaptive rule: plug-in L2 rule on the training draw.
    const int J = 10;
    const int reps = n / J;
    PlannerConfig cfg;
    cfg.p = 2.0;
    cfg.mu = 0.5;
    std::vector<Vec2> th(J);
    for (auto& t : th) t = random_vec(rng, 1.0);
    const RuleFn rule = [&cfg](std::span<const Vec2> y1, std::span<const Mat2>) {
      Eigen::VectorXd g(static_cast<Eigen::Index>(y1.size()));
      for (std::size_t j = 0; j < y1.size(); ++j) g(j) = y1[j](0) - cfg.mu * y1[j](1);
      return solve_ball(g, cfg).v;
    };
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      std::vector<PolicyRecord> rs;
      for (int j = 0; j < J; ++j) {
        rs.push_back(record("q" + std::to_string(j), 0, th[j] + Vec2(rng.normal(), rng.normal()),
                            Mat2::Identity()));
      }
      const CoupledDraws dr = couple(rs, kappa, 3031, static_cast<std::uint64_t>(r));
      const double est = evaluate_rule(rule, dr, rs, cfg);
      std::vector<Mat2> s1(J, (1.0 + kappa) * Mat2::Identity());
      const Eigen::VectorXd v = rule(dr.y1, s1);
      double truth = 0.0;
      for (int j = 0; j < J; ++j) truth += v(j) * (th[j](0) - cfg.mu * th[j](1));
      sum += est - truth;
      sum2 += (est - truth) * (est - truth);
    }
    const double mean = sum / reps;
    const double sd = std::sqrt((sum2 / reps - mean * mean) * reps / (reps - 1.0));
    const double bias_se = std::abs(mean) / (sd / std::sqrt(static_cast<double>(reps)));

    const bool ok = rel <= 0.02 && cross <= 3.0 && bias_se <= 3.0;
    out.ok = out.ok && ok;
    detail << "kappa=" << kappa << ": variance multiplier rel err " << fmt("%.4f", rel)
           << ", max |cross-cov| " << fmt("%.2f", cross) << " SE, rule bias "
           << fmt("%.2f", bias_se) << " SE";
    if (kappa == 1.0) detail << "; ";
  }
  out.detail = detail.str();
  return out;
}

std::vector<StandardizedSample> draw_samples(CounterRng& rng, int J,
                                             const std::vector<Vec2>& atoms, bool hetero) {
  std::vector<StandardizedSample> s(J);
  for (int j = 0; j < J; ++j) {
    const Vec2 tau = atoms[static_cast<std::size_t>(rng.uniform() * atoms.size())];
    s[j].psi_hat = hetero ? random_spd(rng, 0.25, 2.0) : Mat2::Identity();
    Eigen::SelfAdjointEigenSolver<Mat2> es(s[j].psi_hat);
    const Mat2 root = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
                      es.eigenvectors().transpose();
    s[j].z_hat = tau + root * Vec2(rng.normal(), rng.normal());
  }
  return s;
}

Outcome npmle_sanity() {
  Outcome out;
  std::ostringstream detail;
  CounterRng rng(404, Stream::test, 4);
  const std::vector<Vec2> corners = {Vec2(-1, -1), Vec2(-1, 1), Vec2(1, -1), Vec2(1, 1)};
  const std::vector<Vec2> pair = {Vec2(-2, 0), Vec2(2, 0)};

  struct Case {
    const char* name;
    std::vector<Vec2> atoms;
    bool hetero;
  };
  int plain_drops = 0, traced_drops = 0, kappa_misses = 0;
  double worst_gap_ratio = 0.0;
  for (const Case& c : {Case{"corners", corners, false}, Case{"corners-hetero", corners, true},
                        Case{"two-atom", pair, false}}) {
    const auto s = draw_samples(rng, 500, c.atoms, c.hetero);
    const GridSpec grid = build_grid(s, 40, 0.05);
    const auto L = likelihood_matrix(s, grid.atoms);

    // Plain EM map, checked after every iteration.
    Eigen::VectorXd w = Eigen::VectorXd::Constant(L.cols(), 1.0 / static_cast<double>(L.cols()));
    double ll = log_likelihood(L, w);
    for (int it = 0; it < 2000; ++it) {
      w = em_step(L, w);
      const double next = log_likelihood(L, w);
      if (next < ll - 1e-12 * std::max(1.0, std::abs(ll))) ++plain_drops;
      ll = next;
    }

    NpmleOptions o;
    o.kappa_check = true;
    o.restarts = 5;
    o.trace_stride = 1;
    o.seed = 7;
    const NpmleFit fit = fit_npmle(L, grid.atoms, o);
    const auto& tr = fit.diagnostics.trace;
    for (std::size_t k = 1; k < tr.size(); ++k) {
      if (tr[k].second < tr[k - 1].second - 1e-12 * std::max(1.0, std::abs(tr[k - 1].second))) {
        ++traced_drops;
      }
    }
    if (!fit.diagnostics.monotone) ++traced_drops;
    const double kappa = kappa_tolerance(s.size());
    const double gap = *fit.diagnostics.best_restart_log_likelihood - fit.diagnostics.log_likelihood;
    worst_gap_ratio = std::max(worst_gap_ratio, gap / kappa);
    if (!(gap <= kappa) || !fit.diagnostics.within_kappa.value_or(false)) ++kappa_misses;

    if (std::string(c.name) == "two-atom") {
      detail << "two-atom mass within 0.5:";
      for (const Vec2& a : pair) {
        double mass = 0.0;
        for (std::size_t k = 0; k < fit.prior.atoms.size(); ++k) {
          if ((fit.prior.atoms[k] - a).norm() <= 0.5) mass += fit.prior.weights[k];
        }
        detail << " " << fmt("%.3f", mass);
        if (mass < 0.4) out.ok = false;
      }
      detail << "; ";
    }
  }
  out.ok = out.ok && plain_drops == 0 && traced_drops == 0 && kappa_misses == 0;
  detail << "log-likelihood drops plain/accelerated " << plain_drops << "/" << traced_drops
         << ", worst restart gap " << fmt("%.3f", worst_gap_ratio) << " kappa_J";
  out.detail = detail.str();
  return out;
}

struct RateRuns {
  std::map<int, RegretReport> plug, eb;
};

RateRuns run_rates() {
  const std::vector<int> Js = {100, 400, 1600};
  const std::vector<double> ps = {2.0};
  const std::vector<GradientSource> pipes = {GradientSource::plug_in,
                                             GradientSource::empirical_bayes};
  const DgpFamily family = [](int J, std::uint64_t seed) {
    return corner_dgp(1, J, Mat2::Identity(), seed);
  };
  SimOptions so;
  so.threads = threads();
  const RateTable table = rate_table(family, Js, ps, pipes, 20, 2024, so);
  RateRuns r;
  for (const auto& row : table.rows) {
    (row.pipeline == GradientSource::plug_in ? r.plug : r.eb)[row.J] = row;
  }
  return r;
}

Outcome plugin_failure(const RateRuns& r) {
  constexpr double kFloor = 0.166;
  Outcome out;
  std::ostringstream detail;
  detail << "plug-in median gap";
  for (const auto& [J, rep] : r.plug) {
    detail << " J=" << J << ":" << fmt("%.4f", rep.median_gap());
    if (!(rep.median_gap() > kFloor) || rep.failed > 0) out.ok = false;
  }
  const double first = r.plug.at(100).median_gap();
  const double last = r.plug.at(1600).median_gap();
  if (!(last >= 0.5 * first)) out.ok = false;
  detail << " (floor " << kFloor << ", ratio 1600/100 " << fmt("%.3f", last / first) << ")";
  out.detail = detail.str();
  return out;
}

Outcome eb_convergence(const RateRuns& r) {
  Outcome out;
  std::ostringstream detail;
  double prev_gap = kInfinity, prev_mse = kInfinity;
  detail << "EB median gap/mse";
  for (const auto& [J, rep] : r.eb) {
    detail << " J=" << J << ":" << fmt("%.4f", rep.median_gap()) << "/"
           << fmt("%.4f", rep.median_mse());
    if (!(rep.median_gap() < prev_gap) || !(rep.median_mse() < prev_mse) || rep.failed > 0) {
      out.ok = false;
    }
    prev_gap = rep.median_gap();
    prev_mse = rep.median_mse();
  }
  detail << "; rule regret EB/plug-in";
  for (int J : {400, 1600}) {
    const double e = r.eb.at(J).rule_regret, p = r.plug.at(J).rule_regret;
    detail << " J=" << J << ":" << fmt("%.4f", e) << "/" << fmt("%.4f", p);
    if (!(e <= p)) out.ok = false;
  }
  out.detail = detail.str();
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_quiet(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << e.str();
  return code;
}

fs::path scratch(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("ebpolicy_acceptance_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Outcome sign_pattern() {
  const fs::path dir = scratch("signs");
  const json cfg = {{"input", {{"dataset", std::string(EBPOLICY_TEST_DATA) + "/synthetic68.csv"}}},
                    {"planner", {{"p_list", {2, "inf"}}, {"mu_list", {0.5, 3}}}},
                    {"bootstrap", {{"replications", 1000}, {"kappa", 0.25}}}};
  std::ofstream(dir / "config.json") << cfg.dump(2);
  int good = 0;
  double eb_min = kInfinity, plug_max = -kInfinity;
  std::ostringstream bad;
  for (int seed = 1; seed <= 20; ++seed) {
    const fs::path out = dir / ("seed" + std::to_string(seed));
    if (run_quiet({"evaluate", "-c", (dir / "config.json").string(), "--seed",
                   std::to_string(seed), "--out", out.string(), "--threads",
                   std::to_string(threads())}) != 0) {
      bad << " seed " << seed << " errored";
      continue;
    }
    const json w = json::parse(slurp(out / "welfare.json"));
    bool all = w.size() == 8;
    for (std::size_t i = 0; i + 1 < w.size(); i += 2) {
      const double eb = w[i]["mean"], plug = w[i + 1]["mean"];
      eb_min = std::min(eb_min, eb);
      plug_max = std::max(plug_max, plug);
      all = all && w[i]["pipeline"] == "empirical_bayes" && w[i + 1]["pipeline"] == "plug_in" &&
            eb > 0.0 && plug < 0.0;
    }
    if (all) ++good;
  }
  fs::remove_all(dir);
  return {good >= 19, std::to_string(good) + "/20 seeds with EB > 0 > plug-in in all four (p, mu)" +
                          "; min EB " + fmt("%.3f", eb_min) + ", max plug-in " +
                          fmt("%.3f", plug_max) + bad.str()};
}

Outcome determinism() {
  const fs::path dir = scratch("determinism");
  const json cfg = {{"input", {{"dataset", std::string(EBPOLICY_TEST_DATA) + "/small.csv"}}},
                    {"planner", {{"mu", 0.5}, {"p_list", {1.5, "inf"}}, {"mu_list", {0.5, 3}}}},
                    {"npmle", {{"grid_points", 20}}},
                    {"bootstrap", {{"replications", 40}, {"seed", 5}}},
                    {"simulate", {{"J_list", {30, 60}},
                                  {"p_list", {2, "inf"}},
                                  {"replications", 3},
                                  {"dgp", "corners_shifted"},
                                  {"sigma_law", "heteroscedastic"}}}};
  const std::string config = (dir / "config.json").string();
  std::ofstream(config) << cfg.dump(2);

  // Runs every command into `out`; returns file name -> bytes.
  auto run_all = [&](const std::string& tag, int nthreads) {
    const fs::path out = dir / tag;
    std::map<std::string, std::string> files;
    const std::vector<std::string> common = {"-c", config, "--seed", "11", "--out", out.string(),
                                             "--threads", std::to_string(nthreads)};
    for (const char* cmd : {"validate", "shrink", "solve", "evaluate", "simulate"}) {
      std::vector<std::string> args = {cmd};
      args.insert(args.end(), common.begin(), common.end());
      std::string stdout_text;
      const int code = run_quiet(args, &stdout_text);
      const std::string dir_text = out.string();
      for (auto pos = stdout_text.find(dir_text); pos != std::string::npos;
           pos = stdout_text.find(dir_text)) {
        stdout_text.replace(pos, dir_text.size(), "<out>");
      }
      files[std::string(cmd) + ".stdout"] = std::to_string(code) + "\n" + stdout_text;
    }
    for (const auto& e : fs::directory_iterator(out)) {
      files[e.path().filename().string()] = slurp(e.path());
    }
    return files;
  };

  const auto a = run_all("a", 1);
  const auto b = run_all("b", 1);
  const auto c = run_all("c", 4);
  fs::remove_all(dir);
  std::vector<std::string> differing;
  for (const auto& [name, bytes] : a) {
    const auto ib = b.find(name), ic = c.find(name);
    if (ib == b.end() || ic == c.end() || ib->second != bytes || ic->second != bytes) {
      differing.push_back(name);
    }
  }
  const bool all_ok = a.at("validate.stdout")[0] == '0' && a.at("shrink.stdout")[0] == '0' &&
                      a.at("solve.stdout")[0] == '0' && a.at("evaluate.stdout")[0] == '0' &&
                      a.at("simulate.stdout")[0] == '0';
  std::string detail = std::to_string(a.size()) + " artifacts from 5 commands compared across " +
                       "two runs and --threads 1/4";
  if (!all_ok) detail += "; a command exited nonzero";
  for (const auto& n : differing) detail += "; differs: " + n;
  return {differing.empty() && all_ok && a.size() == 5 + 8, detail};
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&all](int id, const char* name, double budget, const std::function<Outcome()>& f,
                       double already = 0.0) {
    const auto t0 = Clock::now();
    Outcome o = f();
    const double secs = already + std::chrono::duration<double>(Clock::now() - t0).count();
    std::string timing = fmt("%.1f s", secs);
    if (budget > 0.0) {
      timing += fmt(" of %.0f s budget", budget);
      if (secs >= budget) o.ok = false;
    }
    all = all && o.ok;
    std::cout << "criterion " << id << " [" << name << "]: " << (o.ok ? "PASS" : "FAIL") << " - "
              << o.detail << " (" << timing << ")" << std::endl;
  };

  report(1, "tweedie equivalence", 5, tweedie_equivalence);
  report(2, "dual-norm solver", 30, dual_norm_solver);
  report(3, "coupled bootstrap", 60, coupled_bootstrap);
  report(4, "npmle sanity", 120, npmle_sanity);

  const auto t0 = Clock::now();
  const RateRuns rates = run_rates();
  const double shared = std::chrono::duration<double>(Clock::now() - t0).count();
  std::cout << "rate table J=100,400,1600 x 20 replications: " << fmt("%.1f s", shared)
            << std::endl;
  report(5, "plug-in failure", 600, [&] { return plugin_failure(rates); }, shared);
  report(6, "eb convergence", 900, [&] { return eb_convergence(rates); }, shared);
  report(7, "sign pattern", 1200, sign_pattern);
  report(8, "determinism", 0, determinism);
  return all ? 0 : 1;
}
