#include "ebpolicy/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "ebpolicy/bootstrap.hpp"
#include "ebpolicy/config.hpp"
#include "ebpolicy/errors.hpp"
#include "ebpolicy/ingest.hpp"
#include "ebpolicy/pipeline.hpp"
#include "ebpolicy/planner.hpp"
#include "ebpolicy/posterior.hpp"
#include "ebpolicy/simulate.hpp"

namespace ebpolicy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::string> shrunk;
  std::string source = "empirical_bayes";
};

struct Context {
  RunConfig config;
  fs::path base;
  fs::path out_dir;
};

/// Error raised while running a named stage; keeps the exit-code class.
struct StageError {
  std::string stage;
  std::string message;
  int code;
};

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const InputError& e) {
    throw StageError{name, e.what(), kExitInput};
  } catch (const json::exception& e) {
    throw StageError{name, e.what(), kExitInput};
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError{name, e.what(), kExitNumeric};
  }
}

Context load_context(const Overrides& o) {
  return stage("config", [&] {
    std::ifstream in(o.config_path);
    if (!in) throw InputError("cannot open config '" + o.config_path + "'");
    const json j = json::parse(in);
    Context ctx;
    ctx.config = config_from_json(j);
    ctx.base = fs::path(o.config_path).parent_path();
    if (o.seed) {
      ctx.config.bootstrap.seed = *o.seed;
      ctx.config.simulate.seed = *o.seed;
    }
    if (o.threads) {
      if (*o.threads < 1) throw InputError("--threads must be at least 1");
      ctx.config.threads = *o.threads;
    }
    ctx.out_dir = o.out ? fs::path(*o.out) : ctx.base / ctx.config.output_dir;
    return ctx;
  });
}

fs::path resolve(const Context& ctx, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : ctx.base / path;
}

Dataset load_input(const Context& ctx) {
  return stage("ingest", [&] {
    if (ctx.config.input.dataset.empty()) throw InputError("config: input.dataset is required");
    return load_dataset(resolve(ctx, ctx.config.input.dataset));
  });
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write '" + path.string() + "'");
  f << content;
}

std::vector<std::string> ids_of(const std::vector<PolicyRecord>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.policy_id);
  return ids;
}

int cmd_shrink(const Overrides& o, std::ostream& out) {
  const Context ctx = load_context(o);
  const Dataset ds = load_input(ctx);
  const EbOptions opts = ctx.config.eb_options(ctx.config.bootstrap.seed);
  const EbResult eb = stage("shrink", [&] {
    return run_empirical_bayes(ds.records, ds.types.size(), opts);
  });

  std::ostringstream shrunk;
  write_shrunk_csv(shrunk, eb.shrunk, ds.types);
  write_file(ctx.out_dir / "shrunk.csv", shrunk.str());
  write_file(ctx.out_dir / "prior.json", prior_to_json(eb.fit.prior).dump(2) + "\n");
  json diag = diagnostics_to_json(eb.fit.diagnostics);
  diag["noise_free_policies"] = eb.noise_free;
  diag["grid_points"] = eb.grid.points_per_dim;
  write_file(ctx.out_dir / "npmle_diagnostics.json", diag.dump(2) + "\n");
  write_file(ctx.out_dir / "moments.json",
             moments_to_json(eb.location_scale, ds.types.labels()).dump(2) + "\n");
  out << "shrink: " << eb.shrunk.size() << " policies, " << ds.types.size() << " types, "
      << eb.fit.diagnostics.iterations << " EM iterations -> " << ctx.out_dir.string() << "\n";
  if (eb.fit.diagnostics.warning) out << "warning: " << *eb.fit.diagnostics.warning << "\n";
  return kExitOk;
}

int cmd_solve(const Overrides& o, std::ostream& out) {
  const Context ctx = load_context(o);
  const ShrunkTable table = stage("ingest", [&] {
    fs::path path = ctx.out_dir / "shrunk.csv";
    if (o.shrunk) {
      path = *o.shrunk;
    } else if (!ctx.config.input.shrunk.empty()) {
      path = resolve(ctx, ctx.config.input.shrunk);
    }
    std::ifstream in(path);
    if (!in) throw InputError("cannot open shrunk estimates '" + path.string() + "'");
    return read_shrunk_csv(in);
  });
  const GradientSource source = stage("config", [&] {
    const GradientSource s = source_from_string(o.source);
    if (s == GradientSource::oracle) throw InputError("--source must be empirical_bayes or plug_in");
    return s;
  });

  std::vector<std::string> ids;
  std::vector<Vec2> estimates;
  for (const auto& e : table.estimates) {
    ids.push_back(e.policy_id);
    estimates.push_back(source == GradientSource::plug_in ? e.y : e.theta_star);
  }
  const PlannerConfig pc = stage("config", [&] {
    return ctx.config.planner_config(ids, ctx.config.planner.p, ctx.config.planner.mu);
  });
  std::ostringstream rule_csv, sign_csv;
  stage("solve", [&] {
    const Gradient g = assemble_gradient(estimates, pc, source);
    const SpendingRule rule = solve_ball(g.g, pc);
    const auto signs = direction_signs(std::span<const Vec2>(estimates), pc);
    write_rule_csv(rule_csv, ids, g, rule);
    write_direction_csv(sign_csv, ids, signs);
    out << "solve: p=" << format_p(pc.p) << " mu=" << pc.mu << " objective=" << rule.objective
        << "\n";
    return 0;
  });
  write_file(ctx.out_dir / "rule.csv", rule_csv.str());
  write_file(ctx.out_dir / "direction_signs.csv", sign_csv.str());
  return kExitOk;
}

int cmd_evaluate(const Overrides& o, std::ostream& out) {
  const Context ctx = load_context(o);
  const Dataset ds = load_input(ctx);
  const auto ids = ids_of(ds.records);
  const auto& pl = ctx.config.planner;
  const std::vector<double> ps = pl.p_list.empty() ? std::vector<double>{pl.p} : pl.p_list;
  const std::vector<double> mus = pl.mu_list.empty() ? std::vector<double>{pl.mu} : pl.mu_list;
  const std::vector<PlannerConfig> planners = stage("config", [&] {
    std::vector<PlannerConfig> v;
    for (double p : ps) {
      for (double mu : mus) v.push_back(ctx.config.planner_config(ids, p, mu));
    }
    return v;
  });

  BootstrapOptions bo;
  bo.kappa = ctx.config.bootstrap.kappa;
  bo.replications = ctx.config.bootstrap.replications;
  bo.seed = ctx.config.bootstrap.seed;
  bo.threads = ctx.config.threads;
  bo.eb = ctx.config.eb_options(ctx.config.bootstrap.seed);

  const auto [eb, plug] = stage("evaluate", [&] {
    return std::pair{
        evaluate_pipeline(ds.records, ds.types.size(), planners, Pipeline::empirical_bayes, bo),
        evaluate_pipeline(ds.records, ds.types.size(), planners, Pipeline::plug_in, bo)};
  });
  json rows = json::array();
  for (std::size_t c = 0; c < planners.size(); ++c) {
    rows.push_back(welfare_to_json(eb[c]));
    rows.push_back(welfare_to_json(plug[c]));
    out << "evaluate: p=" << format_p(planners[c].p) << " mu=" << planners[c].mu
        << " empirical_bayes=" << eb[c].mean << " plug_in=" << plug[c].mean << "\n";
  }
  write_file(ctx.out_dir / "welfare.json", rows.dump(2) + "\n");
  return kExitOk;
}

int cmd_simulate(const Overrides& o, std::ostream& out, std::ostream& err) {
  const Context ctx = load_context(o);
  const auto& s = ctx.config.simulate;
  const auto [family, pipelines] = stage("config", [&] {
    std::vector<GradientSource> pipes;
    for (const auto& name : s.pipelines) pipes.push_back(source_from_string(name));
    return std::pair{ctx.config.dgp_family(), pipes};
  });
  SimOptions so;
  so.threads = ctx.config.threads;
  so.eb = ctx.config.eb_options(s.seed);
  const RateTable table = stage("simulate", [&] {
    return rate_table(family, s.J_list, s.p_list, pipelines, s.replications, s.seed, so);
  });
  for (const auto& f : table.failures) err << "simulate: cell failed: " << f << "\n";
  std::ostringstream csv_out;
  write_rate_csv(csv_out, table.rows);
  write_file(ctx.out_dir / "rate_table.csv", csv_out.str());
  out << "simulate: " << table.rows.size() << " cells -> " << ctx.out_dir.string() << "\n";
  return kExitOk;
}

int cmd_validate(const Overrides& o, std::ostream& out) {
  const Context ctx = load_context(o);
  out << "config: ok\n";
  if (!ctx.config.input.dataset.empty()) {
    const Dataset ds = load_input(ctx);
    out << "dataset: " << ds.records.size() << " policies, " << ds.types.size() << " types\n";
    std::vector<int> counts(static_cast<std::size_t>(ds.types.size()), 0);
    for (const auto& r : ds.records) ++counts[static_cast<std::size_t>(r.type)];
    for (int t = 0; t < ds.types.size(); ++t) {
      out << "  " << ds.types.label(t) << ": " << counts[static_cast<std::size_t>(t)] << "\n";
    }
    stage("config", [&] {
      return ctx.config.planner_config(ids_of(ds.records), ctx.config.planner.p,
                                       ctx.config.planner.mu);
    });
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Empirical Bayes local spending rules for noisily estimated policies", "ebpolicy"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "JSON run configuration")->required();
    sub->add_option("--seed", o.seed, "Override every seed in the config");
    sub->add_option("--out", o.out, "Output directory (default: config output_dir)");
    sub->add_option("--threads", o.threads, "Worker threads");
  };
  auto* shrink = app.add_subcommand("shrink", "Empirical Bayes posterior means");
  auto* solve = app.add_subcommand("solve", "Optimal local spending rule from shrunk estimates");
  auto* evaluate = app.add_subcommand("evaluate", "Coupled-bootstrap welfare estimates");
  auto* simulate = app.add_subcommand("simulate", "Regret rate table on synthetic data");
  auto* validate = app.add_subcommand("validate", "Check config and dataset");
  for (auto* sub : {shrink, solve, evaluate, simulate, validate}) add_common(sub);
  solve->add_option("--shrunk", o.shrunk, "Shrunk estimates CSV");
  solve->add_option("--source", o.source, "empirical_bayes (star columns) or plug_in (hat columns)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (*shrink) return cmd_shrink(o, out);
    if (*solve) return cmd_solve(o, out);
    if (*evaluate) return cmd_evaluate(o, out);
    if (*simulate) return cmd_simulate(o, out, err);
    if (*validate) return cmd_validate(o, out);
  } catch (const StageError& e) {
    err << "error [" << e.stage << "]: " << e.message << "\n";
    return e.code;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitInput;
}

}  // namespace ebpolicy
