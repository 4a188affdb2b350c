#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "ebpolicy/bootstrap.hpp"
#include "ebpolicy/errors.hpp"
#include "ebpolicy/ingest.hpp"
#include "ebpolicy/moments.hpp"
#include "ebpolicy/npmle.hpp"
#include "ebpolicy/pipeline.hpp"
#include "ebpolicy/planner.hpp"
#include "ebpolicy/posterior.hpp"
#include "ebpolicy/simulate.hpp"

namespace py = pybind11;
using namespace ebpolicy;

namespace {

std::vector<StandardizedSample> make_samples(const std::vector<Vec2>& z,
                                             const std::vector<Mat2>& psi) {
  if (z.size() != psi.size()) throw InputError("z and psi must have the same length");
  std::vector<StandardizedSample> s(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    s[j].z_hat = z[j];
    s[j].psi_hat = psi[j];
  }
  return s;
}

PlannerConfig make_planner(double mu, std::vector<double> eta, double p, double radius,
                           std::vector<bool> frozen) {
  PlannerConfig c;
  c.mu = mu;
  c.eta = std::move(eta);
  c.p = p;
  c.radius = radius;
  c.frozen = std::move(frozen);
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Empirical Bayes shrinkage and local spending rules";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  m.attr("inf") = kInfinity;

  py::class_<PolicyRecord>(m, "PolicyRecord")
      .def(py::init([](std::string id, int type, Vec2 y, Mat2 sigma) {
             return PolicyRecord{std::move(id), type, y, sigma};
           }),
           py::arg("policy_id"), py::arg("type"), py::arg("y"), py::arg("sigma"))
      .def_readwrite("policy_id", &PolicyRecord::policy_id)
      .def_readwrite("type", &PolicyRecord::type)
      .def_readwrite("y", &PolicyRecord::y)
      .def_readwrite("sigma", &PolicyRecord::sigma);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("records", &Dataset::records)
      .def_property_readonly("type_labels", [](const Dataset& d) { return d.types.labels(); })
      .def_property_readonly("num_types", [](const Dataset& d) { return d.types.size(); });

  m.def("ci_to_variance", &ci_to_variance, py::arg("lb"), py::arg("ub"));
  m.def("load_dataset", [](const std::string& path) { return load_dataset(path); },
        py::arg("path"));
  m.def("parse_dataset", [](const std::string& text) {
    std::istringstream in(text);
    return parse_dataset(in);
  }, py::arg("text"));

  py::class_<TypeMoments>(m, "TypeMoments")
      .def_readonly("alpha", &TypeMoments::alpha)
      .def_readonly("omega_raw", &TypeMoments::omega_raw)
      .def_readonly("eigenvalues_before_repair", &TypeMoments::eigenvalues_before_repair)
      .def_readonly("omega", &TypeMoments::omega);
  py::class_<LocationScale>(m, "LocationScale").def_readonly("types", &LocationScale::types);
  py::class_<StandardizedSample>(m, "StandardizedSample")
      .def_readonly("z_hat", &StandardizedSample::z_hat)
      .def_readonly("psi_hat", &StandardizedSample::psi_hat)
      .def_readonly("type", &StandardizedSample::type);

  m.def("estimate_location_scale",
        [](const std::vector<PolicyRecord>& records, int num_types, double eigen_floor,
           bool unbiased) {
          MomentsOptions o;
          o.eigen_floor = eigen_floor;
          o.denominator =
              unbiased ? VarianceDenominator::unbiased : VarianceDenominator::population;
          return estimate_location_scale(records, num_types, o);
        },
        py::arg("records"), py::arg("num_types"), py::arg("eigen_floor") = 0.01,
        py::arg("unbiased") = false);
  m.def("psd_repair", &psd_repair, py::arg("m"), py::arg("eigen_floor") = 0.01);
  m.def("standardize",
        [](const std::vector<PolicyRecord>& records, const LocationScale& ls) {
          return standardize(records, ls);
        },
        py::arg("records"), py::arg("location_scale"));

  py::class_<DiscretePrior>(m, "DiscretePrior")
      .def(py::init([](std::vector<Vec2> atoms, std::vector<double> weights) {
             DiscretePrior p{std::move(atoms), std::move(weights)};
             p.validate();
             return p;
           }),
           py::arg("atoms"), py::arg("weights"))
      .def_readonly("atoms", &DiscretePrior::atoms)
      .def_readonly("weights", &DiscretePrior::weights)
      .def("mean", &DiscretePrior::mean)
      .def("covariance", &DiscretePrior::covariance);

  py::class_<NpmleDiagnostics>(m, "NpmleDiagnostics")
      .def_readonly("log_likelihood", &NpmleDiagnostics::log_likelihood)
      .def_readonly("iterations", &NpmleDiagnostics::iterations)
      .def_readonly("converged", &NpmleDiagnostics::converged)
      .def_readonly("monotone", &NpmleDiagnostics::monotone)
      .def_readonly("warning", &NpmleDiagnostics::warning)
      .def_readonly("trace", &NpmleDiagnostics::trace)
      .def_readonly("kappa", &NpmleDiagnostics::kappa)
      .def_readonly("within_kappa", &NpmleDiagnostics::within_kappa);
  py::class_<NpmleFit>(m, "NpmleFit")
      .def_readonly("prior", &NpmleFit::prior)
      .def_readonly("diagnostics", &NpmleFit::diagnostics);

  m.def("make_grid", [](std::array<double, 2> lo, std::array<double, 2> hi, int n) {
    return make_grid(lo, hi, n).atoms;
  }, py::arg("lo"), py::arg("hi"), py::arg("points_per_dim"));
  m.def("likelihood",
        [](const std::vector<Vec2>& z, const std::vector<Mat2>& psi,
           const std::vector<Vec2>& atoms) {
          const auto L = likelihood_matrix(make_samples(z, psi), atoms);
          Eigen::MatrixXd d(L.rows(), L.cols());
          for (Eigen::Index j = 0; j < L.rows(); ++j) {
            for (Eigen::Index k = 0; k < L.cols(); ++k) d(j, k) = L.density(j, k);
          }
          return d;
        },
        py::arg("z"), py::arg("psi"), py::arg("atoms"));
  m.def("fit_npmle",
        [](const std::vector<Vec2>& z, const std::vector<Mat2>& psi,
           const std::vector<Vec2>& atoms, double tol, int max_iter, bool kappa_check,
           std::uint64_t seed) {
          NpmleOptions o;
          o.tol = tol;
          o.max_iter = max_iter;
          o.kappa_check = kappa_check;
          o.seed = seed;
          return fit_npmle(likelihood_matrix(make_samples(z, psi), atoms), atoms, o);
        },
        py::arg("z"), py::arg("psi"), py::arg("atoms"), py::arg("tol") = 1e-9,
        py::arg("max_iter") = 20000, py::arg("kappa_check") = false, py::arg("seed") = 0);
  m.def("kappa_tolerance", &kappa_tolerance, py::arg("J"));

  m.def("posterior_mean", &posterior_mean_residual, py::arg("z"), py::arg("psi"),
        py::arg("prior"));
  m.def("tweedie_mean", &tweedie_mean, py::arg("z"), py::arg("psi"), py::arg("prior"));

  py::class_<ShrunkEstimate>(m, "ShrunkEstimate")
      .def_readonly("policy_id", &ShrunkEstimate::policy_id)
      .def_readonly("type", &ShrunkEstimate::type)
      .def_readonly("y", &ShrunkEstimate::y)
      .def_readonly("tau_star", &ShrunkEstimate::tau_star)
      .def_readonly("theta_star", &ShrunkEstimate::theta_star);
  py::class_<EbResult>(m, "EbResult")
      .def_readonly("location_scale", &EbResult::location_scale)
      .def_readonly("samples", &EbResult::samples)
      .def_readonly("fit", &EbResult::fit)
      .def_readonly("shrunk", &EbResult::shrunk)
      .def_readonly("noise_free", &EbResult::noise_free)
      .def_property_readonly("grid", [](const EbResult& r) { return r.grid.atoms; });
  m.def("run_empirical_bayes",
        [](const std::vector<PolicyRecord>& records, int num_types, int grid_points,
           double padding, double eigen_floor, std::uint64_t seed) {
          EbOptions o;
          o.grid_points = grid_points;
          o.padding = padding;
          o.moments.eigen_floor = eigen_floor;
          o.npmle.seed = seed;
          return run_empirical_bayes(records, num_types, o);
        },
        py::arg("records"), py::arg("num_types"), py::arg("grid_points") = 40,
        py::arg("padding") = 0.05, py::arg("eigen_floor") = 0.01, py::arg("seed") = 0);

  py::class_<PlannerConfig>(m, "PlannerConfig")
      .def(py::init(&make_planner), py::arg("mu"), py::arg("eta") = std::vector<double>{},
           py::arg("p") = 2.0, py::arg("radius") = 1.0,
           py::arg("frozen") = std::vector<bool>{})
      .def_readonly("mu", &PlannerConfig::mu)
      .def_readonly("eta", &PlannerConfig::eta)
      .def_readonly("p", &PlannerConfig::p)
      .def_readonly("radius", &PlannerConfig::radius);
  py::class_<SpendingRule>(m, "SpendingRule")
      .def_readonly("v", &SpendingRule::v)
      .def_readonly("p", &SpendingRule::p)
      .def_readonly("radius", &SpendingRule::radius)
      .def_readonly("objective", &SpendingRule::objective);
  py::class_<DirectionSign>(m, "DirectionSign")
      .def_readonly("ratio", &DirectionSign::ratio)
      .def_readonly("sign_g", &DirectionSign::sign_g)
      .def_readonly("recommended_sign", &DirectionSign::recommended_sign);

  m.def("gradient",
        [](const std::vector<Vec2>& estimates, const PlannerConfig& c) {
          return assemble_gradient(estimates, c, GradientSource::plug_in).g;
        },
        py::arg("estimates"), py::arg("config"));
  m.def("solve_ball", &solve_ball, py::arg("g"), py::arg("config"));
  m.def("lp_norm", &lp_norm, py::arg("x"), py::arg("p"));
  m.def("direction_signs",
        [](const std::vector<Vec2>& estimates, const PlannerConfig& c) {
          return direction_signs(std::span<const Vec2>(estimates), c);
        },
        py::arg("estimates"), py::arg("config"));

  py::class_<CoupledDraws>(m, "CoupledDraws")
      .def_readonly("kappa", &CoupledDraws::kappa)
      .def_readonly("y1", &CoupledDraws::y1)
      .def_readonly("y2", &CoupledDraws::y2);
  m.def("couple",
        [](const std::vector<PolicyRecord>& records, double kappa, std::uint64_t seed,
           std::uint64_t replication) { return couple(records, kappa, seed, replication); },
        py::arg("records"), py::arg("kappa"), py::arg("seed"), py::arg("replication") = 0);

  py::class_<WelfareEstimate>(m, "WelfareEstimate")
      .def_property_readonly("pipeline",
                             [](const WelfareEstimate& w) { return to_string(w.pipeline); })
      .def_readonly("p", &WelfareEstimate::p)
      .def_readonly("mu", &WelfareEstimate::mu)
      .def_readonly("kappa", &WelfareEstimate::kappa)
      .def_readonly("replications", &WelfareEstimate::replications)
      .def_readonly("mean", &WelfareEstimate::mean)
      .def_readonly("std_error", &WelfareEstimate::std_error)
      .def_readonly("dropped", &WelfareEstimate::dropped)
      .def_readonly("replicate_values", &WelfareEstimate::replicate_values);
  m.def("evaluate_pipeline",
        [](const std::vector<PolicyRecord>& records, int num_types, const PlannerConfig& c,
           const std::string& pipeline, double kappa, int replications, std::uint64_t seed,
           int threads) {
          BootstrapOptions o;
          o.kappa = kappa;
          o.replications = replications;
          o.seed = seed;
          o.threads = threads;
          o.eb.npmle.seed = seed;
          py::gil_scoped_release release;
          return evaluate_pipeline(records, num_types, c, pipeline_from_string(pipeline), o);
        },
        py::arg("records"), py::arg("num_types"), py::arg("config"),
        py::arg("pipeline") = "empirical_bayes", py::arg("kappa") = 0.25,
        py::arg("replications") = 1000, py::arg("seed") = 0, py::arg("threads") = 1);

  py::class_<DgpSpec>(m, "DgpSpec")
      .def_readonly("name", &DgpSpec::name)
      .def_readonly("prior", &DgpSpec::prior)
      .def_readonly("alpha", &DgpSpec::alpha)
      .def_readonly("J", &DgpSpec::J)
      .def_readonly("eta", &DgpSpec::eta)
      .def_readonly("mu", &DgpSpec::mu);
  py::class_<SimulatedData>(m, "SimulatedData")
      .def_readonly("records", &SimulatedData::records)
      .def_readonly("theta", &SimulatedData::theta)
      .def_readonly("tau", &SimulatedData::tau);
  m.def("corner_dgp",
        [](int part, int J, const Mat2& sigma, std::uint64_t seed, bool heteroscedastic) {
          return corner_dgp(part, J, sigma, seed,
                            heteroscedastic ? SigmaLaw::heteroscedastic : SigmaLaw::fixed);
        },
        py::arg("part"), py::arg("J"), py::arg("sigma") = Mat2::Identity().eval(),
        py::arg("seed") = 0, py::arg("heteroscedastic") = false);
  m.def("simulate_data", &simulate_data, py::arg("dgp"), py::arg("replication") = 0);
  m.def("oracle_posterior_means", &oracle_posterior_means, py::arg("data"), py::arg("dgp"));

  py::class_<RegretReport>(m, "RegretReport")
      .def_readonly("J", &RegretReport::J)
      .def_readonly("p", &RegretReport::p)
      .def_property_readonly("pipeline",
                             [](const RegretReport& r) { return to_string(r.pipeline); })
      .def_readonly("replications", &RegretReport::replications)
      .def_readonly("failed", &RegretReport::failed)
      .def_readonly("objective_gap", &RegretReport::objective_gap)
      .def_readonly("rule_regret", &RegretReport::rule_regret)
      .def_readonly("mse_regret", &RegretReport::mse_regret)
      .def_readonly("sign_mistake_rate", &RegretReport::sign_mistake_rate)
      .def("median_gap", &RegretReport::median_gap)
      .def("median_rule", &RegretReport::median_rule)
      .def("median_mse", &RegretReport::median_mse);
  m.def("regret_experiment",
        [](const DgpSpec& dgp, double p, const std::string& pipeline, int replications,
           int threads) {
          SimOptions o;
          o.threads = threads;
          o.eb.npmle.seed = dgp.seed;
          py::gil_scoped_release release;
          return regret_experiment(dgp, p, source_from_string(pipeline), replications, o);
        },
        py::arg("dgp"), py::arg("p"), py::arg("pipeline"), py::arg("replications"),
        py::arg("threads") = 1);
}
