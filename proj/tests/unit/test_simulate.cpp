#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "ebpolicy/errors.hpp"
#include "ebpolicy/moments.hpp"
#include "ebpolicy/posterior.hpp"
#include "ebpolicy/simulate.hpp"
#include "support.hpp"

using namespace ebpolicy;
using namespace ebpolicy::testing;

namespace {

std::map<long, double> combo_frequencies(const SimulatedData& d) {
  std::map<long, double> f;
  for (const auto& t : d.theta) f[std::lround(t(0) + t(1))] += 1.0 / static_cast<double>(d.theta.size());
  return f;
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("four-corner prior moments at J = 10^6") {
    const auto dgp = corner_dgp(1, 1000000, Mat2::Identity(), 1);
    const auto d = simulate_data(dgp);
    Vec2 m = Vec2::Zero();
    for (const auto& t : d.tau) m += t;
    m /= 1e6;
    Mat2 c = Mat2::Zero();
    for (const auto& t : d.tau) c += (t - m) * (t - m).transpose();
    c /= 1e6;
    CHECK(m.cwiseAbs().maxCoeff() < 0.01);
    CHECK((c - Mat2::Identity()).cwiseAbs().maxCoeff() < 0.01);
    CHECK(dgp.prior.mean().norm() < 1e-15);
    CHECK((dgp.prior.covariance() - Mat2::Identity()).norm() < 1e-15);
  }

  TEST_CASE("gradient values and frequencies") {
    const auto one = simulate_data(corner_dgp(1, 100000, Mat2::Identity(), 2));
    const auto f1 = combo_frequencies(one);
    CHECK(f1.size() == 3);
    CHECK(f1.at(-2) == doctest::Approx(0.25).epsilon(0.03));
    CHECK(f1.at(0) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(f1.at(2) == doctest::Approx(0.25).epsilon(0.03));
    const auto two = simulate_data(corner_dgp(2, 100000, Mat2::Identity(), 2));
    const auto f2 = combo_frequencies(two);
    CHECK(f2.size() == 3);
    CHECK(f2.at(2) == doctest::Approx(0.25).epsilon(0.03));
    CHECK(f2.at(4) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(f2.at(6) == doctest::Approx(0.25).epsilon(0.03));
    const auto dgp = corner_dgp(1, 10, Mat2::Identity(), 2);
    CHECK(dgp.eta == 1.0);
    CHECK(dgp.mu == -1.0);
  }

  TEST_CASE("observations carry the stated noise") {
    Mat2 sigma;
    sigma << 0.5, 0.2, 0.2, 0.8;
    const auto d = simulate_data(corner_dgp(1, 200000, sigma, 3));
    Mat2 c = Mat2::Zero();
    for (std::size_t j = 0; j < d.theta.size(); ++j) {
      const Vec2 e = d.records[j].y - d.theta[j];
      c += e * e.transpose();
    }
    c /= static_cast<double>(d.theta.size());
    CHECK((c - sigma).cwiseAbs().maxCoeff() < 0.01);
    const auto het = simulate_data(corner_dgp(1, 500, Mat2::Identity(), 3, SigmaLaw::heteroscedastic));
    for (const auto& r : het.records) {
      CHECK(r.sigma(0, 1) == 0.0);
      for (int i = 0; i < 2; ++i) {
        CHECK(r.sigma(i, i) >= 0.25);
        CHECK(r.sigma(i, i) <= 4.0);
      }
    }
  }

  TEST_CASE("replications and seeds give distinct, reproducible data") {
    const auto dgp = corner_dgp(2, 50, Mat2::Identity(), 4);
    const auto a = simulate_data(dgp, 0);
    const auto b = simulate_data(dgp, 0);
    const auto c = simulate_data(dgp, 1);
    int same = 0;
    for (int j = 0; j < 50; ++j) {
      CHECK(a.records[j].y == b.records[j].y);
      same += a.records[j].y == c.records[j].y;
    }
    CHECK(same == 0);
  }

  TEST_CASE("oracle gradient") {
    const auto exact = corner_dgp(1, 300, Mat2::Zero(), 5);
    const auto d0 = simulate_data(exact);
    CHECK((oracle_gradient(d0, exact).g - true_gradient(d0, exact)).cwiseAbs().maxCoeff() < 1e-12);

    for (int part : {1, 2}) {
      const auto dgp = corner_dgp(part, 500, Mat2::Identity(), 6);
      const auto d = simulate_data(dgp);
      const auto g = oracle_gradient(d, dgp);
      CHECK(g.source == GradientSource::oracle);
      if (part == 1) {
        CHECK(g.g.minCoeff() >= -2.0);
        CHECK(g.g.maxCoeff() <= 2.0);
      }
      LocationScale truth;
      truth.types.push_back(make_type_moments(dgp.alpha[0], dgp.omega[0]));
      const auto shrunk = shrink_all(d.records, standardize(d.records, truth), dgp.prior, truth,
                                     Provenance::oracle);
      const auto means = oracle_posterior_means(d, dgp);
      for (std::size_t j = 0; j < means.size(); ++j) {
        CHECK((shrunk[j].theta_star - means[j]).cwiseAbs().maxCoeff() < 1e-10);
      }
    }
  }

  TEST_CASE("general DGP with several types") {
    DgpSpec dgp;
    dgp.name = "custom";
    dgp.prior = {{Vec2(-1, -1), Vec2(-1, 1), Vec2(1, -1), Vec2(1, 1)}, {0.25, 0.25, 0.25, 0.25}};
    Mat2 om;
    om << 2.0, 0.5, 0.5, 1.0;
    dgp.alpha = {Vec2(0, 0), Vec2(3, 1)};
    dgp.omega = {Mat2::Identity(), om};
    dgp.sigma = 0.5 * Mat2::Identity();
    dgp.J = 400;
    dgp.seed = 8;
    const auto d = simulate_data(dgp);
    CHECK(d.records[1].type == 1);
    const Mat2 root = sym_sqrt(om);
    CHECK((d.theta[1] - (Vec2(3, 1) + root * d.tau[1])).norm() < 1e-12);
    CHECK(oracle_posterior_means(d, dgp).size() == 400);

    dgp.prior.atoms[0] = Vec2(-1.5, -1);
    CHECK_THROWS_AS(dgp.validate(), InputError);
    dgp.normalized = false;
    dgp.prior.atoms[0] = Vec2(-1.5, -1);
    CHECK_NOTHROW(dgp.validate());
  }

  TEST_CASE("normalization constant") {
    CHECK(ball_normalization(100, 2.0) == doctest::Approx(10.0));
    CHECK(ball_normalization(64, 3.0) == doctest::Approx(16.0));
    CHECK(ball_normalization(100, kInfinity) == 100.0);
    CHECK(ball_normalization(100, 1.0) == 1.0);
    const auto rep = regret_experiment(corner_dgp(1, 64, Mat2::Identity(), 9), 3.0,
                                       GradientSource::plug_in, 2);
    CHECK(rep.normalization == doctest::Approx(16.0));
  }

  TEST_CASE("oracle pipeline has zero regret") {
    const auto dgp = corner_dgp(1, 100, Mat2::Identity(), 10);
    for (double p : {1.0, 2.0, kInfinity}) {
      const auto rep = regret_experiment(dgp, p, GradientSource::oracle, 3);
      CHECK(rep.objective_gap == 0.0);
      CHECK(rep.rule_regret == 0.0);
      CHECK(rep.mse_regret == 0.0);
      CHECK(rep.failed == 0);
    }
  }

  TEST_CASE("rule regret nonnegative up to noise") {
    SimOptions o;
    o.eb.grid_points = 20;
    const std::vector<double> ps = {1.5, 2.0, kInfinity};
    const std::vector<GradientSource> pipes = {GradientSource::plug_in, GradientSource::empirical_bayes};
    for (int part : {1, 2}) {
      const auto rows = regret_grid(corner_dgp(part, 100, Mat2::Identity(), 11), ps, pipes, 6, o);
      for (const auto& r : rows) {
        CHECK(r.rule_regret >= -3.0 * r.se_rule);
        for (double v : r.rule_values) CHECK(v >= -1e-12);
      }
    }
  }

  TEST_CASE("plug-in sign mistakes persist on the shifted design") {
    std::vector<double> rates;
    for (int J : {100, 400, 1600}) {
      const auto rep = regret_experiment(corner_dgp(2, J, Mat2::Identity(), 12), 2.0,
                                         GradientSource::plug_in, 20);
      CHECK(rep.sign_mistake_rate > 0.01);
      rates.push_back(rep.sign_mistake_rate);
    }
    CHECK(rates.back() >= 0.5 * rates.front());
  }

  TEST_CASE("empirical Bayes beats plug-in on the shifted design at J = 400") {
    const std::vector<double> ps = {2.0};
    const std::vector<GradientSource> pipes = {GradientSource::plug_in, GradientSource::empirical_bayes};
    const auto rows = regret_grid(corner_dgp(2, 400, Mat2::Identity(), 13), ps, pipes, 20);
    CHECK(rows[1].median_rule() <= rows[0].median_rule());
  }

  TEST_CASE("rate table seeds, failures and csv") {
    const std::vector<int> Js = {30, 13, 60};
    const std::vector<double> ps = {2.0, kInfinity};
    const std::vector<GradientSource> pipes = {GradientSource::plug_in};
    const DgpFamily family = [](int J, std::uint64_t seed) {
      if (J == 13) throw InputError("unlucky");
      return corner_dgp(1, J, Mat2::Identity(), seed);
    };
    const auto a = rate_table(family, Js, ps, pipes, 3, 99);
    const auto b = rate_table(family, Js, ps, pipes, 3, 99);
    REQUIRE(a.rows.size() == 4);
    REQUIRE(a.failures.size() == 1);
    CHECK(a.failures[0].find("J=13") != std::string::npos);
    for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].gap_values == b.rows[i].gap_values);
    CHECK(derive_seed(99, 30) != derive_seed(99, 60));
    CHECK(derive_seed(99, 30) != derive_seed(98, 30));
    std::ostringstream out;
    write_rate_csv(out, a.rows);
    const std::string csv = out.str();
    CHECK(csv.rfind("J,p,pipeline,objective_gap,rule_regret,mse_regret,se_objective,se_rule,replications\n", 0) == 0);
    CHECK(csv.find("\n30,inf,plug_in,") != std::string::npos);
    CHECK_THROWS_AS(rate_table(family, std::vector<int>{}, ps, pipes, 3, 1), InputError);
  }

  TEST_CASE("median") {
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(std::isnan(median({})));
  }
}
