#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "difflab/gmm.hpp"
#include "difflab/rng.hpp"
#include "difflab/schedule.hpp"

using difflab::DiffusionSchedule;
using difflab::make_linear_schedule;

TEST_CASE("linear schedule basics on a tiny hand case", "[schedule]") {
  Eigen::VectorXd beta(2);
  beta << 0.5, 0.5;
  DiffusionSchedule sched(beta);

  CHECK(sched.T() == 2);
  CHECK(sched.alpha_at(1) == Catch::Approx(0.5));
  CHECK(sched.alpha_bar_at(1) == Catch::Approx(0.5));
  CHECK(sched.alpha_bar_at(2) == Catch::Approx(0.25));
  CHECK(sched.alpha_bar_at(0) == 1.0);
  CHECK(sched.sigma_at(0) == 0.0);
  CHECK(sched.sigma_at(2) == Catch::Approx(std::sqrt(0.75)));
  // Posterior variance beta_2 (1 - abar_1) / (1 - abar_2) = 0.5 * 0.5 / 0.75.
  CHECK(sched.sigma_tilde_at(2) * sched.sigma_tilde_at(2) == Catch::Approx(1.0 / 3.0));
  CHECK(sched.sigma_tilde_at(1) == 0.0);
}

TEST_CASE("default schedule endpoints and monotonicity", "[schedule]") {
  const auto sched = make_linear_schedule(1000);
  CHECK(sched.beta_at(1) == Catch::Approx(1e-4));
  CHECK(sched.beta_at(1000) == Catch::Approx(0.02));
  CHECK(sched.alpha_bar_at(1) > 0.99);
  CHECK(sched.alpha_bar_at(1000) < 0.01);

  // Independent product evaluation in extended precision.
  long double prod = 1.0L;
  for (int t = 1; t <= 1000; ++t) prod *= static_cast<long double>(1.0 - sched.beta_at(t));
  CHECK(sched.alpha_bar_at(1000) ==
        Catch::Approx(static_cast<double>(prod)).epsilon(1e-12));

  for (int t = 1; t <= 1000; ++t) {
    CHECK(sched.alpha_bar_at(t) < sched.alpha_bar_at(t - 1));
    CHECK(sched.sigma_at(t) > sched.sigma_at(t - 1));
    CHECK(sched.alpha_bar_at(t) > 0.0);
    CHECK(sched.alpha_bar_at(t) < 1.0);
  }
}

TEST_CASE("schedule rejects bad arguments", "[schedule]") {
  CHECK_THROWS(make_linear_schedule(1));
  CHECK_THROWS(make_linear_schedule(100, 0.0, 0.02));
  CHECK_THROWS(make_linear_schedule(100, 0.02, 1e-4));
  CHECK_THROWS(make_linear_schedule(100, 1e-4, 1.0));
  Eigen::VectorXd bad(3);
  bad << 0.1, 1.5, 0.1;
  CHECK_THROWS(DiffusionSchedule(bad));

  const auto sched = make_linear_schedule(10);
  CHECK_THROWS(sched.beta_at(0));
  CHECK_THROWS(sched.beta_at(11));
  CHECK_THROWS(sched.alpha_bar_at(11));
  CHECK_THROWS(sched.sigma_tilde_at(0));
}

TEST_CASE("noise_forward matches the marginal in law", "[schedule]") {
  const auto sched = make_linear_schedule(1000);
  difflab::Rng rng(7);

  const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(100);
  // With z0 = 0 the marginal is N(0, (1 - abar_t) I); overall variance of the
  // forward draw from a generic unit-variance z0 is abar + (1 - abar) = 1.
  const int t = 500;
  double acc = 0.0;
  int count = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    const Eigen::VectorXd z0_draw = rng.gaussian_vector(100);
    const Eigen::VectorXd eps = rng.gaussian_vector(100);
    acc += difflab::noise_forward(z0_draw, t, eps, sched).squaredNorm();
    count += 100;
  }
  CHECK(acc / count == Catch::Approx(1.0).margin(0.02));

  CHECK(difflab::noise_forward(z0, 0, z0, sched) == z0);
  Eigen::VectorXd eps = Eigen::VectorXd::Ones(100);
  const Eigen::VectorXd zt = difflab::noise_forward(z0, t, eps, sched);
  CHECK(zt[0] == Catch::Approx(sched.sigma_at(t)));
}

TEST_CASE("tweedie posterior mean shrinks a unit Gaussian prior", "[schedule]") {
  const auto sched = make_linear_schedule(1000);
  // Prior N(0, I): the marginal stays N(0, I), the score is -z, and the
  // posterior mean collapses to sqrt(abar_t) z.
  Eigen::VectorXd weights(1);
  weights << 1.0;
  const Eigen::Index d = 3;
  std::vector<Eigen::VectorXd> means{Eigen::VectorXd::Zero(d)};
  std::vector<Eigen::MatrixXd> covs{Eigen::MatrixXd::Identity(d, d)};
  const difflab::GmmPrior prior(weights, means, covs);

  difflab::Rng rng(3);
  for (int t : {1, 250, 999}) {
    const auto marginal = difflab::marginal_at(prior, t, sched);
    const Eigen::VectorXd z = rng.gaussian_vector(d);
    const Eigen::VectorXd score = marginal.score(z);
    CHECK((score + z).norm() < 1e-12);
    const Eigen::VectorXd mean = difflab::tweedie_posterior_mean(z, score, t, sched);
    CHECK((mean - std::sqrt(sched.alpha_bar_at(t)) * z).norm() < 1e-12);
  }
}

TEST_CASE("ddpm reverse step coefficients on the hand case", "[schedule]") {
  Eigen::VectorXd beta(2);
  beta << 0.5, 0.5;
  DiffusionSchedule sched(beta);

  Eigen::VectorXd z(1), z0(1), eps(1);
  z << 1.0;
  z0 << 1.0;
  eps << 0.0;
  // coeff_zt + coeff_z0 = sqrt(0.5)*0.5/0.75 + sqrt(0.5)*0.5/0.75.
  const double expected = 2.0 * std::sqrt(0.5) * (0.5 / 0.75);
  const Eigen::VectorXd out = difflab::ddpm_reverse_step(z, z0, 2, eps, sched);
  CHECK(out[0] == Catch::Approx(expected).epsilon(1e-12));

  eps << 2.0;
  const Eigen::VectorXd noisy = difflab::ddpm_reverse_step(z, z0, 2, eps, sched);
  CHECK(noisy[0] == Catch::Approx(expected + sched.sigma_tilde_at(2) * 2.0).epsilon(1e-12));

  // At t = 1 the step reduces to z0_hat exactly (no noise, no z_t carryover).
  Eigen::VectorXd z0_distinct(1);
  z0_distinct << -3.5;
  const Eigen::VectorXd last = difflab::ddpm_reverse_step(z, z0_distinct, 1, eps, sched);
  CHECK(last[0] == Catch::Approx(-3.5).epsilon(1e-14));
}

TEST_CASE("ddim inversion round trip on a 2d mixture", "[schedule]") {
  const auto sched = make_linear_schedule(200);
  const auto prior = difflab::circle_prior(2);
  const difflab::AnalyticScore score(prior, sched);

  difflab::Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd z0 = prior.sample(rng);
    const auto records = difflab::ddim_invert(z0, score.fn(), sched, sched.T());
    REQUIRE(records.size() == 1);
    CHECK(records[0].t == sched.T());
    const Eigen::VectorXd back = difflab::ddim_sample(records[0].z, score.fn(), sched);
    CHECK((back - z0).norm() < 1e-2);
  }
}

TEST_CASE("ddim inversion reproduces forward-marginal moments", "[schedule]") {
  const auto sched = make_linear_schedule(100);
  const int n = 10000;
  for (double prior_var : {1.0, 0.25}) {
    Eigen::VectorXd w(1);
    w << 1.0;
    const difflab::GmmPrior prior(
        w, {Eigen::VectorXd::Zero(2)}, {prior_var * Eigen::MatrixXd::Identity(2, 2)});
    const difflab::AnalyticScore score(prior, sched);
    difflab::Rng rng(21);
    double acc50 = 0.0;
    double acc100 = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto recs = difflab::ddim_invert(prior.sample(rng), score.fn(), sched, 50);
      acc50 += recs[0].z.squaredNorm();
      acc100 += recs[1].z.squaredNorm();
    }
    for (int t : {50, 100}) {
      const double expected =
          sched.alpha_bar_at(t) * prior_var + (1.0 - sched.alpha_bar_at(t));
      const double got = (t == 50 ? acc50 : acc100) / (2.0 * n);
      // The discrete DDIM map under-transports variance for priors away from
      // unit scale by an amount proportional to the beta step, independent of
      // T; the unit-variance case is clean, the 0.25 case carries the defect.
      const double tol = (prior_var == 1.0) ? 0.03 : 0.05;
      CHECK(got == Catch::Approx(expected).epsilon(tol));
    }
  }
}

TEST_CASE("ddim inversion records at the requested stride", "[schedule]") {
  const auto sched = make_linear_schedule(200);
  const auto prior = difflab::circle_prior(2);
  const difflab::AnalyticScore score(prior, sched);
  difflab::Rng rng(5);

  const auto records = difflab::ddim_invert(prior.sample(rng), score.fn(), sched, 50);
  REQUIRE(records.size() == 4);
  CHECK(records[0].t == 50);
  CHECK(records[3].t == 200);

  // A non-divisible stride still records the terminal state.
  const auto odd = difflab::ddim_invert(prior.sample(rng), score.fn(), sched, 70);
  REQUIRE(odd.size() == 3);
  CHECK(odd[0].t == 70);
  CHECK(odd[1].t == 140);
  CHECK(odd[2].t == 200);
}

TEST_CASE("ddim integration jumps land on the target timestep", "[schedule]") {
  const auto sched = make_linear_schedule(100);
  const auto prior = difflab::circle_prior(2);
  const difflab::AnalyticScore score(prior, sched);
  difflab::Rng rng(9);

  const Eigen::VectorXd z = rng.gaussian_vector(2);
  // Coarser jump counts converge monotonically toward the dense chain of unit
  // transitions.
  const Eigen::VectorXd dense = difflab::ddim_integrate(z, 100, 0, 100, score.fn(), sched);
  const double err2 = (difflab::ddim_integrate(z, 100, 0, 2, score.fn(), sched) - dense).norm();
  const double err10 = (difflab::ddim_integrate(z, 100, 0, 10, score.fn(), sched) - dense).norm();
  const double err50 = (difflab::ddim_integrate(z, 100, 0, 50, score.fn(), sched) - dense).norm();
  CHECK(err2 > err10);
  CHECK(err10 > err50);
  CHECK(err50 < 0.05);
  CHECK(dense.allFinite());
}

TEST_CASE("ddim inversion aborts on a score blowup with the timestep named", "[schedule]") {
  const auto sched = make_linear_schedule(50);
  auto bad_score = [](const Eigen::VectorXd& z, int t) -> Eigen::VectorXd {
    if (t >= 10) {
      return Eigen::VectorXd::Constant(z.size(), std::numeric_limits<double>::quiet_NaN());
    }
    return -z;
  };
  Eigen::VectorXd z0(2);
  z0 << 1.0, -1.0;
  try {
    difflab::ddim_invert(z0, bad_score, sched, 1);
    FAIL("expected an abort");
  } catch (const difflab::Error& err) {
    // The first poisoned score evaluation happens at timestep 10 (inside the
    // refinement of the step ending there).
    CHECK(std::string(err.what()).find("timestep 10") != std::string::npos);
  }
}
