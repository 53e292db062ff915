#ifndef DIFFLAB_GAUSSIAN_HPP
#define DIFFLAB_GAUSSIAN_HPP

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "difflab/errors.hpp"

namespace difflab {

struct GaussianLaw {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
};

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& cov,
                                               const char* who) {
  require(cov.rows() == cov.cols(), std::string(who) + ": covariance not square");
  require((cov - cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff()),
          std::string(who) + ": covariance not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  require(llt.info() == Eigen::Success, std::string(who) + ": covariance not positive definite");
  return llt;
}

inline double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

// KL(q || p) between Gaussians in closed form.
inline double gaussian_kl(const GaussianLaw& q, const GaussianLaw& p) {
  const Eigen::Index d = q.dim();
  require(p.dim() == d && q.cov.rows() == d && p.cov.rows() == d,
          "gaussian_kl: dimension mismatch");
  const auto llt_p = detail::checked_llt(p.cov, "gaussian_kl(p)");
  const auto llt_q = detail::checked_llt(q.cov, "gaussian_kl(q)");
  const double trace_term = llt_p.solve(q.cov).trace();
  const Eigen::VectorXd diff = p.mean - q.mean;
  const double maha = diff.dot(llt_p.solve(diff));
  const double log_det_p = detail::log_det_from_llt(llt_p);
  const double log_det_q = detail::log_det_from_llt(llt_q);
  return 0.5 * (trace_term + maha - static_cast<double>(d) + log_det_p - log_det_q);
}

// Exact law propagation of the Euler Langevin chain
//   z' = z + eta * grad log N(z; m*, S*) + sqrt(2 eta) xi
// applied to a Gaussian initial law. Each step is the affine map
// A = I - eta S*^{-1}, b = eta S*^{-1} m*, plus additive noise 2 eta I.
// Returns steps+1 laws with the initial law first. Refuses to run if the
// affine map is expansive (eta > 2 min-eigenvalue of S*), since the chain
// then diverges and KL monotonicity is meaningless.
inline std::vector<GaussianLaw> langevin_gaussian_propagate(const GaussianLaw& init,
                                                            const GaussianLaw& target,
                                                            double eta, int steps) {
  const Eigen::Index d = init.dim();
  require(target.dim() == d, "langevin_gaussian_propagate: dimension mismatch");
  require(eta > 0.0, "langevin_gaussian_propagate: eta must be positive");
  require(steps >= 0, "langevin_gaussian_propagate: steps must be >= 0");
  detail::checked_llt(init.cov, "langevin_gaussian_propagate(init)");
  const auto llt_t = detail::checked_llt(target.cov, "langevin_gaussian_propagate(target)");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(target.cov);
  const double min_eig = es.eigenvalues().minCoeff();
  require(eta <= 2.0 * min_eig,
          "langevin_gaussian_propagate: eta = " + std::to_string(eta) +
              " makes the update expansive (limit " + std::to_string(2.0 * min_eig) + ")");

  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd map = identity - eta * llt_t.solve(identity);
  const Eigen::VectorXd shift = eta * llt_t.solve(target.mean);

  std::vector<GaussianLaw> laws;
  laws.reserve(static_cast<std::size_t>(steps) + 1);
  laws.push_back(init);
  GaussianLaw current = init;
  for (int k = 0; k < steps; ++k) {
    current.mean = map * current.mean + shift;
    current.cov = map * current.cov * map.transpose() + 2.0 * eta * identity;
    // Symmetrize to keep round-off from accumulating over many steps.
    current.cov = 0.5 * (current.cov + current.cov.transpose()).eval();
    laws.push_back(current);
  }
  return laws;
}

// Moment-matched Gaussian fit; rows of `samples` are observations.
inline GaussianLaw fit_gaussian(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  require(n >= 2, "fit_gaussian: need at least 2 samples");
  GaussianLaw law;
  law.mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - law.mean.transpose();
  law.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return law;
}

}  // namespace difflab

#endif  // DIFFLAB_GAUSSIAN_HPP
