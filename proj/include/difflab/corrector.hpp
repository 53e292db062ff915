#ifndef DIFFLAB_CORRECTOR_HPP
#define DIFFLAB_CORRECTOR_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "difflab/errors.hpp"
#include "difflab/rng.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

enum class CorrectorMode { kOff, kVanilla, kMeasurementConsistent };

inline const char* corrector_mode_name(CorrectorMode mode) {
  switch (mode) {
    case CorrectorMode::kOff:
      return "off";
    case CorrectorMode::kVanilla:
      return "vanilla";
    case CorrectorMode::kMeasurementConsistent:
      return "measurement_consistent";
  }
  return "?";
}

struct CorrectorConfig {
  CorrectorMode mode = CorrectorMode::kOff;
  int cadence_k = 1;   // corrector runs at solver steps with t % cadence_k == 0
  int n_c = 0;         // iterations per corrected step
  double lambda = 0.1;
  // When set, lambda is clipped to lambda_bound(bound_target, d, sigma_t).
  std::optional<double> bound_target;
  // Refresh the projection direction from the residual gradient before every
  // iteration instead of holding the block's direction fixed. Off by default;
  // the stock algorithm reuses the direction across the block.
  bool recompute_g = false;

  bool enabled() const { return mode != CorrectorMode::kOff && n_c > 0; }
};

inline bool corrector_due(const CorrectorConfig& cfg, int t) {
  require(cfg.cadence_k >= 1, "corrector: cadence_k must be >= 1");
  return cfg.enabled() && t % cfg.cadence_k == 0;
}

struct CorrectionRecord {
  int t = 0;  // timestep of the score used for this iteration
  double eta = 0.0;
  double delta_z_norm_sq = 0.0;
  double residual_before = std::numeric_limits<double>::quiet_NaN();
  double residual_after = std::numeric_limits<double>::quiet_NaN();
  CorrectorMode mode = CorrectorMode::kOff;
};

// eta = lambda ||eps||^2 / ||score||^2, with eps the very noise vector used in
// the same update. Concentration of ||eps||^2 around d makes this track
// lambda * sigma_t^2 when the score has the typical marginal magnitude.
inline double adaptive_step_size(const Eigen::VectorXd& score, const Eigen::VectorXd& eps,
                                 double lambda) {
  require(lambda > 0.0, "adaptive_step_size: lambda must be positive");
  require(score.size() == eps.size(), "adaptive_step_size: dimension mismatch");
  const double score_sq = score.squaredNorm();
  require(score_sq > 0.0, "adaptive_step_size: zero score norm (stationary point)");
  return lambda * eps.squaredNorm() / score_sq;
}

// Step-size cap lambda <= (1/sigma_t) sqrt(k / (d+2)) associated with the
// second-moment target k.
inline double lambda_bound(double k, int d, double sigma_t) {
  require(k > 0.0 && k < 1.0, "lambda_bound: k must lie in (0,1)");
  require(d >= 1, "lambda_bound: dimension must be >= 1");
  require(sigma_t > 0.0, "lambda_bound: sigma_t must be positive");
  return std::sqrt(k / (d + 2)) / sigma_t;
}

// Closed form E||dz||^2 = (lambda^2 + 2 lambda)(d + 2) sigma_t^2 under the
// fixed-norm score model ||s||^2 = d / sigma_t^2.
inline double expected_step_second_moment(double lambda, int d, double sigma_t) {
  require(lambda > 0.0, "expected_step_second_moment: lambda must be positive");
  require(d >= 1, "expected_step_second_moment: dimension must be >= 1");
  require(sigma_t > 0.0, "expected_step_second_moment: sigma_t must be positive");
  return (lambda * lambda + 2.0 * lambda) * (d + 2) * sigma_t * sigma_t;
}

// v minus its component along g. When g is exactly a coordinate axis the
// projected component cancels bit-exactly, which the invariance tests rely on.
inline Eigen::VectorXd project_orthogonal(const Eigen::VectorXd& v, const Eigen::VectorXd& g) {
  require(v.size() == g.size(), "project_orthogonal: dimension mismatch");
  const double g_norm = g.norm();
  require(g_norm > 0.0, "project_orthogonal: zero direction");
  const Eigen::VectorXd unit = g / g_norm;
  return v - unit.dot(v) * unit;
}

// One unadjusted Langevin update with explicit step size and noise.
inline Eigen::VectorXd langevin_step(const Eigen::VectorXd& z, const Eigen::VectorXd& score,
                                     double eta, const Eigen::VectorXd& eps) {
  require(eta >= 0.0, "langevin_step: eta must be >= 0");
  return z + eta * score + std::sqrt(2.0 * eta) * eps;
}

// Measurement-consistent variant: both the drift and the noise are projected
// onto the orthogonal complement of g, so the update cannot move along the
// residual-gradient direction.
inline Eigen::VectorXd mclc_step(const Eigen::VectorXd& z, const Eigen::VectorXd& score,
                                 const Eigen::VectorXd& g, double eta,
                                 const Eigen::VectorXd& eps) {
  require(eta >= 0.0, "mclc_step: eta must be >= 0");
  return z + eta * project_orthogonal(score, g) +
         std::sqrt(2.0 * eta) * project_orthogonal(eps, g);
}

struct CorrectorOutcome {
  Eigen::VectorXd z;
  std::vector<CorrectionRecord> records;
};

using ResidualFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Runs cfg.n_c corrector iterations at timestep t. Per iteration: the score is
// re-evaluated at the current iterate, a fresh noise draw sets the adaptive
// step size, and the (projected) Langevin update is applied. The direction g
// stays fixed for the whole block unless cfg.recompute_g is set and a
// gradient callback is supplied. sigma_t only matters when bound_target is
// set (lambda clipping); pass 0 to disable clipping at the clean timestep.
//
// A numerically zero score ends the block early (stationary point). A zero g
// under the measurement-consistent mode falls back to the vanilla update for
// that iteration.
inline CorrectorOutcome run_corrector(Eigen::VectorXd z, const CorrectorConfig& cfg,
                                      const ScoreFn& score_fn, Eigen::VectorXd g, int t,
                                      double sigma_t, Rng& rng,
                                      const ResidualFn& residual_fn = {},
                                      const GradientFn& gradient_fn = {}) {
  CorrectorOutcome out{std::move(z), {}};
  if (!cfg.enabled()) return out;
  require(cfg.lambda > 0.0, "run_corrector: lambda must be positive");

  double lambda_eff = cfg.lambda;
  if (cfg.bound_target && sigma_t > 0.0) {
    lambda_eff =
        std::min(lambda_eff, lambda_bound(*cfg.bound_target, static_cast<int>(out.z.size()), sigma_t));
  }

  for (int c = 0; c < cfg.n_c; ++c) {
    if (cfg.recompute_g && gradient_fn) g = gradient_fn(out.z);
    const Eigen::VectorXd score = score_fn(out.z, t);
    const double score_norm = score.norm();
    if (score_norm < 1e-150) break;  // stationary point, nothing to do

    CorrectionRecord rec;
    rec.t = t;
    if (residual_fn) rec.residual_before = residual_fn(out.z);

    const Eigen::VectorXd eps = rng.gaussian_vector(out.z.size());
    const double eta = adaptive_step_size(score, eps, lambda_eff);
    rec.eta = eta;

    Eigen::VectorXd z_next;
    if (cfg.mode == CorrectorMode::kMeasurementConsistent && g.norm() >= 1e-12) {
      z_next = mclc_step(out.z, score, g, eta, eps);
      rec.mode = CorrectorMode::kMeasurementConsistent;
    } else {
      // Vanilla mode, or the measurement direction degenerated to zero.
      z_next = langevin_step(out.z, score, eta, eps);
      rec.mode = CorrectorMode::kVanilla;
    }
    if (!z_next.allFinite()) {
      throw Error("run_corrector: non-finite state at timestep " + std::to_string(t) +
                  ", iteration " + std::to_string(c + 1));
    }
    rec.delta_z_norm_sq = (z_next - out.z).squaredNorm();
    out.z = std::move(z_next);
    if (residual_fn) rec.residual_after = residual_fn(out.z);
    out.records.push_back(std::move(rec));
  }
  return out;
}

// mean ||u||^3 / mean(||u||^2)^{3/2} over sample rows; approaches 1 from above
// as the dimension grows (norm concentration).
inline double cubic_moment_ratio(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  require(n >= 1, "cubic_moment_ratio: need at least one sample");
  double sum_sq = 0.0;
  double sum_cube = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = samples.row(i).norm();
    sum_sq += norm * norm;
    sum_cube += norm * norm * norm;
  }
  const double mean_sq = sum_sq / static_cast<double>(n);
  require(mean_sq > 0.0, "cubic_moment_ratio: all samples are zero");
  return (sum_cube / static_cast<double>(n)) / std::pow(mean_sq, 1.5);
}

}  // namespace difflab

#endif  // DIFFLAB_CORRECTOR_HPP
