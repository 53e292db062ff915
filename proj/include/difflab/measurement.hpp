#ifndef DIFFLAB_MEASUREMENT_HPP
#define DIFFLAB_MEASUREMENT_HPP

#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "difflab/decoder.hpp"
#include "difflab/errors.hpp"
#include "difflab/operators.hpp"
#include "difflab/rng.hpp"

namespace difflab {

// An observed inverse problem: y = A(decode(z*)) + noise_sigma * xi, with the
// ground truth kept alongside for evaluation.
struct Measurement {
  ForwardOperator op;
  Eigen::VectorXd y;
  double noise_sigma = 0.0;
  std::optional<Eigen::VectorXd> truth_z;  // latent ground truth
  std::optional<Eigen::VectorXd> truth_x;  // decoded ground truth
};

inline Measurement make_measurement(ForwardOperator op, const Decoder& dec,
                                    const Eigen::VectorXd& z_true, double noise_sigma,
                                    Rng& rng) {
  require(noise_sigma >= 0.0, "make_measurement: noise sigma must be >= 0");
  require(op.input_dim() == dec.signal_dim(),
          "make_measurement: operator input does not match decoder output");
  Measurement meas{std::move(op), Eigen::VectorXd(), noise_sigma, z_true, std::nullopt};
  const Eigen::VectorXd x_true = dec.decode(z_true);
  meas.truth_x = x_true;
  meas.y = meas.op.apply(x_true);
  if (noise_sigma > 0.0) meas.y += noise_sigma * rng.gaussian_vector(meas.y.size());
  return meas;
}

// Squared data misfit r(z) = || y - A(decode(z)) ||^2.
inline double residual(const Measurement& meas, const Decoder& dec,
                       const Eigen::VectorXd& z) {
  const Eigen::VectorXd misfit = meas.y - meas.op.apply(dec.decode(z));
  return misfit.squaredNorm();
}

// grad_z r(z) = -2 J_D(z)^T A^T (y - A(decode(z))).
inline Eigen::VectorXd residual_gradient(const Measurement& meas, const Decoder& dec,
                                         const Eigen::VectorXd& z) {
  const Eigen::VectorXd misfit = meas.y - meas.op.apply(dec.decode(z));
  return -2.0 * dec.jacobian_transpose_apply(z, meas.op.adjoint(misfit));
}

}  // namespace difflab

#endif  // DIFFLAB_MEASUREMENT_HPP
