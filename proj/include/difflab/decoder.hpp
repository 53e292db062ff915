#ifndef DIFFLAB_DECODER_HPP
#define DIFFLAB_DECODER_HPP

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "difflab/errors.hpp"
#include "difflab/rng.hpp"

namespace difflab {

// Latent-to-signal map. Either the identity (signal space == latent space) or
// a fixed seeded one-hidden-layer tanh network
//   decode(z) = W2 tanh(W1 z + b1) + b2,
// which is smooth, genuinely non-affine, and has the closed-form Jacobian
//   J(z) = W2 diag(1 - tanh^2(W1 z + b1)) W1.
class Decoder {
 public:
  static Decoder identity(Eigen::Index d) {
    require(d >= 1, "decoder: dimension must be >= 1");
    Decoder dec;
    dec.latent_dim_ = d;
    dec.signal_dim_ = d;
    dec.is_identity_ = true;
    return dec;
  }

  // hidden = 0 / signal = 0 pick the defaults 2d and 4d.
  static Decoder smooth_map(Eigen::Index d, std::uint64_t seed, Eigen::Index hidden = 0,
                            Eigen::Index signal = 0) {
    require(d >= 1, "decoder: dimension must be >= 1");
    if (hidden == 0) hidden = 2 * d;
    if (signal == 0) signal = 4 * d;
    require(hidden >= 1 && signal >= 1, "decoder: hidden/signal dims must be >= 1");
    Decoder dec;
    dec.latent_dim_ = d;
    dec.signal_dim_ = signal;
    dec.is_identity_ = false;
    // Fixed draw order (W1 row-major, b1, W2 row-major, b2) so a seed pins the
    // decoder exactly. Scales keep pre-activations O(1) for z ~ N(0, I), which
    // keeps tanh in its curved region.
    Rng rng(Rng::stream_seed(seed, 0x6465636fULL));  // "deco"
    const double w1_scale = 1.0 / std::sqrt(static_cast<double>(d));
    const double w2_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
    dec.w1_.resize(hidden, d);
    for (Eigen::Index i = 0; i < hidden; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) dec.w1_(i, j) = w1_scale * rng.gaussian();
    }
    dec.b1_.resize(hidden);
    for (Eigen::Index i = 0; i < hidden; ++i) dec.b1_[i] = 0.5 * rng.gaussian();
    dec.w2_.resize(signal, hidden);
    for (Eigen::Index i = 0; i < signal; ++i) {
      for (Eigen::Index j = 0; j < hidden; ++j) dec.w2_(i, j) = w2_scale * rng.gaussian();
    }
    dec.b2_.resize(signal);
    for (Eigen::Index i = 0; i < signal; ++i) dec.b2_[i] = 0.5 * rng.gaussian();
    return dec;
  }

  Eigen::Index latent_dim() const { return latent_dim_; }
  Eigen::Index signal_dim() const { return signal_dim_; }
  bool is_identity() const { return is_identity_; }

  Eigen::VectorXd decode(const Eigen::VectorXd& z) const {
    require(z.size() == latent_dim_, "decode: dimension mismatch");
    if (is_identity_) return z;
    return w2_ * (w1_ * z + b1_).array().tanh().matrix() + b2_;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& z) const {
    require(z.size() == latent_dim_, "decoder jacobian: dimension mismatch");
    if (is_identity_) return Eigen::MatrixXd::Identity(latent_dim_, latent_dim_);
    const Eigen::ArrayXd activation = (w1_ * z + b1_).array().tanh();
    const Eigen::VectorXd gate = (1.0 - activation.square()).matrix();
    return w2_ * gate.asDiagonal() * w1_;
  }

  // Pullback of a signal-space gradient: J(z)^T v, without forming J for the
  // identity case.
  Eigen::VectorXd jacobian_transpose_apply(const Eigen::VectorXd& z,
                                           const Eigen::VectorXd& v) const {
    require(v.size() == signal_dim_, "decoder pullback: dimension mismatch");
    if (is_identity_) return v;
    return jacobian(z).transpose() * v;
  }

 private:
  Decoder() = default;

  Eigen::Index latent_dim_ = 0;
  Eigen::Index signal_dim_ = 0;
  bool is_identity_ = true;
  Eigen::MatrixXd w1_, w2_;
  Eigen::VectorXd b1_, b2_;
};

struct PowerIterationResult {
  Eigen::VectorXd direction;  // unit vector in signal space
  double eigenvalue = 0.0;    // top eigenvalue of J J^T
  bool converged = false;
  int iterations = 0;
};

// Power iteration on J(z) J(z)^T. Deterministic: the start vector comes from a
// fixed internal seed. Sign convention: first coordinate with magnitude above
// 1e-14 is made positive.
inline PowerIterationResult principal_jacobian_direction(const Decoder& dec,
                                                         const Eigen::VectorXd& z,
                                                         int max_iters = 1000,
                                                         double tol = 1e-8) {
  require(max_iters >= 1, "power iteration: max_iters must be >= 1");
  const Eigen::MatrixXd jac = dec.jacobian(z);
  const Eigen::Index m = jac.rows();
  Rng rng(0xd1ff1abULL);
  Eigen::VectorXd v = rng.gaussian_vector(m);
  v.normalize();
  PowerIterationResult result;
  double prev = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::VectorXd w = jac * (jac.transpose() * v);
    const double norm = w.norm();
    require(norm > 0.0, "power iteration: jacobian annihilated the iterate");
    v = w / norm;
    const double eig = v.dot(jac * (jac.transpose() * v));
    result.iterations = it;
    if (it > 1 && std::abs(eig - prev) <= tol * std::max(1.0, std::abs(eig))) {
      result.converged = true;
      prev = eig;
      break;
    }
    prev = eig;
  }
  result.eigenvalue = prev;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-14) {
      if (v[i] < 0.0) v = -v;
      break;
    }
  }
  result.direction = v;
  return result;
}

// Contiguous index block of a latent vector, the probe target for the scaled
// outlier experiments.
struct Region {
  Eigen::Index start = 0;
  Eigen::Index length = 0;
};

inline void check_region(const Region& region, Eigen::Index dim) {
  require(region.length >= 1, "region: length must be >= 1");
  require(region.start >= 0 && region.start + region.length <= dim,
          "region: block [" + std::to_string(region.start) + ", " +
              std::to_string(region.start + region.length) + ") outside dimension " +
              std::to_string(dim));
}

// Multiplies the region's coordinates by `scale`; coordinates with magnitude
// below 1e-6 are set to `scale` instead so the outlier cannot vanish.
inline Eigen::VectorXd inject_scaled_outlier(const Eigen::VectorXd& z, const Region& region,
                                             double scale) {
  check_region(region, z.size());
  Eigen::VectorXd out = z;
  for (Eigen::Index i = region.start; i < region.start + region.length; ++i) {
    out[i] = (std::abs(out[i]) < 1e-6) ? scale : out[i] * scale;
  }
  return out;
}

// Mean Jacobian column norm over the region divided by the mean over its
// complement: how much the decoder amplifies the region relative to the rest.
inline double amplification_ratio(const Decoder& dec, const Eigen::VectorXd& z,
                                  const Region& region) {
  check_region(region, z.size());
  require(region.length < z.size(), "amplification_ratio: complement is empty");
  const Eigen::MatrixXd jac = dec.jacobian(z);
  double region_sum = 0.0;
  double other_sum = 0.0;
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    const double norm = jac.col(j).norm();
    if (j >= region.start && j < region.start + region.length) {
      region_sum += norm;
    } else {
      other_sum += norm;
    }
  }
  const double region_mean = region_sum / static_cast<double>(region.length);
  const double other_mean = other_sum / static_cast<double>(z.size() - region.length);
  require(other_mean > 0.0, "amplification_ratio: complement columns are all zero");
  return region_mean / other_mean;
}

}  // namespace difflab

#endif  // DIFFLAB_DECODER_HPP
