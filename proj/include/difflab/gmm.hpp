#ifndef DIFFLAB_GMM_HPP
#define DIFFLAB_GMM_HPP

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "difflab/errors.hpp"
#include "difflab/gaussian.hpp"
#include "difflab/rng.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

// Gaussian mixture with exact density, score, and sampling. Components are
// validated and Cholesky-factored once at construction so the hot-path
// operations (score inside solver loops) do no factorization work.
class GmmPrior {
 public:
  GmmPrior() = default;

  GmmPrior(Eigen::VectorXd weights, std::vector<Eigen::VectorXd> means,
           std::vector<Eigen::MatrixXd> covs)
      : weights_(std::move(weights)), means_(std::move(means)), covs_(std::move(covs)) {
    const std::size_t k = means_.size();
    require(k >= 1, "gmm: need at least one component");
    require(static_cast<std::size_t>(weights_.size()) == k && covs_.size() == k,
            "gmm: weights/means/covs size mismatch");
    const Eigen::Index d = means_[0].size();
    require(d >= 1, "gmm: dimension must be >= 1");
    require(std::abs(weights_.sum() - 1.0) <= 1e-12, "gmm: weights must sum to 1");
    log_weights_.resize(k);
    llts_.reserve(k);
    log_norms_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      require(weights_[static_cast<Eigen::Index>(i)] > 0.0, "gmm: weights must be positive");
      require(means_[i].size() == d, "gmm: mean dimension mismatch");
      require(covs_[i].rows() == d && covs_[i].cols() == d, "gmm: covariance shape mismatch");
      log_weights_[static_cast<Eigen::Index>(i)] =
          std::log(weights_[static_cast<Eigen::Index>(i)]);
      llts_.push_back(detail::checked_llt(covs_[i], "gmm"));
      const double log_det = detail::log_det_from_llt(llts_.back());
      log_norms_[i] = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
    }
  }

  Eigen::Index dim() const { return means_.empty() ? 0 : means_[0].size(); }
  int components() const { return static_cast<int>(means_.size()); }
  double weight(int i) const { return weights_[i]; }
  const Eigen::VectorXd& mean(int i) const { return means_[static_cast<std::size_t>(i)]; }
  const Eigen::MatrixXd& cov(int i) const { return covs_[static_cast<std::size_t>(i)]; }

  double component_log_density(int i, const Eigen::VectorXd& z) const {
    const auto idx = static_cast<std::size_t>(i);
    const Eigen::VectorXd diff = z - means_[idx];
    const Eigen::VectorXd white = llts_[idx].matrixL().solve(diff);
    return log_norms_[idx] - 0.5 * white.squaredNorm();
  }

  double log_density(const Eigen::VectorXd& z) const {
    require(z.size() == dim(), "gmm: query dimension mismatch");
    const int k = components();
    double max_term = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd terms(k);
    for (int i = 0; i < k; ++i) {
      terms[i] = log_weights_[i] + component_log_density(i, z);
      max_term = std::max(max_term, terms[i]);
    }
    // Log-sum-exp with max shift; keeps far-tail queries finite even when all
    // component densities underflow in linear space.
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += std::exp(terms[i] - max_term);
    return max_term + std::log(acc);
  }

  // grad log density, computed from responsibilities in log space.
  Eigen::VectorXd score(const Eigen::VectorXd& z) const {
    require(z.size() == dim(), "gmm: query dimension mismatch");
    const int k = components();
    Eigen::VectorXd terms(k);
    double max_term = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
      terms[i] = log_weights_[i] + component_log_density(i, z);
      max_term = std::max(max_term, terms[i]);
    }
    double norm = 0.0;
    for (int i = 0; i < k; ++i) norm += std::exp(terms[i] - max_term);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(dim());
    for (int i = 0; i < k; ++i) {
      const double resp = std::exp(terms[i] - max_term) / norm;
      if (resp == 0.0) continue;
      const auto idx = static_cast<std::size_t>(i);
      s += resp * llts_[idx].solve(means_[idx] - z);
    }
    return s;
  }

  // Exact ancestral draw: categorical component choice, then a Cholesky
  // transform of a standard normal.
  Eigen::VectorXd sample(Rng& rng) const {
    const double u = rng.uniform();
    double cum = 0.0;
    int chosen = components() - 1;
    for (int i = 0; i < components(); ++i) {
      cum += weights_[i];
      if (u <= cum) {
        chosen = i;
        break;
      }
    }
    const auto idx = static_cast<std::size_t>(chosen);
    return means_[idx] + llts_[idx].matrixL() * rng.gaussian_vector(dim());
  }

  // n draws as rows.
  Eigen::MatrixXd sample_matrix(int n, Rng& rng) const {
    require(n >= 1, "gmm: sample count must be >= 1");
    Eigen::MatrixXd out(n, dim());
    for (int i = 0; i < n; ++i) out.row(i) = sample(rng).transpose();
    return out;
  }

 private:
  Eigen::VectorXd weights_;
  std::vector<Eigen::VectorXd> means_;
  std::vector<Eigen::MatrixXd> covs_;
  Eigen::VectorXd log_weights_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts_;
  std::vector<double> log_norms_;
};

// Mixture marginal under the forward process at timestep t:
// component i becomes N(sqrt(ab_t) mu_i, ab_t Sigma_i + (1 - ab_t) I).
inline GmmPrior marginal_at(const GmmPrior& prior, int t, const DiffusionSchedule& sched) {
  require(t >= 0 && t <= sched.T(), "marginal_at: timestep out of range");
  if (t == 0) return prior;
  const double ab = sched.alpha_bar_at(t);
  const double scale = std::sqrt(ab);
  const Eigen::MatrixXd noise_cov =
      (1.0 - ab) * Eigen::MatrixXd::Identity(prior.dim(), prior.dim());
  Eigen::VectorXd weights(prior.components());
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  means.reserve(prior.components());
  covs.reserve(prior.components());
  for (int i = 0; i < prior.components(); ++i) {
    weights[i] = prior.weight(i);
    means.push_back(scale * prior.mean(i));
    covs.push_back(ab * prior.cov(i) + noise_cov);
  }
  return GmmPrior(std::move(weights), std::move(means), std::move(covs));
}

// Default test prior: k components with means spread on a circle of given
// radius in the first two coordinates (zero elsewhere), isotropic covariance.
inline GmmPrior circle_prior(int d, int k = 3, double radius = 4.0, double cov_scale = 0.5) {
  require(d >= 2, "circle_prior: dimension must be >= 2");
  require(k >= 1, "circle_prior: need at least one component");
  Eigen::VectorXd weights = Eigen::VectorXd::Constant(k, 1.0 / k);
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  for (int i = 0; i < k; ++i) {
    const double angle = 2.0 * std::numbers::pi * i / k;
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    mu[0] = radius * std::cos(angle);
    mu[1] = radius * std::sin(angle);
    means.push_back(std::move(mu));
    covs.push_back(cov_scale * Eigen::MatrixXd::Identity(d, d));
  }
  return GmmPrior(std::move(weights), std::move(means), std::move(covs));
}

// Precomputed marginals for every timestep 0..T. Gives solver loops an O(1)
// score lookup and is safe to share across threads once built.
class AnalyticScore {
 public:
  AnalyticScore(const GmmPrior& prior, const DiffusionSchedule& sched) {
    marginals_.reserve(static_cast<std::size_t>(sched.T()) + 1);
    marginals_.push_back(prior);
    for (int t = 1; t <= sched.T(); ++t) marginals_.push_back(marginal_at(prior, t, sched));
  }

  const GmmPrior& marginal(int t) const {
    require(t >= 0 && t < static_cast<int>(marginals_.size()),
            "AnalyticScore: timestep out of range");
    return marginals_[static_cast<std::size_t>(t)];
  }

  Eigen::VectorXd operator()(const Eigen::VectorXd& z, int t) const {
    return marginal(t).score(z);
  }

  ScoreFn fn() const {
    return [this](const Eigen::VectorXd& z, int t) { return (*this)(z, t); };
  }

 private:
  std::vector<GmmPrior> marginals_;
};

// Plain-text serialization. Format:
//   gmm <dim> <components>
//   weight <w>
//   mean <d values>
//   cov <d values>   (one line per row)
// repeated per component. Round-trips exactly at %.17g precision.
inline void write_gmm(std::ostream& os, const GmmPrior& prior) {
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  os << "gmm " << prior.dim() << " " << prior.components() << "\n";
  for (int i = 0; i < prior.components(); ++i) {
    os << "weight ";
    put(prior.weight(i));
    os << "\nmean";
    for (Eigen::Index j = 0; j < prior.dim(); ++j) {
      os << " ";
      put(prior.mean(i)[j]);
    }
    os << "\n";
    for (Eigen::Index r = 0; r < prior.dim(); ++r) {
      os << "cov";
      for (Eigen::Index c = 0; c < prior.dim(); ++c) {
        os << " ";
        put(prior.cov(i)(r, c));
      }
      os << "\n";
    }
  }
}

inline GmmPrior read_gmm(std::istream& is) {
  std::string tag;
  Eigen::Index d = 0;
  int k = 0;
  require(static_cast<bool>(is >> tag) && tag == "gmm", "read_gmm: missing 'gmm' header");
  require(static_cast<bool>(is >> d >> k), "read_gmm: malformed header");
  require(d >= 1 && k >= 1, "read_gmm: bad dimensions in header");
  Eigen::VectorXd weights(k);
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  for (int i = 0; i < k; ++i) {
    require(static_cast<bool>(is >> tag) && tag == "weight", "read_gmm: expected 'weight'");
    require(static_cast<bool>(is >> weights[i]), "read_gmm: malformed weight");
    require(static_cast<bool>(is >> tag) && tag == "mean", "read_gmm: expected 'mean'");
    Eigen::VectorXd mu(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      require(static_cast<bool>(is >> mu[j]), "read_gmm: malformed mean");
    }
    means.push_back(std::move(mu));
    Eigen::MatrixXd cov(d, d);
    for (Eigen::Index r = 0; r < d; ++r) {
      require(static_cast<bool>(is >> tag) && tag == "cov", "read_gmm: expected 'cov'");
      for (Eigen::Index c = 0; c < d; ++c) {
        require(static_cast<bool>(is >> cov(r, c)), "read_gmm: malformed covariance");
      }
    }
    covs.push_back(std::move(cov));
  }
  return GmmPrior(std::move(weights), std::move(means), std::move(covs));
}

inline std::string gmm_to_string(const GmmPrior& prior) {
  std::ostringstream os;
  write_gmm(os, prior);
  return os.str();
}

inline GmmPrior gmm_from_string(const std::string& text) {
  std::istringstream is(text);
  return read_gmm(is);
}

}  // namespace difflab

#endif  // DIFFLAB_GMM_HPP
