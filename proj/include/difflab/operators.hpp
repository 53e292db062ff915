#ifndef DIFFLAB_OPERATORS_HPP
#define DIFFLAB_OPERATORS_HPP

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "difflab/errors.hpp"
#include "difflab/rng.hpp"

namespace difflab {

// Linear forward operator acting on decoded signals. Four kinds:
//  - identity
//  - mask: drops coordinates (selected once from a seed); output is the kept
//    subset, the adjoint re-embeds with zeros
//  - average_downsample: non-overlapping block means
//  - circular_blur: circular convolution with a short kernel
//  - compose: sequential application, first element applied first
// Adjoints are exact, which the tests check via <Ax, v> == <x, A^T v>.
class ForwardOperator {
 public:
  static ForwardOperator identity(Eigen::Index dim) {
    require(dim >= 1, "operator: dimension must be >= 1");
    ForwardOperator op(Kind::kIdentity, dim, dim);
    return op;
  }

  static ForwardOperator mask(Eigen::Index dim, double drop_prob, std::uint64_t seed) {
    require(dim >= 1, "mask: dimension must be >= 1");
    require(drop_prob >= 0.0 && drop_prob < 1.0, "mask: drop probability must be in [0,1)");
    Rng rng(Rng::stream_seed(seed, 0x6d61736bULL));  // "mask"
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (rng.uniform() > drop_prob) kept.push_back(i);
    }
    require(!kept.empty(), "mask: drew a mask dropping every coordinate; lower drop_prob");
    ForwardOperator op(Kind::kMask, dim, static_cast<Eigen::Index>(kept.size()));
    op.kept_ = std::move(kept);
    return op;
  }

  // Mask with an explicit kept-index set (deterministic building block for
  // tests and single-coordinate measurements).
  static ForwardOperator mask_keep(Eigen::Index dim, std::vector<Eigen::Index> kept) {
    require(dim >= 1, "mask: dimension must be >= 1");
    require(!kept.empty(), "mask: kept set must be nonempty");
    for (std::size_t i = 0; i < kept.size(); ++i) {
      require(kept[i] >= 0 && kept[i] < dim, "mask: kept index out of range");
      if (i > 0) require(kept[i] > kept[i - 1], "mask: kept indices must be increasing");
    }
    ForwardOperator op(Kind::kMask, dim, static_cast<Eigen::Index>(kept.size()));
    op.kept_ = std::move(kept);
    return op;
  }

  static ForwardOperator average_downsample(Eigen::Index dim, int factor) {
    require(dim >= 1, "downsample: dimension must be >= 1");
    require(factor >= 1, "downsample: factor must be >= 1");
    require(dim % factor == 0, "downsample: input length " + std::to_string(dim) +
                                   " not divisible by factor " + std::to_string(factor));
    ForwardOperator op(Kind::kDownsample, dim, dim / factor);
    op.factor_ = factor;
    return op;
  }

  static ForwardOperator circular_blur(Eigen::Index dim, Eigen::VectorXd kernel) {
    require(dim >= 1, "blur: dimension must be >= 1");
    require(kernel.size() >= 1, "blur: kernel must be nonempty");
    require(kernel.size() <= dim, "blur: kernel longer than signal");
    ForwardOperator op(Kind::kBlur, dim, dim);
    op.kernel_ = std::move(kernel);
    return op;
  }

  static ForwardOperator compose(std::vector<ForwardOperator> ops) {
    require(!ops.empty(), "compose: need at least one operator");
    for (std::size_t i = 1; i < ops.size(); ++i) {
      require(ops[i].input_dim() == ops[i - 1].output_dim(),
              "compose: dimension mismatch between stage " + std::to_string(i - 1) +
                  " and stage " + std::to_string(i));
    }
    ForwardOperator op(Kind::kCompose, ops.front().input_dim(), ops.back().output_dim());
    op.children_ = std::move(ops);
    return op;
  }

  Eigen::Index input_dim() const { return input_dim_; }
  Eigen::Index output_dim() const { return output_dim_; }
  const std::vector<Eigen::Index>& kept_indices() const { return kept_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    require(x.size() == input_dim_, "operator apply: dimension mismatch");
    switch (kind_) {
      case Kind::kIdentity:
        return x;
      case Kind::kMask: {
        Eigen::VectorXd out(output_dim_);
        for (Eigen::Index i = 0; i < output_dim_; ++i) out[i] = x[kept_[static_cast<std::size_t>(i)]];
        return out;
      }
      case Kind::kDownsample: {
        Eigen::VectorXd out(output_dim_);
        for (Eigen::Index i = 0; i < output_dim_; ++i) {
          out[i] = x.segment(i * factor_, factor_).mean();
        }
        return out;
      }
      case Kind::kBlur: {
        const Eigen::Index n = input_dim_;
        const Eigen::Index m = kernel_.size();
        const Eigen::Index offset = m / 2;
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          double acc = 0.0;
          for (Eigen::Index j = 0; j < m; ++j) {
            const Eigen::Index src = ((i + j - offset) % n + n) % n;
            acc += kernel_[j] * x[src];
          }
          out[i] = acc;
        }
        return out;
      }
      case Kind::kCompose: {
        Eigen::VectorXd v = x;
        for (const auto& child : children_) v = child.apply(v);
        return v;
      }
    }
    throw Error("operator apply: unreachable");
  }

  Eigen::VectorXd adjoint(const Eigen::VectorXd& v) const {
    require(v.size() == output_dim_, "operator adjoint: dimension mismatch");
    switch (kind_) {
      case Kind::kIdentity:
        return v;
      case Kind::kMask: {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(input_dim_);
        for (Eigen::Index i = 0; i < output_dim_; ++i) out[kept_[static_cast<std::size_t>(i)]] = v[i];
        return out;
      }
      case Kind::kDownsample: {
        Eigen::VectorXd out(input_dim_);
        const double inv = 1.0 / factor_;
        for (Eigen::Index i = 0; i < output_dim_; ++i) {
          out.segment(i * factor_, factor_).setConstant(v[i] * inv);
        }
        return out;
      }
      case Kind::kBlur: {
        // Correlation with the kernel, i.e. convolution with the reversed kernel.
        const Eigen::Index n = input_dim_;
        const Eigen::Index m = kernel_.size();
        const Eigen::Index offset = m / 2;
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = 0; j < m; ++j) {
            const Eigen::Index dst = ((i + j - offset) % n + n) % n;
            out[dst] += kernel_[j] * v[i];
          }
        }
        return out;
      }
      case Kind::kCompose: {
        Eigen::VectorXd v2 = v;
        for (auto it = children_.rbegin(); it != children_.rend(); ++it) v2 = it->adjoint(v2);
        return v2;
      }
    }
    throw Error("operator adjoint: unreachable");
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd dense(output_dim_, input_dim_);
    Eigen::VectorXd basis = Eigen::VectorXd::Zero(input_dim_);
    for (Eigen::Index j = 0; j < input_dim_; ++j) {
      basis[j] = 1.0;
      dense.col(j) = apply(basis);
      basis[j] = 0.0;
    }
    return dense;
  }

  // Largest singular value, via dense SVD; dimensions here are desk scale.
  double sigma_max() const {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_dense());
    return svd.singularValues()[0];
  }

 private:
  enum class Kind { kIdentity, kMask, kDownsample, kBlur, kCompose };

  ForwardOperator(Kind kind, Eigen::Index in, Eigen::Index out)
      : kind_(kind), input_dim_(in), output_dim_(out) {}

  Kind kind_;
  Eigen::Index input_dim_ = 0;
  Eigen::Index output_dim_ = 0;
  std::vector<Eigen::Index> kept_;
  int factor_ = 1;
  Eigen::VectorXd kernel_;
  std::vector<ForwardOperator> children_;
};

}  // namespace difflab

#endif  // DIFFLAB_OPERATORS_HPP
