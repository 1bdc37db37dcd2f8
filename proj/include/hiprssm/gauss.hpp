#ifndef HIPRSSM_GAUSS_HPP_
#define HIPRSSM_GAUSS_HPP_

#include <Eigen/Dense>

namespace hiprssm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Tolerances shared by the exact-inference numerics.
inline constexpr double kPsdTolerance = 1e-9;
inline constexpr double kVarianceFloor = 1e-8;
inline constexpr double kSparsityTolerance = 1e-12;
inline constexpr double kConditionLimit = 1e12;

/// Diagonal-covariance Gaussian over a vector.
struct DiagGaussian {
  Vector mean;
  Vector var;

  DiagGaussian() = default;
  DiagGaussian(Vector mean_in, Vector var_in);

  Eigen::Index dim() const { return mean.size(); }
};

/// Latent state belief with the three-diagonal covariance factorization.
/// The mean holds the observation part (first m entries) followed by the
/// memory part (last m entries). The block covariance is
///   [[diag(var_u), diag(cov_s)], [diag(cov_s), diag(var_l)]].
struct FactorizedBelief {
  Vector mean;   // 2m
  Vector var_u;  // m
  Vector var_l;  // m
  Vector cov_s;  // m

  FactorizedBelief() = default;
  FactorizedBelief(Vector mean_in, Vector var_u_in, Vector var_l_in,
                   Vector cov_s_in);

  Eigen::Index obs_dim() const { return var_u.size(); }
  Vector upper_mean() const { return mean.head(obs_dim()); }
  Vector lower_mean() const { return mean.tail(obs_dim()); }
};

/// Full-covariance Gaussian; test/oracle representation only.
struct DenseGaussian {
  Vector mean;
  Matrix cov;

  DenseGaussian() = default;
  DenseGaussian(Vector mean_in, Matrix cov_in);

  Eigen::Index dim() const { return mean.size(); }
};

/// Expand the factorized belief into its dense block form.
DenseGaussian to_dense(const FactorizedBelief& b);

/// Inverse of to_dense. Throws PatternViolation if g.cov has mass outside
/// the factorized sparsity pattern (tolerance kSparsityTolerance).
FactorizedBelief from_dense(const DenseGaussian& g);

/// Gaussian conditioning on an observation y ~ N(Hz, diag(obs_var)) using
/// full matrix inversion. Oracle for both the context and observation
/// updates. Throws SingularMatrix if the innovation covariance has
/// condition number above kConditionLimit.
DenseGaussian dense_condition(const DenseGaussian& prior,
                              const Vector& obs_mean, const Vector& obs_var,
                              const Matrix& H);

/// Marginal of y where y | u,v ~ N(Au + b + Bv, Sigma) with independent
/// u ~ N(mu_u, Sigma_u), v ~ N(mu_v, Sigma_v):
///   y ~ N(A mu_u + b + B mu_v, A Sigma_u A^T + B Sigma_v B^T + Sigma).
DenseGaussian identity1_marginal(const Vector& mu_u, const Matrix& sigma_u,
                                 const Vector& mu_v, const Matrix& sigma_v,
                                 const Matrix& A, const Matrix& B,
                                 const Vector& b, const Matrix& sigma);

}  // namespace hiprssm

#endif  // HIPRSSM_GAUSS_HPP_
