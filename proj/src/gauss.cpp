#include "hiprssm/gauss.hpp"

#include <cmath>
#include <string>

#include "hiprssm/errors.hpp"

namespace hiprssm {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionMismatch(msg);
}

}  // namespace

DiagGaussian::DiagGaussian(Vector mean_in, Vector var_in)
    : mean(std::move(mean_in)), var(std::move(var_in)) {
  require(mean.size() == var.size(), "DiagGaussian: mean/var length mismatch");
  if ((var.array() <= 0.0).any()) {
    throw PSDViolation("DiagGaussian: variance must be strictly positive");
  }
}

FactorizedBelief::FactorizedBelief(Vector mean_in, Vector var_u_in,
                                   Vector var_l_in, Vector cov_s_in)
    : mean(std::move(mean_in)),
      var_u(std::move(var_u_in)),
      var_l(std::move(var_l_in)),
      cov_s(std::move(cov_s_in)) {
  const auto m = var_u.size();
  require(var_l.size() == m && cov_s.size() == m && mean.size() == 2 * m,
          "FactorizedBelief: inconsistent sizes");
  if ((var_u.array() <= 0.0).any() || (var_l.array() <= 0.0).any()) {
    throw PSDViolation("FactorizedBelief: variances must be positive");
  }
  // Per-coordinate 2x2 block PSD check.
  const Eigen::ArrayXd det =
      var_u.array() * var_l.array() - cov_s.array().square();
  if ((det < -kPsdTolerance).any()) {
    throw PSDViolation("FactorizedBelief: 2x2 block not PSD");
  }
}

DenseGaussian::DenseGaussian(Vector mean_in, Matrix cov_in)
    : mean(std::move(mean_in)), cov(std::move(cov_in)) {
  require(cov.rows() == mean.size() && cov.cols() == mean.size(),
          "DenseGaussian: covariance shape mismatch");
  const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
  if (asym > kPsdTolerance) {
    throw PSDViolation("DenseGaussian: covariance not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kPsdTolerance) {
    throw PSDViolation("DenseGaussian: covariance not PSD");
  }
}

DenseGaussian to_dense(const FactorizedBelief& b) {
  const auto m = b.obs_dim();
  Matrix cov = Matrix::Zero(2 * m, 2 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    cov(i, i) = b.var_u(i);
    cov(m + i, m + i) = b.var_l(i);
    cov(i, m + i) = b.cov_s(i);
    cov(m + i, i) = b.cov_s(i);
  }
  return DenseGaussian(b.mean, std::move(cov));
}

FactorizedBelief from_dense(const DenseGaussian& g) {
  const auto n = g.dim();
  if (n % 2 != 0) throw DimensionMismatch("from_dense: odd dimension");
  const auto m = n / 2;
  Vector var_u(m), var_l(m), cov_s(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    var_u(i) = g.cov(i, i);
    var_l(i) = g.cov(m + i, m + i);
    cov_s(i) = 0.5 * (g.cov(i, m + i) + g.cov(m + i, i));
  }
  // Everything off the three retained diagonals must be (numerically) zero.
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) {
      const bool on_diag = (r == c);
      const bool on_cross = (r + m == c) || (c + m == r);
      if (on_diag || on_cross) continue;
      if (std::abs(g.cov(r, c)) > kSparsityTolerance) {
        throw PatternViolation("from_dense: entry (" + std::to_string(r) +
                               "," + std::to_string(c) +
                               ") violates the factorized pattern");
      }
    }
  }
  return FactorizedBelief(g.mean, std::move(var_u), std::move(var_l),
                          std::move(cov_s));
}

DenseGaussian dense_condition(const DenseGaussian& prior,
                              const Vector& obs_mean, const Vector& obs_var,
                              const Matrix& H) {
  const auto d = prior.dim();
  const auto k = obs_mean.size();
  require(H.rows() == k && H.cols() == d, "dense_condition: H shape mismatch");
  require(obs_var.size() == k, "dense_condition: obs_var length mismatch");
  if ((obs_var.array() <= 0.0).any()) {
    throw PSDViolation("dense_condition: obs_var must be positive");
  }

  Matrix innovation = H * prior.cov * H.transpose();
  innovation.diagonal() += obs_var;
  innovation = 0.5 * (innovation + innovation.transpose().eval());

  Eigen::SelfAdjointEigenSolver<Matrix> es(innovation);
  const double lmax = es.eigenvalues().maxCoeff();
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin <= 0.0 || lmax / lmin > kConditionLimit) {
    throw SingularMatrix("dense_condition: innovation covariance singular");
  }

  const Matrix gain =
      prior.cov * H.transpose() * innovation.ldlt().solve(Matrix::Identity(k, k));
  Vector mean = prior.mean + gain * (obs_mean - H * prior.mean);
  Matrix cov = (Matrix::Identity(d, d) - gain * H) * prior.cov;
  cov = 0.5 * (cov + cov.transpose().eval());
  return DenseGaussian(std::move(mean), std::move(cov));
}

DenseGaussian identity1_marginal(const Vector& mu_u, const Matrix& sigma_u,
                                 const Vector& mu_v, const Matrix& sigma_v,
                                 const Matrix& A, const Matrix& B,
                                 const Vector& b, const Matrix& sigma) {
  require(A.cols() == mu_u.size() && B.cols() == mu_v.size(),
          "identity1_marginal: A/B column mismatch");
  require(A.rows() == B.rows() && A.rows() == b.size(),
          "identity1_marginal: output dimension mismatch");
  require(sigma_u.rows() == mu_u.size() && sigma_u.cols() == mu_u.size(),
          "identity1_marginal: Sigma_u shape mismatch");
  require(sigma_v.rows() == mu_v.size() && sigma_v.cols() == mu_v.size(),
          "identity1_marginal: Sigma_v shape mismatch");
  require(sigma.rows() == b.size() && sigma.cols() == b.size(),
          "identity1_marginal: Sigma shape mismatch");

  Vector mean = A * mu_u + b + B * mu_v;
  Matrix cov = A * sigma_u * A.transpose() + B * sigma_v * B.transpose() + sigma;
  cov = 0.5 * (cov + cov.transpose().eval());
  return DenseGaussian(std::move(mean), std::move(cov));
}

}  // namespace hiprssm
