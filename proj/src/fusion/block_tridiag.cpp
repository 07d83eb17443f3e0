#include "fusion/block_tridiag.hpp"

#include <stdexcept>

namespace fusion {

using Eigen::MatrixXd;
using Eigen::VectorXd;

BlockTridiagonalSystem::BlockTridiagonalSystem(int num_blocks, int block_dim,
                                               int extra_dim)
    : block_dim_(block_dim), extra_dim_(extra_dim) {
  if (num_blocks < 1 || block_dim < 1) {
    throw std::invalid_argument("block tridiagonal system needs positive sizes");
  }
  diag_.assign(num_blocks, MatrixXd::Zero(block_dim, block_dim));
  lower_.assign(num_blocks > 1 ? num_blocks - 1 : 0,
                MatrixXd::Zero(block_dim, block_dim));
  rhs_.assign(num_blocks, VectorXd::Zero(block_dim));
  if (extra_dim_ > 0) {
    cross_.assign(num_blocks, MatrixXd::Zero(block_dim, extra_dim));
    extra_diag_ = MatrixXd::Zero(extra_dim, extra_dim);
    extra_rhs_ = VectorXd::Zero(extra_dim);
  }
}

void BlockTridiagonalSystem::reset() {
  for (auto& m : diag_) m.setZero();
  for (auto& m : lower_) m.setZero();
  for (auto& v : rhs_) v.setZero();
  for (auto& m : cross_) m.setZero();
  if (extra_dim_ > 0) {
    extra_diag_.setZero();
    extra_rhs_.setZero();
  }
}

struct BlockTridiagonalSystem::Factorization {
  // Cholesky factors of the Schur-reduced diagonal blocks U_t.
  std::vector<Eigen::LLT<MatrixXd>> U;
  // Forward elimination multipliers M_t = B_t U_t^{-1}.
  std::vector<MatrixXd> M;
};

BlockTridiagonalSystem::Factorization BlockTridiagonalSystem::factorize() const {
  const int N = num_blocks();
  Factorization f;
  f.U.reserve(N);
  f.M.reserve(N - 1);
  MatrixXd U = diag_[0];
  f.U.emplace_back(U.llt());
  if (f.U.back().info() != Eigen::Success) {
    throw std::runtime_error("block tridiagonal factorization failed");
  }
  for (int t = 1; t < N; ++t) {
    // M_{t-1} = B_{t-1} U_{t-1}^{-1}
    const MatrixXd M = f.U.back().solve(lower_[t - 1].transpose()).transpose();
    f.M.push_back(M);
    U = diag_[t] - M * lower_[t - 1].transpose();
    f.U.emplace_back(U.llt());
    if (f.U.back().info() != Eigen::Success) {
      throw std::runtime_error("block tridiagonal factorization failed");
    }
  }
  return f;
}

BlockTridiagonalSystem::Solution BlockTridiagonalSystem::solve() const {
  const int N = num_blocks();
  const Factorization f = factorize();

  // Forward/backward pass over [rhs | cross] so the Schur complement of the
  // extra block reuses the same factorization.
  const int m = extra_dim_;
  std::vector<MatrixXd> b(N);
  for (int t = 0; t < N; ++t) {
    b[t].resize(block_dim_, 1 + m);
    b[t].col(0) = rhs_[t];
    if (m > 0) b[t].rightCols(m) = cross_[t];
  }
  std::vector<MatrixXd> y(N);
  y[0] = b[0];
  for (int t = 1; t < N; ++t) {
    y[t] = b[t] - f.M[t - 1] * y[t - 1];
  }
  std::vector<MatrixXd> x(N);
  x[N - 1] = f.U[N - 1].solve(y[N - 1]);
  for (int t = N - 2; t >= 0; --t) {
    x[t] = f.U[t].solve(y[t] - lower_[t].transpose() * x[t + 1]);
  }

  Solution sol;
  sol.x.resize(N);
  if (m == 0) {
    for (int t = 0; t < N; ++t) sol.x[t] = x[t].col(0);
    return sol;
  }

  // Schur complement on the extra block: S z = g_e - C^T T^{-1} g.
  MatrixXd S = extra_diag_;
  VectorXd r = extra_rhs_;
  for (int t = 0; t < N; ++t) {
    S -= cross_[t].transpose() * x[t].rightCols(m);
    r -= cross_[t].transpose() * x[t].col(0);
  }
  Eigen::LLT<MatrixXd> Sllt(S);
  if (Sllt.info() != Eigen::Success) {
    throw std::runtime_error("extra-block Schur complement not positive definite");
  }
  sol.x_extra = Sllt.solve(r);
  for (int t = 0; t < N; ++t) {
    sol.x[t] = x[t].col(0) - x[t].rightCols(m) * sol.x_extra;
  }
  return sol;
}

BlockTridiagonalSystem::Marginals BlockTridiagonalSystem::marginal_covariances() const {
  const int N = num_blocks();
  const Factorization f = factorize();
  const int m = extra_dim_;

  Marginals out;
  out.cov.resize(N);

  // W = T^{-1} C, needed for the extra-block correction.
  std::vector<MatrixXd> W;
  if (m > 0) {
    std::vector<MatrixXd> y(N);
    y[0] = cross_[0];
    for (int t = 1; t < N; ++t) y[t] = cross_[t] - f.M[t - 1] * y[t - 1];
    W.resize(N);
    W[N - 1] = f.U[N - 1].solve(y[N - 1]);
    for (int t = N - 2; t >= 0; --t) {
      W[t] = f.U[t].solve(y[t] - lower_[t].transpose() * W[t + 1]);
    }
    MatrixXd S = extra_diag_;
    for (int t = 0; t < N; ++t) S -= cross_[t].transpose() * W[t];
    out.cov_extra = S.llt().solve(MatrixXd::Identity(m, m));
  }

  // Backward recursion on the tridiagonal part:
  // Sigma_N = U_N^{-1},  Sigma_t = U_t^{-1} + C_t Sigma_{t+1} C_t^T
  // with C_t = U_t^{-1} B_t^T.
  const MatrixXd I = MatrixXd::Identity(block_dim_, block_dim_);
  out.cov[N - 1] = f.U[N - 1].solve(I);
  for (int t = N - 2; t >= 0; --t) {
    const MatrixXd C = f.U[t].solve(lower_[t].transpose());
    out.cov[t] = f.U[t].solve(I) + C * out.cov[t + 1] * C.transpose();
  }
  for (auto& c : out.cov) c = 0.5 * (c + c.transpose()).eval();

  if (m > 0) {
    for (int t = 0; t < N; ++t) {
      out.cov[t] += W[t] * out.cov_extra * W[t].transpose();
    }
  }
  return out;
}

}  // namespace fusion
