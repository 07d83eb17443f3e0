// Block-tridiagonal normal equations: Cholesky-style forward elimination,
// back substitution, and the backward recursion for marginal covariances.
// Optionally one extra dense state block (a global parameter) coupled to
// every time block, handled by a Schur complement.
#pragma once

#include <vector>

#include <Eigen/Dense>

namespace fusion {

// H x = g with H symmetric positive definite, diag blocks A_t (n x n) and
// sub-diagonal blocks B_t = H(t+1, t).
class BlockTridiagonalSystem {
 public:
  BlockTridiagonalSystem(int num_blocks, int block_dim, int extra_dim = 0);

  void reset();

  int num_blocks() const { return static_cast<int>(diag_.size()); }
  int block_dim() const { return block_dim_; }
  bool has_extra() const { return extra_dim_ > 0; }

  Eigen::MatrixXd& diag(int t) { return diag_[t]; }
  Eigen::MatrixXd& lower(int t) { return lower_[t]; }  // block (t+1, t)
  Eigen::VectorXd& rhs(int t) { return rhs_[t]; }
  Eigen::MatrixXd& cross(int t) { return cross_[t]; }  // block (t, extra)
  Eigen::MatrixXd& extra_diag() { return extra_diag_; }
  Eigen::VectorXd& extra_rhs() { return extra_rhs_; }

  // Solves H x = rhs. Returns per-block solution plus the extra block.
  struct Solution {
    std::vector<Eigen::VectorXd> x;
    Eigen::VectorXd x_extra;
  };
  Solution solve() const;

  // Block-diagonal entries of H^{-1} (per-time marginal covariances) and,
  // when present, the extra-block marginal covariance.
  struct Marginals {
    std::vector<Eigen::MatrixXd> cov;
    Eigen::MatrixXd cov_extra;
  };
  Marginals marginal_covariances() const;

 private:
  struct Factorization;
  Factorization factorize() const;

  int block_dim_;
  int extra_dim_;
  std::vector<Eigen::MatrixXd> diag_;
  std::vector<Eigen::MatrixXd> lower_;
  std::vector<Eigen::VectorXd> rhs_;
  std::vector<Eigen::MatrixXd> cross_;
  Eigen::MatrixXd extra_diag_;
  Eigen::VectorXd extra_rhs_;
};

}  // namespace fusion
