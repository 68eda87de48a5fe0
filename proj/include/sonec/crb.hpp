#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sonec/signal_model.hpp"

namespace sonec {

class NonIdentifiableError : public std::runtime_error {
 public:
  NonIdentifiableError(const std::string& what, Eigen::VectorXd null_dir)
      : std::runtime_error(what), null_direction(std::move(null_dir)) {}
  Eigen::VectorXd null_direction;
};

// Gaussian observation model behind the bound: node k observes
// x_k = U_k w + b_k (U_k w)^2 + z_k with z_k ~ N(0, sigma_theta2_k I).
struct ObservationModel {
  std::vector<Eigen::MatrixXd> U;  // per node: I x L
  Eigen::VectorXd omega;           // evaluation point for w
  Eigen::VectorXd b;               // N
  Eigen::VectorXd sigma_theta2;    // N, per-node noise variance

  int n_nodes() const { return static_cast<int>(U.size()); }
};

inline void validate_model(const ObservationModel& m) {
  const int n = m.n_nodes();
  if (n < 1) throw std::invalid_argument("observation model: no nodes");
  if (m.b.size() != n || m.sigma_theta2.size() != n)
    throw std::invalid_argument("observation model: b / sigma sizes must match node count");
  for (const auto& Uk : m.U) {
    if (Uk.rows() < 1 || Uk.cols() != m.omega.size())
      throw std::invalid_argument("observation model: regressor shape mismatch");
  }
  if (m.sigma_theta2.minCoeff() <= 0.0)
    throw std::invalid_argument("observation model: variances must be > 0");
}

// d r_k / d omega: row t of the result is u_{k,t}' scaled by (1 + 2 b_k u_{k,t}' w).
inline Eigen::MatrixXd sensitivity_p(const ObservationModel& m, int k) {
  const Eigen::VectorXd scale =
      (1.0 + 2.0 * m.b(k) * (m.U[k] * m.omega).array()).matrix();
  return scale.asDiagonal() * m.U[k];
}

// d r_k / d b_k = (U_k w)^2; the cross-node derivative is identically zero.
inline Eigen::VectorXd sensitivity_pprime(const ObservationModel& m, int k) {
  const Eigen::VectorXd s = m.U[k] * m.omega;
  return s.cwiseProduct(s);
}

struct FimBlocks {
  Eigen::MatrixXd f_omega;   // L x L
  Eigen::MatrixXd f_b;       // N x N (diagonal by model structure)
  Eigen::MatrixXd f_bomega;  // N x L

  Eigen::MatrixXd assemble() const {
    const auto L = f_omega.rows();
    const auto N = f_b.rows();
    Eigen::MatrixXd fim(L + N, L + N);
    fim.topLeftCorner(L, L) = f_omega;
    fim.topRightCorner(L, N) = f_bomega.transpose();
    fim.bottomLeftCorner(N, L) = f_bomega;
    fim.bottomRightCorner(N, N) = f_b;
    return fim;
  }
};

// F_w = sum_k p_k' p_k / sigma_k^2, F_b,kk = ||p'_k||^2 / sigma_k^2,
// F_bw row k = p'_k' p_k / sigma_k^2.
inline FimBlocks assemble_fim(const ObservationModel& m) {
  validate_model(m);
  const int n = m.n_nodes();
  const auto L = m.omega.size();
  FimBlocks blocks;
  blocks.f_omega = Eigen::MatrixXd::Zero(L, L);
  blocks.f_b = Eigen::MatrixXd::Zero(n, n);
  blocks.f_bomega = Eigen::MatrixXd::Zero(n, L);
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd p = sensitivity_p(m, k);
    const Eigen::VectorXd pp = sensitivity_pprime(m, k);
    const double inv = 1.0 / m.sigma_theta2(k);
    blocks.f_omega.noalias() += inv * (p.transpose() * p);
    blocks.f_b(k, k) = inv * pp.squaredNorm();
    blocks.f_bomega.row(k) = inv * (pp.transpose() * p);
  }
  return blocks;
}

struct CrbResult {
  Eigen::VectorXd crb_omega;  // L per-parameter variance lower bounds
  Eigen::VectorXd crb_b;      // N
  double trace_omega = 0.0;
  double trace_b = 0.0;
};

inline CrbResult crb_from_fim(const FimBlocks& blocks) {
  const Eigen::MatrixXd fim = blocks.assemble();
  const auto L = blocks.f_omega.rows();
  const auto N = blocks.f_b.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fim);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("crb_from_fim: eigendecomposition failed");
  const double lam_min = eig.eigenvalues().minCoeff();
  const double lam_max = eig.eigenvalues().maxCoeff();
  if (lam_min <= 0.0 || lam_max / lam_min > 1e12) {
    Eigen::Index which;
    eig.eigenvalues().minCoeff(&which);
    const Eigen::VectorXd null_dir = eig.eigenvectors().col(which);
    std::ostringstream os;
    os << "non-identifiable parameterization (eigenvalue " << lam_min
       << ", condition number "
       << (lam_min > 0.0 ? lam_max / lam_min : std::numeric_limits<double>::infinity())
       << "); null direction dominated by parameter index ";
    Eigen::Index imax;
    null_dir.cwiseAbs().maxCoeff(&imax);
    os << imax + 1 << (imax < L ? " (omega block)" : " (b block)");
    throw NonIdentifiableError(os.str(), null_dir);
  }
  const Eigen::MatrixXd inv = fim.ldlt().solve(Eigen::MatrixXd::Identity(L + N, L + N));
  CrbResult out;
  out.crb_omega = inv.diagonal().head(L);
  out.crb_b = inv.diagonal().tail(N);
  out.trace_omega = out.crb_omega.sum();
  out.trace_b = out.crb_b.sum();
  return out;
}

// Total-variance lower bounds on the squared-deviation metrics, in dB.
inline std::pair<double, double> crb_msd_db(const CrbResult& crb) {
  return {10.0 * std::log10(crb.trace_omega), 10.0 * std::log10(crb.trace_b)};
}

}  // namespace sonec
