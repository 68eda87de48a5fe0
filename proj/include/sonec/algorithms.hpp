#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonec/signal_model.hpp"
#include "sonec/topology.hpp"

namespace sonec {

// Below this magnitude the quadratic-root inverse is numerically 0/0; its
// b -> 0 limit is the identity, which is what gets used.
inline constexpr double kEpsB = 1e-8;

// A run aborts (with the iteration index) once an estimate exceeds this norm
// or any state stops being finite.
inline constexpr double kDivergenceNorm = 1e6;

struct StepSizes {
  double mu;
  double mu_b;
};

inline void validate_step_sizes(const StepSizes& s) {
  if (!(s.mu > 0.0)) throw std::invalid_argument("step sizes: mu must be > 0");
  if (!(s.mu_b >= 0.0)) throw std::invalid_argument("step sizes: mu_b must be >= 0");
}

// Negative discriminants mean the quadratic model cannot produce the observed
// value; they are clamped to zero and counted here rather than aborting.
struct CompensationStats {
  std::int64_t clamped_discriminants = 0;
};

// Inverts d_tilde = d + b*d^2 on the increasing branch of the response:
// d_hat = (-1 + sqrt(1 + 4*b*d_tilde)) / (2*b), identity for |b| < kEpsB.
inline double compensate_measurement(double d_tilde, double b_hat,
                                     CompensationStats* stats = nullptr) {
  if (std::abs(b_hat) < kEpsB) return d_tilde;
  double disc = 1.0 + 4.0 * b_hat * d_tilde;
  if (disc < 0.0) {
    if (stats) ++stats->clamped_discriminants;
    disc = 0.0;
  }
  return (-1.0 + std::sqrt(disc)) / (2.0 * b_hat);
}

// Same inverse applied elementwise to a received intermediate estimate.
inline Eigen::VectorXd compensate_intermediate(const Eigen::VectorXd& phi_tilde,
                                               double b_hat_l,
                                               CompensationStats* stats = nullptr) {
  if (std::abs(b_hat_l) < kEpsB) return phi_tilde;
  Eigen::VectorXd out(phi_tilde.size());
  for (Eigen::Index j = 0; j < phi_tilde.size(); ++j)
    out(j) = compensate_measurement(phi_tilde(j), b_hat_l, stats);
  return out;
}

// b_hat <- b_hat + mu_b * c_k (.) e_tilde (.) d_hat^2, elementwise over the
// neighborhood of node k.
inline void estimate_nonlinearity_step(Eigen::VectorXd& b_hat,
                                       const Eigen::VectorXd& d_hat,
                                       const Eigen::VectorXd& e_tilde,
                                       const Eigen::VectorXd& c_k, double mu_b) {
  if (b_hat.size() != d_hat.size() || b_hat.size() != e_tilde.size() ||
      b_hat.size() != c_k.size())
    throw std::invalid_argument("estimate_nonlinearity_step: inconsistent sizes");
  b_hat += mu_b * c_k.cwiseProduct(e_tilde).cwiseProduct(d_hat.cwiseProduct(d_hat));
}

// phi = omega + mu * sum_l c_lk * e_tilde_l * u_{l,i} with
// e_tilde_l = d_tilde_l - b_hat_l * d_hat_l^2 - u_{l,i}' omega.
inline Eigen::VectorXd adaptation_step(const Eigen::VectorXd& omega_prev,
                                       const SensorDataset& data, int i,
                                       const std::vector<int>& nbrs,
                                       const Eigen::VectorXd& b_hat,
                                       const Eigen::VectorXd& d_hat,
                                       const Eigen::VectorXd& c_k, double mu) {
  Eigen::VectorXd phi = omega_prev;
  for (std::size_t idx = 0; idx < nbrs.size(); ++idx) {
    const int l = nbrs[idx];
    const double e = data.d_tilde(l, i) - b_hat(idx) * d_hat(idx) * d_hat(idx) -
                     data.u[l].row(i).dot(omega_prev);
    phi.noalias() += (mu * c_k(idx) * e) * data.u[l].row(i).transpose();
  }
  return phi;
}

// omega = sum_l a_lk * phi_hat_l.
inline Eigen::VectorXd combine_step(const std::vector<Eigen::VectorXd>& phis,
                                    const Eigen::VectorXd& a_k) {
  if (phis.empty() || static_cast<Eigen::Index>(phis.size()) != a_k.size())
    throw std::invalid_argument("combine_step: one weight per neighbor required");
  Eigen::VectorXd omega = Eigen::VectorXd::Zero(phis[0].size());
  for (std::size_t idx = 0; idx < phis.size(); ++idx)
    omega.noalias() += a_k(static_cast<Eigen::Index>(idx)) * phis[idx];
  return omega;
}

// What the sensors' power amplifiers do to an exchanged vector. The identity
// configuration models clean links.
struct LinkModel {
  bool nonlinear = false;
  double sigma_eta = 0.0;
  const Eigen::VectorXd* b = nullptr;  // transmit-side coefficients, required when nonlinear
  std::mt19937_64* rng = nullptr;      // required when sigma_eta > 0

  bool identity() const { return !nonlinear && sigma_eta == 0.0; }

  Eigen::VectorXd transmit(const Eigen::VectorXd& phi, int l) const {
    if (identity()) return phi;
    Eigen::VectorXd out = phi;
    if (nonlinear) out += (*b)(l)*phi.cwiseProduct(phi);
    if (sigma_eta > 0.0) {
      std::normal_distribution<double> gauss(0.0, sigma_eta);
      for (Eigen::Index j = 0; j < out.size(); ++j) out(j) += gauss(*rng);
    }
    return out;
  }
};

struct NodeState {
  Eigen::VectorXd omega;  // L
  Eigen::VectorXd phi;    // L
  Eigen::VectorXd b_hat;  // |N_k|, node's estimate of each neighbor's coefficient
};

// One adapt-then-combine iteration of plain DLMS on the given measurement
// stream. The link model is applied once per transmitter.
inline void dlms_atc_step(std::vector<NodeState>& states, const SensorDataset& data,
                          const Eigen::MatrixXd& measurements, int i,
                          const NetworkTopology& topo, const CombinationMatrices& w,
                          double mu, const LinkModel& link,
                          std::vector<Eigen::VectorXd>* workspace = nullptr) {
  const int n = topo.n_nodes;
  for (int k = 0; k < n; ++k) {
    NodeState& st = states[k];
    st.phi = st.omega;
    for (int l : topo.neighborhoods[k]) {
      const double e = measurements(l, i) - data.u[l].row(i).dot(st.omega);
      st.phi.noalias() += (mu * w.c(l, k) * e) * data.u[l].row(i).transpose();
    }
  }
  std::vector<Eigen::VectorXd> local;
  std::vector<Eigen::VectorXd>& received = workspace ? *workspace : local;
  received.resize(n);
  for (int l = 0; l < n; ++l) received[l] = link.transmit(states[l].phi, l);
  for (int k = 0; k < n; ++k) {
    NodeState& st = states[k];
    st.omega.setZero();
    for (int l : topo.neighborhoods[k]) st.omega.noalias() += w.a(l, k) * received[l];
  }
}

// Least-squares fit of each node's coefficient over the pilot window where
// clean d is available at the fusion center:
//   b_hat_l = sum_i (d_tilde - d) d^2 / sum_i d^4.
inline Eigen::VectorXd centralized_train_b(const Eigen::MatrixXd& pilot_d,
                                           const Eigen::MatrixXd& pilot_d_tilde) {
  if (pilot_d.rows() != pilot_d_tilde.rows() || pilot_d.cols() != pilot_d_tilde.cols())
    throw std::invalid_argument("centralized_train_b: pilot shapes differ");
  const int n = static_cast<int>(pilot_d.rows());
  Eigen::VectorXd b_hat(n);
  for (int l = 0; l < n; ++l) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < pilot_d.cols(); ++i) {
      const double d = pilot_d(l, i);
      const double d2 = d * d;
      num += (pilot_d_tilde(l, i) - d) * d2;
      den += d2 * d2;
    }
    if (den == 0.0)
      throw std::runtime_error("centralized_train_b: degenerate pilot at node " +
                               std::to_string(l + 1));
    b_hat(l) = num / den;
  }
  return b_hat;
}

enum class SonecVariant {
  fully_distributed,
  semi_distributed,
  combination_only,
};

struct RunOptions {
  bool record_omega = false;      // keep per-iteration per-node estimates
  bool record_bhat_avg = false;   // keep per-iteration averaged coefficient estimates
};

struct RunResult {
  // ||omega_{k,i} - omega_o||^2, one row per iteration. Rows at and past a
  // divergence are left at zero and must not enter averages.
  Eigen::MatrixXd sq_dev;
  // ||avg_k b_hat_{l,k} - b||^2 per iteration (empty for plain DLMS).
  Eigen::VectorXd b_sq_dev;
  bool diverged = false;
  int diverged_at = -1;
  CompensationStats compensation;
  std::vector<Eigen::MatrixXd> omega_trajectory;       // per iter: N x L
  std::vector<Eigen::VectorXd> bhat_avg_trajectory;    // per iter: N
};

namespace detail {

inline bool state_ok(const std::vector<NodeState>& states) {
  for (const NodeState& st : states) {
    if (!st.omega.allFinite() || st.omega.norm() > kDivergenceNorm) return false;
    if (st.b_hat.size() > 0 && !st.b_hat.allFinite()) return false;
  }
  return true;
}

inline void record_iteration(RunResult& res, const std::vector<NodeState>& states,
                             const Eigen::VectorXd& omega_o, int i,
                             const RunOptions& opts) {
  const int n = static_cast<int>(states.size());
  for (int k = 0; k < n; ++k)
    res.sq_dev(i, k) = (states[k].omega - omega_o).squaredNorm();
  if (opts.record_omega) {
    Eigen::MatrixXd snap(n, omega_o.size());
    for (int k = 0; k < n; ++k) snap.row(k) = states[k].omega.transpose();
    res.omega_trajectory.push_back(std::move(snap));
  }
}

}  // namespace detail

// Plain ATC-DLMS over the whole dataset. `measurements` selects the stream
// (nonlinear d_tilde or the clean d + theta baseline).
inline RunResult run_dlms(const SensorDataset& data, const Eigen::MatrixXd& measurements,
                          const NetworkTopology& topo, const CombinationMatrices& w,
                          double mu, const LinkModel& link,
                          const RunOptions& opts = {}) {
  const int n = topo.n_nodes;
  const int I = data.n_iters;
  std::vector<NodeState> states(n);
  for (NodeState& st : states) {
    st.omega = Eigen::VectorXd::Zero(data.length);
    st.phi = st.omega;
  }
  RunResult res;
  res.sq_dev = Eigen::MatrixXd::Zero(I, n);
  std::vector<Eigen::VectorXd> workspace;
  for (int i = 0; i < I; ++i) {
    dlms_atc_step(states, data, measurements, i, topo, w, mu, link, &workspace);
    if (!detail::state_ok(states)) {
      res.diverged = true;
      res.diverged_at = i;
      break;
    }
    detail::record_iteration(res, states, data.truth.omega_o, i, opts);
  }
  return res;
}

// The five-step estimated-and-compensated algorithm. Per iteration and node:
// compensate measurements with the previous coefficient estimates, update the
// estimates, adapt on the compensated residuals, exchange, compensate the
// received intermediate estimates (when links are nonlinear), combine.
// Variants:
//   fully_distributed: all five steps, coefficients estimated online;
//   semi_distributed: coefficients fitted once from the pilot window, frozen;
//   combination_only: plain DLMS adaptation (d_hat = d_tilde), coefficients
//     estimated online, compensation applied only to received vectors.
inline RunResult run_sonec_dlms(const SensorDataset& data, const NetworkTopology& topo,
                                const CombinationMatrices& w, const StepSizes& steps,
                                SonecVariant variant, const LinkModel& link,
                                const RunOptions& opts = {}) {
  validate_step_sizes(steps);
  const int n = topo.n_nodes;
  const int I = data.n_iters;
  const int L = data.length;

  std::vector<NodeState> states(n);
  std::vector<Eigen::VectorXd> c_cols(n), a_cols(n);
  for (int k = 0; k < n; ++k) {
    states[k].omega = Eigen::VectorXd::Zero(L);
    states[k].phi = states[k].omega;
    const auto& nbrs = topo.neighborhoods[k];
    c_cols[k].resize(nbrs.size());
    a_cols[k].resize(nbrs.size());
    for (std::size_t idx = 0; idx < nbrs.size(); ++idx) {
      c_cols[k](idx) = w.c(nbrs[idx], k);
      a_cols[k](idx) = w.a(nbrs[idx], k);
    }
    states[k].b_hat = Eigen::VectorXd::Zero(nbrs.size());
  }
  if (variant == SonecVariant::semi_distributed) {
    const Eigen::VectorXd trained = centralized_train_b(data.pilot_d, data.pilot_d_tilde);
    for (int k = 0; k < n; ++k) {
      const auto& nbrs = topo.neighborhoods[k];
      for (std::size_t idx = 0; idx < nbrs.size(); ++idx)
        states[k].b_hat(idx) = trained(nbrs[idx]);
    }
  }

  RunResult res;
  res.sq_dev = Eigen::MatrixXd::Zero(I, n);
  res.b_sq_dev = Eigen::VectorXd::Zero(I);

  const bool compensate_links = link.nonlinear;
  std::vector<Eigen::VectorXd> received(n);
  Eigen::VectorXd d_hat, e_tilde;
  Eigen::VectorXd b_acc(n);
  Eigen::VectorXi b_cnt(n);

  for (int i = 0; i < I; ++i) {
    for (int k = 0; k < n; ++k) {
      NodeState& st = states[k];
      const auto& nbrs = topo.neighborhoods[k];
      const auto n_k = static_cast<Eigen::Index>(nbrs.size());
      d_hat.resize(n_k);
      e_tilde.resize(n_k);
      // step 2 with the previous estimates; combination_only leaves the
      // measurements untouched
      for (Eigen::Index idx = 0; idx < n_k; ++idx) {
        const double dt = data.d_tilde(nbrs[idx], i);
        d_hat(idx) = variant == SonecVariant::combination_only
                         ? dt
                         : compensate_measurement(dt, st.b_hat(idx), &res.compensation);
      }
      for (Eigen::Index idx = 0; idx < n_k; ++idx) {
        const int l = nbrs[idx];
        const double comp = variant == SonecVariant::combination_only
                                ? 0.0
                                : st.b_hat(idx) * d_hat(idx) * d_hat(idx);
        e_tilde(idx) = data.d_tilde(l, i) - comp - data.u[l].row(i).dot(st.omega);
      }
      // step 1 (skipped by the pilot-trained variant)
      if (variant != SonecVariant::semi_distributed)
        estimate_nonlinearity_step(st.b_hat, d_hat, e_tilde, c_cols[k], steps.mu_b);
      // step 3 on the residuals computed above
      st.phi = st.omega;
      for (Eigen::Index idx = 0; idx < n_k; ++idx) {
        const int l = nbrs[idx];
        st.phi.noalias() +=
            (steps.mu * c_cols[k](idx) * e_tilde(idx)) * data.u[l].row(i).transpose();
      }
    }
    // exchange
    for (int l = 0; l < n; ++l) received[l] = link.transmit(states[l].phi, l);
    // steps 4 and 5
    for (int k = 0; k < n; ++k) {
      NodeState& st = states[k];
      const auto& nbrs = topo.neighborhoods[k];
      st.omega.setZero();
      for (std::size_t idx = 0; idx < nbrs.size(); ++idx) {
        const int l = nbrs[idx];
        if (compensate_links) {
          st.omega.noalias() +=
              a_cols[k](static_cast<Eigen::Index>(idx)) *
              compensate_intermediate(received[l], st.b_hat(idx), &res.compensation);
        } else {
          st.omega.noalias() += a_cols[k](static_cast<Eigen::Index>(idx)) * received[l];
        }
      }
    }

    if (!detail::state_ok(states)) {
      res.diverged = true;
      res.diverged_at = i;
      break;
    }
    detail::record_iteration(res, states, data.truth.omega_o, i, opts);

    // l-th coefficient as seen by the network: average over estimating nodes
    b_acc.setZero();
    b_cnt.setZero();
    for (int k = 0; k < n; ++k) {
      const auto& nbrs = topo.neighborhoods[k];
      for (std::size_t idx = 0; idx < nbrs.size(); ++idx) {
        b_acc(nbrs[idx]) += states[k].b_hat(idx);
        b_cnt(nbrs[idx]) += 1;
      }
    }
    for (int l = 0; l < n; ++l) b_acc(l) /= static_cast<double>(b_cnt(l));
    res.b_sq_dev(i) = (b_acc - data.truth.b).squaredNorm();
    if (opts.record_bhat_avg) res.bhat_avg_trajectory.push_back(b_acc);
  }
  return res;
}

enum class CountedAlgorithm { dlms, sonec_dlms };

struct OperationCounts {
  long long adds = 0;
  long long mults = 0;
  long long nonlinear = 0;
};

// Per-node per-iteration arithmetic cost; n_k counts the node itself.
inline OperationCounts operation_counts(CountedAlgorithm alg, int n_k, int length) {
  if (n_k < 1 || length < 1)
    throw std::invalid_argument("operation_counts: n_k and L must be >= 1");
  const long long n = n_k, L = length;
  if (alg == CountedAlgorithm::dlms)
    return {L * (3 * n - 1), L * (3 * n + 1), 0};
  return {L * (9 * n + 1), L * (9 * n + 2), 3 * n};
}

}  // namespace sonec
