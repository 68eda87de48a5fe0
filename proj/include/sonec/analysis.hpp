#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "sonec/rng.hpp"
#include "sonec/topology.hpp"

namespace sonec {

struct BoundInputs {
  double mu = 0.0;
  double b_max = 0.0;
  int length = 0;  // L
  double omega_norm = 0.0;
  Eigen::VectorXd a_k;  // combination weights into the node under study
};

// Closed-form coefficient of the one-step nonlinearity error bound:
//   2 b^2.5 L mu^1.5 ||w||^3 + mu^1.5 b^3.5 ||w||^3 (L sqrt(mu b) ||w|| + 4 sqrt(L))^2.
inline double c1_max(double mu, double b_max, int length, double omega_norm) {
  if (!(mu > 0.0) || !(b_max >= 0.0) || length < 1 || omega_norm < 0.0)
    throw std::invalid_argument("c1_max: bad inputs");
  const double L = static_cast<double>(length);
  const double w3 = omega_norm * omega_norm * omega_norm;
  const double mu15 = std::pow(mu, 1.5);
  const double lead = 2.0 * std::pow(b_max, 2.5) * L * mu15 * w3;
  const double paren = L * std::sqrt(mu * b_max) * omega_norm + 4.0 * std::sqrt(L);
  return lead + mu15 * std::pow(b_max, 3.5) * w3 * paren * paren;
}

inline double c1_max(const BoundInputs& in) {
  return c1_max(in.mu, in.b_max, in.length, in.omega_norm);
}

// Full bound: c1 * sum_{l1} sum_{l2} a_{l1,k} a_{l2,k} = c1 * (sum a)^2,
// which is just c1 for stochastic weights.
inline double error_bound(double c1, const Eigen::VectorXd& a_k) {
  if (c1 < 0.0) throw std::invalid_argument("error_bound: c1 must be >= 0");
  const double s = a_k.sum();
  return c1 * s * s;
}

// Mean-error transition matrix gamma_{l'k} = a_{l'k} - mu sigma_u^2 sum_l a_{lk} c_{l'l}.
// Support can reach two hops (a product of one a-hop and one c-hop).
inline Eigen::MatrixXd gamma_coefficients(const CombinationMatrices& w, double mu,
                                          double sigma_u2) {
  return w.a - mu * sigma_u2 * (w.c * w.a);
}

// Largest absolute eigenvalue.
inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("spectral_radius: square matrix required");
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("spectral_radius: eigenvalue iteration did not converge");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

struct MeanRecursionTrajectory {
  // mean_errors[i] is N x L: row l = E{omega_{l,i} - omega_o}.
  std::vector<Eigen::MatrixXd> mean_errors;
  std::vector<Eigen::MatrixXd> bias_terms;  // general case only, N x L per iteration
  bool divergent = false;                   // spectral radius of the transition >= 1
};

// Bias-free recursion for nonlinearity-free measurements: the general-case
// transition with the nonlinear forcing removed.
inline MeanRecursionTrajectory mean_recursion_special(const CombinationMatrices& w,
                                                      double mu, double sigma_u2,
                                                      const Eigen::MatrixXd& initial_errors,
                                                      int n_steps) {
  const Eigen::MatrixXd gamma = gamma_coefficients(w, mu, sigma_u2);
  MeanRecursionTrajectory traj;
  traj.divergent = spectral_radius(gamma) >= 1.0;
  traj.mean_errors.reserve(n_steps + 1);
  traj.mean_errors.push_back(initial_errors);
  for (int i = 0; i < n_steps; ++i)
    traj.mean_errors.push_back(gamma.transpose() * traj.mean_errors.back());
  return traj;
}

// f_l = -sigma_u^2 sum_{l'} c_{l',l} wtilde_{l'}, with wtilde rows indexed by
// the neighbors of node l.
inline Eigen::VectorXd appendix_f(const Eigen::VectorXd& c_l,
                                  double sigma_u2,
                                  const Eigen::MatrixXd& neighbor_mean_errors) {
  if (c_l.size() != neighbor_mean_errors.rows())
    throw std::invalid_argument("appendix_f: weight/ error row mismatch");
  return -sigma_u2 * (neighbor_mean_errors.transpose() * c_l);
}

// h = w^2 + 2 mu w (.) f + mu^2 t, elementwise; w is the previous mean estimate.
inline Eigen::VectorXd appendix_h(const Eigen::VectorXd& omega_prev, double mu,
                                  const Eigen::VectorXd& f_l, const Eigen::VectorXd& t_l) {
  return omega_prev.cwiseProduct(omega_prev) + 2.0 * mu * omega_prev.cwiseProduct(f_l) +
         mu * mu * t_l;
}

// t_r = E{p_r^2} for i.i.d. zero-mean Gaussian regressor entries:
// cross pairs contribute c_l' c_l'' sigma_u^4 e_{l',r} e_{l'',r}; the diagonal
// contributes c_l'^2 sigma_u^4 (||e_l'||^2 + 2 e_{l',r}^2).
inline Eigen::VectorXd appendix_t(const Eigen::VectorXd& c_l, double sigma_u2,
                                  const Eigen::MatrixXd& neighbor_mean_errors) {
  const auto n = c_l.size();
  if (n != neighbor_mean_errors.rows())
    throw std::invalid_argument("appendix_t: weight/error row mismatch");
  const auto L = neighbor_mean_errors.cols();
  const double su4 = sigma_u2 * sigma_u2;
  Eigen::VectorXd t = Eigen::VectorXd::Zero(L);
  for (Eigen::Index r = 0; r < L; ++r) {
    double cross = 0.0, diag = 0.0;
    for (Eigen::Index lp = 0; lp < n; ++lp) {
      const double er = neighbor_mean_errors(lp, r);
      cross += c_l(lp) * er;
      diag += c_l(lp) * c_l(lp) *
              (neighbor_mean_errors.row(lp).squaredNorm() + er * er);
    }
    // (sum c e_r)^2 covers the cross pairs plus c^2 e_r^2 once per neighbor;
    // the diagonal accumulator above already adds the remaining c^2 e_r^2.
    t(r) = su4 * (cross * cross + diag);
  }
  return t;
}

// Sixth/fourth-moment kernel A_{l',l',r} as derived, including its constant
// terms exactly as stated (the Monte Carlo companion reports the +sigma_v^2
// surplus rather than correcting it):
//   E{(u'w)^4 u_r^2} + E{(u'w)^2 v^2 u_r^2} + 5 sigma_v^2 E{(u'w)^2 u_r^2}
//   + sigma_v^2 + 3 sigma_v^4 sigma_u^2.
inline double appendix_a_diag(const Eigen::VectorXd& w, Eigen::Index r, double sigma_u2,
                              double sigma_v2) {
  const double ss = sigma_u2 * w.squaredNorm();     // Var(u'w)
  const double cv = sigma_u2 * w(r);                // Cov(u'w, u_r)
  const double m42 = 3.0 * ss * ss * sigma_u2 + 12.0 * ss * cv * cv;  // E{(u'w)^4 u_r^2}
  const double m22 = ss * sigma_u2 + 2.0 * cv * cv;                   // E{(u'w)^2 u_r^2}
  return m42 + 6.0 * sigma_v2 * m22 + sigma_v2 + 3.0 * sigma_v2 * sigma_v2 * sigma_u2;
}

// r_r = sum_{l'} c_{l',l}^2 b_{l'}^2 A_{l',l',r}; rows of neighbor_mean_estimates
// are the previous mean estimates omega_{l',i-1} of the neighbors of node l.
inline Eigen::VectorXd appendix_r(const Eigen::VectorXd& c_l, const Eigen::VectorXd& b_l,
                                  const Eigen::MatrixXd& neighbor_mean_estimates,
                                  double sigma_u2, double sigma_v2) {
  const auto n = c_l.size();
  if (n != b_l.size() || n != neighbor_mean_estimates.rows())
    throw std::invalid_argument("appendix_r: inconsistent sizes");
  const auto L = neighbor_mean_estimates.cols();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(L);
  for (Eigen::Index r = 0; r < L; ++r)
    for (Eigen::Index lp = 0; lp < n; ++lp)
      out(r) += c_l(lp) * c_l(lp) * b_l(lp) * b_l(lp) *
                appendix_a_diag(neighbor_mean_estimates.row(lp), r, sigma_u2, sigma_v2);
  return out;
}

// Sampling evaluator of the same kernel, E{(u'w + v)^4 u_r^2}, for
// cross-validating the closed form (and exposing its constant-term surplus).
inline double appendix_a_diag_mc(const Eigen::VectorXd& w, Eigen::Index r, double sigma_u,
                                 double sigma_v, long samples, std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto L = w.size();
  Eigen::VectorXd u(L);
  double acc = 0.0;
  for (long s = 0; s < samples; ++s) {
    for (Eigen::Index j = 0; j < L; ++j) u(j) = sigma_u * gauss(rng);
    const double x = u.dot(w) + sigma_v * gauss(rng);
    const double x2 = x * x;
    acc += x2 * x2 * u(r) * u(r);
  }
  return acc / static_cast<double>(samples);
}

// Biased mean recursion for nonlinearity in measurements and links:
//   wtilde_{k,i} = sum_{l'} gamma_{l'k} wtilde_{l',i-1} + sum_l a_lk b_l (h_l + r_l),
// with the mean estimates inside h and r taken as omega_o + wtilde (the
// standard independence substitution).
inline MeanRecursionTrajectory mean_recursion_general(
    const NetworkTopology& topo, const CombinationMatrices& w, double mu,
    double sigma_u2, double sigma_v2, const Eigen::VectorXd& b,
    const Eigen::VectorXd& omega_o, const Eigen::MatrixXd& initial_errors, int n_steps) {
  const int n = topo.n_nodes;
  const auto L = omega_o.size();
  const Eigen::MatrixXd gamma = gamma_coefficients(w, mu, sigma_u2);
  MeanRecursionTrajectory traj;
  traj.divergent = spectral_radius(gamma) >= 1.0;
  traj.mean_errors.reserve(n_steps + 1);
  traj.mean_errors.push_back(initial_errors);
  for (int i = 0; i < n_steps; ++i) {
    const Eigen::MatrixXd& prev = traj.mean_errors.back();
    Eigen::MatrixXd bias = Eigen::MatrixXd::Zero(n, L);
    Eigen::MatrixXd forcing(n, L);  // h_l + r_l per node
    for (int l = 0; l < n; ++l) {
      const auto& nbrs = topo.neighborhoods[l];
      const auto n_l = static_cast<Eigen::Index>(nbrs.size());
      Eigen::VectorXd c_l(n_l), b_nbrs(n_l);
      Eigen::MatrixXd nbr_err(n_l, L), nbr_est(n_l, L);
      for (Eigen::Index idx = 0; idx < n_l; ++idx) {
        const int lp = nbrs[idx];
        c_l(idx) = w.c(lp, l);
        b_nbrs(idx) = b(lp);
        nbr_err.row(idx) = prev.row(lp);
        nbr_est.row(idx) = prev.row(lp) + omega_o.transpose();
      }
      const Eigen::VectorXd f_l = appendix_f(c_l, sigma_u2, nbr_err);
      const Eigen::VectorXd t_l = appendix_t(c_l, sigma_u2, nbr_err);
      const Eigen::VectorXd omega_prev = omega_o + prev.row(l).transpose();
      const Eigen::VectorXd h_l = appendix_h(omega_prev, mu, f_l, t_l);
      const Eigen::VectorXd r_l = appendix_r(c_l, b_nbrs, nbr_est, sigma_u2, sigma_v2);
      forcing.row(l) = (h_l + r_l).transpose();
    }
    for (int k = 0; k < n; ++k)
      for (int l : topo.neighborhoods[k])
        bias.row(k) += w.a(l, k) * b(l) * forcing.row(l);
    traj.bias_terms.push_back(bias);
    traj.mean_errors.push_back(gamma.transpose() * prev + bias);
  }
  return traj;
}

struct GZeroReport {
  Eigen::VectorXd z_scores;      // per component of E{d^2 u}
  Eigen::VectorXd estimates;
  Eigen::VectorXd standard_errors;
  bool pass = false;             // all |z| < 4
};

// Monte Carlo check that E{d^2 u} vanishes for zero-mean regressors (the
// bias-free claim behind the measurement-only case). mean_u != 0 is the
// negative control.
inline GZeroReport verify_g_zero(const Eigen::VectorXd& w, double sigma_u, double sigma_v,
                                 double mean_u, long samples, std::uint64_t seed) {
  const auto L = w.size();
  std::mt19937_64 rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(L);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(L);
  Eigen::VectorXd u(L);
  for (long s = 0; s < samples; ++s) {
    for (Eigen::Index j = 0; j < L; ++j) u(j) = mean_u + sigma_u * gauss(rng);
    const double d = u.dot(w) + sigma_v * gauss(rng);
    const double d2 = d * d;
    for (Eigen::Index j = 0; j < L; ++j) {
      const double x = d2 * u(j);
      sum(j) += x;
      sum_sq(j) += x * x;
    }
  }
  GZeroReport rep;
  rep.estimates = sum / static_cast<double>(samples);
  rep.standard_errors.resize(L);
  rep.z_scores.resize(L);
  for (Eigen::Index j = 0; j < L; ++j) {
    const double var =
        (sum_sq(j) / samples - rep.estimates(j) * rep.estimates(j)) / samples;
    rep.standard_errors(j) = std::sqrt(std::max(var, 1e-300));
    rep.z_scores(j) = rep.estimates(j) / rep.standard_errors(j);
  }
  rep.pass = rep.z_scores.cwiseAbs().maxCoeff() < 4.0;
  return rep;
}

}  // namespace sonec
