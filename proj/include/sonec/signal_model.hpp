#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonec/config.hpp"
#include "sonec/rng.hpp"

namespace sonec {

// Regressor rows are accessed per time instant; keep them contiguous.
using RegressorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GroundTruth {
  Eigen::VectorXd omega_o;      // L
  Eigen::VectorXd b;            // N, second-order coefficient per sensor
  Eigen::VectorXd sigma_theta;  // N, measurement-noise std
  Eigen::VectorXd sigma_eta;    // N, link-noise std
  double sigma_u = 1.0;
};

// One realization of the network's data. Invariants (held exactly, bitwise):
//   d(k,i)       = u_{k,i}' * omega_o + v(k,i)
//   d_tilde(k,i) = d(k,i) + b_k * d(k,i)^2 + theta(k,i)
// v and theta are retained so tests can check both identities directly.
// The pilot block is a separate window used only by centralized training.
struct SensorDataset {
  int n_nodes = 0;
  int length = 0;  // L
  int n_iters = 0;
  std::vector<RegressorMatrix> u;  // per node: n_iters x L, row i = u_{k,i}'
  Eigen::MatrixXd d;               // N x I
  Eigen::MatrixXd v;
  Eigen::MatrixXd theta;
  Eigen::MatrixXd d_tilde;
  Eigen::MatrixXd pilot_d;        // N x T_p
  Eigen::MatrixXd pilot_d_tilde;  // N x T_p
  GroundTruth truth;

  // Measurements of the same system with the nonlinearity removed: the
  // "without nonlinearity" baseline observes d + theta.
  Eigen::MatrixXd clean_measurements() const { return d + theta; }
};

// d + b*d^2 + theta: the second-order sensor response.
inline double apply_nonlinearity(double d, double b, double theta) {
  return d + b * d * d + theta;
}

// Elementwise second-order distortion of an exchanged vector.
inline Eigen::VectorXd corrupt_link_vector(const Eigen::VectorXd& phi, double b_l,
                                           const Eigen::VectorXd& eta) {
  if (phi.size() != eta.size())
    throw std::invalid_argument("corrupt_link_vector: phi and eta sizes differ");
  return phi + b_l * phi.cwiseProduct(phi) + eta;
}

// Independent draws from U(-b_max, 0]. Deterministic for a fixed seed.
inline Eigen::VectorXd draw_nonlinear_coeffs(int n_nodes, double b_max,
                                             std::uint64_t seed) {
  if (!(b_max > 0.0))
    throw std::invalid_argument("draw_nonlinear_coeffs: b_max must be > 0");
  std::mt19937_64 rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, b_max);
  Eigen::VectorXd b(n_nodes);
  for (int k = 0; k < n_nodes; ++k) b(k) = -unif(rng);
  return b;
}

inline SensorDataset generate_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  const int n = cfg.n_nodes;
  const int L = cfg.length;
  const int I = cfg.n_iters;
  const int Tp = cfg.pilot_len;

  SensorDataset ds;
  ds.n_nodes = n;
  ds.length = L;
  ds.n_iters = I;

  {
    std::mt19937_64 rng = make_rng(substream_seed(seed, 0, Stream::omega));
    std::normal_distribution<double> gauss(0.0, 1.0);
    ds.truth.omega_o.resize(L);
    for (int j = 0; j < L; ++j) ds.truth.omega_o(j) = gauss(rng);
    if (cfg.omega_norm > 0.0) {
      const double nrm = ds.truth.omega_o.norm();
      if (nrm > 0.0) ds.truth.omega_o *= cfg.omega_norm / nrm;
    }
  }
  ds.truth.b = cfg.b_max > 0.0
                   ? draw_nonlinear_coeffs(n, cfg.b_max, substream_seed(seed, 0, Stream::coeffs))
                   : Eigen::VectorXd::Zero(n).eval();
  ds.truth.sigma_theta = Eigen::VectorXd::Constant(n, cfg.sigma_theta);
  ds.truth.sigma_eta = Eigen::VectorXd::Constant(n, cfg.sigma_eta);
  ds.truth.sigma_u = cfg.sigma_u;

  std::mt19937_64 urng = make_rng(substream_seed(seed, 0, Stream::regressors));
  std::mt19937_64 vrng = make_rng(substream_seed(seed, 0, Stream::model_noise));
  std::mt19937_64 trng = make_rng(substream_seed(seed, 0, Stream::measurement_noise));
  std::normal_distribution<double> gauss(0.0, 1.0);

  ds.u.resize(n);
  ds.d.resize(n, I);
  ds.v.resize(n, I);
  ds.theta.resize(n, I);
  ds.d_tilde.resize(n, I);
  for (int k = 0; k < n; ++k) {
    ds.u[k].resize(I, L);
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < L; ++j) ds.u[k](i, j) = cfg.sigma_u * gauss(urng);
    for (int i = 0; i < I; ++i) {
      ds.v(k, i) = cfg.sigma_v * gauss(vrng);
      ds.theta(k, i) = cfg.sigma_theta * gauss(trng);
      const double d = ds.u[k].row(i).dot(ds.truth.omega_o) + ds.v(k, i);
      ds.d(k, i) = d;
      ds.d_tilde(k, i) = apply_nonlinearity(d, ds.truth.b(k), ds.theta(k, i));
    }
  }

  // Pilot window: fresh regressors, consumed only through d and d_tilde.
  std::mt19937_64 prng = make_rng(substream_seed(seed, 0, Stream::pilot));
  ds.pilot_d.resize(n, Tp);
  ds.pilot_d_tilde.resize(n, Tp);
  Eigen::VectorXd up(L);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < Tp; ++i) {
      for (int j = 0; j < L; ++j) up(j) = cfg.sigma_u * gauss(prng);
      const double vv = cfg.sigma_v * gauss(prng);
      const double th = cfg.sigma_theta * gauss(prng);
      const double d = up.dot(ds.truth.omega_o) + vv;
      ds.pilot_d(k, i) = d;
      ds.pilot_d_tilde(k, i) = apply_nonlinearity(d, ds.truth.b(k), th);
    }
  }
  return ds;
}

namespace detail {

inline void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

// One file per field so another implementation can replay the exact dataset.
// Regressors go out as one file per node (rows = time).
inline void export_csv_bundle(const SensorDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  detail::write_matrix_csv(ds.truth.omega_o.transpose(), dir + "/omega_o.csv");
  detail::write_matrix_csv(ds.truth.b.transpose(), dir + "/b.csv");
  detail::write_matrix_csv(ds.d, dir + "/d.csv");
  detail::write_matrix_csv(ds.v, dir + "/v.csv");
  detail::write_matrix_csv(ds.theta, dir + "/theta.csv");
  detail::write_matrix_csv(ds.d_tilde, dir + "/d_tilde.csv");
  detail::write_matrix_csv(ds.pilot_d, dir + "/pilot_d.csv");
  detail::write_matrix_csv(ds.pilot_d_tilde, dir + "/pilot_d_tilde.csv");
  for (int k = 0; k < ds.n_nodes; ++k)
    detail::write_matrix_csv(ds.u[k], dir + "/u_node" + std::to_string(k + 1) + ".csv");
}

}  // namespace sonec
