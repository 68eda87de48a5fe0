#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sonec/algorithms.hpp"
#include "sonec/analysis.hpp"
#include "sonec/config.hpp"
#include "sonec/crb.hpp"
#include "sonec/signal_model.hpp"
#include "sonec/topology.hpp"

namespace sonec {

class AllRunsDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 10 log10 of the mean squared deviation, i.e. 20 log10 of the RMS norm.
inline double msd_db(const std::vector<double>& squared_norms) {
  if (squared_norms.empty()) throw AllRunsDivergedError("msd_db: no non-divergent runs");
  double acc = 0.0;
  for (double x : squared_norms) acc += x;
  return 10.0 * std::log10(acc / static_cast<double>(squared_norms.size()));
}

inline double msd_db(const std::vector<Eigen::VectorXd>& estimates,
                     const Eigen::VectorXd& truth) {
  std::vector<double> sq;
  sq.reserve(estimates.size());
  for (const auto& e : estimates) sq.push_back((e - truth).squaredNorm());
  return msd_db(sq);
}

struct DivergenceEvent {
  Algorithm algorithm;
  int run = 0;
  int iteration = 0;
  std::uint64_t run_seed = 0;  // replay handle
};

struct Diagnostics {
  std::vector<DivergenceEvent> divergences;
  std::int64_t clamped_discriminants = 0;
  int crb_failures = 0;
};

struct MsdTrace {
  int n_iters = 0;
  // Per-algorithm omega MSD in dB per iteration; only selected algorithms present.
  std::map<Algorithm, Eigen::VectorXd> msd_omega_db;
  // Coefficient MSD for the estimating variants.
  std::map<Algorithm, Eigen::VectorXd> msd_b_db;
  std::optional<double> crb_omega_db;
  std::optional<double> crb_b_db;
  std::optional<double> upper_bound_db;
};

struct ExperimentResult {
  MsdTrace trace;
  Diagnostics diagnostics;
};

// Seed for Monte Carlo run r; documented stateless mixing so any run can be
// replayed in isolation.
inline std::uint64_t run_seed(std::uint64_t master_seed, int run) {
  return splitmix64(master_seed ^ splitmix64(static_cast<std::uint64_t>(run) + 1));
}

namespace detail {

struct PerRunOutput {
  std::map<Algorithm, Eigen::VectorXd> sum_sq;    // per iteration, summed over nodes
  std::map<Algorithm, Eigen::VectorXd> b_sq;      // per iteration
  std::map<Algorithm, std::pair<bool, int>> diverged;  // flag, iteration
  double crb_omega_total = 0.0;
  double crb_b_total = 0.0;
  bool crb_ok = false;
  double bound = 0.0;
  std::int64_t clamped = 0;
  std::uint64_t seed = 0;
};

inline bool estimates_coefficients(Algorithm a) {
  return a == Algorithm::sonec_fd || a == Algorithm::sonec_sd ||
         a == Algorithm::sonec_comb_only;
}

inline void execute_run(const ExperimentConfig& cfg, const NetworkTopology& topo,
                        const CombinationMatrices& weights, int run, PerRunOutput& out) {
  const std::uint64_t seed = run_seed(cfg.master_seed, run);
  out.seed = seed;
  const SensorDataset data = generate_dataset(cfg, seed);
  const Eigen::MatrixXd clean = data.clean_measurements();
  const std::uint64_t link_seed = substream_seed(seed, 0, Stream::link_noise);

  for (Algorithm alg : cfg.algorithms) {
    // Every algorithm sees the same link-noise realization: a fresh generator
    // with the same seed, consumed in the same (iteration, transmitter) order.
    std::mt19937_64 link_rng = make_rng(link_seed);
    LinkModel link;
    link.sigma_eta = cfg.sigma_eta;
    link.rng = &link_rng;
    link.b = &data.truth.b;
    link.nonlinear = cfg.link_nonlinearity && alg != Algorithm::dlms_clean;

    RunResult res;
    switch (alg) {
      case Algorithm::dlms_nl:
        res = run_dlms(data, data.d_tilde, topo, weights, cfg.mu, link);
        break;
      case Algorithm::dlms_clean:
        res = run_dlms(data, clean, topo, weights, cfg.mu, link);
        break;
      case Algorithm::sonec_fd:
        res = run_sonec_dlms(data, topo, weights, {cfg.mu, cfg.mu_b},
                             SonecVariant::fully_distributed, link);
        break;
      case Algorithm::sonec_sd:
        res = run_sonec_dlms(data, topo, weights, {cfg.mu, cfg.mu_b},
                             SonecVariant::semi_distributed, link);
        break;
      case Algorithm::sonec_comb_only:
        res = run_sonec_dlms(data, topo, weights, {cfg.mu, cfg.mu_b},
                             SonecVariant::combination_only, link);
        break;
    }
    out.diverged[alg] = {res.diverged, res.diverged_at};
    out.clamped += res.compensation.clamped_discriminants;
    if (!res.diverged) {
      out.sum_sq[alg] = res.sq_dev.rowwise().sum();
      if (estimates_coefficients(alg)) out.b_sq[alg] = res.b_sq_dev;
    }
  }

  if (cfg.compute_crb) {
    try {
      ObservationModel model;
      model.U.reserve(data.n_nodes);
      for (const auto& Uk : data.u) model.U.push_back(Uk);
      model.omega = data.truth.omega_o;
      model.b = data.truth.b;
      model.sigma_theta2 =
          data.truth.sigma_theta.cwiseProduct(data.truth.sigma_theta);
      const CrbResult crb = crb_from_fim(assemble_fim(model));
      out.crb_omega_total = crb.trace_omega;
      out.crb_b_total = crb.trace_b;
      out.crb_ok = true;
    } catch (const std::exception&) {
      out.crb_ok = false;
    }
  }
  out.bound = error_bound(
      c1_max(cfg.mu, cfg.b_max, cfg.length, data.truth.omega_o.norm()),
      Eigen::VectorXd::Constant(1, 1.0));
}

}  // namespace detail

// Runs the paired Monte Carlo experiment: one topology shared by all runs,
// one dataset realization per run consumed by every selected algorithm, and a
// deterministic reduction in run order so results do not depend on the worker
// count. Divergent runs are excluded per algorithm and reported.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int n_threads = 0) {
  validate_config(cfg);
  const NetworkTopology topo = build_random_topology(
      cfg.n_nodes, cfg.topology_degree, substream_seed(cfg.master_seed, 0, Stream::topology));
  const CombinationMatrices weights = uniform_weights(topo);

  std::vector<detail::PerRunOutput> outputs(cfg.n_runs);
  if (n_threads <= 0) n_threads = static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, cfg.n_runs));

  if (n_threads == 1) {
    for (int r = 0; r < cfg.n_runs; ++r)
      detail::execute_run(cfg, topo, weights, r, outputs[r]);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < cfg.n_runs; r = next.fetch_add(1))
          detail::execute_run(cfg, topo, weights, r, outputs[r]);
      });
    }
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  result.trace.n_iters = cfg.n_iters;
  const int I = cfg.n_iters;
  for (Algorithm alg : cfg.algorithms) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(I);
    Eigen::VectorXd b_acc = Eigen::VectorXd::Zero(I);
    int valid = 0;
    for (int r = 0; r < cfg.n_runs; ++r) {
      const auto& out = outputs[r];
      const auto div = out.diverged.at(alg);
      if (div.first) {
        result.diagnostics.divergences.push_back({alg, r, div.second, out.seed});
        continue;
      }
      acc += out.sum_sq.at(alg);
      if (detail::estimates_coefficients(alg)) b_acc += out.b_sq.at(alg);
      ++valid;
    }
    if (valid == 0)
      throw AllRunsDivergedError(std::string("all runs diverged for ") + algorithm_name(alg));
    Eigen::VectorXd msd(I);
    for (int i = 0; i < I; ++i)
      msd(i) = 10.0 * std::log10(acc(i) / (static_cast<double>(valid) * cfg.n_nodes));
    result.trace.msd_omega_db[alg] = std::move(msd);
    if (detail::estimates_coefficients(alg)) {
      Eigen::VectorXd bmsd(I);
      for (int i = 0; i < I; ++i)
        bmsd(i) = 10.0 * std::log10(b_acc(i) / static_cast<double>(valid));
      result.trace.msd_b_db[alg] = std::move(bmsd);
    }
  }
  for (const auto& out : outputs) result.diagnostics.clamped_discriminants += out.clamped;

  if (cfg.compute_crb) {
    double crb_omega = 0.0, crb_b = 0.0;
    int crb_valid = 0;
    for (const auto& out : outputs) {
      if (!out.crb_ok) {
        ++result.diagnostics.crb_failures;
        continue;
      }
      crb_omega += out.crb_omega_total;
      crb_b += out.crb_b_total;
      ++crb_valid;
    }
    if (crb_valid > 0) {
      result.trace.crb_omega_db = 10.0 * std::log10(crb_omega / crb_valid);
      result.trace.crb_b_db = 10.0 * std::log10(crb_b / crb_valid);
    }
  }
  {
    double bound = 0.0;
    for (const auto& out : outputs) bound += out.bound;
    bound /= cfg.n_runs;
    if (bound > 0.0) result.trace.upper_bound_db = 10.0 * std::log10(bound);
  }
  return result;
}

namespace detail {

inline std::string format_g6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

}  // namespace detail

// One header row, then one row per iteration with 6 significant digits and LF
// endings; columns for unselected algorithms stay empty. Byte-identical for
// identical (config, master_seed).
inline void write_csv(const MsdTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "iter,msd_dlms_nl_db,msd_dlms_clean_db,msd_sonec_fd_db,msd_sonec_sd_db,"
         "msd_sonec_comb_db,msd_b_fd_db,msd_b_sd_db,crb_omega_db,crb_b_db,"
         "upper_bound_db\n";
  auto omega_cell = [&](Algorithm a, int i) -> std::string {
    const auto it = trace.msd_omega_db.find(a);
    return it == trace.msd_omega_db.end() ? std::string() : detail::format_g6(it->second(i));
  };
  auto b_cell = [&](Algorithm a, int i) -> std::string {
    const auto it = trace.msd_b_db.find(a);
    return it == trace.msd_b_db.end() ? std::string() : detail::format_g6(it->second(i));
  };
  const std::string crb_omega =
      trace.crb_omega_db ? detail::format_g6(*trace.crb_omega_db) : std::string();
  const std::string crb_b = trace.crb_b_db ? detail::format_g6(*trace.crb_b_db) : std::string();
  const std::string bound =
      trace.upper_bound_db ? detail::format_g6(*trace.upper_bound_db) : std::string();
  for (int i = 0; i < trace.n_iters; ++i) {
    out << i + 1 << ',' << omega_cell(Algorithm::dlms_nl, i) << ','
        << omega_cell(Algorithm::dlms_clean, i) << ',' << omega_cell(Algorithm::sonec_fd, i)
        << ',' << omega_cell(Algorithm::sonec_sd, i) << ','
        << omega_cell(Algorithm::sonec_comb_only, i) << ',' << b_cell(Algorithm::sonec_fd, i)
        << ',' << b_cell(Algorithm::sonec_sd, i) << ',' << crb_omega << ',' << crb_b << ','
        << bound << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace sonec
