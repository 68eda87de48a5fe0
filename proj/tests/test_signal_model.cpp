#include "sonec/signal_model.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "oracles.hpp"
#include "sonec/algorithms.hpp"

using namespace sonec;

TEST_CASE("apply_nonlinearity") {
  REQUIRE(apply_nonlinearity(2.0, 0.0, 0.0) == 2.0);
  REQUIRE(apply_nonlinearity(2.0, -0.1, 0.0) == Catch::Approx(1.6));
  REQUIRE(apply_nonlinearity(1.0, 0.2, 0.0) == Catch::Approx(1.2));
}

TEST_CASE("corrupt_link_vector") {
  Eigen::VectorXd zero2 = Eigen::VectorXd::Zero(2);
  SECTION("identity at b = 0") {
    Eigen::VectorXd phi(2);
    phi << 1.0, -1.0;
    REQUIRE(oracles::exact_equal(corrupt_link_vector(phi, 0.0, zero2), phi));
  }
  SECTION("elementwise quadratic") {
    Eigen::VectorXd phi(2);
    phi << 2.0, 0.0;
    const Eigen::VectorXd out = corrupt_link_vector(phi, -0.1, zero2);
    REQUIRE(out(0) == Catch::Approx(1.6));
    REQUIRE(out(1) == 0.0);
  }
  SECTION("scalar consistency") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
      const double x = g(rng), b = 0.3 * g(rng);
      Eigen::VectorXd phi(1), eta = Eigen::VectorXd::Zero(1);
      phi << x;
      REQUIRE(corrupt_link_vector(phi, b, eta)(0) == apply_nonlinearity(x, b, 0.0));
    }
  }
  SECTION("size mismatch rejected") {
    REQUIRE_THROWS_AS(corrupt_link_vector(zero2, 0.1, Eigen::VectorXd::Zero(3)),
                      std::invalid_argument);
  }
}

TEST_CASE("draw_nonlinear_coeffs") {
  SECTION("rejects non-positive b_max") {
    REQUIRE_THROWS_AS(draw_nonlinear_coeffs(4, 0.0, 1), std::invalid_argument);
    REQUIRE_THROWS_AS(draw_nonlinear_coeffs(4, -1.0, 1), std::invalid_argument);
  }
  SECTION("degenerate interval collapses to zero") {
    const Eigen::VectorXd b = draw_nonlinear_coeffs(8, 1e-14, 3);
    REQUIRE(b.cwiseAbs().maxCoeff() < 1e-13);
  }
  SECTION("range for the reference setup") {
    const Eigen::VectorXd b = draw_nonlinear_coeffs(16, 0.4, 3);
    REQUIRE(b.size() == 16);
    REQUIRE(b.maxCoeff() <= 0.0);
    REQUIRE(b.minCoeff() > -0.4);
  }
  SECTION("deterministic per seed") {
    REQUIRE(oracles::exact_equal(draw_nonlinear_coeffs(16, 0.4, 3), draw_nonlinear_coeffs(16, 0.4, 3)));
    REQUIRE_FALSE(oracles::exact_equal(draw_nonlinear_coeffs(16, 0.4, 3), draw_nonlinear_coeffs(16, 0.4, 4)));
  }
  SECTION("law of large numbers: mean is -b_max/2") {
    const double b_max = 0.4;
    const Eigen::VectorXd b = draw_nonlinear_coeffs(1000000, b_max, 17);
    const double se = (b_max / std::sqrt(12.0)) / 1000.0;
    REQUIRE(std::abs(b.mean() - (-b_max / 2.0)) < 3.0 * se);
  }
}

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.n_nodes = 5;
  cfg.length = 4;
  cfg.n_iters = 64;
  cfg.pilot_len = 16;
  return cfg;
}

}  // namespace

TEST_CASE("noiseless linear dataset has d_tilde == d == U omega") {
  ExperimentConfig cfg = small_config();
  cfg.sigma_theta = 0.0;
  cfg.sigma_v = 0.0;
  cfg.b_max = 0.0;
  const SensorDataset ds = generate_dataset(cfg, 5);
  REQUIRE(oracles::exact_equal(ds.d_tilde, ds.d));
  for (int k = 0; k < cfg.n_nodes; ++k)
    for (int i = 0; i < cfg.n_iters; ++i)
      REQUIRE(ds.d(k, i) == ds.u[k].row(i).dot(ds.truth.omega_o));
}

TEST_CASE("reference-shape dataset") {
  ExperimentConfig cfg;
  cfg.n_iters = 128;
  const SensorDataset ds = generate_dataset(cfg, 9);
  REQUIRE(ds.n_nodes == 16);
  REQUIRE(ds.length == 20);
  REQUIRE(static_cast<int>(ds.u.size()) == 16);
  REQUIRE(ds.u[0].rows() == 128);
  REQUIRE(ds.u[0].cols() == 20);
  REQUIRE(ds.d.rows() == 16);
  REQUIRE(ds.truth.sigma_theta(3) == 0.045);
  REQUIRE(ds.truth.omega_o.norm() == Catch::Approx(cfg.omega_norm).margin(1e-12));
}

TEST_CASE("dataset generation is bit-identical per seed") {
  const ExperimentConfig cfg = small_config();
  const SensorDataset a = generate_dataset(cfg, 123);
  const SensorDataset b = generate_dataset(cfg, 123);
  REQUIRE(oracles::exact_equal(a.d_tilde, b.d_tilde));
  REQUIRE(oracles::exact_equal(a.truth.omega_o, b.truth.omega_o));
  for (int k = 0; k < cfg.n_nodes; ++k) REQUIRE(oracles::exact_equal(a.u[k], b.u[k]));
  const SensorDataset c = generate_dataset(cfg, 124);
  REQUIRE_FALSE(oracles::exact_equal(a.d_tilde, c.d_tilde));
}

TEST_CASE("generation invariants hold exactly") {
  ExperimentConfig cfg = small_config();
  cfg.sigma_v = 0.02;
  const SensorDataset ds = generate_dataset(cfg, 21);
  for (int k = 0; k < cfg.n_nodes; ++k)
    for (int i = 0; i < cfg.n_iters; ++i) {
      REQUIRE(ds.d(k, i) == ds.u[k].row(i).dot(ds.truth.omega_o) + ds.v(k, i));
      // theta must be recoverable exactly from the stored fields
      const double b = ds.truth.b(k);
      REQUIRE(ds.d_tilde(k, i) - ds.d(k, i) - b * ds.d(k, i) * ds.d(k, i) ==
              ds.theta(k, i));
    }
}

TEST_CASE("generated noise statistics match configured stds") {
  ExperimentConfig cfg = small_config();
  cfg.n_nodes = 8;
  cfg.n_iters = 20000;  // 160k samples
  cfg.sigma_v = 0.1;
  const SensorDataset ds = generate_dataset(cfg, 33);
  const auto check = [&](const Eigen::MatrixXd& m, double sigma) {
    const long n = m.size();
    const double mean = m.mean();
    const double var = (m.array() - mean).square().sum() / (n - 1);
    const double se_mean = sigma / std::sqrt(static_cast<double>(n));
    REQUIRE(std::abs(mean) < 3.0 * se_mean);
    const double se_var = sigma * sigma * std::sqrt(2.0 / (n - 1));
    REQUIRE(std::abs(var - sigma * sigma) < 3.0 * se_var);
  };
  check(ds.theta, cfg.sigma_theta);
  check(ds.v, cfg.sigma_v);
}

TEST_CASE("forward model inverts with the true coefficient") {
  // On the increasing branch of the response (1 + 2 b d > 0) the quadratic
  // root recovers d; tested jointly with the compensation operation.
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> db(-0.4, 0.4);
  std::uniform_real_distribution<double> dd(-3.0, 3.0);
  int tested = 0;
  while (tested < 2000) {
    const double b = db(rng), d = dd(rng);
    if (std::abs(b) < kEpsB || 1.0 + 2.0 * b * d <= 0.0) continue;
    ++tested;
    const double round = compensate_measurement(apply_nonlinearity(d, b, 0.0), b);
    REQUIRE(std::abs(round - d) < 1e-10);
  }
}

TEST_CASE("csv bundle export") {
  const ExperimentConfig cfg = small_config();
  const SensorDataset ds = generate_dataset(cfg, 2);
  const std::string dir =
      (std::filesystem::temp_directory_path() / "sonec_bundle_test").string();
  export_csv_bundle(ds, dir);
  for (const char* name : {"omega_o.csv", "b.csv", "d.csv", "v.csv", "theta.csv",
                           "d_tilde.csv", "pilot_d.csv", "pilot_d_tilde.csv",
                           "u_node1.csv", "u_node5.csv"})
    REQUIRE(std::filesystem::exists(dir + "/" + name));
  std::filesystem::remove_all(dir);
}
