#include "sonec/analysis.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "oracles.hpp"
#include "sonec/algorithms.hpp"

using namespace sonec;

TEST_CASE("c1_max") {
  SECTION("vanishes with the nonlinearity") {
    REQUIRE(c1_max(0.01, 0.0, 20, 1.0) == 0.0);
    REQUIRE(c1_max(0.01, 1e-9, 20, 1.0) < 1e-12);
  }
  SECTION("frozen reference evaluation") {
    // independent evaluation of the closed form at mu=0.01, b=0.4, L=20, ||w||=1
    REQUIRE(c1_max(0.01, 0.4, 20, 1.0) ==
            Catch::Approx(0.01889695503471329).epsilon(1e-12));
  }
  SECTION("monotone nondecreasing in every argument") {
    const double mus[] = {0.001, 0.005, 0.01, 0.05};
    const double bs[] = {0.05, 0.1, 0.2, 0.4};
    const int Ls[] = {1, 5, 20, 40};
    const double ws[] = {0.25, 0.5, 1.0, 2.0};
    for (int i = 0; i + 1 < 4; ++i)
      for (double b : bs)
        for (int L : Ls)
          for (double w : ws) {
            REQUIRE(c1_max(mus[i], b, L, w) <= c1_max(mus[i + 1], b, L, w));
            REQUIRE(c1_max(b / 2, bs[i], L, w) <= c1_max(b / 2, bs[i + 1], L, w));
            REQUIRE(c1_max(mus[i], b, Ls[i], w) <= c1_max(mus[i], b, Ls[i + 1], w));
            REQUIRE(c1_max(mus[i], b, L, ws[i]) <= c1_max(mus[i], b, L, ws[i + 1]));
          }
  }
}

TEST_CASE("error_bound") {
  SECTION("stochastic weights give exactly c1") {
    Eigen::VectorXd a(4);
    a << 0.1, 0.2, 0.3, 0.4;
    const double c1 = 0.7133;
    REQUIRE(error_bound(c1, a) == Catch::Approx(c1).epsilon(1e-15));
  }
  SECTION("half-half weights") {
    Eigen::VectorXd a(2);
    a << 0.5, 0.5;
    REQUIRE(error_bound(2.0, a) == Catch::Approx(2.0));
  }
  SECTION("negative c1 rejected") {
    REQUIRE_THROWS_AS(error_bound(-1.0, Eigen::VectorXd::Ones(1)), std::invalid_argument);
  }
}

TEST_CASE("gamma_coefficients") {
  const NetworkTopology topo = build_random_topology(8, 3, 4);
  const CombinationMatrices w = uniform_weights(topo);
  SECTION("zero step size returns a") {
    REQUIRE(oracles::exact_equal(gamma_coefficients(w, 0.0, 1.0), w.a));
  }
  SECTION("two-node uniform fixture") {
    const NetworkTopology t2 = build_random_topology(2, 1, 0);
    const CombinationMatrices w2 = uniform_weights(t2);
    const Eigen::MatrixXd g = gamma_coefficients(w2, 0.01, 1.0);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) REQUIRE(g(i, j) == Catch::Approx(0.495).margin(1e-15));
  }
  SECTION("support stays within one c-hop of the a support") {
    const Eigen::MatrixXd g = gamma_coefficients(w, 0.01, 1.0);
    for (int lp = 0; lp < topo.n_nodes; ++lp)
      for (int k = 0; k < topo.n_nodes; ++k) {
        if (g(lp, k) == 0.0) continue;
        bool reachable = topo.adjacency(lp, k);
        for (int l = 0; l < topo.n_nodes && !reachable; ++l)
          if (topo.adjacency(l, k) && topo.adjacency(lp, l)) reachable = true;
        REQUIRE(reachable);
      }
  }
  SECTION("columns sum to 1 - mu sigma_u^2") {
    const Eigen::MatrixXd g = gamma_coefficients(w, 0.02, 0.25);
    for (int k = 0; k < topo.n_nodes; ++k)
      REQUIRE(g.col(k).sum() == Catch::Approx(1.0 - 0.02 * 0.25).margin(1e-12));
  }
}

TEST_CASE("spectral_radius") {
  SECTION("identity") {
    REQUIRE(spectral_radius(Eigen::MatrixXd::Identity(5, 5)) ==
            Catch::Approx(1.0).margin(1e-8));
  }
  SECTION("rank-one fixture") {
    Eigen::MatrixXd m(2, 2);
    m << 0.49, 0.49, 0.49, 0.49;
    REQUIRE(spectral_radius(m) == Catch::Approx(0.98).margin(1e-8));
  }
  SECTION("stochastic matrices have unit radius") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0.01, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::MatrixXd m(6, 6);
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) m(i, j) = unif(rng);
        m.row(i) /= m.row(i).sum();
      }
      REQUIRE(spectral_radius(m) == Catch::Approx(1.0).margin(1e-8));
    }
  }
  SECTION("non-square rejected") {
    REQUIRE_THROWS_AS(spectral_radius(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
  }
}

TEST_CASE("mean_recursion_special") {
  const NetworkTopology topo = build_random_topology(2, 1, 0);
  const CombinationMatrices w = uniform_weights(topo);
  SECTION("zero errors are a fixed point") {
    const auto traj = mean_recursion_special(w, 0.01, 1.0, Eigen::MatrixXd::Zero(2, 3), 20);
    REQUIRE_FALSE(traj.divergent);
    REQUIRE(traj.mean_errors.back().cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("two-node uniform contraction") {
    // On the two-node full graph the transition collects to 0.495 per entry,
    // so a uniform error vector contracts by exactly 1 - mu sigma_u^2.
    Eigen::MatrixXd init = Eigen::MatrixXd::Ones(2, 1);
    const auto traj = mean_recursion_special(w, 0.01, 1.0, init, 3);
    REQUIRE(traj.mean_errors[1](0, 0) == Catch::Approx(0.99).margin(1e-14));
    REQUIRE(traj.mean_errors[2](0, 0) == Catch::Approx(0.99 * 0.99).margin(1e-14));
    REQUIRE(traj.mean_errors[3](1, 0) == Catch::Approx(0.99 * 0.99 * 0.99).margin(1e-14));
  }
  SECTION("divergent flag for unstable step sizes") {
    const auto traj = mean_recursion_special(w, 250.0, 1.0, Eigen::MatrixXd::Ones(2, 1), 3);
    REQUIRE(traj.divergent);
    REQUIRE(traj.mean_errors.size() == 4);  // trajectory still returned
  }
}

TEST_CASE("appendix_f") {
  SECTION("zero errors give zero") {
    Eigen::VectorXd c = Eigen::VectorXd::Ones(3) / 3.0;
    REQUIRE(appendix_f(c, 1.0, Eigen::MatrixXd::Zero(3, 5)).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("single neighbor fixture") {
    Eigen::VectorXd c(1);
    c << 1.0;
    Eigen::MatrixXd err(1, 2);
    err << 0.5, -0.5;
    const Eigen::VectorXd f = appendix_f(c, 1.0, err);
    REQUIRE(f(0) == Catch::Approx(-0.5));
    REQUIRE(f(1) == Catch::Approx(0.5));
  }
  SECTION("matches sampled E{p}") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    const int n_nbr = 2, L = 3;
    const double sigma_u = 0.8;
    Eigen::VectorXd c(n_nbr);
    c << 0.6, 0.4;
    Eigen::MatrixXd err(n_nbr, L);
    for (int i = 0; i < n_nbr; ++i)
      for (int j = 0; j < L; ++j) err(i, j) = 0.5 * g(rng);
    const Eigen::VectorXd closed = appendix_f(c, sigma_u * sigma_u, err);
    std::vector<oracles::MeanAccumulator> acc(L);
    Eigen::VectorXd u(L);
    for (long s = 0; s < 200000; ++s) {
      Eigen::VectorXd p = Eigen::VectorXd::Zero(L);
      for (int lp = 0; lp < n_nbr; ++lp) {
        for (int j = 0; j < L; ++j) u(j) = sigma_u * g(rng);
        p += c(lp) * (-u.dot(err.row(lp))) * u;
      }
      for (int j = 0; j < L; ++j) acc[j].add(p(j));
    }
    for (int j = 0; j < L; ++j) REQUIRE(std::abs(acc[j].z_against(closed(j))) < 3.5);
  }
}

TEST_CASE("appendix_h") {
  Eigen::VectorXd omega(1), f(1), t(1);
  omega << 1.0;
  f << -0.5;
  t << 2.0;
  SECTION("mu = 0 squares the estimate") {
    REQUIRE(appendix_h(omega, 0.0, f, t)(0) == Catch::Approx(1.0));
  }
  SECTION("scalar fixture") {
    REQUIRE(appendix_h(omega, 0.1, f, t)(0) == Catch::Approx(0.92).margin(1e-15));
  }
}

TEST_CASE("appendix_t") {
  SECTION("zero errors give zero") {
    Eigen::VectorXd c = Eigen::VectorXd::Ones(2) / 2.0;
    REQUIRE(appendix_t(c, 1.0, Eigen::MatrixXd::Zero(2, 4)).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("single neighbor Isserlis fixture") {
    Eigen::VectorXd c(1);
    c << 1.0;
    Eigen::MatrixXd err(1, 2);
    err << 1.0, 0.0;
    const Eigen::VectorXd t = appendix_t(c, 1.0, err);
    REQUIRE(t(0) == Catch::Approx(3.0).margin(1e-14));
    REQUIRE(t(1) == Catch::Approx(1.0).margin(1e-14));
  }
  SECTION("matches sampled E{p^2}") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0.0, 1.0);
    const int n_nbr = 3, L = 3;
    const double sigma_u = 1.1;
    Eigen::VectorXd c(n_nbr);
    c << 0.5, 0.3, 0.2;
    Eigen::MatrixXd err(n_nbr, L);
    for (int i = 0; i < n_nbr; ++i)
      for (int j = 0; j < L; ++j) err(i, j) = 0.4 * g(rng);
    const Eigen::VectorXd closed = appendix_t(c, sigma_u * sigma_u, err);
    std::vector<oracles::MeanAccumulator> acc(L);
    Eigen::VectorXd u(L);
    for (long s = 0; s < 200000; ++s) {
      Eigen::VectorXd p = Eigen::VectorXd::Zero(L);
      for (int lp = 0; lp < n_nbr; ++lp) {
        for (int j = 0; j < L; ++j) u(j) = sigma_u * g(rng);
        p += c(lp) * (-u.dot(err.row(lp))) * u;
      }
      for (int j = 0; j < L; ++j) acc[j].add(p(j) * p(j));
    }
    for (int j = 0; j < L; ++j) REQUIRE(std::abs(acc[j].z_against(closed(j))) < 3.5);
  }
}

TEST_CASE("appendix_r") {
  SECTION("vanishes without nonlinearity") {
    Eigen::VectorXd c = Eigen::VectorXd::Ones(2) / 2.0;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(2);
    REQUIRE(appendix_r(c, b, Eigen::MatrixXd::Ones(2, 3), 1.0, 0.0).cwiseAbs().maxCoeff() ==
            0.0);
  }
  SECTION("noiseless single-neighbor sixth moment") {
    Eigen::VectorXd c(1), b(1);
    c << 1.0;
    b << -0.3;
    Eigen::MatrixXd w(1, 1);
    w << 1.0;
    // A = E{u^6} = 15 sigma_u^6, r = c^2 b^2 A
    REQUIRE(appendix_r(c, b, w, 1.0, 0.0)(0) == Catch::Approx(0.09 * 15.0).margin(1e-12));
  }
  SECTION("closed form exceeds the sampled kernel by exactly sigma_v^2") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    const int L = 3;
    Eigen::VectorXd w(L);
    for (int j = 0; j < L; ++j) w(j) = 0.5 * g(rng);
    const double sigma_u = 1.0, sigma_v = 0.3;
    const double closed = appendix_a_diag(w, 1, sigma_u * sigma_u, sigma_v * sigma_v);
    // sampled with a matching standard-error estimate
    oracles::MeanAccumulator acc;
    Eigen::VectorXd u(L);
    for (long s = 0; s < 400000; ++s) {
      for (int j = 0; j < L; ++j) u(j) = sigma_u * g(rng);
      const double x = u.dot(w) + sigma_v * g(rng);
      acc.add(x * x * x * x * u(1) * u(1));
    }
    const double surplus = sigma_v * sigma_v;
    REQUIRE(std::abs(acc.z_against(closed - surplus)) < 3.5);
    // and the stated form itself is off by that surplus
    REQUIRE(std::abs(acc.z_against(closed)) > 4.0);
  }
}

TEST_CASE("verify_g_zero") {
  Eigen::VectorXd w(4);
  w << 0.8, -0.3, 0.5, 0.1;
  SECTION("passes for symmetric regressors") {
    const GZeroReport rep = verify_g_zero(w, 1.0, 0.1, 0.0, 300000, 11);
    REQUIRE(rep.pass);
    REQUIRE(rep.z_scores.size() == 4);
  }
  SECTION("negative control with biased regressors fails") {
    const GZeroReport rep = verify_g_zero(w, 1.0, 0.1, 0.5, 300000, 12);
    REQUIRE_FALSE(rep.pass);
  }
}

TEST_CASE("mean_recursion_general") {
  const NetworkTopology topo = build_random_topology(3, 2, 9);
  const CombinationMatrices w = uniform_weights(topo);
  Eigen::VectorXd omega_o(2);
  omega_o << 0.4, -0.3;
  Eigen::MatrixXd init(3, 2);
  for (int k = 0; k < 3; ++k) init.row(k) = -omega_o.transpose();

  SECTION("reduces to the bias-free recursion when b = 0") {
    const auto gen = mean_recursion_general(topo, w, 0.01, 1.0, 0.0,
                                            Eigen::VectorXd::Zero(3), omega_o, init, 30);
    const auto sp = mean_recursion_special(w, 0.01, 1.0, init, 30);
    for (int i = 0; i <= 30; ++i)
      REQUIRE((gen.mean_errors[i] - sp.mean_errors[i]).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(gen.bias_terms[5].cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("steady-state bias shrinks with the nonlinearity") {
    auto steady_bias = [&](double b_scale) {
      const Eigen::VectorXd b = Eigen::VectorXd::Constant(3, -b_scale);
      const auto traj =
          mean_recursion_general(topo, w, 0.01, 1.0, 0.0, b, omega_o, init, 3000);
      return traj.mean_errors.back().norm();
    };
    const double big = steady_bias(0.2);
    const double small = steady_bias(0.05);
    REQUIRE(big > 0.0);
    REQUIRE(small > 0.0);
    REQUIRE(small < big);
    // limit case: no nonlinearity, no asymptotic bias
    REQUIRE(steady_bias(0.0) < 1e-12);
  }
}
