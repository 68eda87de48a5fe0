#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <queue>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonec/config.hpp"
#include "sonec/rng.hpp"

namespace sonec {

// Undirected sensor graph. Every node is its own neighbor (true diagonal),
// so |N_k| >= 1 and the diffusion sums over l in N_k include l = k.
struct NetworkTopology {
  int n_nodes = 0;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adjacency;
  std::vector<std::vector<int>> neighborhoods;  // sorted, self included

  int neighborhood_size(int k) const { return static_cast<int>(neighborhoods[k].size()); }
};

// Neighbor weights a_{lk} (combination step) and c_{lk} (adaptation step).
// Column-stochastic: weights into node k sum to 1 over l in N_k.
struct CombinationMatrices {
  Eigen::MatrixXd a;
  Eigen::MatrixXd c;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

namespace detail {

inline void rebuild_neighborhoods(NetworkTopology& t) {
  t.neighborhoods.assign(t.n_nodes, {});
  for (int k = 0; k < t.n_nodes; ++k)
    for (int l = 0; l < t.n_nodes; ++l)
      if (t.adjacency(l, k)) t.neighborhoods[k].push_back(l);
}

inline bool connected(const NetworkTopology& t) {
  if (t.n_nodes == 0) return false;
  std::vector<bool> seen(t.n_nodes, false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  int count = 1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int w : t.neighborhoods[v]) {
      if (!seen[w]) {
        seen[w] = true;
        ++count;
        q.push(w);
      }
    }
  }
  return count == t.n_nodes;
}

}  // namespace detail

// Random connected topology: a random spanning tree first (connectivity by
// construction), then extra random edges until the average non-self degree
// reaches target_degree. Deterministic for a fixed seed.
inline NetworkTopology build_random_topology(int n_nodes, int target_degree,
                                             std::uint64_t seed) {
  if (n_nodes < 1) throw std::invalid_argument("build_random_topology: n_nodes must be >= 1");
  NetworkTopology t;
  t.n_nodes = n_nodes;
  t.adjacency.setConstant(n_nodes, n_nodes, false);
  for (int k = 0; k < n_nodes; ++k) t.adjacency(k, k) = true;
  if (n_nodes > 1) {
    target_degree = std::clamp(target_degree, 1, n_nodes - 1);
    std::mt19937_64 rng = make_rng(splitmix64(seed));
    for (int v = 1; v < n_nodes; ++v) {
      std::uniform_int_distribution<int> pick(0, v - 1);
      const int p = pick(rng);
      t.adjacency(v, p) = t.adjacency(p, v) = true;
    }
    long long degree_sum = 2LL * (n_nodes - 1);
    const long long want = static_cast<long long>(n_nodes) * target_degree;
    std::uniform_int_distribution<int> pick(0, n_nodes - 1);
    long long attempts = 0;
    const long long max_attempts = 200LL * n_nodes * n_nodes + 1000;
    while (degree_sum < want && attempts < max_attempts) {
      ++attempts;
      const int x = pick(rng);
      const int y = pick(rng);
      if (x == y || t.adjacency(x, y)) continue;
      t.adjacency(x, y) = t.adjacency(y, x) = true;
      degree_sum += 2;
    }
  }
  detail::rebuild_neighborhoods(t);
  if (!detail::connected(t))
    throw std::runtime_error("build_random_topology: connectivity failure");
  return t;
}

// a_{lk} = c_{lk} = 1/|N_k| on the neighborhood, 0 elsewhere.
inline CombinationMatrices uniform_weights(const NetworkTopology& t) {
  CombinationMatrices w;
  w.a = Eigen::MatrixXd::Zero(t.n_nodes, t.n_nodes);
  for (int k = 0; k < t.n_nodes; ++k) {
    const double inv = 1.0 / static_cast<double>(t.neighborhoods[k].size());
    for (int l : t.neighborhoods[k]) w.a(l, k) = inv;
  }
  w.c = w.a;
  return w;
}

// Reports violations of support, nonnegativity, and column-stochasticity
// with the offending indices (1-based in messages). Never throws.
inline ValidationReport validate(const CombinationMatrices& w, const NetworkTopology& t) {
  ValidationReport rep;
  const int n = t.n_nodes;
  auto check = [&](const Eigen::MatrixXd& m, const char* name) {
    if (m.rows() != n || m.cols() != n) {
      std::ostringstream os;
      os << name << ": dimensions " << m.rows() << "x" << m.cols() << " do not match n_nodes " << n;
      rep.violations.push_back(os.str());
      return;
    }
    for (int k = 0; k < n; ++k) {
      double col_sum = 0.0;
      for (int l = 0; l < n; ++l) {
        const double x = m(l, k);
        if (x < 0.0) {
          std::ostringstream os;
          os << name << "(" << l + 1 << "," << k + 1 << ") is negative: " << x;
          rep.violations.push_back(os.str());
        }
        if (x != 0.0 && !t.adjacency(l, k)) {
          std::ostringstream os;
          os << name << "(" << l + 1 << "," << k + 1 << ") nonzero outside neighborhood";
          rep.violations.push_back(os.str());
        }
        col_sum += x;
      }
      if (std::abs(col_sum - 1.0) > 1e-12) {
        std::ostringstream os;
        os << name << " column " << k + 1 << " sums to " << col_sum << " (want 1)";
        rep.violations.push_back(os.str());
      }
    }
  };
  check(w.a, "a");
  check(w.c, "c");
  return rep;
}

// Plain-text edge list, one "l k" pair per line, 1-based, self-loops implicit.
inline void save_edge_list(const NetworkTopology& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  for (int l = 0; l < t.n_nodes; ++l)
    for (int k = l + 1; k < t.n_nodes; ++k)
      if (t.adjacency(l, k)) out << l + 1 << " " << k + 1 << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline NetworkTopology load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list: " + path);
  std::vector<std::pair<int, int>> edges;
  int n = 0;
  int l, k;
  while (in >> l >> k) {
    if (l < 1 || k < 1) throw IoError("edge list " + path + ": indices are 1-based");
    edges.emplace_back(l - 1, k - 1);
    n = std::max({n, l, k});
  }
  if (n == 0) throw IoError("edge list " + path + ": no edges");
  NetworkTopology t;
  t.n_nodes = n;
  t.adjacency.setConstant(n, n, false);
  for (int i = 0; i < n; ++i) t.adjacency(i, i) = true;
  for (auto [x, y] : edges) t.adjacency(x, y) = t.adjacency(y, x) = true;
  detail::rebuild_neighborhoods(t);
  if (!detail::connected(t))
    throw std::runtime_error("load_edge_list: graph is not connected");
  return t;
}

}  // namespace sonec
