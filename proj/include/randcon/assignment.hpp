#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "randcon/errors.hpp"
#include "randcon/matrix.hpp"

namespace randcon {

// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
// potentials, O(n^3)). Returns row -> column.
inline std::vector<int> hungarian(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw DimensionError("assignment needs a square cost matrix");
  if (n == 0) return {};
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (std::size_t j = 1; j <= n; ++j) assignment[owner[j] - 1] = static_cast<int>(j - 1);
  return assignment;
}

inline double assignment_cost(const Matrix& cost, const std::vector<int>& perm) {
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) total += cost(i, static_cast<std::size_t>(perm[i]));
  return total;
}

// Optimal assignment with ties broken toward the lexicographically smallest
// permutation: rows are fixed one at a time to the smallest column that still
// admits an optimal completion.
inline std::vector<int> lexicographic_min_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw DimensionError("assignment needs a square cost matrix");
  const double best = assignment_cost(cost, hungarian(cost));
  double scale = 0.0;
  for (double c : cost.values()) scale = std::max(scale, std::abs(c));
  const double tol = 1e-12 * std::max(1.0, scale * static_cast<double>(n));

  std::vector<int> perm(n, -1);
  std::vector<char> col_used(n, 0);
  double fixed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> rest_rows, rest_cols;
    for (std::size_t r = i + 1; r < n; ++r) rest_rows.push_back(r);
    for (std::size_t j = 0; j < n; ++j) {
      if (col_used[j]) continue;
      rest_cols.clear();
      for (std::size_t c = 0; c < n; ++c)
        if (!col_used[c] && c != j) rest_cols.push_back(c);
      Matrix sub(rest_rows.size(), rest_cols.size());
      for (std::size_t a = 0; a < rest_rows.size(); ++a)
        for (std::size_t b = 0; b < rest_cols.size(); ++b) sub(a, b) = cost(rest_rows[a], rest_cols[b]);
      const double completion = sub.rows() == 0 ? 0.0 : assignment_cost(sub, hungarian(sub));
      if (fixed + cost(i, j) + completion <= best + tol) {
        perm[i] = static_cast<int>(j);
        col_used[j] = 1;
        fixed += cost(i, j);
        break;
      }
    }
  }
  return perm;
}

}  // namespace randcon
