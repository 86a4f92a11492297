#pragma once

// Intrinsic CAR precision matrices built from a neighbourhood structure,
// per-component sum-to-zero constraints and optional spectral rank reduction.

#include "arelink/errors.hpp"
#include "arelink/nb.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace arelink {

struct PrecisionSpec {
  /// P[i][i] = number of neighbours, P[i][j] = -1 for neighbours, else 0.
  Eigen::SparseMatrix<double> P;
  std::vector<int> counts;
  std::vector<std::vector<int>> components;  // 1-based positions
  /// n x (n - c) orthonormal basis orthogonal to every component indicator.
  Eigen::MatrixXd Z;
  std::optional<int> reduced_rank;
  /// Coefficient basis used by a fit (n x m) and its penalty (m x m). Without
  /// reduction these are Z and Z' P Z.
  Eigen::MatrixXd basis;
  Eigen::MatrixXd penalty;

  std::size_t size() const { return counts.size(); }
  Eigen::MatrixXd dense() const { return Eigen::MatrixXd(P); }
  Eigen::MatrixXd constrained() const { return Z.transpose() * (P * Z); }
};

namespace detail {

/// Normalized Helmert contrasts over `members` (0-based rows): s-1 orthonormal
/// columns, each summing to zero and supported on the component only.
inline void helmert_columns(const std::vector<int>& members, Eigen::MatrixXd& Z, Eigen::Index& col) {
  const auto s = members.size();
  for (std::size_t j = 1; j < s; ++j) {
    const double jj = static_cast<double>(j);
    const double norm = std::sqrt(jj * (jj + 1.0));
    for (std::size_t r = 0; r < j; ++r) Z(members[r] - 1, col) = 1.0 / norm;
    Z(members[j] - 1, col) = -jj / norm;
    ++col;
  }
}

}  // namespace detail

inline PrecisionSpec icar_precision(const NbStructure& nb) {
  const auto n = static_cast<Eigen::Index>(nb.size());
  if (n < 2) throw NbError("ICAR precision needs at least 2 units");
  PrecisionSpec spec;
  std::vector<Eigen::Triplet<double>> trip;
  spec.counts.resize(nb.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& l = nb.adj()[static_cast<std::size_t>(i)];
    spec.counts[static_cast<std::size_t>(i)] = static_cast<int>(l.size());
    trip.emplace_back(i, i, static_cast<double>(l.size()));
    for (int j : l) trip.emplace_back(i, j - 1, -1.0);
  }
  spec.P.resize(n, n);
  spec.P.setFromTriplets(trip.begin(), trip.end());
  spec.components = components(nb);

  const auto c = static_cast<Eigen::Index>(spec.components.size());
  spec.Z = Eigen::MatrixXd::Zero(n, n - c);
  Eigen::Index col = 0;
  for (const auto& comp : spec.components) detail::helmert_columns(comp, spec.Z, col);
  spec.basis = spec.Z;
  spec.penalty = spec.constrained();
  return spec;
}

/// Keeps the k - c eigenvectors of the constrained precision with the
/// smallest eigenvalues. k = n reproduces the full model (a rotation of it);
/// k = c leaves no free coefficients.
inline PrecisionSpec rank_reduce(const PrecisionSpec& spec, int k) {
  const int n = static_cast<int>(spec.size());
  const int c = static_cast<int>(spec.components.size());
  if (k < c || k > n)
    throw NbError("rank k = " + std::to_string(k) + " must lie in [" + std::to_string(c) + ", " +
                  std::to_string(n) + "] (components .. units)");
  PrecisionSpec out = spec;
  out.reduced_rank = k;
  const Eigen::MatrixXd Q = spec.constrained();
  const int m = k - c;
  if (m == 0) {
    out.basis = Eigen::MatrixXd::Zero(n, 0);
    out.penalty = Eigen::MatrixXd::Zero(0, 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
  // Eigen returns eigenvalues in increasing order.
  const Eigen::MatrixXd V = es.eigenvectors().leftCols(m);
  out.basis = spec.Z * V;
  out.penalty = es.eigenvalues().head(m).asDiagonal();
  return out;
}

/// Coordinate triplets "row col value" (1-based), one per stored entry,
/// column-major order.
inline std::string precision_triplets(const PrecisionSpec& spec) {
  std::ostringstream out;
  out.precision(17);
  for (int k = 0; k < spec.P.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(spec.P, k); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
  return out.str();
}

}  // namespace arelink
