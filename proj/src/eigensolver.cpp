#include "eigenlearn/eigensolver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace eigenlearn {

namespace {

constexpr int kMaxSweepsPerEigenvalue = 60;

// Reduces the symmetric matrix held in V to tridiagonal form. On return d is
// the diagonal, e the subdiagonal (e[0] = 0) and V the accumulated orthogonal
// transformation.
void householder_tridiagonalize(Eigen::MatrixXd& V, Eigen::VectorXd& d,
                                Eigen::VectorXd& e) {
  const Eigen::Index n = V.rows();
  for (Eigen::Index j = 0; j < n; ++j) d(j) = V(n - 1, j);

  for (Eigen::Index i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (Eigen::Index k = 0; k < i; ++k) scale += std::abs(d(k));

    if (scale == 0.0) {
      e(i) = d(i - 1);
      for (Eigen::Index j = 0; j < i; ++j) {
        d(j) = V(i - 1, j);
        V(i, j) = 0.0;
        V(j, i) = 0.0;
      }
    } else {
      for (Eigen::Index k = 0; k < i; ++k) {
        d(k) /= scale;
        h += d(k) * d(k);
      }
      double f = d(i - 1);
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e(i) = scale * g;
      h -= f * g;
      d(i - 1) = f - g;
      for (Eigen::Index j = 0; j < i; ++j) e(j) = 0.0;

      for (Eigen::Index j = 0; j < i; ++j) {
        f = d(j);
        V(j, i) = f;
        g = e(j) + V(j, j) * f;
        for (Eigen::Index k = j + 1; k <= i - 1; ++k) {
          g += V(k, j) * d(k);
          e(k) += V(k, j) * f;
        }
        e(j) = g;
      }
      f = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        e(j) /= h;
        f += e(j) * d(j);
      }
      const double hh = f / (h + h);
      for (Eigen::Index j = 0; j < i; ++j) e(j) -= hh * d(j);
      for (Eigen::Index j = 0; j < i; ++j) {
        f = d(j);
        g = e(j);
        for (Eigen::Index k = j; k <= i - 1; ++k)
          V(k, j) -= (f * e(k) + g * d(k));
        d(j) = V(i - 1, j);
        V(i, j) = 0.0;
      }
    }
    d(i) = h;
  }

  // Accumulate transformations.
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    V(n - 1, i) = V(i, i);
    V(i, i) = 1.0;
    const double h = d(i + 1);
    if (h != 0.0) {
      for (Eigen::Index k = 0; k <= i; ++k) d(k) = V(k, i + 1) / h;
      for (Eigen::Index j = 0; j <= i; ++j) {
        double g = 0.0;
        for (Eigen::Index k = 0; k <= i; ++k) g += V(k, i + 1) * V(k, j);
        for (Eigen::Index k = 0; k <= i; ++k) V(k, j) -= g * d(k);
      }
    }
    for (Eigen::Index k = 0; k <= i; ++k) V(k, i + 1) = 0.0;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    d(j) = V(n - 1, j);
    V(n - 1, j) = 0.0;
  }
  V(n - 1, n - 1) = 1.0;
  e(0) = 0.0;
}

// Implicit-shift QL on the tridiagonal (d, e), rotating the columns of V.
void implicit_ql(Eigen::MatrixXd& V, Eigen::VectorXd& d, Eigen::VectorXd& e) {
  const Eigen::Index n = V.rows();
  for (Eigen::Index i = 1; i < n; ++i) e(i - 1) = e(i);
  e(n - 1) = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (Eigen::Index l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d(l)) + std::abs(e(l)));
    Eigen::Index m = l;
    while (m < n) {
      if (std::abs(e(m)) <= eps * tst1) break;
      ++m;
    }

    if (m > l) {
      int iter = 0;
      do {
        if (++iter > kMaxSweepsPerEigenvalue)
          throw ConvergenceError(
              "diagonalize: no convergence for eigenvalue index " +
                  std::to_string(l),
              static_cast<int>(l));

        double g = d(l);
        double p = (d(l + 1) - g) / (2.0 * e(l));
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d(l) = e(l) / (p + r);
        d(l + 1) = e(l) * (p + r);
        const double dl1 = d(l + 1);
        double h = g - d(l);
        for (Eigen::Index i = l + 2; i < n; ++i) d(i) -= h;
        f += h;

        p = d(m);
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e(l + 1);
        double s = 0.0, s2 = 0.0;
        for (Eigen::Index i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e(i);
          h = c * p;
          r = std::hypot(p, e(i));
          e(i + 1) = s * r;
          s = e(i) / r;
          c = p / r;
          p = c * d(i) - s * g;
          d(i + 1) = h + s * (c * g + s * d(i));
          auto left = V.col(i);
          auto right = V.col(i + 1);
          for (Eigen::Index k = 0; k < n; ++k) {
            const double t = right(k);
            right(k) = s * left(k) + c * t;
            left(k) = c * left(k) - s * t;
          }
        }
        p = -s * s2 * c3 * el1 * e(l) / dl1;
        e(l) = s * p;
        d(l) = c * p;
      } while (std::abs(e(l)) > eps * tst1);
    }
    d(l) += f;
    e(l) = 0.0;
  }
}

void check_input(const Eigen::MatrixXd& H) {
  if (H.rows() != H.cols() || H.rows() == 0)
    throw std::invalid_argument("diagonalize: matrix must be square, non-empty");
  if (!H.allFinite())
    throw std::invalid_argument("diagonalize: non-finite entries");
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw std::invalid_argument("diagonalize: matrix is not symmetric");
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> sorted_eigensystem(
    const Eigen::MatrixXd& H) {
  check_input(H);
  const Eigen::Index n = H.rows();
  Eigen::MatrixXd V = H;
  Eigen::VectorXd d(n), e(n);
  householder_tridiagonalize(V, d, e);
  implicit_ql(V, d, e);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return d(a) < d(b); });
  Eigen::VectorXd values(n);
  Eigen::MatrixXd vectors(n, n);
  for (Eigen::Index m = 0; m < n; ++m) {
    values(m) = d(order[static_cast<std::size_t>(m)]);
    vectors.col(m) = V.col(order[static_cast<std::size_t>(m)]);
  }
  return {std::move(values), std::move(vectors)};
}

}  // namespace

Spectrum diagonalize(const Eigen::MatrixXd& H) {
  auto [values, vectors] = sorted_eigensystem(H);
  Spectrum out;
  out.energies = std::move(values);
  out.vectors = fix_gauge(std::move(vectors));
  const auto n = static_cast<unsigned long>(H.rows());
  out.L = std::has_single_bit(n) ? std::countr_zero(n) : 0;
  return out;
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& A) {
  return sorted_eigensystem(A).first;
}

Eigen::MatrixXd fix_gauge(Eigen::MatrixXd vectors) {
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    auto col = vectors.col(c);
    Eigen::Index best = 0;
    double best_abs = std::abs(col(0));
    for (Eigen::Index r = 1; r < col.size(); ++r) {
      if (std::abs(col(r)) > best_abs) {
        best_abs = std::abs(col(r));
        best = r;
      }
    }
    if (best_abs == 0.0)
      throw std::invalid_argument("fix_gauge: zero column " + std::to_string(c));
    if (col(best) < 0) col = -col;
  }
  return vectors;
}

int mean_energy_index(const Spectrum& spectrum, const HamiltonianMatrix& H) {
  const double mean = H.trace() / static_cast<double>(H.rows());
  Eigen::Index best = 0;
  double best_gap = std::abs(spectrum.energies(0) - mean);
  for (Eigen::Index m = 1; m < spectrum.energies.size(); ++m) {
    const double gap = std::abs(spectrum.energies(m) - mean);
    if (gap < best_gap) {
      best_gap = gap;
      best = m;
    }
  }
  return static_cast<int>(best) + 1;
}

std::vector<std::pair<int, int>> near_degenerate_pairs(const Spectrum& spectrum,
                                                       double tolerance) {
  std::vector<std::pair<int, int>> pairs;
  for (Eigen::Index m = 0; m + 1 < spectrum.energies.size(); ++m)
    if (spectrum.energies(m + 1) - spectrum.energies(m) < tolerance)
      pairs.emplace_back(static_cast<int>(m) + 1, static_cast<int>(m) + 2);
  return pairs;
}

}  // namespace eigenlearn
