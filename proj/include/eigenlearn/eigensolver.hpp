#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eigenlearn/spin_chain.hpp"

namespace eigenlearn {

/// Full eigendecomposition of a real-symmetric matrix.
///
/// energies are ascending; column m of vectors is the unit eigenvector of
/// energies[m], sign-fixed so that its largest-magnitude entry is positive.
/// L is log2 of the dimension for chain Hamiltonians and 0 otherwise.
struct Spectrum {
  Eigen::VectorXd energies;
  Eigen::MatrixXd vectors;
  int L = 0;

  std::size_t dim() const { return static_cast<std::size_t>(energies.size()); }
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, int index)
      : std::runtime_error(what), index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

/// Householder tridiagonalization followed by implicit-shift QL iterations.
/// Deterministic for bit-identical input. Throws std::invalid_argument on
/// non-finite or visibly asymmetric input and ConvergenceError when an
/// eigenvalue fails to converge within the iteration cap.
Spectrum diagonalize(const Eigen::MatrixXd& H);

/// Eigenvalues only, ascending.
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& A);

/// Flip each column so that its largest-|.| entry (lowest row on ties) is
/// positive. Throws on an all-zero column.
Eigen::MatrixXd fix_gauge(Eigen::MatrixXd vectors);

/// 1-based index of the eigenvalue closest to trace(H)/D, lower index on ties.
int mean_energy_index(const Spectrum& spectrum, const HamiltonianMatrix& H);

/// Adjacent 1-based index pairs (m, m+1) whose gap is below `tolerance`.
std::vector<std::pair<int, int>> near_degenerate_pairs(
    const Spectrum& spectrum, double tolerance = 1e-10);

}  // namespace eigenlearn
