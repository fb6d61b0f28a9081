#pragma once

#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "eigenlearn/eigensolver.hpp"

namespace eigenlearn {

/// Von Neumann entropy (natural log) of the reduced density matrix of the
/// first `cut` sites. Reduced-density eigenvalues below 1e-14 count as zero.
double entanglement_entropy(const Eigen::Ref<const Eigen::VectorXd>& state,
                            int L, int cut);

/// Shannon entropy of |c_k|^2 in the computational basis.
double participation_entropy(const Eigen::Ref<const Eigen::VectorXd>& state);

/// |<a|b>|^2 for unit vectors.
double fidelity(const Eigen::Ref<const Eigen::VectorXd>& a,
                const Eigen::Ref<const Eigen::VectorXd>& b);

struct Histogram {
  std::vector<double> centers;
  std::vector<long> counts;
};

/// Counts of (E - E_0) / (E_max - E_0) over `bins` equal-width bins on [0, 1];
/// the right edge belongs to the last bin.
Histogram density_of_states(const Eigen::Ref<const Eigen::VectorXd>& energies,
                            int bins);

/// Per-eigenstate structure measures over a whole spectrum.
///
/// svn_norm is the half-chain entropy over floor(L/2) * ln 2, spart_norm the
/// participation entropy over ln D; both map the maximal value to 1.
struct DiagnosticsRecord {
  std::vector<double> index_norm;
  std::vector<double> energy_rescaled;
  std::vector<double> svn_norm;
  std::vector<double> spart_norm;

  std::size_t size() const { return index_norm.size(); }
};

DiagnosticsRecord compute_diagnostics(const Spectrum& spectrum);

/// Columns: m_index, index_norm, energy_rescaled, svn_norm, spart_norm.
void write_diagnostics_csv(std::ostream& out, const DiagnosticsRecord& record);

}  // namespace eigenlearn
