#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eigenlearn/eigensolver.hpp"

namespace eigenlearn {

enum class ProtocolKind { Low, Mid, Single };

std::string to_string(ProtocolKind kind);
ProtocolKind protocol_from_string(const std::string& name);

/// Rule choosing which eigenstates (1-based, ascending energy) feed the
/// encoder. `count` is M for Low/Mid; `m_index` is used by Single.
struct SpectralProtocol {
  ProtocolKind kind = ProtocolKind::Low;
  int count = 1;
  int m_index = 1;

  static SpectralProtocol low(int M) { return {ProtocolKind::Low, M, 1}; }
  static SpectralProtocol mid(int M) { return {ProtocolKind::Mid, M, 1}; }
  static SpectralProtocol single(int m) { return {ProtocolKind::Single, 1, m}; }

  /// Number of selected states (M, or 1 for Single).
  int width() const { return kind == ProtocolKind::Single ? 1 : count; }

  /// Throws std::invalid_argument if the protocol does not fit dimension D.
  void validate(std::size_t dim) const;
};

/// Encoder input for one Hamiltonian realization.
///
/// theta_true is kept for evaluation only; nothing on the training path
/// reads it.
struct StateBlock {
  Eigen::MatrixXd psi;  // D x M, columns are eigenvectors
  Eigen::VectorXd energies;
  std::vector<int> indices;  // 1-based, strictly increasing
  Eigen::VectorXd theta_true;

  int width() const { return static_cast<int>(psi.cols()); }
};

/// Low: 1..M. Mid: M consecutive indices starting at m_av - floor(M/2),
/// shifted inward to fit [1, D]. Single: {m_index}.
std::vector<int> select_indices(const SpectralProtocol& protocol,
                                std::size_t dim, int m_av);

std::vector<int> select_indices(const SpectralProtocol& protocol,
                                const Spectrum& spectrum, int m_av);

StateBlock build_state_block(const Spectrum& spectrum,
                             const std::vector<int>& indices,
                             const Eigen::VectorXd& theta);

}  // namespace eigenlearn
