#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eigenlearn {

/// Dense real-symmetric operator on the 2^L dimensional chain Hilbert space.
///
/// Basis ordering: computational states |s_1 ... s_L> with s = 0 (spin up,
/// sigma^z = +1) first, site 1 the most significant bit of the row index.
using HamiltonianMatrix = Eigen::MatrixXd;

enum class PauliAxis { X, Y, Z };

enum class Coupling { J1, J2 };

std::string to_string(Coupling c);
Coupling coupling_from_string(const std::string& name);

/// Couplings of the periodic J1-J2 chain with on-site fields.
struct SpinChainParams {
  int L = 6;
  double J1 = 0.0;
  double J2 = 0.5;
  double Delta = 1.0;
  std::vector<double> hz;
  std::vector<double> gx;

  /// Uniform-field chain. Fields are replicated over all L sites.
  static SpinChainParams uniform(int L, double J1, double J2, double Delta,
                                 double hz, double gx);

  /// Fixed couplings of the studied family: hz = 0.5, gx = -0.2, Delta = 1,
  /// J2 = 0.5. J1 is left at zero.
  static SpinChainParams family_defaults(int L);

  std::size_t dim() const { return std::size_t{1} << L; }
  double coupling(Coupling c) const { return c == Coupling::J1 ? J1 : J2; }
  void set_coupling(Coupling c, double value);

  /// Throws std::invalid_argument on L < 3, wrong field lengths, or
  /// non-finite entries.
  void validate() const;
};

/// Which couplings the encoder infers; everything else comes from fixed_base.
struct LatentSpec {
  std::vector<Coupling> free;
  SpinChainParams fixed_base;

  int dim() const { return static_cast<int>(free.size()); }

  /// Copy of fixed_base with the free couplings replaced by theta.
  SpinChainParams with_latent(std::span<const double> theta) const;

  void validate() const;
};

/// Result of embed_pauli. For the y axis the embedding is purely imaginary and
/// is returned in factored form: the operator equals i * matrix.
struct PauliEmbedding {
  HamiltonianMatrix matrix;
  bool imaginary = false;
};

/// I (x) ... (x) sigma^axis (x) ... (x) I with sigma at `site` (1-based).
PauliEmbedding embed_pauli(int site, PauliAxis axis, int L);

/// sigma^x_i sigma^x_j + sigma^y_i sigma^y_j + Delta sigma^z_i sigma^z_j.
/// Sites are 1-based and wrap modulo L; i == j (mod L) is rejected.
HamiltonianMatrix coupling_term(int i, int j, double Delta, int L);

HamiltonianMatrix build_hamiltonian(const SpinChainParams& p);

/// Site-1 field signs flipped, site floor(L/2) shifted by (-0.1, +0.1) in
/// (hz, gx). Not idempotent. Requires L >= 4.
SpinChainParams apply_symmetry_breaking(const SpinChainParams& p);

/// Linear decomposition H(theta) = constant + sum_l theta_l * operators[l].
struct DecoderBasis {
  HamiltonianMatrix constant;
  std::vector<HamiltonianMatrix> operators;

  HamiltonianMatrix assemble(std::span<const double> theta) const;
};

DecoderBasis basis_operators(const LatentSpec& spec);

}  // namespace eigenlearn
