#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eigenlearn/protocols.hpp"
#include "eigenlearn/spin_chain.hpp"

namespace eigenlearn {

/// Decoder operators projected onto one sample's input states.
///
/// With Psi the D x M input block: G[l] = Psi^T B_l Psi and
/// G_const = Psi^T H_const Psi. Built once per sample, after which every loss
/// evaluation is O(Theta M^2) and never touches the D x D operators again.
struct ProjectedBasis {
  std::vector<Eigen::MatrixXd> G;
  Eigen::MatrixXd G_const;
  Eigen::VectorXd energies;

  int width() const { return static_cast<int>(G_const.rows()); }
  int theta_dim() const { return static_cast<int>(G.size()); }
};

struct LossConfig {
  double gamma = 0.1;
  double epsilon = 1e-8;
};

struct LossValue {
  double value = 0.0;
  Eigen::VectorXd gradient;  // d value / d theta~
};

ProjectedBasis project_basis(const StateBlock& block, const DecoderBasis& basis);

ProjectedBasis project_basis(const Eigen::Ref<const Eigen::MatrixXd>& psi,
                             const Eigen::Ref<const Eigen::VectorXd>& energies,
                             const DecoderBasis& basis);

/// H_res(theta~) = G_const + sum_l theta~_l G[l].
Eigen::MatrixXd residual_matrix(const ProjectedBasis& pb,
                                std::span<const double> theta_tilde);

/// Rayleigh loss with N = sum_i E_i^2 / M + epsilon:
///
///   L = sum_{i != j} R_ij^2 / (N M (M - 1)) + gamma sum_i (R_ii - E_i)^2 / (N M)
///
/// with R = H_res(theta~). The off-diagonal term is zero for M = 1. Returns
/// the value and its analytic theta~-gradient.
LossValue rayleigh_loss(const ProjectedBasis& pb,
                        std::span<const double> theta_tilde,
                        const LossConfig& cfg);

/// Mean squared error over the latent components.
double theta_loss(std::span<const double> theta_tilde,
                  std::span<const double> theta_true);

/// Mean over i of |E_i - E~_i| / (E_max - E_0), with E_max, E_0 taken from
/// the reference spectrum.
double spectral_error(const Eigen::Ref<const Eigen::VectorXd>& reference,
                      const Eigen::Ref<const Eigen::VectorXd>& reconstructed);

}  // namespace eigenlearn
