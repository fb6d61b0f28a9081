#include "eigenlearn/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace eigenlearn {

ProjectedBasis project_basis(const Eigen::Ref<const Eigen::MatrixXd>& psi,
                             const Eigen::Ref<const Eigen::VectorXd>& energies,
                             const DecoderBasis& basis) {
  const Eigen::Index D = psi.rows();
  if (basis.constant.rows() != D || basis.constant.cols() != D)
    throw std::invalid_argument("project_basis: operator dimension " +
                                std::to_string(basis.constant.rows()) +
                                " does not match state length " +
                                std::to_string(D));
  if (energies.size() != psi.cols())
    throw std::invalid_argument("project_basis: one energy per state required");

  auto project = [&](const HamiltonianMatrix& op) {
    Eigen::MatrixXd g = psi.transpose() * (op * psi);
    // Exact symmetry; the two triangles differ only by rounding.
    return Eigen::MatrixXd(0.5 * (g + g.transpose()));
  };
  ProjectedBasis pb;
  pb.G_const = project(basis.constant);
  pb.G.reserve(basis.operators.size());
  for (const auto& op : basis.operators) {
    if (op.rows() != D) throw std::invalid_argument("project_basis: shape mismatch");
    pb.G.push_back(project(op));
  }
  pb.energies = energies;
  return pb;
}

ProjectedBasis project_basis(const StateBlock& block, const DecoderBasis& basis) {
  return project_basis(block.psi, block.energies, basis);
}

Eigen::MatrixXd residual_matrix(const ProjectedBasis& pb,
                                std::span<const double> theta_tilde) {
  if (theta_tilde.size() != pb.G.size())
    throw std::invalid_argument("residual_matrix: latent length mismatch");
  Eigen::MatrixXd R = pb.G_const;
  for (std::size_t l = 0; l < pb.G.size(); ++l) R += theta_tilde[l] * pb.G[l];
  return R;
}

LossValue rayleigh_loss(const ProjectedBasis& pb,
                        std::span<const double> theta_tilde,
                        const LossConfig& cfg) {
  const Eigen::Index M = pb.G_const.rows();
  if (M < 1) throw std::invalid_argument("rayleigh_loss: empty state block");
  if (!(cfg.gamma >= 0.0) || !(cfg.epsilon >= 0.0))
    throw std::invalid_argument("rayleigh_loss: gamma and epsilon must be non-negative");
  const double norm = pb.energies.squaredNorm() / static_cast<double>(M) + cfg.epsilon;
  if (!(norm > 0.0))
    throw std::invalid_argument(
        "rayleigh_loss: normalization is zero (all target energies zero, epsilon = 0)");

  const Eigen::MatrixXd R = residual_matrix(pb, theta_tilde);
  const Eigen::VectorXd diag_err = R.diagonal() - pb.energies;
  const double diag_weight = cfg.gamma / (norm * static_cast<double>(M));
  const double off_weight =
      M > 1 ? 1.0 / (norm * static_cast<double>(M * (M - 1))) : 0.0;
  Eigen::MatrixXd R_off = R;
  R_off.diagonal().setZero();

  LossValue out;
  out.value = off_weight * R_off.squaredNorm() + diag_weight * diag_err.squaredNorm();
  out.gradient.resize(static_cast<Eigen::Index>(pb.G.size()));
  for (std::size_t l = 0; l < pb.G.size(); ++l) {
    const Eigen::MatrixXd& G = pb.G[l];
    const double off = (R_off.array() * G.array()).sum();
    out.gradient(static_cast<Eigen::Index>(l)) =
        2.0 * off_weight * off + 2.0 * diag_weight * diag_err.dot(G.diagonal());
  }
  return out;
}

double theta_loss(std::span<const double> theta_tilde,
                  std::span<const double> theta_true) {
  if (theta_tilde.size() != theta_true.size() || theta_true.empty())
    throw std::invalid_argument("theta_loss: length mismatch");
  double s = 0.0;
  for (std::size_t l = 0; l < theta_true.size(); ++l) {
    const double d = theta_tilde[l] - theta_true[l];
    s += d * d;
  }
  return s / static_cast<double>(theta_true.size());
}

double spectral_error(const Eigen::Ref<const Eigen::VectorXd>& reference,
                      const Eigen::Ref<const Eigen::VectorXd>& reconstructed) {
  if (reference.size() != reconstructed.size() || reference.size() == 0)
    throw std::invalid_argument("spectral_error: length mismatch");
  const double width = reference.maxCoeff() - reference.minCoeff();
  if (!(width > 0.0))
    throw std::invalid_argument("spectral_error: degenerate reference spectrum");
  return (reference - reconstructed).cwiseAbs().mean() / width;
}

}  // namespace eigenlearn
