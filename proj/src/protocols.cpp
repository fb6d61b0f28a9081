#include "eigenlearn/protocols.hpp"

#include <stdexcept>

namespace eigenlearn {

std::string to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::Low:
      return "low";
    case ProtocolKind::Mid:
      return "mid";
    case ProtocolKind::Single:
      return "single";
  }
  return "?";
}

ProtocolKind protocol_from_string(const std::string& name) {
  if (name == "low") return ProtocolKind::Low;
  if (name == "mid") return ProtocolKind::Mid;
  if (name == "single") return ProtocolKind::Single;
  throw std::invalid_argument("unknown protocol '" + name + "'");
}

void SpectralProtocol::validate(std::size_t dim) const {
  const auto D = static_cast<long long>(dim);
  if (kind == ProtocolKind::Single) {
    if (m_index < 1 || m_index > D)
      throw std::invalid_argument("single protocol: m_index " +
                                  std::to_string(m_index) + " outside 1.." +
                                  std::to_string(D));
    return;
  }
  if (count < 1 || count > D)
    throw std::invalid_argument(to_string(kind) + " protocol: M = " +
                                std::to_string(count) +
                                " does not fit a spectrum of size " +
                                std::to_string(D));
}

std::vector<int> select_indices(const SpectralProtocol& protocol,
                                std::size_t dim, int m_av) {
  protocol.validate(dim);
  const int D = static_cast<int>(dim);
  switch (protocol.kind) {
    case ProtocolKind::Single:
      return {protocol.m_index};
    case ProtocolKind::Low: {
      std::vector<int> idx(static_cast<std::size_t>(protocol.count));
      for (int i = 0; i < protocol.count; ++i) idx[static_cast<std::size_t>(i)] = i + 1;
      return idx;
    }
    case ProtocolKind::Mid: {
      if (m_av < 1 || m_av > D)
        throw std::invalid_argument("mid protocol: m_av outside spectrum");
      const int M = protocol.count;
      // For even M the bracket m_av +- M/2 holds M+1 states; the top one is
      // dropped. Near the edges the window slides inward at constant width.
      int start = m_av - M / 2;
      if (start < 1) start = 1;
      if (start + M - 1 > D) start = D - M + 1;
      std::vector<int> idx(static_cast<std::size_t>(M));
      for (int i = 0; i < M; ++i) idx[static_cast<std::size_t>(i)] = start + i;
      return idx;
    }
  }
  return {};
}

std::vector<int> select_indices(const SpectralProtocol& protocol,
                                const Spectrum& spectrum, int m_av) {
  return select_indices(protocol, spectrum.dim(), m_av);
}

StateBlock build_state_block(const Spectrum& spectrum,
                             const std::vector<int>& indices,
                             const Eigen::VectorXd& theta) {
  if (indices.empty())
    throw std::invalid_argument("build_state_block: no indices");
  const auto D = static_cast<int>(spectrum.dim());
  StateBlock block;
  block.psi.resize(static_cast<Eigen::Index>(D),
                   static_cast<Eigen::Index>(indices.size()));
  block.energies.resize(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int m = indices[k];
    if (m < 1 || m > D)
      throw std::out_of_range("build_state_block: index " + std::to_string(m) +
                              " outside 1.." + std::to_string(D));
    if (k > 0 && m <= indices[k - 1])
      throw std::invalid_argument("build_state_block: indices must increase");
    block.psi.col(static_cast<Eigen::Index>(k)) = spectrum.vectors.col(m - 1);
    block.energies(static_cast<Eigen::Index>(k)) = spectrum.energies(m - 1);
  }
  block.indices = indices;
  block.theta_true = theta;
  return block;
}

}  // namespace eigenlearn
