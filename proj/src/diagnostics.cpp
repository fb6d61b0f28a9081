#include "eigenlearn/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

namespace eigenlearn {

namespace {

constexpr double kNormTolerance = 1e-9;
constexpr double kEigenvalueFloor = 1e-14;

void require_normalized(const Eigen::Ref<const Eigen::VectorXd>& v,
                        const char* who) {
  const double norm = v.norm();
  if (!(std::abs(norm - 1.0) <= kNormTolerance))
    throw std::invalid_argument(std::string(who) + ": state not normalized (|v| = " +
                                std::to_string(norm) + ")");
}

double shannon(const Eigen::Ref<const Eigen::VectorXd>& probabilities,
               double floor) {
  double s = 0.0;
  for (double p : probabilities)
    if (p > floor) s -= p * std::log(p);
  return s;
}

}  // namespace

double entanglement_entropy(const Eigen::Ref<const Eigen::VectorXd>& state,
                            int L, int cut) {
  if (L < 2 || state.size() != (Eigen::Index{1} << L))
    throw std::invalid_argument("entanglement_entropy: state length is not 2^L");
  if (cut < 1 || cut >= L)
    throw std::out_of_range("entanglement_entropy: cut must lie in 1..L-1");
  require_normalized(state, "entanglement_entropy");

  // Row index = first `cut` sites (high bits), column index = the rest.
  const Eigen::Index rows = Eigen::Index{1} << cut;
  const Eigen::Index cols = Eigen::Index{1} << (L - cut);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      A(state.data(), rows, cols);
  const Eigen::MatrixXd rho =
      rows <= cols ? Eigen::MatrixXd(A * A.transpose())
                   : Eigen::MatrixXd(A.transpose() * A);
  return shannon(symmetric_eigenvalues(rho), kEigenvalueFloor);
}

double participation_entropy(const Eigen::Ref<const Eigen::VectorXd>& state) {
  require_normalized(state, "participation_entropy");
  return shannon(state.array().square().matrix(), 0.0);
}

double fidelity(const Eigen::Ref<const Eigen::VectorXd>& a,
                const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("fidelity: length mismatch");
  require_normalized(a, "fidelity");
  require_normalized(b, "fidelity");
  const double overlap = a.dot(b);
  return overlap * overlap;
}

Histogram density_of_states(const Eigen::Ref<const Eigen::VectorXd>& energies,
                            int bins) {
  if (bins < 1) throw std::invalid_argument("density_of_states: bins must be >= 1");
  if (energies.size() == 0)
    throw std::invalid_argument("density_of_states: empty spectrum");
  const double lo = energies.minCoeff();
  const double hi = energies.maxCoeff();
  if (!(hi > lo))
    throw std::invalid_argument("density_of_states: degenerate spectrum (E_max = E_0)");

  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  h.centers.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) h.centers[static_cast<std::size_t>(b)] = (b + 0.5) / bins;
  for (double E : energies) {
    const double x = (E - lo) / (hi - lo);
    int b = static_cast<int>(std::floor(x * bins));
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

DiagnosticsRecord compute_diagnostics(const Spectrum& spectrum) {
  const int L = spectrum.L;
  if (L < 2) throw std::invalid_argument("compute_diagnostics: need a chain spectrum");
  const std::size_t dim = spectrum.dim();
  const double e0 = spectrum.energies(0);
  const double emax = spectrum.energies(spectrum.energies.size() - 1);
  const double width = emax > e0 ? emax - e0 : 1.0;
  const int cut = L / 2;
  const double svn_max = cut * std::numbers::ln2;
  const double spart_max = std::log(static_cast<double>(dim));

  DiagnosticsRecord r;
  r.index_norm.resize(dim);
  r.energy_rescaled.resize(dim);
  r.svn_norm.resize(dim);
  r.spart_norm.resize(dim);
  for (std::size_t m = 0; m < dim; ++m) {
    const auto col = spectrum.vectors.col(static_cast<Eigen::Index>(m));
    r.index_norm[m] = static_cast<double>(m + 1) / static_cast<double>(dim);
    r.energy_rescaled[m] = (spectrum.energies(static_cast<Eigen::Index>(m)) - e0) / width;
    r.svn_norm[m] = entanglement_entropy(col, L, cut) / svn_max;
    r.spart_norm[m] = participation_entropy(col) / spart_max;
  }
  return r;
}

void write_diagnostics_csv(std::ostream& out, const DiagnosticsRecord& record) {
  out << "m_index,index_norm,energy_rescaled,svn_norm,spart_norm\n";
  char line[160];
  for (std::size_t m = 0; m < record.size(); ++m) {
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%.10g\n", m + 1,
                  record.index_norm[m], record.energy_rescaled[m],
                  record.svn_norm[m], record.spart_norm[m]);
    out << line;
  }
}

}  // namespace eigenlearn
