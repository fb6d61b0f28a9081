#include "eigenlearn/spin_chain.hpp"

#include <cmath>
#include <stdexcept>

namespace eigenlearn {

namespace {

// Bit of `state` holding site k (1-based); site 1 is the most significant.
inline std::size_t site_mask(int k, int L) {
  return std::size_t{1} << (L - k);
}

inline int wrap_site(int i, int L) { return ((i - 1) % L + L) % L + 1; }

// Adds coeff * (xx + yy + Delta zz) on sites (i, j) to H in place.
void add_bond(HamiltonianMatrix& H, int i, int j, double coeff, double Delta,
              int L) {
  const std::size_t mi = site_mask(i, L);
  const std::size_t mj = site_mask(j, L);
  const std::size_t dim = std::size_t{1} << L;
  for (std::size_t a = 0; a < dim; ++a) {
    const bool si = (a & mi) != 0;
    const bool sj = (a & mj) != 0;
    if (si == sj) {
      H(a, a) += coeff * Delta;
    } else {
      H(a, a) -= coeff * Delta;
      // xx contributes +1 and yy contributes +1 on anti-aligned pairs.
      H(a ^ mi ^ mj, a) += 2.0 * coeff;
    }
  }
}

void add_fields(HamiltonianMatrix& H, const SpinChainParams& p) {
  const std::size_t dim = p.dim();
  for (int k = 1; k <= p.L; ++k) {
    const std::size_t mk = site_mask(k, p.L);
    const double hz = p.hz[k - 1];
    const double gx = p.gx[k - 1];
    for (std::size_t a = 0; a < dim; ++a) {
      H(a, a) += (a & mk) ? -hz : hz;
      H(a ^ mk, a) += gx;
    }
  }
}

void check_site(int site, int L) {
  if (L < 1) throw std::invalid_argument("embed_pauli: L must be >= 1");
  if (site < 1 || site > L)
    throw std::out_of_range("embed_pauli: site " + std::to_string(site) +
                            " outside 1.." + std::to_string(L));
}

}  // namespace

std::string to_string(Coupling c) { return c == Coupling::J1 ? "J1" : "J2"; }

Coupling coupling_from_string(const std::string& name) {
  if (name == "J1" || name == "j1") return Coupling::J1;
  if (name == "J2" || name == "j2") return Coupling::J2;
  throw std::invalid_argument("unknown coupling '" + name + "'");
}

SpinChainParams SpinChainParams::uniform(int L, double J1, double J2,
                                         double Delta, double hz, double gx) {
  SpinChainParams p;
  p.L = L;
  p.J1 = J1;
  p.J2 = J2;
  p.Delta = Delta;
  p.hz.assign(static_cast<std::size_t>(std::max(L, 0)), hz);
  p.gx.assign(static_cast<std::size_t>(std::max(L, 0)), gx);
  return p;
}

SpinChainParams SpinChainParams::family_defaults(int L) {
  return uniform(L, 0.0, 0.5, 1.0, 0.5, -0.2);
}

void SpinChainParams::set_coupling(Coupling c, double value) {
  (c == Coupling::J1 ? J1 : J2) = value;
}

void SpinChainParams::validate() const {
  if (L < 3)
    throw std::invalid_argument("SpinChainParams: L must be >= 3, got " +
                                std::to_string(L));
  if (L > 20)
    throw std::invalid_argument("SpinChainParams: dense L > 20 unsupported");
  if (hz.size() != static_cast<std::size_t>(L) ||
      gx.size() != static_cast<std::size_t>(L))
    throw std::invalid_argument("SpinChainParams: field vectors need length L");
  auto finite = [](double v) { return std::isfinite(v); };
  bool ok = finite(J1) && finite(J2) && finite(Delta);
  for (double v : hz) ok = ok && finite(v);
  for (double v : gx) ok = ok && finite(v);
  if (!ok) throw std::invalid_argument("SpinChainParams: non-finite entry");
}

SpinChainParams LatentSpec::with_latent(std::span<const double> theta) const {
  if (theta.size() != free.size())
    throw std::invalid_argument("LatentSpec: latent vector has length " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(free.size()));
  SpinChainParams p = fixed_base;
  for (std::size_t l = 0; l < free.size(); ++l) p.set_coupling(free[l], theta[l]);
  return p;
}

void LatentSpec::validate() const {
  if (free.empty() || free.size() > 2)
    throw std::invalid_argument("LatentSpec: latent dimension must be 1 or 2");
  if (free.size() == 2 && free[0] == free[1])
    throw std::invalid_argument("LatentSpec: duplicate free coupling");
  fixed_base.validate();
}

PauliEmbedding embed_pauli(int site, PauliAxis axis, int L) {
  check_site(site, L);
  const std::size_t dim = std::size_t{1} << L;
  const std::size_t mk = site_mask(site, L);
  PauliEmbedding out{HamiltonianMatrix::Zero(dim, dim), axis == PauliAxis::Y};
  for (std::size_t a = 0; a < dim; ++a) {
    const bool down = (a & mk) != 0;
    switch (axis) {
      case PauliAxis::Z:
        out.matrix(a, a) = down ? -1.0 : 1.0;
        break;
      case PauliAxis::X:
        out.matrix(a ^ mk, a) = 1.0;
        break;
      case PauliAxis::Y:
        // sigma^y = i [[0, -1], [1, 0]]
        out.matrix(a ^ mk, a) = down ? -1.0 : 1.0;
        break;
    }
  }
  return out;
}

HamiltonianMatrix coupling_term(int i, int j, double Delta, int L) {
  if (L < 2) throw std::invalid_argument("coupling_term: L must be >= 2");
  if (i < 1 || j < 1)
    throw std::out_of_range("coupling_term: sites are 1-based");
  const int wi = wrap_site(i, L);
  const int wj = wrap_site(j, L);
  if (wi == wj)
    throw std::invalid_argument("coupling_term: self-coupling under PBC (i=" +
                                std::to_string(i) + ", j=" + std::to_string(j) +
                                ")");
  const std::size_t dim = std::size_t{1} << L;
  HamiltonianMatrix H = HamiltonianMatrix::Zero(dim, dim);
  add_bond(H, wi, wj, 1.0, Delta, L);
  return H;
}

HamiltonianMatrix build_hamiltonian(const SpinChainParams& p) {
  p.validate();
  const std::size_t dim = p.dim();
  HamiltonianMatrix H = HamiltonianMatrix::Zero(dim, dim);
  for (int i = 1; i <= p.L; ++i) {
    if (p.J1 != 0.0) add_bond(H, i, wrap_site(i + 1, p.L), p.J1, p.Delta, p.L);
    if (p.J2 != 0.0) add_bond(H, i, wrap_site(i + 2, p.L), p.J2, p.Delta, p.L);
  }
  add_fields(H, p);
  return H;
}

SpinChainParams apply_symmetry_breaking(const SpinChainParams& p) {
  if (p.L < 4)
    throw std::invalid_argument(
        "apply_symmetry_breaking: L must be >= 4 so the perturbed sites differ");
  p.validate();
  SpinChainParams out = p;
  out.hz[0] = -out.hz[0];
  out.gx[0] = -out.gx[0];
  const std::size_t mid = static_cast<std::size_t>(p.L / 2) - 1;
  out.hz[mid] -= 0.1;
  out.gx[mid] += 0.1;
  return out;
}

HamiltonianMatrix DecoderBasis::assemble(std::span<const double> theta) const {
  if (theta.size() != operators.size())
    throw std::invalid_argument("DecoderBasis: latent length mismatch");
  HamiltonianMatrix H = constant;
  for (std::size_t l = 0; l < operators.size(); ++l) H += theta[l] * operators[l];
  return H;
}

DecoderBasis basis_operators(const LatentSpec& spec) {
  spec.fixed_base.validate();
  const SpinChainParams& base = spec.fixed_base;
  SpinChainParams stripped = base;
  for (Coupling c : spec.free) stripped.set_coupling(c, 0.0);

  DecoderBasis basis;
  basis.constant = build_hamiltonian(stripped);
  const std::size_t dim = base.dim();
  for (Coupling c : spec.free) {
    const int range = c == Coupling::J1 ? 1 : 2;
    HamiltonianMatrix B = HamiltonianMatrix::Zero(dim, dim);
    for (int i = 1; i <= base.L; ++i)
      add_bond(B, i, wrap_site(i + range, base.L), 1.0, base.Delta, base.L);
    basis.operators.push_back(std::move(B));
  }
  return basis;
}

}  // namespace eigenlearn
