#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eigenlearn/diagnostics.hpp"
#include "eigenlearn/random.hpp"
#include "oracles.hpp"

using namespace eigenlearn;

namespace {

Eigen::VectorXd random_state(int D, Rng& rng) {
  return oracle::random_orthonormal(D, 1, rng).col(0);
}

}  // namespace

TEST_SUITE("diagnostics") {
  TEST_CASE("entanglement entropy examples") {
    Eigen::VectorXd product = Eigen::VectorXd::Zero(8);
    product(0) = 1.0;
    CHECK(entanglement_entropy(product, 3, 1) == doctest::Approx(0.0));

    Eigen::VectorXd bell = Eigen::VectorXd::Zero(4);
    bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(entanglement_entropy(bell, 2, 1) - std::log(2.0)) <= 1e-9);
  }

  TEST_CASE("entanglement entropy matches the partial-trace oracle") {
    LatentSpec spec{{Coupling::J1}, apply_symmetry_breaking(SpinChainParams::family_defaults(6))};
    const double t[] = {0.4};
    const Spectrum s = diagonalize(build_hamiltonian(spec.with_latent(t)));
    const Eigen::VectorXd ground = s.vectors.col(0);
    CHECK(std::abs(entanglement_entropy(ground, 6, 3) - oracle::partial_trace_entropy(ground, 6, 3)) <= 1e-9);
    for (int m : {10, 31, 63})
      for (int cut = 1; cut < 6; ++cut) {
        const Eigen::VectorXd v = s.vectors.col(m);
        CHECK(std::abs(entanglement_entropy(v, 6, cut) -
                       oracle::partial_trace_entropy(v, 6, cut)) <= 1e-9);
      }
  }

  TEST_CASE("entropy bounds and bipartition symmetry") {
    Rng rng(13);
    for (int k = 0; k < 10; ++k) {
      const int L = 4 + k % 3;
      const Eigen::VectorXd v = random_state(1 << L, rng);
      for (int cut = 1; cut < L; ++cut) {
        const double s = entanglement_entropy(v, L, cut);
        CHECK(s >= 0.0);
        CHECK(s <= std::min(cut, L - cut) * std::log(2.0) + 1e-12);
        // Reversing the site order turns the first L-cut sites into a cut of
        // size L-cut with the same spectrum as the complement.
        Eigen::VectorXd r(v.size());
        for (Eigen::Index a = 0; a < v.size(); ++a) {
          Eigen::Index b = 0;
          for (int bit = 0; bit < L; ++bit) b |= ((a >> bit) & 1) << (L - 1 - bit);
          r(b) = v(a);
        }
        CHECK(std::abs(s - entanglement_entropy(r, L, L - cut)) <= 1e-9);
      }
      const double p = participation_entropy(v);
      CHECK(p >= 0.0);
      CHECK(p <= L * std::log(2.0) + 1e-12);
    }
  }

  TEST_CASE("participation entropy examples") {
    Eigen::VectorXd e5 = Eigen::VectorXd::Zero(16);
    e5(4) = 1.0;
    CHECK(participation_entropy(e5) == 0.0);
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(64, 1.0 / 8.0);
    CHECK(std::abs(participation_entropy(u) - std::log(64.0)) <= 1e-9);
    Eigen::VectorXd v(4);
    v << std::sqrt(0.5), std::sqrt(0.25), std::sqrt(0.25), 0.0;
    CHECK(participation_entropy(v) == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));
    CHECK(participation_entropy(v) == doctest::Approx(1.0397).epsilon(1e-4));
  }

  TEST_CASE("unnormalized input and bad cuts are rejected") {
    const Eigen::VectorXd v = Eigen::VectorXd::Ones(8);
    CHECK_THROWS(entanglement_entropy(v, 3, 1));
    CHECK_THROWS(participation_entropy(v));
    Eigen::VectorXd e = Eigen::VectorXd::Zero(8);
    e(0) = 1.0;
    CHECK_THROWS(entanglement_entropy(e, 3, 0));
    CHECK_THROWS(entanglement_entropy(e, 3, 3));
    CHECK_THROWS(fidelity(e, v));
  }

  TEST_CASE("density of states") {
    const Eigen::Vector4d e(0, 1, 2, 3);
    Histogram h = density_of_states(e, 2);
    CHECK(h.counts == std::vector<long>{2, 2});
    CHECK(h.centers == std::vector<double>{0.25, 0.75});
    h = density_of_states(e, 1);
    CHECK(h.counts == std::vector<long>{4});
    CHECK_THROWS(density_of_states(Eigen::Vector3d(1, 1, 1), 4));
    CHECK_THROWS(density_of_states(e, 0));
  }

  TEST_CASE("density of states of a large chain has a central bulk peak") {
    SpinChainParams p = SpinChainParams::family_defaults(10);
    p.J1 = 0.4;
    p.Delta = 0.5;
    const Spectrum s = diagonalize(build_hamiltonian(apply_symmetry_breaking(p)));
    const Histogram h = density_of_states(s.energies, 64);
    long total = 0;
    for (long c : h.counts) total += c;
    CHECK(total == 1024);
    const auto peak = std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin();
    CHECK(h.centers[static_cast<std::size_t>(peak)] >= 0.35);
    CHECK(h.centers[static_cast<std::size_t>(peak)] <= 0.65);
  }

  TEST_CASE("fidelity examples") {
    Rng rng(2);
    const Eigen::VectorXd v = random_state(16, rng);
    CHECK(fidelity(v, v) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fidelity(v, -v) == doctest::Approx(1.0).epsilon(1e-14));
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(4), mix = Eigen::VectorXd::Zero(4);
    e1(0) = 1.0;
    mix(0) = mix(1) = 1.0 / std::sqrt(2.0);
    CHECK(fidelity(e1, mix) == doctest::Approx(0.5).epsilon(1e-14));
  }

  TEST_CASE("diagnostics record invariants and CSV") {
    SpinChainParams p = SpinChainParams::family_defaults(6);
    p.J1 = 0.4;
    const Spectrum s = diagonalize(build_hamiltonian(apply_symmetry_breaking(p)));
    const DiagnosticsRecord r = compute_diagnostics(s);
    REQUIRE(r.size() == 64);
    CHECK(r.energy_rescaled.size() == 64);
    CHECK(r.svn_norm.size() == 64);
    CHECK(r.spart_norm.size() == 64);
    for (std::size_t m = 0; m < 64; ++m) {
      if (m) CHECK(r.index_norm[m] > r.index_norm[m - 1]);
      CHECK(r.index_norm[m] > 0.0);
      CHECK(r.index_norm[m] <= 1.0);
      CHECK(r.svn_norm[m] >= 0.0);
      CHECK(r.svn_norm[m] <= 1.0 + 1e-9);
      CHECK(r.spart_norm[m] >= 0.0);
      CHECK(r.spart_norm[m] <= 1.0 + 1e-9);
    }
    CHECK(r.energy_rescaled.front() == 0.0);
    CHECK(r.energy_rescaled.back() == 1.0);
    std::ostringstream out;
    write_diagnostics_csv(out, r);
    const std::string csv = out.str();
    CHECK(csv.rfind("m_index,index_norm,energy_rescaled,svn_norm,spart_norm\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 65);
  }
}
