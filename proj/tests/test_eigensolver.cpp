#include <doctest.h>

#include <cmath>
#include <limits>

#include "eigenlearn/eigensolver.hpp"
#include "eigenlearn/random.hpp"
#include "oracles.hpp"

using namespace eigenlearn;

namespace {

void check_spectrum(const Eigen::MatrixXd& H, const Spectrum& s) {
  const Eigen::Index D = H.rows();
  for (Eigen::Index m = 1; m < D; ++m) CHECK(s.energies(m - 1) <= s.energies(m));
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(D, D);
  CHECK((s.vectors.transpose() * s.vectors - I).cwiseAbs().maxCoeff() <= 1e-9);
  for (Eigen::Index m = 0; m < D; ++m) {
    const double e = s.energies(m);
    CHECK((H * s.vectors.col(m) - e * s.vectors.col(m)).norm() <=
          1e-8 * std::max(1.0, std::abs(e)));
    Eigen::Index arg = 0;
    s.vectors.col(m).cwiseAbs().maxCoeff(&arg);
    CHECK(s.vectors(arg, m) > 0.0);
  }
  CHECK(std::abs(H.trace() - s.energies.sum()) <= 1e-8 * std::max(1.0, H.cwiseAbs().sum() / D));
}

}  // namespace

TEST_SUITE("eigensolver") {
  TEST_CASE("diagonal input") {
    Eigen::VectorXd d(8);
    d << 3, 1, 1, -1, 1, -1, -1, -3;
    const Spectrum s = diagonalize(Eigen::MatrixXd(d.asDiagonal()));
    Eigen::VectorXd e(8);
    e << -3, -1, -1, -1, 1, 1, 1, 3;
    CHECK((s.energies - e).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index m = 0; m < 8; ++m) {
      CHECK(s.vectors.col(m).cwiseAbs().maxCoeff() == 1.0);
      CHECK(s.vectors.col(m).cwiseAbs().sum() == 1.0);
    }
    CHECK(s.L == 3);
  }

  TEST_CASE("two-level sigma x") {
    Eigen::MatrixXd H(2, 2);
    H << 0, 1, 1, 0;
    const Spectrum s = diagonalize(H);
    CHECK(s.energies(0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(s.energies(1) == doctest::Approx(1.0).epsilon(1e-15));
    const double r = 1.0 / std::sqrt(2.0);
    // Tie between the two equal magnitudes: the lowest row is made positive.
    CHECK(s.vectors(0, 0) == doctest::Approx(r));
    CHECK(s.vectors(1, 0) == doctest::Approx(-r));
    CHECK(s.vectors(0, 1) == doctest::Approx(r));
    CHECK(s.vectors(1, 1) == doctest::Approx(r));
  }

  TEST_CASE("dataset Hamiltonian matches the deflation oracle") {
    LatentSpec spec{{Coupling::J1}, apply_symmetry_breaking(SpinChainParams::family_defaults(6))};
    const double t[] = {0.4};
    const Eigen::MatrixXd H = build_hamiltonian(spec.with_latent(t));
    const Spectrum s = diagonalize(H);
    check_spectrum(H, s);
    const Eigen::VectorXd ref = oracle::deflation_eigenvalues(H, 17);
    CHECK((s.energies - ref).cwiseAbs().maxCoeff() <= 1e-7);

    const int m_av = mean_energy_index(s, H);
    const double mean = s.energies.sum() / 64.0;
    Eigen::Index arg = 0;
    (s.energies.array() - mean).abs().minCoeff(&arg);
    CHECK(m_av == arg + 1);
  }

  TEST_CASE("random chains satisfy the spectrum invariants") {
    Rng rng(21);
    for (int L : {3, 4, 5, 6}) {
      const Eigen::MatrixXd H = build_hamiltonian(oracle::random_params(L, rng));
      check_spectrum(H, diagonalize(H));
    }
  }

  TEST_CASE("fix_gauge examples and idempotence") {
    Eigen::MatrixXd v(3, 1);
    v << 0, -1, 0;
    CHECK(fix_gauge(v) == Eigen::MatrixXd(Eigen::Vector3d(0, 1, 0)));
    Eigen::MatrixXd w(2, 1);
    w << 0.8, -0.6;
    CHECK(fix_gauge(w) == w);

    Rng rng(4);
    for (int k = 0; k < 5; ++k) {
      const Eigen::MatrixXd Q = oracle::random_orthonormal(12, 12, rng);
      const Eigen::MatrixXd once = fix_gauge(Q);
      CHECK(fix_gauge(once) == once);
    }
    CHECK_THROWS(fix_gauge(Eigen::MatrixXd::Zero(3, 2)));
  }

  TEST_CASE("mean_energy_index examples") {
    Eigen::VectorXd d(8);
    d << 3, 1, 1, -1, 1, -1, -1, -3;
    const Eigen::MatrixXd H = d.asDiagonal();
    CHECK(mean_energy_index(diagonalize(H), H) == 2);

    const Eigen::MatrixXd G = Eigen::Vector3d(0, 1, 2).asDiagonal();
    CHECK(mean_energy_index(diagonalize(G), G) == 2);
  }

  TEST_CASE("determinism") {
    Rng rng(9);
    const Eigen::MatrixXd H = build_hamiltonian(oracle::random_params(5, rng));
    const Spectrum a = diagonalize(H), b = diagonalize(H);
    CHECK(a.energies == b.energies);
    CHECK(a.vectors == b.vectors);
  }

  TEST_CASE("input errors") {
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(4, 4);
    H(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(diagonalize(H), std::invalid_argument);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(4, 4);
    A(0, 1) = 1.0;
    CHECK_THROWS_AS(diagonalize(A), std::invalid_argument);
    CHECK_THROWS_AS(diagonalize(Eigen::MatrixXd::Zero(3, 4)), std::invalid_argument);
  }

  TEST_CASE("near-degenerate pairs are reported") {
    const Eigen::MatrixXd H = Eigen::Vector4d(0, 1, 1, 2).asDiagonal();
    const auto pairs = near_degenerate_pairs(diagonalize(H));
    REQUIRE(pairs.size() == 1);
    CHECK(pairs.front() == std::pair<int, int>{2, 3});
  }
}
