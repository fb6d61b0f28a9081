#include <doctest.h>

#include <cmath>

#include "eigenlearn/random.hpp"
#include "eigenlearn/spin_chain.hpp"
#include "oracles.hpp"

using namespace eigenlearn;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

// One-site translation |s_1 .. s_L> -> |s_L s_1 .. s_{L-1}>.
Eigen::MatrixXd translation(int L) {
  const int D = 1 << L;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(D, D);
  for (int a = 0; a < D; ++a) {
    const int last = a & 1;
    const int b = (a >> 1) | (last << (L - 1));
    P(b, a) = 1.0;
  }
  return P;
}

}  // namespace

TEST_SUITE("spin_chain") {
  TEST_CASE("embed_pauli examples") {
    CHECK(embed_pauli(1, PauliAxis::Z, 1).matrix == Eigen::Matrix2d(Eigen::Vector2d(1, -1).asDiagonal()));

    Eigen::MatrixXd x2 = Eigen::MatrixXd::Zero(4, 4);
    x2(0, 1) = x2(1, 0) = x2(2, 3) = x2(3, 2) = 1.0;
    CHECK(embed_pauli(2, PauliAxis::X, 2).matrix == x2);

    Eigen::VectorXd d(8);
    d << 1, 1, 1, 1, -1, -1, -1, -1;
    CHECK(embed_pauli(1, PauliAxis::Z, 3).matrix == Eigen::MatrixXd(d.asDiagonal()));
  }

  TEST_CASE("embed_pauli agrees with the Kronecker oracle on every axis") {
    for (int L = 1; L <= 4; ++L)
      for (int site = 1; site <= L; ++site)
        for (auto [axis, c] : {std::pair{PauliAxis::X, 'x'}, std::pair{PauliAxis::Y, 'y'},
                               std::pair{PauliAxis::Z, 'z'}}) {
          const PauliEmbedding e = embed_pauli(site, axis, L);
          const oracle::CMat ref = oracle::embed(site, c, L);
          CHECK(e.imaginary == (axis == PauliAxis::Y));
          const oracle::CMat got = e.imaginary ? oracle::CMat(std::complex<double>(0, 1) * e.matrix.cast<std::complex<double>>())
                                               : oracle::CMat(e.matrix.cast<std::complex<double>>());
          CHECK((got - ref).cwiseAbs().maxCoeff() == 0.0);
          CHECK(e.matrix.trace() == 0.0);
        }
  }

  TEST_CASE("embed_pauli errors") {
    CHECK_THROWS(embed_pauli(0, PauliAxis::X, 3));
    CHECK_THROWS(embed_pauli(4, PauliAxis::X, 3));
    CHECK_THROWS(embed_pauli(1, PauliAxis::X, 0));
  }

  TEST_CASE("coupling_term examples") {
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(4, 4);
    ref.diagonal() << 1, -1, -1, 1;
    ref(1, 2) = ref(2, 1) = 2.0;
    CHECK(coupling_term(1, 2, 1.0, 2) == ref);
    ref.diagonal().setZero();
    CHECK(coupling_term(1, 2, 0.0, 2) == ref);
  }

  TEST_CASE("coupling_term matches complex oracle and wraps") {
    Rng rng(11);
    for (int L = 3; L <= 5; ++L)
      for (int i = 1; i <= L; ++i)
        for (int j : {i + 1, i + 2}) {
          const double delta = rng.uniform(-2.0, 2.0);
          const Eigen::MatrixXd H = coupling_term(i, j, delta, L);
          const oracle::CMat ref = oracle::bond(i, j, delta, L);
          CHECK(ref.imag().cwiseAbs().maxCoeff() == 0.0);
          CHECK(max_abs(H - ref.real()) <= 1e-15);
          CHECK(H == H.transpose());
        }
    CHECK_THROWS(coupling_term(1, 4, 1.0, 3));
    CHECK_THROWS(coupling_term(2, 2, 1.0, 3));
  }

  TEST_CASE("build_hamiltonian examples") {
    SpinChainParams p = SpinChainParams::uniform(3, 0.0, 0.0, 1.0, 1.0, 0.0);
    Eigen::VectorXd d(8);
    d << 3, 1, 1, -1, 1, -1, -1, -3;
    CHECK(build_hamiltonian(p) == Eigen::MatrixXd(d.asDiagonal()));

    SpinChainParams q = SpinChainParams::uniform(6, 0.4, 0.5, 1.0, 0.5, -0.2);
    CHECK(std::abs(build_hamiltonian(q).trace()) <= 1e-12);

    SpinChainParams r = SpinChainParams::uniform(4, 1.0, 0.0, 1.0, 0.0, 0.0);
    Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(16, 16);
    for (int i = 1; i <= 4; ++i) ref += oracle::bond(i, i + 1, 1.0, 4).real();
    CHECK(max_abs(build_hamiltonian(r) - ref) <= 1e-15);
  }

  TEST_CASE("build_hamiltonian matches the dense oracle for random parameters") {
    Rng rng(5);
    for (int L : {3, 4, 5}) {
      const SpinChainParams p = oracle::random_params(L, rng);
      const Eigen::MatrixXd H = build_hamiltonian(p);
      const oracle::CMat ref = oracle::hamiltonian(p);
      CHECK(ref.imag().cwiseAbs().maxCoeff() <= 1e-15);
      CHECK(max_abs(H - ref.real()) <= 1e-12);
      CHECK(H == H.transpose());
    }
  }

  TEST_CASE("apply_symmetry_breaking examples") {
    const SpinChainParams p = SpinChainParams::uniform(6, 0.4, 0.5, 1.0, 0.5, -0.2);
    const SpinChainParams q = apply_symmetry_breaking(p);
    const std::vector<double> hz = {-0.5, 0.5, 0.4, 0.5, 0.5, 0.5};
    const std::vector<double> gx = {0.2, -0.2, -0.1, -0.2, -0.2, -0.2};
    for (int i = 0; i < 6; ++i) {
      CHECK(q.hz[i] == doctest::Approx(hz[i]).epsilon(1e-15));
      CHECK(q.gx[i] == doctest::Approx(gx[i]).epsilon(1e-15));
    }
    CHECK(q.J1 == p.J1);
    CHECK(q.J2 == p.J2);

    const SpinChainParams twice = apply_symmetry_breaking(q);
    CHECK(twice.hz[0] == p.hz[0]);
    CHECK(twice.hz[2] != doctest::Approx(p.hz[2]));

    const SpinChainParams z = apply_symmetry_breaking(SpinChainParams::uniform(4, 0, 0, 1, 0, 0));
    CHECK(z.hz == std::vector<double>{0.0, -0.1, 0.0, 0.0});
    CHECK(z.gx == std::vector<double>{0.0, 0.1, 0.0, 0.0});

    CHECK_THROWS(apply_symmetry_breaking(SpinChainParams::uniform(3, 0, 0, 1, 0, 0)));
  }

  TEST_CASE("basis_operators reproduce build_hamiltonian") {
    Rng rng(3);
    LatentSpec spec;
    spec.free = {Coupling::J1};
    spec.fixed_base = apply_symmetry_breaking(SpinChainParams::family_defaults(6));
    const DecoderBasis b = basis_operators(spec);
    REQUIRE(b.operators.size() == 1);
    const double t07[] = {0.7};
    CHECK(max_abs(b.assemble(t07) - build_hamiltonian(spec.with_latent(t07))) <= 1e-12);
    for (int k = 0; k < 5; ++k) {
      const double t[] = {rng.uniform(-2.0, 2.0)};
      CHECK(max_abs(b.assemble(t) - build_hamiltonian(spec.with_latent(t))) <= 1e-12);
    }

    spec.free = {Coupling::J1, Coupling::J2};
    const DecoderBasis b2 = basis_operators(spec);
    REQUIRE(b2.operators.size() == 2);
    for (const auto& B : b2.operators) {
      CHECK(std::abs(B.trace()) <= 1e-12);
      CHECK(B == B.transpose());
    }
    for (int k = 0; k < 5; ++k) {
      const double t[] = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
      CHECK(max_abs(b2.assemble(t) - build_hamiltonian(spec.with_latent(t))) <= 1e-12);
    }

    spec.free = {};
    const DecoderBasis b0 = basis_operators(spec);
    CHECK(b0.operators.empty());
    CHECK(b0.constant == build_hamiltonian(spec.fixed_base));
  }

  TEST_CASE("linearity in J1") {
    const SpinChainParams base = SpinChainParams::family_defaults(5);
    LatentSpec spec{{Coupling::J1}, base};
    const Eigen::MatrixXd B = basis_operators(spec).operators.front();
    Rng rng(8);
    for (int k = 0; k < 5; ++k) {
      const double a = rng.uniform(-2, 2), d = rng.uniform(-2, 2);
      SpinChainParams pa = base, pb = base;
      pa.J1 = a;
      pb.J1 = a + d;
      CHECK(max_abs(build_hamiltonian(pb) - build_hamiltonian(pa) - d * B) <= 1e-12);
    }
  }

  TEST_CASE("translation covariance holds with uniform fields and fails after breaking") {
    for (int L : {4, 6}) {
      const SpinChainParams p = SpinChainParams::uniform(L, 0.4, 0.5, 1.0, 0.5, -0.2);
      const Eigen::MatrixXd P = translation(L);
      const Eigen::MatrixXd H = build_hamiltonian(p);
      CHECK(max_abs(P * H * P.transpose() - H) <= 1e-12);
      const Eigen::MatrixXd Hb = build_hamiltonian(apply_symmetry_breaking(p));
      CHECK(max_abs(P * Hb * P.transpose() - Hb) > 0.05);
    }
  }

  TEST_CASE("parameter validation") {
    SpinChainParams p = SpinChainParams::family_defaults(6);
    CHECK_NOTHROW(p.validate());
    p.L = 2;
    CHECK_THROWS(p.validate());
    p = SpinChainParams::family_defaults(6);
    p.hz.pop_back();
    CHECK_THROWS(p.validate());
    p = SpinChainParams::family_defaults(6);
    p.J2 = std::nan("");
    CHECK_THROWS(build_hamiltonian(p));

    LatentSpec s{{Coupling::J1, Coupling::J1}, SpinChainParams::family_defaults(6)};
    CHECK_THROWS(s.validate());
    s.free = {};
    CHECK_THROWS(s.validate());
    s.free = {Coupling::J2, Coupling::J1};
    CHECK_NOTHROW(s.validate());
    CHECK(coupling_from_string("J2") == Coupling::J2);
    CHECK_THROWS(coupling_from_string("J3"));
  }
}
