#include <doctest.h>

#include <cmath>
#include <sstream>

#include "eigenlearn/training.hpp"

using namespace eigenlearn;

namespace {

LatentSpec j1_base(int L) { return {{Coupling::J1}, SpinChainParams::family_defaults(L)}; }

Dataset small_dataset(std::size_t n, const SpectralProtocol& protocol, std::uint64_t seed, int L = 4) {
  const auto thetas = sample_parameters({parse_domain("-2:2")}, n, SamplingMode::Uniform, seed);
  return generate_dataset(thetas, j1_base(L), protocol, seed);
}

std::string serialize(const Dataset& ds) {
  std::ostringstream out;
  write_dataset(out, ds);
  return out.str();
}

TrainConfig quick_config(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  cfg.seed = 99;
  return cfg;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("grid sampling examples") {
    const auto g = sample_parameters({parse_domain("-2:2")}, 5, SamplingMode::Grid, 0);
    REQUIRE(g.size() == 5);
    const double expected[] = {-2, -1, 0, 1, 2};
    for (int i = 0; i < 5; ++i) CHECK(g[i](0) == doctest::Approx(expected[i]).epsilon(1e-15));

    const auto g2 = sample_parameters({parse_domain("0:1"), parse_domain("-1:1")}, 7, SamplingMode::Grid, 0);
    REQUIRE(g2.size() == 7);  // 3 x 3 grid truncated to 7
    CHECK(g2[0](0) == 0.0);
    CHECK(g2[0](1) == -1.0);
    CHECK(g2[1](1) == 0.0);
    CHECK(g2[3](0) == 0.5);
  }

  TEST_CASE("uniform sampling over an interval union") {
    const Domain holed = parse_domain("-2:-1,0.5:2");
    const auto a = sample_parameters({holed}, 1000, SamplingMode::Uniform, 11);
    const auto b = sample_parameters({holed}, 1000, SamplingMode::Uniform, 11);
    int first = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = a[i](0);
      CHECK(((x >= -2 && x <= -1) || (x >= 0.5 && x <= 2)));
      first += x <= -1 ? 1 : 0;
      CHECK(x == b[i](0));
    }
    CHECK(std::abs(first / 1000.0 - 0.4) <= 0.05);
  }

  TEST_CASE("domain parsing and sampling errors") {
    CHECK(format_domain(parse_domain("-2:-1,0.5:2")) == "-2:-1,0.5:2");
    CHECK_THROWS(parse_domain("1:1"));
    CHECK_THROWS(parse_domain("2:1"));
    CHECK_THROWS(parse_domain("abc"));
    CHECK_THROWS(sample_parameters({}, 5, SamplingMode::Grid, 0));
  }

  TEST_CASE("dataset shapes, single protocol and file round trip") {
    const Dataset ds = small_dataset(20, SpectralProtocol::low(5), 3, 6);
    CHECK(ds.size() == 20);
    for (const Sample& s : ds.samples) {
      CHECK(s.psi.rows() == 64);
      CHECK(s.psi.cols() == 5);
      CHECK(s.projection.G.size() == 1);
    }
    const Dataset single = small_dataset(4, SpectralProtocol::single(1), 3);
    CHECK(single.samples[0].psi.cols() == 1);
    CHECK(single.samples[0].indices == std::vector<int>{1});

    const std::string bytes = serialize(ds);
    CHECK(bytes == serialize(small_dataset(20, SpectralProtocol::low(5), 3, 6)));
    std::istringstream in(bytes);
    const Dataset back = read_dataset(in);
    CHECK(serialize(back) == bytes);
    CHECK(back.samples[7].psi == ds.samples[7].psi);
    CHECK(back.samples[7].projection.G[0] == ds.samples[7].projection.G[0]);

    std::istringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS(read_dataset(truncated));
  }

  TEST_CASE("dataset does not depend on the thread count") {
    const auto thetas = sample_parameters({parse_domain("-2:2")}, 12, SamplingMode::Uniform, 4);
    GenerateOptions many;
    many.threads = 3;
    CHECK(serialize(generate_dataset(thetas, j1_base(4), SpectralProtocol::mid(3), 4)) ==
          serialize(generate_dataset(thetas, j1_base(4), SpectralProtocol::mid(3), 4, many)));
  }

  TEST_CASE("split is disjoint and exhaustive") {
    const Dataset ds = small_dataset(1000, SpectralProtocol::single(1), 6, 4);
    const auto [train, val] = split_dataset(ds, 0.7, 8);
    CHECK(train.size() == 700);
    CHECK(val.size() == 300);
    std::vector<double> all, parts;
    for (const Sample& s : ds.samples) all.push_back(s.theta_true(0));
    for (const Dataset* d : {&train, &val})
      for (const Sample& s : d->samples) parts.push_back(s.theta_true(0));
    std::sort(all.begin(), all.end());
    std::sort(parts.begin(), parts.end());
    CHECK(all == parts);

    for (std::size_t n : {2u, 3u, 17u})
      for (double f : {0.01, 0.5, 0.99}) {
        const auto [a, b] = split_dataset(small_dataset(n, SpectralProtocol::single(1), n), f, 1);
        CHECK(a.size() + b.size() == n);
        CHECK(a.size() >= 1);
        CHECK(b.size() >= 1);
      }
    const auto [one, two] = split_dataset(small_dataset(2, SpectralProtocol::single(1), 1), 0.5, 0);
    CHECK(one.size() == 1);
    CHECK(two.size() == 1);
    CHECK_THROWS(split_dataset(ds, 1.0, 0));
  }

  TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    auto p = init_params<double>(2, 4, 1, 1);
    const auto before = p;
    auto state = AdamState<double>::for_params(p);
    const auto zero = EncoderParams<double>::zeros(2, 4, 1);
    for (int k = 0; k < 5; ++k) adam_update(p, zero, state, 1e-3);
    for (std::size_t i = 0; i < p.tensors().size(); ++i) CHECK(*p.tensors()[i] == *before.tensors()[i]);
  }

  TEST_CASE("adam: constant gradient gives steps of size lr with opposite sign") {
    auto p = EncoderParams<double>::zeros(1, 1, 1);
    auto g = EncoderParams<double>::zeros(1, 1, 1);
    g.w_in(0, 0) = 3.0;
    g.b_in(0, 0) = -0.02;
    auto state = AdamState<double>::for_params(p);
    for (int k = 0; k < 200; ++k) {
      const double w = p.w_in(0, 0), b = p.b_in(0, 0);
      adam_update(p, g, state, 1e-3);
      CHECK(p.w_in(0, 0) - w == doctest::Approx(-1e-3).epsilon(1e-6));
      CHECK(p.b_in(0, 0) - b == doctest::Approx(1e-3).epsilon(1e-5));
    }
  }

  TEST_CASE("adam: three-step hand-computed trajectory") {
    auto p = EncoderParams<double>::zeros(1, 1, 1);
    p.w_in(0, 0) = 0.5;
    auto state = AdamState<double>::for_params(p);
    const double grads[] = {0.4, -1.0, 0.25};
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double x = 0.5, m = 0.0, v = 0.0;
    for (int t = 1; t <= 3; ++t) {
      auto g = EncoderParams<double>::zeros(1, 1, 1);
      g.w_in(0, 0) = grads[t - 1];
      adam_update(p, g, state, lr);
      m = b1 * m + (1 - b1) * grads[t - 1];
      v = b2 * v + (1 - b2) * grads[t - 1] * grads[t - 1];
      const double mhat = m / (1 - std::pow(b1, t)), vhat = v / (1 - std::pow(b2, t));
      x -= lr * mhat / (std::sqrt(vhat) + eps);
      CHECK(std::abs(p.w_in(0, 0) - x) <= 1e-12);
    }
    CHECK(state.step == 3);
  }

  TEST_CASE("adam: non-finite gradient throws and leaves state untouched") {
    auto p = init_params<double>(1, 2, 1, 3);
    const auto before = p;
    auto state = AdamState<double>::for_params(p);
    auto g = EncoderParams<double>::zeros(1, 2, 1);
    g.w_r2(1, 0) = std::nan("");
    CHECK_THROWS_AS(adam_update(p, g, state, 1e-3), TrainingError);
    CHECK(state.step == 0);
    CHECK(p.w_r2 == before.w_r2);
  }

  TEST_CASE("run_training: history length, determinism and validation") {
    const Dataset ds = small_dataset(40, SpectralProtocol::low(3), 5);
    const auto [train, val] = split_dataset(ds, 0.7, 1);
    const auto init = init_params<float>(3, 8, 1, 2);
    const TrainResult one = run_training(train, val, quick_config(1), init);
    CHECK(one.history.size() == 1);
    CHECK(one.history[0].epoch == 1);

    const TrainResult a = run_training(train, val, quick_config(4), init);
    const TrainResult b = run_training(train, val, quick_config(4), init);
    REQUIRE(a.history.size() == 4);
    for (std::size_t e = 0; e < 4; ++e) {
      CHECK(a.history[e].train_rayleigh == b.history[e].train_rayleigh);
      CHECK(a.history[e].val_theta == b.history[e].val_theta);
      CHECK(a.history[e].train_objective == a.history[e].train_rayleigh);
    }
    CHECK(a.params.w_out2 == b.params.w_out2);
    std::ostringstream csv;
    write_history_csv(csv, a.history);
    CHECK(csv.str().rfind("epoch,train_rayleigh,val_rayleigh,val_theta\n", 0) == 0);

    TrainConfig bad = quick_config(0);
    CHECK_THROWS(run_training(train, val, bad, init));
    CHECK_THROWS(run_training(train, val, quick_config(1), init_params<float>(2, 8, 1, 2)));
  }

  TEST_CASE("rayleigh training never reads theta_true") {
    const Dataset ds = small_dataset(30, SpectralProtocol::low(3), 12);
    auto [train, val] = split_dataset(ds, 0.7, 2);
    const auto init = init_params<float>(3, 8, 1, 4);
    const TrainResult clean = run_training(train, val, quick_config(3), init);
    for (Sample& s : train.samples) s.theta_true.setConstant(1e6);
    for (Sample& s : val.samples) s.theta_true.setConstant(std::nan(""));
    const TrainResult corrupt = run_training(train, val, quick_config(3), init);
    for (std::size_t e = 0; e < 3; ++e) {
      CHECK(clean.history[e].train_rayleigh == corrupt.history[e].train_rayleigh);
      CHECK(clean.history[e].val_rayleigh == corrupt.history[e].val_rayleigh);
    }
    CHECK(clean.params.w_in == corrupt.params.w_in);
  }

  TEST_CASE("supervised mode optimizes the parameter loss") {
    const Dataset ds = small_dataset(30, SpectralProtocol::low(3), 12);
    const auto [train, val] = split_dataset(ds, 0.7, 2);
    TrainConfig cfg = quick_config(2);
    cfg.loss_mode = LossMode::SupervisedTheta;
    const TrainResult r = run_training(train, val, cfg, init_params<float>(3, 8, 1, 4));
    CHECK(r.history[0].train_objective != r.history[0].train_rayleigh);
    CHECK(loss_mode_from_string("supervised_theta") == LossMode::SupervisedTheta);
  }

  TEST_CASE("non-finite loss aborts with the epoch index") {
    Dataset ds = small_dataset(10, SpectralProtocol::low(2), 1);
    ds.samples[3].projection.G_const(0, 1) = std::nan("");
    try {
      run_training(ds, Dataset{}, quick_config(2), init_params<float>(2, 8, 1, 1));
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
    }
  }

  TEST_CASE("evaluate: perfect and constant predictors") {
    const auto grid = sample_parameters({parse_domain("-2:2")}, 201, SamplingMode::Grid, 0);
    const Dataset ds = generate_dataset(grid, j1_base(4), SpectralProtocol::low(2), 0);
    std::vector<Eigen::VectorXd> truth, zero;
    for (const Sample& s : ds.samples) {
      truth.push_back(s.theta_true);
      zero.push_back(Eigen::VectorXd::Zero(1));
    }
    const EvalMetrics perfect = evaluate_predictions(truth, ds);
    CHECK(perfect.mean_theta_loss == 0.0);
    CHECK(perfect.median_theta_loss == 0.0);
    CHECK(perfect.mean_rayleigh <= 1e-12);
    // Mean of x^2 over n evenly spaced points on [-2, 2] is 4/3 (n+1)/(n-1).
    CHECK(evaluate_predictions(zero, ds).mean_theta_loss == doctest::Approx(4.0 / 3.0 * 202.0 / 200.0).epsilon(1e-12));
    CHECK_THROWS(evaluate_predictions(zero, small_dataset(3, SpectralProtocol::low(2), 1)));
  }

  TEST_CASE("evaluate: spectral error and fidelity against rebuild oracle") {
    const Dataset ds = small_dataset(6, SpectralProtocol::low(2), 9);
    std::vector<Eigen::VectorXd> pred;
    for (const Sample& s : ds.samples) pred.push_back(s.theta_true.array() + 0.3);
    EvalOptions opts;
    opts.spectral_error = true;
    opts.fidelity = true;
    const EvalMetrics m = evaluate_predictions(pred, ds, opts);
    double mean = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const double t[] = {ds.samples[i].theta_true(0)}, tt[] = {pred[i](0)};
      const auto E = diagonalize(build_hamiltonian(ds.meta.family.with_latent(t))).energies;
      const auto Et = diagonalize(build_hamiltonian(ds.meta.family.with_latent(tt))).energies;
      const double expected = spectral_error(E, Et);
      CHECK(m.per_sample[i].spectral_error == doctest::Approx(expected).epsilon(1e-10));
      CHECK(m.per_sample[i].fidelity >= 0.0);
      CHECK(m.per_sample[i].fidelity <= 1.0 + 1e-6);
      mean += expected / static_cast<double>(ds.size());
    }
    CHECK(m.mean_spectral_error == doctest::Approx(mean).epsilon(1e-10));

    const EvalMetrics exact = evaluate_predictions(
        [&] { std::vector<Eigen::VectorXd> v; for (const Sample& s : ds.samples) v.push_back(s.theta_true); return v; }(),
        ds, opts);
    CHECK(exact.mean_spectral_error <= 1e-12);
    CHECK(exact.mean_fidelity == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("evaluate is reproducible") {
    const Dataset ds = small_dataset(12, SpectralProtocol::low(2), 2);
    const auto p = init_params<float>(2, 8, 1, 3);
    CHECK(evaluate(p, ds).mean_rayleigh == evaluate(p, ds).mean_rayleigh);
    CHECK(predict(p, ds).size() == 12);
  }
}
