#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "eigenlearn/encoder_net.hpp"
#include "eigenlearn/loss.hpp"
#include "eigenlearn/protocols.hpp"
#include "eigenlearn/spin_chain.hpp"

namespace eigenlearn {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Parameter sampling

enum class SamplingMode { Grid, Uniform };

std::string to_string(SamplingMode mode);
SamplingMode sampling_mode_from_string(const std::string& name);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
};

/// Union of disjoint intervals, sampled as one concatenated segment.
using Domain = std::vector<Interval>;

/// Parses "lo:hi" or a comma-separated union "lo:hi,lo:hi".
Domain parse_domain(const std::string& text);
std::string format_domain(const Domain& domain);

/// One latent vector per sample. Grid mode takes ceil(n^(1/Theta)) evenly
/// spaced points per axis (endpoints included), forms the Cartesian product
/// and keeps the first n. Uniform mode draws i.i.d. points.
std::vector<Eigen::VectorXd> sample_parameters(const std::vector<Domain>& domains,
                                               std::size_t n, SamplingMode mode,
                                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Datasets

struct Sample {
  Eigen::VectorXd theta_true;
  std::vector<int> indices;
  Eigen::VectorXd energies;
  Eigen::MatrixXf psi;  // D x M network input, single precision
  ProjectedBasis projection;
};

struct DatasetMeta {
  int L = 0;
  std::size_t dim = 0;
  SpectralProtocol protocol;
  int theta_dim = 0;
  std::uint64_t seed = 0;
  /// Latent family actually used to build the Hamiltonians (symmetry
  /// breaking already applied to fixed_base). Empty free list when unknown,
  /// e.g. after reading a dataset file.
  LatentSpec family;
  /// Samples whose spectrum had an adjacent gap below 1e-10.
  std::size_t near_degenerate_samples = 0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  int width() const { return meta.protocol.width(); }
};

struct GenerateOptions {
  bool symmetry_breaking = true;
  int threads = 1;
};

/// Build, diagonalize, select and project every latent vector. Samples are
/// independent and the result does not depend on the thread count.
Dataset generate_dataset(const std::vector<Eigen::VectorXd>& thetas,
                         const LatentSpec& spec, const SpectralProtocol& protocol,
                         std::uint64_t seed, const GenerateOptions& options = {});

/// Family as used by generate_dataset for the given options.
LatentSpec effective_family(const LatentSpec& spec, bool symmetry_breaking);

/// Binary "EIGD" dataset file, version 1, little-endian.
void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);

/// Deterministic shuffled split into (train, validation); the training part
/// gets round(fraction * n) samples, clamped so both parts are non-empty
/// whenever n >= 2.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction,
                                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
struct AdamState {
  EncoderParams<T> m;
  EncoderParams<T> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const EncoderParams<T>& p) {
    AdamState s;
    s.m = EncoderParams<T>::zeros(p.M, p.hidden, p.theta_dim);
    s.v = s.m;
    return s;
  }
};

/// One bias-corrected Adam step. Throws TrainingError on non-finite
/// gradients, leaving params and state untouched.
template <typename T>
void adam_update(EncoderParams<T>& params, const EncoderParams<T>& grads,
                 AdamState<T>& state, double lr) {
  const auto g = grads.tensors();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!g[i]->allFinite())
      throw TrainingError(std::string("adam_update: non-finite gradient in ") +
                          EncoderParams<T>::tensor_names()[i]);
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T step = static_cast<T>(lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(state.eps);
  auto p = params.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = b1 * m[i]->array() + (T(1) - b1) * g[i]->array();
    v[i]->array() = b2 * v[i]->array() + (T(1) - b2) * g[i]->array().square();
    p[i]->array() -= step * m[i]->array() / (v[i]->array().sqrt() * inv_sqrt_c2 + eps);
  }
}

// ---------------------------------------------------------------------------
// Training

enum class LossMode { Rayleigh, SupervisedTheta };

std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 1e-3;
  int batch_size = 64;
  double gamma = 0.1;
  double epsilon = 1e-8;
  double split_fraction = 0.7;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::Rayleigh;

  void validate() const;
  LossConfig loss() const { return {gamma, epsilon}; }
};

struct EpochRecord {
  int epoch = 0;
  double train_rayleigh = 0.0;
  double val_rayleigh = 0.0;
  double val_theta = 0.0;
  /// Mean training objective (equals train_rayleigh in Rayleigh mode).
  double train_objective = 0.0;
};

using History = std::vector<EpochRecord>;

/// Columns: epoch, train_rayleigh, val_rayleigh, val_theta.
void write_history_csv(std::ostream& out, const History& history);

struct TrainResult {
  EncoderParams<float> params;
  History history;
};

/// Mini-batch Adam on the training set, validation metrics after every
/// epoch. Bit-deterministic for fixed inputs on one thread.
TrainResult run_training(const Dataset& train, const Dataset& validation,
                         const TrainConfig& cfg, EncoderParams<float> init);

/// Predicted latent vectors, one per sample.
std::vector<Eigen::VectorXd> predict(const EncoderParams<float>& params,
                                     const Dataset& ds);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOptions {
  LossConfig loss;
  /// Both need ds.meta.family and diagonalize H(theta~) once per sample.
  bool spectral_error = false;
  bool fidelity = false;
};

struct SampleEval {
  Eigen::VectorXd theta_true;
  Eigen::VectorXd theta_tilde;
  double theta_loss = 0.0;
  double rayleigh = 0.0;
  double spectral_error = std::numeric_limits<double>::quiet_NaN();
  double fidelity = std::numeric_limits<double>::quiet_NaN();
};

struct EvalMetrics {
  double mean_theta_loss = 0.0;
  double median_theta_loss = 0.0;
  double mean_rayleigh = 0.0;
  double mean_spectral_error = std::numeric_limits<double>::quiet_NaN();
  double mean_fidelity = std::numeric_limits<double>::quiet_NaN();
  std::vector<SampleEval> per_sample;
};

EvalMetrics evaluate(const EncoderParams<float>& params, const Dataset& ds,
                     const EvalOptions& options = {});

/// Metrics of externally supplied predictions (one per sample).
EvalMetrics evaluate_predictions(const std::vector<Eigen::VectorXd>& theta_tilde,
                                 const Dataset& ds, const EvalOptions& options = {});

}  // namespace eigenlearn
