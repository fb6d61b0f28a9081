#include "eigenlearn/training.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

#include "eigenlearn/binary_io.hpp"
#include "eigenlearn/diagnostics.hpp"
#include "eigenlearn/eigensolver.hpp"
#include "eigenlearn/random.hpp"

namespace eigenlearn {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr Eigen::Index kEvalChunk = 16;

double domain_length(const Domain& d) {
  double total = 0.0;
  for (const Interval& iv : d) total += iv.length();
  return total;
}

// Position t in [0, total] along the concatenated intervals.
double domain_point(const Domain& d, double t) {
  double offset = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double len = d[k].length();
    if (t <= offset + len || k + 1 == d.size())
      return std::min(d[k].lo + (t - offset), d[k].hi);
    offset += len;
  }
  return d.back().hi;
}

void validate_domain(const Domain& d) {
  if (d.empty()) throw std::invalid_argument("sample_parameters: empty range");
  for (const Interval& iv : d)
    if (!(iv.lo < iv.hi))
      throw std::invalid_argument("sample_parameters: empty interval [" +
                                  std::to_string(iv.lo) + ", " +
                                  std::to_string(iv.hi) + "]");
}

std::vector<double> axis_grid(const Domain& d, std::size_t k) {
  const double total = domain_length(d);
  std::vector<double> pts(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double t = k == 1 ? 0.0
                            : total * static_cast<double>(i) /
                                  static_cast<double>(k - 1);
    pts[i] = domain_point(d, t);
  }
  return pts;
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.meta = ds.meta;
  out.samples.reserve(idx.size());
  for (std::size_t i : idx) out.samples.push_back(ds.samples[i]);
  return out;
}

// Stacks the D x M inputs of all samples into one (N*D) x M row-major block.
Tensor<float> stack_points(const Dataset& ds) {
  const Eigen::Index D = static_cast<Eigen::Index>(ds.meta.dim);
  const Eigen::Index M = ds.width();
  Tensor<float> all(static_cast<Eigen::Index>(ds.size()) * D, M);
  for (std::size_t s = 0; s < ds.size(); ++s)
    all.middleRows(static_cast<Eigen::Index>(s) * D, D) = ds.samples[s].psi;
  return all;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(SamplingMode mode) {
  return mode == SamplingMode::Grid ? "grid" : "uniform";
}

SamplingMode sampling_mode_from_string(const std::string& name) {
  if (name == "grid") return SamplingMode::Grid;
  if (name == "uniform") return SamplingMode::Uniform;
  throw std::invalid_argument("unknown sampling mode '" + name + "'");
}

Domain parse_domain(const std::string& text) {
  Domain d;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':', 1);
    if (colon == std::string::npos)
      throw std::invalid_argument("domain '" + text + "': expected lo:hi");
    Interval iv{std::stod(part.substr(0, colon)), std::stod(part.substr(colon + 1))};
    d.push_back(iv);
  }
  validate_domain(d);
  return d;
}

std::string format_domain(const Domain& domain) {
  std::string out;
  char buf[64];
  for (std::size_t k = 0; k < domain.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%s%.10g:%.10g", k ? "," : "", domain[k].lo,
                  domain[k].hi);
    out += buf;
  }
  return out;
}

std::vector<Eigen::VectorXd> sample_parameters(const std::vector<Domain>& domains,
                                               std::size_t n, SamplingMode mode,
                                               std::uint64_t seed) {
  if (domains.empty()) throw std::invalid_argument("sample_parameters: no axes");
  for (const Domain& d : domains) validate_domain(d);
  const auto dims = static_cast<Eigen::Index>(domains.size());
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);

  if (mode == SamplingMode::Uniform) {
    Rng rng(seed);
    for (std::size_t s = 0; s < n; ++s) {
      Eigen::VectorXd theta(dims);
      for (Eigen::Index l = 0; l < dims; ++l) {
        const Domain& d = domains[static_cast<std::size_t>(l)];
        theta(l) = domain_point(d, rng.uniform() * domain_length(d));
      }
      out.push_back(std::move(theta));
    }
    return out;
  }

  // Smallest k with k^dims >= n.
  std::size_t k = 1;
  auto capacity = [&](std::size_t base) {
    std::size_t c = 1;
    for (Eigen::Index l = 0; l < dims; ++l) c *= base;
    return c;
  };
  while (capacity(k) < n) ++k;
  std::vector<std::vector<double>> axes;
  for (const Domain& d : domains) axes.push_back(axis_grid(d, k));
  for (std::size_t s = 0; s < n; ++s) {
    Eigen::VectorXd theta(dims);
    std::size_t rem = s;
    for (Eigen::Index l = dims - 1; l >= 0; --l) {
      theta(l) = axes[static_cast<std::size_t>(l)][rem % k];
      rem /= k;
    }
    out.push_back(std::move(theta));
  }
  return out;
}

// ---------------------------------------------------------------------------

LatentSpec effective_family(const LatentSpec& spec, bool symmetry_breaking) {
  LatentSpec out = spec;
  if (symmetry_breaking) out.fixed_base = apply_symmetry_breaking(spec.fixed_base);
  return out;
}

Dataset generate_dataset(const std::vector<Eigen::VectorXd>& thetas,
                         const LatentSpec& spec, const SpectralProtocol& protocol,
                         std::uint64_t seed, const GenerateOptions& options) {
  spec.validate();
  const LatentSpec family = effective_family(spec, options.symmetry_breaking);
  const DecoderBasis basis = basis_operators(family);
  const std::size_t dim = family.fixed_base.dim();
  protocol.validate(dim);

  Dataset ds;
  ds.meta.L = family.fixed_base.L;
  ds.meta.dim = dim;
  ds.meta.protocol = protocol;
  ds.meta.theta_dim = family.dim();
  ds.meta.seed = seed;
  ds.meta.family = family;
  ds.samples.resize(thetas.size());
  std::vector<char> near_degenerate(thetas.size(), 0);

  parallel_for(thetas.size(), options.threads, [&](std::size_t s) {
    const Eigen::VectorXd& theta = thetas[s];
    try {
      const HamiltonianMatrix H = build_hamiltonian(family.with_latent(as_span(theta)));
      const Spectrum spectrum = diagonalize(H);
      const int m_av =
          protocol.kind == ProtocolKind::Mid ? mean_energy_index(spectrum, H) : 1;
      const StateBlock block =
          build_state_block(spectrum, select_indices(protocol, spectrum, m_av), theta);
      Sample& out = ds.samples[s];
      out.theta_true = theta;
      out.indices = block.indices;
      out.energies = block.energies;
      out.psi = block.psi.cast<float>();
      out.projection = project_basis(block, basis);
      near_degenerate[s] = near_degenerate_pairs(spectrum).empty() ? 0 : 1;
    } catch (const std::exception& e) {
      throw std::runtime_error("generate_dataset: sample " + std::to_string(s) +
                               ": " + e.what());
    }
  });
  ds.meta.near_degenerate_samples = static_cast<std::size_t>(
      std::count(near_degenerate.begin(), near_degenerate.end(), 1));
  return ds;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  using binary::write_le;
  const auto D = static_cast<std::int64_t>(ds.meta.dim);
  const std::int64_t M = ds.width();
  const std::int64_t theta_dim = ds.meta.theta_dim;
  binary::write_magic(out, "EIGD");
  write_le<std::uint32_t>(out, kDatasetVersion);
  write_le<std::int64_t>(out, ds.meta.L);
  write_le<std::int64_t>(out, D);
  write_le<std::int64_t>(out, M);
  write_le<std::int64_t>(out, theta_dim);
  write_le<std::int64_t>(out, static_cast<std::int64_t>(ds.size()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.meta.protocol.kind));
  for (const Sample& s : ds.samples) {
    if (s.theta_true.size() != theta_dim || s.psi.rows() != D || s.psi.cols() != M)
      throw std::invalid_argument("write_dataset: inconsistent sample shapes");
    for (double v : s.theta_true) write_le<double>(out, v);
    for (int m : s.indices) write_le<std::int64_t>(out, m);
    for (double e : s.energies) write_le<double>(out, e);
    for (Eigen::Index i = 0; i < s.psi.size(); ++i)  // column-major
      write_le<float>(out, s.psi.data()[i]);
    for (const Eigen::MatrixXd& G : s.projection.G)
      for (Eigen::Index r = 0; r < M; ++r)
        for (Eigen::Index c = 0; c < M; ++c) write_le<double>(out, G(r, c));
    for (Eigen::Index r = 0; r < M; ++r)
      for (Eigen::Index c = 0; c < M; ++c)
        write_le<double>(out, s.projection.G_const(r, c));
  }
  if (!out) throw std::runtime_error("write_dataset: write failed");
}

Dataset read_dataset(std::istream& in) {
  using binary::read_le;
  binary::expect_magic(in, "EIGD");
  const auto version = read_le<std::uint32_t>(in);
  if (version != kDatasetVersion)
    throw std::runtime_error("read_dataset: unsupported version " +
                             std::to_string(version));
  const auto L = read_le<std::int64_t>(in);
  const auto D = read_le<std::int64_t>(in);
  const auto M = read_le<std::int64_t>(in);
  const auto theta_dim = read_le<std::int64_t>(in);
  const auto n = read_le<std::int64_t>(in);
  const auto tag = read_le<std::uint32_t>(in);
  if (L < 1 || L > 20 || D != (std::int64_t{1} << L) || M < 1 || M > D ||
      theta_dim < 1 || theta_dim > 2 || n < 0 || tag > 2)
    throw std::runtime_error("read_dataset: corrupt header");

  Dataset ds;
  ds.meta.L = static_cast<int>(L);
  ds.meta.dim = static_cast<std::size_t>(D);
  ds.meta.theta_dim = static_cast<int>(theta_dim);
  ds.meta.protocol.kind = static_cast<ProtocolKind>(tag);
  ds.meta.protocol.count = static_cast<int>(M);
  ds.samples.resize(static_cast<std::size_t>(n));
  for (Sample& s : ds.samples) {
    s.theta_true.resize(theta_dim);
    for (double& v : s.theta_true) v = read_le<double>(in);
    s.indices.resize(static_cast<std::size_t>(M));
    for (int& m : s.indices) m = static_cast<int>(read_le<std::int64_t>(in));
    s.energies.resize(M);
    for (double& e : s.energies) e = read_le<double>(in);
    s.psi.resize(D, M);
    for (Eigen::Index i = 0; i < s.psi.size(); ++i) s.psi.data()[i] = read_le<float>(in);
    s.projection.G.assign(static_cast<std::size_t>(theta_dim), Eigen::MatrixXd(M, M));
    for (Eigen::MatrixXd& G : s.projection.G)
      for (Eigen::Index r = 0; r < M; ++r)
        for (Eigen::Index c = 0; c < M; ++c) G(r, c) = read_le<double>(in);
    s.projection.G_const.resize(M, M);
    for (Eigen::Index r = 0; r < M; ++r)
      for (Eigen::Index c = 0; c < M; ++c) s.projection.G_const(r, c) = read_le<double>(in);
    s.projection.energies = s.energies;
  }
  if (ds.meta.protocol.kind == ProtocolKind::Single && !ds.samples.empty())
    ds.meta.protocol.m_index = ds.samples.front().indices.front();
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double fraction,
                                          std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_dataset: fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  const std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> val(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {subset(ds, train), subset(ds, val)};
}

// ---------------------------------------------------------------------------

std::string to_string(LossMode mode) {
  return mode == LossMode::Rayleigh ? "rayleigh" : "supervised_theta";
}

LossMode loss_mode_from_string(const std::string& name) {
  if (name == "rayleigh") return LossMode::Rayleigh;
  if (name == "supervised_theta" || name == "supervised") return LossMode::SupervisedTheta;
  throw std::invalid_argument("unknown loss mode '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (!(gamma >= 0.0) || !(epsilon >= 0.0))
    throw std::invalid_argument("TrainConfig: gamma and epsilon must be >= 0");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw std::invalid_argument("TrainConfig: split_fraction must lie in (0, 1)");
}

void write_history_csv(std::ostream& out, const History& history) {
  out << "epoch,train_rayleigh,val_rayleigh,val_theta\n";
  char line[128];
  for (const EpochRecord& r : history) {
    std::snprintf(line, sizeof line, "%d,%.10g,%.10g,%.10g\n", r.epoch,
                  r.train_rayleigh, r.val_rayleigh, r.val_theta);
    out << line;
  }
}

std::vector<Eigen::VectorXd> predict(const EncoderParams<float>& params,
                                     const Dataset& ds) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(ds.size());
  if (ds.size() == 0) return out;
  const Eigen::Index D = static_cast<Eigen::Index>(ds.meta.dim);
  const auto n = static_cast<Eigen::Index>(ds.size());
  Tensor<float> points(std::min(kEvalChunk, n) * D, ds.width());
  ForwardCache<float> cache;
  for (Eigen::Index start = 0; start < n; start += kEvalChunk) {
    const Eigen::Index count = std::min(kEvalChunk, n - start);
    for (Eigen::Index b = 0; b < count; ++b)
      points.middleRows(b * D, D) = ds.samples[static_cast<std::size_t>(start + b)].psi;
    const Tensor<float>& theta =
        forward_batch<float>(params, points.topRows(count * D), D, cache);
    for (Eigen::Index b = 0; b < count; ++b)
      out.push_back(theta.row(b).transpose().cast<double>());
  }
  return out;
}

TrainResult run_training(const Dataset& train, const Dataset& validation,
                         const TrainConfig& cfg, EncoderParams<float> init) {
  cfg.validate();
  if (train.size() == 0) throw std::invalid_argument("run_training: empty training set");
  if (init.M != train.width() || init.theta_dim != train.meta.theta_dim)
    throw std::invalid_argument("run_training: encoder shape does not match dataset");

  const Eigen::Index D = static_cast<Eigen::Index>(train.meta.dim);
  const Eigen::Index M = train.width();
  const Eigen::Index theta_dim = train.meta.theta_dim;
  const LossConfig loss_cfg = cfg.loss();
  const bool supervised = cfg.loss_mode == LossMode::SupervisedTheta;

  TrainResult result{std::move(init), {}};
  EncoderParams<float>& params = result.params;
  AdamState<float> adam = AdamState<float>::for_params(params);
  EncoderParams<float> grads;
  ForwardCache<float> cache;

  const Tensor<float> all_points = stack_points(train);
  const std::size_t n = train.size();
  const auto batch_cap = static_cast<std::size_t>(cfg.batch_size);
  Tensor<float> batch_points(static_cast<Eigen::Index>(std::min(batch_cap, n)) * D, M);
  Tensor<float> d_theta;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle(derive_seed(cfg.seed, "batch"));

  result.history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double sum_rayleigh = 0.0;
    double sum_objective = 0.0;
    for (std::size_t start = 0; start < n; start += batch_cap) {
      const std::size_t count = std::min(batch_cap, n - start);
      const auto B = static_cast<Eigen::Index>(count);
      for (Eigen::Index b = 0; b < B; ++b)
        batch_points.middleRows(b * D, D) = all_points.middleRows(
            static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(b)]) * D, D);
      const Tensor<float>& theta =
          forward_batch<float>(params, batch_points.topRows(B * D), D, cache);

      d_theta.resize(B, theta_dim);
      for (Eigen::Index b = 0; b < B; ++b) {
        const Sample& s = train.samples[order[start + static_cast<std::size_t>(b)]];
        const Eigen::VectorXd pred = theta.row(b).transpose().cast<double>();
        const LossValue lv = rayleigh_loss(s.projection, as_span(pred), loss_cfg);
        sum_rayleigh += lv.value;
        Eigen::VectorXd grad = lv.gradient;
        double objective = lv.value;
        if (supervised) {
          objective = theta_loss(as_span(pred), as_span(s.theta_true));
          grad = 2.0 * (pred - s.theta_true) / static_cast<double>(theta_dim);
        }
        if (!std::isfinite(objective))
          throw TrainingError("run_training: non-finite loss at epoch " +
                              std::to_string(epoch));
        sum_objective += objective;
        d_theta.row(b) = (grad / static_cast<double>(B)).transpose().cast<float>();
      }
      backward<float>(params, cache, d_theta, grads);
      try {
        adam_update(params, grads, adam, cfg.learning_rate);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_rayleigh = sum_rayleigh / static_cast<double>(n);
    rec.train_objective = sum_objective / static_cast<double>(n);
    if (validation.size() > 0) {
      EvalOptions opts;
      opts.loss = loss_cfg;
      const EvalMetrics m = evaluate(params, validation, opts);
      rec.val_rayleigh = m.mean_rayleigh;
      rec.val_theta = m.mean_theta_loss;
    }
    result.history.push_back(rec);
  }
  return result;
}

// ---------------------------------------------------------------------------

EvalMetrics evaluate_predictions(const std::vector<Eigen::VectorXd>& theta_tilde,
                                 const Dataset& ds, const EvalOptions& options) {
  if (theta_tilde.size() != ds.size())
    throw std::invalid_argument("evaluate: one prediction per sample required");
  const bool rebuild = options.spectral_error || options.fidelity;
  if (rebuild && ds.meta.family.free.empty())
    throw std::invalid_argument("evaluate: dataset has no family to rebuild H(theta~)");

  EvalMetrics m;
  m.per_sample.resize(ds.size());
  double sum_spectral = 0.0;
  double sum_fidelity = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Sample& s = ds.samples[i];
    SampleEval& e = m.per_sample[i];
    e.theta_true = s.theta_true;
    e.theta_tilde = theta_tilde[i];
    e.theta_loss = theta_loss(as_span(e.theta_tilde), as_span(s.theta_true));
    e.rayleigh = rayleigh_loss(s.projection, as_span(e.theta_tilde), options.loss).value;
    if (rebuild) {
      const Spectrum rebuilt =
          diagonalize(build_hamiltonian(ds.meta.family.with_latent(as_span(e.theta_tilde))));
      if (options.spectral_error) {
        const Spectrum truth =
            diagonalize(build_hamiltonian(ds.meta.family.with_latent(as_span(s.theta_true))));
        e.spectral_error = spectral_error(truth.energies, rebuilt.energies);
        sum_spectral += e.spectral_error;
      }
      if (options.fidelity) {
        double f = 0.0;
        for (std::size_t k = 0; k < s.indices.size(); ++k) {
          Eigen::VectorXd input = s.psi.col(static_cast<Eigen::Index>(k)).cast<double>();
          input.normalize();
          f += fidelity(input, rebuilt.vectors.col(s.indices[k] - 1));
        }
        e.fidelity = f / static_cast<double>(s.indices.size());
        sum_fidelity += e.fidelity;
      }
    }
  }

  const double n = static_cast<double>(ds.size());
  std::vector<double> losses;
  losses.reserve(ds.size());
  double sum_theta = 0.0, sum_rayleigh = 0.0;
  for (const SampleEval& e : m.per_sample) {
    losses.push_back(e.theta_loss);
    sum_theta += e.theta_loss;
    sum_rayleigh += e.rayleigh;
  }
  m.mean_theta_loss = sum_theta / n;
  m.median_theta_loss = median(std::move(losses));
  m.mean_rayleigh = sum_rayleigh / n;
  if (options.spectral_error) m.mean_spectral_error = sum_spectral / n;
  if (options.fidelity) m.mean_fidelity = sum_fidelity / n;
  return m;
}

EvalMetrics evaluate(const EncoderParams<float>& params, const Dataset& ds,
                     const EvalOptions& options) {
  return evaluate_predictions(predict(params, ds), ds, options);
}

}  // namespace eigenlearn
