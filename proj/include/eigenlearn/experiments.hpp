#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "eigenlearn/training.hpp"

namespace eigenlearn {

enum class ExperimentKind {
  Train,
  SweepSpectrum,
  SweepM,
  SweepHidden,
  GeneralizationHole,
  LearnabilityGap,
  TwoParam,
  Supervised,
  Diagnostics,
};

std::string to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(const std::string& name);

/// Flat experiment configuration. Every field has a key=value spelling (see
/// settings()/apply_setting), which is what config files and manifests hold.
struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Train;
  std::string preset = "desk";

  int L = 6;
  std::vector<Coupling> free = {Coupling::J1};
  bool symmetry_breaking = true;

  std::vector<ProtocolKind> protocols = {ProtocolKind::Low};
  std::vector<int> counts = {5};      // M values
  std::vector<int> m_indices = {1};   // single-state positions
  std::vector<int> hidden = {128};    // w_H values
  int n_samples = 1000;
  SamplingMode sampling = SamplingMode::Uniform;
  std::vector<Domain> domains = {Domain{{-2.0, 2.0}}};
  Domain holed_domain = {{-2.0, -1.0}, {0.5, 2.0}};
  int eval_points = 81;

  TrainConfig train;
  int repeats = 1;
  std::uint64_t seed = 1;
  int threads = 1;

  // Diagnostics only.
  double diag_J1 = 0.4;
  double diag_Delta = 0.5;
  int dos_bins = 40;

  std::filesystem::path out_dir = "out";

  /// Defaults of a kind under a named preset ("desk" or "paper").
  static ExperimentSpec preset_for(ExperimentKind kind, const std::string& preset);

  std::map<std::string, std::string> settings() const;
  void apply_setting(const std::string& key, const std::string& value);
  void validate() const;
};

/// Reads "key = value" lines ('#' starts a comment).
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// The "config" object of a manifest written by emit_results.
std::map<std::string, std::string> read_manifest_config(const std::filesystem::path& path);

/// One training run: sample, generate, split, init, train, evaluate.
struct RunConfig {
  int L = 6;
  std::vector<Coupling> free = {Coupling::J1};
  bool symmetry_breaking = true;
  SpectralProtocol protocol;
  int hidden = 128;
  int n_samples = 1000;
  SamplingMode sampling = SamplingMode::Uniform;
  std::vector<Domain> domains = {Domain{{-2.0, 2.0}}};
  TrainConfig train;  // train.seed is the run's master seed
  int threads = 1;

  LatentSpec latent_spec() const;
  /// Canonical text; equal keys mean bit-identical runs. Low with M = 1 and
  /// Single with m = 1 select the same state and share a key.
  std::string key() const;
};

struct RunOutcome {
  EncoderParams<float> params;
  History history;
  EvalMetrics validation;  // per-sample entries dropped
  std::size_t near_degenerate_samples = 0;
  double seconds = 0.0;

  double final_train_rayleigh() const { return history.back().train_rayleigh; }
  double final_val_rayleigh() const { return history.back().val_rayleigh; }
  double final_val_theta() const { return history.back().val_theta; }
};

/// Seeds of the stages of a run, derived from its master seed.
struct StageSeeds {
  std::uint64_t sampling, dataset, split, init, train;
  static StageSeeds from(std::uint64_t master);
};

RunOutcome execute_run(const RunConfig& run);

/// Memoizes runs by RunConfig::key(); safe to share between threads.
class RunCache {
 public:
  std::shared_ptr<const RunOutcome> get(const RunConfig& run);
  std::size_t size() const;
  /// Runs actually executed (cache misses).
  std::size_t executed() const;

  struct Access {
    std::string key;
    bool hit = false;
    double seconds = 0.0;  // cost of the original execution
  };
  /// Accesses since the previous call, in completion order.
  std::vector<Access> take_log();

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const RunOutcome>> done_;
  std::size_t executed_ = 0;
  std::vector<Access> log_;
};

struct Table {
  std::string name;  // file stem
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& col) const;
};

std::string format_number(double v);

/// RFC 4180 CSV with '\n' line ends.
void write_csv(std::ostream& out, const Table& table);
std::string to_csv(const Table& table);

struct ExperimentResult {
  std::vector<Table> tables;
  std::map<std::string, std::string> summary;
  std::vector<std::pair<std::string, EncoderParams<float>>> checkpoints;
  std::size_t near_degenerate_samples = 0;
};

/// Runs the experiment; `cache` may be null.
ExperimentResult run_experiment(const ExperimentSpec& spec, RunCache* cache = nullptr);

/// Writes <stem>.csv per table, <stem>.enc per checkpoint and manifest.json
/// into spec.out_dir. Returns the written paths.
std::vector<std::filesystem::path> emit_results(const ExperimentSpec& spec,
                                                const ExperimentResult& result,
                                                double wall_seconds);

// Individual experiments.
ExperimentResult sweep_spectrum(const ExperimentSpec& spec, RunCache* cache);
ExperimentResult sweep_num_states(const ExperimentSpec& spec, RunCache* cache);
ExperimentResult sweep_hidden(const ExperimentSpec& spec, RunCache* cache);
ExperimentResult generalization_hole(const ExperimentSpec& spec, RunCache* cache);
ExperimentResult learnability_gap(const ExperimentSpec& spec, RunCache* cache);
ExperimentResult two_parameter_run(const ExperimentSpec& spec, RunCache* cache);
ExperimentResult supervised_run(const ExperimentSpec& spec, RunCache* cache);
ExperimentResult single_run(const ExperimentSpec& spec, RunCache* cache);
ExperimentResult diagnostics_experiment(const ExperimentSpec& spec);

/// Spearman rank correlation with average ranks for ties; NaN when either
/// side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

double median_of(std::vector<double> v);

/// Median of the first and of the last `fraction` of the values.
std::pair<double, double> head_tail_medians(const std::vector<double>& v,
                                            double fraction = 0.1);

/// Loss gap of one seed: value at the smallest capacity minus the minimum.
double loss_gap(const std::vector<double>& losses_by_capacity);

std::string version_tag();

}  // namespace eigenlearn
