#include "eigenlearn/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>
#include <utility>

#include <json.hpp>

#include "eigenlearn/diagnostics.hpp"
#include "eigenlearn/eigensolver.hpp"
#include "eigenlearn/random.hpp"

namespace eigenlearn {

namespace {

using Json = nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(trim(part));
  return out;
}

template <typename T, typename Fn>
std::string join(const std::vector<T>& v, char sep, Fn&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += fmt(v[i]);
  }
  return out;
}

// Shortest text that reads back to the same double.
std::string exact(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != value.size() || value.empty())
    throw std::invalid_argument("setting '" + key + "': not a number: '" + value + "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& value) {
  long long v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw std::invalid_argument("setting '" + key + "': not an integer: '" + value + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw std::invalid_argument("setting '" + key + "': not an unsigned integer: '" +
                                value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("setting '" + key + "': not a boolean: '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  for (const std::string& part : split(value, ','))
    out.push_back(static_cast<int>(parse_int(key, part)));
  return out;
}

std::string int_list(const std::vector<int>& v) {
  return join(v, ',', [](int x) { return std::to_string(x); });
}

std::string domain_text(const Domain& d) {
  return join(d, ',', [](const Interval& iv) { return exact(iv.lo) + ":" + exact(iv.hi); });
}

std::string domains_text(const std::vector<Domain>& ds) {
  return join(ds, ';', domain_text);
}

std::uint64_t repeat_seed(std::uint64_t master, int repeat) {
  return derive_seed(master, "repeat/" + std::to_string(repeat));
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(
      static_cast<std::size_t>(std::max(threads, 1)), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Runs are independent; each one is single-threaded inside when several
// execute at once.
std::vector<std::shared_ptr<const RunOutcome>> run_all(std::vector<RunConfig> runs,
                                                       int threads, RunCache* cache) {
  if (threads > 1 && runs.size() > 1)
    for (RunConfig& r : runs) r.threads = 1;
  std::vector<std::shared_ptr<const RunOutcome>> out(runs.size());
  parallel_for(runs.size(), threads, [&](std::size_t i) {
    out[i] = cache ? cache->get(runs[i])
                   : std::make_shared<const RunOutcome>(execute_run(runs[i]));
  });
  return out;
}

RunConfig base_run(const ExperimentSpec& spec) {
  RunConfig r;
  r.L = spec.L;
  r.free = spec.free;
  r.symmetry_breaking = spec.symmetry_breaking;
  r.n_samples = spec.n_samples;
  r.sampling = spec.sampling;
  r.domains = spec.domains;
  r.train = spec.train;
  r.threads = spec.threads;
  r.hidden = spec.hidden.front();
  return r;
}

Table history_table(const std::string& name, const History& h) {
  Table t{name, {"epoch", "train_rayleigh", "val_rayleigh", "val_theta"}, {}};
  for (const EpochRecord& r : h)
    t.add({std::to_string(r.epoch), format_number(r.train_rayleigh),
           format_number(r.val_rayleigh), format_number(r.val_theta)});
  return t;
}

std::size_t near_degenerate_total(const std::vector<std::shared_ptr<const RunOutcome>>& runs) {
  std::size_t n = 0;
  for (const auto& r : runs) n += r->near_degenerate_samples;
  return n;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

template <typename T>
bool sorted_unique(const std::vector<T>& v) {
  return !v.empty() && std::adjacent_find(v.begin(), v.end(), [](const T& a, const T& b) {
                         return !(a < b);
                       }) == v.end();
}

}  // namespace

// ---------------------------------------------------------------------------

std::string version_tag() { return "eigenlearn-0.1.0"; }

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Train: return "train";
    case ExperimentKind::SweepSpectrum: return "sweep-spectrum";
    case ExperimentKind::SweepM: return "sweep-m";
    case ExperimentKind::SweepHidden: return "sweep-hidden";
    case ExperimentKind::GeneralizationHole: return "generalize";
    case ExperimentKind::LearnabilityGap: return "gap";
    case ExperimentKind::TwoParam: return "two-param";
    case ExperimentKind::Supervised: return "supervised";
    case ExperimentKind::Diagnostics: return "diagnostics";
  }
  return "unknown";
}

ExperimentKind experiment_from_string(const std::string& name) {
  for (ExperimentKind k :
       {ExperimentKind::Train, ExperimentKind::SweepSpectrum, ExperimentKind::SweepM,
        ExperimentKind::SweepHidden, ExperimentKind::GeneralizationHole,
        ExperimentKind::LearnabilityGap, ExperimentKind::TwoParam,
        ExperimentKind::Supervised, ExperimentKind::Diagnostics})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

ExperimentSpec ExperimentSpec::preset_for(ExperimentKind kind, const std::string& preset) {
  if (preset != "desk" && preset != "paper")
    throw std::invalid_argument("unknown preset '" + preset + "' (desk, paper)");
  const bool paper = preset == "paper";
  ExperimentSpec s;
  s.kind = kind;
  s.preset = preset;
  s.train.epochs = paper ? 2500 : 500;
  s.n_samples = paper ? 10000 : 1000;
  switch (kind) {
    case ExperimentKind::Train:
      break;
    case ExperimentKind::SweepSpectrum:
      s.protocols = {ProtocolKind::Single};
      if (paper) {
        s.m_indices.resize(32);
        std::iota(s.m_indices.begin(), s.m_indices.end(), 1);
      } else {
        s.m_indices = {1, 4, 8, 16, 24, 32};
      }
      s.hidden = {16, 128};
      break;
    case ExperimentKind::SweepM:
      s.protocols = {ProtocolKind::Low, ProtocolKind::Mid};
      s.counts = {1, 2, 5, 10, 32};
      break;
    case ExperimentKind::SweepHidden:
      s.protocols = {ProtocolKind::Low, ProtocolKind::Mid};
      s.hidden = {8, 32, 128};
      break;
    case ExperimentKind::GeneralizationHole:
      break;
    case ExperimentKind::LearnabilityGap:
      s.protocols = {ProtocolKind::Single};
      s.m_indices = {1, 32};
      s.hidden = {8, 32, 128};
      s.repeats = 3;
      break;
    case ExperimentKind::TwoParam:
      s.free = {Coupling::J1, Coupling::J2};
      s.domains = {Domain{{-2.0, 2.0}}, Domain{{-2.0, 2.0}}};
      s.counts = {2, 10};
      if (!paper) s.train.epochs = 200;
      break;
    case ExperimentKind::Supervised:
      s.train.loss_mode = LossMode::SupervisedTheta;
      break;
    case ExperimentKind::Diagnostics:
      s.L = paper ? 12 : 10;
      break;
  }
  return s;
}

std::map<std::string, std::string> ExperimentSpec::settings() const {
  std::map<std::string, std::string> m;
  m["kind"] = to_string(kind);
  m["preset"] = preset;
  m["l"] = std::to_string(L);
  m["free"] = join(free, ',', [](Coupling c) { return to_string(c); });
  m["symmetry_breaking"] = symmetry_breaking ? "true" : "false";
  m["protocol"] = join(protocols, ',', [](ProtocolKind k) { return to_string(k); });
  m["m"] = int_list(counts);
  m["m_index"] = int_list(m_indices);
  m["hidden"] = int_list(hidden);
  m["samples"] = std::to_string(n_samples);
  m["sampling"] = to_string(sampling);
  m["domain"] = domains_text(domains);
  m["holed_domain"] = domain_text(holed_domain);
  m["eval_points"] = std::to_string(eval_points);
  m["epochs"] = std::to_string(train.epochs);
  m["lr"] = exact(train.learning_rate);
  m["batch"] = std::to_string(train.batch_size);
  m["gamma"] = exact(train.gamma);
  m["epsilon"] = exact(train.epsilon);
  m["split"] = exact(train.split_fraction);
  m["loss"] = to_string(train.loss_mode);
  m["repeats"] = std::to_string(repeats);
  m["seed"] = std::to_string(seed);
  m["threads"] = std::to_string(threads);
  m["diag_j1"] = exact(diag_J1);
  m["diag_delta"] = exact(diag_Delta);
  m["dos_bins"] = std::to_string(dos_bins);
  return m;
}

void ExperimentSpec::apply_setting(const std::string& key_in, const std::string& value_in) {
  std::string key = key_in;
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string value = trim(value_in);
  if (key == "kind") kind = experiment_from_string(value);
  else if (key == "preset") preset = value;
  else if (key == "l") L = static_cast<int>(parse_int(key, value));
  else if (key == "free") {
    free.clear();
    for (const std::string& p : split(value, ',')) free.push_back(coupling_from_string(p));
  } else if (key == "symmetry_breaking") symmetry_breaking = parse_bool(key, value);
  else if (key == "protocol") {
    protocols.clear();
    for (const std::string& p : split(value, ',')) protocols.push_back(protocol_from_string(p));
  } else if (key == "m") counts = parse_int_list(key, value);
  else if (key == "m_index") m_indices = parse_int_list(key, value);
  else if (key == "hidden") hidden = parse_int_list(key, value);
  else if (key == "samples") n_samples = static_cast<int>(parse_int(key, value));
  else if (key == "sampling") sampling = sampling_mode_from_string(value);
  else if (key == "domain") {
    domains.clear();
    for (const std::string& p : split(value, ';')) domains.push_back(parse_domain(p));
  } else if (key == "holed_domain") holed_domain = parse_domain(value);
  else if (key == "eval_points") eval_points = static_cast<int>(parse_int(key, value));
  else if (key == "epochs") train.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "lr") train.learning_rate = parse_double(key, value);
  else if (key == "batch") train.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "gamma") train.gamma = parse_double(key, value);
  else if (key == "epsilon") train.epsilon = parse_double(key, value);
  else if (key == "split") train.split_fraction = parse_double(key, value);
  else if (key == "loss") train.loss_mode = loss_mode_from_string(value);
  else if (key == "repeats") repeats = static_cast<int>(parse_int(key, value));
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "threads") threads = static_cast<int>(parse_int(key, value));
  else if (key == "diag_j1") diag_J1 = parse_double(key, value);
  else if (key == "diag_delta") diag_Delta = parse_double(key, value);
  else if (key == "dos_bins") dos_bins = static_cast<int>(parse_int(key, value));
  else if (key == "out") out_dir = value;
  else throw std::invalid_argument("unknown setting '" + key_in + "'");
}

void ExperimentSpec::validate() const {
  require(L >= 3 && L <= 14, "l must lie in [3, 14]");
  require(!free.empty() && free.size() <= 2, "free must name one or two couplings");
  require(domains.size() == free.size(), "one domain per free coupling required");
  require(sorted_unique(counts), "m values must be nonempty, ascending, unique");
  require(sorted_unique(m_indices), "m_index values must be nonempty, ascending, unique");
  require(sorted_unique(hidden), "hidden values must be nonempty, ascending, unique");
  require(sorted_unique(protocols), "protocols must be nonempty and unique (low, mid, single)");
  require(hidden.front() >= 1, "hidden must be >= 1");
  require(n_samples >= 2, "samples must be >= 2");
  require(repeats >= 1, "repeats must be >= 1");
  require(threads >= 1, "threads must be >= 1");
  require(eval_points >= 2, "eval_points must be >= 2");
  require(dos_bins >= 1, "dos_bins must be >= 1");
  train.validate();
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected key = value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_manifest_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  const Json j = Json::parse(in);
  if (!j.contains("config") || !j["config"].is_object())
    throw std::runtime_error(path.string() + ": manifest has no config object");
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j["config"].items()) out[k] = v.get<std::string>();
  return out;
}

// ---------------------------------------------------------------------------

LatentSpec RunConfig::latent_spec() const {
  LatentSpec s;
  s.free = free;
  s.fixed_base = SpinChainParams::family_defaults(L);
  return s;
}

std::string RunConfig::key() const {
  SpectralProtocol p = protocol;
  if (p.kind == ProtocolKind::Low && p.count == 1) p = SpectralProtocol::single(1);
  std::string proto = to_string(p.kind) + ":" +
                      std::to_string(p.kind == ProtocolKind::Single ? p.m_index : p.count);
  std::ostringstream k;
  k << "L=" << L << ";free=" << join(free, ',', [](Coupling c) { return to_string(c); })
    << ";sb=" << symmetry_breaking << ";protocol=" << proto << ";hidden=" << hidden
    << ";samples=" << n_samples << ";sampling=" << to_string(sampling)
    << ";domain=" << domains_text(domains) << ";epochs=" << train.epochs
    << ";lr=" << exact(train.learning_rate) << ";batch=" << train.batch_size
    << ";gamma=" << exact(train.gamma) << ";epsilon=" << exact(train.epsilon)
    << ";split=" << exact(train.split_fraction) << ";loss=" << to_string(train.loss_mode)
    << ";seed=" << train.seed;
  return k.str();
}

StageSeeds StageSeeds::from(std::uint64_t master) {
  return {derive_seed(master, "sampling"), derive_seed(master, "dataset"),
          derive_seed(master, "split"), derive_seed(master, "init"),
          derive_seed(master, "train")};
}

RunOutcome execute_run(const RunConfig& run) {
  const auto start = std::chrono::steady_clock::now();
  if (run.domains.size() != run.free.size())
    throw std::invalid_argument("execute_run: one domain per free coupling required");
  const StageSeeds seeds = StageSeeds::from(run.train.seed);
  const auto thetas = sample_parameters(run.domains, static_cast<std::size_t>(run.n_samples),
                                        run.sampling, seeds.sampling);
  GenerateOptions gen;
  gen.symmetry_breaking = run.symmetry_breaking;
  gen.threads = run.threads;
  const Dataset ds = generate_dataset(thetas, run.latent_spec(), run.protocol, seeds.dataset, gen);
  const auto [train, validation] = split_dataset(ds, run.train.split_fraction, seeds.split);

  TrainConfig cfg = run.train;
  cfg.seed = seeds.train;
  TrainResult tr = run_training(
      train, validation, cfg,
      init_params<float>(ds.width(), run.hidden, ds.meta.theta_dim, seeds.init));

  RunOutcome out;
  out.validation = evaluate(tr.params, validation, EvalOptions{cfg.loss()});
  out.validation.per_sample.clear();
  out.params = std::move(tr.params);
  out.history = std::move(tr.history);
  out.near_degenerate_samples = ds.meta.near_degenerate_samples;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::shared_ptr<const RunOutcome> RunCache::get(const RunConfig& run) {
  const std::string key = run.key();
  {
    std::lock_guard lock(mutex_);
    auto it = done_.find(key);
    if (it != done_.end()) {
      log_.push_back({key, true, it->second->seconds});
      return it->second;
    }
  }
  auto outcome = std::make_shared<const RunOutcome>(execute_run(run));
  std::lock_guard lock(mutex_);
  auto [it, inserted] = done_.emplace(key, outcome);
  if (inserted) ++executed_;
  log_.push_back({key, !inserted, it->second->seconds});
  return it->second;
}

std::vector<RunCache::Access> RunCache::take_log() {
  std::lock_guard lock(mutex_);
  return std::exchange(log_, {});
}

std::size_t RunCache::size() const {
  std::lock_guard lock(mutex_);
  return done_.size();
}

std::size_t RunCache::executed() const {
  std::lock_guard lock(mutex_);
  return executed_;
}

// ---------------------------------------------------------------------------

void Table::add(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw std::invalid_argument("table " + name + ": row width mismatch");
  rows.push_back(std::move(row));
}

std::size_t Table::column(const std::string& col) const {
  auto it = std::find(header.begin(), header.end(), col);
  if (it == header.end()) throw std::out_of_range("table " + name + ": no column " + col);
  return static_cast<std::size_t>(it - header.begin());
}

double Table::number(std::size_t row, const std::string& col) const {
  return std::stod(rows.at(row).at(column(col)));
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_csv(std::ostream& out, const Table& table) {
  auto field = [](const std::string& f) {
    if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
    std::string q = "\"";
    for (char c : f) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << field(r[i]);
    out << '\n';
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
}

std::string to_csv(const Table& table) {
  std::ostringstream s;
  write_csv(s, table);
  return s.str();
}

std::vector<std::filesystem::path> emit_results(const ExperimentSpec& spec,
                                                const ExperimentResult& result,
                                                double wall_seconds) {
  std::filesystem::create_directories(spec.out_dir);
  std::vector<std::filesystem::path> written;
  Json outputs = Json::array();
  for (const Table& t : result.tables) {
    const auto path = spec.out_dir / (t.name + ".csv");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    write_csv(f, t);
    written.push_back(path);
    outputs.push_back(path.filename().string());
  }

  for (const auto& [stem, params] : result.checkpoints) {
    const auto path = spec.out_dir / (stem + ".enc");
    save_checkpoint(path.string(), params);
    written.push_back(path);
    outputs.push_back(path.filename().string());
  }

  Json m;
  m["version"] = version_tag();
  m["kind"] = to_string(spec.kind);
  m["preset"] = spec.preset;
  m["config"] = spec.settings();
  m["seeds"] = {{"master", spec.seed},
                {"repeat_seeds", Json::array()},
                {"stages", {"sampling", "dataset", "split", "init", "train"}}};
  for (int r = 0; r < spec.repeats; ++r)
    m["seeds"]["repeat_seeds"].push_back(repeat_seed(spec.seed, r));
  m["wall_clock_seconds"] = wall_seconds;
  m["outputs"] = outputs;
  m["summary"] = result.summary;
  m["near_degenerate_samples"] = result.near_degenerate_samples;
  const auto path = spec.out_dir / "manifest.json";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << m.dump(2) << '\n';
  written.push_back(path);
  return written;
}

// ---------------------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentSpec& spec, RunCache* cache) {
  spec.validate();
  switch (spec.kind) {
    case ExperimentKind::Train: return single_run(spec, cache);
    case ExperimentKind::SweepSpectrum: return sweep_spectrum(spec, cache);
    case ExperimentKind::SweepM: return sweep_num_states(spec, cache);
    case ExperimentKind::SweepHidden: return sweep_hidden(spec, cache);
    case ExperimentKind::GeneralizationHole: return generalization_hole(spec, cache);
    case ExperimentKind::LearnabilityGap: return learnability_gap(spec, cache);
    case ExperimentKind::TwoParam: return two_parameter_run(spec, cache);
    case ExperimentKind::Supervised: return supervised_run(spec, cache);
    case ExperimentKind::Diagnostics: return diagnostics_experiment(spec);
  }
  throw std::logic_error("run_experiment: unhandled kind");
}

ExperimentResult single_run(const ExperimentSpec& spec, RunCache* cache) {
  require(spec.protocols.size() == 1, "train: exactly one protocol");
  RunConfig run = base_run(spec);
  run.protocol = spec.protocols.front() == ProtocolKind::Single
                     ? SpectralProtocol::single(spec.m_indices.front())
                     : SpectralProtocol{spec.protocols.front(), spec.counts.front(), 1};
  run.train.seed = repeat_seed(spec.seed, 0);
  const auto outcome = run_all({run}, 1, cache).front();

  ExperimentResult res;
  res.tables.push_back(history_table("history", outcome->history));
  Table metrics{"metrics",
                {"protocol", "M", "m_index", "w_H", "N_sam", "rayleigh_final",
                 "val_rayleigh_final", "theta_loss_final", "theta_loss_median"},
                {}};
  metrics.add({to_string(run.protocol.kind), std::to_string(run.protocol.width()),
               run.protocol.kind == ProtocolKind::Single ? std::to_string(run.protocol.m_index) : "",
               std::to_string(run.hidden), std::to_string(run.n_samples),
               format_number(outcome->final_train_rayleigh()),
               format_number(outcome->final_val_rayleigh()),
               format_number(outcome->validation.mean_theta_loss),
               format_number(outcome->validation.median_theta_loss)});
  res.tables.push_back(std::move(metrics));
  res.near_degenerate_samples = outcome->near_degenerate_samples;
  res.checkpoints.emplace_back("encoder", outcome->params);
  res.summary["encoder_parameters"] = std::to_string(num_parameters(outcome->params));
  return res;
}

ExperimentResult sweep_spectrum(const ExperimentSpec& spec, RunCache* cache) {
  std::vector<RunConfig> runs;
  std::vector<std::array<int, 3>> keys;  // m_index, w_H, repeat
  for (int m : spec.m_indices)
    for (int w : spec.hidden)
      for (int r = 0; r < spec.repeats; ++r) {
        RunConfig run = base_run(spec);
        run.protocol = SpectralProtocol::single(m);
        run.hidden = w;
        run.train.seed = repeat_seed(spec.seed, r);
        runs.push_back(run);
        keys.push_back({m, w, r});
      }
  const auto out = run_all(runs, spec.threads, cache);
  ExperimentResult res;
  Table t{"sweep_spectrum",
          {"m_index", "w_H", "N_sam", "rayleigh_final", "theta_loss_final", "repeat"},
          {}};
  for (std::size_t i = 0; i < runs.size(); ++i)
    t.add({std::to_string(keys[i][0]), std::to_string(keys[i][1]),
           std::to_string(spec.n_samples), format_number(out[i]->final_train_rayleigh()),
           format_number(out[i]->final_val_theta()), std::to_string(keys[i][2])});
  res.tables.push_back(std::move(t));
  res.near_degenerate_samples = near_degenerate_total(out);
  return res;
}

ExperimentResult sweep_num_states(const ExperimentSpec& spec, RunCache* cache) {
  require(spec.hidden.size() == 1, "sweep-m: exactly one hidden width");
  std::vector<RunConfig> runs;
  std::vector<std::tuple<ProtocolKind, int, int>> keys;
  for (ProtocolKind k : spec.protocols) {
    require(k != ProtocolKind::Single, "sweep-m: protocols must be low or mid");
    for (int M : spec.counts)
      for (int r = 0; r < spec.repeats; ++r) {
        RunConfig run = base_run(spec);
        run.protocol = SpectralProtocol{k, M, 1};
        run.train.seed = repeat_seed(spec.seed, r);
        runs.push_back(run);
        keys.emplace_back(k, M, r);
      }
  }
  const auto out = run_all(runs, spec.threads, cache);
  ExperimentResult res;
  Table t{"sweep_m",
          {"protocol", "M", "N_sam", "rayleigh_final", "theta_loss_final", "repeat"},
          {}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [k, M, r] = keys[i];
    t.add({to_string(k), std::to_string(M), std::to_string(spec.n_samples),
           format_number(out[i]->final_train_rayleigh()),
           format_number(out[i]->final_val_theta()), std::to_string(r)});
  }
  res.tables.push_back(std::move(t));
  res.near_degenerate_samples = near_degenerate_total(out);
  return res;
}

ExperimentResult sweep_hidden(const ExperimentSpec& spec, RunCache* cache) {
  require(spec.counts.size() == 1, "sweep-hidden: exactly one M");
  const int M = spec.counts.front();
  std::vector<RunConfig> runs;
  std::vector<std::tuple<ProtocolKind, int, int>> keys;
  for (ProtocolKind k : spec.protocols) {
    require(k != ProtocolKind::Single, "sweep-hidden: protocols must be low or mid");
    for (int w : spec.hidden)
      for (int r = 0; r < spec.repeats; ++r) {
        RunConfig run = base_run(spec);
        run.protocol = SpectralProtocol{k, M, 1};
        run.hidden = w;
        run.train.seed = repeat_seed(spec.seed, r);
        runs.push_back(run);
        keys.emplace_back(k, w, r);
      }
  }
  const auto out = run_all(runs, spec.threads, cache);
  ExperimentResult res;
  Table t{"sweep_hidden",
          {"protocol", "w_H", "M", "N_sam", "rayleigh_final", "theta_loss_final", "repeat"},
          {}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [k, w, r] = keys[i];
    t.add({to_string(k), std::to_string(w), std::to_string(M),
           std::to_string(spec.n_samples), format_number(out[i]->final_train_rayleigh()),
           format_number(out[i]->final_val_theta()), std::to_string(r)});
  }
  res.tables.push_back(std::move(t));
  res.near_degenerate_samples = near_degenerate_total(out);
  return res;
}

ExperimentResult generalization_hole(const ExperimentSpec& spec, RunCache* cache) {
  require(spec.free.size() == 1, "generalize: exactly one free coupling");
  require(spec.protocols.size() == 1 && spec.protocols.front() != ProtocolKind::Single,
          "generalize: one low or mid protocol");
  const SpectralProtocol protocol{spec.protocols.front(), spec.counts.front(), 1};
  const std::vector<std::pair<std::string, Domain>> domains = {
      {"full", spec.domains.front()}, {"holed", spec.holed_domain}};

  std::vector<RunConfig> runs;
  for (const auto& [tag, domain] : domains)
    for (int r = 0; r < spec.repeats; ++r) {
      RunConfig run = base_run(spec);
      run.protocol = protocol;
      run.domains = {domain};
      run.train.seed = repeat_seed(spec.seed, r);
      runs.push_back(run);
    }
  const auto out = run_all(runs, spec.threads, cache);

  // Dense evaluation grid over the hull of the full domain.
  const Domain& full = spec.domains.front();
  const Domain hull = {{full.front().lo, full.back().hi}};
  const auto grid = sample_parameters({hull}, static_cast<std::size_t>(spec.eval_points),
                                      SamplingMode::Grid, 0);
  LatentSpec latent;
  latent.free = spec.free;
  latent.fixed_base = SpinChainParams::family_defaults(spec.L);
  GenerateOptions gen;
  gen.symmetry_breaking = spec.symmetry_breaking;
  gen.threads = spec.threads;
  const Dataset eval = generate_dataset(grid, latent, protocol, 0, gen);
  EvalOptions opts;
  opts.loss = spec.train.loss();
  opts.spectral_error = true;

  ExperimentResult res;
  Table t{"generalization", {"domain_tag", "J1", "theta_loss", "delta_E", "repeat"}, {}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string& tag = domains[i / static_cast<std::size_t>(spec.repeats)].first;
    const int r = static_cast<int>(i % static_cast<std::size_t>(spec.repeats));
    const EvalMetrics m = evaluate(out[i]->params, eval, opts);
    for (const SampleEval& e : m.per_sample)
      t.add({tag, format_number(e.theta_true(0)), format_number(e.theta_loss),
             format_number(e.spectral_error), std::to_string(r)});
    res.summary[tag + "_mean_theta_loss_r" + std::to_string(r)] =
        format_number(m.mean_theta_loss);
  }
  res.tables.push_back(std::move(t));
  res.near_degenerate_samples = near_degenerate_total(out) + eval.meta.near_degenerate_samples;
  return res;
}

ExperimentResult learnability_gap(const ExperimentSpec& spec, RunCache* cache) {
  std::vector<RunConfig> runs;
  for (int m : spec.m_indices)
    for (int r = 0; r < spec.repeats; ++r)
      for (int w : spec.hidden) {
        RunConfig run = base_run(spec);
        run.protocol = SpectralProtocol::single(m);
        run.hidden = w;
        run.train.seed = repeat_seed(spec.seed, r);
        runs.push_back(run);
      }
  const auto out = run_all(runs, spec.threads, cache);

  ExperimentResult res;
  Table detail{"gap_runs",
               {"m_index", "w_H", "repeat", "val_rayleigh_final", "theta_loss_final"},
               {}};
  Table gap{"gap", {"m_index", "gap_mean", "gap_std", "repeats"}, {}};
  std::size_t i = 0;
  for (int m : spec.m_indices) {
    std::vector<double> gaps;
    for (int r = 0; r < spec.repeats; ++r) {
      std::vector<double> losses;
      for (int w : spec.hidden) {
        const RunOutcome& o = *out[i++];
        losses.push_back(o.final_val_rayleigh());
        detail.add({std::to_string(m), std::to_string(w), std::to_string(r),
                    format_number(o.final_val_rayleigh()), format_number(o.final_val_theta())});
      }
      gaps.push_back(loss_gap(losses));
    }
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    double var = 0.0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    const double sd = gaps.size() > 1 ? std::sqrt(var / static_cast<double>(gaps.size() - 1)) : 0.0;
    gap.add({std::to_string(m), format_number(mean), format_number(sd),
             std::to_string(spec.repeats)});
  }
  res.tables.push_back(std::move(gap));
  res.tables.push_back(std::move(detail));
  res.near_degenerate_samples = near_degenerate_total(out);
  return res;
}

ExperimentResult two_parameter_run(const ExperimentSpec& spec, RunCache* cache) {
  require(spec.free.size() == 2, "two-param: free must name J1 and J2");
  require(spec.protocols.size() == 1 && spec.protocols.front() == ProtocolKind::Low,
          "two-param: low protocol only");
  std::vector<RunConfig> runs;
  std::vector<std::tuple<int, int, int>> keys;  // theta_dim, M, repeat
  for (int M : spec.counts)
    for (int theta_dim : {2, 1})
      for (int r = 0; r < spec.repeats; ++r) {
        RunConfig run = base_run(spec);
        run.protocol = SpectralProtocol::low(M);
        if (theta_dim == 1) {
          run.free = {spec.free.front()};
          run.domains = {spec.domains.front()};
        }
        run.train.seed = repeat_seed(spec.seed, r);
        runs.push_back(run);
        keys.emplace_back(theta_dim, M, r);
      }
  const auto out = run_all(runs, spec.threads, cache);

  ExperimentResult res;
  Table t{"two_param",
          {"theta_dim", "M", "w_H", "N_sam", "rayleigh_final", "theta_loss_final", "repeat"},
          {}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [theta_dim, M, r] = keys[i];
    t.add({std::to_string(theta_dim), std::to_string(M), std::to_string(runs[i].hidden),
           std::to_string(spec.n_samples), format_number(out[i]->final_train_rayleigh()),
           format_number(out[i]->final_val_theta()), std::to_string(r)});
  }
  res.tables.push_back(std::move(t));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [theta_dim, M, r] = keys[i];
    res.tables.push_back(history_table("history_theta" + std::to_string(theta_dim) + "_M" +
                                           std::to_string(M) + "_r" + std::to_string(r),
                                       out[i]->history));
  }
  res.near_degenerate_samples = near_degenerate_total(out);
  return res;
}

ExperimentResult supervised_run(const ExperimentSpec& spec, RunCache* cache) {
  require(spec.protocols.size() == 1 && spec.protocols.front() != ProtocolKind::Single,
          "supervised: one low or mid protocol");
  std::vector<RunConfig> runs;
  for (int r = 0; r < spec.repeats; ++r) {
    RunConfig run = base_run(spec);
    run.protocol = SpectralProtocol{spec.protocols.front(), spec.counts.front(), 1};
    run.train.loss_mode = LossMode::SupervisedTheta;
    run.train.seed = repeat_seed(spec.seed, r);
    runs.push_back(run);
  }
  const auto out = run_all(runs, spec.threads, cache);
  ExperimentResult res;
  Table t{"supervised",
          {"protocol", "M", "w_H", "N_sam", "rayleigh_final", "theta_loss_final", "repeat"},
          {}};
  for (std::size_t r = 0; r < runs.size(); ++r)
    t.add({to_string(runs[r].protocol.kind), std::to_string(runs[r].protocol.count),
           std::to_string(runs[r].hidden), std::to_string(spec.n_samples),
           format_number(out[r]->final_train_rayleigh()),
           format_number(out[r]->final_val_theta()), std::to_string(r)});
  res.tables.push_back(std::move(t));
  for (std::size_t r = 0; r < runs.size(); ++r)
    res.tables.push_back(history_table("history_r" + std::to_string(r), out[r]->history));
  res.near_degenerate_samples = near_degenerate_total(out);
  return res;
}

ExperimentResult diagnostics_experiment(const ExperimentSpec& spec) {
  SpinChainParams p = SpinChainParams::family_defaults(spec.L);
  p.J1 = spec.diag_J1;
  p.Delta = spec.diag_Delta;
  if (spec.symmetry_breaking) p = apply_symmetry_breaking(p);
  const Spectrum s = diagonalize(build_hamiltonian(p));
  const DiagnosticsRecord rec = compute_diagnostics(s);

  ExperimentResult res;
  Table d{"diagnostics",
          {"m_index", "index_norm", "energy_rescaled", "svn_norm", "spart_norm"},
          {}};
  for (std::size_t m = 0; m < rec.size(); ++m)
    d.add({std::to_string(m + 1), format_number(rec.index_norm[m]),
           format_number(rec.energy_rescaled[m]), format_number(rec.svn_norm[m]),
           format_number(rec.spart_norm[m])});
  const Histogram h = density_of_states(s.energies, spec.dos_bins);
  Table dos{"dos", {"energy_rescaled", "count"}, {}};
  for (std::size_t b = 0; b < h.centers.size(); ++b)
    dos.add({format_number(h.centers[b]), std::to_string(h.counts[b])});
  res.tables.push_back(std::move(d));
  res.tables.push_back(std::move(dos));
  res.near_degenerate_samples = near_degenerate_pairs(s).empty() ? 0 : 1;
  return res;
}

// ---------------------------------------------------------------------------

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length samples of size >= 2");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median_of: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::pair<double, double> head_tail_medians(const std::vector<double>& v, double fraction) {
  if (v.empty()) throw std::invalid_argument("head_tail_medians: empty sample");
  const auto k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(v.size()))));
  const std::vector<double> head(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k));
  const std::vector<double> tail(v.end() - static_cast<std::ptrdiff_t>(k), v.end());
  return {median_of(head), median_of(tail)};
}

double loss_gap(const std::vector<double>& losses_by_capacity) {
  if (losses_by_capacity.empty()) throw std::invalid_argument("loss_gap: empty class");
  return losses_by_capacity.front() -
         *std::min_element(losses_by_capacity.begin(), losses_by_capacity.end());
}

}  // namespace eigenlearn
