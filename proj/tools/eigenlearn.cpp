#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eigenlearn/experiments.hpp"

using namespace eigenlearn;

namespace {

struct Flag {
  std::string key;
  CLI::Option* option;
};

struct Command {
  CLI::App* app;
  ExperimentKind kind;
  std::string storage[32];
  std::vector<Flag> flags;
  std::string config;
  std::string preset;
};

void add_flags(Command& c) {
  static const std::vector<std::pair<std::string, std::string>> specs = {
      {"l", "number of sites"},
      {"protocol", "low, mid or single (comma list for sweeps)"},
      {"m", "number of states M (comma list for sweeps)"},
      {"m-index", "1-based state index for the single protocol (comma list)"},
      {"samples", "number of parameter samples N_sam"},
      {"hidden", "hidden width w_H (comma list for sweeps)"},
      {"epochs", "training epochs"},
      {"lr", "Adam learning rate"},
      {"batch", "mini-batch size"},
      {"gamma", "diagonal weight of the Rayleigh loss"},
      {"epsilon", "normalization guard of the Rayleigh loss"},
      {"split", "training share of the samples"},
      {"loss", "rayleigh or supervised_theta"},
      {"seed", "master seed"},
      {"repeats", "seeds per configuration"},
      {"threads", "worker threads"},
      {"sampling", "grid or uniform"},
      {"domain", "parameter range lo:hi[,lo:hi]; ';' between couplings"},
      {"holed-domain", "training range of the holed generalization run"},
      {"eval-points", "grid points of the generalization evaluation"},
      {"free", "latent couplings, J1 and/or J2"},
      {"symmetry-breaking", "apply the on-site perturbations (true/false)"},
      {"diag-j1", "J1 of the diagnostics Hamiltonian"},
      {"diag-delta", "anisotropy of the diagnostics Hamiltonian"},
      {"dos-bins", "density-of-states bins"},
      {"out", "output directory"},
  };
  for (std::size_t i = 0; i < specs.size(); ++i)
    c.flags.push_back({specs[i].first, c.app->add_option("--" + specs[i].first,
                                                         c.storage[i], specs[i].second)});
  c.app->add_option("--preset", c.preset, "desk or paper");
  c.app->add_option("--config", c.config,
                    "key=value file, or a manifest.json to re-run an experiment");
}

ExperimentSpec resolve(const Command& c) {
  std::map<std::string, std::string> file;
  if (!c.config.empty()) {
    const std::filesystem::path path = c.config;
    file = path.extension() == ".json" ? read_manifest_config(path) : read_config_file(path);
    if (auto it = file.find("kind"); it != file.end() && it->second != to_string(c.kind))
      throw std::invalid_argument("config is for '" + it->second + "', not '" +
                                  to_string(c.kind) + "'");
  }
  std::string preset = "desk";
  if (auto it = file.find("preset"); it != file.end()) preset = it->second;
  if (!c.preset.empty()) preset = c.preset;

  ExperimentSpec spec = ExperimentSpec::preset_for(c.kind, preset);
  for (const auto& [k, v] : file)
    if (k != "kind" && k != "preset") spec.apply_setting(k, v);
  for (const Flag& f : c.flags)
    if (f.option->count() > 0) spec.apply_setting(f.key, f.option->as<std::string>());
  spec.validate();
  return spec;
}

void run_generate(const ExperimentSpec& spec) {
  LatentSpec latent;
  latent.free = spec.free;
  latent.fixed_base = SpinChainParams::family_defaults(spec.L);
  const ProtocolKind kind = spec.protocols.front();
  const SpectralProtocol protocol = kind == ProtocolKind::Single
                                        ? SpectralProtocol::single(spec.m_indices.front())
                                        : SpectralProtocol{kind, spec.counts.front(), 1};
  const StageSeeds seeds = StageSeeds::from(spec.seed);
  const auto thetas = sample_parameters(spec.domains, static_cast<std::size_t>(spec.n_samples),
                                        spec.sampling, seeds.sampling);
  GenerateOptions gen;
  gen.symmetry_breaking = spec.symmetry_breaking;
  gen.threads = spec.threads;
  const Dataset ds = generate_dataset(thetas, latent, protocol, seeds.dataset, gen);
  std::filesystem::create_directories(spec.out_dir);
  const auto path = spec.out_dir / "dataset.eigd";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_dataset(out, ds);
  std::cout << "wrote " << path.string() << " (" << ds.size() << " samples, D = " << ds.meta.dim
            << ", M = " << ds.width() << ", near-degenerate samples: "
            << ds.meta.near_degenerate_samples << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learnability of spin-chain Hamiltonians from eigenstates"};
  app.require_subcommand(1);

  const std::vector<std::tuple<std::string, ExperimentKind, std::string>> commands = {
      {"generate", ExperimentKind::Train, "write a dataset file"},
      {"diagnostics", ExperimentKind::Diagnostics, "entanglement, participation entropy, DoS"},
      {"train", ExperimentKind::Train, "one training run"},
      {"sweep-spectrum", ExperimentKind::SweepSpectrum, "single-state position sweep"},
      {"sweep-m", ExperimentKind::SweepM, "number-of-states sweep"},
      {"sweep-hidden", ExperimentKind::SweepHidden, "hidden-width sweep"},
      {"generalize", ExperimentKind::GeneralizationHole, "training-domain hole experiment"},
      {"gap", ExperimentKind::LearnabilityGap, "loss gap across capacities"},
      {"two-param", ExperimentKind::TwoParam, "joint (J1, J2) inference"},
      {"supervised", ExperimentKind::Supervised, "training on the parameter loss"},
  };
  std::vector<std::unique_ptr<Command>> cmds;
  for (const auto& [name, kind, help] : commands) {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->kind = kind;
    add_flags(*c);
    cmds.push_back(std::move(c));
  }
  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& c : cmds) {
      if (!c->app->parsed()) continue;
      const ExperimentSpec spec = resolve(*c);
      if (c->app->get_name() == "generate") {
        run_generate(spec);
        return 0;
      }
      const auto start = std::chrono::steady_clock::now();
      const ExperimentResult result = run_experiment(spec);
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      for (const auto& path : emit_results(spec, result, seconds))
        std::cout << "wrote " << path.string() << '\n';
      if (result.near_degenerate_samples > 0)
        std::cout << "note: " << result.near_degenerate_samples
                  << " samples had near-degenerate eigenpairs\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
