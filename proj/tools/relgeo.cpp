// relgeo: experiment runner for relative geodesic representations.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage / missing input / bad
// config, 3 malformed or invariant-violating input file.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "relgeo/commands.hpp"

namespace {

using relgeo::cli::CommandContext;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> anchors;
  std::optional<std::size_t> steps;
  std::optional<std::string> mode;
  std::optional<std::string> metric;
  std::optional<std::string> scheme;
  std::size_t model_index = 1;
  std::map<std::string, std::string> inputs;
};

// Input flags accepted per command; each maps --flag-name to input key.
const std::map<std::string, std::vector<std::string>>& command_inputs() {
  static const std::map<std::string, std::vector<std::string>> m{
      {"synth", {}},
      {"train-ae", {"data"}},
      {"train-diet", {"data", "labels"}},
      {"relrep", {"data", "data1", "encoder1", "decoder1", "diet_head1", "anchor_indices"}},
      {"geodesic-compare", {"data", "labels", "encoder", "decoder"}},
      {"retrieve", {"relrep1", "relrep2", "data", "data1", "data2", "encoder1", "encoder2", "decoder1", "decoder2",
                    "diet_head1", "diet_head2", "anchor_indices"}},
      {"align", {"data", "data1", "data2", "encoder1", "encoder2", "decoder1", "decoder2", "diet_head1",
                 "diet_head2", "anchor_indices", "correspondence"}},
      {"stitch", {"data", "encoder1", "decoder1", "encoder2", "decoder2", "map", "anchor_indices"}},
      {"anchor-sweep", {"data", "data1", "data2", "encoder1", "encoder2", "decoder1", "decoder2", "diet_head1",
                        "diet_head2"}},
  };
  return m;
}

const char* describe(const std::string& cmd) {
  static const std::map<std::string, const char*> d{
      {"synth", "generate a synthetic dataset (train/test splits, labels, generating latents)"},
      {"train-ae", "train an MLP autoencoder"},
      {"train-diet", "train a Diet instance-discrimination head"},
      {"relrep", "compute a relative representation against anchors"},
      {"geodesic-compare", "straight-line vs optimized geodesic energies, Spearman correlation"},
      {"retrieve", "cross-model retrieval MRR from relative representations"},
      {"align", "fit an alignment map from a correspondence"},
      {"stitch", "zero-shot stitching through a fitted alignment map"},
      {"anchor-sweep", "MRR as a function of the number of anchors"},
  };
  return d.at(cmd);
}

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relgeo: relative geodesic representations"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "experiment config (JSON)");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out, "output directory (overrides the config)");
  app.add_option("--threads", g.threads, "worker threads (default: RELGEO_THREADS or hardware)");
  app.add_option("--anchors", g.anchors, "number of anchors k");
  app.add_option("--steps", g.steps, "straight-line discretization N");
  app.add_option("--mode", g.mode, "relrep mode: cosine | geo-length | geo-energy");
  app.add_option("--metric", g.metric, "output metric: euclidean | spherical | fisher-rao");
  app.add_option("--scheme", g.scheme, "anchor scheme: uniform | fps | kmeans");

  for (const auto& [cmd, keys] : command_inputs()) {
    CLI::App* sub = app.add_subcommand(cmd, describe(cmd));
    sub->fallthrough();
    for (const std::string& key : keys) sub->add_option(flag_name(key), g.inputs[cmd + ":" + key], "input file");
    if (cmd == "train-ae" || cmd == "train-diet")
      sub->add_option("--model-index", g.model_index, "model index j (seed stream init:model-j)")
          ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    CommandContext ctx;
    ctx.cfg = g.config.empty() ? relgeo::ExperimentConfig{} : relgeo::load_config(g.config);
    if (g.config.empty()) ctx.cfg.output_dir = std::filesystem::current_path() / ctx.cfg.output_dir;
    if (g.seed) ctx.cfg.seed = *g.seed;
    if (g.anchors) ctx.cfg.anchors.k = *g.anchors;
    if (g.steps) ctx.cfg.relrep.steps = *g.steps;
    try {
      if (g.mode) ctx.cfg.relrep.mode = relgeo::parse_relrep_mode(*g.mode);
      if (g.metric) {
        relgeo::MetricSpec::parse(*g.metric);
        ctx.cfg.relrep.metric = *g.metric;
      }
      if (g.scheme) ctx.cfg.anchors.scheme = relgeo::parse_anchor_scheme(*g.scheme);
    } catch (const relgeo::Error& e) {
      throw relgeo::ConfigError(e.what());
    }
    if (ctx.cfg.relrep.steps == 0) throw relgeo::ConfigError("--steps must be >= 1");
    if (g.threads) relgeo::set_thread_count(*g.threads);
    ctx.out = g.out.empty() ? ctx.cfg.output_dir : std::filesystem::path(g.out);
    ctx.model_index = g.model_index;
    const std::string prefix = cmd + ":";
    for (const auto& [key, value] : g.inputs) {
      if (key.rfind(prefix, 0) == 0 && !value.empty()) ctx.inputs[key.substr(prefix.size())] = value;
    }
    const auto result = relgeo::cli::run_command(cmd, ctx);
    std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const relgeo::cli::MissingInput& e) {
    std::cerr << "relgeo " << cmd << ": " << e.what() << '\n';
    return 2;
  } catch (const relgeo::ConfigError& e) {
    std::cerr << "relgeo " << cmd << ": config: " << e.what() << '\n';
    return 2;
  } catch (const relgeo::FormatError& e) {
    std::cerr << "relgeo " << cmd << ": invalid input file: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "relgeo " << cmd << ": " << e.what() << '\n';
    return 1;
  }
}
