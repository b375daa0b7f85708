// Experiment configuration: a strict JSON document. Unknown keys are errors
// and every path is resolved against the directory holding the config file.
#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relgeo/alignment.hpp"
#include "relgeo/geometry.hpp"
#include "relgeo/io.hpp"
#include "relgeo/relrep.hpp"
#include "relgeo/synthbench.hpp"

namespace relgeo {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DatasetConfig {
  DatasetKind kind = DatasetKind::GaussianMixture;
  std::size_t n = 1500;
  std::size_t test_n = 500;  // last test_n rows form the test split
  std::size_t ambient_dim = 16;
  double noise = 0.05;
};

struct AutoencoderConfig {
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden{64};
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double learning_rate = 3e-3;
};

struct DietConfig {
  std::vector<std::size_t> hidden{64};
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 3e-3;
};

struct AnchorConfig {
  std::size_t k = 50;
  AnchorScheme scheme = AnchorScheme::Uniform;
  std::size_t repeats = 5;
  std::vector<std::size_t> sweep{2, 5, 8, 15, 50};
};

struct RelRepConfig {
  RelRepMode mode = RelRepMode::GeoLength;
  std::string metric = "euclidean";
  std::size_t steps = 8;
};

struct AlignmentConfig {
  MapKind kind = MapKind::Linear;
  std::optional<bool> center;  // unset: kind-specific default
  std::optional<double> min_score;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  DatasetConfig dataset;
  AutoencoderConfig autoencoder;
  DietConfig diet;
  AnchorConfig anchors;
  RelRepConfig relrep;
  OracleOptions oracle;
  std::size_t per_class = 10;
  AlignmentConfig alignment;
  std::vector<std::string> metrics{"mrr"};
  std::map<std::string, std::filesystem::path> inputs;  // named input files

  bool symmetric_mrr() const {
    return std::find(metrics.begin(), metrics.end(), "symmetric-mrr") != metrics.end();
  }
  bool center_alignment() const { return alignment.center.value_or(alignment.kind == MapKind::Orthogonal); }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline std::string read_string(const nlohmann::json& j, const char* key, const std::string& fallback,
                               const std::string& where) {
  std::string out = fallback;
  read_field(j, key, out, where);
  return out;
}

}  // namespace detail

/// Parses a config document; `base` is the directory that relative paths are
/// resolved against.
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base) {
  using detail::read_field;
  using detail::read_string;
  using detail::reject_unknown;
  ExperimentConfig c;
  reject_unknown(j, "config", {"seed", "output_dir", "dataset", "autoencoder", "diet", "anchors", "relrep",
                               "oracle", "geodesic_compare", "alignment", "metrics", "inputs"});
  read_field(j, "seed", c.seed, "config");
  std::string out_dir = c.output_dir.string();
  read_field(j, "output_dir", out_dir, "config");
  c.output_dir = base / out_dir;

  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      reject_unknown(d, "dataset", {"kind", "n", "test_n", "ambient_dim", "noise"});
      c.dataset.kind = parse_dataset_kind(read_string(d, "kind", to_string(c.dataset.kind), "dataset"));
      read_field(d, "n", c.dataset.n, "dataset");
      read_field(d, "test_n", c.dataset.test_n, "dataset");
      read_field(d, "ambient_dim", c.dataset.ambient_dim, "dataset");
      read_field(d, "noise", c.dataset.noise, "dataset");
    }
    if (j.contains("autoencoder")) {
      const auto& a = j.at("autoencoder");
      reject_unknown(a, "autoencoder", {"latent_dim", "hidden", "epochs", "batch_size", "learning_rate"});
      read_field(a, "latent_dim", c.autoencoder.latent_dim, "autoencoder");
      read_field(a, "hidden", c.autoencoder.hidden, "autoencoder");
      read_field(a, "epochs", c.autoencoder.epochs, "autoencoder");
      read_field(a, "batch_size", c.autoencoder.batch_size, "autoencoder");
      read_field(a, "learning_rate", c.autoencoder.learning_rate, "autoencoder");
    }
    if (j.contains("diet")) {
      const auto& a = j.at("diet");
      reject_unknown(a, "diet", {"hidden", "epochs", "batch_size", "learning_rate"});
      read_field(a, "hidden", c.diet.hidden, "diet");
      read_field(a, "epochs", c.diet.epochs, "diet");
      read_field(a, "batch_size", c.diet.batch_size, "diet");
      read_field(a, "learning_rate", c.diet.learning_rate, "diet");
    }
    if (j.contains("anchors")) {
      const auto& a = j.at("anchors");
      reject_unknown(a, "anchors", {"k", "scheme", "repeats", "sweep"});
      read_field(a, "k", c.anchors.k, "anchors");
      c.anchors.scheme = parse_anchor_scheme(read_string(a, "scheme", to_string(c.anchors.scheme), "anchors"));
      read_field(a, "repeats", c.anchors.repeats, "anchors");
      read_field(a, "sweep", c.anchors.sweep, "anchors");
    }
    if (j.contains("relrep")) {
      const auto& r = j.at("relrep");
      reject_unknown(r, "relrep", {"mode", "metric", "steps"});
      c.relrep.mode = parse_relrep_mode(read_string(r, "mode", to_string(c.relrep.mode), "relrep"));
      c.relrep.metric = read_string(r, "metric", c.relrep.metric, "relrep");
      MetricSpec::parse(c.relrep.metric);
      read_field(r, "steps", c.relrep.steps, "relrep");
    }
    if (j.contains("oracle")) {
      const auto& o = j.at("oracle");
      reject_unknown(o, "oracle", {"steps", "iterations", "learning_rate", "fd_step"});
      read_field(o, "steps", c.oracle.steps, "oracle");
      read_field(o, "iterations", c.oracle.iterations, "oracle");
      read_field(o, "learning_rate", c.oracle.learning_rate, "oracle");
      read_field(o, "fd_step", c.oracle.fd_step, "oracle");
    }
    if (j.contains("geodesic_compare")) {
      const auto& g = j.at("geodesic_compare");
      reject_unknown(g, "geodesic_compare", {"per_class"});
      read_field(g, "per_class", c.per_class, "geodesic_compare");
    }
    if (j.contains("alignment")) {
      const auto& a = j.at("alignment");
      reject_unknown(a, "alignment", {"kind", "center", "min_score"});
      c.alignment.kind = parse_map_kind(read_string(a, "kind", to_string(c.alignment.kind), "alignment"));
      if (a.contains("center") && !a.at("center").is_null()) {
        bool center = false;
        read_field(a, "center", center, "alignment");
        c.alignment.center = center;
      }
      if (a.contains("min_score") && !a.at("min_score").is_null()) {
        double s = 0.0;
        read_field(a, "min_score", s, "alignment");
        c.alignment.min_score = s;
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  read_field(j, "metrics", c.metrics, "config");
  for (const std::string& m : c.metrics) {
    if (m != "mrr" && m != "symmetric-mrr") throw ConfigError("metrics: unknown metric '" + m + "'");
  }
  if (j.contains("inputs")) {
    const auto& in = j.at("inputs");
    if (!in.is_object()) throw ConfigError("inputs: expected an object of name -> path");
    for (const auto& item : in.items()) {
      if (!item.value().is_string()) throw ConfigError("inputs." + item.key() + ": expected a path string");
      c.inputs[item.key()] = base / item.value().get<std::string>();
    }
  }
  if (c.dataset.test_n > c.dataset.n) throw ConfigError("dataset: test_n exceeds n");
  if (c.relrep.steps == 0) throw ConfigError("relrep: steps must be >= 1");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = read_json(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(j, std::filesystem::absolute(path).parent_path());
}

/// Canonical JSON of the effective configuration (paths as given, sorted keys).
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.string();
  j["dataset"] = {{"kind", to_string(c.dataset.kind)},
                  {"n", c.dataset.n},
                  {"test_n", c.dataset.test_n},
                  {"ambient_dim", c.dataset.ambient_dim},
                  {"noise", c.dataset.noise}};
  j["autoencoder"] = {{"latent_dim", c.autoencoder.latent_dim},
                      {"hidden", c.autoencoder.hidden},
                      {"epochs", c.autoencoder.epochs},
                      {"batch_size", c.autoencoder.batch_size},
                      {"learning_rate", c.autoencoder.learning_rate}};
  j["diet"] = {{"hidden", c.diet.hidden},
               {"epochs", c.diet.epochs},
               {"batch_size", c.diet.batch_size},
               {"learning_rate", c.diet.learning_rate}};
  j["anchors"] = {{"k", c.anchors.k},
                  {"scheme", to_string(c.anchors.scheme)},
                  {"repeats", c.anchors.repeats},
                  {"sweep", c.anchors.sweep}};
  j["relrep"] = {{"mode", to_string(c.relrep.mode)}, {"metric", c.relrep.metric}, {"steps", c.relrep.steps}};
  j["oracle"] = {{"steps", c.oracle.steps},
                 {"iterations", c.oracle.iterations},
                 {"learning_rate", c.oracle.learning_rate},
                 {"fd_step", c.oracle.fd_step}};
  j["geodesic_compare"] = {{"per_class", c.per_class}};
  j["alignment"] = {{"kind", to_string(c.alignment.kind)},
                    {"center", c.alignment.center ? nlohmann::json(*c.alignment.center) : nlohmann::json()},
                    {"min_score", c.alignment.min_score ? nlohmann::json(*c.alignment.min_score) : nlohmann::json()}};
  j["metrics"] = c.metrics;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [k, v] : c.inputs) inputs[k] = v.string();
  j["inputs"] = inputs;
  return j;
}

/// FNV-1a of the canonical config dump, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::uint64_t h = hash_name(config_to_json(c).dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace relgeo
