// Experiment-runner commands. Each reads its inputs from files, writes its
// results (CSV / JSON / RGEM) into an output directory and returns the
// result document that was written to result.json.
#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "relgeo/config.hpp"
#include "relgeo/experiments.hpp"
#include "relgeo/io.hpp"

namespace relgeo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

/// A required input file is missing (exit code 2).
class MissingInput : public Error {
 public:
  using Error::Error;
};

struct CommandContext {
  ExperimentConfig cfg;
  std::map<std::string, fs::path> inputs;  // command-line inputs; fall back to cfg.inputs
  fs::path out;
  std::size_t model_index = 1;

  std::optional<fs::path> find(const std::string& name) const {
    if (auto it = inputs.find(name); it != inputs.end()) return it->second;
    if (auto it = cfg.inputs.find(name); it != cfg.inputs.end()) return it->second;
    return std::nullopt;
  }

  std::optional<fs::path> optional_input(const std::string& name) const {
    auto p = find(name);
    if (p && !fs::exists(*p)) throw MissingInput("input '" + name + "' not found: " + p->string());
    return p;
  }

  fs::path input(const std::string& name) const {
    auto p = optional_input(name);
    if (!p) throw MissingInput("missing required input '" + name + "'");
    return *p;
  }

  /// `name<i>` if given, else the shared `name`.
  std::optional<fs::path> optional_indexed(const std::string& name, int i) const {
    if (auto p = optional_input(name + std::to_string(i))) return p;
    return optional_input(name);
  }

  fs::path indexed(const std::string& name, int i) const {
    auto p = optional_indexed(name, i);
    if (!p) throw MissingInput("missing required input '" + name + std::to_string(i) + "' (or '" + name + "')");
    return *p;
  }

  fs::path output(const std::string& file) const { return out / file; }

  MetricSpec metric() const { return MetricSpec::parse(cfg.relrep.metric); }

  RelRepSettings relrep_settings() const { return {cfg.relrep.mode, metric(), cfg.relrep.steps}; }

  std::uint64_t model_seed(std::size_t j) const {
    return RngStream(cfg.seed, "init:model-" + std::to_string(j)).next_u64();
  }
};

namespace detail {

inline json finish(const CommandContext& ctx, json result) {
  write_json(ctx.output("result.json"), result);
  return result;
}

/// Latent codes plus the decoder (or Diet f) of one model.
struct LoadedView {
  Matrix latent;
  std::optional<Decoder> decoder;
  ModelView view() const { return {latent, decoder ? &*decoder : nullptr}; }
};

inline LoadedView load_view(const CommandContext& ctx, int i) {
  LoadedView v;
  const Matrix data = load_embedding(ctx.indexed("data", i));
  const auto enc = ctx.optional_input("encoder" + std::to_string(i));
  v.latent = enc ? load_mlp(*enc).forward_batch(data) : data;
  if (auto dec = ctx.optional_input("decoder" + std::to_string(i))) {
    v.decoder = Decoder(load_mlp(*dec));
  } else if (auto head = ctx.optional_input("diet_head" + std::to_string(i))) {
    v.decoder = Decoder(load_diet_head(*head).f);
  }
  if (v.decoder && v.decoder->input_dim() != v.latent.cols()) {
    throw FormatError("model " + std::to_string(i) + ": decoder expects " + std::to_string(v.decoder->input_dim()) +
                      "-dim latents, got " + std::to_string(v.latent.cols()));
  }
  return v;
}

inline IndexVector anchor_indices(const CommandContext& ctx, const Matrix& latent) {
  if (auto p = ctx.optional_input("anchor_indices")) {
    IndexVector idx = read_indices_csv(*p);
    for (std::size_t a : idx)
      if (a >= latent.rows()) throw FormatError("anchor index " + std::to_string(a) + " out of range");
    return idx;
  }
  RngStream rng(ctx.cfg.seed, "anchors:rep-0");
  return select_anchors(latent, ctx.cfg.anchors.k, ctx.cfg.anchors.scheme, rng).indices;
}

inline json rows_json(const Matrix& m) { return {{"rows", m.rows()}, {"cols", m.cols()}}; }

}  // namespace detail

// ---------------------------------------------------------------------------

inline json cmd_synth(const CommandContext& ctx) {
  const DatasetConfig& d = ctx.cfg.dataset;
  RngStream rng(ctx.cfg.seed, "dataset");
  const SyntheticDataset ds = make_dataset(d.kind, d.n, d.ambient_dim, d.noise, rng);
  IndexVector train, test;
  for (std::size_t i = 0; i < d.n; ++i) (i + d.test_n < d.n ? train : test).push_back(i);
  auto labels_of = [&](const IndexVector& idx) {
    IndexVector out;
    for (std::size_t i : idx) out.push_back(ds.labels[i]);
    return out;
  };
  save_embedding(ctx.output("train.rgem"), select_rows(ds.x, train));
  save_embedding(ctx.output("test.rgem"), select_rows(ds.x, test));
  save_embedding(ctx.output("train_latent.rgem"), select_rows(ds.z, train));
  save_embedding(ctx.output("test_latent.rgem"), select_rows(ds.z, test));
  write_labels_csv(ctx.output("train_labels.csv"), labels_of(train));
  write_labels_csv(ctx.output("test_labels.csv"), labels_of(test));
  std::vector<std::size_t> histogram(kMixtureComponents, 0);
  for (std::size_t l : ds.labels) ++histogram[l];
  return detail::finish(ctx, {{"kind", to_string(d.kind)},
                              {"train_rows", train.size()},
                              {"test_rows", test.size()},
                              {"ambient_dim", d.ambient_dim},
                              {"latent_dim", latent_dim_of(d.kind)},
                              {"noise", d.noise},
                              {"label_histogram", histogram}});
}

inline json cmd_train_ae(const CommandContext& ctx) {
  const Matrix data = load_embedding(ctx.input("data"));
  const AutoencoderConfig& a = ctx.cfg.autoencoder;
  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.learning_rate;
  tc.seed = ctx.model_seed(ctx.model_index);
  const AutoencoderResult ae = train_mlp_autoencoder(data, {a.latent_dim, a.hidden}, tc);
  save_mlp(ctx.output("encoder.json"), ae.encoder);
  save_mlp(ctx.output("decoder.json"), ae.decoder);
  write_loss_csv(ctx.output("loss.csv"), ae.loss_history);
  const Matrix latent = ae.encoder.forward_batch(data);
  save_embedding(ctx.output("latent.rgem"), latent);
  const double mse = reconstruction_mse(ae.decoder.forward_batch(latent), data);
  return detail::finish(ctx, {{"model_index", ctx.model_index},
                              {"train_seed", tc.seed},
                              {"epochs", tc.epochs},
                              {"final_loss", ae.loss_history.empty() ? json() : json(ae.loss_history.back())},
                              {"reconstruction_mse", mse}});
}

inline json cmd_train_diet(const CommandContext& ctx) {
  const Matrix data = load_embedding(ctx.input("data"));
  const IndexVector labels = read_labels_csv(ctx.input("labels"));
  if (labels.size() != data.rows()) throw FormatError("labels: row count does not match the embedding file");
  const DietConfig& d = ctx.cfg.diet;
  TrainConfig tc;
  tc.epochs = d.epochs;
  tc.batch_size = d.batch_size;
  tc.learning_rate = d.learning_rate;
  tc.loss = LossKind::DietCrossEntropy;
  tc.seed = ctx.model_seed(ctx.model_index);
  DietSpec spec;
  spec.hidden = d.hidden;
  const DietTrainResult r = train_diet(data, labels, spec, tc);
  save_diet_head(ctx.output("head.json"), r.head);
  write_loss_csv(ctx.output("loss.csv"), r.loss_history);
  return detail::finish(ctx, {{"model_index", ctx.model_index},
                              {"train_seed", tc.seed},
                              {"instances", r.head.num_instances()},
                              {"final_loss", r.loss_history.empty() ? json() : json(r.loss_history.back())},
                              {"train_accuracy", r.train_accuracy}});
}

inline json cmd_relrep(const CommandContext& ctx) {
  const detail::LoadedView v = detail::load_view(ctx, 1);
  const IndexVector idx = detail::anchor_indices(ctx, v.latent);
  const RelRepMatrix r = relative_representation(v.view(), idx, ctx.relrep_settings());
  save_relrep(ctx.output("relrep.rgem"), r);
  write_indices_csv(ctx.output("anchors.csv"), idx);
  json out = {{"rows", r.values.rows()},
              {"anchors", idx.size()},
              {"mode", to_string(r.mode)},
              {"warnings", r.warnings}};
  if (r.metric) out["metric"] = r.metric->name();
  if (r.steps) out["steps"] = *r.steps;
  return detail::finish(ctx, out);
}

inline json cmd_geodesic_compare(const CommandContext& ctx) {
  const Matrix data = load_embedding(ctx.input("data"));
  const IndexVector labels = read_labels_csv(ctx.input("labels"));
  if (labels.size() != data.rows()) throw FormatError("labels: row count does not match the embedding file");
  const Mlp encoder = load_mlp(ctx.input("encoder"));
  const Decoder decoder(load_mlp(ctx.input("decoder")));
  const IndexVector samples = per_class_samples(labels, ctx.cfg.per_class);
  const Matrix z = encoder.forward_batch(select_rows(data, samples));
  const GeodesicComparison gc =
      compare_geodesic_energies(decoder, ctx.metric(), z, ctx.cfg.relrep.steps, ctx.cfg.oracle);
  write_matrix_csv(ctx.output("line_energy.csv"), gc.line_energy);
  write_matrix_csv(ctx.output("oracle_energy.csv"), gc.oracle_energy);
  write_indices_csv(ctx.output("samples.csv"), samples);
  return detail::finish(ctx, {{"points", samples.size()},
                              {"line_steps", ctx.cfg.relrep.steps},
                              {"oracle_steps", ctx.cfg.oracle.steps},
                              {"oracle_iterations", ctx.cfg.oracle.iterations},
                              {"metric", ctx.metric().name()},
                              {"spearman", gc.spearman}});
}

inline json cmd_retrieve(const CommandContext& ctx) {
  Matrix scores;
  json out;
  const auto r1 = ctx.optional_input("relrep1");
  const auto r2 = ctx.optional_input("relrep2");
  if (r1 || r2) {
    if (!r1 || !r2) throw MissingInput("retrieve needs both 'relrep1' and 'relrep2'");
    const RelRepMatrix a = load_relrep(*r1), b = load_relrep(*r2);
    scores = crossspace_similarity(a, b);
    out["mode"] = to_string(a.mode);
    out["anchors"] = a.values.cols();
  } else {
    const detail::LoadedView v1 = detail::load_view(ctx, 1), v2 = detail::load_view(ctx, 2);
    if (v1.latent.rows() != v2.latent.rows()) throw FormatError("retrieve: the two models have different row counts");
    const IndexVector idx = detail::anchor_indices(ctx, v1.latent);
    const RelRepSettings s = ctx.relrep_settings();
    scores = crossspace_similarity(relative_representation(v1.view(), idx, s),
                                   relative_representation(v2.view(), idx, s));
    write_indices_csv(ctx.output("anchors.csv"), idx);
    out["mode"] = to_string(s.mode);
    out["anchors"] = idx.size();
  }
  MrrOptions opt;
  opt.symmetric = ctx.cfg.symmetric_mrr();
  const MrrResult m = mrr_identity(scores, opt);
  {
    CsvWriter w(ctx.output("ranks.csv"), {"query_index", "rank"});
    for (std::size_t i = 0; i < m.ranks.size(); ++i) w.row({std::to_string(i), std::to_string(m.ranks[i])});
  }
  out["mrr"] = m.mrr;
  out["symmetric"] = m.symmetric;
  out["queries"] = m.ranks.size();
  return detail::finish(ctx, out);
}

namespace detail {

inline Correspondence correspondence_from_views(const CommandContext& ctx, const LoadedView& v1,
                                                const LoadedView& v2, IndexVector* anchors_out) {
  const IndexVector idx = anchor_indices(ctx, v1.latent);
  if (anchors_out) *anchors_out = idx;
  const RelRepSettings s = ctx.relrep_settings();
  return extract_correspondence(crossspace_similarity(relative_representation(v1.view(), idx, s),
                                                      relative_representation(v2.view(), idx, s)));
}

inline double identity_accuracy(const Correspondence& c) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < c.target.size(); ++i) hit += c.target[i] == i;
  return c.target.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(c.target.size());
}

inline AlignmentMap fit_map(const CommandContext& ctx, const Matrix& x, const Matrix& y) {
  const bool center = ctx.cfg.center_alignment();
  return ctx.cfg.alignment.kind == MapKind::Orthogonal ? fit_orthogonal(x, y, center) : fit_linear(x, y, center);
}

}  // namespace detail

inline json cmd_align(const CommandContext& ctx) {
  const detail::LoadedView v1 = detail::load_view(ctx, 1), v2 = detail::load_view(ctx, 2);
  Correspondence c;
  if (auto p = ctx.optional_input("correspondence")) {
    c = read_correspondence_csv(*p);
    if (c.target.size() != v1.latent.rows()) throw FormatError("correspondence: row count does not match model 1");
    for (std::size_t t : c.target)
      if (t >= v2.latent.rows()) throw FormatError("correspondence: target index out of range");
  } else {
    IndexVector anchors;
    c = detail::correspondence_from_views(ctx, v1, v2, &anchors);
    write_indices_csv(ctx.output("anchors.csv"), anchors);
  }
  const auto [x, y] = matched_pairs(v1.latent, v2.latent, c, ctx.cfg.alignment.min_score);
  const AlignmentMap map = detail::fit_map(ctx, x, y);
  write_json(ctx.output("map.json"), alignment_to_json(map));
  write_correspondence_csv(ctx.output("correspondence.csv"), c);
  return detail::finish(ctx, {{"kind", to_string(map.kind)},
                              {"pairs", x.rows()},
                              {"fit_residual", map.fit_residual},
                              {"underdetermined", map.underdetermined},
                              {"correspondence_accuracy", detail::identity_accuracy(c)}});
}

inline json cmd_stitch(const CommandContext& ctx) {
  const Matrix data = load_embedding(ctx.input("data"));
  const Mlp enc1 = load_mlp(ctx.input("encoder1"));
  const Mlp enc2 = load_mlp(ctx.input("encoder2"));
  const Decoder dec2(load_mlp(ctx.input("decoder2")));
  json out;
  AlignmentMap map;
  if (auto p = ctx.optional_input("map")) {
    map = alignment_from_json(read_json(*p));
  } else {
    const Decoder dec1(load_mlp(ctx.input("decoder1")));
    detail::LoadedView v1{enc1.forward_batch(data), dec1};
    detail::LoadedView v2{enc2.forward_batch(data), dec2};
    IndexVector anchors;
    const Correspondence c = detail::correspondence_from_views(ctx, v1, v2, &anchors);
    const auto [x, y] = matched_pairs(v1.latent, v2.latent, c, ctx.cfg.alignment.min_score);
    map = detail::fit_map(ctx, x, y);
    write_json(ctx.output("map.json"), alignment_to_json(map));
    write_correspondence_csv(ctx.output("correspondence.csv"), c);
    write_indices_csv(ctx.output("anchors.csv"), anchors);
    out["correspondence_accuracy"] = detail::identity_accuracy(c);
  }
  const Matrix stitched = stitch(enc1, map, dec2, data);
  save_embedding(ctx.output("stitched.rgem"), stitched);
  const Matrix z1 = enc1.forward_batch(data);
  out["kind"] = to_string(map.kind);
  out["stitched_mse"] = reconstruction_mse(stitched, data);
  out["native_mse"] = reconstruction_mse(dec2.forward_batch(enc2.forward_batch(data)), data);
  out["unmapped_mse"] = dec2.input_dim() == z1.cols() ? json(reconstruction_mse(dec2.forward_batch(z1), data)) : json();
  return detail::finish(ctx, out);
}

inline json cmd_anchor_sweep(const CommandContext& ctx) {
  const detail::LoadedView v1 = detail::load_view(ctx, 1), v2 = detail::load_view(ctx, 2);
  if (v1.latent.rows() != v2.latent.rows()) throw FormatError("anchor-sweep: the two models have different row counts");
  std::vector<RelRepSettings> settings{ctx.relrep_settings()};
  if (ctx.cfg.relrep.mode != RelRepMode::Cosine) settings.push_back({RelRepMode::Cosine, EuclideanMetric{}, 0});
  const std::vector<SweepRow> rows = anchor_sweep(v1.view(), v2.view(), ctx.cfg.anchors.sweep, ctx.cfg.anchors.repeats,
                                                  ctx.cfg.seed, ctx.cfg.anchors.scheme, settings,
                                                  ctx.cfg.symmetric_mrr());
  std::vector<std::string> header{"k", "mode", "mean_mrr", "std_mrr"};
  for (std::size_t r = 0; r < ctx.cfg.anchors.repeats; ++r) header.push_back("rep_" + std::to_string(r));
  CsvWriter w(ctx.output("sweep.csv"), header);
  json table = json::array();
  for (const SweepRow& row : rows) {
    std::vector<std::string> cells{std::to_string(row.k), row.mode, format_real(row.mean), format_real(row.stddev)};
    for (double v : row.per_repeat) cells.push_back(format_real(v));
    w.row(cells);
    table.push_back({{"k", row.k}, {"mode", row.mode}, {"mean_mrr", row.mean}, {"std_mrr", row.stddev}});
  }
  return detail::finish(ctx, {{"repeats", ctx.cfg.anchors.repeats},
                              {"scheme", to_string(ctx.cfg.anchors.scheme)},
                              {"rows", table}});
}

// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_manifest(const CommandContext& ctx, const std::string& command) {
  json inputs = json::object();
  for (const auto& [k, v] : ctx.cfg.inputs) inputs[k] = v.string();
  for (const auto& [k, v] : ctx.inputs) inputs[k] = v.string();
  write_json(ctx.output("manifest.json"), {{"command", command},
                                           {"version", kVersion},
                                           {"format_version", kModelFormatVersion},
                                           {"seed", ctx.cfg.seed},
                                           {"config_hash", config_hash(ctx.cfg)},
                                           {"threads", thread_count()},
                                           {"inputs", inputs},
                                           {"timestamp", utc_timestamp()}});
}

using CommandFn = json (*)(const CommandContext&);

inline const std::map<std::string, CommandFn>& command_table() {
  static const std::map<std::string, CommandFn> table{
      {"synth", cmd_synth},         {"train-ae", cmd_train_ae},
      {"train-diet", cmd_train_diet}, {"relrep", cmd_relrep},
      {"geodesic-compare", cmd_geodesic_compare}, {"retrieve", cmd_retrieve},
      {"align", cmd_align},         {"stitch", cmd_stitch},
      {"anchor-sweep", cmd_anchor_sweep}};
  return table;
}

/// Runs `command` into ctx.out (created if needed) and writes its manifest.
inline json run_command(const std::string& command, const CommandContext& ctx) {
  const auto& table = command_table();
  const auto it = table.find(command);
  if (it == table.end()) throw Error("unknown command '" + command + "'");
  fs::create_directories(ctx.out);
  json result = it->second(ctx);
  write_manifest(ctx, command);
  return result;
}

}  // namespace relgeo::cli
