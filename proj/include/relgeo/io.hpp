// File formats.
//
// Embedding file (little-endian):
//   "RGEM" | u32 version | u64 rows | u64 cols | rows*cols f64 row-major | u32 CRC32(payload)
//
// Models and alignment maps are JSON documents
//   {"format_version": 1, "layers": [{"rows", "cols", "weights", "bias", "activation"}, ...]}
// with weights flattened row-major (out x in). Bias-free layers carry an empty
// bias array. Numbers are written in shortest round-trip form.
#pragma once

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "relgeo/alignment.hpp"
#include "relgeo/models.hpp"
#include "relgeo/numerics.hpp"
#include "relgeo/relrep.hpp"
#include "relgeo/training.hpp"

namespace relgeo {

static_assert(std::endian::native == std::endian::little, "embedding I/O assumes a little-endian host");

/// Malformed or inconsistent file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr char kEmbeddingMagic[4] = {'R', 'G', 'E', 'M'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr int kModelFormatVersion = 1;

inline std::uint32_t crc32_of(std::span<const double> payload) {
  const auto* bytes = reinterpret_cast<const Bytef*>(payload.data());
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t remaining = payload.size_bytes();
  while (remaining > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(remaining, 1u << 30));
    crc = crc32(crc, bytes, chunk);
    bytes += chunk;
    remaining -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline void write_embedding(std::ostream& out, const Matrix& m) {
  const std::uint32_t version = kEmbeddingVersion;
  const std::uint64_t rows = m.rows(), cols = m.cols();
  const std::uint32_t crc = crc32_of(m.data());
  out.write(kEmbeddingMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(m.data().data()), static_cast<std::streamsize>(m.data().size_bytes()));
  out.write(reinterpret_cast<const char*>(&crc), sizeof crc);
  if (!out) throw Error("write_embedding: stream error");
}

inline Matrix read_embedding(std::istream& in) {
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t rows = 0, cols = 0;
  if (!in.read(magic, 4) || std::memcmp(magic, kEmbeddingMagic, 4) != 0)
    throw FormatError("embedding file: bad magic");
  if (!in.read(reinterpret_cast<char*>(&version), sizeof version)) throw FormatError("embedding file: truncated header");
  if (version != kEmbeddingVersion) throw FormatError("embedding file: unsupported version " + std::to_string(version));
  if (!in.read(reinterpret_cast<char*>(&rows), sizeof rows) || !in.read(reinterpret_cast<char*>(&cols), sizeof cols))
    throw FormatError("embedding file: truncated header");
  if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) throw FormatError("embedding file: implausible dimensions");
  Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
  if (!in.read(reinterpret_cast<char*>(m.data().data()), static_cast<std::streamsize>(m.data().size_bytes())))
    throw FormatError("embedding file: payload shorter than declared dimensions");
  std::uint32_t crc = 0;
  if (!in.read(reinterpret_cast<char*>(&crc), sizeof crc)) throw FormatError("embedding file: missing checksum");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("embedding file: trailing bytes after checksum");
  if (crc != crc32_of(m.data())) throw FormatError("embedding file: checksum mismatch");
  if (!m.all_finite()) throw FormatError("embedding file: non-finite values");
  return m;
}

inline void save_embedding(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_embedding(out, m);
}

inline Matrix load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_embedding(in);
}

// ---------------------------------------------------------------------------
// CSV

/// 17 significant digits; round-trips every double.
inline std::string format_real(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw Error("cannot open " + path.string() + " for writing");
    out_.imbue(std::locale::classic());
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::vector<std::string> header;
  for (std::size_t j = 0; j < m.cols(); ++j) header.push_back("c" + std::to_string(j));
  CsvWriter csv(path, header);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    std::vector<std::string> cells;
    for (double v : m.row(i)) cells.push_back(format_real(v));
    csv.row(cells);
  }
}

inline void write_loss_csv(const std::filesystem::path& path, std::span<const double> history) {
  CsvWriter csv(path, {"epoch", "loss"});
  for (std::size_t e = 0; e < history.size(); ++e) csv.row({std::to_string(e), format_real(history[e])});
}

inline void write_labels_csv(const std::filesystem::path& path, std::span<const std::size_t> labels) {
  CsvWriter csv(path, {"index", "label"});
  for (std::size_t i = 0; i < labels.size(); ++i) csv.row({std::to_string(i), std::to_string(labels[i])});
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline std::size_t parse_index(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw FormatError(path.string() + ": bad index '" + s + "'");
  }
}

}  // namespace detail

inline IndexVector read_labels_csv(const std::filesystem::path& path) {
  IndexVector labels;
  for (const auto& r : detail::read_csv_rows(path)) {
    if (r.size() != 2) throw FormatError(path.string() + ": expected index,label rows");
    if (detail::parse_index(r[0], path) != labels.size()) throw FormatError(path.string() + ": indices out of order");
    labels.push_back(detail::parse_index(r[1], path));
  }
  return labels;
}

inline void write_correspondence_csv(const std::filesystem::path& path, const Correspondence& c) {
  CsvWriter csv(path, {"source_index", "target_index", "score"});
  for (std::size_t i = 0; i < c.target.size(); ++i)
    csv.row({std::to_string(i), std::to_string(c.target[i]), format_real(c.score[i])});
}

inline Correspondence read_correspondence_csv(const std::filesystem::path& path) {
  Correspondence c;
  for (const auto& r : detail::read_csv_rows(path)) {
    if (r.size() != 3) throw FormatError(path.string() + ": expected source_index,target_index,score rows");
    if (detail::parse_index(r[0], path) != c.target.size()) throw FormatError(path.string() + ": rows out of order");
    c.target.push_back(detail::parse_index(r[1], path));
    c.score.push_back(std::stod(r[2]));
  }
  return c;
}

inline void write_indices_csv(const std::filesystem::path& path, std::span<const std::size_t> idx) {
  CsvWriter csv(path, {"anchor", "index"});
  for (std::size_t i = 0; i < idx.size(); ++i) csv.row({std::to_string(i), std::to_string(idx[i])});
}

inline IndexVector read_indices_csv(const std::filesystem::path& path) { return read_labels_csv(path); }

// ---------------------------------------------------------------------------
// JSON documents

using nlohmann::json;

inline json layer_to_json(const Layer& layer) {
  return json{{"rows", layer.weight.rows()},
              {"cols", layer.weight.cols()},
              {"weights", layer.weight.values()},
              {"bias", layer.bias},
              {"activation", to_string(layer.activation)}};
}

inline Layer layer_from_json(const json& j) {
  try {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    auto weights = j.at("weights").get<std::vector<double>>();
    if (weights.size() != rows * cols) throw FormatError("layer: weights length does not match rows x cols");
    Layer layer;
    layer.weight = Matrix(rows, cols, std::move(weights));
    layer.bias = j.at("bias").get<std::vector<double>>();
    if (!layer.bias.empty() && layer.bias.size() != rows) throw FormatError("layer: bias length does not match rows");
    layer.activation = parse_activation(j.at("activation").get<std::string>());
    return layer;
  } catch (const json::exception& e) {
    throw FormatError(std::string("layer: ") + e.what());
  }
}

inline json mlp_to_json(const Mlp& m) {
  json layers = json::array();
  for (const Layer& l : m.layers()) layers.push_back(layer_to_json(l));
  return json{{"format_version", kModelFormatVersion}, {"layers", layers}};
}

inline Mlp mlp_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) throw FormatError("model: unsupported format_version");
    std::vector<Layer> layers;
    for (const auto& l : j.at("layers")) layers.push_back(layer_from_json(l));
    return Mlp(std::move(layers));
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline void save_mlp(const std::filesystem::path& path, const Mlp& m) { write_json(path, mlp_to_json(m)); }
inline Mlp load_mlp(const std::filesystem::path& path) { return mlp_from_json(read_json(path)); }

inline void save_diet_head(const std::filesystem::path& path, const DietHead& head) {
  json j = mlp_to_json(head.as_mlp());
  j["head"] = "diet";
  write_json(path, j);
}

inline DietHead load_diet_head(const std::filesystem::path& path) {
  try {
    return DietHead::from_mlp(mlp_from_json(read_json(path)));
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
}

/// Stored as a single identity-activation layer (weights = Tᵀ, bias = t) so the
/// file also loads as a model.
inline json alignment_to_json(const AlignmentMap& m) {
  json j = mlp_to_json(Mlp({Layer{transpose(m.t), m.translation, Activation::Identity}}));
  j["kind"] = to_string(m.kind);
  j["fit_residual"] = m.fit_residual;
  j["underdetermined"] = m.underdetermined;
  return j;
}

inline AlignmentMap alignment_from_json(const json& j) {
  const Mlp model = mlp_from_json(j);
  if (model.layers().size() != 1) throw FormatError("alignment map: expected exactly one layer");
  AlignmentMap m;
  try {
    m.kind = parse_map_kind(j.at("kind").get<std::string>());
    m.fit_residual = j.value("fit_residual", 0.0);
    m.underdetermined = j.value("underdetermined", false);
  } catch (const json::exception& e) {
    throw FormatError(std::string("alignment map: ") + e.what());
  }
  const Layer& layer = model.layers().front();
  m.t = transpose(layer.weight);
  m.translation = layer.has_bias() ? layer.bias : Vector(m.t.cols(), 0.0);
  if (m.kind == MapKind::Orthogonal) {
    const double err = max_abs_diff(matmul(transpose(m.t), m.t), Matrix::identity(m.t.cols()));
    if (err > 1e-8) throw FormatError("alignment map: orthogonal map with TᵀT deviating from I by " + std::to_string(err));
  }
  return m;
}

inline json relrep_sidecar(const RelRepMatrix& r) {
  json j{{"mode", to_string(r.mode)},
         {"anchor_fingerprint", r.anchor_fingerprint},
         {"rows", r.values.rows()},
         {"anchors", r.values.cols()}};
  j["metric"] = r.metric ? json(r.metric->name()) : json(nullptr);
  j["steps"] = r.steps ? json(*r.steps) : json(nullptr);
  j["warnings"] = r.warnings;
  return j;
}

inline void save_relrep(const std::filesystem::path& path, const RelRepMatrix& r) {
  save_embedding(path, r.values);
  std::filesystem::path side = path;
  side += ".json";
  write_json(side, relrep_sidecar(r));
}

inline RelRepMatrix load_relrep(const std::filesystem::path& path) {
  RelRepMatrix r;
  r.values = load_embedding(path);
  std::filesystem::path side = path;
  side += ".json";
  const json j = read_json(side);
  try {
    r.mode = parse_relrep_mode(j.at("mode").get<std::string>());
    r.anchor_fingerprint = j.at("anchor_fingerprint").get<std::uint64_t>();
    if (!j.at("metric").is_null()) r.metric = MetricSpec::parse(j.at("metric").get<std::string>());
    if (!j.at("steps").is_null()) r.steps = j.at("steps").get<std::size_t>();
    if (j.at("rows").get<std::size_t>() != r.values.rows() || j.at("anchors").get<std::size_t>() != r.values.cols())
      throw FormatError("relrep sidecar: dimensions disagree with the matrix file");
  } catch (const json::exception& e) {
    throw FormatError(std::string("relrep sidecar: ") + e.what());
  }
  return r;
}

}  // namespace relgeo
