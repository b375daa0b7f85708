#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <iterator>

#include "relgeo/commands.hpp"
#include "test_util.hpp"

namespace relgeo {
namespace {

namespace fs = std::filesystem;
using testing::max_abs;
using testing::random_mlp;

class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("relgeo-test-" + std::to_string(::getpid()) + "-" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t reference_crc32(const std::string& bytes) {
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char c : bytes) {
    crc ^= c;
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

template <typename T>
T read_le(const std::string& s, std::size_t offset) {
  T v = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b)
    v |= static_cast<T>(static_cast<unsigned char>(s[offset + b])) << (8 * b);
  return v;
}

TEST(EmbeddingFile, LayoutMatchesFormat) {
  TempDir dir("layout");
  const Matrix m = Matrix::from_rows({{1.5, -2.0, 0.0}, {1e-300, 3.25, -0.0}});
  save_embedding(dir / "m.rgem", m);
  const std::string bytes = slurp(dir / "m.rgem");
  ASSERT_EQ(bytes.size(), 4u + 4u + 8u + 8u + 6u * 8u + 4u);
  EXPECT_EQ(bytes.substr(0, 4), "RGEM");
  EXPECT_EQ(read_le<std::uint32_t>(bytes, 4), 1u);
  EXPECT_EQ(read_le<std::uint64_t>(bytes, 8), 2u);
  EXPECT_EQ(read_le<std::uint64_t>(bytes, 16), 3u);
  const std::string payload = bytes.substr(24, 48);
  EXPECT_EQ(read_le<std::uint64_t>(payload, 8), std::bit_cast<std::uint64_t>(-2.0));
  EXPECT_EQ(read_le<std::uint32_t>(bytes, 72), reference_crc32(payload));
}

TEST(EmbeddingFile, RoundTripIsBitIdentical) {
  TempDir dir("roundtrip");
  RngStream rng(1, "rgem");
  Matrix m = rng.normal_matrix(17, 5, 1e3);
  m(0, 0) = -0.0;
  m(1, 1) = std::numeric_limits<double>::denorm_min();
  m(2, 2) = std::numeric_limits<double>::max();
  save_embedding(dir / "a.rgem", m);
  const Matrix back = load_embedding(dir / "a.rgem");
  ASSERT_EQ(back.rows(), 17u);
  ASSERT_EQ(back.cols(), 5u);
  for (std::size_t k = 0; k < m.size(); ++k)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.data()[k]), std::bit_cast<std::uint64_t>(m.data()[k]));
  save_embedding(dir / "b.rgem", back);
  EXPECT_EQ(slurp(dir / "a.rgem"), slurp(dir / "b.rgem"));
}

TEST(EmbeddingFile, EmptyMatrixRoundTrips) {
  TempDir dir("empty");
  save_embedding(dir / "e.rgem", Matrix(0, 4));
  const Matrix e = load_embedding(dir / "e.rgem");
  EXPECT_EQ(e.rows(), 0u);
  EXPECT_EQ(e.cols(), 4u);
}

TEST(EmbeddingFile, CorruptionIsDetected) {
  TempDir dir("corrupt");
  RngStream rng(2, "rgem");
  save_embedding(dir / "ok.rgem", rng.normal_matrix(4, 3));
  const std::string good = slurp(dir / "ok.rgem");
  auto expect_format_error = [&](std::string bytes, const char* what) {
    spit(dir / "bad.rgem", bytes);
    EXPECT_THROW(load_embedding(dir / "bad.rgem"), FormatError) << what;
  };
  std::string flipped = good;
  flipped[30] ^= 0x01;
  expect_format_error(flipped, "payload bit flip");
  std::string magic = good;
  magic[0] = 'X';
  expect_format_error(magic, "magic");
  std::string version = good;
  version[4] = 2;
  expect_format_error(version, "version");
  expect_format_error(good.substr(0, good.size() - 2), "truncated checksum");
  expect_format_error(good.substr(0, 40), "truncated payload");
  expect_format_error(good + "x", "trailing bytes");
}

TEST(Csv, RealsRoundTripWith17Digits) {
  RngStream rng(3, "csv");
  for (int i = 0; i < 200; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-30.0, 30.0));
    EXPECT_EQ(std::stod(format_real(v)), v);
  }
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
}

TEST(Csv, CorrespondenceAndLabelsRoundTrip) {
  TempDir dir("csv");
  const Correspondence c{{2, 0, 1}, {0.5, 1.0 / 3.0, -0.25}};
  write_correspondence_csv(dir / "c.csv", c);
  const Correspondence back = read_correspondence_csv(dir / "c.csv");
  EXPECT_EQ(back.target, c.target);
  EXPECT_EQ(back.score, c.score);
  write_labels_csv(dir / "l.csv", IndexVector{3, 1, 4, 1, 5});
  EXPECT_EQ(read_labels_csv(dir / "l.csv"), (IndexVector{3, 1, 4, 1, 5}));
  spit(dir / "bad.csv", "label\n1\nx\n");
  EXPECT_THROW(read_labels_csv(dir / "bad.csv"), FormatError);
}

TEST(ModelFile, MlpRoundTripIsExact) {
  TempDir dir("mlp");
  RngStream rng(4, "mlp");
  const Mlp m = random_mlp({3, 7, 2}, {Activation::Sigmoid, Activation::Identity}, rng, false);
  save_mlp(dir / "m.json", m);
  const Mlp back = load_mlp(dir / "m.json");
  ASSERT_EQ(back.layers().size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(back.layers()[l].weight, m.layers()[l].weight);
    EXPECT_EQ(back.layers()[l].bias, m.layers()[l].bias);
    EXPECT_EQ(back.layers()[l].activation, m.layers()[l].activation);
  }
}

TEST(ModelFile, MalformedModelIsFormatError) {
  TempDir dir("badmlp");
  spit(dir / "a.json", "{not json");
  EXPECT_THROW(load_mlp(dir / "a.json"), FormatError);
  spit(dir / "b.json", R"({"format_version": 1, "layers": [{"rows": 1, "cols": 2, "weights": [1, 2], "bias": [0], "activation": "gelu"}]})");
  EXPECT_THROW(load_mlp(dir / "b.json"), FormatError);
  spit(dir / "c.json", R"({"format_version": 1, "layers": [{"rows": 2, "cols": 2, "weights": [1, 2, 3], "bias": [], "activation": "tanh"}]})");
  EXPECT_THROW(load_mlp(dir / "c.json"), FormatError);
}

TEST(ModelFile, AlignmentMapRoundTrip) {
  RngStream rng(5, "map");
  const Matrix x = rng.normal_matrix(20, 3), q = random_orthogonal(3, rng);
  const AlignmentMap m = fit_orthogonal(x, matmul(x, q), true);
  const AlignmentMap back = alignment_from_json(alignment_to_json(m));
  EXPECT_EQ(back.kind, MapKind::Orthogonal);
  EXPECT_EQ(back.t, m.t);
  EXPECT_EQ(back.translation, m.translation);
  EXPECT_EQ(back.fit_residual, m.fit_residual);
  nlohmann::json bad = alignment_to_json(m);
  bad["layers"][0]["weights"][0] = 5.0;
  EXPECT_THROW(alignment_from_json(bad), FormatError);
}

TEST(ModelFile, DietHeadRoundTrip) {
  TempDir dir("diet");
  RngStream rng(6, "diet");
  const DietHead h = DietHead::from_mlp(random_mlp({4, 6, 9}, {Activation::Tanh, Activation::Identity}, rng, false));
  save_diet_head(dir / "h.json", h);
  const DietHead back = load_diet_head(dir / "h.json");
  EXPECT_EQ(back.w, h.w);
  EXPECT_EQ(back.f.layers()[0].weight, h.f.layers()[0].weight);
}

TEST(RelRepFile, SidecarRoundTrip) {
  TempDir dir("relrep");
  RngStream rng(7, "relrep");
  const Matrix z = rng.normal_matrix(10, 2);
  const RelRepMatrix r =
      relrep_geodesic(z, anchors_from_indices(z, {1, 5}), SphereChart{1.0}, SphericalMetric{}, 6, CurveQuantity::Energy);
  save_relrep(dir / "r.rgem", r);
  const RelRepMatrix back = load_relrep(dir / "r.rgem");
  EXPECT_EQ(back.values, r.values);
  EXPECT_EQ(back.mode, RelRepMode::GeoEnergy);
  EXPECT_EQ(back.metric->name(), "spherical");
  EXPECT_EQ(*back.steps, 6u);
  EXPECT_EQ(back.anchor_fingerprint, r.anchor_fingerprint);
}

TEST(Config, DefaultsAndPathResolution) {
  TempDir dir("config");
  fs::create_directories(dir / "sub");
  spit(dir / "sub" / "cfg.json",
       R"({"seed": 9, "output_dir": "out", "anchors": {"k": 7, "scheme": "fps"}, "inputs": {"data": "d/x.rgem"}})");
  const ExperimentConfig c = load_config(dir / "sub" / "cfg.json");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.anchors.k, 7u);
  EXPECT_EQ(c.anchors.scheme, AnchorScheme::Fps);
  EXPECT_EQ(c.output_dir, fs::absolute(dir / "sub") / "out");
  EXPECT_EQ(c.inputs.at("data"), fs::absolute(dir / "sub") / "d/x.rgem");
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  for (const char* text : {R"({"bogus": 1})", R"({"dataset": {"n": 10, "size": 3}})",
                           R"({"relrep": {"metric": "manhattan"}})", R"({"anchors": {"scheme": "random"}})",
                           R"({"metrics": ["recall"]})", R"({"seed": "seven"})"}) {
    EXPECT_THROW(parse_config(nlohmann::json::parse(text), "."), ConfigError) << text;
  }
  EXPECT_THROW(load_config("/nonexistent/relgeo.json"), ConfigError);
}

TEST(Config, HashIsStableAndSeedSensitive) {
  const ExperimentConfig a = parse_config(nlohmann::json::parse(R"({"seed": 1})"), "/x");
  const ExperimentConfig b = parse_config(nlohmann::json::parse(R"({"seed": 1})"), "/x");
  const ExperimentConfig c = parse_config(nlohmann::json::parse(R"({"seed": 2})"), "/x");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(config_hash(a).size(), 16u);
  const ExperimentConfig again = parse_config(config_to_json(a), "/");
  EXPECT_EQ(config_hash(again), config_hash(a));
}

// ---------------------------------------------------------------------------
// End-to-end through the executable.

int run_cli(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" RELGEO_CLI_PATH "' " + args + " > cli.log 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

constexpr const char* kSmallConfig = R"({
  "seed": 5, "output_dir": "res",
  "dataset": {"n": 160, "test_n": 60, "ambient_dim": 6},
  "autoencoder": {"hidden": [8], "epochs": 4, "batch_size": 32},
  "anchors": {"k": 6, "repeats": 2, "sweep": [2, 6]}
})";

void run_pipeline(const fs::path& dir, const std::string& threads) {
  spit(dir / "cfg.json", kSmallConfig);
  const std::string g = "--config cfg.json --threads " + threads + " ";
  ASSERT_EQ(run_cli(dir, g + "--out d synth"), 0) << slurp(dir / "cli.log");
  ASSERT_EQ(run_cli(dir, g + "--out a1 train-ae --data d/train.rgem --model-index 1"), 0) << slurp(dir / "cli.log");
  ASSERT_EQ(run_cli(dir, g + "--out a2 train-ae --data d/train.rgem --model-index 2"), 0) << slurp(dir / "cli.log");
  const std::string views =
      " --data d/test.rgem --encoder1 a1/encoder.json --decoder1 a1/decoder.json"
      " --encoder2 a2/encoder.json --decoder2 a2/decoder.json";
  ASSERT_EQ(run_cli(dir, g + "--out r retrieve" + views), 0) << slurp(dir / "cli.log");
  ASSERT_EQ(run_cli(dir, g + "--out s anchor-sweep" + views), 0) << slurp(dir / "cli.log");
  ASSERT_EQ(run_cli(dir, g + "--out al align" + views), 0) << slurp(dir / "cli.log");
}

TEST(Cli, PipelineIsDeterministicAcrossRunsAndThreadCounts) {
  TempDir a("pipe-a"), b("pipe-b");
  run_pipeline(a.path(), "1");
  run_pipeline(b.path(), "4");
  std::size_t compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    const fs::path rel = fs::relative(entry.path(), a.path());
    const std::string name = rel.filename().string();
    if (!entry.is_regular_file() || name == "manifest.json" || name == "cli.log") continue;
    EXPECT_EQ(slurp(entry.path()), slurp(b.path() / rel)) << rel;
    ++compared;
  }
  EXPECT_GE(compared, 20u);
  const auto manifest = nlohmann::json::parse(slurp(a / "r/manifest.json"));
  for (const char* key : {"command", "version", "seed", "config_hash", "threads", "inputs", "timestamp"})
    EXPECT_TRUE(manifest.contains(key)) << key;
  EXPECT_EQ(manifest["command"], "retrieve");
  EXPECT_EQ(manifest["threads"], 1);
}

TEST(Cli, RetrieveOnIdenticalFilesGivesPerfectMrr) {
  TempDir dir("identical");
  RngStream rng(8, "cli");
  const Matrix z = rng.normal_matrix(30, 4);
  save_relrep(dir / "r.rgem", relrep_cosine(z, anchors_from_indices(z, {0, 4, 9, 11})));
  ASSERT_EQ(run_cli(dir.path(), "--out o retrieve --relrep1 r.rgem --relrep2 r.rgem"), 0) << slurp(dir / "cli.log");
  const auto result = nlohmann::json::parse(slurp(dir / "o/result.json"));
  EXPECT_EQ(result["mrr"], 1.0);
  EXPECT_TRUE(fs::exists(dir / "o/manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "o/ranks.csv"));
}

TEST(Cli, ExitCodes) {
  TempDir dir("exit");
  RngStream rng(9, "cli");
  const Matrix z = rng.normal_matrix(5, 2);
  save_relrep(dir / "r.rgem", relrep_cosine(z, anchors_from_indices(z, {0, 1})));
  std::string bytes = slurp(dir / "r.rgem");
  bytes[40] ^= 0x10;
  fs::copy_file(dir / "r.rgem.json", dir / "bad.rgem.json");
  spit(dir / "bad.rgem", bytes);
  spit(dir / "badcfg.json", R"({"bogus": 1})");

  EXPECT_EQ(run_cli(dir.path(), "--out o retrieve --relrep1 r.rgem"), 2);
  EXPECT_EQ(run_cli(dir.path(), "--out o train-ae"), 2);
  EXPECT_EQ(run_cli(dir.path(), "--out o train-ae --data missing.rgem"), 2);
  EXPECT_EQ(run_cli(dir.path(), "--config badcfg.json --out o synth"), 2);
  EXPECT_EQ(run_cli(dir.path(), "--metric manhattan --out o synth"), 2);
  EXPECT_EQ(run_cli(dir.path(), "--out o no-such-command"), 2);
  EXPECT_EQ(run_cli(dir.path(), "--out o retrieve --relrep1 r.rgem --relrep2 bad.rgem"), 3);
  EXPECT_NE(slurp(dir / "cli.log").find("checksum"), std::string::npos);
}

}  // namespace
}  // namespace relgeo
