#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <locale>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sonardn/baselines.hpp"
#include "sonardn/color.hpp"
#include "sonardn/denoiser.hpp"
#include "sonardn/error.hpp"
#include "sonardn/guided.hpp"
#include "sonardn/image_io.hpp"
#include "sonardn/matching.hpp"
#include "sonardn/selection.hpp"

namespace sonardn {

// ---- TOML subset ----
// Tables ([name]), key = value pairs, '#' comments, basic strings with
// \" \\ \n \t escapes, integers, floats, booleans and single-line arrays of
// scalars. Keys are flattened to "table.key".

struct TomlValue {
  enum class Type { Bool, Int, Float, String, Array } type = Type::Int;
  bool b = false;
  std::int64_t i = 0;
  double f = 0.0;
  std::string s;
  std::vector<TomlValue> array;

  double as_number(const std::string& key) const {
    if (type == Type::Int) return static_cast<double>(i);
    if (type == Type::Float) return f;
    fail_usage("config: '" + key + "' must be a number");
  }
  std::int64_t as_int(const std::string& key) const {
    if (type != Type::Int) fail_usage("config: '" + key + "' must be an integer");
    return i;
  }
  bool as_bool(const std::string& key) const {
    if (type != Type::Bool) fail_usage("config: '" + key + "' must be true or false");
    return b;
  }
  const std::string& as_string(const std::string& key) const {
    if (type != Type::String) fail_usage("config: '" + key + "' must be a string");
    return s;
  }
};

using TomlTable = std::map<std::string, TomlValue>;

namespace detail {

struct TomlCursor {
  const std::string& line;
  std::size_t pos = 0;
  int lineNo = 0;

  [[noreturn]] void error(const std::string& what) const {
    fail_usage("config line " + std::to_string(lineNo) + ": " + what);
  }
  void skip_ws() {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos >= line.size() || line[pos] == '#';
  }
};

inline bool bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

inline TomlValue parse_toml_value(TomlCursor& c);

inline TomlValue parse_toml_string(TomlCursor& c) {
  TomlValue v;
  v.type = TomlValue::Type::String;
  ++c.pos;
  while (true) {
    if (c.pos >= c.line.size()) c.error("unterminated string");
    const char ch = c.line[c.pos++];
    if (ch == '"') break;
    if (ch != '\\') {
      v.s += ch;
      continue;
    }
    if (c.pos >= c.line.size()) c.error("unterminated escape");
    const char e = c.line[c.pos++];
    switch (e) {
      case '"': v.s += '"'; break;
      case '\\': v.s += '\\'; break;
      case 'n': v.s += '\n'; break;
      case 't': v.s += '\t'; break;
      default: c.error(std::string("unsupported escape \\") + e);
    }
  }
  return v;
}

inline TomlValue parse_toml_scalar(TomlCursor& c) {
  const std::size_t start = c.pos;
  while (c.pos < c.line.size() && c.line[c.pos] != ',' && c.line[c.pos] != ']' && c.line[c.pos] != '#' &&
         c.line[c.pos] != ' ' && c.line[c.pos] != '\t')
    ++c.pos;
  std::string tok = c.line.substr(start, c.pos - start);
  TomlValue v;
  if (tok == "true" || tok == "false") {
    v.type = TomlValue::Type::Bool;
    v.b = tok == "true";
    return v;
  }
  tok.erase(std::remove(tok.begin(), tok.end(), '_'), tok.end());
  if (tok.empty()) c.error("missing value");
  const bool isFloat = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "+inf" ||
                       tok == "-inf" || tok == "nan";
  std::istringstream is(tok);
  is.imbue(std::locale::classic());
  if (isFloat) {
    v.type = TomlValue::Type::Float;
    if (tok == "inf" || tok == "+inf") v.f = INFINITY;
    else if (tok == "-inf") v.f = -INFINITY;
    else if (!(is >> v.f) || !is.eof()) c.error("bad number '" + tok + "'");
  } else {
    v.type = TomlValue::Type::Int;
    if (!(is >> v.i) || !is.eof()) c.error("bad value '" + tok + "'");
  }
  return v;
}

inline TomlValue parse_toml_value(TomlCursor& c) {
  c.skip_ws();
  if (c.pos >= c.line.size()) c.error("missing value");
  if (c.line[c.pos] == '"') return parse_toml_string(c);
  if (c.line[c.pos] != '[') return parse_toml_scalar(c);
  TomlValue v;
  v.type = TomlValue::Type::Array;
  ++c.pos;
  while (true) {
    c.skip_ws();
    if (c.pos >= c.line.size()) c.error("unterminated array (arrays must fit on one line)");
    if (c.line[c.pos] == ']') {
      ++c.pos;
      break;
    }
    if (c.line[c.pos] == '[') c.error("nested arrays are not supported");
    v.array.push_back(parse_toml_value(c));
    c.skip_ws();
    if (c.pos < c.line.size() && c.line[c.pos] == ',') ++c.pos;
  }
  return v;
}

}  // namespace detail

inline TomlTable parse_toml(std::istream& in) {
  TomlTable out;
  std::string table, line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    detail::TomlCursor c{line, 0, lineNo};
    if (c.at_end_or_comment()) continue;
    if (line[c.pos] == '[') {
      const auto close = line.find(']', c.pos);
      if (close == std::string::npos) c.error("unterminated table header");
      table = line.substr(c.pos + 1, close - c.pos - 1);
      if (table.empty() || !std::all_of(table.begin(), table.end(), detail::bare_key_char)) c.error("bad table name");
      c.pos = close + 1;
      if (!c.at_end_or_comment()) c.error("trailing characters after table header");
      continue;
    }
    const std::size_t ks = c.pos;
    while (c.pos < line.size() && detail::bare_key_char(line[c.pos])) ++c.pos;
    const std::string key = line.substr(ks, c.pos - ks);
    if (key.empty()) c.error("expected a key");
    c.skip_ws();
    if (c.pos >= line.size() || line[c.pos] != '=') c.error("expected '=' after key");
    ++c.pos;
    TomlValue v = detail::parse_toml_value(c);
    if (!c.at_end_or_comment()) c.error("trailing characters after value");
    const std::string full = table.empty() ? key : table + "." + key;
    if (!out.emplace(full, std::move(v)).second) c.error("duplicate key '" + full + "'");
  }
  return out;
}

inline TomlTable parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_usage("cannot open config file " + path.string());
  return parse_toml(in);
}

// ---- run configuration ----

struct MatchingConfig {
  int maxShift = 16;
  double tolerance = 3.0;
  double ratio = 0.75;
  int pairs = 5;
  RecallMode recallMode = RecallMode::MaxKeypoints;

  MatchParams params() const {
    MatchParams p;
    p.tolerance = tolerance;
    p.ratio = ratio;
    p.recallMode = recallMode;
    return p;
  }
  void validate() const {
    if (maxShift < 0 || pairs < 1) fail_usage("matching: max_shift >= 0 and pairs >= 1 required");
    if (!(tolerance > 0.0)) fail_usage("matching: tolerance must be > 0");
    if (!(ratio > 0.0 && ratio <= 1.0)) fail_usage("matching: ratio must be in (0, 1]");
  }
};

/// Ranges the study draws per-model training settings from.
struct StudyConfig {
  int models = 100;
  double lrMin = 1e-4;
  double lrMax = 3e-3;  // log-uniform
  double gammaMin = 0.0;
  double gammaMax = 4.0;  // uniform
  int epochsMin = 1;
  int epochsMax = 4;  // uniform integer
  std::vector<int> patchSizes{32, 48, 64};
  int stepsPerEpoch = 25;
  // Synthetic gallery used when no image directories are configured.
  int syntheticImages = 24;
  int imageSize = 128;
  double noiseSigma = 25.0 / 255.0;

  void validate() const {
    if (models < 1) fail_usage("study: models must be >= 1");
    if (!(lrMin > 0.0 && lrMax >= lrMin)) fail_usage("study: need 0 < lr_min <= lr_max");
    if (!(gammaMin >= 0.0 && gammaMax >= gammaMin)) fail_usage("study: need 0 <= gamma_min <= gamma_max");
    if (epochsMin < 1 || epochsMax < epochsMin) fail_usage("study: need 1 <= epochs_min <= epochs_max");
    if (patchSizes.empty()) fail_usage("study: patch_sizes must not be empty");
    for (int p : patchSizes)
      if (p < 8 || p % 2) fail_usage("study: patch sizes must be even and >= 8");
    if (stepsPerEpoch < 1) fail_usage("study: steps_per_epoch must be >= 1");
    if (syntheticImages < 4 || imageSize < 64) fail_usage("study: synthetic_images >= 4 and image_size >= 64 required");
    if (!(noiseSigma >= 0.0)) fail_usage("study: noise_sigma must be >= 0");
  }
};

struct RunConfig {
  std::filesystem::path trainDir;
  std::filesystem::path testDir;
  std::filesystem::path outputDir = "runs";
  ArchSpec arch;
  TrainConfig train = [] {
    TrainConfig t;
    t.splitRatio = 0.75;
    return t;
  }();
  GuidedParams guided;
  std::vector<BaselineSpec> baselines = default_baselines();
  MatchingConfig matching;
  GAConfig ga;
  StudyConfig study;
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const {
    arch.validate();
    train.validate();
    guided.validate();
    for (const auto& b : baselines) b.validate();
    matching.validate();
    ga.validate();
    study.validate();
    if (jobs < 1) fail_usage("jobs must be >= 1");
  }

  /// Referenced directories must exist.
  void validate_paths() const {
    for (const auto* p : {&trainDir, &testDir})
      if (!p->empty() && !std::filesystem::is_directory(*p)) fail_data("directory not found: " + p->string());
  }
};

inline void apply_toml(RunConfig& cfg, const TomlTable& t) {
  for (const auto& [key, v] : t) {
    auto num = [&] { return v.as_number(key); };
    auto integer = [&] { return static_cast<int>(v.as_int(key)); };
    if (key == "seed") {
      if (v.as_int(key) < 0) fail_usage("config: seed must be >= 0");
      cfg.seed = static_cast<std::uint64_t>(v.as_int(key));
    } else if (key == "jobs") cfg.jobs = integer();
    else if (key == "paths.train_dir") cfg.trainDir = v.as_string(key);
    else if (key == "paths.test_dir") cfg.testDir = v.as_string(key);
    else if (key == "paths.output_dir") cfg.outputDir = v.as_string(key);
    else if (key == "model.levels") cfg.arch.levels = integer();
    else if (key == "model.channels") cfg.arch.baseChannels = integer();
    else if (key == "model.kernel") cfg.arch.kernel = integer();
    else if (key == "train.split_ratio") cfg.train.splitRatio = num();
    else if (key == "train.epochs") cfg.train.epochs = integer();
    else if (key == "train.steps_per_epoch") cfg.train.stepsPerEpoch = integer();
    else if (key == "train.learning_rate") cfg.train.learningRate = num();
    else if (key == "train.batch_size") cfg.train.batchSize = integer();
    else if (key == "train.gamma") cfg.train.gamma = num();
    else if (key == "train.patch_size") cfg.train.patchSize = integer();
    else if (key == "train.gamma_schedule") {
      const auto& s = v.as_string(key);
      if (s == "constant") cfg.train.schedule = GammaSchedule::Constant;
      else if (s == "ramp") cfg.train.schedule = GammaSchedule::LinearRamp;
      else fail_usage("config: train.gamma_schedule must be \"constant\" or \"ramp\"");
    } else if (key == "guided.radius_detail") cfg.guided.radiusDetail = integer();
    else if (key == "guided.eps_detail") cfg.guided.epsDetail = num();
    else if (key == "guided.radius_mask") cfg.guided.radiusMask = integer();
    else if (key == "guided.eps_mask") cfg.guided.epsMask = num();
    else if (key == "baselines.specs") {
      if (v.type != TomlValue::Type::Array) fail_usage("config: baselines.specs must be an array of strings");
      cfg.baselines.clear();
      for (const auto& e : v.array) cfg.baselines.push_back(parse_baseline_spec(e.as_string(key)));
    } else if (key == "matching.max_shift") cfg.matching.maxShift = integer();
    else if (key == "matching.tolerance") cfg.matching.tolerance = num();
    else if (key == "matching.ratio") cfg.matching.ratio = num();
    else if (key == "matching.pairs") cfg.matching.pairs = integer();
    else if (key == "matching.recall_mode") {
      const auto& s = v.as_string(key);
      if (s == "max_keypoints") cfg.matching.recallMode = RecallMode::MaxKeypoints;
      else if (s == "correspondences") cfg.matching.recallMode = RecallMode::Correspondences;
      else fail_usage("config: matching.recall_mode must be \"max_keypoints\" or \"correspondences\"");
    } else if (key == "ga.population") cfg.ga.population = integer();
    else if (key == "ga.generations") cfg.ga.generations = integer();
    else if (key == "ga.tournament") cfg.ga.tournament = integer();
    else if (key == "ga.crossover_rate") cfg.ga.crossoverRate = num();
    else if (key == "ga.mutation_scale") cfg.ga.mutationScale = num();
    else if (key == "ga.elitism") cfg.ga.elitism = integer();
    else if (key == "ga.outcome") cfg.ga.outcome = parse_outcome(v.as_string(key));
    else if (key == "study.models") cfg.study.models = integer();
    else if (key == "study.lr_min") cfg.study.lrMin = num();
    else if (key == "study.lr_max") cfg.study.lrMax = num();
    else if (key == "study.gamma_min") cfg.study.gammaMin = num();
    else if (key == "study.gamma_max") cfg.study.gammaMax = num();
    else if (key == "study.epochs_min") cfg.study.epochsMin = integer();
    else if (key == "study.epochs_max") cfg.study.epochsMax = integer();
    else if (key == "study.steps_per_epoch") cfg.study.stepsPerEpoch = integer();
    else if (key == "study.synthetic_images") cfg.study.syntheticImages = integer();
    else if (key == "study.image_size") cfg.study.imageSize = integer();
    else if (key == "study.noise_sigma") cfg.study.noiseSigma = num();
    else if (key == "study.patch_sizes") {
      if (v.type != TomlValue::Type::Array) fail_usage("config: study.patch_sizes must be an array of integers");
      cfg.study.patchSizes.clear();
      for (const auto& e : v.array) cfg.study.patchSizes.push_back(static_cast<int>(e.as_int(key)));
    } else {
      fail_usage("config: unknown key '" + key + "'");
    }
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg;
  apply_toml(cfg, parse_toml_file(path));
  return cfg;
}

// ---- dataset ----

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  bool emptyTest = false;  // M = 1 leaves nothing held out
};

/// Seeded shuffle of indices; the first ceil(M * N) go to training.
inline DatasetSplit split_dataset(std::size_t count, double m, std::uint64_t seed) {
  if (!(m >= 0.5 && m <= 1.0)) fail_usage("split ratio M must lie in [0.5, 1]");
  if (count < 2) fail_data("split_dataset needs at least 2 images");
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = count - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> d(0, i);
    std::swap(idx[i], idx[d(rng)]);
  }
  const auto nTrain = static_cast<std::size_t>(std::ceil(m * static_cast<double>(count) - 1e-9));
  DatasetSplit s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nTrain));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(nTrain), idx.end());
  s.emptyTest = s.test.empty();
  return s;
}

inline bool is_image_file(const std::filesystem::path& p) {
  const auto ext = detail::lower_ext(p);
  if (ext != ".png" && ext != ".pgm" && ext != ".ppm" && ext != ".pnm") return false;
  const auto stem = p.stem().string();
  return !(stem.size() > 5 && stem.ends_with(".mask"));
}

/// Image files in a directory, sorted by name; mask sidecars are skipped.
inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail_data("directory not found: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

/// Loads an image as single-channel luminance.
inline ImageF load_gray(const std::filesystem::path& path) {
  ImageF img = load_image(path);
  return img.channels() == 1 ? img : to_luminance(img);
}

}  // namespace sonardn
