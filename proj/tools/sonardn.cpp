#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sonardn/baselines.hpp"
#include "sonardn/blind_quality.hpp"
#include "sonardn/config.hpp"
#include "sonardn/denoiser.hpp"
#include "sonardn/guided.hpp"
#include "sonardn/image_io.hpp"
#include "sonardn/matching.hpp"
#include "sonardn/metrics.hpp"
#include "sonardn/selection.hpp"
#include "sonardn/spectrum.hpp"
#include "sonardn/study.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sonardn;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
  std::string runId;
  bool force = false;
  CLI::Option* seedOpt = nullptr;
  CLI::Option* jobsOpt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "TOML run configuration")->check(CLI::ExistingFile);
  c.seedOpt = sub->add_option("--seed", c.seed, "global seed (overrides the config)");
  c.jobsOpt = sub->add_option("--jobs", c.jobs, "worker thread cap")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, "output root (default: paths.output_dir)");
  sub->add_option("--run-id", c.runId, "run directory name under the output root");
  sub->add_flag("--force", c.force, "replace an existing run directory");
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seedOpt->count()) cfg.seed = c.seed;
  if (c.jobsOpt->count()) cfg.jobs = c.jobs;
  return cfg;
}

/// Creates <out>/<run id>; refuses to reuse a non-empty directory without --force.
fs::path prepare_run_dir(const Common& c, const RunConfig& cfg, const std::string& command) {
  const fs::path root = c.out.empty() ? cfg.outputDir : fs::path(c.out);
  const std::string id = c.runId.empty() ? command + "-seed" + std::to_string(cfg.seed) : c.runId;
  const fs::path dir = root / id;
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!c.force) fail_data("run directory " + dir.string() + " exists; pass --force or choose another --run-id");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail_data("cannot write " + p.string());
  return out;
}

std::vector<fs::path> collect_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& s : inputs) {
    const fs::path p(s);
    if (fs::is_directory(p)) {
      const auto files = list_images(p);
      out.insert(out.end(), files.begin(), files.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      fail_data("input not found: " + s);
    }
  }
  if (out.empty()) fail_data("no input images");
  return out;
}

/// File stem up to the first dot, so "a.stage1.png" and "a.png" share "a".
std::string base_stem(const fs::path& p) {
  const std::string name = p.filename().string();
  return name.substr(0, name.find('.'));
}

std::vector<ImageF> synthetic_gallery(const RunConfig& cfg, int n, std::vector<ImageF>* clean = nullptr) {
  std::vector<ImageF> out;
  const int s = cfg.study.imageSize;
  for (int i = 0; i < n; ++i) {
    ImageF c = make_cluttered_scene(s, s, mix_seed(cfg.seed, 1, static_cast<std::uint64_t>(i)));
    out.push_back(add_synthetic_noise(c, NoiseSpec{cfg.study.noiseSigma, 0, 0},
                                      mix_seed(cfg.seed, 2, static_cast<std::uint64_t>(i))));
    if (clean) clean->push_back(std::move(c));
  }
  return out;
}

void print_summary(json j) {
  j["status"] = "ok";
  std::cout << j.dump() << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- train ----

struct TrainOpts {
  std::string images;
  int synthetic = 0;
  std::optional<int> epochs, steps, batch, patch, levels, channels;
  std::optional<double> lr, gamma, split;
  std::string schedule;
};

void cmd_train(const Common& c, const TrainOpts& o) {
  RunConfig cfg = load_config(c);
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.steps) cfg.train.stepsPerEpoch = *o.steps;
  if (o.batch) cfg.train.batchSize = *o.batch;
  if (o.patch) cfg.train.patchSize = *o.patch;
  if (o.levels) cfg.arch.levels = *o.levels;
  if (o.channels) cfg.arch.baseChannels = *o.channels;
  if (o.lr) cfg.train.learningRate = *o.lr;
  if (o.gamma) cfg.train.gamma = *o.gamma;
  if (o.split) cfg.train.splitRatio = *o.split;
  if (o.schedule == "ramp") cfg.train.schedule = GammaSchedule::LinearRamp;
  else if (o.schedule == "constant") cfg.train.schedule = GammaSchedule::Constant;
  else if (!o.schedule.empty()) fail_usage("--gamma-schedule must be constant or ramp");
  if (!o.images.empty()) cfg.trainDir = o.images;
  cfg.validate();
  cfg.validate_paths();

  std::vector<ImageF> images;
  std::vector<std::string> names;
  if (o.synthetic > 0) {
    images = synthetic_gallery(cfg, o.synthetic);
    for (int i = 0; i < o.synthetic; ++i) names.push_back("synthetic_" + std::to_string(i));
  } else {
    if (cfg.trainDir.empty()) fail_usage("train: give --images DIR, paths.train_dir or --synthetic N");
    for (const auto& p : list_images(cfg.trainDir)) {
      images.push_back(load_gray(p));
      names.push_back(p.filename().string());
    }
    if (images.empty()) fail_data("train: no images in " + cfg.trainDir.string());
  }
  const fs::path dir = prepare_run_dir(c, cfg, "train");

  std::vector<ImageF> trainSet;
  {
    auto split = open_out(dir / "split.csv");
    split << "image,set\n";
    if (images.size() >= 2) {
      const auto s = split_dataset(images.size(), cfg.train.splitRatio, cfg.seed);
      if (s.emptyTest) std::cerr << "warning: split ratio M = 1 leaves no held-out images\n";
      std::vector<std::string> set(images.size(), "test");
      for (auto i : s.train) {
        set[i] = "train";
        trainSet.push_back(images[i]);
      }
      for (std::size_t i = 0; i < images.size(); ++i) split << csv::quote(names[i]) << "," << set[i] << "\n";
    } else {
      trainSet = images;
      split << csv::quote(names[0]) << ",train\n";
    }
  }

  cfg.train.seed = cfg.seed;
  DenoiserModel model = build_model(cfg.arch, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto history = train(model, trainSet, cfg.train);
  const double secs = seconds_since(t0);
  save_checkpoint(model, dir / "model.sdn");
  auto log = open_out(dir / "train_log.csv");
  log << "epoch,loss1,loss2,total,gamma\n";
  for (const auto& e : history)
    log << e.epoch << "," << csv::num(e.loss1) << "," << csv::num(e.loss2) << "," << csv::num(e.total) << ","
        << csv::num(e.gamma) << "\n";
  print_summary({{"command", "train"},
                 {"run_dir", dir.string()},
                 {"model", (dir / "model.sdn").string()},
                 {"train_images", trainSet.size()},
                 {"steps", static_cast<long long>(cfg.train.epochs) * cfg.train.stepsPerEpoch},
                 {"final_loss", history.empty() ? 0.0 : history.back().total},
                 {"seconds", secs}});
}

// ---- denoise / refine ----

struct DenoiseOpts {
  std::string model;
  std::vector<std::string> inputs;
  bool alsoRefine = false;
};

void cmd_denoise(const Common& c, const DenoiseOpts& o) {
  RunConfig cfg = load_config(c);
  cfg.validate();
  const DenoiserModel model = load_checkpoint(fs::path(o.model));
  const auto inputs = collect_inputs(o.inputs);
  const fs::path dir = prepare_run_dir(c, cfg, "denoise");
  json outputs = json::array();
  for (const auto& p : inputs) {
    const ImageF noisy = load_gray(p);
    const ImageF stage1 = denoise(model, noisy);
    const fs::path s1 = dir / (base_stem(p) + ".stage1.png");
    save_image(stage1, s1);
    outputs.push_back(s1.string());
    if (o.alsoRefine) {
      const fs::path fin = dir / (base_stem(p) + ".final.png");
      save_image(refine(noisy, stage1, cfg.guided), fin);
      outputs.push_back(fin.string());
    }
  }
  print_summary({{"command", "denoise"}, {"run_dir", dir.string()}, {"outputs", outputs}});
}

struct RefineOpts {
  std::string raw, stage1;
  bool diagnostics = false;
  std::optional<int> radiusDetail, radiusMask;
  std::optional<double> epsDetail, epsMask;
};

void cmd_refine(const Common& c, const RefineOpts& o) {
  RunConfig cfg = load_config(c);
  if (o.radiusDetail) cfg.guided.radiusDetail = *o.radiusDetail;
  if (o.radiusMask) cfg.guided.radiusMask = *o.radiusMask;
  if (o.epsDetail) cfg.guided.epsDetail = *o.epsDetail;
  if (o.epsMask) cfg.guided.epsMask = *o.epsMask;
  cfg.validate();
  const ImageF raw = load_gray(o.raw), stage1 = load_gray(o.stage1);
  const fs::path dir = prepare_run_dir(c, cfg, "refine");
  const auto res = refine_detailed(raw, stage1, cfg.guided);
  const std::string stem = base_stem(o.raw);
  json outputs = json::array();
  save_image(res.output, dir / (stem + ".final.png"));
  outputs.push_back((dir / (stem + ".final.png")).string());
  if (o.diagnostics) {
    save_image(res.alpha, dir / (stem + ".alpha.png"), BitDepth::Eight, false);
    save_binary_png(res.saliency, raw.width(), raw.height(), dir / (stem + ".saliency.png"));
    outputs.push_back((dir / (stem + ".alpha.png")).string());
    outputs.push_back((dir / (stem + ".saliency.png")).string());
  }
  print_summary({{"command", "refine"}, {"run_dir", dir.string()}, {"outputs", outputs}});
}

// ---- baseline ----

struct BaselineOpts {
  std::vector<std::string> inputs;
  std::vector<std::string> specs;
};

void cmd_baseline(const Common& c, const BaselineOpts& o) {
  RunConfig cfg = load_config(c);
  if (!o.specs.empty()) {
    cfg.baselines.clear();
    for (const auto& s : o.specs) cfg.baselines.push_back(parse_baseline_spec(s));
  }
  cfg.validate();
  const auto inputs = collect_inputs(o.inputs);
  const fs::path dir = prepare_run_dir(c, cfg, "baseline");
  std::map<std::string, int> seen;
  std::vector<std::string> labels;
  for (const auto& b : cfg.baselines) {
    std::string name = baseline_name(b.kind);
    const int k = seen[name]++;
    if (k > 0) name += "_" + std::to_string(k);
    labels.push_back(name);
  }
  json outputs = json::array();
  for (const auto& p : inputs) {
    const ImageF img = load_gray(p);
    for (std::size_t i = 0; i < cfg.baselines.size(); ++i) {
      const fs::path out = dir / (base_stem(p) + "." + labels[i] + ".png");
      save_image(apply_baseline(img, cfg.baselines[i]), out);
      outputs.push_back(out.string());
    }
  }
  json specs = json::array();
  for (const auto& b : cfg.baselines) specs.push_back(b.to_string());
  print_summary({{"command", "baseline"}, {"run_dir", dir.string()}, {"specs", specs}, {"outputs", outputs}});
}

// ---- metrics ----

struct MetricsOpts {
  std::vector<std::string> inputs;
  std::string reference, referenceDir, blindModel, blindCorpus, method = "input";
};

std::optional<fs::path> find_reference(const fs::path& dir, const fs::path& input) {
  for (const char* ext : {".png", ".pgm", ".ppm", ".pnm"}) {
    const fs::path cand = dir / (base_stem(input) + ext);
    if (fs::exists(cand)) return cand;
  }
  return std::nullopt;
}

void cmd_metrics(const Common& c, const MetricsOpts& o) {
  RunConfig cfg = load_config(c);
  cfg.validate();
  if (!o.reference.empty() && !o.referenceDir.empty()) fail_usage("give either --reference or --reference-dir");
  if (!o.blindModel.empty() && !o.blindCorpus.empty()) fail_usage("give either --blind-model or --blind-corpus");
  const auto inputs = collect_inputs(o.inputs);
  std::optional<BlindModel> blind;
  if (!o.blindModel.empty()) blind = load_blind_model(o.blindModel);
  std::vector<ImageF> corpus;
  if (!o.blindCorpus.empty())
    for (const auto& p : collect_inputs({o.blindCorpus})) corpus.push_back(load_gray(p));
  const fs::path dir = prepare_run_dir(c, cfg, "metrics");
  if (!corpus.empty()) {
    blind = fit_blind_model(corpus);
    save_blind_model(*blind, dir / "blind.sdb");
  }
  std::optional<ImageF> fixedRef;
  if (!o.reference.empty()) fixedRef = load_gray(o.reference);
  std::vector<MetricReport> rows;
  for (const auto& p : inputs) {
    const ImageF img = load_gray(p);
    std::optional<ImageF> ref = fixedRef;
    std::optional<std::string> refId = o.reference.empty() ? std::nullopt : std::optional(o.reference);
    if (!o.referenceDir.empty()) {
      const auto r = find_reference(o.referenceDir, p);
      if (!r) fail_data("no reference for " + p.string() + " in " + o.referenceDir);
      ref = load_gray(*r);
      refId = r->string();
    }
    rows.push_back(metric_report(img, ref ? &*ref : nullptr, blind ? &*blind : nullptr, o.method,
                                 p.filename().string(), refId));
  }
  auto out = open_out(dir / "metrics.csv");
  write_report_csv(rows, out);
  print_summary({{"command", "metrics"}, {"run_dir", dir.string()}, {"rows", rows.size()},
                 {"csv", (dir / "metrics.csv").string()}});
}

// ---- psd ----

void cmd_psd(const Common& c, const std::vector<std::string>& inputs) {
  RunConfig cfg = load_config(c);
  cfg.validate();
  const auto files = collect_inputs(inputs);
  const fs::path dir = prepare_run_dir(c, cfg, "psd");
  json outputs = json::array();
  for (const auto& p : files) {
    const auto r = psd_map(load_gray(p));
    const std::string stem = base_stem(p);
    auto out = open_out(dir / (stem + ".psd.csv"));
    out << "freq_norm,power\n";
    for (const auto& b : r.radial) out << csv::num(b.freqNorm) << "," << csv::num(b.power) << "\n";
    save_image(r.display, dir / (stem + ".psd.png"));
    outputs.push_back((dir / (stem + ".psd.csv")).string());
  }
  print_summary({{"command", "psd"}, {"run_dir", dir.string()}, {"outputs", outputs}});
}

// ---- gen-pairs / match-eval ----

struct PairOpts {
  std::vector<std::string> inputs;
  int synthetic = 0;
  std::optional<int> count, maxShift;
  std::optional<double> noise;
};

void cmd_gen_pairs(const Common& c, const PairOpts& o) {
  RunConfig cfg = load_config(c);
  if (o.count) cfg.matching.pairs = *o.count;
  if (o.maxShift) cfg.matching.maxShift = *o.maxShift;
  cfg.validate();
  std::vector<ImageF> sources;
  double noise = o.noise.value_or(0.0);
  if (o.synthetic > 0) {
    std::vector<ImageF> clean;
    synthetic_gallery(cfg, o.synthetic, &clean);
    sources = std::move(clean);
    if (!o.noise) noise = cfg.study.noiseSigma;
  } else {
    if (o.inputs.empty()) fail_usage("gen-pairs: give --input or --synthetic N");
    for (const auto& p : collect_inputs(o.inputs)) sources.push_back(load_gray(p));
  }
  if (noise < 0.0) fail_usage("--noise must be >= 0");
  const fs::path dir = prepare_run_dir(c, cfg, "gen-pairs");
  auto table = open_out(dir / "pairs.csv");
  table << "pair,a,b,tx,ty\n";
  for (int k = 0; k < cfg.matching.pairs; ++k) {
    const auto u = static_cast<std::uint64_t>(k);
    auto p = gen_translated_pair(sources[u % sources.size()], cfg.matching.maxShift, mix_seed(cfg.seed, 3, u));
    if (noise > 0.0) {
      p.imgA = add_synthetic_noise(p.imgA, NoiseSpec{noise, 0, 0}, mix_seed(cfg.seed, 4, u));
      p.imgB = add_synthetic_noise(p.imgB, NoiseSpec{noise, 0, 0}, mix_seed(cfg.seed, 5, u));
    }
    char name[32];
    std::snprintf(name, sizeof name, "pair_%03d", k);
    const std::string a = std::string(name) + "_a.png", b = std::string(name) + "_b.png";
    save_image(p.imgA, dir / a);
    save_image(p.imgB, dir / b);
    table << name << "," << a << "," << b << "," << p.tx << "," << p.ty << "\n";
  }
  print_summary({{"command", "gen-pairs"}, {"run_dir", dir.string()}, {"pairs", cfg.matching.pairs},
                 {"csv", (dir / "pairs.csv").string()}});
}

struct MatchOpts {
  std::string pairs, model, baseline, recallMode;
  std::optional<double> tolerance, ratio;
  bool visualize = false;
};

void cmd_match_eval(const Common& c, const MatchOpts& o) {
  RunConfig cfg = load_config(c);
  if (o.tolerance) cfg.matching.tolerance = *o.tolerance;
  if (o.ratio) cfg.matching.ratio = *o.ratio;
  if (o.recallMode == "correspondences") cfg.matching.recallMode = RecallMode::Correspondences;
  else if (o.recallMode == "max_keypoints") cfg.matching.recallMode = RecallMode::MaxKeypoints;
  else if (!o.recallMode.empty()) fail_usage("--recall-mode must be max_keypoints or correspondences");
  cfg.validate();
  if (!o.model.empty() && !o.baseline.empty()) fail_usage("give either --model or --baseline");
  const auto t = csv::read(fs::path(o.pairs));
  const fs::path base = fs::path(o.pairs).parent_path();
  const int ca = t.column("a"), cb = t.column("b"), ctx = t.column("tx"), cty = t.column("ty");
  std::vector<TranslatedPair> pairs;
  for (const auto& row : t.rows) {
    TranslatedPair p;
    p.imgA = load_gray(base / row[ca]);
    p.imgB = load_gray(base / row[cb]);
    p.tx = static_cast<int>(csv::parse_num(row[ctx]));
    p.ty = static_cast<int>(csv::parse_num(row[cty]));
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) fail_data("match-eval: no pairs in " + o.pairs);

  std::optional<DenoiserModel> model;
  if (!o.model.empty()) model = load_checkpoint(fs::path(o.model));
  std::optional<BaselineSpec> spec;
  if (!o.baseline.empty()) spec = parse_baseline_spec(o.baseline);
  auto process = [&](const ImageF& img) {
    if (model) return two_stage(*model, img, cfg.guided);
    if (spec) return apply_baseline(img, *spec);
    return img;
  };
  for (auto& p : pairs) {
    p.imgA = process(p.imgA);
    p.imgB = process(p.imgB);
  }
  const fs::path dir = prepare_run_dir(c, cfg, "match-eval");
  const auto res = evaluate_set(pairs, cfg.matching.params(), cfg.jobs);
  auto out = open_out(dir / "match.csv");
  write_match_csv(res, out);
  if (o.visualize)
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      char name[40];
      std::snprintf(name, sizeof name, "pair_%03zu.matches.png", i);
      save_image(render_matches(pairs[i].imgA, pairs[i].imgB, res.rows[i]), dir / name);
    }
  print_summary({{"command", "match-eval"},
                 {"run_dir", dir.string()},
                 {"pairs", pairs.size()},
                 {"mean_recall", res.meanRecall},
                 {"mean_precision", res.meanPrecision},
                 {"mean_time_ms", res.meanTimeMs},
                 {"csv", (dir / "match.csv").string()}});
}

// ---- study / selection ----

struct StudyOpts {
  std::optional<int> models;
  std::string images, testImages;
};

void write_correlation_outputs(const CorrelationMatrix& m, const fs::path& dir) {
  auto out = open_out(dir / "correlation.csv");
  write_correlation_csv(m, out);
  save_image(render_heatmap(m), dir / "correlation.png");
}

void cmd_study(const Common& c, const StudyOpts& o) {
  RunConfig cfg = load_config(c);
  if (o.models) cfg.study.models = *o.models;
  if (!o.images.empty()) cfg.trainDir = o.images;
  if (!o.testImages.empty()) cfg.testDir = o.testImages;
  cfg.validate();
  cfg.validate_paths();
  const auto t0 = std::chrono::steady_clock::now();
  const StudyData data = prepare_study_data(cfg);
  if (data.emptyTestWarning) std::cerr << "warning: split ratio M = 1 leaves no held-out images\n";
  const fs::path dir = prepare_run_dir(c, cfg, "study");
  const StudyResult res = run_study(data, cfg);
  {
    auto out = open_out(dir / "models.csv");
    write_study_models_csv(res, out);
  }
  {
    auto out = open_out(dir / "scores.csv");
    write_score_table_csv(res.table, out);
  }
  {
    auto out = open_out(dir / "matching.csv");
    write_study_matching_csv(res, out);
  }
  json summary{{"command", "study"},
               {"run_dir", dir.string()},
               {"models", res.models.size()},
               {"synthetic", data.synthetic},
               {"train_images", data.train.size()},
               {"test_images", data.test.size()},
               {"pairs", data.pairs.size()}};
  if (res.correlation) {
    write_correlation_outputs(*res.correlation, dir);
  } else {
    std::cerr << "warning: correlation matrix skipped: " << res.correlationError << "\n";
    summary["correlation_skipped"] = res.correlationError;
  }
  if (res.table.rows.size() >= 1) {
    ScoreTable t = res.table;
    summary["best_uniform"] = select_best_model(t, WeightVector{});
  }
  summary["seconds"] = seconds_since(t0);
  print_summary(summary);
}

struct GaOpts {
  std::string table, outcome;
  std::optional<int> population, generations, elitism, tournament;
  std::optional<double> crossover, mutation;
};

void cmd_tune_weights(const Common& c, const GaOpts& o) {
  RunConfig cfg = load_config(c);
  if (o.population) cfg.ga.population = *o.population;
  if (o.generations) cfg.ga.generations = *o.generations;
  if (o.elitism) cfg.ga.elitism = *o.elitism;
  if (o.tournament) cfg.ga.tournament = *o.tournament;
  if (o.crossover) cfg.ga.crossoverRate = *o.crossover;
  if (o.mutation) cfg.ga.mutationScale = *o.mutation;
  if (!o.outcome.empty()) cfg.ga.outcome = parse_outcome(o.outcome);
  cfg.ga.seed = cfg.seed;
  cfg.ga.jobs = cfg.jobs;
  cfg.validate();
  const ScoreTable t = read_score_table_csv(o.table);
  const auto res = ga_tune_weights(t, cfg.ga);
  const fs::path dir = prepare_run_dir(c, cfg, "tune-weights");
  {
    auto out = open_out(dir / "weights.csv");
    write_weights_csv(res.weights, out);
  }
  {
    auto out = open_out(dir / "ga_log.csv");
    write_ga_log_csv(res, out);
  }
  json w;
  for (std::size_t i = 0; i < kMetricCount; ++i) w[kMetricNames[i]] = res.weights.w[i];
  print_summary({{"command", "tune-weights"},
                 {"run_dir", dir.string()},
                 {"fitness", res.fitness},
                 {"weights", w},
                 {"csv", (dir / "weights.csv").string()}});
}

WeightVector weights_or_uniform(const std::string& path) {
  return path.empty() ? WeightVector{} : read_weights_csv(path);
}

void cmd_select(const Common& c, const std::string& table, const std::string& weights) {
  RunConfig cfg = load_config(c);
  cfg.validate();
  ScoreTable t = read_score_table_csv(table);
  const WeightVector w = weights_or_uniform(weights);
  const std::string best = select_best_model(t, w);
  const fs::path dir = prepare_run_dir(c, cfg, "select");
  auto out = open_out(dir / "selection.csv");
  write_score_table_csv(t, out);
  print_summary({{"command", "select"}, {"run_dir", dir.string()}, {"best_model", best},
                 {"csv", (dir / "selection.csv").string()}});
}

/// Grouped bars (recall then precision per model) on a light background.
ImageF render_bars(const ScoreTable& t) {
  const int barW = 6, gap = 4, h = 120;
  const int w = static_cast<int>(t.rows.size()) * (2 * barW + gap) + gap;
  ImageF img(w, h, 1, 1.0);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const int x0 = gap + static_cast<int>(i) * (2 * barW + gap);
    const double vals[2] = {t.rows[i].meanRecall, t.rows[i].meanPrecision};
    const double tone[2] = {0.55, 0.15};
    for (int b = 0; b < 2; ++b) {
      const int top = h - static_cast<int>(std::lround(std::clamp(vals[b], 0.0, 1.0) * (h - 1)));
      for (int y = top; y < h; ++y)
        for (int x = 0; x < barW; ++x) img.at(x0 + b * barW + x, y) = tone[b];
    }
  }
  return img;
}

void cmd_report(const Common& c, const std::string& table, const std::string& weights) {
  RunConfig cfg = load_config(c);
  cfg.validate();
  ScoreTable t = read_score_table_csv(table);
  const WeightVector w = weights_or_uniform(weights);
  const std::string best = select_best_model(t, w);
  const fs::path dir = prepare_run_dir(c, cfg, "report");
  {
    auto out = open_out(dir / "report.csv");
    out << "model,psnr,ssim,epi,tv,blind_quality,recall,precision,score\n";
    for (const auto& r : t.rows) {
      out << csv::quote(r.modelId);
      for (double v : r.metrics) out << "," << csv::num(v);
      out << "," << csv::num(r.meanRecall) << "," << csv::num(r.meanPrecision) << "," << csv::num(r.score) << "\n";
    }
  }
  {
    auto out = open_out(dir / "bars.csv");
    out << "model,series,value\n";
    for (const auto& r : t.rows) {
      out << csv::quote(r.modelId) << ",recall," << csv::num(r.meanRecall) << "\n";
      out << csv::quote(r.modelId) << ",precision," << csv::num(r.meanPrecision) << "\n";
    }
  }
  save_image(render_bars(t), dir / "bars.png");
  json summary{{"command", "report"}, {"run_dir", dir.string()}, {"best_model", best}};
  try {
    write_correlation_outputs(study_correlation(t), dir);
  } catch (const Error& e) {
    std::cerr << "warning: correlation matrix skipped: " << e.what() << "\n";
    summary["correlation_skipped"] = e.what();
  }
  print_summary(summary);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised sonar image denoising and evaluation toolkit"};
  app.require_subcommand(1);
  std::function<void()> run;

  Common cTrain, cDenoise, cRefine, cBaseline, cMetrics, cPsd, cPairs, cMatch, cStudy, cTune, cSelect, cReport;

  TrainOpts train;
  auto* s = app.add_subcommand("train", "train a denoiser on a folder of noisy images");
  add_common(s, cTrain);
  s->add_option("--images", train.images, "training image directory");
  s->add_option("--synthetic", train.synthetic, "train on N synthetic noisy scenes instead");
  s->add_option("--epochs", train.epochs);
  s->add_option("--steps", train.steps, "steps per epoch");
  s->add_option("--batch", train.batch);
  s->add_option("--patch", train.patch);
  s->add_option("--levels", train.levels);
  s->add_option("--channels", train.channels);
  s->add_option("--lr", train.lr);
  s->add_option("--gamma", train.gamma);
  s->add_option("--split", train.split, "training fraction M in [0.5, 1]");
  s->add_option("--gamma-schedule", train.schedule, "constant or ramp");
  s->callback([&] { run = [&] { cmd_train(cTrain, train); }; });

  DenoiseOpts den;
  s = app.add_subcommand("denoise", "run a trained model (stage one)");
  add_common(s, cDenoise);
  s->add_option("--model", den.model)->required()->check(CLI::ExistingFile);
  s->add_option("--input", den.inputs, "image files or directories")->required();
  s->add_flag("--refine", den.alsoRefine, "also write the guided refinement");
  s->callback([&] { run = [&] { cmd_denoise(cDenoise, den); }; });

  RefineOpts ref;
  s = app.add_subcommand("refine", "guided refinement of a stage-one output");
  add_common(s, cRefine);
  s->add_option("--raw", ref.raw, "noisy input")->required()->check(CLI::ExistingFile);
  s->add_option("--stage1", ref.stage1, "stage-one output")->required()->check(CLI::ExistingFile);
  s->add_flag("--diagnostics", ref.diagnostics, "also write alpha and saliency maps");
  s->add_option("--radius-detail", ref.radiusDetail);
  s->add_option("--eps-detail", ref.epsDetail);
  s->add_option("--radius-mask", ref.radiusMask);
  s->add_option("--eps-mask", ref.epsMask);
  s->callback([&] { run = [&] { cmd_refine(cRefine, ref); }; });

  BaselineOpts base;
  s = app.add_subcommand("baseline", "apply classical denoisers");
  add_common(s, cBaseline);
  s->add_option("--input", base.inputs)->required();
  s->add_option("--spec", base.specs, "kind[:key=value,...], repeatable");
  s->callback([&] { run = [&] { cmd_baseline(cBaseline, base); }; });

  MetricsOpts met;
  s = app.add_subcommand("metrics", "PSNR, SSIM, EPI, TV and blind quality");
  add_common(s, cMetrics);
  s->add_option("--input", met.inputs)->required();
  s->add_option("--reference", met.reference, "reference image for every input")->check(CLI::ExistingFile);
  s->add_option("--reference-dir", met.referenceDir, "references matched by file stem")->check(CLI::ExistingDirectory);
  s->add_option("--blind-model", met.blindModel)->check(CLI::ExistingFile);
  s->add_option("--blind-corpus", met.blindCorpus, "fit the blind model on these images")->check(CLI::ExistingPath);
  s->add_option("--method", met.method, "label for the method column");
  s->callback([&] { run = [&] { cmd_metrics(cMetrics, met); }; });

  std::vector<std::string> psdInputs;
  s = app.add_subcommand("psd", "power spectral density map and radial profile");
  add_common(s, cPsd);
  s->add_option("--input", psdInputs)->required();
  s->callback([&] { run = [&] { cmd_psd(cPsd, psdInputs); }; });

  PairOpts pairs;
  s = app.add_subcommand("gen-pairs", "translated image pairs with known shifts");
  add_common(s, cPairs);
  s->add_option("--input", pairs.inputs);
  s->add_option("--synthetic", pairs.synthetic, "draw from N synthetic scenes");
  s->add_option("--count", pairs.count, "number of pairs");
  s->add_option("--max-shift", pairs.maxShift);
  s->add_option("--noise", pairs.noise, "independent Gaussian noise sigma per view");
  s->callback([&] { run = [&] { cmd_gen_pairs(cPairs, pairs); }; });

  MatchOpts match;
  s = app.add_subcommand("match-eval", "feature-matching recall and precision");
  add_common(s, cMatch);
  s->add_option("--pairs", match.pairs, "pairs.csv from gen-pairs")->required()->check(CLI::ExistingFile);
  s->add_option("--model", match.model, "denoise and refine each view first")->check(CLI::ExistingFile);
  s->add_option("--baseline", match.baseline, "apply a classical denoiser first");
  s->add_option("--tolerance", match.tolerance);
  s->add_option("--ratio", match.ratio);
  s->add_option("--recall-mode", match.recallMode, "max_keypoints or correspondences");
  s->add_flag("--visualize", match.visualize, "write side-by-side match images");
  s->callback([&] { run = [&] { cmd_match_eval(cMatch, match); }; });

  StudyOpts study;
  s = app.add_subcommand("study", "train and score randomly configured models");
  add_common(s, cStudy);
  s->add_option("--models", study.models);
  s->add_option("--images", study.images, "image directory (default: synthetic gallery)");
  s->add_option("--test-images", study.testImages, "held-out directory (default: split --images)");
  s->callback([&] { run = [&] { cmd_study(cStudy, study); }; });

  GaOpts ga;
  s = app.add_subcommand("tune-weights", "genetic search for metric weights");
  add_common(s, cTune);
  s->add_option("--table", ga.table, "scores.csv from study")->required()->check(CLI::ExistingFile);
  s->add_option("--population", ga.population);
  s->add_option("--generations", ga.generations);
  s->add_option("--elitism", ga.elitism);
  s->add_option("--tournament", ga.tournament);
  s->add_option("--crossover", ga.crossover);
  s->add_option("--mutation", ga.mutation);
  s->add_option("--outcome", ga.outcome, "mean, recall or precision");
  s->callback([&] { run = [&] { cmd_tune_weights(cTune, ga); }; });

  std::string selTable, selWeights;
  s = app.add_subcommand("select", "pick the best model under a weight vector");
  add_common(s, cSelect);
  s->add_option("--table", selTable)->required()->check(CLI::ExistingFile);
  s->add_option("--weights", selWeights, "weights.csv (default: uniform)")->check(CLI::ExistingFile);
  s->callback([&] { run = [&] { cmd_select(cSelect, selTable, selWeights); }; });

  std::string repTable, repWeights;
  s = app.add_subcommand("report", "summary table, bar-chart data and correlation heatmap");
  add_common(s, cReport);
  s->add_option("--table", repTable)->required()->check(CLI::ExistingFile);
  s->add_option("--weights", repWeights)->check(CLI::ExistingFile);
  s->callback([&] { run = [&] { cmd_report(cReport, repTable, repWeights); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  try {
    run();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
