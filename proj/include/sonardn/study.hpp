#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sonardn/blind_quality.hpp"
#include "sonardn/config.hpp"
#include "sonardn/denoiser.hpp"
#include "sonardn/guided.hpp"
#include "sonardn/matching.hpp"
#include "sonardn/metrics.hpp"
#include "sonardn/noise.hpp"
#include "sonardn/parallel.hpp"
#include "sonardn/selection.hpp"
#include "sonardn/synthetic.hpp"

namespace sonardn {

struct StudyImage {
  std::string id;
  ImageF noisy;
  std::optional<ImageF> clean;
};

struct StudyData {
  std::vector<StudyImage> train;
  std::vector<StudyImage> test;
  std::vector<TranslatedPair> pairs;  // noisy matching pairs built from test images
  BlindModel blind;
  bool synthetic = false;
  bool emptyTestWarning = false;
};

inline constexpr int kBlindTile = 64;

/// Half-overlapping square tiles, used to give the blind-quality corpus enough samples.
inline std::vector<ImageF> tile_images(std::span<const ImageF> images, int tile) {
  std::vector<ImageF> out;
  const int step = std::max(1, tile / 2);
  for (const auto& img : images)
    for (int y = 0; y + tile <= img.height(); y += step)
      for (int x = 0; x + tile <= img.width(); x += step) out.push_back(crop(img, x, y, tile, tile));
  return out;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  return rng();
}

/// Builds train/test images, noisy matching pairs and the blind-quality
/// corpus. Without configured directories a synthetic gallery of cluttered
/// scenes with Gaussian noise stands in for the sonar data.
inline StudyData prepare_study_data(const RunConfig& cfg) {
  StudyData d;
  std::vector<StudyImage> all;
  if (cfg.trainDir.empty()) {
    d.synthetic = true;
    const int n = cfg.study.syntheticImages, s = cfg.study.imageSize;
    for (int i = 0; i < n; ++i) {
      StudyImage im;
      char id[32];
      std::snprintf(id, sizeof id, "synthetic_%03d", i);
      im.id = id;
      im.clean = make_cluttered_scene(s, s, mix_seed(cfg.seed, 1, static_cast<std::uint64_t>(i)));
      im.noisy = add_synthetic_noise(*im.clean, NoiseSpec{cfg.study.noiseSigma, 0, 0},
                                     mix_seed(cfg.seed, 2, static_cast<std::uint64_t>(i)));
      all.push_back(std::move(im));
    }
  } else {
    for (const auto& p : list_images(cfg.trainDir)) all.push_back({p.stem().string(), load_gray(p), std::nullopt});
  }

  if (cfg.testDir.empty()) {
    const auto split = split_dataset(all.size(), cfg.train.splitRatio, cfg.seed);
    d.emptyTestWarning = split.emptyTest;
    for (auto i : split.train) d.train.push_back(all[i]);
    for (auto i : split.test) d.test.push_back(all[i]);
  } else {
    d.train = std::move(all);
    for (const auto& p : list_images(cfg.testDir)) d.test.push_back({p.stem().string(), load_gray(p), std::nullopt});
  }
  if (d.train.empty()) fail_data("study: no training images");
  if (d.test.empty()) fail_data("study: no held-out images (set train.split_ratio below 1 or give a test directory)");

  // Pairs come from clean scenes with independent noise per view when
  // available; otherwise both views share the recorded noise.
  for (int k = 0; k < cfg.matching.pairs; ++k) {
    const auto& src = d.test[static_cast<std::size_t>(k) % d.test.size()];
    const ImageF& base = src.clean ? *src.clean : src.noisy;
    auto pair = gen_translated_pair(base, cfg.matching.maxShift, mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(k)));
    if (src.clean) {
      const NoiseSpec ns{cfg.study.noiseSigma, 0, 0};
      pair.imgA = add_synthetic_noise(pair.imgA, ns, mix_seed(cfg.seed, 4, static_cast<std::uint64_t>(k)));
      pair.imgB = add_synthetic_noise(pair.imgB, ns, mix_seed(cfg.seed, 5, static_cast<std::uint64_t>(k)));
    }
    d.pairs.push_back(std::move(pair));
  }

  std::vector<ImageF> corpusSrc;
  for (const auto& im : d.train) corpusSrc.push_back(im.clean ? *im.clean : im.noisy);
  const auto tiles = tile_images(corpusSrc, kBlindTile);
  d.blind = fit_blind_model(tiles);
  return d;
}

struct ModelDraw {
  std::string id;
  double learningRate = 0.0;
  double gamma = 0.0;
  int epochs = 0;
  int patchSize = 0;
  std::uint64_t seed = 0;
};

/// lr log-uniform, gamma uniform, epochs uniform integer, patch size uniform
/// over the configured list.
inline ModelDraw draw_model(const StudyConfig& sc, std::uint64_t seed, int index) {
  std::mt19937_64 rng(mix_seed(seed, 6, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelDraw m;
  char id[32];
  std::snprintf(id, sizeof id, "model_%03d", index);
  m.id = id;
  m.learningRate = std::exp(std::log(sc.lrMin) + u(rng) * (std::log(sc.lrMax) - std::log(sc.lrMin)));
  m.gamma = sc.gammaMin + u(rng) * (sc.gammaMax - sc.gammaMin);
  m.epochs = std::uniform_int_distribution<int>(sc.epochsMin, sc.epochsMax)(rng);
  m.patchSize = sc.patchSizes[std::uniform_int_distribution<std::size_t>(0, sc.patchSizes.size() - 1)(rng)];
  m.seed = rng();
  return m;
}

/// Stage-one network output followed by the guided refinement.
inline ImageF two_stage(const DenoiserModel& model, const ImageF& noisy, const GuidedParams& gp) {
  return refine(noisy, denoise(model, noisy), gp);
}

struct ModelOutcome {
  ModelDraw draw;
  ModelRow row;
  std::vector<MatchEval> matches;
  double finalLoss = 0.0;
};

inline ModelOutcome evaluate_processed(const StudyData& d, const RunConfig& cfg,
                                       const std::function<ImageF(const ImageF&)>& process) {
  ModelOutcome out;
  MetricVector sums{};
  for (const auto& im : d.test) {
    const ImageF result = process(im.noisy);
    const ImageF& ref = im.clean ? *im.clean : im.noisy;
    const auto r = metric_report(result, &ref, &d.blind);
    sums[0] += *r.psnr;
    sums[1] += *r.ssim;
    sums[2] += *r.epi;
    sums[3] += r.tv;
    sums[4] += *r.blindQuality;
  }
  for (double& s : sums) s /= static_cast<double>(d.test.size());
  out.row.metrics = sums;
  const auto mp = cfg.matching.params();
  for (const auto& p : d.pairs) {
    out.matches.push_back(evaluate_pair(process(p.imgA), process(p.imgB), p.tx, p.ty, mp));
    out.row.meanRecall += out.matches.back().recall;
    out.row.meanPrecision += out.matches.back().precision;
  }
  out.row.meanRecall /= static_cast<double>(d.pairs.size());
  out.row.meanPrecision /= static_cast<double>(d.pairs.size());
  return out;
}

inline ModelOutcome run_study_model(const StudyData& d, const RunConfig& cfg, int index) {
  const ModelDraw draw = draw_model(cfg.study, cfg.seed, index);
  TrainConfig tc = cfg.train;
  tc.learningRate = draw.learningRate;
  tc.gamma = draw.gamma;
  tc.epochs = draw.epochs;
  tc.patchSize = draw.patchSize;
  tc.stepsPerEpoch = cfg.study.stepsPerEpoch;
  tc.seed = draw.seed;
  DenoiserModel model = build_model(cfg.arch, draw.seed);
  std::vector<ImageF> images;
  for (const auto& im : d.train) images.push_back(im.noisy);
  const auto history = train(model, images, tc);
  ModelOutcome out = evaluate_processed(d, cfg, [&](const ImageF& img) { return two_stage(model, img, cfg.guided); });
  out.draw = draw;
  out.row.modelId = draw.id;
  out.finalLoss = history.empty() ? 0.0 : history.back().total;
  return out;
}

struct StudyResult {
  std::vector<ModelOutcome> models;
  ScoreTable table;
  std::optional<CorrelationMatrix> correlation;
  std::string correlationError;
};

inline CorrelationMatrix study_correlation(const ScoreTable& t) {
  std::vector<NamedSeries> cols{{"precision", {}}, {"recall", {}}};
  for (const char* n : kMetricNames) cols.push_back({n, {}});
  for (const auto& r : t.rows) {
    cols[0].values.push_back(r.meanPrecision);
    cols[1].values.push_back(r.meanRecall);
    for (std::size_t m = 0; m < kMetricCount; ++m) cols[2 + m].values.push_back(r.metrics[m]);
  }
  return correlation_matrix(cols);
}

inline StudyResult run_study(const StudyData& d, const RunConfig& cfg) {
  StudyResult res;
  res.models.resize(static_cast<std::size_t>(cfg.study.models));
  parallel_for(res.models.size(), cfg.jobs,
               [&](std::size_t i) { res.models[i] = run_study_model(d, cfg, static_cast<int>(i)); });
  for (const auto& m : res.models) res.table.rows.push_back(m.row);
  if (res.table.rows.size() >= 2) {
    rank_models(res.table);
    score(res.table, WeightVector{});
  }
  try {
    res.correlation = study_correlation(res.table);
  } catch (const Error& e) {
    res.correlationError = e.what();
  }
  return res;
}

inline void write_study_models_csv(const StudyResult& r, std::ostream& out) {
  out << "model,learning_rate,gamma,epochs,patch_size,final_loss\n";
  for (const auto& m : r.models)
    out << m.draw.id << "," << csv::num(m.draw.learningRate) << "," << csv::num(m.draw.gamma) << "," << m.draw.epochs
        << "," << m.draw.patchSize << "," << csv::num(m.finalLoss) << "\n";
}

/// Per-model, per-pair matching rows; wall time is left out so reruns are
/// byte-identical.
inline void write_study_matching_csv(const StudyResult& r, std::ostream& out) {
  out << "model,pair,kps1,kps2,putative,correct,recall,precision\n";
  for (const auto& m : r.models)
    for (std::size_t p = 0; p < m.matches.size(); ++p) {
      const auto& e = m.matches[p];
      out << m.draw.id << "," << p << "," << e.keypoints1 << "," << e.keypoints2 << "," << e.putative << ","
          << e.correct << "," << csv::num(e.recall) << "," << csv::num(e.precision) << "\n";
    }
}

}  // namespace sonardn
