#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sonardn/csv.hpp"
#include "sonardn/error.hpp"
#include "sonardn/image.hpp"
#include "sonardn/image_io.hpp"
#include "sonardn/metrics.hpp"
#include "sonardn/parallel.hpp"

namespace sonardn {

inline constexpr std::size_t kMetricCount = 5;
inline constexpr std::array<const char*, kMetricCount> kMetricNames{"psnr", "ssim", "epi", "tv", "blind_quality"};
inline constexpr std::array<bool, kMetricCount> kHigherIsBetter{true, true, true, true, false};

using MetricVector = std::array<double, kMetricCount>;

/// Non-negative metric weights summing to one.
struct WeightVector {
  MetricVector w{0.2, 0.2, 0.2, 0.2, 0.2};

  void validate() const {
    double s = 0.0;
    for (double v : w) {
      if (!(v >= 0.0) || !std::isfinite(v)) fail_usage("weights must be finite and non-negative");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) fail_usage("weights must sum to 1");
  }

  static WeightVector one_hot(std::size_t i) {
    WeightVector v;
    v.w.fill(0.0);
    v.w.at(i) = 1.0;
    return v;
  }
};

/// Clamps negatives to zero and rescales onto the simplex; an all-zero
/// vector becomes uniform.
inline MetricVector project_simplex(MetricVector v) {
  double s = 0.0;
  for (double& x : v) {
    x = std::max(x, 0.0);
    s += x;
  }
  if (!(s > 0.0)) {
    v.fill(1.0 / kMetricCount);
    return v;
  }
  if (s != 1.0)
    for (double& x : v) x /= s;
  return v;
}

struct ModelRow {
  std::string modelId;
  MetricVector metrics{};
  MetricVector ranks{};
  double score = 0.0;
  double meanRecall = 0.0;
  double meanPrecision = 0.0;
};

struct ScoreTable {
  std::vector<ModelRow> rows;
};

enum class Outcome { Mean, Recall, Precision };

inline double outcome_of(const ModelRow& r, Outcome o) {
  switch (o) {
    case Outcome::Recall: return r.meanRecall;
    case Outcome::Precision: return r.meanPrecision;
    case Outcome::Mean: break;
  }
  return 0.5 * (r.meanRecall + r.meanPrecision);
}

inline Outcome parse_outcome(const std::string& s) {
  if (s == "mean") return Outcome::Mean;
  if (s == "recall") return Outcome::Recall;
  if (s == "precision") return Outcome::Precision;
  fail_usage("unknown matching outcome '" + s + "' (mean, recall, precision)");
}

// ---- ranking ----

/// 1-based positions in "better first" order; tied values share the mean of
/// the positions they occupy.
inline std::vector<double> tied_positions(std::span<const double> values, bool higherIsBetter) {
  const std::size_t n = values.size();
  for (double v : values)
    if (std::isnan(v)) fail_data("ranking: NaN metric value");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return higherIsBetter ? values[a] > values[b] : values[a] < values[b];
  });
  std::vector<double> pos(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double mean = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) pos[idx[k]] = mean;
    i = j + 1;
  }
  return pos;
}

/// Normalized rank (n - position) / (n - 1): best = 1, worst = 0.
inline std::vector<double> rank_column(std::span<const double> values, bool higherIsBetter) {
  const std::size_t n = values.size();
  if (n < 2) fail_data("ranking needs at least 2 models");
  auto pos = tied_positions(values, higherIsBetter);
  for (double& p : pos) p = (static_cast<double>(n) - p) / static_cast<double>(n - 1);
  return pos;
}

inline void rank_models(ScoreTable& t) {
  if (t.rows.size() < 2) fail_data("ranking needs at least 2 models");
  std::vector<double> col(t.rows.size());
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) col[i] = t.rows[i].metrics[m];
    const auto r = rank_column(col, kHigherIsBetter[m]);
    for (std::size_t i = 0; i < t.rows.size(); ++i) t.rows[i].ranks[m] = r[i];
  }
}

inline double weighted_score(const MetricVector& ranks, const MetricVector& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < kMetricCount; ++i) s += ranks[i] * w[i];
  return s;
}

/// Score = sum of rank * weight for every model; ranks must already be set.
inline std::vector<double> score(ScoreTable& t, const WeightVector& weights) {
  weights.validate();
  std::vector<double> out;
  for (auto& r : t.rows) {
    r.score = weighted_score(r.ranks, weights.w);
    out.push_back(r.score);
  }
  return out;
}

/// Highest score wins; ties go to the lexicographically lowest model id.
inline std::string select_best_model(ScoreTable& t, const WeightVector& weights) {
  if (t.rows.empty()) fail_data("select: empty score table");
  if (t.rows.size() == 1) return t.rows[0].modelId;
  rank_models(t);
  score(t, weights);
  const ModelRow* best = &t.rows[0];
  for (const auto& r : t.rows)
    if (r.score > best->score || (r.score == best->score && r.modelId < best->modelId)) best = &r;
  return best->modelId;
}

// ---- correlation ----

/// Spearman correlation: Pearson on average-tie ranks; nullopt when either
/// side is constant.
inline std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) return std::nullopt;
  const auto ra = tied_positions(a, false), rb = tied_positions(b, false);
  return pearson(ra, rb);
}

struct CorrelationMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd values;
};

struct NamedSeries {
  std::string name;
  std::vector<double> values;
};

inline CorrelationMatrix correlation_matrix(std::span<const NamedSeries> columns) {
  if (columns.empty()) fail_data("correlation: no series");
  const std::size_t n = columns[0].values.size();
  if (n < 3) fail_data("correlation: series need at least 3 values");
  for (const auto& c : columns) {
    if (c.values.size() != n) fail_data("correlation: series '" + c.name + "' has a different length");
    for (double v : c.values)
      if (!std::isfinite(v)) fail_data("correlation: series '" + c.name + "' has non-finite values");
  }
  const std::size_t k = columns.size();
  CorrelationMatrix out;
  out.values = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (const auto& c : columns) {
    out.names.push_back(c.name);
    const auto self = pearson(c.values, c.values);
    if (!self) fail_data("correlation: series '" + c.name + "' has zero variance");
  }
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const double r = std::clamp(*pearson(columns[i].values, columns[j].values), -1.0, 1.0);
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r;
      out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = r;
    }
  return out;
}

inline double min_eigenvalue(const CorrelationMatrix& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.values, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline void write_correlation_csv(const CorrelationMatrix& c, std::ostream& out) {
  out << "name";
  for (const auto& n : c.names) out << "," << csv::quote(n);
  out << "\n";
  for (Eigen::Index i = 0; i < c.values.rows(); ++i) {
    out << csv::quote(c.names[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < c.values.cols(); ++j) out << "," << csv::num(c.values(i, j));
    out << "\n";
  }
}

/// Grayscale heatmap with [-1, 1] mapped linearly onto [0, 1].
inline ImageF render_heatmap(const CorrelationMatrix& c, int cell = 16) {
  const int k = static_cast<int>(c.values.rows());
  ImageF img(k * cell, k * cell);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double v = std::clamp(0.5 * (c.values(i, j) + 1.0), 0.0, 1.0);
      for (int y = 0; y < cell; ++y)
        for (int x = 0; x < cell; ++x) img.at(j * cell + x, i * cell + y) = v;
    }
  return img;
}

// ---- genetic weight tuning ----

struct GAConfig {
  int population = 50;
  int generations = 100;
  int tournament = 3;
  double crossoverRate = 0.9;
  double mutationScale = 0.1;
  int elitism = 2;
  std::uint64_t seed = 0;
  Outcome outcome = Outcome::Mean;
  std::optional<WeightVector> initial;  // seeds the whole population when set
  int jobs = 1;

  void validate() const {
    if (population < 4) fail_usage("GA population must be >= 4");
    if (generations < 1) fail_usage("GA generations must be >= 1");
    if (tournament < 1 || tournament > population) fail_usage("GA tournament size out of range");
    if (!(crossoverRate >= 0.0 && crossoverRate <= 1.0)) fail_usage("GA crossover rate must be in [0, 1]");
    if (!(mutationScale >= 0.0)) fail_usage("GA mutation scale must be >= 0");
    if (elitism < 0 || elitism > population) fail_usage("GA elitism out of range");
    if (initial) initial->validate();
  }
};

struct GenerationLog {
  int generation = 0;
  double bestFitness = 0.0;
  double meanFitness = 0.0;
  WeightVector best;
};

struct GAResult {
  WeightVector weights;
  double fitness = 0.0;
  std::vector<GenerationLog> history;
};

namespace detail {

inline MetricVector dirichlet_uniform(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  MetricVector v;
  for (double& x : v) x = g(rng);
  return project_simplex(v);
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t generation, std::uint64_t individual) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(generation), static_cast<std::uint32_t>(individual)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Fitness of a weight vector: Spearman correlation between the induced
/// scores and the matching outcome. A weight vector that scores every model
/// identically gets -1.
inline double ga_fitness(const ScoreTable& t, const MetricVector& w, std::span<const double> outcome) {
  std::vector<double> s(t.rows.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = weighted_score(t.rows[i].ranks, w);
  return spearman(s, outcome).value_or(-1.0);
}

/// Tournament selection, convex-combination crossover, Dirichlet-jitter
/// mutation and elitism over the weight simplex.
inline GAResult ga_tune_weights(ScoreTable t, const GAConfig& cfg) {
  cfg.validate();
  if (t.rows.size() < 5) fail_data("GA tuning needs at least 5 models");
  rank_models(t);
  std::vector<double> outcome;
  for (const auto& r : t.rows) outcome.push_back(outcome_of(r, cfg.outcome));
  if (std::all_of(outcome.begin(), outcome.end(), [&](double v) { return v == outcome[0]; }))
    fail_numeric("GA fitness undefined: matching outcome is constant across models");

  const auto popSize = static_cast<std::size_t>(cfg.population);
  std::vector<MetricVector> pop(popSize);
  for (std::size_t i = 0; i < popSize; ++i) {
    if (cfg.initial) {
      pop[i] = cfg.initial->w;
    } else {
      auto rng = detail::substream(cfg.seed, 0, i);
      pop[i] = detail::dirichlet_uniform(rng);
    }
  }

  GAResult res;
  std::vector<double> fit(popSize);
  for (int gen = 0; gen < cfg.generations; ++gen) {
    parallel_for(popSize, cfg.jobs, [&](std::size_t i) { fit[i] = ga_fitness(t, pop[i], outcome); });
    std::vector<std::size_t> order(popSize);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
    GenerationLog log;
    log.generation = gen;
    log.bestFitness = fit[order[0]];
    log.meanFitness = std::accumulate(fit.begin(), fit.end(), 0.0) / static_cast<double>(popSize);
    log.best.w = pop[order[0]];
    res.history.push_back(log);
    if (gen + 1 == cfg.generations) break;

    std::vector<MetricVector> next(popSize);
    const auto elite = static_cast<std::size_t>(cfg.elitism);
    for (std::size_t e = 0; e < elite; ++e) next[e] = pop[order[e]];
    for (std::size_t i = elite; i < popSize; ++i) {
      auto rng = detail::substream(cfg.seed, static_cast<std::uint64_t>(gen) + 1, i);
      std::uniform_int_distribution<std::size_t> pick(0, popSize - 1);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      auto tournament = [&] {
        std::size_t best = pick(rng);
        for (int k = 1; k < cfg.tournament; ++k) {
          const std::size_t c = pick(rng);
          if (fit[c] > fit[best] || (fit[c] == fit[best] && c < best)) best = c;
        }
        return best;
      };
      const std::size_t a = tournament(), b = tournament();
      MetricVector child = pop[a];
      if (u(rng) < cfg.crossoverRate && pop[a] != pop[b]) {
        const double lambda = u(rng);
        for (std::size_t m = 0; m < kMetricCount; ++m) child[m] = lambda * pop[a][m] + (1.0 - lambda) * pop[b][m];
      }
      if (cfg.mutationScale > 0.0) {
        const MetricVector d = detail::dirichlet_uniform(rng);
        for (std::size_t m = 0; m < kMetricCount; ++m)
          child[m] += cfg.mutationScale * (d[m] - 1.0 / kMetricCount);
      }
      next[i] = project_simplex(child);
    }
    pop = std::move(next);
  }
  res.weights = res.history.back().best;
  res.fitness = res.history.back().bestFitness;
  return res;
}

// ---- CSV ----

inline void write_weights_csv(const WeightVector& w, std::ostream& out) {
  out << "w_psnr,w_ssim,w_epi,w_tv,w_blind\n";
  for (std::size_t i = 0; i < kMetricCount; ++i) out << (i ? "," : "") << csv::num(w.w[i]);
  out << "\n";
}

inline WeightVector read_weights_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  if (t.rows.size() != 1 || t.header.size() != kMetricCount) fail_data("weights CSV must hold one row of 5 weights");
  WeightVector w;
  for (std::size_t i = 0; i < kMetricCount; ++i) w.w[i] = csv::parse_num(t.rows[0][i]);
  w.validate();
  return w;
}

inline void write_ga_log_csv(const GAResult& r, std::ostream& out) {
  out << "generation,best_fitness,mean_fitness,w_psnr,w_ssim,w_epi,w_tv,w_blind\n";
  for (const auto& g : r.history) {
    out << g.generation << "," << csv::num(g.bestFitness) << "," << csv::num(g.meanFitness);
    for (double v : g.best.w) out << "," << csv::num(v);
    out << "\n";
  }
}

inline void write_score_table_csv(const ScoreTable& t, std::ostream& out) {
  out << "model";
  for (const char* n : kMetricNames) out << "," << n;
  for (const char* n : kMetricNames) out << ",rank_" << n;
  out << ",score,mean_recall,mean_precision\n";
  for (const auto& r : t.rows) {
    out << csv::quote(r.modelId);
    for (double v : r.metrics) out << "," << csv::num(v);
    for (double v : r.ranks) out << "," << csv::num(v);
    out << "," << csv::num(r.score) << "," << csv::num(r.meanRecall) << "," << csv::num(r.meanPrecision) << "\n";
  }
}

/// Reads model ids, raw metrics and matching outcomes; ranks and scores are
/// recomputed by the caller.
inline ScoreTable read_score_table_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  ScoreTable out;
  const int id = t.column("model");
  std::array<int, kMetricCount> cols{};
  for (std::size_t i = 0; i < kMetricCount; ++i) cols[i] = t.column(kMetricNames[i]);
  const int rec = t.column("mean_recall"), prec = t.column("mean_precision");
  for (const auto& row : t.rows) {
    ModelRow r;
    r.modelId = row[id];
    for (std::size_t i = 0; i < kMetricCount; ++i) r.metrics[i] = csv::parse_num(row[cols[i]]);
    r.meanRecall = csv::parse_num(row[rec]);
    r.meanPrecision = csv::parse_num(row[prec]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace sonardn
