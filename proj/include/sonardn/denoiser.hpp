#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sonardn/error.hpp"
#include "sonardn/image.hpp"
#include "sonardn/nn/layers.hpp"
#include "sonardn/subsampler.hpp"

namespace sonardn {

/// Encoder-decoder shape. `levels` counts resolutions (levels - 1 poolings);
/// level l carries baseChannels * 2^l feature maps.
struct ArchSpec {
  int levels = 3;
  int baseChannels = 32;
  int kernel = 3;

  void validate() const {
    if (levels < 1 || baseChannels < 1) fail_usage("architecture needs levels >= 1 and channels >= 1");
    if (kernel < 1 || kernel % 2 == 0) fail_usage("kernel size must be odd");
  }
  int channels_at(int level) const { return baseChannels << level; }
  int size_multiple() const { return 1 << (levels - 1); }
  bool operator==(const ArchSpec&) const = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Network layout: per level two encoder convs; per decoder level two convs
/// after concatenating the upsampled coarser features with the skip; a 1x1
/// linear head. Parameters live in one flat vector.
class DenoiserModel {
 public:
  DenoiserModel() = default;

  explicit DenoiserModel(const ArchSpec& arch) : arch_(arch) {
    arch_.validate();
    std::size_t offset = 0;
    auto add = [&](int cin, int cout, int k) {
      convs_.push_back({cin, cout, k, offset});
      offset += convs_.back().param_count();
    };
    for (int l = 0; l < arch_.levels; ++l) {
      const int cin = l == 0 ? 1 : arch_.channels_at(l - 1);
      add(cin, arch_.channels_at(l), arch_.kernel);
      add(arch_.channels_at(l), arch_.channels_at(l), arch_.kernel);
    }
    for (int l = arch_.levels - 2; l >= 0; --l) {
      add(arch_.channels_at(l + 1) + arch_.channels_at(l), arch_.channels_at(l), arch_.kernel);
      add(arch_.channels_at(l), arch_.channels_at(l), arch_.kernel);
    }
    add(arch_.channels_at(0), 1, 1);
    params_.assign(offset, 0.0);
    adam_.m.assign(offset, 0.0);
    adam_.v.assign(offset, 0.0);
  }

  const ArchSpec& arch() const noexcept { return arch_; }
  const std::vector<nn::ConvShape>& convs() const noexcept { return convs_; }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }
  AdamState& adam() noexcept { return adam_; }
  const AdamState& adam() const noexcept { return adam_; }

  double gamma = 1.0;
  std::uint64_t trainingSeed = 0;

  // Indices into convs() for the encoder, decoder and head.
  std::size_t enc_conv(int level, int which) const { return static_cast<std::size_t>(2 * level + which); }
  std::size_t dec_conv(int level, int which) const {
    return static_cast<std::size_t>(2 * arch_.levels + 2 * (arch_.levels - 2 - level) + which);
  }
  std::size_t head_conv() const { return convs_.size() - 1; }

 private:
  ArchSpec arch_;
  std::vector<nn::ConvShape> convs_;
  std::vector<double> params_;
  AdamState adam_;
};

/// He-style fan-in initialization: N(0, 2 / fan_in), biases zero.
inline DenoiserModel build_model(const ArchSpec& arch, std::uint64_t seed) {
  DenoiserModel model(arch);
  model.trainingSeed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& c : model.convs()) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(c.cin) * c.k * c.k));
    for (std::size_t i = 0; i < c.weight_count(); ++i) model.params()[c.offset + i] = stddev * normal(rng);
  }
  return model;
}

/// A model whose forward pass copies non-negative inputs exactly.
inline DenoiserModel make_identity_model(const ArchSpec& arch) {
  DenoiserModel model(arch);
  auto set_center = [&](const nn::ConvShape& c, int inChannel) {
    const int r = c.k / 2;
    model.params()[c.offset + (static_cast<std::size_t>(inChannel) * c.k + r) * c.k + r] = 1.0;
  };
  for (int l = 0; l < arch.levels; ++l) {
    set_center(model.convs()[model.enc_conv(l, 0)], 0);
    set_center(model.convs()[model.enc_conv(l, 1)], 0);
  }
  for (int l = arch.levels - 2; l >= 0; --l) {
    set_center(model.convs()[model.dec_conv(l, 0)], arch.channels_at(l + 1));  // first skip channel
    set_center(model.convs()[model.dec_conv(l, 1)], 0);
  }
  set_center(model.convs()[model.head_conv()], 0);
  return model;
}

namespace detail {

/// Activations kept for backprop.
struct ForwardTrace {
  int padW = 0, padH = 0;  // padded input size
  std::vector<nn::Tensor> encIn, encMid, encOut;
  std::vector<nn::Tensor> decIn, decMid, decOut;  // indexed by level
  nn::Tensor output;                              // padded, pre-crop
};

inline nn::Tensor image_to_tensor(const ImageF& img, int multiple, int& padW, int& padH) {
  padW = (img.width() + multiple - 1) / multiple * multiple;
  padH = (img.height() + multiple - 1) / multiple * multiple;
  nn::Tensor t(1, padH, padW);
  for (int y = 0; y < padH; ++y)
    for (int x = 0; x < padW; ++x) t.at(0, y, x) = img.at_border(x, y, BorderMode::Reflect);
  return t;
}

inline void check_finite(const nn::Tensor& t, const char* where) {
  for (double v : t.v)
    if (!std::isfinite(v)) fail_numeric(std::string("non-finite activation in ") + where);
}

inline ForwardTrace run_forward(const DenoiserModel& model, const ImageF& img) {
  const ArchSpec& arch = model.arch();
  const auto& convs = model.convs();
  const std::span<const double> p(model.params());
  ForwardTrace tr;
  tr.encIn.resize(arch.levels);
  tr.encMid.resize(arch.levels);
  tr.encOut.resize(arch.levels);
  tr.decIn.resize(arch.levels);
  tr.decMid.resize(arch.levels);
  tr.decOut.resize(arch.levels);

  nn::Tensor x = image_to_tensor(img, arch.size_multiple(), tr.padW, tr.padH);
  for (int l = 0; l < arch.levels; ++l) {
    tr.encIn[l] = l == 0 ? std::move(x) : nn::avg_pool2(tr.encOut[l - 1]);
    tr.encMid[l] = nn::conv_forward(tr.encIn[l], convs[model.enc_conv(l, 0)], p);
    nn::leaky_relu_inplace(tr.encMid[l]);
    tr.encOut[l] = nn::conv_forward(tr.encMid[l], convs[model.enc_conv(l, 1)], p);
    nn::leaky_relu_inplace(tr.encOut[l]);
  }
  const nn::Tensor* coarse = &tr.encOut[arch.levels - 1];
  for (int l = arch.levels - 2; l >= 0; --l) {
    tr.decIn[l] = nn::concat_channels(nn::upsample2(*coarse), tr.encOut[l]);
    tr.decMid[l] = nn::conv_forward(tr.decIn[l], convs[model.dec_conv(l, 0)], p);
    nn::leaky_relu_inplace(tr.decMid[l]);
    tr.decOut[l] = nn::conv_forward(tr.decMid[l], convs[model.dec_conv(l, 1)], p);
    nn::leaky_relu_inplace(tr.decOut[l]);
    coarse = &tr.decOut[l];
  }
  tr.output = nn::conv_forward(*coarse, convs[model.head_conv()], p);
  check_finite(tr.output, "denoiser output");
  return tr;
}

inline ImageF crop_output(const nn::Tensor& out, const ImageF& like) {
  ImageF img(like.width(), like.height());
  for (int y = 0; y < like.height(); ++y)
    for (int x = 0; x < like.width(); ++x) img.at(x, y) = out.at(0, y, x);
  img.set_mask(like.mask());
  return img;
}

/// Backprop of dL/d(output) (image-sized) into parameter gradients.
inline void run_backward(const DenoiserModel& model, const ForwardTrace& tr, const ImageF& dOutput,
                         std::span<double> grads) {
  const ArchSpec& arch = model.arch();
  const auto& convs = model.convs();
  const std::span<const double> p(model.params());

  nn::Tensor g(1, tr.padH, tr.padW);
  for (int y = 0; y < dOutput.height(); ++y)
    for (int x = 0; x < dOutput.width(); ++x) g.at(0, y, x) = dOutput.at(x, y);

  const nn::Tensor& headIn = arch.levels > 1 ? tr.decOut[0] : tr.encOut[0];
  nn::Tensor gCoarse = nn::conv_backward(headIn, g, convs[model.head_conv()], p, grads, true);

  // Gradient flowing into each encoder output through the skip connections.
  std::vector<nn::Tensor> gSkip(arch.levels);
  for (int l = 0; l <= arch.levels - 2; ++l) {
    nn::leaky_relu_backward(tr.decOut[l], gCoarse);
    nn::Tensor gMid = nn::conv_backward(tr.decMid[l], gCoarse, convs[model.dec_conv(l, 1)], p, grads, true);
    nn::leaky_relu_backward(tr.decMid[l], gMid);
    nn::Tensor gIn = nn::conv_backward(tr.decIn[l], gMid, convs[model.dec_conv(l, 0)], p, grads, true);
    auto [gUp, gS] = nn::split_channels(gIn, arch.channels_at(l + 1));
    gSkip[l] = std::move(gS);
    gCoarse = nn::upsample2_backward(gUp);
  }
  // gCoarse now holds the gradient at the deepest encoder output.
  nn::Tensor gEnc = std::move(gCoarse);
  for (int l = arch.levels - 1; l >= 0; --l) {
    if (l < arch.levels - 1) {
      nn::add_inplace(gSkip[l], gEnc);
      gEnc = std::move(gSkip[l]);
    }
    nn::leaky_relu_backward(tr.encOut[l], gEnc);
    nn::Tensor gMid = nn::conv_backward(tr.encMid[l], gEnc, convs[model.enc_conv(l, 1)], p, grads, true);
    nn::leaky_relu_backward(tr.encMid[l], gMid);
    nn::Tensor gIn = nn::conv_backward(tr.encIn[l], gMid, convs[model.enc_conv(l, 0)], p, grads, l > 0);
    if (l > 0) gEnc = nn::avg_pool2_backward(gIn, tr.encOut[l - 1].h, tr.encOut[l - 1].w);
  }
}

}  // namespace detail

enum class ForwardMode { Training, Inference };

/// Same-size output. Inputs are reflect-padded to a multiple of 2^(levels-1)
/// and cropped back. Inference mode clamps to [0,1].
inline ImageF forward(const DenoiserModel& model, const ImageF& img, ForwardMode mode = ForwardMode::Inference) {
  require_gray(img, "forward");
  if (img.width() < 1 || img.height() < 1) fail_data("forward: empty image");
  const auto tr = detail::run_forward(model, img);
  ImageF out = detail::crop_output(tr.output, img);
  if (mode == ForwardMode::Inference) out.clamp01();
  return out;
}

struct LossBreakdown {
  double loss1 = 0.0;
  double loss2 = 0.0;
  double total = 0.0;
  double gammaUsed = 0.0;
  ImageF subStar;
};

/// Loss pieces given the network output on sub1, the target sub2 and the
/// frozen regularizer target subStar. Optionally fills dTotal/dOut.
inline LossBreakdown loss_terms(const ImageF& out, const ImageF& target, const ImageF& subStar,
                                const std::vector<std::uint8_t>& valid, double gamma, ImageF* dOut) {
  LossBreakdown lb;
  lb.gammaUsed = gamma;
  std::size_t n = 0;
  for (auto v : valid) n += v != 0;
  if (dOut) *dOut = ImageF(out.width(), out.height());
  if (n == 0) return lb;
  double s1 = 0.0, s2 = 0.0;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    const double r1 = out.data()[i] - target.data()[i];
    const double r2 = r1 - subStar.data()[i];
    s1 += r1 * r1;
    s2 += r2 * r2;
    if (dOut) dOut->data()[i] = 2.0 * inv * (r1 + gamma * r2);
  }
  lb.loss1 = s1 * inv;
  lb.loss2 = s2 * inv;
  lb.total = lb.loss1 + gamma * lb.loss2;
  return lb;
}

namespace detail {

struct LossSetup {
  SubsamplePair pair;
  ImageF subStar;
  std::vector<std::uint8_t> valid;
};

inline LossSetup prepare_loss(const DenoiserModel& model, const ImageF& noisy, std::uint64_t seed) {
  require_gray(noisy, "compute_loss");
  LossSetup s;
  s.pair = make_subsample_pair(noisy, seed);
  if (s.pair.sub1.width() != s.pair.sub2.width() || s.pair.sub1.height() != s.pair.sub2.height())
    fail_data("compute_loss: pair dimension mismatch");
  // Full-resolution pass with no gradient; replayed through the same cells.
  const ImageF fy = forward(model, noisy, ForwardMode::Training);
  auto [f1, f2] = resample_with(fy, s.pair.choices);
  s.subStar = ImageF(f1.width(), f1.height());
  for (std::size_t i = 0; i < f1.data().size(); ++i) s.subStar.data()[i] = f1.data()[i] - f2.data()[i];
  s.valid = joint_mask(s.pair.sub1, s.pair.sub2);
  return s;
}

}  // namespace detail

/// Loss = Loss1 + gamma * Loss2 on one noisy image, subsampled with `seed`.
inline LossBreakdown compute_loss(const DenoiserModel& model, const ImageF& noisy, double gamma, std::uint64_t seed) {
  auto setup = detail::prepare_loss(model, noisy, seed);
  const ImageF out = forward(model, setup.pair.sub1, ForwardMode::Training);
  LossBreakdown lb = loss_terms(out, setup.pair.sub2, setup.subStar, setup.valid, gamma, nullptr);
  lb.subStar = std::move(setup.subStar);
  return lb;
}

/// Loss plus its parameter gradient (accumulated into `grads`) with subStar
/// held constant.
inline LossBreakdown loss_and_gradient(const DenoiserModel& model, const ImageF& noisy, double gamma,
                                       std::uint64_t seed, std::span<double> grads) {
  auto setup = detail::prepare_loss(model, noisy, seed);
  const auto tr = detail::run_forward(model, setup.pair.sub1);
  const ImageF out = detail::crop_output(tr.output, setup.pair.sub1);
  ImageF dOut;
  LossBreakdown lb = loss_terms(out, setup.pair.sub2, setup.subStar, setup.valid, gamma, &dOut);
  detail::run_backward(model, tr, dOut, grads);
  lb.subStar = std::move(setup.subStar);
  return lb;
}

/// Adam update with the given gradient.
inline void adam_update(DenoiserModel& model, std::span<const double> grads, double lr) {
  auto& st = model.adam();
  auto& p = model.params();
  ++st.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    st.m[i] = kAdamBeta1 * st.m[i] + (1.0 - kAdamBeta1) * grads[i];
    st.v[i] = kAdamBeta2 * st.v[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
  for (double v : p)
    if (!std::isfinite(v)) fail_numeric("non-finite parameter after update");
}

/// One optimizer step on a batch; patch gradients are summed in batch order
/// and averaged. Patch k uses subsampling seed `seed + k`.
inline LossBreakdown train_step(DenoiserModel& model, std::span<const ImageF> batch, double gamma, std::uint64_t seed,
                                double lr) {
  if (batch.empty()) fail_data("train_step: empty batch");
  std::vector<double> grads(model.parameter_count(), 0.0);
  LossBreakdown mean;
  mean.gammaUsed = gamma;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto lb = loss_and_gradient(model, batch[k], gamma, seed + k, grads);
    mean.loss1 += lb.loss1;
    mean.loss2 += lb.loss2;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grads) {
    g *= inv;
    if (!std::isfinite(g)) fail_numeric("non-finite gradient");
  }
  mean.loss1 *= inv;
  mean.loss2 *= inv;
  mean.total = mean.loss1 + gamma * mean.loss2;
  adam_update(model, grads, lr);
  return mean;
}

enum class GammaSchedule { Constant, LinearRamp };

struct TrainConfig {
  double splitRatio = 1.0;  // fraction M of the dataset used for training
  int epochs = 20;
  int stepsPerEpoch = 100;
  double learningRate = 3e-4;
  int batchSize = 4;
  double gamma = 1.0;
  GammaSchedule schedule = GammaSchedule::Constant;
  std::uint64_t seed = 0;
  int patchSize = 128;

  void validate() const {
    if (splitRatio < 0.5 || splitRatio > 1.0) fail_usage("split ratio M must lie in [0.5, 1]");
    if (epochs < 0 || stepsPerEpoch < 1 || batchSize < 1 || patchSize < 2)
      fail_usage("epochs, steps, batch and patch size must be positive");
    if (!(learningRate > 0.0)) fail_usage("learning rate must be > 0");
    if (gamma < 0.0) fail_usage("gamma must be >= 0");
  }

  /// Gamma at a global step; the ramp reaches `gamma` halfway through training.
  double gamma_at(std::uint64_t step, std::uint64_t totalSteps) const {
    if (schedule == GammaSchedule::Constant || totalSteps == 0) return gamma;
    const double half = 0.5 * static_cast<double>(totalSteps);
    return gamma * std::min(1.0, static_cast<double>(step) / half);
  }
};

struct EpochLog {
  int epoch = 0;
  double loss1 = 0.0;
  double loss2 = 0.0;
  double total = 0.0;
  double gamma = 0.0;
};

/// Random crop with replacement; patch sides are clipped to the image and made even.
inline ImageF sample_patch(const ImageF& img, int patch, std::mt19937_64& rng) {
  const int pw = std::min(patch, img.width()) & ~1;
  const int ph = std::min(patch, img.height()) & ~1;
  std::uniform_int_distribution<int> ux(0, img.width() - pw), uy(0, img.height() - ph);
  const int x0 = ux(rng), y0 = uy(rng);
  return crop(img, x0, y0, pw, ph);
}

using CheckpointHook = std::function<void(const DenoiserModel&, int epoch)>;

/// Trains on the whole dataset. History holds per-epoch mean losses.
inline std::vector<EpochLog> train(DenoiserModel& model, std::span<const ImageF> dataset, const TrainConfig& cfg,
                                   const CheckpointHook& onEpoch = {}) {
  cfg.validate();
  if (dataset.empty()) fail_data("train: empty dataset");
  for (const auto& img : dataset) {
    require_gray(img, "train");
    if (img.width() < 2 || img.height() < 2) fail_data("train: image smaller than 2x2");
  }
  model.gamma = cfg.gamma;
  std::vector<EpochLog> history;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pickImage(0, dataset.size() - 1);
  const std::uint64_t totalSteps = static_cast<std::uint64_t>(cfg.epochs) * cfg.stepsPerEpoch;
  std::uint64_t globalStep = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochLog log;
    log.epoch = e + 1;
    for (int s = 0; s < cfg.stepsPerEpoch; ++s, ++globalStep) {
      std::vector<ImageF> batch;
      batch.reserve(cfg.batchSize);
      for (int b = 0; b < cfg.batchSize; ++b) batch.push_back(sample_patch(dataset[pickImage(rng)], cfg.patchSize, rng));
      const double g = cfg.gamma_at(globalStep, totalSteps);
      const std::uint64_t stepSeed = rng();
      const auto lb = train_step(model, batch, g, stepSeed, cfg.learningRate);
      log.loss1 += lb.loss1;
      log.loss2 += lb.loss2;
      log.total += lb.total;
      log.gamma += g;
    }
    const double inv = 1.0 / cfg.stepsPerEpoch;
    log.loss1 *= inv;
    log.loss2 *= inv;
    log.total *= inv;
    log.gamma *= inv;
    history.push_back(log);
    if (onEpoch) onEpoch(model, e + 1);
  }
  return history;
}

/// Full-image inference, clamped to [0,1], mask copied from the input.
inline ImageF denoise(const DenoiserModel& model, const ImageF& img) {
  if (img.width() < 2 || img.height() < 2) fail_data("denoise: image smaller than 2x2");
  return forward(model, img, ForwardMode::Inference);
}

/// Checkpoint layout (little-endian): "SDNMODEL", u32 version, i32 levels,
/// i32 channels, i32 kernel, f64 gamma, u64 seed, u64 adam step,
/// u64 parameter count, then parameters, first moments, second moments (f64).
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const DenoiserModel& model, std::ostream& out) {
  auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write("SDNMODEL", 8);
  put(kCheckpointVersion);
  put(static_cast<std::int32_t>(model.arch().levels));
  put(static_cast<std::int32_t>(model.arch().baseChannels));
  put(static_cast<std::int32_t>(model.arch().kernel));
  put(model.gamma);
  put(model.trainingSeed);
  put(static_cast<std::uint64_t>(model.adam().step));
  put(static_cast<std::uint64_t>(model.parameter_count()));
  const auto bytes = static_cast<std::streamsize>(model.parameter_count() * sizeof(double));
  out.write(reinterpret_cast<const char*>(model.params().data()), bytes);
  out.write(reinterpret_cast<const char*>(model.adam().m.data()), bytes);
  out.write(reinterpret_cast<const char*>(model.adam().v.data()), bytes);
}

inline DenoiserModel load_checkpoint(std::istream& in) {
  auto get = [&](auto& v) { in.read(reinterpret_cast<char*>(&v), sizeof v); };
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "SDNMODEL") fail_data("checkpoint: bad magic");
  std::uint32_t version = 0;
  get(version);
  if (version != kCheckpointVersion) fail_data("checkpoint: unsupported version " + std::to_string(version));
  std::int32_t levels, channels, kernel;
  get(levels);
  get(channels);
  get(kernel);
  if (!in) fail_data("checkpoint: truncated header");
  DenoiserModel model(ArchSpec{levels, channels, kernel});
  std::uint64_t step = 0, count = 0;
  get(model.gamma);
  get(model.trainingSeed);
  get(step);
  get(count);
  if (!in || count != model.parameter_count()) fail_data("checkpoint: parameter count mismatch");
  model.adam().step = step;
  const auto bytes = static_cast<std::streamsize>(count * sizeof(double));
  in.read(reinterpret_cast<char*>(model.params().data()), bytes);
  in.read(reinterpret_cast<char*>(model.adam().m.data()), bytes);
  in.read(reinterpret_cast<char*>(model.adam().v.data()), bytes);
  if (!in) fail_data("checkpoint: truncated payload");
  return model;
}

inline void save_checkpoint(const DenoiserModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot write checkpoint: " + path.string());
  save_checkpoint(model, out);
}

inline DenoiserModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open checkpoint: " + path.string());
  return load_checkpoint(in);
}

}  // namespace sonardn
