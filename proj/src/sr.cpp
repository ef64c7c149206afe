#include "fpgen/sr.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpgen/config.hpp"
#include "fpgen/data_prep.hpp"
#include "fpgen/error.hpp"
#include "fpgen/optim.hpp"
#include "fpgen/wgan.hpp"

namespace fpgen {

using nn::Shape;
using nn::Tensor;
using nn::Var;

void RRDBConfig::validate_structure() const {
  if (n_blocks < 1) throw ConfigError("n_blocks", "must be >= 1");
  if (sub_blocks_per_block < 1) throw ConfigError("sub_blocks_per_block", "must be >= 1");
  if (convs_per_sub_block < 2) throw ConfigError("convs_per_sub_block", "must be >= 2");
  if (channels < 1) throw ConfigError("channels", "must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel", "must be odd and positive");
  if (growth_channels < 1) throw ConfigError("growth_channels", "must be >= 1");
  if (!(beta >= 0.0f && beta <= 1.0f)) throw ConfigError("beta", "must lie in [0,1]");
  if (!(lrelu_slope >= 0.0f)) throw ConfigError("lrelu_slope", "must be >= 0");
  if (upsample_stages != 2) throw ConfigError("upsample_stages", "must be 2 (4x, 64 -> 256)");
  if (!(weight_init_scale >= 0.0f)) throw ConfigError("weight_init_scale", "must be >= 0");
}

void RRDBConfig::validate() const {
  validate_structure();
  if (!(beta > 0.0f)) throw ConfigError("beta", "must lie in (0,1]");
}

void SRDiscriminatorConfig::validate() const {
  if (base_channels < 1) throw ConfigError("base_channels", "must be >= 1");
  if (max_channels < base_channels) throw ConfigError("max_channels", "must be >= base_channels");
  if (!(lrelu_slope >= 0.0f)) throw ConfigError("lrelu_slope", "must be >= 0");
  if (!(weight_init_scale >= 0.0f)) throw ConfigError("weight_init_scale", "must be >= 0");
}

void SRTrainConfig::validate() const {
  if (!(adv_weight >= 0.0)) throw ConfigError("adv_weight", "must be >= 0");
  if (!(content_weight >= 0.0)) throw ConfigError("content_weight", "must be >= 0");
  if (adv_weight == 0.0 && content_weight == 0.0) throw ConfigError("adv_weight", "at least one loss weight must be > 0");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps", "must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be >= 0");
}

namespace {

// He-normal std scaled by `gain`.
void init_conv(nn::Conv2d& conv, float gain, Rng& rng) {
  const auto& s = conv.weight().shape();
  const float fan_in = float(s.c * s.h * s.w);
  init_normal(conv.weight().mutable_value(), gain * std::sqrt(2.0f / fan_in), rng);
}

const RRDBConfig& checked(const RRDBConfig& cfg) {
  cfg.validate_structure();
  return cfg;
}

}  // namespace

DenseSubBlock::DenseSubBlock(const RRDBConfig& cfg, Rng& rng) : beta_(cfg.beta), slope_(cfg.lrelu_slope) {
  const int k = cfg.convs_per_sub_block;
  for (int i = 0; i < k; ++i) {
    const int in = cfg.channels + i * cfg.growth_channels;
    const int out = i + 1 == k ? cfg.channels : cfg.growth_channels;
    convs_.emplace_back(in, out, cfg.kernel, 1, cfg.kernel / 2, true);
  }
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    init_conv(convs_[i], cfg.weight_init_scale, rng);
    add_submodule("conv" + std::to_string(i), convs_[i]);
  }
}

Var DenseSubBlock::forward(const Var& x) const {
  std::vector<Var> features{x};
  for (std::size_t i = 0; i + 1 < convs_.size(); ++i) {
    const Var in = features.size() == 1 ? x : nn::concat_channels(features);
    features.push_back(nn::leaky_relu(convs_[i].forward(in), slope_));
  }
  return nn::add_scaled(x, convs_.back().forward(nn::concat_channels(features)), beta_);
}

RRDB::RRDB(const RRDBConfig& cfg, Rng& rng) : beta_(cfg.beta) {
  for (int i = 0; i < cfg.sub_blocks_per_block; ++i) sub_blocks_.emplace_back(cfg, rng);
  for (std::size_t i = 0; i < sub_blocks_.size(); ++i) add_submodule("sub" + std::to_string(i), sub_blocks_[i]);
}

Var RRDB::residual(const Var& x) const {
  Var h = x;
  for (const auto& sb : sub_blocks_) h = sb.forward(h);
  return nn::add_scaled(h, x, -1.0f);
}

Var RRDB::forward(const Var& x) const { return nn::add_scaled(x, residual(x), beta_); }

SRGenerator::SRGenerator(const RRDBConfig& cfg, Rng& rng)
    : cfg_(checked(cfg)),
      head_(1, cfg.channels, cfg.kernel, 1, cfg.kernel / 2),
      trunk_(cfg.channels, cfg.channels, cfg.kernel, 1, cfg.kernel / 2),
      final_(cfg.channels, 1, cfg.kernel, 1, cfg.kernel / 2) {
  init_conv(head_, 1.0f, rng);
  add_submodule("head", head_);
  for (int i = 0; i < cfg_.n_blocks; ++i) blocks_.emplace_back(cfg_, rng);
  for (std::size_t i = 0; i < blocks_.size(); ++i) add_submodule("block" + std::to_string(i), blocks_[i]);
  init_conv(trunk_, cfg_.weight_init_scale, rng);
  add_submodule("trunk", trunk_);
  for (int i = 0; i < cfg_.upsample_stages; ++i) {
    upsample_convs_.emplace_back(cfg_.channels, cfg_.channels, cfg_.kernel, 1, cfg_.kernel / 2);
  }
  for (std::size_t i = 0; i < upsample_convs_.size(); ++i) {
    init_conv(upsample_convs_[i], 1.0f, rng);
    add_submodule("up" + std::to_string(i), upsample_convs_[i]);
  }
  init_conv(final_, cfg_.weight_init_scale, rng);
  // Mid-grey start keeps the clamp in its linear range.
  final_.bias().mutable_value().array().setConstant(0.5f);
  add_submodule("final", final_);
}

Var SRGenerator::forward(const Var& lq) const {
  if (lq.shape().c != 1 || lq.shape().h != kLqSize || lq.shape().w != kLqSize) {
    throw Error(ErrorCode::ShapeMismatch, "SR generator expects (b, 1, 64, 64), got " + lq.shape().str());
  }
  const int batch = lq.shape().n;
  if (batch > 1 && !nn::grad_enabled()) {
    // Samples are independent, and one at a time keeps the activations cache-resident.
    Tensor out(Shape{batch, 1, kHqSize, kHqSize});
    const Shape one{1, 1, kLqSize, kLqSize};
    for (int n = 0; n < batch; ++n) {
      Tensor x(one, Eigen::Map<const Eigen::ArrayXf>(lq.value().sample(n), one.numel()));
      const Tensor y = forward(Var(std::move(x))).value();
      std::copy_n(y.data(), y.size(), out.sample(n));
    }
    return Var(std::move(out));
  }
  const Var head = head_.forward(lq);
  Var h = head;
  for (const auto& block : blocks_) h = block.forward(h);
  h = nn::add(head, trunk_.forward(h));
  for (const auto& conv : upsample_convs_) h = nn::leaky_relu(conv.forward(nn::upsample_nearest2x(h)), cfg_.lrelu_slope);
  return nn::clamp01_inward(final_.forward(h));
}

int SRGenerator::block_conv_count() const {
  int n = 0;
  for (const auto& b : blocks_) {
    for (const auto& sb : b.sub_blocks()) n += sb.conv_count();
  }
  return n;
}

SRDiscriminator::SRDiscriminator(const SRDiscriminatorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int in = 1, out = cfg_.base_channels;
  for (int size = kHqSize; size > 4; size /= 2) {
    layers_.emplace_back(in, out, 4, 2, 1, true);
    in = out;
    out = std::min(out * 2, cfg_.max_channels);
  }
  layers_.emplace_back(in, 1, 4, 1, 0, true);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    init_normal(layers_[i].weight().mutable_value(), cfg_.weight_init_scale, rng);
    add_submodule("conv" + std::to_string(i), layers_[i]);
  }
}

Var SRDiscriminator::forward(const Var& x) const {
  if (x.shape().c != 1 || x.shape().h != kHqSize || x.shape().w != kHqSize) {
    throw Error(ErrorCode::ShapeMismatch, "SR discriminator expects (b, 1, 256, 256), got " + x.shape().str());
  }
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = nn::leaky_relu(layers_[i].forward(h), cfg_.lrelu_slope);
  return layers_.back().forward(h);
}

SRGenerator build_sr_generator(const RRDBConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, 41);
  return SRGenerator(cfg, rng);
}

SRDiscriminator build_sr_discriminator(const SRDiscriminatorConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, 42);
  return SRDiscriminator(cfg, rng);
}

std::vector<PairedSample> load_pairs(const DatasetManifest& data) {
  std::vector<PairedSample> out;
  out.reserve(data.size());
  for (const auto& e : data.entries) {
    PairedSample p;
    p.id = e.id;
    p.hq = load_hq(data, e);
    if (p.hq.rows() != kHqSize || p.hq.cols() != kHqSize) {
      throw Error(ErrorCode::ShapeMismatch, e.id + ": HQ image is not 256x256");
    }
    p.lq = e.lq_path.empty() ? to_unit<float>(derive_lq_u8(quantize_u8(p.hq), kScaleFactor)) : load_lq(data, e);
    if (p.lq.rows() != kLqSize || p.lq.cols() != kLqSize) {
      throw Error(ErrorCode::ShapeMismatch, e.id + ": LQ image is not 64x64");
    }
    out.push_back(std::move(p));
  }
  return out;
}

double nearest_baseline_l1(std::span<const PairedSample> pairs) {
  if (pairs.empty()) throw Error(ErrorCode::EmptyBatch, "no pairs for baseline");
  double total = 0.0;
  for (const auto& p : pairs) total += mean_abs_diff(upscale_nearest(p.lq, kScaleFactor), p.hq);
  return total / double(pairs.size());
}

namespace {

nlohmann::json sr_generator_json(const RRDBConfig& c) { return {{"rrdb", to_json(c)}}; }
nlohmann::json sr_discriminator_json(const SRDiscriminatorConfig& c) { return {{"discriminator", to_json(c)}}; }

Tensor seed_tensor(const ScoreVector<float>& grad, const Shape& shape) {
  return Tensor(shape, Eigen::ArrayXf(grad.array()));
}

}  // namespace

SRResult train_sr(std::span<const PairedSample> data, const SRTrainConfig& cfg, const RRDBConfig& rrdb,
                  const SRDiscriminatorConfig& disc_cfg, const SRSink& sink) {
  cfg.validate();
  rrdb.validate();
  disc_cfg.validate();
  if (int(data.size()) < cfg.batch_size) {
    throw Error(ErrorCode::DatasetTooSmall, "need at least batch_size (" + std::to_string(cfg.batch_size) +
                                                ") pairs, have " + std::to_string(data.size()));
  }

  SRGenerator gen = build_sr_generator(rrdb, cfg.seed);
  SRDiscriminator disc = build_sr_discriminator(disc_cfg, cfg.seed);
  nn::Adam gen_opt(gen.parameter_vars(), float(cfg.lr));
  nn::Adam disc_opt(disc.parameter_vars(), float(cfg.lr));

  Rng rng = make_rng(cfg.seed, 43);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t pos = 0;
  auto next_batch = [&](std::vector<ImageF>& lq, std::vector<ImageF>& hq) {
    lq.clear();
    hq.clear();
    for (int i = 0; i < cfg.batch_size; ++i) {
      if (pos == 0) std::shuffle(order.begin(), order.end(), rng);
      lq.push_back(data[order[pos]].lq);
      hq.push_back(data[order[pos]].hq);
      pos = (pos + 1) % order.size();
    }
  };

  SRResult result;
  auto snapshot = [&](long step) {
    result.generator =
        capture_checkpoint(gen, CheckpointRole::SrGenerator, std::uint64_t(step), cfg.seed, sr_generator_json(rrdb));
    result.discriminator = capture_checkpoint(disc, CheckpointRole::SrDiscriminator, std::uint64_t(step), cfg.seed,
                                              sr_discriminator_json(disc_cfg));
  };
  auto require_finite = [](double v, const char* what, long step) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteLoss, std::string(what) + " is not finite at step " + std::to_string(step));
    }
  };

  std::vector<ImageF> lq_imgs, hq_imgs;
  for (long step = 1; step <= cfg.max_steps; ++step) {
    SRTelemetry t;
    t.step = step;
    next_batch(lq_imgs, hq_imgs);
    const Var lq(stack_images(lq_imgs));
    const Var hq(stack_images(hq_imgs));

    // Discriminator update on detached generator output.
    Var fake;
    {
      nn::NoGradGuard no_grad;
      fake = gen.forward(lq);
    }
    disc_opt.zero_grad();
    {
      const Var c_r = disc.forward(hq);
      const Var c_f = disc.forward(fake);
      const auto& r = c_r.value().array();
      const auto& f = c_f.value().array();
      t.l_d = rad_discriminator_loss(r.cast<double>(), f.cast<double>());
      require_finite(t.l_d, "discriminator loss", step);
      const auto g = rad_discriminator_loss_gradients(r, f);
      const Var roots[] = {c_r, c_f};
      const Tensor seeds[] = {seed_tensor(g.real, c_r.shape()), seed_tensor(g.fake, c_f.shape())};
      nn::backward(roots, seeds);
      disc_opt.step();
    }

    // Generator update; real scores are constants here.
    gen_opt.zero_grad();
    fake = gen.forward(lq);
    Var c_r;
    {
      nn::NoGradGuard no_grad;
      c_r = disc.forward(hq);
    }
    const Var c_f = disc.forward(fake);
    const Var l1 = nn::l1_loss(fake, hq);
    const auto& r = c_r.value().array();
    const auto& f = c_f.value().array();
    t.l_g = rad_generator_loss(r.cast<double>(), f.cast<double>());
    t.l1 = l1.value().array()[0];
    require_finite(t.l_g, "generator loss", step);
    require_finite(t.l1, "content loss", step);
    const auto g = rad_generator_loss_gradients(r, f);
    const Var roots[] = {c_f, l1};
    const Tensor seeds[] = {seed_tensor(g.fake * float(cfg.adv_weight), c_f.shape()),
                            Tensor(l1.shape(), float(cfg.content_weight))};
    nn::backward(roots, seeds);
    gen_opt.step();
    disc.zero_grad();

    result.telemetry.push_back(t);
    if (sink.on_step) sink.on_step(t);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && sink.on_checkpoint) {
      snapshot(step);
      sink.on_checkpoint(result.generator, result.discriminator);
    }
  }
  snapshot(cfg.max_steps);
  return result;
}

SRGenerator sr_generator_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.role != CheckpointRole::SrGenerator) {
    throw Error(ErrorCode::IncompatibleCheckpoints,
                "expected an sr_generator checkpoint, got " + std::string(to_string(ckpt.role)));
  }
  SRGenerator gen = build_sr_generator(rrdb_config_from_json(ckpt.config.at("rrdb")), 0);
  restore_checkpoint(gen, ckpt);
  return gen;
}

Tensor super_resolve(const SRGenerator& generator, const Tensor& lq) {
  if (lq.shape().n < 1) throw Error(ErrorCode::EmptyBatch, "super_resolve: empty batch");
  nn::NoGradGuard no_grad;
  return generator.forward(Var(lq)).value();
}

Tensor super_resolve(const Checkpoint& generator, const Tensor& lq) {
  return super_resolve(sr_generator_from_checkpoint(generator), lq);
}

}  // namespace fpgen
