#include "fpgen/wgan.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpgen/config.hpp"
#include "fpgen/error.hpp"
#include "fpgen/optim.hpp"

namespace fpgen {

using nn::Shape;
using nn::Tensor;
using nn::Var;

void GeneratorConfig::validate() const {
  if (z_dim != kLatentDim) throw ConfigError("z_dim", "latent size is fixed at 100");
  if (4 << stages != kLqSize || stages < 1) throw ConfigError("stages", "4 * 2^stages must equal 64");
  if (base_channels < 1 || base_channels % (1 << (stages - 1)) != 0) {
    throw ConfigError("base_channels", "must be divisible by 2^(stages-1)");
  }
  if (!(weight_init_scale >= 0.0f)) throw ConfigError("weight_init_scale", "must be >= 0");
}

std::vector<int> GeneratorConfig::channel_schedule() const {
  std::vector<int> out;
  for (int i = 0; i < stages; ++i) out.push_back(base_channels >> i);
  out.push_back(1);
  return out;
}

void CriticConfig::validate() const {
  if (4 << stages != kLqSize || stages < 1) throw ConfigError("stages", "4 * 2^stages must equal 64");
  if (base_channels < 1 || base_channels % (1 << (stages - 1)) != 0) {
    throw ConfigError("base_channels", "must be divisible by 2^(stages-1)");
  }
  if (!(weight_init_scale >= 0.0f)) throw ConfigError("weight_init_scale", "must be >= 0");
}

void WganTrainConfig::validate() const {
  if (!(clip_c > 0.0)) throw ConfigError("clip_c", "must be > 0");
  if (n_critic < 1) throw ConfigError("n_critic", "must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps", "must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every", "must be >= 0");
}

Generator::Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const auto channels = cfg_.channel_schedule();
  const bool bias = !cfg_.use_batchnorm;
  layers_.emplace_back(cfg_.z_dim, channels[0], 4, 1, 0, bias);
  for (int i = 0; i < cfg_.stages; ++i) {
    const bool last = i + 1 == cfg_.stages;
    layers_.emplace_back(channels[i], channels[i + 1], 4, 2, 1, bias || last);
  }
  if (cfg_.use_batchnorm) {
    for (int i = 0; i < cfg_.stages; ++i) norms_.emplace_back(channels[i]);
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    init_normal(layers_[i].weight().mutable_value(), cfg_.weight_init_scale, rng);
    add_submodule("deconv" + std::to_string(i), layers_[i]);
  }
  for (std::size_t i = 0; i < norms_.size(); ++i) {
    init_normal(norms_[i].gamma().mutable_value(), 0.02f, rng, 1.0f);
    add_submodule("norm" + std::to_string(i), norms_[i]);
  }
}

Var Generator::forward(const Var& z, bool training) {
  if (z.shape().c != cfg_.z_dim || z.shape().h != 1 || z.shape().w != 1) {
    throw Error(ErrorCode::ShapeMismatch, "generator expects (b, 100, 1, 1) latents, got " + z.shape().str());
  }
  Var h = z;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 == layers_.size()) return nn::tanh_unit(h);
    if (cfg_.use_batchnorm) h = norms_[i].forward(h, training);
    h = nn::relu(h);
  }
  return h;
}

std::vector<int> Generator::layer_channels() const {
  std::vector<int> out;
  for (const auto& l : layers_) out.push_back(l.out_channels());
  return out;
}

Critic::Critic(const CriticConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int in = 1;
  for (int i = 0; i < cfg_.stages; ++i) {
    const int out = cfg_.base_channels >> (cfg_.stages - 1 - i);
    layers_.emplace_back(in, out, 4, 2, 1, false);
    in = out;
  }
  layers_.emplace_back(in, 1, 4, 1, 0, true);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    init_normal(layers_[i].weight().mutable_value(), cfg_.weight_init_scale, rng);
    add_submodule("conv" + std::to_string(i), layers_[i]);
  }
}

Var Critic::forward(const Var& x) const {
  const int size = cfg_.input_size();
  if (x.shape().c != 1 || x.shape().h != size || x.shape().w != size) {
    throw Error(ErrorCode::ShapeMismatch, "critic expects (b, 1, 64, 64) images, got " + x.shape().str());
  }
  Var h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h = nn::leaky_relu(layers_[i].forward(h), cfg_.lrelu_slope);
  return layers_.back().forward(h);
}

Generator build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, 11);
  return Generator(cfg, rng);
}

Critic build_critic(const CriticConfig& cfg, std::uint64_t seed) {
  Rng rng = make_rng(seed, 12);
  return Critic(cfg, rng);
}

void clip_weights(Critic& critic, double c) {
  const float limit = float(c);
  for (auto p : critic.parameter_vars()) {
    auto& a = p.mutable_value().array();
    a = a.max(-limit).min(limit);
  }
}

Tensor sample_latents(int n, int z_dim, Rng& rng) {
  Tensor z(Shape{n, z_dim, 1, 1});
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : z.array()) v = normal(rng);
  return z;
}

Tensor stack_images(std::span<const ImageF> images) {
  if (images.empty()) throw Error(ErrorCode::EmptyBatch, "no images to stack");
  const int h = int(images[0].rows()), w = int(images[0].cols());
  Tensor out(Shape{int(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rows() != h || images[i].cols() != w) throw Error(ErrorCode::ShapeMismatch, "image sizes differ");
    std::copy_n(images[i].data(), images[i].size(), out.sample(int(i)));
  }
  return out;
}

ImageF unstack_image(const Tensor& batch, int index) {
  const Shape s = batch.shape();
  if (s.c != 1 || index < 0 || index >= s.n) throw Error(ErrorCode::ShapeMismatch, "bad image index or channels");
  return Eigen::Map<const ImageF>(batch.sample(index), s.h, s.w);
}

namespace {

nlohmann::json generator_config_json(const GeneratorConfig& g) { return {{"generator", to_json(g)}}; }
nlohmann::json critic_config_json(const CriticConfig& c) { return {{"critic", to_json(c)}}; }

// Seeded epoch-shuffled batch sampler.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, Rng& rng) : order_(n), rng_(rng) { std::iota(order_.begin(), order_.end(), 0); }

  std::vector<std::size_t> next(int batch) {
    std::vector<std::size_t> out;
    while (int(out.size()) < batch) {
      if (pos_ == 0) std::shuffle(order_.begin(), order_.end(), rng_);
      out.push_back(order_[pos_]);
      pos_ = (pos_ + 1) % order_.size();
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  Rng& rng_;
  std::size_t pos_ = 0;
};

Tensor gather(std::span<const ImageF> images, const std::vector<std::size_t>& idx) {
  std::vector<ImageF> picked;
  picked.reserve(idx.size());
  for (auto i : idx) picked.push_back(images[i]);
  return stack_images(picked);
}

Tensor seed_tensor(const ScoreVector<float>& grad, const Shape& shape) {
  return Tensor(shape, Eigen::ArrayXf(grad.array()));
}

}  // namespace

WganResult train_wgan(std::span<const ImageF> lq_images, const GeneratorConfig& gen_cfg, const CriticConfig& critic_cfg,
                      const WganTrainConfig& cfg, const WganSink& sink) {
  gen_cfg.validate();
  critic_cfg.validate();
  cfg.validate();
  if (int(lq_images.size()) < cfg.batch_size) {
    throw Error(ErrorCode::DatasetTooSmall, "need at least batch_size (" + std::to_string(cfg.batch_size) +
                                                ") LQ images, have " + std::to_string(lq_images.size()));
  }
  for (const auto& img : lq_images) {
    if (img.rows() != kLqSize || img.cols() != kLqSize) throw Error(ErrorCode::ShapeMismatch, "LQ images must be 64x64");
  }

  Generator gen = build_generator(gen_cfg, cfg.seed);
  Critic critic = build_critic(critic_cfg, cfg.seed);
  clip_weights(critic, cfg.clip_c);
  nn::RmsProp gen_opt(gen.parameter_vars(), float(cfg.lr));
  nn::RmsProp critic_opt(critic.parameter_vars(), float(cfg.lr));

  Rng data_rng = make_rng(cfg.seed, 21);
  Rng noise_rng = make_rng(cfg.seed, 22);
  BatchSampler sampler(lq_images.size(), data_rng);

  WganResult result;
  auto snapshot = [&](long step) {
    result.generator =
        capture_checkpoint(gen, CheckpointRole::Generator, std::uint64_t(step), cfg.seed, generator_config_json(gen_cfg));
    result.critic =
        capture_checkpoint(critic, CheckpointRole::Critic, std::uint64_t(step), cfg.seed, critic_config_json(critic_cfg));
  };

  for (long step = 1; step <= cfg.max_steps; ++step) {
    WganTelemetry t;
    t.step = step;
    for (int k = 0; k < cfg.n_critic; ++k) {
      const Var real(gather(lq_images, sampler.next(cfg.batch_size)));
      Var fake;
      {
        nn::NoGradGuard no_grad;
        fake = gen.forward(Var(sample_latents(cfg.batch_size, gen_cfg.z_dim, noise_rng)), true);
      }
      critic_opt.zero_grad();
      const Var real_scores = critic.forward(real);
      const Var fake_scores = critic.forward(fake);
      const auto& r = real_scores.value().array();
      const auto& f = fake_scores.value().array();
      t.critic_loss = wgan_critic_loss(r.cast<double>(), f.cast<double>());
      if (!std::isfinite(t.critic_loss)) {
        throw Error(ErrorCode::NonFiniteLoss, "critic loss is not finite at step " + std::to_string(step));
      }
      const auto grads = wgan_critic_loss_gradients(r, f);
      nn::backward(real_scores, seed_tensor(grads.real, real_scores.shape()));
      nn::backward(fake_scores, seed_tensor(grads.fake, fake_scores.shape()));
      critic_opt.step();
      clip_weights(critic, cfg.clip_c);
      if (sink.after_critic_update) sink.after_critic_update(critic);
    }
    t.em_estimate = -t.critic_loss;

    gen_opt.zero_grad();
    const Var fake = gen.forward(Var(sample_latents(cfg.batch_size, gen_cfg.z_dim, noise_rng)), true);
    const Var scores = critic.forward(fake);
    t.gen_loss = wgan_generator_loss(scores.value().array().cast<double>());
    if (!std::isfinite(t.gen_loss)) {
      throw Error(ErrorCode::NonFiniteLoss, "generator loss is not finite at step " + std::to_string(step));
    }
    nn::backward(scores, seed_tensor(wgan_generator_loss_gradient(scores.value().array()), scores.shape()));
    gen_opt.step();
    critic.zero_grad();

    result.telemetry.push_back(t);
    if (sink.on_step) sink.on_step(t);
    if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && sink.on_checkpoint) {
      snapshot(step);
      sink.on_checkpoint(result.generator, result.critic);
    }
  }
  snapshot(cfg.max_steps);
  return result;
}

WganResult train_wgan(const DatasetManifest& data, const GeneratorConfig& gen_cfg, const CriticConfig& critic_cfg,
                      const WganTrainConfig& cfg, const WganSink& sink) {
  std::vector<ImageF> images;
  images.reserve(data.size());
  for (const auto& e : data.entries) images.push_back(load_lq(data, e));
  spdlog::info("loaded {} LQ images from manifest", images.size());
  return train_wgan(images, gen_cfg, critic_cfg, cfg, sink);
}

Generator generator_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.role != CheckpointRole::Generator) {
    throw Error(ErrorCode::IncompatibleCheckpoints, "expected a generator checkpoint, got " + std::string(to_string(ckpt.role)));
  }
  Generator gen = build_generator(generator_config_from_json(ckpt.config.at("generator")), 0);
  restore_checkpoint(gen, ckpt);
  return gen;
}

Critic critic_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.role != CheckpointRole::Critic) {
    throw Error(ErrorCode::IncompatibleCheckpoints, "expected a critic checkpoint, got " + std::string(to_string(ckpt.role)));
  }
  Critic critic = build_critic(critic_config_from_json(ckpt.config.at("critic")), 0);
  restore_checkpoint(critic, ckpt);
  return critic;
}

Tensor generate_lowres(const Checkpoint& generator, int n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::EmptyBatch, "generate_lowres: n must be >= 1");
  Generator gen = generator_from_checkpoint(generator);
  Rng rng = make_rng(seed, 31);
  const int size = gen.config().output_size();
  Tensor out(Shape{n, 1, size, size});
  nn::NoGradGuard no_grad;
  constexpr int kChunk = 64;
  for (int start = 0; start < n; start += kChunk) {
    const int count = std::min(kChunk, n - start);
    const Var images = gen.forward(Var(sample_latents(count, gen.config().z_dim, rng)), false);
    std::copy_n(images.value().data(), images.value().size(), out.sample(start));
  }
  return out;
}

}  // namespace fpgen
