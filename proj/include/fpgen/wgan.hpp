#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fpgen/adversarial_loss.hpp"
#include "fpgen/checkpoint.hpp"
#include "fpgen/image.hpp"
#include "fpgen/manifest.hpp"
#include "fpgen/module.hpp"

namespace fpgen {

inline constexpr int kLatentDim = 100;

struct GeneratorConfig {
  int z_dim = kLatentDim;
  int base_channels = 512;
  int stages = 4;  // 4 -> 8 -> 16 -> 32 -> 64
  bool use_batchnorm = true;
  float weight_init_scale = 0.02f;

  void validate() const;
  int output_size() const { return 4 << stages; }
  // Channels after the projection and after each stage: base, base/2, ..., 1.
  std::vector<int> channel_schedule() const;
};

// Mirror of the generator: bias-free strided convolutions from 64x64 down to
// 4x4, then a 4x4 valid convolution to one unbounded score. Without biases the
// clipped critic stays positively homogeneous, so small weights do not wash out
// the LeakyReLU kinks.
struct CriticConfig {
  int base_channels = 512;
  int stages = 4;
  float lrelu_slope = 0.2f;
  float weight_init_scale = 0.02f;

  void validate() const;
  int input_size() const { return 4 << stages; }
};

struct WganTrainConfig {
  double clip_c = 0.01;
  int n_critic = 5;
  double lr = 5e-5;
  int batch_size = 64;
  int max_steps = 1000;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables intermediate checkpoints

  void validate() const;
};

class Generator : public nn::Module {
 public:
  Generator(const GeneratorConfig& cfg, Rng& rng);

  // z: (b, z_dim, 1, 1) -> (b, 1, 64, 64) in [0,1].
  nn::Var forward(const nn::Var& z, bool training);

  const GeneratorConfig& config() const { return cfg_; }
  // Output channels of each built transposed convolution, in order.
  std::vector<int> layer_channels() const;

 private:
  GeneratorConfig cfg_;
  std::vector<nn::ConvTranspose2d> layers_;
  std::vector<nn::BatchNorm2d> norms_;
};

class Critic : public nn::Module {
 public:
  Critic(const CriticConfig& cfg, Rng& rng);

  // (b, 1, 64, 64) -> (b, 1, 1, 1) unbounded scores.
  nn::Var forward(const nn::Var& x) const;
  const CriticConfig& config() const { return cfg_; }

 private:
  CriticConfig cfg_;
  std::vector<nn::Conv2d> layers_;
};

Generator build_generator(const GeneratorConfig& cfg, std::uint64_t seed);
Critic build_critic(const CriticConfig& cfg, std::uint64_t seed);

// Every critic parameter p becomes min(max(p, -c), c).
void clip_weights(Critic& critic, double c);

// (n, z_dim, 1, 1) i.i.d. standard normal.
nn::Tensor sample_latents(int n, int z_dim, Rng& rng);

// Stacks equally sized images into (n, 1, h, w).
nn::Tensor stack_images(std::span<const ImageF> images);
ImageF unstack_image(const nn::Tensor& batch, int index);

struct WganTelemetry {
  long step = 0;
  double critic_loss = 0.0;
  double gen_loss = 0.0;
  double em_estimate = 0.0;  // mean(real) - mean(fake) at the last critic update
};

struct WganSink {
  std::function<void(const WganTelemetry&)> on_step;
  std::function<void(const Checkpoint& generator, const Checkpoint& critic)> on_checkpoint;
  std::function<void(const Critic&)> after_critic_update;
};

struct WganResult {
  Checkpoint generator;
  Checkpoint critic;
  std::vector<WganTelemetry> telemetry;
};

// Alternates n_critic RMSProp critic updates (each followed by weight clipping)
// with one generator update.
WganResult train_wgan(std::span<const ImageF> lq_images, const GeneratorConfig& gen_cfg, const CriticConfig& critic_cfg,
                      const WganTrainConfig& cfg, const WganSink& sink = {});
WganResult train_wgan(const DatasetManifest& data, const GeneratorConfig& gen_cfg, const CriticConfig& critic_cfg,
                      const WganTrainConfig& cfg, const WganSink& sink = {});

Generator generator_from_checkpoint(const Checkpoint& ckpt);
Critic critic_from_checkpoint(const Checkpoint& ckpt);

// n samples of (1, 64, 64) from latents drawn with `seed`; inference-mode batch norm.
nn::Tensor generate_lowres(const Checkpoint& generator, int n, std::uint64_t seed);

}  // namespace fpgen
