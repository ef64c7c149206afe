#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fpgen/adversarial_loss.hpp"
#include "fpgen/checkpoint.hpp"
#include "fpgen/image.hpp"
#include "fpgen/manifest.hpp"
#include "fpgen/module.hpp"

namespace fpgen {

struct RRDBConfig {
  int n_blocks = 23;
  int sub_blocks_per_block = 3;
  int convs_per_sub_block = 5;
  int channels = 64;
  int kernel = 3;
  int growth_channels = 32;
  float beta = 0.2f;
  float lrelu_slope = 0.2f;
  int upsample_stages = 2;
  float weight_init_scale = 0.1f;

  // Full contract, including 0 < beta <= 1.
  void validate() const;
  // Structural checks only; beta may be 0 so the residual path can be nullified.
  void validate_structure() const;
};

// Strided-convolution stack 256 -> 4, channels doubling from base_channels up to
// max_channels, then a 4x4 valid convolution to one score.
struct SRDiscriminatorConfig {
  int base_channels = 64;
  int max_channels = 512;
  float lrelu_slope = 0.2f;
  float weight_init_scale = 0.02f;

  void validate() const;
};

struct SRTrainConfig {
  double adv_weight = 1.0;
  double content_weight = 0.0;
  double lr = 1e-4;
  int batch_size = 16;
  int max_steps = 1000;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;

  void validate() const;
};

struct PairedSample {
  ImageF lq;  // 64x64
  ImageF hq;  // 256x256
  std::string id;
};

// Dense sub-block: each conv sees the concatenation of the input and all earlier
// outputs; the last conv maps back to the trunk width. y = x + beta * conv_k(...).
class DenseSubBlock : public nn::Module {
 public:
  DenseSubBlock(const RRDBConfig& cfg, Rng& rng);
  nn::Var forward(const nn::Var& x) const;
  int conv_count() const { return int(convs_.size()); }

 private:
  std::vector<nn::Conv2d> convs_;
  float beta_, slope_;
};

class RRDB : public nn::Module {
 public:
  RRDB(const RRDBConfig& cfg, Rng& rng);

  // F(x): the chained sub-blocks minus their input, so zero weights give F = 0.
  nn::Var residual(const nn::Var& x) const;
  nn::Var forward(const nn::Var& x) const;

  float beta() const { return beta_; }
  const std::vector<DenseSubBlock>& sub_blocks() const { return sub_blocks_; }

 private:
  std::vector<DenseSubBlock> sub_blocks_;
  float beta_;
};

// y = x + beta * F(x).
inline nn::Var rrdb_forward(const RRDB& block, const nn::Var& x) { return block.forward(x); }

class SRGenerator : public nn::Module {
 public:
  SRGenerator(const RRDBConfig& cfg, Rng& rng);

  // (b, 1, 64, 64) -> (b, 1, 256, 256), clamped to [0,1].
  nn::Var forward(const nn::Var& lq) const;

  const RRDBConfig& config() const { return cfg_; }
  const std::vector<RRDB>& blocks() const { return blocks_; }
  int block_conv_count() const;
  // Head, trunk, one per upsample stage, final.
  int skeleton_conv_count() const { return 3 + int(upsample_convs_.size()); }

 private:
  RRDBConfig cfg_;
  nn::Conv2d head_;
  std::vector<RRDB> blocks_;
  nn::Conv2d trunk_;
  std::vector<nn::Conv2d> upsample_convs_;
  nn::Conv2d final_;
};

class SRDiscriminator : public nn::Module {
 public:
  SRDiscriminator(const SRDiscriminatorConfig& cfg, Rng& rng);
  // (b, 1, 256, 256) -> (b, 1, 1, 1) raw scores C(x).
  nn::Var forward(const nn::Var& x) const;
  const SRDiscriminatorConfig& config() const { return cfg_; }

 private:
  SRDiscriminatorConfig cfg_;
  std::vector<nn::Conv2d> layers_;
};

SRGenerator build_sr_generator(const RRDBConfig& cfg, std::uint64_t seed);
SRDiscriminator build_sr_discriminator(const SRDiscriminatorConfig& cfg, std::uint64_t seed);

// Loads every manifest entry as a pair; LQ is re-derived from HQ when absent.
std::vector<PairedSample> load_pairs(const DatasetManifest& data);

// Nearest-neighbour 4x upsample of LQ, mean |. - HQ| over all pairs.
double nearest_baseline_l1(std::span<const PairedSample> pairs);

struct SRTelemetry {
  long step = 0;
  double l_d = 0.0;
  double l_g = 0.0;
  double l1 = 0.0;
};

struct SRSink {
  std::function<void(const SRTelemetry&)> on_step;
  std::function<void(const Checkpoint& generator, const Checkpoint& discriminator)> on_checkpoint;
};

struct SRResult {
  Checkpoint generator;
  Checkpoint discriminator;
  std::vector<SRTelemetry> telemetry;
};

// Per step: one discriminator update on L_D, then one generator update on
// adv_weight * L_G + content_weight * L1. Both use Adam.
SRResult train_sr(std::span<const PairedSample> data, const SRTrainConfig& cfg, const RRDBConfig& rrdb,
                  const SRDiscriminatorConfig& disc, const SRSink& sink = {});

SRGenerator sr_generator_from_checkpoint(const Checkpoint& ckpt);

// Pure forward pass of a (b, 1, 64, 64) batch.
nn::Tensor super_resolve(const Checkpoint& generator, const nn::Tensor& lq);
nn::Tensor super_resolve(const SRGenerator& generator, const nn::Tensor& lq);

}  // namespace fpgen
