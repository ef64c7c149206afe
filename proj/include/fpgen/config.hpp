#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fpgen/data_prep.hpp"
#include "fpgen/eval.hpp"
#include "fpgen/ridge_synth.hpp"
#include "fpgen/sr.hpp"
#include "fpgen/wgan.hpp"
#include "json.hpp"

namespace fpgen {

// Serialisers emit every field; readers accept any subset, reject unknown keys and
// wrongly typed values with a ConfigError naming the dotted key, then validate.
nlohmann::json to_json(const SegmentationConfig& c);
nlohmann::json to_json(const SynthConfig& c);
nlohmann::json to_json(const GeneratorConfig& c);
nlohmann::json to_json(const CriticConfig& c);
nlohmann::json to_json(const WganTrainConfig& c);
nlohmann::json to_json(const RRDBConfig& c);
nlohmann::json to_json(const SRDiscriminatorConfig& c);
nlohmann::json to_json(const SRTrainConfig& c);
nlohmann::json to_json(const TrainOptions& c);

SegmentationConfig segmentation_config_from_json(const nlohmann::json& j, const std::string& path = "preprocess");
SynthConfig synth_config_from_json(const nlohmann::json& j, const std::string& path = "synth");
GeneratorConfig generator_config_from_json(const nlohmann::json& j, const std::string& path = "gan.generator");
CriticConfig critic_config_from_json(const nlohmann::json& j, const std::string& path = "gan.critic");
WganTrainConfig wgan_train_config_from_json(const nlohmann::json& j, const std::string& path = "gan.train");
// Structural validation only, so checkpoints of beta = 0 networks reload.
RRDBConfig rrdb_config_from_json(const nlohmann::json& j, const std::string& path = "sr.rrdb");
SRDiscriminatorConfig sr_discriminator_config_from_json(const nlohmann::json& j,
                                                        const std::string& path = "sr.discriminator");
SRTrainConfig sr_train_config_from_json(const nlohmann::json& j, const std::string& path = "sr.train");

struct RunConfig {
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::string device = "cpu";
  std::string log_level = "info";

  SegmentationConfig preprocess;

  struct Synth {
    SynthConfig config;
    int n = 200;
    std::vector<NcicClass> classes;  // empty = default mix
  } synth;

  struct Gan {
    GeneratorConfig generator;
    CriticConfig critic;
    WganTrainConfig train;
  } gan;

  struct Sr {
    RRDBConfig rrdb;
    SRDiscriminatorConfig discriminator;
    SRTrainConfig train;
  } sr;

  struct Generate {
    int n = 10;
    int batch_size = 8;
  } generate;

  EvaluationConfig evaluate;

  // Copies `seed` into every section whose seed was not given explicitly.
  void propagate_seed();
  // Full validation of every section; keys in errors are dotted paths.
  void validate() const;

  // Sections that set their own seed; propagate_seed leaves them alone.
  std::vector<std::string> explicit_seeds;
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& file);

// Parses "W,L,R" into classes; throws ConfigError under `key`.
std::vector<NcicClass> parse_class_list(const std::string& text, const std::string& key = "classes");

}  // namespace fpgen
