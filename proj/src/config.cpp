#include "fpgen/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fpgen/error.hpp"

namespace fpgen {

using nlohmann::json;

namespace {

// Shortest decimal that reads back as the same float, so 0.2f serialises as 0.2.
double decimal(float v) {
  char buf[32];
  const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  *end = '\0';
  return std::strtod(buf, nullptr);
}


std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Runs fn and re-raises its ConfigError with `path` prepended to the key.
template <typename F>
void under(const std::string& path, F&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError(join(path, e.key()), e.message());
  }
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return false;
    out = convert<T>(*it, join(path_, key));
    return true;
  }

  const json* object(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    if (!it->is_object()) throw ConfigError(join(path_, key), "expected an object");
    return &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError(join(path_, k), "unknown key");
    }
  }

  const std::string& path() const { return path_; }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& key) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(key, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError(key, "expected a non-negative integer");
      }
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(key, "expected an integer");
      const auto x = v.get<std::int64_t>();
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
        throw ConfigError(key, "integer out of range");
      }
      return T(x);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(key, "expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(key, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) throw ConfigError(key, "expected an array of strings");
      T out;
      for (const auto& e : v) {
        if (!e.is_string()) throw ConfigError(key, "expected an array of strings");
        out.push_back(e.get<std::string>());
      }
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string, std::less<>> seen_;
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

NcicClass class_from_string(const std::string& s, const std::string& key) {
  if (s.size() != 1) throw ConfigError(key, "expected one of A, L, R, T, W");
  try {
    const NcicClass c = parse_ncic_class(char(std::toupper(static_cast<unsigned char>(s[0]))));
    if (c == NcicClass::S) throw ConfigError(key, "class S cannot be synthesised");
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error&) {
    throw ConfigError(key, "unknown class '" + s + "'");
  }
}

}  // namespace

std::vector<NcicClass> parse_class_list(const std::string& text, const std::string& key) {
  std::vector<NcicClass> out;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    part.erase(std::remove_if(part.begin(), part.end(), [](unsigned char c) { return std::isspace(c); }), part.end());
    if (!part.empty()) out.push_back(class_from_string(part, key));
  }
  if (out.empty()) throw ConfigError(key, "no classes given");
  return out;
}

// ---- data-prep ----

json to_json(const SegmentationConfig& c) {
  return {{"threshold_method", c.threshold_method == ThresholdMethod::Otsu ? "otsu" : "fixed"},
          {"fixed_level", c.fixed_level},
          {"morph_close_radius", c.morph_close_radius},
          {"pad_mode", c.pad_mode == PadMode::White ? "white" : "replicate"},
          {"output_hq", c.output_hq},
          {"output_lq", c.output_lq},
          {"min_foreground_fraction", c.min_foreground_fraction},
          {"max_foreground_fraction", c.max_foreground_fraction},
          {"min_component_fraction", c.min_component_fraction}};
}

SegmentationConfig segmentation_config_from_json(const json& j, const std::string& path) {
  SegmentationConfig c;
  Reader r(j, path);
  std::string method, pad;
  if (r.get("threshold_method", method)) {
    method = lower(method);
    if (method != "otsu" && method != "fixed") throw ConfigError(join(path, "threshold_method"), "expected otsu or fixed");
    c.threshold_method = method == "otsu" ? ThresholdMethod::Otsu : ThresholdMethod::Fixed;
  }
  r.get("fixed_level", c.fixed_level);
  r.get("morph_close_radius", c.morph_close_radius);
  if (r.get("pad_mode", pad)) {
    pad = lower(pad);
    if (pad != "white" && pad != "replicate") throw ConfigError(join(path, "pad_mode"), "expected white or replicate");
    c.pad_mode = pad == "white" ? PadMode::White : PadMode::Replicate;
  }
  r.get("output_hq", c.output_hq);
  r.get("output_lq", c.output_lq);
  r.get("min_foreground_fraction", c.min_foreground_fraction);
  r.get("max_foreground_fraction", c.max_foreground_fraction);
  r.get("min_component_fraction", c.min_component_fraction);
  r.finish();
  under(path, [&] { c.validate(); });
  return c;
}

// ---- ridge-synth ----

json to_json(const SynthConfig& c) {
  return {{"size", c.size},
          {"class", std::string(1, to_char(c.pattern))},
          {"noise_level", c.noise_level},
          {"iterations", c.iterations},
          {"seed", c.seed},
          {"min_frequency", c.min_frequency},
          {"max_frequency", c.max_frequency},
          {"frequency_variation", c.frequency_variation},
          {"perturbation_amplitude", c.perturbation_amplitude},
          {"singular_jitter", c.singular_jitter},
          {"impulse_density", c.impulse_density}};
}

SynthConfig synth_config_from_json(const json& j, const std::string& path) {
  SynthConfig c;
  Reader r(j, path);
  r.get("size", c.size);
  std::string cls;
  if (r.get("class", cls)) c.pattern = class_from_string(cls, join(path, "class"));
  r.get("noise_level", c.noise_level);
  r.get("iterations", c.iterations);
  r.get("seed", c.seed);
  r.get("min_frequency", c.min_frequency);
  r.get("max_frequency", c.max_frequency);
  r.get("frequency_variation", c.frequency_variation);
  r.get("perturbation_amplitude", c.perturbation_amplitude);
  r.get("singular_jitter", c.singular_jitter);
  r.get("impulse_density", c.impulse_density);
  r.finish();
  under(path, [&] { c.validate(); });
  return c;
}

// ---- gan-phase1 ----

json to_json(const GeneratorConfig& c) {
  return {{"z_dim", c.z_dim},
          {"base_channels", c.base_channels},
          {"stages", c.stages},
          {"use_batchnorm", c.use_batchnorm},
          {"weight_init_scale", decimal(c.weight_init_scale)}};
}

GeneratorConfig generator_config_from_json(const json& j, const std::string& path) {
  GeneratorConfig c;
  Reader r(j, path);
  r.get("z_dim", c.z_dim);
  r.get("base_channels", c.base_channels);
  r.get("stages", c.stages);
  r.get("use_batchnorm", c.use_batchnorm);
  r.get("weight_init_scale", c.weight_init_scale);
  r.finish();
  under(path, [&] { c.validate(); });
  return c;
}

json to_json(const CriticConfig& c) {
  return {{"base_channels", c.base_channels},
          {"stages", c.stages},
          {"lrelu_slope", decimal(c.lrelu_slope)},
          {"weight_init_scale", decimal(c.weight_init_scale)}};
}

CriticConfig critic_config_from_json(const json& j, const std::string& path) {
  CriticConfig c;
  Reader r(j, path);
  r.get("base_channels", c.base_channels);
  r.get("stages", c.stages);
  r.get("lrelu_slope", c.lrelu_slope);
  r.get("weight_init_scale", c.weight_init_scale);
  r.finish();
  under(path, [&] { c.validate(); });
  return c;
}

json to_json(const WganTrainConfig& c) {
  return {{"clip_c", c.clip_c},       {"n_critic", c.n_critic}, {"lr", c.lr},
          {"batch_size", c.batch_size}, {"max_steps", c.max_steps}, {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

WganTrainConfig wgan_train_config_from_json(const json& j, const std::string& path) {
  WganTrainConfig c;
  Reader r(j, path);
  r.get("clip_c", c.clip_c);
  r.get("n_critic", c.n_critic);
  r.get("lr", c.lr);
  r.get("batch_size", c.batch_size);
  r.get("max_steps", c.max_steps);
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.finish();
  under(path, [&] { c.validate(); });
  return c;
}

// ---- sr-phase2 ----

json to_json(const RRDBConfig& c) {
  return {{"n_blocks", c.n_blocks},
          {"sub_blocks_per_block", c.sub_blocks_per_block},
          {"convs_per_sub_block", c.convs_per_sub_block},
          {"channels", c.channels},
          {"kernel", c.kernel},
          {"growth_channels", c.growth_channels},
          {"beta", decimal(c.beta)},
          {"lrelu_slope", decimal(c.lrelu_slope)},
          {"upsample_stages", c.upsample_stages},
          {"weight_init_scale", decimal(c.weight_init_scale)}};
}

RRDBConfig rrdb_config_from_json(const json& j, const std::string& path) {
  RRDBConfig c;
  Reader r(j, path);
  r.get("n_blocks", c.n_blocks);
  r.get("sub_blocks_per_block", c.sub_blocks_per_block);
  r.get("convs_per_sub_block", c.convs_per_sub_block);
  r.get("channels", c.channels);
  r.get("kernel", c.kernel);
  r.get("growth_channels", c.growth_channels);
  r.get("beta", c.beta);
  r.get("lrelu_slope", c.lrelu_slope);
  r.get("upsample_stages", c.upsample_stages);
  r.get("weight_init_scale", c.weight_init_scale);
  r.finish();
  under(path, [&] { c.validate_structure(); });
  return c;
}

json to_json(const SRDiscriminatorConfig& c) {
  return {{"base_channels", c.base_channels},
          {"max_channels", c.max_channels},
          {"lrelu_slope", decimal(c.lrelu_slope)},
          {"weight_init_scale", decimal(c.weight_init_scale)}};
}

SRDiscriminatorConfig sr_discriminator_config_from_json(const json& j, const std::string& path) {
  SRDiscriminatorConfig c;
  Reader r(j, path);
  r.get("base_channels", c.base_channels);
  r.get("max_channels", c.max_channels);
  r.get("lrelu_slope", c.lrelu_slope);
  r.get("weight_init_scale", c.weight_init_scale);
  r.finish();
  under(path, [&] { c.validate(); });
  return c;
}

json to_json(const SRTrainConfig& c) {
  return {{"adv_weight", c.adv_weight}, {"content_weight", c.content_weight}, {"lr", c.lr},
          {"batch_size", c.batch_size}, {"max_steps", c.max_steps},           {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

SRTrainConfig sr_train_config_from_json(const json& j, const std::string& path) {
  SRTrainConfig c;
  Reader r(j, path);
  r.get("adv_weight", c.adv_weight);
  r.get("content_weight", c.content_weight);
  r.get("lr", c.lr);
  r.get("batch_size", c.batch_size);
  r.get("max_steps", c.max_steps);
  r.get("seed", c.seed);
  r.get("checkpoint_every", c.checkpoint_every);
  r.finish();
  under(path, [&] { c.validate(); });
  return c;
}

// ---- eval-harness ----

json to_json(const TrainOptions& c) {
  return {{"logreg", {{"c", c.logreg.c}, {"max_iter", c.logreg.max_iter}, {"tol", c.logreg.tol},
                      {"history", c.logreg.history}}},
          {"svm", {{"c", c.svm.c}, {"max_iter", c.svm.max_iter}, {"tol", c.svm.tol}}},
          {"forest", {{"trees", c.forest.trees}, {"min_samples_split", c.forest.min_samples_split},
                      {"max_depth", c.forest.max_depth}}},
          {"mlp", {{"optimizer", c.mlp.optimizer == MlpOptimizer::Adam ? "adam" : "sgd"},
                   {"lr", c.mlp.lr},
                   {"batch_size", c.mlp.batch_size},
                   {"max_epochs", c.mlp.max_epochs},
                   {"patience", c.mlp.patience},
                   {"tol", c.mlp.tol},
                   {"l2", c.mlp.l2}}}};
}

namespace {

json evaluate_json(const EvaluationConfig& c) {
  std::vector<std::string> models;
  for (const auto& m : c.models) models.push_back(m.key());
  json j = to_json(c.train);
  j["models"] = models;
  j["use_lq"] = c.split.use_lq;
  j["margin_roc"] = c.margin_roc;
  j["seed"] = c.split.seed;
  return j;
}

EvaluationConfig evaluate_from_json(const json& j, const std::string& path) {
  EvaluationConfig c;
  Reader r(j, path);
  std::vector<std::string> models;
  if (r.get("models", models)) {
    c.models.clear();
    under(path, [&] {
      for (const auto& m : models) c.models.push_back(ClassifierSpec::parse(m));
    });
    if (c.models.empty()) throw ConfigError(join(path, "models"), "no models listed");
  }
  r.get("use_lq", c.split.use_lq);
  r.get("margin_roc", c.margin_roc);
  if (r.get("seed", c.split.seed)) c.train.seed = c.split.seed;
  if (const json* s = r.object("logreg")) {
    Reader o(*s, join(path, "logreg"));
    o.get("c", c.train.logreg.c);
    o.get("max_iter", c.train.logreg.max_iter);
    o.get("tol", c.train.logreg.tol);
    o.get("history", c.train.logreg.history);
    o.finish();
  }
  if (const json* s = r.object("svm")) {
    Reader o(*s, join(path, "svm"));
    o.get("c", c.train.svm.c);
    o.get("max_iter", c.train.svm.max_iter);
    o.get("tol", c.train.svm.tol);
    o.finish();
  }
  if (const json* s = r.object("forest")) {
    Reader o(*s, join(path, "forest"));
    o.get("trees", c.train.forest.trees);
    o.get("min_samples_split", c.train.forest.min_samples_split);
    o.get("max_depth", c.train.forest.max_depth);
    o.finish();
  }
  if (const json* s = r.object("mlp")) {
    Reader o(*s, join(path, "mlp"));
    std::string opt;
    if (o.get("optimizer", opt)) {
      opt = lower(opt);
      if (opt != "adam" && opt != "sgd") throw ConfigError(join(path, "mlp.optimizer"), "expected adam or sgd");
      c.train.mlp.optimizer = opt == "adam" ? MlpOptimizer::Adam : MlpOptimizer::Sgd;
    }
    o.get("lr", c.train.mlp.lr);
    o.get("batch_size", c.train.mlp.batch_size);
    o.get("max_epochs", c.train.mlp.max_epochs);
    o.get("patience", c.train.mlp.patience);
    o.get("tol", c.train.mlp.tol);
    o.get("l2", c.train.mlp.l2);
    o.finish();
  }
  r.finish();
  return c;
}

void validate_train_options(const TrainOptions& t) {
  if (!(t.logreg.c > 0)) throw ConfigError("logreg.c", "must be > 0");
  if (t.logreg.max_iter < 1) throw ConfigError("logreg.max_iter", "must be >= 1");
  if (!(t.logreg.tol > 0)) throw ConfigError("logreg.tol", "must be > 0");
  if (t.logreg.history < 1) throw ConfigError("logreg.history", "must be >= 1");
  if (!(t.svm.c > 0)) throw ConfigError("svm.c", "must be > 0");
  if (t.svm.max_iter < 1) throw ConfigError("svm.max_iter", "must be >= 1");
  if (!(t.svm.tol > 0)) throw ConfigError("svm.tol", "must be > 0");
  if (t.forest.trees < 1) throw ConfigError("forest.trees", "must be >= 1");
  if (t.forest.min_samples_split < 2) throw ConfigError("forest.min_samples_split", "must be >= 2");
  if (t.forest.max_depth < 0) throw ConfigError("forest.max_depth", "must be >= 0");
  if (!(t.mlp.lr > 0)) throw ConfigError("mlp.lr", "must be > 0");
  if (t.mlp.batch_size < 1) throw ConfigError("mlp.batch_size", "must be >= 1");
  if (t.mlp.max_epochs < 1) throw ConfigError("mlp.max_epochs", "must be >= 1");
  if (t.mlp.patience < 1) throw ConfigError("mlp.patience", "must be >= 1");
  if (!(t.mlp.tol >= 0)) throw ConfigError("mlp.tol", "must be >= 0");
  if (!(t.mlp.l2 >= 0)) throw ConfigError("mlp.l2", "must be >= 0");
}

const std::vector<std::string> kLogLevels = {"trace", "debug", "info", "warn", "error", "off"};

}  // namespace

// ---- run config ----

void RunConfig::propagate_seed() {
  auto set = [&](const std::string& section, std::uint64_t& field) {
    if (std::find(explicit_seeds.begin(), explicit_seeds.end(), section) == explicit_seeds.end()) field = seed;
  };
  set("synth", synth.config.seed);
  set("gan.train", gan.train.seed);
  set("sr.train", sr.train.seed);
  set("evaluate", evaluate.split.seed);
  set("evaluate", evaluate.train.seed);
}

void RunConfig::validate() const {
  if (device != "cpu") throw ConfigError("device", "only \"cpu\" is available in this build");
  if (std::find(kLogLevels.begin(), kLogLevels.end(), log_level) == kLogLevels.end()) {
    throw ConfigError("log_level", "expected one of trace, debug, info, warn, error, off");
  }
  under("preprocess", [&] { preprocess.validate(); });
  under("synth", [&] { synth.config.validate(); });
  if (synth.n < 1) throw ConfigError("synth.n", "must be >= 1");
  under("gan.generator", [&] { gan.generator.validate(); });
  under("gan.critic", [&] { gan.critic.validate(); });
  under("gan.train", [&] { gan.train.validate(); });
  under("sr.rrdb", [&] { sr.rrdb.validate(); });
  under("sr.discriminator", [&] { sr.discriminator.validate(); });
  under("sr.train", [&] { sr.train.validate(); });
  if (generate.n < 1) throw ConfigError("generate.n", "must be >= 1");
  if (generate.batch_size < 1) throw ConfigError("generate.batch_size", "must be >= 1");
  if (evaluate.models.empty()) throw ConfigError("evaluate.models", "no models listed");
  under("evaluate", [&] { validate_train_options(evaluate.train); });
}

json to_json(const RunConfig& c) {
  std::vector<std::string> classes;
  for (auto k : c.synth.classes) classes.emplace_back(1, to_char(k));
  json synth = to_json(c.synth.config);
  synth["n"] = c.synth.n;
  synth["classes"] = classes;
  return {{"seed", c.seed},
          {"deterministic", c.deterministic},
          {"device", c.device},
          {"log_level", c.log_level},
          {"preprocess", to_json(c.preprocess)},
          {"synth", synth},
          {"gan", {{"generator", to_json(c.gan.generator)}, {"critic", to_json(c.gan.critic)}, {"train", to_json(c.gan.train)}}},
          {"sr",
           {{"rrdb", to_json(c.sr.rrdb)},
            {"discriminator", to_json(c.sr.discriminator)},
            {"train", to_json(c.sr.train)}}},
          {"generate", {{"n", c.generate.n}, {"batch_size", c.generate.batch_size}}},
          {"evaluate", evaluate_json(c.evaluate)}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("deterministic", c.deterministic);
  r.get("device", c.device);
  r.get("log_level", c.log_level);
  if (const json* s = r.object("preprocess")) c.preprocess = segmentation_config_from_json(*s, "preprocess");
  if (const json* s = r.object("synth")) {
    json rest = *s;
    if (rest.contains("n")) {
      if (!rest["n"].is_number_integer()) throw ConfigError("synth.n", "expected an integer");
      c.synth.n = rest["n"].get<int>();
      rest.erase("n");
    }
    if (rest.contains("classes")) {
      const json& list = rest["classes"];
      if (!list.is_array()) throw ConfigError("synth.classes", "expected an array of class letters");
      for (const auto& e : list) {
        if (!e.is_string()) throw ConfigError("synth.classes", "expected an array of class letters");
        c.synth.classes.push_back(class_from_string(e.get<std::string>(), "synth.classes"));
      }
      rest.erase("classes");
    }
    if (rest.contains("seed")) c.explicit_seeds.push_back("synth");
    c.synth.config = synth_config_from_json(rest, "synth");
  }
  if (const json* s = r.object("gan")) {
    Reader g(*s, "gan");
    if (const json* t = g.object("generator")) c.gan.generator = generator_config_from_json(*t, "gan.generator");
    if (const json* t = g.object("critic")) c.gan.critic = critic_config_from_json(*t, "gan.critic");
    if (const json* t = g.object("train")) {
      c.gan.train = wgan_train_config_from_json(*t, "gan.train");
      if (t->contains("seed")) c.explicit_seeds.push_back("gan.train");
    }
    g.finish();
  }
  if (const json* s = r.object("sr")) {
    Reader g(*s, "sr");
    if (const json* t = g.object("rrdb")) c.sr.rrdb = rrdb_config_from_json(*t, "sr.rrdb");
    if (const json* t = g.object("discriminator")) {
      c.sr.discriminator = sr_discriminator_config_from_json(*t, "sr.discriminator");
    }
    if (const json* t = g.object("train")) {
      c.sr.train = sr_train_config_from_json(*t, "sr.train");
      if (t->contains("seed")) c.explicit_seeds.push_back("sr.train");
    }
    g.finish();
  }
  if (const json* s = r.object("generate")) {
    Reader g(*s, "generate");
    g.get("n", c.generate.n);
    g.get("batch_size", c.generate.batch_size);
    g.finish();
  }
  if (const json* s = r.object("evaluate")) {
    c.evaluate = evaluate_from_json(*s, "evaluate");
    if (s->contains("seed")) c.explicit_seeds.push_back("evaluate");
  }
  r.finish();
  c.propagate_seed();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace fpgen
