#include "fpgen/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "fpgen/digest.hpp"
#include "fpgen/error.hpp"

namespace fpgen {

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'P', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_str(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error(ErrorCode::Format, "truncated checkpoint");
  return v;
}

std::string get_str(std::istream& is) {
  const auto len = get<std::uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw Error(ErrorCode::Format, "truncated checkpoint");
  return s;
}

}  // namespace

std::string_view to_string(CheckpointRole role) {
  switch (role) {
    case CheckpointRole::Generator: return "generator";
    case CheckpointRole::Critic: return "critic";
    case CheckpointRole::SrGenerator: return "sr_generator";
    case CheckpointRole::SrDiscriminator: return "sr_discriminator";
  }
  return "unknown";
}

Checkpoint capture_checkpoint(const nn::Module& module, CheckpointRole role, std::uint64_t step, std::uint64_t seed,
                              nlohmann::json config) {
  Checkpoint ckpt;
  ckpt.role = role;
  ckpt.step = step;
  ckpt.seed = seed;
  ckpt.config_digest = config_digest(config);
  ckpt.config = std::move(config);
  for (const auto& p : module.parameters()) ckpt.tensors.push_back({p.name, p.var.value()});
  for (const auto& b : module.buffers()) ckpt.tensors.push_back({b.name, b.var.value()});
  return ckpt;
}

void restore_checkpoint(nn::Module& module, const Checkpoint& ckpt) {
  std::unordered_map<std::string, const nn::Tensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name.emplace(t.name, &t.tensor);
  auto load = [&](const std::vector<nn::NamedVar>& vars) {
    for (auto v : vars) {
      auto it = by_name.find(v.name);
      if (it == by_name.end()) throw Error(ErrorCode::Format, "checkpoint lacks tensor " + v.name);
      if (!(it->second->shape() == v.var.shape())) {
        throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor " + v.name + " has shape " + it->second->shape().str() +
                                                  ", expected " + v.var.shape().str());
      }
      v.var.mutable_value() = *it->second;
    }
  };
  load(module.parameters());
  load(module.buffers());
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::Io, "cannot write checkpoint " + path.string());
  os.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.role));
  put<std::uint64_t>(os, ckpt.step);
  put<std::uint64_t>(os, ckpt.seed);
  put_str(os, ckpt.config_digest);
  put_str(os, ckpt.config.dump());
  put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_str(os, t.name);
    const auto& s = t.tensor.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.tensor.data()), std::streamsize(t.tensor.size() * sizeof(float)));
  }
  if (!os) throw Error(ErrorCode::Io, "failed writing checkpoint " + path.string());

  nlohmann::json meta = {{"format_version", kVersion},
                         {"role", to_string(ckpt.role)},
                         {"step", ckpt.step},
                         {"seed", ckpt.seed},
                         {"config_digest", ckpt.config_digest},
                         {"config", ckpt.config},
                         {"tensor_count", ckpt.tensors.size()}};
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw Error(ErrorCode::Io, "cannot write checkpoint sidecar for " + path.string());
  side << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::Io, "cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw Error(ErrorCode::Format, path.string() + " is not a checkpoint");
  if (const auto v = get<std::uint32_t>(is); v != kVersion) {
    throw Error(ErrorCode::Format, "unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ckpt;
  const auto role = get<std::uint32_t>(is);
  if (role > 3) throw Error(ErrorCode::Format, "bad checkpoint role");
  ckpt.role = static_cast<CheckpointRole>(role);
  ckpt.step = get<std::uint64_t>(is);
  ckpt.seed = get<std::uint64_t>(is);
  ckpt.config_digest = get_str(is);
  ckpt.config = nlohmann::json::parse(get_str(is));
  const auto count = get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_str(is);
    nn::Shape s;
    s.n = get<std::int32_t>(is);
    s.c = get<std::int32_t>(is);
    s.h = get<std::int32_t>(is);
    s.w = get<std::int32_t>(is);
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw Error(ErrorCode::Format, "bad tensor shape in checkpoint");
    t.tensor = nn::Tensor(s);
    is.read(reinterpret_cast<char*>(t.tensor.data()), std::streamsize(t.tensor.size() * sizeof(float)));
    if (!is) throw Error(ErrorCode::Format, "truncated checkpoint tensor " + t.name);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace fpgen
