// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace loopscope {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in native little-endian order");

constexpr char kMagic[8] = {'L', 'S', 'C', 'K', 'P', 'T', '\0', '\1'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw CheckpointError("truncated checkpoint");
  return v;
}

nlohmann::json directory(const std::vector<NamedArray>& arrays) {
  auto dir = nlohmann::json::array();
  for (const auto& a : arrays) {
    dir.push_back({{"name", a.name}, {"shape", a.shape}});
  }
  return dir;
}

std::vector<NamedArray> read_arrays(std::istream& in, const nlohmann::json& dir) {
  std::vector<NamedArray> out;
  for (const auto& entry : dir) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.shape = entry.at("shape").get<Shape>();
    std::size_t n = 1;
    for (auto s : a.shape) n *= s;
    a.values.resize(n);
    in.read(reinterpret_cast<char*>(a.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw CheckpointError("truncated payload for '" + a.name + "'");
    out.push_back(std::move(a));
  }
  return out;
}

void write_arrays(std::ostream& out, const std::vector<NamedArray>& arrays) {
  for (const auto& a : arrays) {
    out.write(reinterpret_cast<const char*>(a.values.data()),
              static_cast<std::streamsize>(a.values.size() * sizeof(double)));
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header = {
      {"format", "loopscope-checkpoint"},
      {"version", kCheckpointVersion},
      {"step", ckpt.step},
      {"model", ckpt.model},
      {"recurrence", ckpt.recurrence},
      {"rng_state", ckpt.rng_state},
      {"config_hash", ckpt.config_hash},
      {"extra", ckpt.extra},
      {"weights", directory(ckpt.weights)},
      {"moment1", directory(ckpt.moment1)},
      {"moment2", directory(ckpt.moment2)},
  };
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_arrays(out, ckpt.weights);
  write_arrays(out, ckpt.moment1);
  write_arrays(out, ckpt.moment2);
  if (!out) throw CheckpointError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path + " is not a loopscope checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(text);

  Checkpoint ckpt;
  ckpt.step = header.at("step").get<std::uint64_t>();
  ckpt.model = header.at("model").get<ModelConfig>();
  ckpt.recurrence = header.at("recurrence").get<RecurrenceSpec>();
  ckpt.rng_state = header.at("rng_state").get<std::string>();
  ckpt.config_hash = header.at("config_hash").get<std::string>();
  ckpt.extra = header.value("extra", nlohmann::json::object());
  ckpt.weights = read_arrays(in, header.at("weights"));
  ckpt.moment1 = read_arrays(in, header.at("moment1"));
  ckpt.moment2 = read_arrays(in, header.at("moment2"));
  return ckpt;
}

std::vector<NamedArray> snapshot(const std::vector<NamedTensor>& tensors) {
  std::vector<NamedArray> out;
  out.reserve(tensors.size());
  for (const auto& [name, t] : tensors) {
    out.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  }
  return out;
}

RecurrentModel model_from_checkpoint(const Checkpoint& ckpt) {
  RecurrentModel model(ckpt.model, ckpt.recurrence);
  std::vector<std::pair<std::string, std::vector<double>>> values;
  values.reserve(ckpt.weights.size());
  for (const auto& a : ckpt.weights) values.emplace_back(a.name, a.values);
  model.load_parameters(values);
  return model;
}

}  // namespace loopscope
