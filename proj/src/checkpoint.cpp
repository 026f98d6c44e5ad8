// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#include "seau/checkpoint.hpp"

#include <cstring>

#include "seau/binio.hpp"

namespace seau::ad {

namespace {
constexpr char kMagic[8] = {'S', 'E', 'A', 'U', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;
constexpr const char* kOptPrefix = "opt.";
}  // namespace

void Checkpoint::add(const std::string& name, const Tensor& t) {
  NamedTensor nt;
  nt.name = name;
  nt.shape = t.shape();
  nt.values.assign(t.values().begin(), t.values().end());
  tensors.push_back(std::move(nt));
}

void Checkpoint::add_raw(std::string name, std::vector<int64_t> shape, std::vector<float> values) {
  tensors.push_back(NamedTensor{std::move(name), std::move(shape), std::move(values)});
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void Checkpoint::add_groups(const std::vector<const ParameterGroup*>& groups) {
  for (const ParameterGroup* g : groups) {
    for (const Tensor& p : g->params) add(p.name(), p);
  }
}

void Checkpoint::add_adam(const AdamState& state) {
  for (const auto& [name, slot] : state.slots()) {
    add_raw(std::string(kOptPrefix) + "m." + name,
            {static_cast<int64_t>(slot.m.size())}, slot.m);
    add_raw(std::string(kOptPrefix) + "v." + name,
            {static_cast<int64_t>(slot.v.size())}, slot.v);
  }
  config["opt_step"] = state.step_count();
}

AdamState Checkpoint::extract_adam() const {
  AdamState state;
  for (const auto& t : tensors) {
    if (t.name.rfind(std::string(kOptPrefix) + "m.", 0) == 0) {
      state.slots()[t.name.substr(6)].m = t.values;
    } else if (t.name.rfind(std::string(kOptPrefix) + "v.", 0) == 0) {
      state.slots()[t.name.substr(6)].v = t.values;
    }
  }
  if (config.contains("opt_step")) state.set_step(config["opt_step"].get<int64_t>());
  return state;
}

void Checkpoint::load_into_groups(const std::vector<ParameterGroup*>& groups) const {
  std::vector<std::string> problems;
  for (ParameterGroup* g : groups) {
    for (Tensor& p : g->params) {
      const NamedTensor* src = find(p.name());
      if (!src) {
        problems.push_back(p.name() + ": missing from checkpoint");
        continue;
      }
      if (src->shape != p.shape()) {
        problems.push_back(p.name() + ": checkpoint shape " + shape_str(src->shape) +
                           " vs model " + shape_str(p.shape()));
        continue;
      }
      std::copy(src->values.begin(), src->values.end(), p.values_mut().begin());
    }
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint incompatible with model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw CheckpointError(msg);
  }
}

void Checkpoint::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.bytes(kMagic, sizeof(kMagic));
  w.u32(kVersion);
  w.str(config.dump());
  w.u32(static_cast<uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u32(static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) w.u32(static_cast<uint32_t>(d));
    w.f32_array(t.values.data(), t.values.size());
  }
  write_file_atomic(path, w.data());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  ByteReader r(bytes.data(), bytes.size(), path.string());
  char magic[sizeof(kMagic)];
  for (char& c : magic) c = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError(path.string() + ": bad checkpoint magic");
  }
  if (r.u32() != kVersion) throw IntegrityError(path.string() + ": unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.config = nlohmann::json::parse(r.str());
  uint32_t count = r.u32();
  ckpt.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    uint32_t rank = r.u32();
    int64_t numel = 1;
    t.shape.resize(rank);
    for (uint32_t d = 0; d < rank; ++d) {
      t.shape[d] = r.u32();
      numel *= t.shape[d];
    }
    t.values = r.f32_array(static_cast<size_t>(numel));
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw IntegrityError(path.string() + ": trailing bytes");
  return ckpt;
}

}  // namespace seau::ad
