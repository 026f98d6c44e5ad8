// Copyright 2026 the seau authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

// nlohmann/json ships as a single header in vendor/.
#include "json.hpp"

#include "seau/optim.hpp"
#include "seau/tensor.hpp"

namespace seau::ad {

struct NamedTensor {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> values;
};

// Serialized parameter set plus a JSON blob for architecture and trainer
// state.  Optimizer moments ride along under the reserved "opt." prefix so a
// resumed run is bit-identical to an uninterrupted one.
struct Checkpoint {
  nlohmann::json config;
  std::vector<NamedTensor> tensors;

  void add(const std::string& name, const Tensor& t);
  void add_raw(std::string name, std::vector<int64_t> shape, std::vector<float> values);
  const NamedTensor* find(const std::string& name) const;

  void add_groups(const std::vector<const ParameterGroup*>& groups);
  void add_adam(const AdamState& state);
  AdamState extract_adam() const;
  // Copies values into matching tensors; collects every name/shape mismatch
  // and throws CheckpointError listing them all.  Ignores "opt." entries.
  void load_into_groups(const std::vector<ParameterGroup*>& groups) const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace seau::ad
