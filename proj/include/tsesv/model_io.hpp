// model_io.hpp
// Versioned binary container for named tensors: a JSON header (format
// version, kind, config, tensor manifest with names/shapes/dtypes)
// followed by raw little-endian tensor data.

#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "tsesv/common.hpp"

namespace tsesv {

enum class Dtype { f32, f64 };

struct NamedTensor {
  std::string name;
  Mat value;        // held as double in memory
  Dtype dtype = Dtype::f32;  // on-disk representation
};

struct TensorContainer {
  std::string kind;     // e.g. "extractor", "backend"
  nlohmann::json meta;  // config snapshot
  std::vector<NamedTensor> tensors;

  const NamedTensor& find(const std::string& name) const;
};

void save_container(const std::string& path, const TensorContainer& c);
TensorContainer load_container(const std::string& path);

}  // namespace tsesv
