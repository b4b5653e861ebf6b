#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "catintell/nn.hpp"
#include "catintell/tensor.hpp"

namespace catintell {

struct NamedArray {
  std::string name;
  Tensor value;
};

// Single-file container: the magic line "CATCKPT1", a little-endian u64
// header length, a JSON header (phase, step, config, rng state and an array
// table of name/dtype/shape/offset/nbytes), then the raw float64 blob.
struct Checkpoint {
  std::string phase;
  std::int64_t step = 0;
  nlohmann::json config = nlohmann::json::object();
  std::string rng_state;
  std::vector<NamedArray> arrays;

  bool has(const std::string& name) const;
  const Tensor& array(const std::string& name) const;
  void put(const std::string& name, const Tensor& value);

  // Stores each parameter under prefix + its name.
  void put_params(const std::string& prefix, const ParamStore& params);
  // Copies prefix + name arrays into the store; shapes must match exactly.
  void load_params(const std::string& prefix, ParamStore& params) const;
  bool has_params(const std::string& prefix, const ParamStore& params) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

// Writes to a sibling temp file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace catintell
