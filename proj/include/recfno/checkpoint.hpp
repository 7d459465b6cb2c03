#pragma once

#include <cstdint>
#include <string>

#include "recfno/model.hpp"

namespace recfno {

/// Container shared by models and the POD baseline: a key-value text block plus named tensors.
///
/// Layout (little-endian): "RFCK", u32 version, u32 text length, text ("key=value" lines),
/// u32 tensor count, then per tensor: u32 name length, name, u8 kind (0 real, 1 complex),
/// u32 rank, rank x u64 extents, float32 values (complex as interleaved real/imag).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  KeyValues meta;
  ParameterList tensors;

  const Parameter& find(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

Checkpoint model_checkpoint(const Model& model);
Model model_from_checkpoint(const Checkpoint& ckpt);

void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

/// Copies values from `source` into `target` by name; names, kinds and shapes must match exactly.
void assign_parameters(const ParameterList& target, const ParameterList& source);

}  // namespace recfno
