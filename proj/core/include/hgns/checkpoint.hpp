#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hgns/model.hpp"

namespace hgns {

// Named-tensor store: <stem>.json manifest (names, shapes, byte offsets) plus
// <stem>.bin with the payloads back to back as little-endian 64-bit floats.
// Names must be unique; order is preserved.
void write_tensor_store(const std::string& dir, const std::string& stem,
                        const std::vector<std::pair<std::string, const ad::Tensor*>>& tensors);
std::vector<std::pair<std::string, ad::Tensor>> read_tensor_store(const std::string& dir, const std::string& stem);
bool tensor_store_exists(const std::string& dir, const std::string& stem);

// Model checkpoint directory: manifest.json (kind + schema hash), schema.json,
// normalizer.json and the "params" tensor store. Other stores in the same
// directory (optimizer state, for instance) are left alone.
void save_checkpoint(const std::string& dir, const HgnsModel& m);
HgnsModel load_checkpoint(const std::string& dir);

// Schema hash recorded in the manifest, without loading parameters. Loaders
// that assembled features from a different schema must refuse the checkpoint.
uint64_t checkpoint_schema_hash(const std::string& dir);

}  // namespace hgns
