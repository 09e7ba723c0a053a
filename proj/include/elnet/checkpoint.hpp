#pragma once

#include <string>

#include "elnet/model.hpp"

namespace elnet {

// Checkpoint file layout (all integers little-endian):
//   magic "ELNT"
//   u16 version (= 1)
//   u32 config length, UTF-8 "key=value\n" pairs
//   u32 blob count, then per blob:
//     u32 name length, name bytes
//     u32 dim count, u32 dims[...]
//     raw 32-bit little-endian values (product of dims)
// Blobs are the trainable parameters plus, for the batch-norm variant, the
// running statistics. load(save(m)) reproduces all parameters bitwise.
void save_checkpoint(ModelF& model, const std::string& path);
ModelF load_checkpoint(const std::string& path);

std::string config_to_text(const ModelConfig& cfg);
ModelConfig config_from_text(const std::string& text);

}  // namespace elnet
