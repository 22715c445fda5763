#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wtal/tensor.hpp"

// Checkpoint format: magic "WTALCKPT\0" (9 bytes), version byte 1, three
// u64 fingerprints (config, dataset manifest, frozen weights), then a named
// parameter map of {u32 name length, name bytes, u32 rank, u32 dims, f64
// little-endian payload}. Only trainable parameters are stored; frozen
// weights are covered by their fingerprint so drift is detected on reload.

namespace wtal::io {

struct CheckpointMeta {
  std::uint64_t config_hash = 0;
  std::uint64_t data_hash = 0;
  std::uint64_t frozen_hash = 0;
};

// Deterministic byte image of a parameter list (registration order). Also
// used to fingerprint frozen weights and to assert byte-equality in tests.
std::string serialize_params(const std::vector<ad::TensorPtr>& params);

std::string encode_checkpoint(const std::vector<ad::TensorPtr>& params,
                              const CheckpointMeta& meta);

// Restores parameter values into an existing registry. Every stored name
// must resolve to a registered parameter of identical shape, and every
// registered parameter must be present. Malformed input raises FormatError.
CheckpointMeta decode_checkpoint(const std::string& bytes,
                                 const std::vector<ad::TensorPtr>& params,
                                 const std::string& context);

void save_checkpoint(const std::string& path,
                     const std::vector<ad::TensorPtr>& params,
                     const CheckpointMeta& meta);

CheckpointMeta load_checkpoint(const std::string& path,
                               const std::vector<ad::TensorPtr>& params);

}  // namespace wtal::io
