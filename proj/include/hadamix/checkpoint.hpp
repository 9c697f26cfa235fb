#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hadamix/model.hpp"
#include "hadamix/tensor.hpp"

namespace hadamix {

// On-disk container: "HMIX" magic, u32 version, a key=value text block, then
// named float32 tensors with explicit extents. All integers and floats are
// little-endian. Writing the same data twice produces identical bytes.
struct CheckpointData {
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const std::string* find_key(const std::string& key) const;
    const Tensor* find_tensor(const std::string& name) const;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const CheckpointData& data);  // IoError
CheckpointData read_checkpoint(const std::string& path);                     // IoError

// key=value lines; values may contain '=' and spaces, keys may not.
std::string kv_emit(const std::vector<std::pair<std::string, std::string>>& kvs);
std::vector<std::pair<std::string, std::string>> kv_parse(const std::string& text);

// Model shape keys plus every weight tensor, in registration order.
CheckpointData snapshot_model(const TransformerModel& m);

// Rebuilds a model from snapshot_model output. Entries beyond the model's own
// (optimizer moments, training counters) are ignored here.
TransformerModel model_from_checkpoint(const CheckpointData& data);

ModelConfig config_from_checkpoint(const CheckpointData& data);

}  // namespace hadamix
