#pragma once

// Binary checkpoint container. Layout, all integers little-endian:
//   magic     8 bytes "DPHCKPT\0"
//   version   u32
//   metadata  u64 byte length, then UTF-8 JSON text
//   count     u64 tensor count, then per tensor:
//             u32 name length, name bytes, u32 rank, rank x u64 dims,
//             float32 values (little-endian, row-major)

#include <cstdint>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "dph/model.hpp"
#include "dph/optimizer.hpp"
#include "dph/tensor.hpp"

namespace dph::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct CheckpointBundle {
    nlohmann::json metadata = nlohmann::json::object();
    ParamSet tensors;

    friend bool operator==(const CheckpointBundle& a, const CheckpointBundle& b) {
        return a.metadata == b.metadata && a.tensors == b.tensors;
    }
};

void serialize(std::ostream& out, const CheckpointBundle& bundle);
CheckpointBundle deserialize(std::istream& in);

void save(const std::string& path, const CheckpointBundle& bundle);
CheckpointBundle load(const std::string& path);

/// Stores the moments as optim.first.<name> / optim.second.<name> tensors and
/// the step count as metadata["optim_step"].
void attach_optimizer_state(CheckpointBundle& bundle, const optim::OptimizerState& state, const ParamSet& params);
bool has_optimizer_state(const CheckpointBundle& bundle);
optim::OptimizerState extract_optimizer_state(const CheckpointBundle& bundle, const ParamSet& params);

/// Model <-> bundle. metadata["model"] holds the backbone config and head
/// description; callers add stage, seed, step and config.
CheckpointBundle from_model(const Model& model);
Model to_model(const CheckpointBundle& bundle);

}  // namespace dph::checkpoint
