#pragma once

#include <string>

#include "fatten/manifold.hpp"
#include "fatten/model.hpp"

namespace fatten {

// Checkpoint container, little-endian.
//   magic "FATC", version u16,
//   dimension record: feature_dim u32, pose_cells u16, num_classes u16,
//                     pose_hidden u32, app_hidden u32, app_out u32,
//                     dec_hidden u32,
//   parameter tensors in declared order as f64 (including batch-norm running
//   statistics),
//   binning definition: lo f64, hi f64, bins u16, wrap u8, open u8,
//   metadata trailer: length u64 + JSON text (seeds, epochs, losses).
constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const FattenModel& model, const std::string& path);
FattenModel load_checkpoint(const std::string& path);

// Exact on-disk size of a checkpoint for the given dimensions and metadata
// length; asserted in tests against real files.
size_t checkpoint_size(const ModelDims& dims, size_t metadata_bytes);

// Refuses model/dataset pairs whose feature dimension, pose cells, or class
// counts disagree.
void validate_model_dataset(const FattenModel& model, const Dataset& dataset);

} // namespace fatten
