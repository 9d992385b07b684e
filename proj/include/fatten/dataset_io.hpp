#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "fatten/manifold.hpp"

namespace fatten {

// Binary dataset container, little-endian.
//   header:  magic "FATN", version u16, feature_dim u32, num_pose_bins u16,
//            num_classes u16, record_count u64, flags u16
//            (flags bit0: ManifoldSpec appendix follows the records)
//   record:  class_label u32, object_id u64, pose_value f64, pose_bin u16,
//            feature_dim x f64
// The appendix serializes the full ManifoldSpec so oracle-based checks can
// reconstruct ground truth from the file alone.
constexpr size_t kDatasetHeaderSize = 24;
constexpr uint16_t kDatasetVersion = 1;

inline size_t dataset_record_size(int feature_dim) {
    return 4 + 8 + 8 + 2 + static_cast<size_t>(feature_dim) * 8;
}

void write_dataset(const Dataset& dataset, const std::string& path);

// Files without a spec appendix carry no binning range; `fallback_binning`
// supplies it then (cell count must agree with the header). Defaults to
// [0, 360) over the header's bin count.
Dataset read_dataset(const std::string& path,
                     std::optional<PoseBinning> fallback_binning = std::nullopt);

// Plain-text ingestion for externally produced features.
// Header row: class,object,pose,<one column per feature dimension>.
Dataset import_csv(const std::string& path, const PoseBinning& binning);

void write_manifold_spec(std::ostream& out, const ManifoldSpec& spec);

} // namespace fatten
