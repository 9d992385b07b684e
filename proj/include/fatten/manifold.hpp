#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fatten/binning.hpp"
#include "fatten/mat.hpp"

namespace fatten {

// Parameters of the synthetic pose manifold. Together with a master seed
// they determine every byte of the frozen embedding and of any dataset
// sampled from it.
struct ManifoldParams {
    int num_classes = 10;       // K
    int feature_dim = 256;      // D
    int appearance_dim = 32;    // A
    int fourier_harmonics = 3;  // F
    PoseBinning binning{0.0, 360.0, 12, true, false};
    double within_class_spread = 0.25;  // sigma_a, appearance draw around the class centroid
    double observation_noise = 0.08;    // sigma_x, additive noise on observed features
    double pose_gain = 3.0;             // scale of the Fourier columns of the embedding
};

// Frozen realization of the manifold map phi(a, p) -> x: a random smooth
// embedding of appearance plus Fourier pose features,
//   x = tanh(W * [a (+) fourier(p)]) / rms(...),
// with the pose gain folded into the Fourier columns of W at build time.
class ManifoldSpec {
public:
    ManifoldParams params;
    uint64_t seed = 0;
    Mat class_centroids;  // K x A
    Mat embedding;        // D x (A + 2F)

    static ManifoldSpec build(const ManifoldParams& params, uint64_t seed);

    int input_dim() const { return params.appearance_dim + 2 * params.fourier_harmonics; }

    // sin/cos stack of the harmonics of the (wrapped) pose value, 1 x 2F.
    Mat fourier_features(double pose_value) const;

    // Noise-free phi(a, p); the ground truth a perfect transfer must hit.
    Mat oracle_feature(const Mat& appearance, double pose_value) const;  // 1 x D

    // Deterministic appearance draw for one object: centroid + sigma_a * gaussian,
    // keyed by (seed, object_id) so records are reconstructible at random access.
    Mat object_appearance(uint64_t object_id, int class_label) const;  // 1 x A

    // Empirical bound on ||phi(a,p+d)-phi(a,p)|| / d at d = 0.1 degrees,
    // maximized over random (a, p) probes.
    double estimate_pose_lipschitz(int probes, uint64_t probe_seed) const;

    bool same_geometry(const ManifoldSpec& other) const;
};

struct FeatureRecord {
    Eigen::RowVectorXd feature;
    double pose_value = 0.0;
    int pose_bin = 0;
    int class_label = 0;
    uint64_t object_id = 0;
};

// A labeled feature set: one row of `features` per record with parallel
// label columns. Synthetic datasets carry the generating ManifoldSpec so
// oracle-based checks can reconstruct ground truth; imported feature files
// may not.
struct Dataset {
    Mat features;  // R x D
    std::vector<double> pose_values;
    std::vector<int> pose_bins;
    std::vector<int> class_labels;
    std::vector<uint64_t> object_ids;
    PoseBinning binning;
    int num_classes = 0;
    std::string split;  // "train", "test", or empty for imported data
    std::shared_ptr<const ManifoldSpec> spec;

    Eigen::Index size() const { return features.rows(); }
    int feature_dim() const { return static_cast<int>(features.cols()); }

    FeatureRecord record(Eigen::Index i) const;
    void validate() const;

    // Indices grouped by (class, pose_bin) and by class.
    std::vector<Eigen::Index> indices_of_class(int class_label) const;
};

enum class PoseSampling { BinCentroids, UniformWithinBins };

struct SampleConfig {
    int train_objects_per_class = 40;
    int test_objects_per_class = 10;
    int poses_per_object = 12;
    PoseSampling sampling = PoseSampling::BinCentroids;
};

// Draws train/test splits with disjoint object ids. Per object, one
// appearance sample; per pose slot j, bin j % N with the value at the bin
// centroid or uniform within the cell, observed with additive noise.
std::pair<Dataset, Dataset> sample_dataset(std::shared_ptr<const ManifoldSpec> spec,
                                           const SampleConfig& config,
                                           uint64_t split_seed);

} // namespace fatten
