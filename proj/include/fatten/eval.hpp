#pragma once

#include <optional>

#include <json.hpp>

#include "fatten/manifold.hpp"
#include "fatten/model.hpp"

namespace fatten {

// --- pose prediction quality -------------------------------------------

// Circular error between predicted and true cell centroids, folded to half
// the range and bucketed at cell resolution; entries are percentages.
struct PoseErrorHistogram {
    std::vector<double> bucket_errors;  // centroid error magnitude per bucket
    std::vector<double> percentages;

    nlohmann::json to_json() const;
    std::string csv() const;
};

PoseErrorHistogram pose_error_histogram(const std::vector<int>& predicted_bins,
                                        const std::vector<int>& true_bins,
                                        const PoseBinning& binning);
PoseErrorHistogram pose_error_histogram(const FattenModel& model, const Dataset& dataset);

// --- generated-feature accuracy ------------------------------------------

struct TransferAccuracy {
    double pose_accuracy = 0.0;      // generated features, frozen pose predictor
    double category_accuracy = 0.0;  // generated features, frozen category head
    double real_pose_accuracy = 0.0;
    double real_category_accuracy = 0.0;
    Eigen::Index transfer_count = 0;

    nlohmann::json to_json() const;
    std::string csv() const;
};

// Transfers every record to every cell (or the given subset) and scores the
// results with the frozen heads.
TransferAccuracy transfer_accuracy(const FattenModel& model, const Dataset& dataset,
                                   const std::vector<int>& target_cells = {});

// Synthesized dataset: every record of `dataset` transferred to every cell
// in `target_cells` (all cells when empty). Pose labels follow the target,
// class/object labels follow the source.
Dataset generate_transfers(const FattenModel& model, const Dataset& dataset,
                           const std::vector<int>& target_cells = {});

// --- distances and retrieval ----------------------------------------------

double distance_feature(const Mat& x, const Mat& y);                          // d1
double distance_pose(const FattenModel& model, const Mat& x, const Mat& y);   // d2 on gamma
double distance_combined(const FattenModel& model, const Mat& x, const Mat& y,
                         double lambda);                                      // d1 + lambda*d2

enum class RelevanceMode { Pose, Category, PoseAndCategory };
enum class DistanceKind { D1, D2, DC };

RelevanceMode relevance_from_string(const std::string& name);
DistanceKind distance_from_string(const std::string& name);

struct RetrievalTask {
    Mat query_features;
    std::vector<int> query_pose_bins;
    std::vector<int> query_classes;
    Mat gallery_features;
    std::vector<int> gallery_pose_bins;
    std::vector<int> gallery_classes;
    // Per query, the gallery index holding the query itself (excluded from
    // its ranking), or -1.
    std::vector<Eigen::Index> self_index;
    RelevanceMode relevance = RelevanceMode::Pose;
    DistanceKind distance = DistanceKind::D2;
    double lambda = 1.0;
};

// Task where every gallery item queries the rest of the gallery.
RetrievalTask self_retrieval_task(const Dataset& dataset, RelevanceMode relevance,
                                  DistanceKind distance, double lambda = 1.0);

// Non-interpolated AP of a ranked relevance list: mean over relevant ranks
// of precision-at-that-rank; 0 when nothing is relevant.
double average_precision(const std::vector<uint8_t>& relevance_by_rank);

// Mean AP over queries; ties in distance are broken by gallery index.
double retrieval_map(const FattenModel& model, const RetrievalTask& task);

struct RetrievalResult {
    std::string task;  // "pose" | "category" | "pose+category"
    double map_real = 0.0;
    double map_generated = 0.0;
};

// --- linear SVM and few-shot augmentation ---------------------------------

struct SvmConfig {
    double cost = 1.0;  // hinge weight C; regularization is 1/(C*n)
    int epochs = 200;
    double learning_rate = 0.01;  // decays as 1/t over epochs
    uint64_t seed = 0;
};

// One-vs-rest L2-regularized hinge classifier trained by deterministic
// stochastic subgradient descent.
class LinearSvm {
public:
    Mat weights;  // classes x features
    Mat bias;     // classes x 1

    static LinearSvm train(const Mat& features, const std::vector<int>& labels, int num_classes,
                           const SvmConfig& config);

    Mat scores(const Mat& features) const;
    std::vector<int> predict(const Mat& features) const;
    double accuracy(const Mat& features, const std::vector<int>& labels) const;
};

struct AugmentationSource {
    const FattenModel* model = nullptr;
    std::vector<double> target_poses;
};

struct FewShotConfig {
    int shots = 1;
    int repetitions = 100;
    SvmConfig svm;
    uint64_t seed = 0;
    // Also run the cheating upper bound that augments with exact oracle
    // features; requires the dataset to carry its ManifoldSpec.
    bool with_oracle_bound = false;
};

struct FewShotResult {
    std::vector<double> baseline_accuracy;   // per repetition
    std::vector<double> augmented_accuracy;  // per repetition
    std::vector<double> oracle_accuracy;     // empty unless requested
    double baseline_mean = 0.0, baseline_std = 0.0;
    double augmented_mean = 0.0, augmented_std = 0.0;
    double oracle_mean = 0.0;
    double mean_gain = 0.0;  // augmented minus baseline, paired
    double paired_t = 0.0;

    nlohmann::json to_json() const;
    std::string csv() const;
};

// Paired one/few-shot protocol: per repetition, sample `shots` instances per
// class, train a baseline SVM on them, synthesize features for every
// augmentation source and target, train a second SVM on the union, and
// score both on the held-back remainder.
FewShotResult few_shot_experiment(const Dataset& pool,
                                  const std::vector<AugmentationSource>& sources,
                                  const FewShotConfig& config);

// --- report assembly -------------------------------------------------------

struct EvalReport {
    std::optional<PoseErrorHistogram> pose_histogram;
    std::optional<TransferAccuracy> transfer;
    std::vector<RetrievalResult> retrieval;
    std::optional<FewShotResult> few_shot;
    double runtime_sec = 0.0;

    nlohmann::json to_json() const;
};

std::string retrieval_csv(const std::vector<RetrievalResult>& results);

} // namespace fatten
