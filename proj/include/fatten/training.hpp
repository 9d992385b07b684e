#pragma once

#include <json.hpp>

#include "fatten/manifold.hpp"
#include "fatten/model.hpp"

namespace fatten {

struct TrainConfig {
    double pose_learning_rate = 0.01;
    int pose_epochs = 200;
    double category_learning_rate = 0.01;
    int category_epochs = 120;
    double main_learning_rate = 0.01;
    int main_epochs = 25;
    int batch_size = 64;
    double momentum = 0.9;
    double weight_pose = 1.0;      // w_p in the multi-task loss
    double weight_category = 1.0;  // w_c
    uint64_t seed = 0;
    // Restrict transfer targets to these cells; empty means all cells.
    std::vector<int> target_cells;

    void validate() const;
};

struct EpochLoss {
    double pose = 0.0;
    double category = 0.0;
    double total = 0.0;
};

struct TrainReport {
    std::string stage;
    std::vector<EpochLoss> epoch_losses;
    std::map<std::string, double> heldout_metrics;
    double wall_clock_sec = 0.0;
    uint64_t seed = 0;

    nlohmann::json to_json() const;
    // Line-delimited metrics: "epoch,pose_loss,category_loss,total".
    std::string metrics_log() const;
};

// One training example for the encoder/decoder stage: a source record
// paired with a target cell. Enumerating all targets per source (including
// the identity cell) and shuffling per epoch is the training schedule.
struct TransferPair {
    Eigen::Index record_index;
    int target_cell;
};

std::vector<TransferPair> build_transfer_pairs(const Dataset& dataset, const PoseBinning& binning,
                                               const std::vector<int>& target_cells = {});

struct MultitaskLossValue {
    double total = 0.0;
    double pose = 0.0;
    double category = 0.0;
};

// Multi-task loss of generated features through the frozen heads:
// total = w_p * CE(P(x_hat), target) + w_c * CE(C(x_hat), class).
// With `d_xhat` non-null the heads are run in caching inference mode and
// the gradient w.r.t. x_hat is written there.
MultitaskLossValue multitask_loss(FattenModel& model, const Mat& x_hat,
                                  const std::vector<int>& target_cells,
                                  const std::vector<int>& class_labels, double weight_pose,
                                  double weight_category, Mat* d_xhat = nullptr);

// One forward/backward of the encoder/decoder stage on an explicit batch:
// x_hat = x + G([A(x) (+) P(x) (+) one_hot(target)]), scored by the
// multi-task loss through the frozen heads. With `with_grad` the gradients
// are accumulated into the encoder/decoder parameter buffers. This is the
// routine the training loop, the gradient checker, and the tests all share.
MultitaskLossValue fatten_training_loss(FattenModel& model, const Mat& x,
                                        const std::vector<int>& target_cells,
                                        const std::vector<int>& class_labels, double weight_pose,
                                        double weight_category, bool with_grad);

// Stage 1: supervised pose-bin classification on source features.
TrainReport pretrain_pose_predictor(FattenModel& model, const Dataset& train, const Dataset& test,
                                    const TrainConfig& config);

// Stage 2: linear category classifier on source features.
TrainReport pretrain_category_head(FattenModel& model, const Dataset& train, const Dataset& test,
                                   const TrainConfig& config);

// Stage 3: encoder/decoder training under the multi-task loss with both
// heads frozen; verifies byte-for-byte that the heads did not move.
TrainReport train_fatten(FattenModel& model, const Dataset& train, const Dataset& test,
                         const TrainConfig& config);

} // namespace fatten
