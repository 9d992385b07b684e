#include "fatten/training.hpp"

#include <chrono>
#include <sstream>

#include "fatten/errors.hpp"
#include "fatten/eval.hpp"

namespace fatten {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Mat gather_rows(const Mat& source, const std::vector<Eigen::Index>& indices, size_t begin,
                size_t end) {
    Mat out(static_cast<Eigen::Index>(end - begin), source.cols());
    for (size_t i = begin; i < end; ++i)
        out.row(static_cast<Eigen::Index>(i - begin)) = source.row(indices[i]);
    return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.empty()) return 0.0;
    size_t hits = 0;
    for (size_t i = 0; i < predicted.size(); ++i)
        if (predicted[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

} // namespace

void TrainConfig::validate() const {
    if (pose_learning_rate <= 0 || category_learning_rate <= 0 || main_learning_rate <= 0)
        throw ConfigError("train config: learning rates must be positive");
    if (pose_epochs < 1 || category_epochs < 1 || main_epochs < 1)
        throw ConfigError("train config: epoch counts must be >= 1");
    if (batch_size < 2)
        throw ConfigError("train config: batch size must be >= 2 (batch norm needs it)");
    if (weight_pose < 0 || weight_category < 0)
        throw ConfigError("train config: loss weights must be non-negative");
    if (momentum < 0 || momentum >= 1)
        throw ConfigError("train config: momentum must lie in [0, 1)");
}

nlohmann::json TrainReport::to_json() const {
    // Wall-clock time stays off the serialized report so identical runs
    // produce identical bytes.
    nlohmann::json j;
    j["stage"] = stage;
    j["seed"] = seed;
    j["heldout"] = heldout_metrics;
    auto& losses = j["epoch_losses"] = nlohmann::json::array();
    for (const auto& e : epoch_losses)
        losses.push_back({{"pose", e.pose}, {"category", e.category}, {"total", e.total}});
    return j;
}

std::string TrainReport::metrics_log() const {
    std::ostringstream os;
    os << "epoch,pose_loss,category_loss,total\n";
    for (size_t i = 0; i < epoch_losses.size(); ++i)
        os << i << "," << epoch_losses[i].pose << "," << epoch_losses[i].category << ","
           << epoch_losses[i].total << "\n";
    return os.str();
}

std::vector<TransferPair> build_transfer_pairs(const Dataset& dataset, const PoseBinning& binning,
                                               const std::vector<int>& target_cells) {
    std::vector<int> cells = target_cells;
    if (cells.empty()) {
        cells.resize(static_cast<size_t>(binning.cells()));
        for (int c = 0; c < binning.cells(); ++c) cells[static_cast<size_t>(c)] = c;
    }
    for (int c : cells)
        if (c < 0 || c >= binning.cells())
            throw ConfigError("transfer pairs: target cell " + std::to_string(c) +
                              " out of range [0," + std::to_string(binning.cells()) + ")");

    std::vector<TransferPair> pairs;
    pairs.reserve(static_cast<size_t>(dataset.size()) * cells.size());
    for (Eigen::Index i = 0; i < dataset.size(); ++i)
        for (int c : cells)
            pairs.push_back({i, c});
    return pairs;
}

MultitaskLossValue multitask_loss(FattenModel& model, const Mat& x_hat,
                                  const std::vector<int>& target_cells,
                                  const std::vector<int>& class_labels, double weight_pose,
                                  double weight_category, Mat* d_xhat) {
    require_cols(x_hat, model.dims.feature_dim, "multitask loss input");
    MultitaskLossValue value;

    Mat pose_probs, cat_probs;
    if (d_xhat) {
        pose_probs = softmax(model.pose.forward(x_hat, Mode::Infer));
        cat_probs = softmax(model.category.forward(x_hat));
    } else {
        pose_probs = softmax(model.pose.logits(x_hat));
        cat_probs = model.category.predict(x_hat);
    }
    value.pose = cross_entropy(pose_probs, target_cells);
    value.category = cross_entropy(cat_probs, class_labels);
    value.total = weight_pose * value.pose + weight_category * value.category;

    if (d_xhat) {
        Mat d_pose_logits = weight_pose * softmax_xent_grad(pose_probs, target_cells);
        Mat d_cat_logits = weight_category * softmax_xent_grad(cat_probs, class_labels);
        *d_xhat = model.pose.backward(d_pose_logits) + model.category.backward_input(d_cat_logits);
    }
    return value;
}

MultitaskLossValue fatten_training_loss(FattenModel& model, const Mat& x,
                                        const std::vector<int>& target_cells,
                                        const std::vector<int>& class_labels, double weight_pose,
                                        double weight_category, bool with_grad) {
    const Eigen::Index b = x.rows();
    if (static_cast<Eigen::Index>(target_cells.size()) != b ||
        static_cast<Eigen::Index>(class_labels.size()) != b)
        throw DimensionError("fatten_training_loss: label columns disagree with batch rows");
    const int app_out = model.dims.app_out;
    const int cells = model.dims.pose_cells;

    Mat decoder_in(b, model.dims.decoder_in());
    decoder_in.leftCols(app_out) = model.appearance.forward(x, Mode::Train);
    decoder_in.middleCols(app_out, cells) = model.pose.predict(x);
    Mat target_onehot = Mat::Zero(b, cells);
    for (Eigen::Index r = 0; r < b; ++r) {
        const int cell = target_cells[static_cast<size_t>(r)];
        if (cell < 0 || cell >= cells)
            throw InputError("fatten_training_loss: target cell " + std::to_string(cell) +
                             " out of range [0," + std::to_string(cells) + ")");
        target_onehot(r, cell) = 1.0;
    }
    decoder_in.rightCols(cells) = target_onehot;

    Mat x_hat = x + model.decoder.forward(decoder_in, Mode::Train);

    Mat d_xhat;
    MultitaskLossValue loss = multitask_loss(model, x_hat, target_cells, class_labels, weight_pose,
                                             weight_category, with_grad ? &d_xhat : nullptr);
    if (with_grad) {
        // d(loss)/d(residual) = d(loss)/d(x_hat); the shortcut carries no
        // trainable parameters.
        Mat d_decoder_in = model.decoder.backward(d_xhat);
        model.appearance.backward(d_decoder_in.leftCols(app_out));
    }
    return loss;
}

TrainReport pretrain_pose_predictor(FattenModel& model, const Dataset& train, const Dataset& test,
                                    const TrainConfig& config) {
    config.validate();
    if (train.size() < config.batch_size)
        throw ConfigError("pose pretraining: dataset smaller than one batch");
    const auto start = Clock::now();

    TrainReport report;
    report.stage = "pretrain_pose";
    report.seed = config.seed;

    SgdOptimizer opt(model.pose.params("pose"), config.pose_learning_rate, config.momentum);
    std::vector<Eigen::Index> order(static_cast<size_t>(train.size()));
    for (Eigen::Index i = 0; i < train.size(); ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 0; epoch < config.pose_epochs; ++epoch) {
        Rng shuffle_rng(stream_seed(config.seed, "pose.shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t seen = 0;
        const size_t n = order.size();
        const size_t bs = static_cast<size_t>(config.batch_size);
        for (size_t begin = 0; begin + 2 <= n; begin += bs) {
            const size_t end = std::min(begin + bs, n);
            Mat batch = gather_rows(train.features, order, begin, end);
            std::vector<int> labels(end - begin);
            for (size_t i = begin; i < end; ++i)
                labels[i - begin] = train.pose_bins[static_cast<size_t>(order[i])];

            opt.zero_grad();
            Mat probs = softmax(model.pose.forward(batch, Mode::Train));
            double loss = cross_entropy(probs, labels);
            if (!std::isfinite(loss))
                throw NumericsError("pose pretraining: non-finite loss at epoch " +
                                    std::to_string(epoch));
            model.pose.backward(softmax_xent_grad(probs, labels));
            opt.step();

            loss_sum += loss * static_cast<double>(end - begin);
            seen += end - begin;
        }
        EpochLoss e;
        e.pose = loss_sum / static_cast<double>(seen);
        e.total = e.pose;
        report.epoch_losses.push_back(e);
    }

    report.heldout_metrics["pose_bin_accuracy"] =
        accuracy(model.predict_pose_bins(test.features), test.pose_bins);
    report.wall_clock_sec = seconds_since(start);

    model.metadata["pretrain_pose"] = {{"epochs", config.pose_epochs},
                                       {"learning_rate", config.pose_learning_rate},
                                       {"seed", config.seed},
                                       {"heldout_pose_bin_accuracy",
                                        report.heldout_metrics["pose_bin_accuracy"]}};
    return report;
}

TrainReport pretrain_category_head(FattenModel& model, const Dataset& train, const Dataset& test,
                                   const TrainConfig& config) {
    config.validate();
    const auto start = Clock::now();

    TrainReport report;
    report.stage = "pretrain_category";
    report.seed = config.seed;

    SgdOptimizer opt(model.category.params("category"), config.category_learning_rate,
                     config.momentum);
    std::vector<Eigen::Index> order(static_cast<size_t>(train.size()));
    for (Eigen::Index i = 0; i < train.size(); ++i) order[static_cast<size_t>(i)] = i;

    for (int epoch = 0; epoch < config.category_epochs; ++epoch) {
        Rng shuffle_rng(stream_seed(config.seed, "category.shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t seen = 0;
        const size_t n = order.size();
        const size_t bs = static_cast<size_t>(config.batch_size);
        for (size_t begin = 0; begin < n; begin += bs) {
            const size_t end = std::min(begin + bs, n);
            Mat batch = gather_rows(train.features, order, begin, end);
            std::vector<int> labels(end - begin);
            for (size_t i = begin; i < end; ++i)
                labels[i - begin] = train.class_labels[static_cast<size_t>(order[i])];

            opt.zero_grad();
            Mat probs = softmax(model.category.forward(batch));
            double loss = cross_entropy(probs, labels);
            if (!std::isfinite(loss))
                throw NumericsError("category pretraining: non-finite loss at epoch " +
                                    std::to_string(epoch));
            model.category.backward(softmax_xent_grad(probs, labels));
            opt.step();

            loss_sum += loss * static_cast<double>(end - begin);
            seen += end - begin;
        }
        EpochLoss e;
        e.category = loss_sum / static_cast<double>(seen);
        e.total = e.category;
        report.epoch_losses.push_back(e);
    }

    report.heldout_metrics["category_accuracy"] =
        accuracy(model.predict_classes(test.features), test.class_labels);
    report.wall_clock_sec = seconds_since(start);

    model.metadata["pretrain_category"] = {{"epochs", config.category_epochs},
                                           {"learning_rate", config.category_learning_rate},
                                           {"seed", config.seed},
                                           {"heldout_category_accuracy",
                                            report.heldout_metrics["category_accuracy"]}};
    return report;
}

TrainReport train_fatten(FattenModel& model, const Dataset& train, const Dataset& test,
                         const TrainConfig& config) {
    config.validate();
    if (!model.metadata.contains("pretrain_pose") || !model.metadata.contains("pretrain_category"))
        throw StateError("train_fatten: model lacks pre-trained heads; run the pretraining "
                         "stages first");
    const auto start = Clock::now();

    const std::string heads_before = head_state_bytes(model);

    TrainReport report;
    report.stage = "train_fatten";
    report.seed = config.seed;

    auto pairs = build_transfer_pairs(train, model.binning, config.target_cells);
    SgdOptimizer opt(model.encoder_decoder_params(), config.main_learning_rate, config.momentum);

    for (int epoch = 0; epoch < config.main_epochs; ++epoch) {
        Rng shuffle_rng(stream_seed(config.seed, "main.shuffle", static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(pairs);

        double pose_sum = 0.0, cat_sum = 0.0, total_sum = 0.0;
        size_t seen = 0;
        const size_t n = pairs.size();
        const size_t bs = static_cast<size_t>(config.batch_size);
        for (size_t begin = 0; begin + 2 <= n; begin += bs) {
            const size_t end = std::min(begin + bs, n);
            const Eigen::Index b = static_cast<Eigen::Index>(end - begin);

            Mat x(b, model.dims.feature_dim);
            std::vector<int> targets(static_cast<size_t>(b));
            std::vector<int> labels(static_cast<size_t>(b));
            for (size_t i = begin; i < end; ++i) {
                const auto& pair = pairs[i];
                const Eigen::Index r = static_cast<Eigen::Index>(i - begin);
                x.row(r) = train.features.row(pair.record_index);
                targets[static_cast<size_t>(r)] = pair.target_cell;
                labels[static_cast<size_t>(r)] =
                    train.class_labels[static_cast<size_t>(pair.record_index)];
            }

            opt.zero_grad();
            MultitaskLossValue loss = fatten_training_loss(model, x, targets, labels,
                                                           config.weight_pose,
                                                           config.weight_category, true);
            if (!std::isfinite(loss.total))
                throw NumericsError("fatten training: non-finite loss at epoch " +
                                    std::to_string(epoch));
            opt.step();

            pose_sum += loss.pose * static_cast<double>(b);
            cat_sum += loss.category * static_cast<double>(b);
            total_sum += loss.total * static_cast<double>(b);
            seen += static_cast<size_t>(b);
        }
        EpochLoss e;
        e.pose = pose_sum / static_cast<double>(seen);
        e.category = cat_sum / static_cast<double>(seen);
        e.total = total_sum / static_cast<double>(seen);
        report.epoch_losses.push_back(e);
    }

    if (head_state_bytes(model) != heads_before)
        throw StateError("train_fatten: frozen heads mutated during training; this is a bug");

    TransferAccuracy heldout = transfer_accuracy(model, test, config.target_cells);
    report.heldout_metrics["transfer_pose_accuracy"] = heldout.pose_accuracy;
    report.heldout_metrics["transfer_category_accuracy"] = heldout.category_accuracy;
    report.wall_clock_sec = seconds_since(start);

    model.metadata["train_fatten"] = {
        {"epochs", config.main_epochs},
        {"learning_rate", config.main_learning_rate},
        {"batch_size", config.batch_size},
        {"weight_pose", config.weight_pose},
        {"weight_category", config.weight_category},
        {"seed", config.seed},
        {"final_total_loss", report.epoch_losses.back().total},
        {"heldout_transfer_pose_accuracy", heldout.pose_accuracy},
        {"heldout_transfer_category_accuracy", heldout.category_accuracy}};
    return report;
}

} // namespace fatten
