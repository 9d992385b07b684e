#include "fatten/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fatten/errors.hpp"

namespace fatten {

namespace {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// Squared Euclidean distances between each row of `q` and each row of `g`.
Mat pairwise_sq_dist(const Mat& q, const Mat& g) {
    Mat d = -2.0 * (q * g.transpose());
    Vec qn = q.rowwise().squaredNorm();
    Vec gn = g.rowwise().squaredNorm();
    d.colwise() += qn;
    d.rowwise() += gn.transpose();
    return d.cwiseMax(0.0);
}

} // namespace

PoseErrorHistogram pose_error_histogram(const std::vector<int>& predicted_bins,
                                        const std::vector<int>& true_bins,
                                        const PoseBinning& binning) {
    if (predicted_bins.size() != true_bins.size())
        throw DimensionError("pose_error_histogram: " + std::to_string(predicted_bins.size()) +
                             " predictions for " + std::to_string(true_bins.size()) + " labels");
    const int buckets = binning.wrap() ? binning.bins() / 2 + 1 : binning.cells();
    const double width = binning.cell_width();

    PoseErrorHistogram hist;
    hist.bucket_errors.resize(static_cast<size_t>(buckets));
    hist.percentages.assign(static_cast<size_t>(buckets), 0.0);
    for (int b = 0; b < buckets; ++b)
        hist.bucket_errors[static_cast<size_t>(b)] = b * width;

    if (predicted_bins.empty()) return hist;
    for (size_t i = 0; i < predicted_bins.size(); ++i) {
        double err = binning.centroid_error(predicted_bins[i], true_bins[i]);
        int bucket = static_cast<int>(std::lround(err / width));
        bucket = std::clamp(bucket, 0, buckets - 1);
        hist.percentages[static_cast<size_t>(bucket)] += 1.0;
    }
    for (double& p : hist.percentages)
        p = p * 100.0 / static_cast<double>(predicted_bins.size());
    return hist;
}

PoseErrorHistogram pose_error_histogram(const FattenModel& model, const Dataset& dataset) {
    return pose_error_histogram(model.predict_pose_bins(dataset.features), dataset.pose_bins,
                                dataset.binning);
}

nlohmann::json PoseErrorHistogram::to_json() const {
    return {{"bucket_errors", bucket_errors}, {"percentages", percentages}};
}

std::string PoseErrorHistogram::csv() const {
    std::ostringstream os;
    os << "error";
    for (double e : bucket_errors) os << "," << e;
    os << "\npercent";
    for (double p : percentages) os << "," << p;
    os << "\n";
    return os.str();
}

Dataset generate_transfers(const FattenModel& model, const Dataset& dataset,
                           const std::vector<int>& target_cells) {
    std::vector<int> cells = target_cells;
    if (cells.empty()) {
        cells.resize(static_cast<size_t>(model.dims.pose_cells));
        for (int c = 0; c < model.dims.pose_cells; ++c) cells[static_cast<size_t>(c)] = c;
    }

    Dataset out;
    out.binning = dataset.binning;
    out.num_classes = dataset.num_classes;
    out.split = dataset.split.empty() ? "generated" : dataset.split + "-generated";
    out.spec = dataset.spec;
    const Eigen::Index n = dataset.size();
    out.features = Mat(n * static_cast<Eigen::Index>(cells.size()), dataset.feature_dim());
    out.pose_values.reserve(static_cast<size_t>(out.features.rows()));
    out.pose_bins.reserve(static_cast<size_t>(out.features.rows()));
    out.class_labels.reserve(static_cast<size_t>(out.features.rows()));
    out.object_ids.reserve(static_cast<size_t>(out.features.rows()));

    Eigen::Index row = 0;
    for (int cell : cells) {
        out.features.middleRows(row, n) = model.transfer_to_cell(dataset.features, cell);
        for (Eigen::Index i = 0; i < n; ++i) {
            out.pose_values.push_back(dataset.binning.centroid(cell));
            out.pose_bins.push_back(cell);
            out.class_labels.push_back(dataset.class_labels[static_cast<size_t>(i)]);
            out.object_ids.push_back(dataset.object_ids[static_cast<size_t>(i)]);
        }
        row += n;
    }
    return out;
}

TransferAccuracy transfer_accuracy(const FattenModel& model, const Dataset& dataset,
                                   const std::vector<int>& target_cells) {
    TransferAccuracy acc;

    std::vector<int> real_pose = model.predict_pose_bins(dataset.features);
    std::vector<int> real_class = model.predict_classes(dataset.features);
    size_t pose_hits = 0, class_hits = 0;
    for (size_t i = 0; i < real_pose.size(); ++i) {
        if (real_pose[i] == dataset.pose_bins[i]) ++pose_hits;
        if (real_class[i] == dataset.class_labels[i]) ++class_hits;
    }
    acc.real_pose_accuracy = static_cast<double>(pose_hits) / static_cast<double>(dataset.size());
    acc.real_category_accuracy =
        static_cast<double>(class_hits) / static_cast<double>(dataset.size());

    Dataset generated = generate_transfers(model, dataset, target_cells);
    std::vector<int> gen_pose = model.predict_pose_bins(generated.features);
    std::vector<int> gen_class = model.predict_classes(generated.features);
    size_t gen_pose_hits = 0, gen_class_hits = 0;
    for (size_t i = 0; i < gen_pose.size(); ++i) {
        if (gen_pose[i] == generated.pose_bins[i]) ++gen_pose_hits;
        if (gen_class[i] == generated.class_labels[i]) ++gen_class_hits;
    }
    acc.transfer_count = generated.size();
    acc.pose_accuracy =
        static_cast<double>(gen_pose_hits) / static_cast<double>(generated.size());
    acc.category_accuracy =
        static_cast<double>(gen_class_hits) / static_cast<double>(generated.size());
    return acc;
}

nlohmann::json TransferAccuracy::to_json() const {
    return {{"generated_pose_accuracy", pose_accuracy},
            {"generated_category_accuracy", category_accuracy},
            {"real_pose_accuracy", real_pose_accuracy},
            {"real_category_accuracy", real_category_accuracy},
            {"transfer_count", transfer_count}};
}

std::string TransferAccuracy::csv() const {
    std::ostringstream os;
    os << "feature_type,pose_accuracy,category_accuracy\n";
    os << "real," << real_pose_accuracy * 100.0 << "," << real_category_accuracy * 100.0 << "\n";
    os << "generated," << pose_accuracy * 100.0 << "," << category_accuracy * 100.0 << "\n";
    return os.str();
}

double distance_feature(const Mat& x, const Mat& y) {
    require_same_shape(x, y, "distance d1");
    return (x - y).norm();
}

double distance_pose(const FattenModel& model, const Mat& x, const Mat& y) {
    return (model.pose_embedding(x) - model.pose_embedding(y)).norm();
}

double distance_combined(const FattenModel& model, const Mat& x, const Mat& y, double lambda) {
    return distance_feature(x, y) + lambda * distance_pose(model, x, y);
}

RelevanceMode relevance_from_string(const std::string& name) {
    if (name == "pose") return RelevanceMode::Pose;
    if (name == "category") return RelevanceMode::Category;
    if (name == "pose+category") return RelevanceMode::PoseAndCategory;
    throw ConfigError("unknown relevance mode '" + name + "'");
}

DistanceKind distance_from_string(const std::string& name) {
    if (name == "d1") return DistanceKind::D1;
    if (name == "d2") return DistanceKind::D2;
    if (name == "dc") return DistanceKind::DC;
    throw ConfigError("unknown distance kind '" + name + "'");
}

RetrievalTask self_retrieval_task(const Dataset& dataset, RelevanceMode relevance,
                                  DistanceKind distance, double lambda) {
    RetrievalTask task;
    task.query_features = dataset.features;
    task.query_pose_bins = dataset.pose_bins;
    task.query_classes = dataset.class_labels;
    task.gallery_features = dataset.features;
    task.gallery_pose_bins = dataset.pose_bins;
    task.gallery_classes = dataset.class_labels;
    task.self_index.resize(static_cast<size_t>(dataset.size()));
    for (Eigen::Index i = 0; i < dataset.size(); ++i)
        task.self_index[static_cast<size_t>(i)] = i;
    task.relevance = relevance;
    task.distance = distance;
    task.lambda = lambda;
    return task;
}

double average_precision(const std::vector<uint8_t>& relevance_by_rank) {
    size_t total_relevant = 0;
    for (uint8_t r : relevance_by_rank) total_relevant += r ? 1 : 0;
    if (total_relevant == 0) return 0.0;
    double sum = 0.0;
    size_t hits = 0;
    for (size_t k = 0; k < relevance_by_rank.size(); ++k) {
        if (relevance_by_rank[k]) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return sum / static_cast<double>(total_relevant);
}

double retrieval_map(const FattenModel& model, const RetrievalTask& task) {
    const Eigen::Index q_count = task.query_features.rows();
    const Eigen::Index g_count = task.gallery_features.rows();
    if (g_count == 0)
        throw ConfigError("retrieval: empty gallery");
    if (static_cast<Eigen::Index>(task.query_pose_bins.size()) != q_count ||
        static_cast<Eigen::Index>(task.query_classes.size()) != q_count ||
        static_cast<Eigen::Index>(task.gallery_pose_bins.size()) != g_count ||
        static_cast<Eigen::Index>(task.gallery_classes.size()) != g_count)
        throw DimensionError("retrieval: label columns disagree with feature rows");

    const bool need_d2 = task.distance == DistanceKind::D2 || task.distance == DistanceKind::DC;
    Mat query_gamma, gallery_gamma;
    if (need_d2) {
        query_gamma = model.pose_embedding(task.query_features);
        gallery_gamma = model.pose_embedding(task.gallery_features);
    }

    auto relevant = [&](Eigen::Index q, Eigen::Index g) -> bool {
        const size_t qi = static_cast<size_t>(q), gi = static_cast<size_t>(g);
        switch (task.relevance) {
        case RelevanceMode::Pose:
            return task.query_pose_bins[qi] == task.gallery_pose_bins[gi];
        case RelevanceMode::Category:
            return task.query_classes[qi] == task.gallery_classes[gi];
        case RelevanceMode::PoseAndCategory:
            return task.query_pose_bins[qi] == task.gallery_pose_bins[gi] &&
                   task.query_classes[qi] == task.gallery_classes[gi];
        }
        return false;
    };

    constexpr Eigen::Index kChunk = 256;
    double ap_sum = 0.0;
    std::vector<Eigen::Index> order(static_cast<size_t>(g_count));
    std::vector<uint8_t> relevance;
    relevance.reserve(static_cast<size_t>(g_count));

    for (Eigen::Index chunk_start = 0; chunk_start < q_count; chunk_start += kChunk) {
        const Eigen::Index chunk = std::min(kChunk, q_count - chunk_start);
        Mat dist;
        if (task.distance == DistanceKind::D1) {
            dist = pairwise_sq_dist(task.query_features.middleRows(chunk_start, chunk),
                                    task.gallery_features)
                       .cwiseSqrt();
        } else if (task.distance == DistanceKind::D2) {
            dist = pairwise_sq_dist(query_gamma.middleRows(chunk_start, chunk), gallery_gamma)
                       .cwiseSqrt();
        } else {
            dist = pairwise_sq_dist(task.query_features.middleRows(chunk_start, chunk),
                                    task.gallery_features)
                       .cwiseSqrt();
            dist += task.lambda *
                    pairwise_sq_dist(query_gamma.middleRows(chunk_start, chunk), gallery_gamma)
                        .cwiseSqrt();
        }

        for (Eigen::Index r = 0; r < chunk; ++r) {
            const Eigen::Index q = chunk_start + r;
            const Eigen::Index self =
                task.self_index.empty() ? -1 : task.self_index[static_cast<size_t>(q)];
            const double* row = dist.row(r).data();

            std::iota(order.begin(), order.end(), Eigen::Index{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](Eigen::Index a, Eigen::Index b) { return row[a] < row[b]; });

            relevance.clear();
            for (Eigen::Index g : order) {
                if (g == self) continue;
                relevance.push_back(relevant(q, g) ? 1 : 0);
            }
            ap_sum += average_precision(relevance);
        }
    }
    return ap_sum / static_cast<double>(q_count);
}

LinearSvm LinearSvm::train(const Mat& features, const std::vector<int>& labels, int num_classes,
                           const SvmConfig& config) {
    if (num_classes < 2)
        throw ConfigError("linear svm: need at least 2 classes, got " +
                          std::to_string(num_classes));
    if (static_cast<Eigen::Index>(labels.size()) != features.rows())
        throw DimensionError("linear svm: " + std::to_string(labels.size()) + " labels for " +
                             shape_str(features) + " features");
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw InputError("linear svm: label " + std::to_string(y) + " out of range [0," +
                             std::to_string(num_classes) + ")");
    if (config.cost <= 0 || config.epochs < 1 || config.learning_rate <= 0)
        throw ConfigError("linear svm: cost, epochs and learning rate must be positive");

    const Eigen::Index n = features.rows();
    const double reg = 1.0 / (config.cost * static_cast<double>(n));

    LinearSvm svm;
    svm.weights = Mat::Zero(num_classes, features.cols());
    svm.bias = Mat::Zero(num_classes, 1);

    std::vector<Eigen::Index> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.learning_rate / (1.0 + epoch);
        Rng rng(stream_seed(config.seed, "svm.shuffle", static_cast<uint64_t>(epoch)));
        rng.shuffle(order);
        for (Eigen::Index idx : order) {
            const auto row = features.row(idx);
            for (int c = 0; c < num_classes; ++c) {
                const double y = labels[static_cast<size_t>(idx)] == c ? 1.0 : -1.0;
                const double margin = y * (svm.weights.row(c).dot(row) + svm.bias(c, 0));
                svm.weights.row(c) *= (1.0 - lr * reg);
                if (margin < 1.0) {
                    svm.weights.row(c) += lr * y * row;
                    svm.bias(c, 0) += lr * y;
                }
            }
        }
    }
    return svm;
}

Mat LinearSvm::scores(const Mat& features) const {
    Mat s = features * weights.transpose();
    s.rowwise() += bias.col(0).transpose();
    return s;
}

std::vector<int> LinearSvm::predict(const Mat& features) const { return argmax_rows(scores(features)); }

double LinearSvm::accuracy(const Mat& features, const std::vector<int>& labels) const {
    auto pred = predict(features);
    size_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == labels[i]) ++hits;
    return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

FewShotResult few_shot_experiment(const Dataset& pool,
                                  const std::vector<AugmentationSource>& sources,
                                  const FewShotConfig& config) {
    if (config.shots < 1 || config.repetitions < 1)
        throw ConfigError("few-shot: shots and repetitions must be >= 1");
    if (pool.num_classes < 2)
        throw ConfigError("few-shot: need at least 2 classes");
    if (config.with_oracle_bound && !pool.spec)
        throw ConfigError("few-shot: oracle bound requested but the dataset carries no "
                          "manifold spec");
    for (const auto& s : sources)
        if (!s.model)
            throw ConfigError("few-shot: augmentation source without a model");

    std::vector<std::vector<Eigen::Index>> by_class(static_cast<size_t>(pool.num_classes));
    for (Eigen::Index i = 0; i < pool.size(); ++i)
        by_class[static_cast<size_t>(pool.class_labels[static_cast<size_t>(i)])].push_back(i);
    for (int c = 0; c < pool.num_classes; ++c)
        if (by_class[static_cast<size_t>(c)].size() < static_cast<size_t>(config.shots) + 1)
            throw ConfigError("few-shot: class " + std::to_string(c) + " has only " +
                              std::to_string(by_class[static_cast<size_t>(c)].size()) +
                              " instances; need at least shots+1 = " +
                              std::to_string(config.shots + 1));

    size_t augmented_per_support = 0;
    for (const auto& s : sources) augmented_per_support += s.target_poses.size();

    FewShotResult result;
    for (int rep = 0; rep < config.repetitions; ++rep) {
        Rng rng(stream_seed(config.seed, "fewshot.sample", static_cast<uint64_t>(rep)));

        std::vector<Eigen::Index> support;
        std::vector<char> in_support(static_cast<size_t>(pool.size()), 0);
        for (int c = 0; c < pool.num_classes; ++c) {
            auto candidates = by_class[static_cast<size_t>(c)];
            rng.shuffle(candidates);
            for (int s = 0; s < config.shots; ++s) {
                support.push_back(candidates[static_cast<size_t>(s)]);
                in_support[static_cast<size_t>(candidates[static_cast<size_t>(s)])] = 1;
            }
        }

        std::vector<Eigen::Index> heldout;
        for (Eigen::Index i = 0; i < pool.size(); ++i)
            if (!in_support[static_cast<size_t>(i)]) heldout.push_back(i);

        Mat eval_x(static_cast<Eigen::Index>(heldout.size()), pool.feature_dim());
        std::vector<int> eval_y(heldout.size());
        for (size_t i = 0; i < heldout.size(); ++i) {
            eval_x.row(static_cast<Eigen::Index>(i)) = pool.features.row(heldout[i]);
            eval_y[i] = pool.class_labels[static_cast<size_t>(heldout[i])];
        }

        const Eigen::Index s_count = static_cast<Eigen::Index>(support.size());
        Mat support_x(s_count, pool.feature_dim());
        std::vector<int> support_y(support.size());
        for (size_t i = 0; i < support.size(); ++i) {
            support_x.row(static_cast<Eigen::Index>(i)) = pool.features.row(support[i]);
            support_y[i] = pool.class_labels[static_cast<size_t>(support[i])];
        }

        SvmConfig svm_config = config.svm;
        svm_config.seed = stream_seed(config.seed, "fewshot.svm", static_cast<uint64_t>(rep));

        LinearSvm baseline = LinearSvm::train(support_x, support_y, pool.num_classes, svm_config);
        result.baseline_accuracy.push_back(baseline.accuracy(eval_x, eval_y));

        // Augmented arm: support plus synthesized features from every source.
        const Eigen::Index aug_rows =
            s_count + s_count * static_cast<Eigen::Index>(augmented_per_support);
        Mat aug_x(aug_rows, pool.feature_dim());
        std::vector<int> aug_y;
        aug_y.reserve(static_cast<size_t>(aug_rows));
        aug_x.topRows(s_count) = support_x;
        aug_y = support_y;
        Eigen::Index row = s_count;
        for (const auto& source : sources) {
            for (double target : source.target_poses) {
                aug_x.middleRows(row, s_count) = source.model->transfer(support_x, target);
                for (size_t i = 0; i < support.size(); ++i) aug_y.push_back(support_y[i]);
                row += s_count;
            }
        }
        LinearSvm augmented = LinearSvm::train(aug_x, aug_y, pool.num_classes, svm_config);
        result.augmented_accuracy.push_back(augmented.accuracy(eval_x, eval_y));

        if (config.with_oracle_bound) {
            Mat oracle_x(aug_rows, pool.feature_dim());
            oracle_x.topRows(s_count) = support_x;
            row = s_count;
            for (const auto& source : sources) {
                for (double target : source.target_poses) {
                    for (size_t i = 0; i < support.size(); ++i) {
                        const Eigen::Index rec = support[i];
                        Mat appearance = pool.spec->object_appearance(
                            pool.object_ids[static_cast<size_t>(rec)],
                            pool.class_labels[static_cast<size_t>(rec)]);
                        oracle_x.row(row + static_cast<Eigen::Index>(i)) =
                            pool.spec->oracle_feature(appearance, target);
                    }
                    row += s_count;
                }
            }
            LinearSvm oracle = LinearSvm::train(oracle_x, aug_y, pool.num_classes, svm_config);
            result.oracle_accuracy.push_back(oracle.accuracy(eval_x, eval_y));
        }
    }

    result.baseline_mean = mean_of(result.baseline_accuracy);
    result.baseline_std = sample_std(result.baseline_accuracy, result.baseline_mean);
    result.augmented_mean = mean_of(result.augmented_accuracy);
    result.augmented_std = sample_std(result.augmented_accuracy, result.augmented_mean);
    result.oracle_mean = mean_of(result.oracle_accuracy);

    std::vector<double> gains(result.baseline_accuracy.size());
    for (size_t i = 0; i < gains.size(); ++i)
        gains[i] = result.augmented_accuracy[i] - result.baseline_accuracy[i];
    result.mean_gain = mean_of(gains);
    double gain_std = sample_std(gains, result.mean_gain);
    result.paired_t = gain_std > 0.0
                          ? result.mean_gain / (gain_std / std::sqrt(static_cast<double>(gains.size())))
                          : 0.0;
    return result;
}

nlohmann::json FewShotResult::to_json() const {
    nlohmann::json j{{"baseline_mean", baseline_mean},
                     {"baseline_std", baseline_std},
                     {"augmented_mean", augmented_mean},
                     {"augmented_std", augmented_std},
                     {"mean_gain", mean_gain},
                     {"paired_t", paired_t},
                     {"repetitions", baseline_accuracy.size()}};
    if (!oracle_accuracy.empty()) j["oracle_mean"] = oracle_mean;
    return j;
}

std::string FewShotResult::csv() const {
    std::ostringstream os;
    os << "arm,mean_accuracy,std\n";
    os << "baseline," << baseline_mean * 100.0 << "," << baseline_std * 100.0 << "\n";
    os << "augmented," << augmented_mean * 100.0 << "," << augmented_std * 100.0 << "\n";
    if (!oracle_accuracy.empty()) os << "oracle," << oracle_mean * 100.0 << ",\n";
    return os.str();
}

nlohmann::json EvalReport::to_json() const {
    // Wall-clock time is deliberately not serialized: report files must be
    // byte-reproducible for identical (config, seed) runs. Runtime is
    // reported on the console instead.
    nlohmann::json j;
    if (pose_histogram) j["pose_error_histogram"] = pose_histogram->to_json();
    if (transfer) j["transfer_accuracy"] = transfer->to_json();
    if (!retrieval.empty()) {
        auto& arr = j["retrieval_map"] = nlohmann::json::array();
        for (const auto& r : retrieval)
            arr.push_back({{"task", r.task},
                           {"map_real", r.map_real},
                           {"map_generated", r.map_generated}});
    }
    if (few_shot) j["few_shot"] = few_shot->to_json();
    return j;
}

std::string retrieval_csv(const std::vector<RetrievalResult>& results) {
    std::ostringstream os;
    os << "feature_type";
    for (const auto& r : results) os << "," << r.task;
    os << "\nreal";
    for (const auto& r : results) os << "," << r.map_real * 100.0;
    os << "\ngenerated";
    for (const auto& r : results) os << "," << r.map_generated * 100.0;
    os << "\n";
    return os.str();
}

} // namespace fatten
