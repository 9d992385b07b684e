#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "fatten/errors.hpp"
#include "fatten/eval.hpp"
#include "fatten/training.hpp"

using namespace fatten;

namespace {

// Brute-force AP oracle, written independently of the engine: for every
// relevant rank k, count relevant items in the top k with an inner loop.
double brute_force_ap(const std::vector<uint8_t>& rel) {
    size_t total = 0;
    for (uint8_t r : rel) total += r ? 1 : 0;
    if (total == 0) return 0.0;
    double sum = 0.0;
    for (size_t k = 0; k < rel.size(); ++k) {
        if (!rel[k]) continue;
        size_t count = 0;
        for (size_t j = 0; j <= k; ++j)
            if (rel[j]) ++count;
        sum += static_cast<double>(count) / static_cast<double>(k + 1);
    }
    return sum / static_cast<double>(total);
}

ModelDims tiny_dims() {
    ModelDims d;
    d.feature_dim = 16;
    d.pose_cells = 4;
    d.num_classes = 3;
    d.pose_hidden = 8;
    d.app_hidden = 8;
    d.app_out = 6;
    d.dec_hidden = 8;
    return d;
}

struct TrainedBench {
    std::shared_ptr<ManifoldSpec> spec;
    Dataset train, test;
    FattenModel model;
};

TrainedBench trained_bench() {
    ManifoldParams p;
    p.num_classes = 3;
    p.feature_dim = 16;
    p.appearance_dim = 6;
    p.binning = PoseBinning(0.0, 360.0, 4);
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(p, 31));
    SampleConfig cfg;
    cfg.train_objects_per_class = 8;
    cfg.test_objects_per_class = 4;
    cfg.poses_per_object = 4;
    auto [train, test] = sample_dataset(spec, cfg, 32);

    FattenModel model = FattenModel::init(p.binning, tiny_dims(), 33);
    TrainConfig tc;
    tc.pose_epochs = 30;
    tc.category_epochs = 30;
    tc.main_epochs = 6;
    tc.batch_size = 16;
    tc.seed = 34;
    pretrain_pose_predictor(model, train, test, tc);
    pretrain_category_head(model, train, test, tc);
    train_fatten(model, train, test, tc);
    return {spec, std::move(train), std::move(test), std::move(model)};
}

} // namespace

TEST_CASE("pose error histogram: perfect and constructed-fault predictors") {
    PoseBinning b(0.0, 360.0, 12);
    std::vector<int> truth(50);
    for (size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i % 12);

    auto perfect = pose_error_histogram(truth, truth, b);
    REQUIRE(perfect.percentages.size() == 7);
    CHECK(perfect.percentages[0] == 100.0);
    for (size_t k = 1; k < perfect.percentages.size(); ++k)
        CHECK(perfect.percentages[k] == 0.0);

    // Always off by one bin: all mass lands in the 30-degree bucket.
    std::vector<int> off_by_one(truth.size());
    for (size_t i = 0; i < truth.size(); ++i) off_by_one[i] = (truth[i] + 1) % 12;
    auto shifted = pose_error_histogram(off_by_one, truth, b);
    CHECK(shifted.percentages[1] == 100.0);
    CHECK(shifted.bucket_errors[1] == 30.0);

    // Opposite views: all mass at 180 degrees.
    std::vector<int> opposite(truth.size());
    for (size_t i = 0; i < truth.size(); ++i) opposite[i] = (truth[i] + 6) % 12;
    auto far = pose_error_histogram(opposite, truth, b);
    CHECK(far.percentages[6] == 100.0);
    CHECK(far.bucket_errors[6] == 180.0);
}

TEST_CASE("pose error histogram percentages sum to 100 and fold symmetrically") {
    PoseBinning b(0.0, 360.0, 12);
    Rng rng(5);
    std::vector<int> pred(200), truth(200);
    for (size_t i = 0; i < pred.size(); ++i) {
        pred[i] = static_cast<int>(rng.below(12));
        truth[i] = static_cast<int>(rng.below(12));
    }
    auto hist = pose_error_histogram(pred, truth, b);
    double total = 0.0;
    for (double p : hist.percentages) total += p;
    CHECK(total == doctest::Approx(100.0));

    auto mirrored = pose_error_histogram(truth, pred, b);
    for (size_t k = 0; k < hist.percentages.size(); ++k)
        CHECK(hist.percentages[k] == mirrored.percentages[k]);
}

TEST_CASE("identity transfers of a residual-zero model reduce to real accuracy") {
    ManifoldParams p;
    p.num_classes = 3;
    p.feature_dim = 16;
    p.appearance_dim = 6;
    p.binning = PoseBinning(0.0, 360.0, 4);
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(p, 41));
    SampleConfig cfg;
    cfg.train_objects_per_class = 2;
    cfg.test_objects_per_class = 2;
    cfg.poses_per_object = 4;
    auto [train, test] = sample_dataset(spec, cfg, 42);

    FattenModel model = FattenModel::init(p.binning, tiny_dims(), 43);  // zero residual
    Mat identity_transfers = model.transfer_cells(test.features, test.pose_bins);
    CHECK(identity_transfers == test.features);
    CHECK(model.predict_pose_bins(identity_transfers) == model.predict_pose_bins(test.features));
}

TEST_CASE("distance functions satisfy the metric basics") {
    FattenModel model = FattenModel::init(PoseBinning(0.0, 360.0, 4), tiny_dims(), 3);
    Rng rng(6);
    Mat x = random_normal(1, 16, 1.0, rng);
    Mat y = random_normal(1, 16, 1.0, rng);

    CHECK(distance_feature(x, x) == 0.0);
    CHECK(distance_feature(x, y) == distance_feature(y, x));
    CHECK(distance_combined(model, x, y, 0.0) == distance_feature(x, y));
    CHECK(distance_pose(model, x, x) == 0.0);

    // Triangle inequality for d1 and d2 over random triples.
    for (int i = 0; i < 100; ++i) {
        Mat a = random_normal(1, 16, 1.0, rng);
        Mat b = random_normal(1, 16, 1.0, rng);
        Mat c = random_normal(1, 16, 1.0, rng);
        CHECK(distance_feature(a, c) <=
              distance_feature(a, b) + distance_feature(b, c) + 1e-12);
        CHECK(distance_pose(model, a, c) <=
              distance_pose(model, a, b) + distance_pose(model, b, c) + 1e-12);
    }
    CHECK_THROWS_AS(distance_feature(x, Mat::Zero(1, 5)), DimensionError);
}

TEST_CASE("average precision: hand-enumerated and degenerate cases") {
    // Ranked relevance [1,0,1]: AP = (1/1 + 2/3) / 2.
    CHECK(average_precision({1, 0, 1}) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    CHECK(average_precision({1, 1, 1, 1}) == 1.0);
    CHECK(average_precision({0, 0, 0}) == 0.0);
    CHECK(average_precision({}) == 0.0);
    CHECK(average_precision({0, 1}) == doctest::Approx(0.5));
}

TEST_CASE("average precision equals the brute-force oracle on 1000 random rankings") {
    Rng rng(77);
    for (int i = 0; i < 1000; ++i) {
        size_t n = 1 + rng.below(40);
        std::vector<uint8_t> rel(n);
        for (auto& r : rel) r = rng.below(3) == 0 ? 1 : 0;
        CHECK(average_precision(rel) == brute_force_ap(rel));  // exact, not approximate
    }
}

TEST_CASE("retrieval excludes the query from its own gallery and counts empties") {
    FattenModel model = FattenModel::init(PoseBinning(0.0, 360.0, 4), tiny_dims(), 3);
    Dataset ds;
    ds.binning = model.binning;
    ds.num_classes = 3;
    Rng rng(9);
    ds.features = random_normal(6, 16, 1.0, rng);
    ds.pose_values = {15.0, 15.0, 105.0, 105.0, 195.0, 285.0};
    ds.pose_bins = {0, 0, 1, 1, 2, 3};
    ds.class_labels = {0, 0, 1, 1, 2, 2};
    ds.object_ids = {0, 1, 2, 3, 4, 5};

    // Bins 2 and 3 are singletons: with the query excluded they have no
    // relevant gallery items left, so they contribute AP = 0.
    RetrievalTask task = self_retrieval_task(ds, RelevanceMode::Pose, DistanceKind::D1);
    double map = retrieval_map(model, task);
    CHECK(map <= 4.0 / 6.0 + 1e-12);

    // The same gallery with no self-exclusion ranks the query itself first.
    task.self_index.clear();
    double map_with_self = retrieval_map(model, task);
    CHECK(map_with_self > map);
}

TEST_CASE("distance ties break by gallery index") {
    FattenModel model = FattenModel::init(PoseBinning(0.0, 360.0, 4), tiny_dims(), 3);
    RetrievalTask task;
    task.query_features = Mat::Zero(1, 16);
    task.query_pose_bins = {0};
    task.query_classes = {0};
    task.gallery_features = Mat::Zero(4, 16);  // all distances tie at zero
    task.gallery_pose_bins = {1, 0, 1, 0};
    task.gallery_classes = {0, 0, 0, 0};
    task.relevance = RelevanceMode::Pose;
    task.distance = DistanceKind::D1;

    // Stable order 0,1,2,3: relevance [0,1,0,1], AP = (1/2 + 2/4) / 2.
    CHECK(retrieval_map(model, task) == doctest::Approx(0.5));
}

TEST_CASE("relevance and distance parsing round-trips the documented names") {
    CHECK(relevance_from_string("pose") == RelevanceMode::Pose);
    CHECK(relevance_from_string("category") == RelevanceMode::Category);
    CHECK(relevance_from_string("pose+category") == RelevanceMode::PoseAndCategory);
    CHECK_THROWS_AS(relevance_from_string("both"), ConfigError);
    CHECK(distance_from_string("d1") == DistanceKind::D1);
    CHECK(distance_from_string("d2") == DistanceKind::D2);
    CHECK(distance_from_string("dc") == DistanceKind::DC);
    CHECK_THROWS_AS(distance_from_string("euclid"), ConfigError);
}

TEST_CASE("linear svm separates a separable toy problem deterministically") {
    Mat x(8, 2);
    std::vector<int> y;
    for (int i = 0; i < 4; ++i) {
        x.row(i) << 1.0 + 0.1 * i, 1.0;
        y.push_back(0);
        x.row(4 + i) << -1.0 - 0.1 * i, -1.0;
        y.push_back(1);
    }
    SvmConfig config;
    LinearSvm svm = LinearSvm::train(x, y, 2, config);
    CHECK(svm.accuracy(x, y) == 1.0);

    LinearSvm again = LinearSvm::train(x, y, 2, config);
    CHECK(svm.weights == again.weights);
    CHECK(svm.bias == again.bias);

    CHECK_THROWS_AS(LinearSvm::train(x, y, 1, config), ConfigError);
    CHECK_THROWS_AS(LinearSvm::train(x, {0, 1}, 2, config), DimensionError);
}

TEST_CASE("svm stays within two points of the category head on the bench") {
    TrainedBench bench = trained_bench();
    SvmConfig config;
    LinearSvm svm = LinearSvm::train(bench.train.features, bench.train.class_labels,
                                     bench.train.num_classes, config);
    double svm_acc = svm.accuracy(bench.test.features, bench.test.class_labels);

    auto head_pred = bench.model.predict_classes(bench.test.features);
    size_t hits = 0;
    for (size_t i = 0; i < head_pred.size(); ++i)
        if (head_pred[i] == bench.test.class_labels[i]) ++hits;
    double head_acc = static_cast<double>(hits) / static_cast<double>(head_pred.size());

    CHECK(std::abs(svm_acc - head_acc) <= 0.02 + 1e-12);
}

TEST_CASE("empty augmentation targets reproduce the baseline exactly") {
    TrainedBench bench = trained_bench();
    FewShotConfig config;
    config.shots = 1;
    config.repetitions = 3;
    config.seed = 5;
    std::vector<AugmentationSource> sources{{&bench.model, {}}};
    auto result = few_shot_experiment(bench.test, sources, config);
    for (size_t i = 0; i < result.baseline_accuracy.size(); ++i)
        CHECK(result.baseline_accuracy[i] == result.augmented_accuracy[i]);
    CHECK(result.mean_gain == 0.0);
}

TEST_CASE("few-shot runs are reproducible and validate their inputs") {
    TrainedBench bench = trained_bench();
    FewShotConfig config;
    config.shots = 1;
    config.repetitions = 1;
    config.seed = 9;
    std::vector<AugmentationSource> sources{
        {&bench.model, {45.0, 135.0, 225.0, 315.0}}};
    auto a = few_shot_experiment(bench.test, sources, config);
    auto b = few_shot_experiment(bench.test, sources, config);
    CHECK(a.baseline_accuracy == b.baseline_accuracy);
    CHECK(a.augmented_accuracy == b.augmented_accuracy);

    config.shots = 1000;  // more than any class holds
    CHECK_THROWS_AS(few_shot_experiment(bench.test, sources, config), ConfigError);

    FewShotConfig no_model;
    std::vector<AugmentationSource> bad{{nullptr, {45.0}}};
    CHECK_THROWS_AS(few_shot_experiment(bench.test, bad, no_model), ConfigError);
}

TEST_CASE("few-shot augmentation lifts accuracy on the trained bench") {
    TrainedBench bench = trained_bench();
    FewShotConfig config;
    config.shots = 1;
    config.repetitions = 10;
    config.seed = 11;
    config.with_oracle_bound = true;
    std::vector<AugmentationSource> sources{
        {&bench.model, {45.0, 135.0, 225.0, 315.0}}};
    auto result = few_shot_experiment(bench.test, sources, config);
    CHECK(result.augmented_mean > result.baseline_mean);
    CHECK(result.oracle_accuracy.size() == 10);
}

TEST_CASE("eval report serializes the populated sections") {
    EvalReport report;
    report.transfer = TransferAccuracy{0.9, 0.8, 0.95, 0.85, 100};
    report.retrieval.push_back({"pose", 0.5, 0.7});
    auto j = report.to_json();
    CHECK(j.contains("transfer_accuracy"));
    CHECK(j.contains("retrieval_map"));
    CHECK_FALSE(j.contains("few_shot"));
    CHECK(retrieval_csv(report.retrieval).find("pose") != std::string::npos);
}
