#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>

#include "fatten/errors.hpp"
#include "fatten/eval.hpp"
#include "fatten/manifold.hpp"

using namespace fatten;

namespace {

ManifoldParams small_params() {
    ManifoldParams p;
    p.num_classes = 4;
    p.feature_dim = 48;
    p.appearance_dim = 12;
    p.binning = PoseBinning(0.0, 360.0, 8);
    return p;
}

} // namespace

TEST_CASE("manifold build is deterministic in (params, seed)") {
    ManifoldSpec a = ManifoldSpec::build(small_params(), 123);
    ManifoldSpec b = ManifoldSpec::build(small_params(), 123);
    CHECK(a.embedding == b.embedding);
    CHECK(a.class_centroids == b.class_centroids);
    CHECK(a.same_geometry(b));

    ManifoldSpec c = ManifoldSpec::build(small_params(), 124);
    CHECK(a.embedding != c.embedding);
}

TEST_CASE("manifold build rejects invalid dimensions") {
    ManifoldParams p = small_params();
    p.num_classes = 1;
    CHECK_THROWS_AS(ManifoldSpec::build(p, 0), ConfigError);

    p = small_params();
    p.feature_dim = p.appearance_dim + 1;
    CHECK_THROWS_AS(ManifoldSpec::build(p, 0), ConfigError);

    p = small_params();
    p.within_class_spread = -0.1;
    CHECK_THROWS_AS(ManifoldSpec::build(p, 0), ConfigError);
}

TEST_CASE("oracle is pure and closes the 360-degree loop exactly") {
    ManifoldSpec spec = ManifoldSpec::build(small_params(), 5);
    Mat a = spec.object_appearance(17, 2);
    CHECK(spec.oracle_feature(a, 123.4) == spec.oracle_feature(a, 123.4));
    // Closure: the wrap makes phi(a, 0) and phi(a, 360) bitwise identical.
    CHECK(spec.oracle_feature(a, 0.0) == spec.oracle_feature(a, 360.0));
    CHECK(spec.oracle_feature(a, -90.0) == spec.oracle_feature(a, 270.0));
}

TEST_CASE("oracle features have unit RMS") {
    ManifoldSpec spec = ManifoldSpec::build(small_params(), 5);
    Mat a = spec.object_appearance(3, 1);
    Mat x = spec.oracle_feature(a, 42.0);
    double rms = x.norm() / std::sqrt(static_cast<double>(spec.params.feature_dim));
    CHECK(rms == doctest::Approx(1.0));
}

TEST_CASE("manifold is empirically Lipschitz in pose") {
    ManifoldSpec spec = ManifoldSpec::build(small_params(), 9);
    double lipschitz = spec.estimate_pose_lipschitz(50, 1);
    CHECK(lipschitz > 0.0);

    Rng rng(2);
    Mat a = spec.object_appearance(5, 0);
    for (int i = 0; i < 50; ++i) {
        double p = rng.uniform(0.0, 360.0);
        double delta = rng.uniform(1e-3, 1.0);
        double dist = (spec.oracle_feature(a, p + delta) - spec.oracle_feature(a, p)).norm();
        CHECK(dist <= 1.5 * lipschitz * delta);
    }
}

TEST_CASE("continuity: feature displacement vanishes with the pose step") {
    ManifoldSpec spec = ManifoldSpec::build(small_params(), 9);
    Mat a = spec.object_appearance(11, 3);
    double coarse = (spec.oracle_feature(a, 50.0) - spec.oracle_feature(a, 40.0)).norm();
    double fine = (spec.oracle_feature(a, 40.1) - spec.oracle_feature(a, 40.0)).norm();
    CHECK(fine < coarse);
    CHECK(fine < 0.05 * std::sqrt(static_cast<double>(spec.params.feature_dim)));
}

TEST_CASE("same-bin poses are closer than cross-bin poses") {
    ManifoldSpec spec = ManifoldSpec::build(small_params(), 21);
    Mat a = spec.object_appearance(7, 1);
    const auto& binning = spec.params.binning;

    Rng rng(3);
    std::vector<double> same_bin, cross_bin;
    for (int i = 0; i < 300; ++i) {
        double p = rng.uniform(0.0, 360.0);
        double q = rng.uniform(0.0, 360.0);
        double d = (spec.oracle_feature(a, p) - spec.oracle_feature(a, q)).norm();
        if (binning.encode(p) == binning.encode(q)) same_bin.push_back(d);
        else cross_bin.push_back(d);
    }
    REQUIRE(!same_bin.empty());
    REQUIRE(!cross_bin.empty());
    std::sort(cross_bin.begin(), cross_bin.end());
    double median_cross = cross_bin[cross_bin.size() / 2];
    for (double d : same_bin)
        CHECK(d < median_cross);
}

TEST_CASE("classes are linearly separable in the noise-free oracle") {
    ManifoldSpec spec = ManifoldSpec::build(small_params(), 33);
    const int per_class = 30;
    const double pose = 75.0;  // fixed pose, appearance varies
    Mat x(spec.params.num_classes * per_class, spec.params.feature_dim);
    std::vector<int> y(static_cast<size_t>(x.rows()));
    Eigen::Index row = 0;
    for (int cls = 0; cls < spec.params.num_classes; ++cls)
        for (int i = 0; i < per_class; ++i, ++row) {
            x.row(row) = spec.oracle_feature(
                spec.object_appearance(static_cast<uint64_t>(row), cls), pose);
            y[static_cast<size_t>(row)] = cls;
        }

    SvmConfig config;
    LinearSvm probe = LinearSvm::train(x, y, spec.params.num_classes, config);
    CHECK(probe.accuracy(x, y) >= 0.99);
}

TEST_CASE("sampling produces the counting identity and balanced cells") {
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(small_params(), 7));
    SampleConfig cfg;
    cfg.train_objects_per_class = 1;
    cfg.test_objects_per_class = 1;
    cfg.poses_per_object = spec->params.binning.bins();
    auto [train, test] = sample_dataset(spec, cfg, 99);

    CHECK(train.size() == spec->params.num_classes * spec->params.binning.bins());
    CHECK(test.size() == train.size());

    // Every (class, bin) cell holds exactly one record.
    std::map<std::pair<int, int>, int> cells;
    for (Eigen::Index i = 0; i < train.size(); ++i)
        cells[{train.class_labels[static_cast<size_t>(i)],
               train.pose_bins[static_cast<size_t>(i)]}]++;
    for (const auto& [cell, count] : cells)
        CHECK(count == 1);
    CHECK(cells.size() == static_cast<size_t>(train.size()));
}

TEST_CASE("degenerate spreads collapse object trajectories") {
    ManifoldParams p = small_params();
    p.within_class_spread = 0.0;
    p.observation_noise = 0.0;
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(p, 7));
    SampleConfig cfg;
    cfg.train_objects_per_class = 3;
    cfg.test_objects_per_class = 1;
    cfg.poses_per_object = 4;
    auto [train, _] = sample_dataset(spec, cfg, 1);

    // All objects of one class trace identical trajectories.
    for (Eigen::Index i = 0; i < train.size(); ++i)
        for (Eigen::Index j = i + 1; j < train.size(); ++j) {
            if (train.class_labels[static_cast<size_t>(i)] ==
                    train.class_labels[static_cast<size_t>(j)] &&
                train.pose_values[static_cast<size_t>(i)] ==
                    train.pose_values[static_cast<size_t>(j)])
                CHECK(train.features.row(i) == train.features.row(j));
        }
}

TEST_CASE("train and test splits use disjoint object ids") {
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(small_params(), 7));
    SampleConfig cfg;
    cfg.train_objects_per_class = 5;
    cfg.test_objects_per_class = 3;
    cfg.poses_per_object = 4;
    auto [train, test] = sample_dataset(spec, cfg, 42);

    std::set<uint64_t> train_ids(train.object_ids.begin(), train.object_ids.end());
    for (uint64_t id : test.object_ids)
        CHECK(train_ids.count(id) == 0);
}

TEST_CASE("sampling is deterministic in (spec, config, seed)") {
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(small_params(), 7));
    SampleConfig cfg;
    cfg.train_objects_per_class = 2;
    cfg.test_objects_per_class = 1;
    cfg.poses_per_object = 3;
    cfg.sampling = PoseSampling::UniformWithinBins;
    auto [train_a, test_a] = sample_dataset(spec, cfg, 5);
    auto [train_b, test_b] = sample_dataset(spec, cfg, 5);
    CHECK(train_a.features == train_b.features);
    CHECK(test_a.features == test_b.features);
    CHECK(train_a.pose_values == train_b.pose_values);

    auto [train_c, _] = sample_dataset(spec, cfg, 6);
    CHECK(train_a.features != train_c.features);
}

TEST_CASE("uniform-within-bin sampling stays inside the assigned cell") {
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(small_params(), 7));
    SampleConfig cfg;
    cfg.train_objects_per_class = 4;
    cfg.test_objects_per_class = 1;
    cfg.poses_per_object = 8;
    cfg.sampling = PoseSampling::UniformWithinBins;
    auto [train, _] = sample_dataset(spec, cfg, 11);
    for (size_t i = 0; i < train.pose_values.size(); ++i)
        CHECK(train.binning.encode(train.pose_values[i]) == train.pose_bins[i]);
}

TEST_CASE("dataset records reconstruct from the object id") {
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(small_params(), 7));
    ManifoldParams noise_free = spec->params;
    noise_free.observation_noise = 0.0;
    auto clean = std::make_shared<ManifoldSpec>(ManifoldSpec::build(noise_free, 7));

    SampleConfig cfg;
    cfg.train_objects_per_class = 2;
    cfg.test_objects_per_class = 1;
    cfg.poses_per_object = 4;
    auto [train, _] = sample_dataset(clean, cfg, 3);

    // Noise-free records equal the oracle at (object appearance, pose).
    for (Eigen::Index i = 0; i < train.size(); ++i) {
        auto rec = train.record(i);
        Mat a = clean->object_appearance(rec.object_id, rec.class_label);
        Mat expected = clean->oracle_feature(a, rec.pose_value);
        CHECK((train.features.row(i) - expected.row(0)).norm() == 0.0);
    }
}
