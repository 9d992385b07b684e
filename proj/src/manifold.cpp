#include "fatten/manifold.hpp"

#include <cmath>

#include "fatten/errors.hpp"

namespace fatten {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ManifoldSpec ManifoldSpec::build(const ManifoldParams& params, uint64_t seed) {
    if (params.num_classes < 2)
        throw ConfigError("manifold: need at least 2 classes, got " +
                          std::to_string(params.num_classes));
    if (params.feature_dim < params.appearance_dim + 2)
        throw ConfigError("manifold: feature_dim " + std::to_string(params.feature_dim) +
                          " must be at least appearance_dim + 2 = " +
                          std::to_string(params.appearance_dim + 2));
    if (params.binning.bins() < 2)
        throw ConfigError("manifold: need at least 2 pose bins, got " +
                          std::to_string(params.binning.bins()));
    if (params.fourier_harmonics < 1)
        throw ConfigError("manifold: need at least 1 Fourier harmonic");
    if (params.within_class_spread < 0.0 || params.observation_noise < 0.0)
        throw ConfigError("manifold: noise levels must be non-negative");

    ManifoldSpec spec;
    spec.params = params;
    spec.seed = seed;

    Rng centroid_rng(stream_seed(seed, "centroids"));
    spec.class_centroids = random_normal(params.num_classes, params.appearance_dim, 1.0, centroid_rng);
    for (int i = 0; i < params.num_classes; ++i)
        for (int j = i + 1; j < params.num_classes; ++j)
            if ((spec.class_centroids.row(i) - spec.class_centroids.row(j)).norm() < 1e-6)
                throw ConfigError("manifold: class centroids " + std::to_string(i) + " and " +
                                  std::to_string(j) + " coincide; choose another seed");

    const int in_dim = spec.input_dim();
    Rng embed_rng(stream_seed(seed, "embedding"));
    spec.embedding = random_normal(params.feature_dim, in_dim, 1.0 / std::sqrt(in_dim), embed_rng);
    // Pose gain lives in the Fourier columns so the oracle stays a plain
    // matrix-tanh map.
    spec.embedding.rightCols(2 * params.fourier_harmonics) *= params.pose_gain;
    return spec;
}

Mat ManifoldSpec::fourier_features(double pose_value) const {
    const double wrapped = params.binning.wrap_value(pose_value);
    const double span = params.binning.hi() - params.binning.lo();
    const double phase = 2.0 * kPi * (wrapped - params.binning.lo()) / span;
    Mat f(1, 2 * params.fourier_harmonics);
    for (int k = 0; k < params.fourier_harmonics; ++k) {
        f(0, 2 * k) = std::sin((k + 1) * phase);
        f(0, 2 * k + 1) = std::cos((k + 1) * phase);
    }
    return f;
}

Mat ManifoldSpec::oracle_feature(const Mat& appearance, double pose_value) const {
    require_shape(appearance, 1, params.appearance_dim, "oracle_feature appearance");
    Mat input(1, input_dim());
    input.leftCols(params.appearance_dim) = appearance;
    input.rightCols(2 * params.fourier_harmonics) = fourier_features(pose_value);
    Mat raw = (input * embedding.transpose()).array().tanh().matrix();
    double rms = raw.norm() / std::sqrt(static_cast<double>(params.feature_dim));
    return raw / std::max(rms, 1e-12);
}

Mat ManifoldSpec::object_appearance(uint64_t object_id, int class_label) const {
    if (class_label < 0 || class_label >= params.num_classes)
        throw InputError("object_appearance: class " + std::to_string(class_label) +
                         " out of range [0," + std::to_string(params.num_classes) + ")");
    Rng rng(stream_seed(seed, "appearance", object_id));
    Mat a = random_normal(1, params.appearance_dim, params.within_class_spread, rng);
    a += class_centroids.row(class_label);
    return a;
}

double ManifoldSpec::estimate_pose_lipschitz(int probes, uint64_t probe_seed) const {
    const double delta = 0.1 * (params.binning.hi() - params.binning.lo()) / 360.0;
    Rng rng(stream_seed(probe_seed, "lipschitz"));
    double worst = 0.0;
    for (int i = 0; i < probes; ++i) {
        int cls = static_cast<int>(rng.below(params.num_classes));
        Mat a = object_appearance(rng.next_u64(), cls);
        double p = rng.uniform(params.binning.lo(), params.binning.hi());
        double d = (oracle_feature(a, p + delta) - oracle_feature(a, p)).norm() / delta;
        worst = std::max(worst, d);
    }
    return worst;
}

bool ManifoldSpec::same_geometry(const ManifoldSpec& other) const {
    return seed == other.seed && params.num_classes == other.params.num_classes &&
           params.feature_dim == other.params.feature_dim &&
           params.appearance_dim == other.params.appearance_dim &&
           params.fourier_harmonics == other.params.fourier_harmonics &&
           params.binning == other.params.binning &&
           class_centroids == other.class_centroids && embedding == other.embedding;
}

FeatureRecord Dataset::record(Eigen::Index i) const {
    FeatureRecord r;
    r.feature = features.row(i);
    r.pose_value = pose_values[static_cast<size_t>(i)];
    r.pose_bin = pose_bins[static_cast<size_t>(i)];
    r.class_label = class_labels[static_cast<size_t>(i)];
    r.object_id = object_ids[static_cast<size_t>(i)];
    return r;
}

void Dataset::validate() const {
    const size_t n = static_cast<size_t>(features.rows());
    if (pose_values.size() != n || pose_bins.size() != n || class_labels.size() != n ||
        object_ids.size() != n)
        throw DimensionError("dataset: label columns disagree with " + std::to_string(n) +
                             " feature rows");
    require_finite(features, "dataset features");
    for (size_t i = 0; i < n; ++i) {
        if (class_labels[i] < 0 || class_labels[i] >= num_classes)
            throw InputError("dataset: record " + std::to_string(i) + " class " +
                             std::to_string(class_labels[i]) + " out of range [0," +
                             std::to_string(num_classes) + ")");
        if (pose_bins[i] < 0 || pose_bins[i] >= binning.cells())
            throw InputError("dataset: record " + std::to_string(i) + " pose bin " +
                             std::to_string(pose_bins[i]) + " out of range [0," +
                             std::to_string(binning.cells()) + ")");
    }
}

std::vector<Eigen::Index> Dataset::indices_of_class(int class_label) const {
    std::vector<Eigen::Index> out;
    for (Eigen::Index i = 0; i < size(); ++i)
        if (class_labels[static_cast<size_t>(i)] == class_label) out.push_back(i);
    return out;
}

namespace {

Dataset sample_split(const std::shared_ptr<const ManifoldSpec>& spec, const SampleConfig& config,
                     uint64_t split_seed, const std::string& split, int objects_per_class,
                     uint64_t first_object_id) {
    const auto& params = spec->params;
    const int bins = params.binning.bins();
    const Eigen::Index total =
        static_cast<Eigen::Index>(params.num_classes) * objects_per_class * config.poses_per_object;

    Dataset ds;
    ds.features = Mat(total, params.feature_dim);
    ds.pose_values.reserve(static_cast<size_t>(total));
    ds.pose_bins.reserve(static_cast<size_t>(total));
    ds.class_labels.reserve(static_cast<size_t>(total));
    ds.object_ids.reserve(static_cast<size_t>(total));
    ds.binning = params.binning;
    ds.num_classes = params.num_classes;
    ds.split = split;
    ds.spec = spec;

    Eigen::Index row = 0;
    uint64_t object_id = first_object_id;
    for (int cls = 0; cls < params.num_classes; ++cls) {
        for (int obj = 0; obj < objects_per_class; ++obj, ++object_id) {
            Mat appearance = spec->object_appearance(object_id, cls);
            for (int j = 0; j < config.poses_per_object; ++j, ++row) {
                const int bin = j % bins;
                double pose = params.binning.centroid(bin);
                if (config.sampling == PoseSampling::UniformWithinBins) {
                    Rng pose_rng(stream_seed(split_seed, "pose", object_id, static_cast<uint64_t>(j)));
                    const double w = params.binning.cell_width();
                    pose = params.binning.lo() + bin * w + pose_rng.uniform() * w;
                }
                Mat x = spec->oracle_feature(appearance, pose);
                if (params.observation_noise > 0.0) {
                    Rng noise_rng(stream_seed(split_seed, "noise", object_id, static_cast<uint64_t>(j)));
                    x += random_normal(1, params.feature_dim, params.observation_noise, noise_rng);
                }
                ds.features.row(row) = x;
                ds.pose_values.push_back(pose);
                ds.pose_bins.push_back(params.binning.encode(pose));
                ds.class_labels.push_back(cls);
                ds.object_ids.push_back(object_id);
            }
        }
    }
    return ds;
}

} // namespace

std::pair<Dataset, Dataset> sample_dataset(std::shared_ptr<const ManifoldSpec> spec,
                                           const SampleConfig& config, uint64_t split_seed) {
    if (!spec) throw ConfigError("sample_dataset: null manifold spec");
    if (config.train_objects_per_class < 1 || config.test_objects_per_class < 1 ||
        config.poses_per_object < 1)
        throw ConfigError("sample_dataset: object and pose counts must be >= 1");

    const uint64_t train_objects =
        static_cast<uint64_t>(spec->params.num_classes) * config.train_objects_per_class;
    Dataset train = sample_split(spec, config, split_seed, "train",
                                 config.train_objects_per_class, 0);
    Dataset test = sample_split(spec, config, split_seed, "test",
                                config.test_objects_per_class, train_objects);
    return {std::move(train), std::move(test)};
}

} // namespace fatten
