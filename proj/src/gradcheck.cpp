#include "fatten/gradcheck.hpp"

#include <map>

#include "fatten/model.hpp"
#include "fatten/training.hpp"

namespace fatten {

namespace {

// Scales the largest-magnitude entry of the first tensor's gradient by 1.1.
void corrupt_first_gradient(const std::vector<ParamRef>& params) {
    Mat* g = params.front().grad;
    Eigen::Index r, c;
    g->cwiseAbs().maxCoeff(&r, &c);
    (*g)(r, c) *= 1.1;
}

class Collector {
public:
    void add(const GradCheckReport& report) {
        for (const auto& e : report.entries) {
            auto it = index_.find(e.name);
            if (it == index_.end()) {
                index_[e.name] = entries_.size();
                entries_.push_back(e);
            } else {
                auto& existing = entries_[it->second];
                existing.max_rel_err = std::max(existing.max_rel_err, e.max_rel_err);
                existing.checked_entries += e.checked_entries;
            }
        }
    }

    GradCheckReport finish(double tolerance) {
        GradCheckReport report;
        report.tolerance = tolerance;
        report.entries = std::move(entries_);
        report.pass = report.worst() <= tolerance;
        return report;
    }

private:
    std::map<std::string, size_t> index_;
    std::vector<GradCheckEntry> entries_;
};

GradCheckReport check_linear(uint64_t seed, double tolerance, bool corrupt) {
    Rng rng(stream_seed(seed, "check.linear"));
    LinearLayer layer = LinearLayer::kaiming(5, 3, rng);
    layer.bias = random_normal(3, 1, 0.5, rng);
    Mat x = random_normal(4, 5, 1.0, rng);
    Mat c = random_normal(4, 3, 1.0, rng);
    Mat input_grad = Mat::Zero(4, 5);

    auto params = layer.params("linear");
    params.push_back({"linear.input", &x, &input_grad});

    auto loss = [&]() { return (c.array() * layer.apply(x).array()).sum(); };
    auto backward = [&]() {
        layer.zero_grad();
        layer.forward(x);
        input_grad = layer.backward(c);
        if (corrupt) corrupt_first_gradient(params);
    };
    return gradient_check(params, loss, backward, tolerance, 0, seed);
}

GradCheckReport check_batchnorm(uint64_t seed, double tolerance) {
    Rng rng(stream_seed(seed, "check.batchnorm"));
    BatchNormLayer layer(4);
    layer.gamma = random_normal(1, 4, 1.0, rng);
    layer.beta = random_normal(1, 4, 1.0, rng);
    Mat x = random_normal(6, 4, 1.5, rng);
    Mat c = random_normal(6, 4, 1.0, rng);
    Mat input_grad = Mat::Zero(6, 4);

    auto params = layer.params("batchnorm");
    params.push_back({"batchnorm.input", &x, &input_grad});

    auto loss = [&]() { return (c.array() * layer.forward(x, Mode::Train).array()).sum(); };
    auto backward = [&]() {
        layer.zero_grad();
        layer.forward(x, Mode::Train);
        input_grad = layer.backward(c);
    };
    return gradient_check(params, loss, backward, tolerance, 0, seed);
}

GradCheckReport check_activation(uint64_t seed, double tolerance, Activation kind,
                                 const std::string& name) {
    Rng rng(stream_seed(seed, "check." + name));
    Mat x = random_normal(4, 6, 1.0, rng);
    Mat c = random_normal(4, 6, 1.0, rng);
    Mat input_grad = Mat::Zero(4, 6);

    std::vector<ParamRef> params{{name + ".input", &x, &input_grad}};
    auto loss = [&]() { return (c.array() * activation_forward(kind, x).array()).sum(); };
    auto backward = [&]() {
        Mat out = activation_forward(kind, x);
        const Mat& cached = kind == Activation::Softmax ? out : x;
        input_grad = activation_backward(kind, cached, c);
    };
    return gradient_check(params, loss, backward, tolerance, 0, seed);
}

GradCheckReport check_pose_predictor(uint64_t seed, double tolerance) {
    Rng rng(stream_seed(seed, "check.pose"));
    PosePredictor pose(10, 8, 5, rng);
    Mat x = random_normal(6, 10, 1.0, rng);
    std::vector<int> labels(6);
    for (auto& l : labels) l = static_cast<int>(rng.below(5));
    Mat input_grad = Mat::Zero(6, 10);

    auto params = pose.params("pose_predictor");
    params.push_back({"pose_predictor.input", &x, &input_grad});

    auto loss = [&]() { return cross_entropy(softmax(pose.forward(x, Mode::Train)), labels); };
    auto backward = [&]() {
        pose.zero_grad();
        Mat probs = softmax(pose.forward(x, Mode::Train));
        input_grad = pose.backward(softmax_xent_grad(probs, labels));
    };
    return gradient_check(params, loss, backward, tolerance, 0, seed);
}

GradCheckReport check_composed(uint64_t seed, double tolerance, int entries_per_tensor) {
    ModelDims dims;
    dims.feature_dim = 16;
    dims.pose_cells = 5;
    dims.num_classes = 4;
    dims.pose_hidden = 8;
    dims.app_hidden = 12;
    dims.app_out = 6;
    dims.dec_hidden = 12;
    FattenModel model = FattenModel::init(PoseBinning(0.0, 360.0, 5), dims, seed);

    Rng rng(stream_seed(seed, "check.composed"));
    // The decoder output layer starts at zero; move it off that point so the
    // check exercises a generic state.
    model.decoder.fc2.weights = random_normal(dims.feature_dim, dims.dec_hidden, 0.2, rng);
    model.decoder.fc2.bias = random_normal(dims.feature_dim, 1, 0.1, rng);

    Mat x = random_normal(6, dims.feature_dim, 1.0, rng);
    std::vector<int> targets(6), labels(6);
    for (auto& t : targets) t = static_cast<int>(rng.below(dims.pose_cells));
    for (auto& l : labels) l = static_cast<int>(rng.below(dims.num_classes));

    auto params = model.encoder_decoder_params();
    auto loss = [&]() {
        return fatten_training_loss(model, x, targets, labels, 1.0, 1.0, false).total;
    };
    auto backward = [&]() {
        model.appearance.zero_grad();
        model.decoder.zero_grad();
        fatten_training_loss(model, x, targets, labels, 1.0, 1.0, true);
    };
    return gradient_check(params, loss, backward, tolerance, entries_per_tensor, seed);
}

} // namespace

GradCheckReport full_gradient_check(const GradCheckOptions& options) {
    Collector collector;
    for (int s = 0; s < options.seeds; ++s) {
        const uint64_t seed = stream_seed(options.seed, "gradcheck.seed", static_cast<uint64_t>(s));
        collector.add(check_linear(seed, options.tolerance, options.corrupt));
        collector.add(check_batchnorm(seed, options.tolerance));
        collector.add(check_activation(seed, options.tolerance, Activation::Relu, "relu"));
        collector.add(check_activation(seed, options.tolerance, Activation::Elu, "elu"));
        collector.add(check_activation(seed, options.tolerance, Activation::Softmax, "softmax"));
        collector.add(check_pose_predictor(seed, options.tolerance));
        collector.add(check_composed(seed, options.tolerance, options.entries_per_tensor));
    }
    return collector.finish(options.tolerance);
}

} // namespace fatten
