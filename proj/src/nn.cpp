#include "fatten/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fatten {

LinearLayer::LinearLayer(int in_dim, int out_dim)
    : weights(Mat::Zero(out_dim, in_dim)),
      bias(Mat::Zero(out_dim, 1)),
      grad_weights(Mat::Zero(out_dim, in_dim)),
      grad_bias(Mat::Zero(out_dim, 1)) {}

LinearLayer LinearLayer::kaiming(int in_dim, int out_dim, Rng& rng) {
    LinearLayer layer(in_dim, out_dim);
    double bound = std::sqrt(6.0 / static_cast<double>(in_dim));
    layer.weights = random_uniform(out_dim, in_dim, -bound, bound, rng);
    return layer;
}

Mat LinearLayer::apply(const Mat& batch) const {
    require_cols(batch, weights.cols(), "linear forward input");
    Mat out = batch * weights.transpose();
    out.rowwise() += bias.col(0).transpose();
    return out;
}

Mat LinearLayer::forward(const Mat& batch) {
    cached_input_ = batch;
    return apply(batch);
}

Mat LinearLayer::backward(const Mat& upstream) {
    require_shape(upstream, cached_input_.rows(), weights.rows(), "linear backward upstream");
    grad_weights += upstream.transpose() * cached_input_;
    grad_bias += upstream.colwise().sum().transpose();
    return upstream * weights;
}

Mat LinearLayer::backward_input(const Mat& upstream) const {
    require_cols(upstream, weights.rows(), "linear backward_input upstream");
    return upstream * weights;
}

void LinearLayer::zero_grad() {
    grad_weights.setZero();
    grad_bias.setZero();
}

std::vector<ParamRef> LinearLayer::params(const std::string& prefix) {
    return {{prefix + ".weights", &weights, &grad_weights},
            {prefix + ".bias", &bias, &grad_bias}};
}

BatchNormLayer::BatchNormLayer(int features, double eps, double mom)
    : gamma(Mat::Ones(1, features)),
      beta(Mat::Zero(1, features)),
      running_mean(Mat::Zero(1, features)),
      running_var(Mat::Ones(1, features)),
      epsilon(eps),
      momentum(mom),
      grad_gamma(Mat::Zero(1, features)),
      grad_beta(Mat::Zero(1, features)) {}

Mat BatchNormLayer::apply(const Mat& batch) const {
    require_cols(batch, gamma.cols(), "batchnorm input");
    Mat inv_std = (running_var.array() + epsilon).sqrt().inverse().matrix();
    Mat out = batch;
    out.rowwise() -= running_mean.row(0);
    out.array().rowwise() *= (inv_std.array() * gamma.array()).row(0);
    out.rowwise() += beta.row(0);
    return out;
}

Mat BatchNormLayer::forward(const Mat& batch, Mode mode) {
    require_cols(batch, gamma.cols(), "batchnorm input");
    if (mode == Mode::Infer) {
        have_train_cache_ = false;
        return apply(batch);
    }
    const auto rows = batch.rows();
    if (rows < 2)
        throw InputError("batchnorm training forward: degenerate batch of size " +
                         std::to_string(rows) + " (need >= 2)");

    Mat mean = batch.colwise().mean();
    Mat centered = batch.rowwise() - mean.row(0);
    Mat var = centered.array().square().matrix().colwise().mean();
    cached_inv_std_ = (var.array() + epsilon).sqrt().inverse().matrix();
    cached_normalized_ = centered.array().rowwise() * cached_inv_std_.array().row(0);
    have_train_cache_ = true;

    running_mean = (1.0 - momentum) * running_mean + momentum * mean;
    running_var = (1.0 - momentum) * running_var + momentum * var;

    Mat out = cached_normalized_.array().rowwise() * gamma.array().row(0);
    out.rowwise() += beta.row(0);
    return out;
}

Mat BatchNormLayer::backward(const Mat& upstream) {
    if (!have_train_cache_)
        throw StateError("batchnorm backward: no cached training-mode forward");
    require_same_shape(upstream, cached_normalized_, "batchnorm backward upstream");

    const double m = static_cast<double>(upstream.rows());
    grad_gamma += (upstream.array() * cached_normalized_.array()).colwise().sum().matrix();
    grad_beta += upstream.colwise().sum();

    Mat d_norm = upstream.array().rowwise() * gamma.array().row(0);
    Mat sum_d = d_norm.colwise().sum();
    Mat sum_dx = (d_norm.array() * cached_normalized_.array()).colwise().sum().matrix();

    Mat dx = m * d_norm;
    dx.rowwise() -= sum_d.row(0);
    dx -= (cached_normalized_.array().rowwise() * sum_dx.array().row(0)).matrix();
    dx.array().rowwise() *= (cached_inv_std_.array() / m).row(0);
    return dx;
}

Mat BatchNormLayer::backward_input_inference(const Mat& upstream) const {
    require_cols(upstream, gamma.cols(), "batchnorm backward_input upstream");
    Mat inv_std = (running_var.array() + epsilon).sqrt().inverse().matrix();
    return (upstream.array().rowwise() * (gamma.array() * inv_std.array()).row(0)).matrix();
}

void BatchNormLayer::zero_grad() {
    grad_gamma.setZero();
    grad_beta.setZero();
}

std::vector<ParamRef> BatchNormLayer::params(const std::string& prefix) {
    return {{prefix + ".gamma", &gamma, &grad_gamma},
            {prefix + ".beta", &beta, &grad_beta}};
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "elu") return Activation::Elu;
    if (name == "softmax") return Activation::Softmax;
    throw ConfigError("unknown activation kind '" + name + "'");
}

Mat activation_forward(Activation kind, const Mat& input) {
    switch (kind) {
    case Activation::Relu:
        return input.cwiseMax(0.0);
    case Activation::Elu:
        return input.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    case Activation::Softmax:
        return softmax(input);
    }
    throw ConfigError("unknown activation kind");
}

Mat activation_backward(Activation kind, const Mat& cached, const Mat& upstream) {
    require_same_shape(cached, upstream, "activation backward");
    switch (kind) {
    case Activation::Relu:
        return (cached.array() > 0.0).select(upstream, Mat::Zero(upstream.rows(), upstream.cols()));
    case Activation::Elu:
        return upstream.binaryExpr(cached, [](double up, double v) {
            return v > 0.0 ? up : up * std::exp(v);
        });
    case Activation::Softmax: {
        // cached holds the softmax output p; dL/dz = p .* (up - sum(up .* p)) per row.
        Mat dot = (upstream.array() * cached.array()).rowwise().sum();
        Mat out = upstream;
        out.colwise() -= dot.col(0);
        return (out.array() * cached.array()).matrix();
    }
    }
    throw ConfigError("unknown activation kind");
}

Mat softmax(const Mat& logits) {
    Mat out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        double mx = logits.row(r).maxCoeff();
        Eigen::ArrayXd e = (logits.row(r).array() - mx).exp();
        out.row(r) = (e / e.sum()).matrix();
    }
    return out;
}

double cross_entropy(const Mat& probabilities, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != probabilities.rows())
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                             " labels for " + shape_str(probabilities) + " probabilities");
    constexpr double kFloor = 1e-12;
    double total = 0.0;
    for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
        double row_sum = probabilities.row(r).sum();
        if (std::abs(row_sum - 1.0) > 1e-6)
            throw InputError("cross_entropy: row " + std::to_string(r) +
                             " is not a distribution (sums to " + std::to_string(row_sum) + ")");
        int label = labels[static_cast<size_t>(r)];
        if (label < 0 || label >= probabilities.cols())
            throw InputError("cross_entropy: label " + std::to_string(label) +
                             " out of range [0," + std::to_string(probabilities.cols()) + ") at row " +
                             std::to_string(r));
        total += -std::log(std::max(probabilities(r, label), kFloor));
    }
    return total / static_cast<double>(probabilities.rows());
}

Mat softmax_xent_grad(const Mat& probabilities, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != probabilities.rows())
        throw DimensionError("softmax_xent_grad: " + std::to_string(labels.size()) +
                             " labels for " + shape_str(probabilities) + " probabilities");
    Mat grad = probabilities;
    for (Eigen::Index r = 0; r < grad.rows(); ++r)
        grad(r, labels[static_cast<size_t>(r)]) -= 1.0;
    return grad / static_cast<double>(grad.rows());
}

SgdOptimizer::SgdOptimizer(std::vector<ParamRef> params, double learning_rate, double momentum)
    : params_(std::move(params)), learning_rate_(learning_rate), momentum_(momentum) {
    velocity_.reserve(params_.size());
    for (const auto& p : params_)
        velocity_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
}

void SgdOptimizer::zero_grad() {
    for (auto& p : params_)
        p.grad->setZero();
}

void SgdOptimizer::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.grad->allFinite())
            throw NumericsError("sgd step: non-finite gradient in tensor '" + p.name + "'");
        velocity_[i] = momentum_ * velocity_[i] - learning_rate_ * (*p.grad);
        *p.value += velocity_[i];
    }
}

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto& e : entries)
        w = std::max(w, e.max_rel_err);
    return w;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << "gradient check (tolerance " << tolerance << "): "
       << (pass ? "PASS" : "FAIL") << "\n";
    for (const auto& e : entries)
        os << "  " << e.name << ": max rel err " << e.max_rel_err << " over "
           << e.checked_entries << " entries\n";
    return os.str();
}

GradCheckReport gradient_check(const std::vector<ParamRef>& params,
                               const std::function<double()>& loss_fn,
                               const std::function<void()>& backward_fn,
                               double tolerance,
                               int max_entries_per_tensor,
                               uint64_t sample_seed) {
    constexpr double kStep = 1e-5;

    backward_fn();
    std::vector<Mat> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params)
        analytic.push_back(*p.grad);

    GradCheckReport report;
    report.tolerance = tolerance;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        const auto& p = params[pi];
        const Eigen::Index count = p.value->size();

        std::vector<Eigen::Index> indices;
        if (max_entries_per_tensor <= 0 || count <= max_entries_per_tensor) {
            indices.resize(static_cast<size_t>(count));
            for (Eigen::Index k = 0; k < count; ++k)
                indices[static_cast<size_t>(k)] = k;
        } else {
            Rng rng(stream_seed(sample_seed, "gradcheck", pi));
            for (int k = 0; k < max_entries_per_tensor; ++k)
                indices.push_back(static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(count))));
        }

        GradCheckEntry entry;
        entry.name = p.name;
        entry.checked_entries = static_cast<int>(indices.size());
        double* data = p.value->data();
        for (Eigen::Index idx : indices) {
            const double saved = data[idx];
            data[idx] = saved + kStep;
            double plus = loss_fn();
            data[idx] = saved - kStep;
            double minus = loss_fn();
            data[idx] = saved;

            double numeric = (plus - minus) / (2.0 * kStep);
            double a = analytic[pi].data()[idx];
            double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        report.entries.push_back(std::move(entry));
    }
    report.pass = report.worst() <= tolerance;
    return report;
}

} // namespace fatten
