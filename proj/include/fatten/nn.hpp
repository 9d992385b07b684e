#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fatten/mat.hpp"
#include "fatten/rng.hpp"

namespace fatten {

enum class Mode { Train, Infer };

// Named view onto one parameter tensor and its gradient buffer. Optimizers
// and the gradient checker iterate these without knowing layer internals.
struct ParamRef {
    std::string name;
    Mat* value;
    Mat* grad;
};

// Fully-connected layer, y = x * W^T + b broadcast per row.
// `apply` is the pure inference path; `forward` caches the input for backward.
class LinearLayer {
public:
    LinearLayer() = default;
    LinearLayer(int in_dim, int out_dim);

    // Kaiming-style uniform fan-in init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
    static LinearLayer kaiming(int in_dim, int out_dim, Rng& rng);

    Mat weights;   // out x in
    Mat bias;      // out x 1
    Mat grad_weights;
    Mat grad_bias;

    int in_dim() const { return static_cast<int>(weights.cols()); }
    int out_dim() const { return static_cast<int>(weights.rows()); }

    Mat apply(const Mat& batch) const;
    Mat forward(const Mat& batch);
    // Accumulates grad_weights/grad_bias from the cached forward, returns the
    // input gradient.
    Mat backward(const Mat& upstream);
    // Input gradient only; no cache or parameter gradients involved.
    Mat backward_input(const Mat& upstream) const;

    void zero_grad();
    std::vector<ParamRef> params(const std::string& prefix);

private:
    Mat cached_input_;
};

// Per-feature batch normalization with running statistics for inference.
class BatchNormLayer {
public:
    BatchNormLayer() = default;
    explicit BatchNormLayer(int features, double epsilon = 1e-5, double momentum = 0.1);

    Mat gamma;         // 1 x F
    Mat beta;          // 1 x F
    Mat running_mean;  // 1 x F
    Mat running_var;   // 1 x F
    double epsilon = 1e-5;
    double momentum = 0.1;
    Mat grad_gamma;
    Mat grad_beta;

    int features() const { return static_cast<int>(gamma.cols()); }

    // Inference: normalize by running statistics only. Pure.
    Mat apply(const Mat& batch) const;
    // Mode::Train normalizes by batch statistics (batch size >= 2 required),
    // caches intermediates for backward, and folds the batch statistics into
    // the running ones with `momentum`. Mode::Infer delegates to apply().
    Mat forward(const Mat& batch, Mode mode);
    // Training-mode backward through the batch statistics. Throws StateError
    // if the last forward was not in training mode.
    Mat backward(const Mat& upstream);
    // Input gradient of the inference-mode mapping (elementwise affine).
    Mat backward_input_inference(const Mat& upstream) const;

    void zero_grad();
    std::vector<ParamRef> params(const std::string& prefix);

private:
    bool have_train_cache_ = false;
    Mat cached_normalized_;  // (x - mu) / sqrt(var + eps)
    Mat cached_inv_std_;     // 1 x F
};

enum class Activation { Relu, Elu, Softmax };

Activation activation_from_string(const std::string& name);

// For Relu/Elu, `cached` is the forward *input*; for Softmax it is the
// forward *output* (the probabilities).
Mat activation_forward(Activation kind, const Mat& input);
Mat activation_backward(Activation kind, const Mat& cached, const Mat& upstream);

// Row-wise softmax with max subtraction.
Mat softmax(const Mat& logits);

// Mean over rows of -log(p[label]); probabilities are floored at 1e-12
// before the log. Each row must sum to 1 within 1e-6.
double cross_entropy(const Mat& probabilities, const std::vector<int>& labels);

// Gradient of the mean cross-entropy w.r.t. the logits that produced
// `probabilities` via softmax: (p - onehot) / batch.
Mat softmax_xent_grad(const Mat& probabilities, const std::vector<int>& labels);

// Classical momentum SGD: v <- mu*v - lr*g; theta <- theta + v.
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<ParamRef> params, double learning_rate, double momentum = 0.9);

    void set_learning_rate(double lr) { learning_rate_ = lr; }
    void zero_grad();
    // Throws NumericsError naming the offending tensor on non-finite gradients.
    void step();

private:
    std::vector<ParamRef> params_;
    std::vector<Mat> velocity_;
    double learning_rate_;
    double momentum_;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int checked_entries = 0;
};

struct GradCheckReport {
    double tolerance = 0.0;
    bool pass = false;
    std::vector<GradCheckEntry> entries;

    double worst() const;
    std::string summary() const;
};

// Central-difference verification of analytic gradients, step 1e-5.
// `backward_fn` must zero the gradients, run forward+backward, and leave the
// analytic gradients in place; `loss_fn` must be a pure re-evaluation of the
// same loss. Relative error per element is |a-n| / max(|a|,|n|,1e-8).
// With max_entries_per_tensor == 0 every element is checked; otherwise a
// seeded deterministic subsample of that size per tensor.
GradCheckReport gradient_check(const std::vector<ParamRef>& params,
                               const std::function<double()>& loss_fn,
                               const std::function<void()>& backward_fn,
                               double tolerance,
                               int max_entries_per_tensor = 0,
                               uint64_t sample_seed = 0);

} // namespace fatten
