#include "fatten/model.hpp"

#include <cstring>

#include "fatten/errors.hpp"

namespace fatten {

PosePredictor::PosePredictor(int feature_dim, int hidden, int cells, Rng& init_rng)
    : fc1(LinearLayer::kaiming(feature_dim, hidden, init_rng)),
      bn1(hidden),
      fc2(LinearLayer::kaiming(hidden, cells, init_rng)) {
    // Damped logit layer keeps the initial cross-entropy near ln(cells).
    fc2.weights *= 0.1;
}

Mat PosePredictor::logits(const Mat& x) const {
    Mat h = activation_forward(Activation::Relu, bn1.apply(fc1.apply(x)));
    return fc2.apply(h);
}

Mat PosePredictor::predict(const Mat& x) const { return softmax(logits(x)); }

Mat PosePredictor::forward(const Mat& x, Mode mode) {
    cached_mode_ = mode;
    cached_preact_ = bn1.forward(fc1.forward(x), mode);
    Mat h = activation_forward(Activation::Relu, cached_preact_);
    return fc2.forward(h);
}

Mat PosePredictor::backward(const Mat& upstream_logits) {
    if (cached_mode_ == Mode::Train) {
        Mat d_h = fc2.backward(upstream_logits);
        Mat d_pre = activation_backward(Activation::Relu, cached_preact_, d_h);
        return fc1.backward(bn1.backward(d_pre));
    }
    Mat d_h = fc2.backward_input(upstream_logits);
    Mat d_pre = activation_backward(Activation::Relu, cached_preact_, d_h);
    return fc1.backward_input(bn1.backward_input_inference(d_pre));
}

void PosePredictor::zero_grad() {
    fc1.zero_grad();
    bn1.zero_grad();
    fc2.zero_grad();
}

std::vector<ParamRef> PosePredictor::params(const std::string& prefix) {
    std::vector<ParamRef> out;
    for (auto& p : fc1.params(prefix + ".fc1")) out.push_back(p);
    for (auto& p : bn1.params(prefix + ".bn1")) out.push_back(p);
    for (auto& p : fc2.params(prefix + ".fc2")) out.push_back(p);
    return out;
}

AppearanceEncoder::AppearanceEncoder(int feature_dim, int hidden, int out, Rng& init_rng)
    : fc1(LinearLayer::kaiming(feature_dim, hidden, init_rng)),
      bn1(hidden),
      fc2(LinearLayer::kaiming(hidden, out, init_rng)),
      bn2(out) {}

Mat AppearanceEncoder::apply(const Mat& x) const {
    Mat h = activation_forward(Activation::Elu, bn1.apply(fc1.apply(x)));
    return activation_forward(Activation::Elu, bn2.apply(fc2.apply(h)));
}

Mat AppearanceEncoder::forward(const Mat& x, Mode mode) {
    cached_mode_ = mode;
    cached_preact1_ = bn1.forward(fc1.forward(x), mode);
    Mat h = activation_forward(Activation::Elu, cached_preact1_);
    cached_preact2_ = bn2.forward(fc2.forward(h), mode);
    return activation_forward(Activation::Elu, cached_preact2_);
}

Mat AppearanceEncoder::backward(const Mat& upstream) {
    Mat d_pre2 = activation_backward(Activation::Elu, cached_preact2_, upstream);
    if (cached_mode_ == Mode::Train) {
        Mat d_h = fc2.backward(bn2.backward(d_pre2));
        Mat d_pre1 = activation_backward(Activation::Elu, cached_preact1_, d_h);
        return fc1.backward(bn1.backward(d_pre1));
    }
    Mat d_h = fc2.backward_input(bn2.backward_input_inference(d_pre2));
    Mat d_pre1 = activation_backward(Activation::Elu, cached_preact1_, d_h);
    return fc1.backward_input(bn1.backward_input_inference(d_pre1));
}

void AppearanceEncoder::zero_grad() {
    fc1.zero_grad();
    bn1.zero_grad();
    fc2.zero_grad();
    bn2.zero_grad();
}

std::vector<ParamRef> AppearanceEncoder::params(const std::string& prefix) {
    std::vector<ParamRef> out;
    for (auto& p : fc1.params(prefix + ".fc1")) out.push_back(p);
    for (auto& p : bn1.params(prefix + ".bn1")) out.push_back(p);
    for (auto& p : fc2.params(prefix + ".fc2")) out.push_back(p);
    for (auto& p : bn2.params(prefix + ".bn2")) out.push_back(p);
    return out;
}

ResidualDecoder::ResidualDecoder(int in_dim, int hidden, int feature_dim, Rng& init_rng)
    : fc1(LinearLayer::kaiming(in_dim, hidden, init_rng)),
      bn1(hidden),
      fc2(hidden, feature_dim) {}  // final layer zero-initialized

Mat ResidualDecoder::apply(const Mat& x) const {
    Mat h = activation_forward(Activation::Elu, bn1.apply(fc1.apply(x)));
    return fc2.apply(h);
}

Mat ResidualDecoder::forward(const Mat& x, Mode mode) {
    cached_mode_ = mode;
    cached_preact_ = bn1.forward(fc1.forward(x), mode);
    Mat h = activation_forward(Activation::Elu, cached_preact_);
    return fc2.forward(h);
}

Mat ResidualDecoder::backward(const Mat& upstream) {
    if (cached_mode_ == Mode::Train) {
        Mat d_h = fc2.backward(upstream);
        Mat d_pre = activation_backward(Activation::Elu, cached_preact_, d_h);
        return fc1.backward(bn1.backward(d_pre));
    }
    Mat d_h = fc2.backward_input(upstream);
    Mat d_pre = activation_backward(Activation::Elu, cached_preact_, d_h);
    return fc1.backward_input(bn1.backward_input_inference(d_pre));
}

void ResidualDecoder::zero_grad() {
    fc1.zero_grad();
    bn1.zero_grad();
    fc2.zero_grad();
}

std::vector<ParamRef> ResidualDecoder::params(const std::string& prefix) {
    std::vector<ParamRef> out;
    for (auto& p : fc1.params(prefix + ".fc1")) out.push_back(p);
    for (auto& p : bn1.params(prefix + ".bn1")) out.push_back(p);
    for (auto& p : fc2.params(prefix + ".fc2")) out.push_back(p);
    return out;
}

CategoryHead::CategoryHead(int feature_dim, int num_classes, Rng& init_rng)
    : fc(LinearLayer::kaiming(feature_dim, num_classes, init_rng)) {
    fc.weights *= 0.1;
}

Mat CategoryHead::predict(const Mat& x) const { return softmax(fc.apply(x)); }

Mat CategoryHead::forward(const Mat& x) { return fc.forward(x); }

Mat CategoryHead::backward(const Mat& upstream_logits) { return fc.backward(upstream_logits); }

Mat CategoryHead::backward_input(const Mat& upstream_logits) const {
    return fc.backward_input(upstream_logits);
}

void CategoryHead::zero_grad() { fc.zero_grad(); }

std::vector<ParamRef> CategoryHead::params(const std::string& prefix) {
    return fc.params(prefix + ".fc");
}

FattenModel FattenModel::init(const PoseBinning& binning, const ModelDims& dims, uint64_t seed) {
    if (binning.cells() != dims.pose_cells)
        throw ConfigError("model init: binning has " + std::to_string(binning.cells()) +
                          " cells but dims declare " + std::to_string(dims.pose_cells));
    FattenModel m;
    m.binning = binning;
    m.dims = dims;
    Rng pose_rng(stream_seed(seed, "init.pose"));
    m.pose = PosePredictor(dims.feature_dim, dims.pose_hidden, dims.pose_cells, pose_rng);
    Rng app_rng(stream_seed(seed, "init.appearance"));
    m.appearance = AppearanceEncoder(dims.feature_dim, dims.app_hidden, dims.app_out, app_rng);
    Rng dec_rng(stream_seed(seed, "init.decoder"));
    m.decoder = ResidualDecoder(dims.decoder_in(), dims.dec_hidden, dims.feature_dim, dec_rng);
    Rng cat_rng(stream_seed(seed, "init.category"));
    m.category = CategoryHead(dims.feature_dim, dims.num_classes, cat_rng);
    m.metadata = nlohmann::json::object();
    m.metadata["init_seed"] = seed;
    m.validate_dims();
    return m;
}

void FattenModel::validate_dims() const {
    if (pose.in_dim() != dims.feature_dim || pose.out_dim() != dims.pose_cells)
        throw ConfigError("model: pose predictor dimensions inconsistent with dims record");
    if (appearance.in_dim() != dims.feature_dim || appearance.out_dim() != dims.app_out)
        throw ConfigError("model: appearance encoder dimensions inconsistent with dims record");
    if (decoder.in_dim() != dims.decoder_in() || decoder.out_dim() != dims.feature_dim)
        throw ConfigError("model: decoder dimensions inconsistent with dims record");
    if (category.fc.in_dim() != dims.feature_dim || category.fc.out_dim() != dims.num_classes)
        throw ConfigError("model: category head dimensions inconsistent with dims record");
    if (binning.cells() != dims.pose_cells)
        throw ConfigError("model: binning cell count inconsistent with dims record");
}

Mat FattenModel::predict_pose(const Mat& x) const { return pose.predict(x); }

Mat FattenModel::pose_embedding(const Mat& x) const { return pose.logits(x); }

Mat FattenModel::predict_category(const Mat& x) const { return category.predict(x); }

std::vector<int> FattenModel::predict_pose_bins(const Mat& x) const {
    return argmax_rows(pose.logits(x));
}

std::vector<int> FattenModel::predict_classes(const Mat& x) const {
    return argmax_rows(category.logits(x));
}

Mat FattenModel::transfer_cells(const Mat& x, const std::vector<int>& target_cells) const {
    require_cols(x, dims.feature_dim, "transfer input");
    if (static_cast<Eigen::Index>(target_cells.size()) != x.rows())
        throw DimensionError("transfer: " + std::to_string(target_cells.size()) +
                             " targets for " + std::to_string(x.rows()) + " rows");
    Mat input(x.rows(), dims.decoder_in());
    input.leftCols(dims.app_out) = appearance.apply(x);
    input.middleCols(dims.app_out, dims.pose_cells) = pose.predict(x);
    Mat targets = Mat::Zero(x.rows(), dims.pose_cells);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        int cell = target_cells[static_cast<size_t>(r)];
        if (cell < 0 || cell >= dims.pose_cells)
            throw InputError("transfer: target cell " + std::to_string(cell) +
                             " out of range [0," + std::to_string(dims.pose_cells) + ")");
        targets(r, cell) = 1.0;
    }
    input.rightCols(dims.pose_cells) = targets;
    return x + decoder.apply(input);
}

Mat FattenModel::transfer_to_cell(const Mat& x, int target_cell) const {
    return transfer_cells(x, std::vector<int>(static_cast<size_t>(x.rows()), target_cell));
}

Mat FattenModel::transfer(const Mat& x, double target_pose_value) const {
    return transfer_to_cell(x, binning.encode(target_pose_value));
}

std::vector<ParamRef> FattenModel::encoder_decoder_params() {
    std::vector<ParamRef> out;
    for (auto& p : appearance.params("appearance")) out.push_back(p);
    for (auto& p : decoder.params("decoder")) out.push_back(p);
    return out;
}

std::vector<ParamRef> FattenModel::head_params() {
    std::vector<ParamRef> out;
    for (auto& p : pose.params("pose")) out.push_back(p);
    for (auto& p : category.params("category")) out.push_back(p);
    return out;
}

std::vector<std::pair<std::string, Mat*>> FattenModel::state_tensors() {
    return {
        {"pose.fc1.weights", &pose.fc1.weights},
        {"pose.fc1.bias", &pose.fc1.bias},
        {"pose.bn1.gamma", &pose.bn1.gamma},
        {"pose.bn1.beta", &pose.bn1.beta},
        {"pose.bn1.running_mean", &pose.bn1.running_mean},
        {"pose.bn1.running_var", &pose.bn1.running_var},
        {"pose.fc2.weights", &pose.fc2.weights},
        {"pose.fc2.bias", &pose.fc2.bias},
        {"appearance.fc1.weights", &appearance.fc1.weights},
        {"appearance.fc1.bias", &appearance.fc1.bias},
        {"appearance.bn1.gamma", &appearance.bn1.gamma},
        {"appearance.bn1.beta", &appearance.bn1.beta},
        {"appearance.bn1.running_mean", &appearance.bn1.running_mean},
        {"appearance.bn1.running_var", &appearance.bn1.running_var},
        {"appearance.fc2.weights", &appearance.fc2.weights},
        {"appearance.fc2.bias", &appearance.fc2.bias},
        {"appearance.bn2.gamma", &appearance.bn2.gamma},
        {"appearance.bn2.beta", &appearance.bn2.beta},
        {"appearance.bn2.running_mean", &appearance.bn2.running_mean},
        {"appearance.bn2.running_var", &appearance.bn2.running_var},
        {"decoder.fc1.weights", &decoder.fc1.weights},
        {"decoder.fc1.bias", &decoder.fc1.bias},
        {"decoder.bn1.gamma", &decoder.bn1.gamma},
        {"decoder.bn1.beta", &decoder.bn1.beta},
        {"decoder.bn1.running_mean", &decoder.bn1.running_mean},
        {"decoder.bn1.running_var", &decoder.bn1.running_var},
        {"decoder.fc2.weights", &decoder.fc2.weights},
        {"decoder.fc2.bias", &decoder.fc2.bias},
        {"category.fc.weights", &category.fc.weights},
        {"category.fc.bias", &category.fc.bias},
    };
}

std::vector<std::pair<std::string, const Mat*>> FattenModel::state_tensors() const {
    auto mutable_view = const_cast<FattenModel*>(this)->state_tensors();
    std::vector<std::pair<std::string, const Mat*>> out;
    out.reserve(mutable_view.size());
    for (auto& [name, mat] : mutable_view)
        out.emplace_back(name, mat);
    return out;
}

std::string head_state_bytes(const FattenModel& model) {
    std::string bytes;
    for (const auto& [name, mat] : model.state_tensors()) {
        if (name.rfind("pose.", 0) != 0 && name.rfind("category.", 0) != 0) continue;
        bytes.append(reinterpret_cast<const char*>(mat->data()),
                     static_cast<size_t>(mat->size()) * sizeof(double));
    }
    return bytes;
}

} // namespace fatten
