#pragma once

#include <json.hpp>

#include "fatten/binning.hpp"
#include "fatten/nn.hpp"

namespace fatten {

// Pose predictor P: FC -> BN -> ReLU -> FC -> softmax. The pre-softmax
// activations of the second FC layer are the pose embedding gamma(x).
class PosePredictor {
public:
    PosePredictor() = default;
    PosePredictor(int feature_dim, int hidden, int cells, Rng& init_rng);

    LinearLayer fc1;
    BatchNormLayer bn1;
    LinearLayer fc2;

    int in_dim() const { return fc1.in_dim(); }
    int out_dim() const { return fc2.out_dim(); }

    // Pure inference paths.
    Mat logits(const Mat& x) const;   // gamma(x), B x cells
    Mat predict(const Mat& x) const;  // softmax(gamma(x))

    // Caching paths for training and for frozen-loss backprop.
    Mat forward(const Mat& x, Mode mode);  // returns logits
    // Input gradient given d(loss)/d(logits). In Train mode parameter
    // gradients are accumulated; in Infer mode (frozen head) they are not.
    Mat backward(const Mat& upstream_logits);

    void zero_grad();
    std::vector<ParamRef> params(const std::string& prefix);

private:
    Mode cached_mode_ = Mode::Train;
    Mat cached_preact_;  // BN output, ReLU input
};

// Appearance encoder A: two blocks of FC -> BN -> ELU.
class AppearanceEncoder {
public:
    AppearanceEncoder() = default;
    AppearanceEncoder(int feature_dim, int hidden, int out, Rng& init_rng);

    LinearLayer fc1;
    BatchNormLayer bn1;
    LinearLayer fc2;
    BatchNormLayer bn2;

    int in_dim() const { return fc1.in_dim(); }
    int out_dim() const { return fc2.out_dim(); }

    Mat apply(const Mat& x) const;
    Mat forward(const Mat& x, Mode mode);
    Mat backward(const Mat& upstream);

    void zero_grad();
    std::vector<ParamRef> params(const std::string& prefix);

private:
    Mode cached_mode_ = Mode::Train;
    Mat cached_preact1_;
    Mat cached_preact2_;
};

// Residual decoder G: FC -> BN -> ELU, then a plain FC back to feature
// dimension. The final layer starts at zero so an untrained model is the
// identity transfer.
class ResidualDecoder {
public:
    ResidualDecoder() = default;
    ResidualDecoder(int in_dim, int hidden, int feature_dim, Rng& init_rng);

    LinearLayer fc1;
    BatchNormLayer bn1;
    LinearLayer fc2;

    int in_dim() const { return fc1.in_dim(); }
    int out_dim() const { return fc2.out_dim(); }

    Mat apply(const Mat& x) const;
    Mat forward(const Mat& x, Mode mode);
    Mat backward(const Mat& upstream);

    void zero_grad();
    std::vector<ParamRef> params(const std::string& prefix);

private:
    Mode cached_mode_ = Mode::Train;
    Mat cached_preact_;
};

// Category head: a single FC layer with softmax over classes.
class CategoryHead {
public:
    CategoryHead() = default;
    CategoryHead(int feature_dim, int num_classes, Rng& init_rng);

    LinearLayer fc;

    Mat logits(const Mat& x) const { return fc.apply(x); }
    Mat predict(const Mat& x) const;

    Mat forward(const Mat& x);
    Mat backward(const Mat& upstream_logits);
    Mat backward_input(const Mat& upstream_logits) const;

    void zero_grad();
    std::vector<ParamRef> params(const std::string& prefix);
};

struct ModelDims {
    int feature_dim = 256;  // D
    int pose_cells = 12;    // one-hot dimension of the binning
    int num_classes = 10;   // K
    int pose_hidden = 128;  // H_p
    int app_hidden = 256;
    int app_out = 64;       // appearance code dimension
    int dec_hidden = 256;

    int decoder_in() const { return app_out + 2 * pose_cells; }
    bool operator==(const ModelDims&) const = default;
};

// The full architecture: encoder (appearance + pose), residual decoder,
// category head, and the pose binning codec they share.
class FattenModel {
public:
    PoseBinning binning;
    ModelDims dims;
    PosePredictor pose;
    AppearanceEncoder appearance;
    ResidualDecoder decoder;
    CategoryHead category;
    nlohmann::json metadata;

    static FattenModel init(const PoseBinning& binning, const ModelDims& dims, uint64_t seed);

    // Inference API; const and cache-free, so a loaded model can be shared.
    Mat predict_pose(const Mat& x) const;      // B x cells, rows on the simplex
    Mat pose_embedding(const Mat& x) const;    // gamma(x), B x cells
    Mat predict_category(const Mat& x) const;  // B x classes
    std::vector<int> predict_pose_bins(const Mat& x) const;
    std::vector<int> predict_classes(const Mat& x) const;

    // x_hat = x + G([A(x) (+) P(x) (+) one_hot(target)]).
    Mat transfer(const Mat& x, double target_pose_value) const;
    Mat transfer_to_cell(const Mat& x, int target_cell) const;
    // Per-row target cells.
    Mat transfer_cells(const Mat& x, const std::vector<int>& target_cells) const;

    // Trainable encoder/decoder parameters (the heads stay frozen in main
    // training and are exposed separately).
    std::vector<ParamRef> encoder_decoder_params();
    std::vector<ParamRef> head_params();

    // Every tensor that defines the model, in checkpoint order (includes
    // batch-norm running statistics).
    std::vector<std::pair<std::string, Mat*>> state_tensors();
    std::vector<std::pair<std::string, const Mat*>> state_tensors() const;

    void validate_dims() const;
};

inline std::vector<int> argmax_rows(const Mat& m) {
    std::vector<int> out(static_cast<size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Eigen::Index best;
        m.row(r).maxCoeff(&best);
        out[static_cast<size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

// Serialized bytes of the pose predictor and category head tensors; used to
// verify the freeze contract around main training.
std::string head_state_bytes(const FattenModel& model);

} // namespace fatten
