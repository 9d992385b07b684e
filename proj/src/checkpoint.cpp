#include "fatten/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fatten/errors.hpp"

namespace fatten {

namespace {

void put_u16(std::ostream& out, uint16_t v) {
    unsigned char buf[2] = {static_cast<unsigned char>(v & 0xff),
                            static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(buf), 2);
}

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

void put_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

class CheckpointReader {
public:
    CheckpointReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

    size_t offset() const { return offset_; }

    void bytes(void* data, size_t n, const char* what) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n)
            throw FormatError(name_ + ": truncated while reading " + what + " at byte offset " +
                              std::to_string(offset_));
        offset_ += n;
    }
    uint8_t u8(const char* what) {
        uint8_t v;
        bytes(&v, 1, what);
        return v;
    }
    uint16_t u16(const char* what) {
        unsigned char buf[2];
        bytes(buf, 2, what);
        return static_cast<uint16_t>(buf[0] | (buf[1] << 8));
    }
    uint32_t u32(const char* what) {
        unsigned char buf[4];
        bytes(buf, 4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[i]) << (8 * i);
        return v;
    }
    uint64_t u64(const char* what) {
        unsigned char buf[8];
        bytes(buf, 8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
        return v;
    }
    double f64(const char* what) {
        uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

    [[noreturn]] void fail(const std::string& message, size_t at_offset) const {
        throw FormatError(name_ + ": " + message + " at byte offset " + std::to_string(at_offset));
    }

private:
    std::istream& in_;
    std::string name_;
    size_t offset_ = 0;
};

size_t tensor_bytes(const ModelDims& d) {
    auto linear = [](int in, int out) { return static_cast<size_t>(out) * in + out; };
    auto bn = [](int f) { return static_cast<size_t>(4) * f; };
    size_t doubles = linear(d.feature_dim, d.pose_hidden) + bn(d.pose_hidden) +
                     linear(d.pose_hidden, d.pose_cells) +
                     linear(d.feature_dim, d.app_hidden) + bn(d.app_hidden) +
                     linear(d.app_hidden, d.app_out) + bn(d.app_out) +
                     linear(d.decoder_in(), d.dec_hidden) + bn(d.dec_hidden) +
                     linear(d.dec_hidden, d.feature_dim) +
                     linear(d.feature_dim, d.num_classes);
    return doubles * 8;
}

} // namespace

size_t checkpoint_size(const ModelDims& dims, size_t metadata_bytes) {
    constexpr size_t header = 4 + 2 + 4 + 2 + 2 + 4 + 4 + 4 + 4;  // magic, version, dims
    constexpr size_t binning = 8 + 8 + 2 + 1 + 1;
    return header + tensor_bytes(dims) + binning + 8 + metadata_bytes;
}

void save_checkpoint(const FattenModel& model, const std::string& path) {
    model.validate_dims();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");

    out.write("FATC", 4);
    put_u16(out, kCheckpointVersion);
    const auto& d = model.dims;
    put_u32(out, static_cast<uint32_t>(d.feature_dim));
    put_u16(out, static_cast<uint16_t>(d.pose_cells));
    put_u16(out, static_cast<uint16_t>(d.num_classes));
    put_u32(out, static_cast<uint32_t>(d.pose_hidden));
    put_u32(out, static_cast<uint32_t>(d.app_hidden));
    put_u32(out, static_cast<uint32_t>(d.app_out));
    put_u32(out, static_cast<uint32_t>(d.dec_hidden));

    for (const auto& [name, mat] : model.state_tensors()) {
        (void)name;
        for (Eigen::Index i = 0; i < mat->size(); ++i)
            put_f64(out, mat->data()[i]);
    }

    put_f64(out, model.binning.lo());
    put_f64(out, model.binning.hi());
    put_u16(out, static_cast<uint16_t>(model.binning.bins()));
    out.put(model.binning.wrap() ? 1 : 0);
    out.put(model.binning.open_ended() ? 1 : 0);

    const std::string metadata = model.metadata.is_null() ? "{}" : model.metadata.dump();
    put_u64(out, metadata.size());
    out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
    if (!out)
        throw IoError("write failure on '" + path + "'");
}

FattenModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path + "' for reading");
    CheckpointReader r(in, path);

    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::string_view(magic, 4) != "FATC")
        r.fail("bad magic (expected FATC)", 0);
    uint16_t version = r.u16("version");
    if (version != kCheckpointVersion)
        r.fail("unsupported checkpoint version " + std::to_string(version), 4);

    ModelDims d;
    d.feature_dim = static_cast<int>(r.u32("feature_dim"));
    d.pose_cells = r.u16("pose_cells");
    d.num_classes = r.u16("num_classes");
    d.pose_hidden = static_cast<int>(r.u32("pose_hidden"));
    d.app_hidden = static_cast<int>(r.u32("app_hidden"));
    d.app_out = static_cast<int>(r.u32("app_out"));
    d.dec_hidden = static_cast<int>(r.u32("dec_hidden"));
    if (d.feature_dim < 1 || d.pose_cells < 1 || d.num_classes < 1 || d.pose_hidden < 1 ||
        d.app_hidden < 1 || d.app_out < 1 || d.dec_hidden < 1)
        r.fail("dimension record contains non-positive sizes", 6);

    FattenModel model;
    model.dims = d;
    model.pose = PosePredictor();
    model.pose.fc1 = LinearLayer(d.feature_dim, d.pose_hidden);
    model.pose.bn1 = BatchNormLayer(d.pose_hidden);
    model.pose.fc2 = LinearLayer(d.pose_hidden, d.pose_cells);
    model.appearance.fc1 = LinearLayer(d.feature_dim, d.app_hidden);
    model.appearance.bn1 = BatchNormLayer(d.app_hidden);
    model.appearance.fc2 = LinearLayer(d.app_hidden, d.app_out);
    model.appearance.bn2 = BatchNormLayer(d.app_out);
    model.decoder.fc1 = LinearLayer(d.decoder_in(), d.dec_hidden);
    model.decoder.bn1 = BatchNormLayer(d.dec_hidden);
    model.decoder.fc2 = LinearLayer(d.dec_hidden, d.feature_dim);
    model.category.fc = LinearLayer(d.feature_dim, d.num_classes);

    for (auto& [name, mat] : model.state_tensors()) {
        for (Eigen::Index i = 0; i < mat->size(); ++i)
            mat->data()[i] = r.f64(name.c_str());
    }

    double lo = r.f64("binning lo");
    double hi = r.f64("binning hi");
    int bins = r.u16("binning bins");
    bool wrap = r.u8("binning wrap") != 0;
    bool open_ended = r.u8("binning open flag") != 0;
    const size_t binning_at = r.offset();
    model.binning = PoseBinning(lo, hi, bins, wrap, open_ended);
    if (model.binning.cells() != d.pose_cells)
        r.fail("binning cell count disagrees with dimension record", binning_at);

    uint64_t metadata_len = r.u64("metadata length");
    std::string metadata(metadata_len, '\0');
    if (metadata_len > 0)
        r.bytes(metadata.data(), metadata_len, "metadata");
    try {
        model.metadata = nlohmann::json::parse(metadata);
    } catch (const nlohmann::json::parse_error& e) {
        r.fail(std::string("metadata is not valid JSON: ") + e.what(),
               r.offset() - metadata_len);
    }

    if (!r.at_eof())
        r.fail("trailing bytes after metadata", r.offset());
    model.validate_dims();

    // Restore recorded batch-norm hyperparameters, if present.
    if (model.metadata.contains("batchnorm")) {
        const auto& bn = model.metadata["batchnorm"];
        double eps = bn.value("epsilon", 1e-5);
        double mom = bn.value("momentum", 0.1);
        for (BatchNormLayer* layer : {&model.pose.bn1, &model.appearance.bn1,
                                      &model.appearance.bn2, &model.decoder.bn1}) {
            layer->epsilon = eps;
            layer->momentum = mom;
        }
    }
    return model;
}

void validate_model_dataset(const FattenModel& model, const Dataset& dataset) {
    if (model.dims.feature_dim != dataset.feature_dim())
        throw ConfigError("model feature_dim " + std::to_string(model.dims.feature_dim) +
                          " does not match dataset feature_dim " +
                          std::to_string(dataset.feature_dim()));
    if (model.dims.pose_cells != dataset.binning.cells())
        throw ConfigError("model pose cells " + std::to_string(model.dims.pose_cells) +
                          " do not match dataset binning cells " +
                          std::to_string(dataset.binning.cells()));
    if (model.dims.num_classes < dataset.num_classes)
        throw ConfigError("model classes " + std::to_string(model.dims.num_classes) +
                          " cannot cover dataset classes " + std::to_string(dataset.num_classes));
}

} // namespace fatten
