#include "fatten/dataset_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "fatten/errors.hpp"

namespace fatten {

namespace {

// Little-endian primitives with byte-offset tracking for error reporting.
class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void bytes(const void* data, size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        offset_ += n;
    }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u16(uint16_t v) { put_int(v); }
    void u32(uint32_t v) { put_int(v); }
    void u64(uint64_t v) { put_int(v); }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f64_array(const double* data, size_t n) {
        for (size_t i = 0; i < n; ++i) f64(data[i]);
    }

private:
    template <typename T>
    void put_int(T v) {
        unsigned char buf[sizeof(T)];
        for (size_t i = 0; i < sizeof(T); ++i)
            buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
        bytes(buf, sizeof(T));
    }

    std::ostream& out_;
    size_t offset_ = 0;
};

class Reader {
public:
    Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

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
    uint16_t u16(const char* what) { return get_int<uint16_t>(what); }
    uint32_t u32(const char* what) { return get_int<uint32_t>(what); }
    uint64_t u64(const char* what) { return get_int<uint64_t>(what); }
    double f64(const char* what) {
        uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void f64_array(double* data, size_t n, const char* what) {
        for (size_t i = 0; i < n; ++i) data[i] = f64(what);
    }
    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

    [[noreturn]] void fail(const std::string& message, size_t at_offset) const {
        throw FormatError(name_ + ": " + message + " at byte offset " + std::to_string(at_offset));
    }

private:
    template <typename T>
    T get_int(const char* what) {
        unsigned char buf[sizeof(T)];
        bytes(buf, sizeof(T), what);
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }

    std::istream& in_;
    std::string name_;
    size_t offset_ = 0;
};

constexpr uint16_t kSpecVersion = 1;

void write_spec(Writer& w, const ManifoldSpec& spec) {
    const auto& p = spec.params;
    w.u16(kSpecVersion);
    w.u32(static_cast<uint32_t>(p.num_classes));
    w.u32(static_cast<uint32_t>(p.feature_dim));
    w.u32(static_cast<uint32_t>(p.appearance_dim));
    w.u32(static_cast<uint32_t>(p.fourier_harmonics));
    w.f64(p.binning.lo());
    w.f64(p.binning.hi());
    w.u16(static_cast<uint16_t>(p.binning.bins()));
    w.u8(p.binning.wrap() ? 1 : 0);
    w.u8(p.binning.open_ended() ? 1 : 0);
    w.f64(p.within_class_spread);
    w.f64(p.observation_noise);
    w.f64(p.pose_gain);
    w.u64(spec.seed);
    w.f64_array(spec.class_centroids.data(), static_cast<size_t>(spec.class_centroids.size()));
    w.f64_array(spec.embedding.data(), static_cast<size_t>(spec.embedding.size()));
}

ManifoldSpec read_spec(Reader& r) {
    const size_t start = r.offset();
    uint16_t version = r.u16("spec version");
    if (version != kSpecVersion)
        r.fail("unsupported manifold spec version " + std::to_string(version), start);

    ManifoldSpec spec;
    auto& p = spec.params;
    p.num_classes = static_cast<int>(r.u32("spec num_classes"));
    p.feature_dim = static_cast<int>(r.u32("spec feature_dim"));
    p.appearance_dim = static_cast<int>(r.u32("spec appearance_dim"));
    p.fourier_harmonics = static_cast<int>(r.u32("spec fourier_harmonics"));
    double lo = r.f64("spec binning lo");
    double hi = r.f64("spec binning hi");
    int bins = r.u16("spec binning cells");
    bool wrap = r.u8("spec binning wrap") != 0;
    bool open_ended = r.u8("spec binning open flag") != 0;
    p.binning = PoseBinning(lo, hi, bins, wrap, open_ended);
    p.within_class_spread = r.f64("spec sigma_a");
    p.observation_noise = r.f64("spec sigma_x");
    p.pose_gain = r.f64("spec pose_gain");
    spec.seed = r.u64("spec seed");

    spec.class_centroids = Mat(p.num_classes, p.appearance_dim);
    r.f64_array(spec.class_centroids.data(), static_cast<size_t>(spec.class_centroids.size()),
                "spec centroids");
    spec.embedding = Mat(p.feature_dim, spec.input_dim());
    r.f64_array(spec.embedding.data(), static_cast<size_t>(spec.embedding.size()),
                "spec embedding");
    return spec;
}

} // namespace

void write_manifold_spec(std::ostream& out, const ManifoldSpec& spec) {
    Writer w(out);
    write_spec(w, spec);
}

void write_dataset(const Dataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");

    Writer w(out);
    w.bytes("FATN", 4);
    w.u16(kDatasetVersion);
    w.u32(static_cast<uint32_t>(dataset.feature_dim()));
    w.u16(static_cast<uint16_t>(dataset.binning.cells()));
    w.u16(static_cast<uint16_t>(dataset.num_classes));
    w.u64(static_cast<uint64_t>(dataset.size()));
    w.u16(dataset.spec ? 1 : 0);

    const auto n = dataset.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        const size_t s = static_cast<size_t>(i);
        w.u32(static_cast<uint32_t>(dataset.class_labels[s]));
        w.u64(dataset.object_ids[s]);
        w.f64(dataset.pose_values[s]);
        w.u16(static_cast<uint16_t>(dataset.pose_bins[s]));
        for (Eigen::Index j = 0; j < dataset.features.cols(); ++j)
            w.f64(dataset.features(i, j));
    }
    if (dataset.spec)
        write_spec(w, *dataset.spec);
    if (!out)
        throw IoError("write failure on '" + path + "'");
}

Dataset read_dataset(const std::string& path, std::optional<PoseBinning> fallback_binning) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path + "' for reading");
    Reader r(in, path);

    char magic[5] = {};
    r.bytes(magic, 4, "magic");
    if (std::string_view(magic, 4) != "FATN")
        r.fail("bad magic '" + std::string(magic, 4) + "' (expected FATN)", 0);
    const size_t version_at = r.offset();
    uint16_t version = r.u16("version");
    if (version != kDatasetVersion)
        r.fail("unsupported dataset version " + std::to_string(version), version_at);

    const uint32_t feature_dim = r.u32("feature_dim");
    const uint16_t pose_cells = r.u16("num_pose_bins");
    const uint16_t num_classes = r.u16("num_classes");
    const uint64_t record_count = r.u64("record_count");
    const uint16_t flags = r.u16("flags");
    if (feature_dim == 0 || pose_cells == 0)
        r.fail("header declares zero feature or pose-bin dimension", 6);

    Dataset ds;
    ds.num_classes = num_classes;
    ds.features = Mat(static_cast<Eigen::Index>(record_count), feature_dim);
    ds.pose_values.resize(record_count);
    ds.pose_bins.resize(record_count);
    ds.class_labels.resize(record_count);
    ds.object_ids.resize(record_count);

    for (uint64_t i = 0; i < record_count; ++i) {
        const size_t record_at = r.offset();
        uint32_t cls = r.u32("record class_label");
        uint64_t object_id = r.u64("record object_id");
        double pose = r.f64("record pose_value");
        uint16_t bin = r.u16("record pose_bin");
        if (cls >= num_classes)
            r.fail("record " + std::to_string(i) + " class " + std::to_string(cls) +
                       " disagrees with header num_classes " + std::to_string(num_classes),
                   record_at);
        if (bin >= pose_cells)
            r.fail("record " + std::to_string(i) + " pose_bin " + std::to_string(bin) +
                       " disagrees with header num_pose_bins " + std::to_string(pose_cells),
                   record_at);
        ds.class_labels[i] = static_cast<int>(cls);
        ds.object_ids[i] = object_id;
        ds.pose_values[i] = pose;
        ds.pose_bins[i] = bin;
        r.f64_array(ds.features.row(static_cast<Eigen::Index>(i)).data(), feature_dim,
                    "record features");
    }

    if (flags & 1) {
        const size_t spec_at = r.offset();
        ManifoldSpec spec = read_spec(r);
        if (spec.params.feature_dim != static_cast<int>(feature_dim) ||
            spec.params.binning.cells() != static_cast<int>(pose_cells) ||
            spec.params.num_classes != static_cast<int>(num_classes))
            r.fail("manifold spec appendix disagrees with dataset header dimensions", spec_at);
        ds.binning = spec.params.binning;
        ds.spec = std::make_shared<ManifoldSpec>(std::move(spec));
    } else {
        PoseBinning binning = fallback_binning.value_or(PoseBinning(0.0, 360.0, pose_cells));
        if (binning.cells() != static_cast<int>(pose_cells))
            throw ConfigError(path + ": supplied binning has " + std::to_string(binning.cells()) +
                              " cells but the file declares " + std::to_string(pose_cells));
        ds.binning = binning;
    }

    if (!r.at_eof())
        r.fail("trailing bytes after declared content", r.offset());
    ds.validate();
    return ds;
}

Dataset import_csv(const std::string& path, const PoseBinning& binning) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path + "' for reading");

    std::string line;
    if (!std::getline(in, line))
        throw FormatError(path + ":1: empty file, expected header row");

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ','))
            header.push_back(field);
    }
    if (header.size() < 4 || header[0] != "class" || header[1] != "object" || header[2] != "pose")
        throw FormatError(path + ":1: header must start with class,object,pose followed by "
                          "feature columns");
    const size_t feature_dim = header.size() - 3;

    std::vector<double> values;
    std::vector<int> classes;
    std::vector<uint64_t> objects;
    std::vector<double> poses;
    int max_class = -1;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ','))
            fields.push_back(field);
        if (fields.size() != header.size())
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        try {
            classes.push_back(std::stoi(fields[0]));
            objects.push_back(std::stoull(fields[1]));
            poses.push_back(std::stod(fields[2]));
            for (size_t j = 3; j < fields.size(); ++j)
                values.push_back(std::stod(fields[j]));
        } catch (const std::exception&) {
            throw FormatError(path + ":" + std::to_string(line_no) + ": unparseable numeric field");
        }
        if (classes.back() < 0)
            throw FormatError(path + ":" + std::to_string(line_no) + ": negative class label");
        max_class = std::max(max_class, classes.back());
    }

    const Eigen::Index n = static_cast<Eigen::Index>(classes.size());
    Dataset ds;
    ds.binning = binning;
    ds.num_classes = max_class + 1;
    ds.features = Mat(n, static_cast<Eigen::Index>(feature_dim));
    for (Eigen::Index i = 0; i < n; ++i)
        for (size_t j = 0; j < feature_dim; ++j)
            ds.features(i, static_cast<Eigen::Index>(j)) =
                values[static_cast<size_t>(i) * feature_dim + j];
    ds.class_labels = std::move(classes);
    ds.object_ids = std::move(objects);
    ds.pose_values = std::move(poses);
    ds.pose_bins.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        ds.pose_bins[static_cast<size_t>(i)] = binning.encode(ds.pose_values[static_cast<size_t>(i)]);
    ds.validate();
    return ds;
}

} // namespace fatten
