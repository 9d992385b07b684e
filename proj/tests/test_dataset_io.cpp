#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fatten/dataset_io.hpp"
#include "fatten/errors.hpp"

using namespace fatten;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fatten_io_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

Dataset make_plain_dataset(int records, int dim) {
    Dataset ds;
    ds.binning = PoseBinning(0.0, 360.0, 12);
    ds.num_classes = 3;
    ds.features = Mat(records, dim);
    Rng rng(9);
    for (Eigen::Index i = 0; i < records; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) ds.features(i, j) = rng.normal();
        double pose = rng.uniform(0.0, 360.0);
        ds.pose_values.push_back(pose);
        ds.pose_bins.push_back(ds.binning.encode(pose));
        ds.class_labels.push_back(static_cast<int>(rng.below(3)));
        ds.object_ids.push_back(static_cast<uint64_t>(i));
    }
    ds.split = "train";
    return ds;
}

Dataset make_spec_dataset() {
    ManifoldParams p;
    p.num_classes = 3;
    p.feature_dim = 24;
    p.appearance_dim = 8;
    p.binning = PoseBinning(0.0, 360.0, 6);
    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(p, 77));
    SampleConfig cfg;
    cfg.train_objects_per_class = 2;
    cfg.test_objects_per_class = 1;
    cfg.poses_per_object = 6;
    auto [train, _] = sample_dataset(spec, cfg, 5);
    return train;
}

} // namespace

TEST_CASE("write then read round-trips bitwise") {
    TempDir dir;
    Dataset ds = make_spec_dataset();
    write_dataset(ds, dir.file("a.fatn"));
    Dataset back = read_dataset(dir.file("a.fatn"));

    CHECK(back.features == ds.features);
    CHECK(back.pose_values == ds.pose_values);
    CHECK(back.pose_bins == ds.pose_bins);
    CHECK(back.class_labels == ds.class_labels);
    CHECK(back.object_ids == ds.object_ids);
    CHECK(back.num_classes == ds.num_classes);
    REQUIRE(back.spec != nullptr);
    CHECK(back.spec->same_geometry(*ds.spec));
    CHECK(back.binning == ds.binning);
}

TEST_CASE("file size is exactly header + records (no spec appendix)") {
    TempDir dir;
    Dataset ds = make_plain_dataset(100, 7);
    write_dataset(ds, dir.file("plain.fatn"));
    const size_t expected = kDatasetHeaderSize + 100 * dataset_record_size(7);
    CHECK(fs::file_size(dir.file("plain.fatn")) == expected);

    Dataset back = read_dataset(dir.file("plain.fatn"));
    CHECK(back.spec == nullptr);
    CHECK(back.features == ds.features);
}

TEST_CASE("wrong magic is rejected") {
    TempDir dir;
    std::ofstream out(dir.file("bad.fatn"), std::ios::binary);
    out << "NOPE" << std::string(40, '\0');
    out.close();
    CHECK_THROWS_AS(read_dataset(dir.file("bad.fatn")), FormatError);
}

TEST_CASE("truncated files report the byte offset") {
    TempDir dir;
    Dataset ds = make_plain_dataset(10, 4);
    write_dataset(ds, dir.file("full.fatn"));

    // Cut the file mid-record.
    std::ifstream in(dir.file("full.fatn"), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(dir.file("cut.fatn"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 13));
    out.close();

    try {
        read_dataset(dir.file("cut.fatn"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
}

TEST_CASE("trailing bytes are rejected") {
    TempDir dir;
    Dataset ds = make_plain_dataset(3, 4);
    write_dataset(ds, dir.file("x.fatn"));
    std::ofstream out(dir.file("x.fatn"), std::ios::binary | std::ios::app);
    out << "junk";
    out.close();
    CHECK_THROWS_AS(read_dataset(dir.file("x.fatn")), FormatError);
}

TEST_CASE("dimension disagreement between records and header is rejected") {
    TempDir dir;
    Dataset ds = make_plain_dataset(3, 4);
    ds.pose_bins[1] = 25;  // out of the declared 12 cells
    CHECK_THROWS_AS(write_dataset(ds, dir.file("y.fatn")), InputError);
}

TEST_CASE("fallback binning must agree with the header cell count") {
    TempDir dir;
    Dataset ds = make_plain_dataset(3, 4);
    write_dataset(ds, dir.file("z.fatn"));
    CHECK_THROWS_AS(read_dataset(dir.file("z.fatn"), PoseBinning(0.0, 360.0, 6)), ConfigError);
    Dataset ok = read_dataset(dir.file("z.fatn"), PoseBinning(-180.0, 180.0, 12));
    CHECK(ok.binning.lo() == -180.0);
}

TEST_CASE("csv import parses the documented layout") {
    TempDir dir;
    {
        std::ofstream out(dir.file("feats.csv"));
        out << "class,object,pose,f0,f1,f2\n";
        for (int i = 0; i < 10; ++i)
            out << (i % 2) << "," << (100 + i) << "," << (i * 36.0) << "," << i << ","
                << i * 0.5 << "," << -i << "\n";
    }
    Dataset ds = import_csv(dir.file("feats.csv"), PoseBinning(0.0, 360.0, 12));
    CHECK(ds.size() == 10);
    CHECK(ds.feature_dim() == 3);
    CHECK(ds.num_classes == 2);
    CHECK(ds.class_labels[3] == 1);
    CHECK(ds.object_ids[4] == 104);
    CHECK(ds.pose_values[5] == doctest::Approx(180.0));
    CHECK(ds.pose_bins[5] == 6);
    CHECK(ds.features(2, 1) == doctest::Approx(1.0));

    // Canonical binary round-trip of an imported file.
    TempDir dir2;
    write_dataset(ds, dir2.file("imported.fatn"));
    Dataset back = read_dataset(dir2.file("imported.fatn"), ds.binning);
    CHECK(back.features == ds.features);
    CHECK(back.pose_bins == ds.pose_bins);
}

TEST_CASE("csv import rejects malformed rows with line numbers") {
    TempDir dir;
    {
        std::ofstream out(dir.file("bad.csv"));
        out << "class,object,pose,f0\n";
        out << "0,1,10.0,0.5\n";
        out << "0,2,oops,0.5\n";
    }
    try {
        import_csv(dir.file("bad.csv"), PoseBinning(0.0, 360.0, 12));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }

    {
        std::ofstream out(dir.file("badheader.csv"));
        out << "klass,object,pose,f0\n";
    }
    CHECK_THROWS_AS(import_csv(dir.file("badheader.csv"), PoseBinning(0.0, 360.0, 12)),
                    FormatError);
}

TEST_CASE("written datasets are byte-identical across writes") {
    TempDir dir;
    Dataset ds = make_spec_dataset();
    write_dataset(ds, dir.file("one.fatn"));
    write_dataset(ds, dir.file("two.fatn"));

    std::ifstream a(dir.file("one.fatn"), std::ios::binary);
    std::ifstream b(dir.file("two.fatn"), std::ios::binary);
    std::string bytes_a((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string bytes_b((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
}
