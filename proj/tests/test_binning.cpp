#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <limits>

#include "fatten/binning.hpp"
#include "fatten/errors.hpp"
#include "fatten/rng.hpp"

using namespace fatten;

TEST_CASE("12 bins over [0,360): interval labels match the 30-degree layout") {
    PoseBinning b(0.0, 360.0, 12);
    CHECK(b.encode(15.0) == 0);
    Mat t = b.one_hot(15.0);
    CHECK(t(0, 0) == 1.0);
    CHECK(t.sum() == 1.0);

    CHECK(b.encode(0.0) == 0);
    CHECK(b.encode(359.9) == 11);
    CHECK(b.encode(360.0) == 0);  // wraps
    CHECK(b.encode(-30.0) == 11);
    CHECK(b.encode(725.0) == 0);
}

TEST_CASE("centroid encoding is the identity permutation") {
    for (int n : {2, 5, 12, 13}) {
        PoseBinning b(0.0, 360.0, n);
        for (int i = 0; i < n; ++i)
            CHECK(b.encode(b.centroid(i)) == i);
    }
}

TEST_CASE("decode(encode(v)) returns the cell containing v") {
    PoseBinning b(0.0, 360.0, 12);
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        double v = rng.uniform(-720.0, 720.0);
        int cell = b.encode(v);
        double wrapped = b.wrap_value(v);
        CHECK(wrapped >= cell * b.cell_width());
        CHECK(wrapped < (cell + 1) * b.cell_width());
        CHECK(std::abs(b.centroid(cell) - wrapped) <= b.cell_width() / 2 + 1e-9);
    }
}

TEST_CASE("one-hot vectors have exactly one 1") {
    PoseBinning b(0.0, 360.0, 12);
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        Mat t = b.one_hot(rng.uniform(0.0, 360.0));
        CHECK(t.sum() == 1.0);
        CHECK(t.maxCoeff() == 1.0);
        CHECK(t.minCoeff() == 0.0);
    }
}

TEST_CASE("non-finite pose values are rejected") {
    PoseBinning b(0.0, 360.0, 12);
    CHECK_THROWS_AS(b.encode(std::numeric_limits<double>::quiet_NaN()), InputError);
    CHECK_THROWS_AS(b.encode(std::numeric_limits<double>::infinity()), InputError);
}

TEST_CASE("depth-style binning with an open-ended cell") {
    // [0, 5) in 0.5 m steps plus [5, +inf).
    PoseBinning depth(0.0, 5.0, 10, /*wrap=*/false, /*open_ended=*/true);
    CHECK(depth.cells() == 11);
    CHECK(depth.encode(0.2) == 0);
    CHECK(depth.encode(4.9) == 9);
    CHECK(depth.encode(5.0) == 10);
    CHECK(depth.encode(7.3) == 10);
    CHECK(depth.centroid(10) == doctest::Approx(5.25));
    CHECK_THROWS_AS(depth.encode(-0.1), InputError);
}

TEST_CASE("out-of-range non-angular values without an open cell are range errors") {
    PoseBinning b(0.0, 180.0, 12, /*wrap=*/false);
    CHECK_THROWS_AS(b.encode(180.0), InputError);
    CHECK_THROWS_AS(b.encode(-1.0), InputError);
    CHECK(b.encode(179.9) == 11);
}

TEST_CASE("wrapping ranges cannot carry an open-ended cell") {
    CHECK_THROWS_AS(PoseBinning(0.0, 360.0, 12, true, true), ConfigError);
    CHECK_THROWS_AS(PoseBinning(10.0, 10.0, 4), ConfigError);
    CHECK_THROWS_AS(PoseBinning(0.0, 360.0, 0), ConfigError);
}

TEST_CASE("centroid error is symmetric and folds to half the range") {
    PoseBinning b(0.0, 360.0, 12);
    for (int i = 0; i < 12; ++i)
        for (int j = 0; j < 12; ++j) {
            CHECK(b.centroid_error(i, j) == b.centroid_error(j, i));
            CHECK(b.centroid_error(i, j) <= 180.0);
        }
    CHECK(b.centroid_error(0, 6) == doctest::Approx(180.0));
    CHECK(b.centroid_error(0, 11) == doctest::Approx(30.0));  // wraps around
    CHECK(b.centroid_error(3, 3) == 0.0);
}
