#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fatten/config.hpp"
#include "fatten/errors.hpp"

using namespace fatten;

TEST_CASE("default config text parses back to the defaults") {
    ExperimentConfig parsed = parse_experiment_config(default_config_text(), "defaults");
    ExperimentConfig defaults;
    CHECK(parsed.manifold.num_classes == defaults.manifold.num_classes);
    CHECK(parsed.manifold.feature_dim == defaults.manifold.feature_dim);
    CHECK(parsed.manifold.binning == defaults.manifold.binning);
    CHECK(parsed.train.main_epochs == defaults.train.main_epochs);
    CHECK(parsed.eval.lambda == defaults.eval.lambda);
    CHECK(parsed.seed == defaults.seed);
}

TEST_CASE("values and comments parse; overrides land in the right fields") {
    std::string text =
        "# comment line\n"
        "seed = 42\n"
        "manifold.classes = 5   # trailing comment\n"
        "manifold.pose_bins = 8\n"
        "train.main_epochs = 3\n"
        "train.target_cells = 0, 2, 5\n"
        "eval.fewshot_targets = 15.0,45.0\n"
        "data.pose_sampling = uniform\n";
    ExperimentConfig cfg = parse_experiment_config(text, "inline");
    CHECK(cfg.seed == 42);
    CHECK(cfg.manifold.num_classes == 5);
    CHECK(cfg.manifold.binning.bins() == 8);
    CHECK(cfg.train.main_epochs == 3);
    CHECK(cfg.train.target_cells == std::vector<int>{0, 2, 5});
    CHECK(cfg.eval.fewshot_targets == std::vector<double>{15.0, 45.0});
    CHECK(cfg.data.sampling == PoseSampling::UniformWithinBins);
}

TEST_CASE("unknown keys and bad values report file:line positions") {
    try {
        parse_experiment_config("seed = 1\nbogus.key = 2\n", "conf");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("conf:2") != std::string::npos);
        CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
    }

    try {
        parse_experiment_config("manifold.classes = ten\n", "conf");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("conf:1") != std::string::npos);
    }

    CHECK_THROWS_AS(parse_experiment_config("seed\n", "conf"), ConfigError);
    CHECK_THROWS_AS(parse_experiment_config("manifold.pose_lo = 400\nmanifold.pose_hi = 10\n",
                                            "conf"),
                    ConfigError);
}

TEST_CASE("derived model dims follow the manifold geometry") {
    ExperimentConfig cfg = parse_experiment_config(
        "manifold.classes = 7\nmanifold.feature_dim = 64\nmanifold.pose_bins = 9\n", "conf");
    ModelDims dims = cfg.derived_model_dims();
    CHECK(dims.num_classes == 7);
    CHECK(dims.feature_dim == 64);
    CHECK(dims.pose_cells == 9);
    CHECK(dims.pose_hidden == cfg.model.pose_hidden);
}

TEST_CASE("missing config files raise io errors") {
    CHECK_THROWS_AS(load_experiment_config("/nonexistent/path/config.ini"), IoError);
}
