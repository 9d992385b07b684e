#pragma once

#include <string>
#include <vector>

#include "fatten/manifold.hpp"
#include "fatten/model.hpp"
#include "fatten/training.hpp"

namespace fatten {

struct EvalConfig {
    double lambda = 1.0;  // weight of the pose distance inside d_c
    int shots = 1;
    int repetitions = 100;
    double svm_cost = 1.0;
    int svm_epochs = 200;
    double svm_learning_rate = 0.01;
    // Augmentation targets as pose values; empty means every bin centroid.
    std::vector<double> fewshot_targets;
    bool fewshot_oracle_bound = true;
};

// Everything one experiment needs, loadable from a `key = value` file.
// CLI flags override individual fields after loading.
struct ExperimentConfig {
    ManifoldParams manifold;
    SampleConfig data;
    ModelDims model;
    TrainConfig train;
    EvalConfig eval;
    uint64_t seed = 0;

    // Derives the model dims tied to the manifold (feature_dim, cells,
    // classes); hidden widths stay as configured.
    ModelDims derived_model_dims() const;
};

// Parses the documented key = value schema; '#' starts a comment. Unknown
// keys and unparseable values raise ConfigError with file:line positions.
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& name);

// The full schema with default values, suitable as a starter config file.
std::string default_config_text();

} // namespace fatten
