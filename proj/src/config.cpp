#include "fatten/config.hpp"

#include <fstream>
#include <sstream>

#include "fatten/errors.hpp"

namespace fatten {

namespace {

std::string trim(const std::string& s) {
    size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

struct Cursor {
    std::string file;
    size_t line = 0;

    [[noreturn]] void fail(const std::string& message) const {
        throw ConfigError(file + ":" + std::to_string(line) + ": " + message);
    }
};

double parse_double(const std::string& v, const Cursor& at) {
    try {
        size_t used = 0;
        double x = std::stod(v, &used);
        if (used != v.size()) at.fail("trailing characters in number '" + v + "'");
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        at.fail("expected a number, got '" + v + "'");
    }
}

int parse_int(const std::string& v, const Cursor& at) {
    try {
        size_t used = 0;
        int x = std::stoi(v, &used);
        if (used != v.size()) at.fail("trailing characters in integer '" + v + "'");
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        at.fail("expected an integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& v, const Cursor& at) {
    try {
        size_t used = 0;
        uint64_t x = std::stoull(v, &used);
        if (used != v.size()) at.fail("trailing characters in integer '" + v + "'");
        return x;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        at.fail("expected a non-negative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const Cursor& at) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    at.fail("expected true/false, got '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& v, const Cursor& at) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_double(item, at));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& v, const Cursor& at) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_int(item, at));
    }
    return out;
}

} // namespace

ModelDims ExperimentConfig::derived_model_dims() const {
    ModelDims dims = model;
    dims.feature_dim = manifold.feature_dim;
    dims.pose_cells = manifold.binning.cells();
    dims.num_classes = manifold.num_classes;
    return dims;
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& name) {
    ExperimentConfig cfg;
    // Binning fields are assembled at the end so partial updates combine.
    double pose_lo = cfg.manifold.binning.lo();
    double pose_hi = cfg.manifold.binning.hi();
    int pose_bins = cfg.manifold.binning.bins();
    bool wrap = cfg.manifold.binning.wrap();
    bool open_ended = cfg.manifold.binning.open_ended();

    Cursor at{name, 0};
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        ++at.line;
        std::string line = raw;
        if (size_t hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        size_t eq = line.find('=');
        if (eq == std::string::npos) at.fail("expected 'key = value', got '" + trim(raw) + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) at.fail("empty key");
        if (value.empty() && key != "train.target_cells" && key != "eval.fewshot_targets")
            at.fail("empty value for key '" + key + "'");

        if (key == "seed") cfg.seed = parse_u64(value, at);
        else if (key == "manifold.classes") cfg.manifold.num_classes = parse_int(value, at);
        else if (key == "manifold.feature_dim") cfg.manifold.feature_dim = parse_int(value, at);
        else if (key == "manifold.appearance_dim") cfg.manifold.appearance_dim = parse_int(value, at);
        else if (key == "manifold.fourier_harmonics") cfg.manifold.fourier_harmonics = parse_int(value, at);
        else if (key == "manifold.pose_lo") pose_lo = parse_double(value, at);
        else if (key == "manifold.pose_hi") pose_hi = parse_double(value, at);
        else if (key == "manifold.pose_bins") pose_bins = parse_int(value, at);
        else if (key == "manifold.wrap") wrap = parse_bool(value, at);
        else if (key == "manifold.open_ended") open_ended = parse_bool(value, at);
        else if (key == "manifold.within_class_spread") cfg.manifold.within_class_spread = parse_double(value, at);
        else if (key == "manifold.observation_noise") cfg.manifold.observation_noise = parse_double(value, at);
        else if (key == "manifold.pose_gain") cfg.manifold.pose_gain = parse_double(value, at);
        else if (key == "data.train_objects_per_class") cfg.data.train_objects_per_class = parse_int(value, at);
        else if (key == "data.test_objects_per_class") cfg.data.test_objects_per_class = parse_int(value, at);
        else if (key == "data.poses_per_object") cfg.data.poses_per_object = parse_int(value, at);
        else if (key == "data.pose_sampling") {
            if (value == "centroids") cfg.data.sampling = PoseSampling::BinCentroids;
            else if (value == "uniform") cfg.data.sampling = PoseSampling::UniformWithinBins;
            else at.fail("pose_sampling must be 'centroids' or 'uniform', got '" + value + "'");
        }
        else if (key == "model.pose_hidden") cfg.model.pose_hidden = parse_int(value, at);
        else if (key == "model.app_hidden") cfg.model.app_hidden = parse_int(value, at);
        else if (key == "model.app_out") cfg.model.app_out = parse_int(value, at);
        else if (key == "model.dec_hidden") cfg.model.dec_hidden = parse_int(value, at);
        else if (key == "train.pose_learning_rate") cfg.train.pose_learning_rate = parse_double(value, at);
        else if (key == "train.pose_epochs") cfg.train.pose_epochs = parse_int(value, at);
        else if (key == "train.category_learning_rate") cfg.train.category_learning_rate = parse_double(value, at);
        else if (key == "train.category_epochs") cfg.train.category_epochs = parse_int(value, at);
        else if (key == "train.main_learning_rate") cfg.train.main_learning_rate = parse_double(value, at);
        else if (key == "train.main_epochs") cfg.train.main_epochs = parse_int(value, at);
        else if (key == "train.batch_size") cfg.train.batch_size = parse_int(value, at);
        else if (key == "train.momentum") cfg.train.momentum = parse_double(value, at);
        else if (key == "train.weight_pose") cfg.train.weight_pose = parse_double(value, at);
        else if (key == "train.weight_category") cfg.train.weight_category = parse_double(value, at);
        else if (key == "train.target_cells") cfg.train.target_cells = parse_int_list(value, at);
        else if (key == "eval.lambda") cfg.eval.lambda = parse_double(value, at);
        else if (key == "eval.shots") cfg.eval.shots = parse_int(value, at);
        else if (key == "eval.repetitions") cfg.eval.repetitions = parse_int(value, at);
        else if (key == "eval.svm_cost") cfg.eval.svm_cost = parse_double(value, at);
        else if (key == "eval.svm_epochs") cfg.eval.svm_epochs = parse_int(value, at);
        else if (key == "eval.svm_learning_rate") cfg.eval.svm_learning_rate = parse_double(value, at);
        else if (key == "eval.fewshot_targets") cfg.eval.fewshot_targets = parse_double_list(value, at);
        else if (key == "eval.fewshot_oracle_bound") cfg.eval.fewshot_oracle_bound = parse_bool(value, at);
        else at.fail("unknown key '" + key + "'");
    }

    at.line = 0;
    try {
        cfg.manifold.binning = PoseBinning(pose_lo, pose_hi, pose_bins, wrap, open_ended);
    } catch (const ConfigError& e) {
        throw ConfigError(name + ": " + e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_experiment_config(buffer.str(), path);
}

std::string default_config_text() {
    ExperimentConfig d;
    std::ostringstream os;
    os << "# FATTEN experiment configuration (key = value, '#' comments)\n"
       << "seed = " << d.seed << "\n"
       << "\n# synthetic manifold\n"
       << "manifold.classes = " << d.manifold.num_classes << "\n"
       << "manifold.feature_dim = " << d.manifold.feature_dim << "\n"
       << "manifold.appearance_dim = " << d.manifold.appearance_dim << "\n"
       << "manifold.fourier_harmonics = " << d.manifold.fourier_harmonics << "\n"
       << "manifold.pose_lo = " << d.manifold.binning.lo() << "\n"
       << "manifold.pose_hi = " << d.manifold.binning.hi() << "\n"
       << "manifold.pose_bins = " << d.manifold.binning.bins() << "\n"
       << "manifold.wrap = " << (d.manifold.binning.wrap() ? "true" : "false") << "\n"
       << "manifold.open_ended = " << (d.manifold.binning.open_ended() ? "true" : "false") << "\n"
       << "manifold.within_class_spread = " << d.manifold.within_class_spread << "\n"
       << "manifold.observation_noise = " << d.manifold.observation_noise << "\n"
       << "manifold.pose_gain = " << d.manifold.pose_gain << "\n"
       << "\n# dataset sampling\n"
       << "data.train_objects_per_class = " << d.data.train_objects_per_class << "\n"
       << "data.test_objects_per_class = " << d.data.test_objects_per_class << "\n"
       << "data.poses_per_object = " << d.data.poses_per_object << "\n"
       << "data.pose_sampling = centroids\n"
       << "\n# model widths\n"
       << "model.pose_hidden = " << d.model.pose_hidden << "\n"
       << "model.app_hidden = " << d.model.app_hidden << "\n"
       << "model.app_out = " << d.model.app_out << "\n"
       << "model.dec_hidden = " << d.model.dec_hidden << "\n"
       << "\n# training\n"
       << "train.pose_learning_rate = " << d.train.pose_learning_rate << "\n"
       << "train.pose_epochs = " << d.train.pose_epochs << "\n"
       << "train.category_learning_rate = " << d.train.category_learning_rate << "\n"
       << "train.category_epochs = " << d.train.category_epochs << "\n"
       << "train.main_learning_rate = " << d.train.main_learning_rate << "\n"
       << "train.main_epochs = " << d.train.main_epochs << "\n"
       << "train.batch_size = " << d.train.batch_size << "\n"
       << "train.momentum = " << d.train.momentum << "\n"
       << "train.weight_pose = " << d.train.weight_pose << "\n"
       << "train.weight_category = " << d.train.weight_category << "\n"
       << "train.target_cells =\n"
       << "\n# evaluation\n"
       << "eval.lambda = " << d.eval.lambda << "\n"
       << "eval.shots = " << d.eval.shots << "\n"
       << "eval.repetitions = " << d.eval.repetitions << "\n"
       << "eval.svm_cost = " << d.eval.svm_cost << "\n"
       << "eval.svm_epochs = " << d.eval.svm_epochs << "\n"
       << "eval.svm_learning_rate = " << d.eval.svm_learning_rate << "\n"
       << "eval.fewshot_targets =\n"
       << "eval.fewshot_oracle_bound = " << (d.eval.fewshot_oracle_bound ? "true" : "false")
       << "\n";
    return os.str();
}

} // namespace fatten
