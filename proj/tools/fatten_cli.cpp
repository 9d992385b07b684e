// Command-line front end: data generation, pre-training, end-to-end
// training, transfer, evaluation, and gradient checking, driven by config
// files and seeds. Every command is a pure function of (config, seed, input
// files); exit codes are 0 success, 1 validation error, 2 runtime/numerics.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "fatten/checkpoint.hpp"
#include "fatten/config.hpp"
#include "fatten/dataset_io.hpp"
#include "fatten/errors.hpp"
#include "fatten/eval.hpp"
#include "fatten/gradcheck.hpp"
#include "fatten/training.hpp"

namespace fs = std::filesystem;
using namespace fatten;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

ExperimentConfig load_config(const std::string& path, uint64_t seed_override, bool has_seed) {
    ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_experiment_config(path);
    if (has_seed) cfg.seed = seed_override;
    cfg.train.seed = cfg.seed;
    return cfg;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out)
        throw IoError("write failure on '" + path + "'");
}

void write_json(const std::string& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

Dataset load_data(const std::string& path) { return read_dataset(path); }

FattenModel load_model(const std::string& path) { return load_checkpoint(path); }

void print_class_bin_summary(const Dataset& ds, const std::string& name) {
    std::vector<std::vector<int>> counts(
        static_cast<size_t>(ds.num_classes),
        std::vector<int>(static_cast<size_t>(ds.binning.cells()), 0));
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        counts[static_cast<size_t>(ds.class_labels[static_cast<size_t>(i)])]
              [static_cast<size_t>(ds.pose_bins[static_cast<size_t>(i)])]++;

    std::cout << name << ": " << ds.size() << " records, " << ds.num_classes << " classes, "
              << ds.binning.cells() << " pose cells\n";
    std::cout << "  class\\bin";
    for (int b = 0; b < ds.binning.cells(); ++b) std::cout << "\t" << b;
    std::cout << "\n";
    for (int c = 0; c < ds.num_classes; ++c) {
        std::cout << "  " << c;
        for (int b = 0; b < ds.binning.cells(); ++b)
            std::cout << "\t" << counts[static_cast<size_t>(c)][static_cast<size_t>(b)];
        std::cout << "\n";
    }
}

int cmd_gen_data(const std::string& config_path, uint64_t seed, bool has_seed,
                 const std::string& out_dir, const std::string& csv_import) {
    ExperimentConfig cfg = load_config(config_path, seed, has_seed);
    fs::create_directories(out_dir);

    if (!csv_import.empty()) {
        Dataset imported = import_csv(csv_import, cfg.manifold.binning);
        const std::string out = (fs::path(out_dir) / "imported.fatn").string();
        write_dataset(imported, out);
        print_class_bin_summary(imported, "imported");
        std::cout << "wrote " << out << " (" << fs::file_size(out) << " bytes)\n";
        return 0;
    }

    auto spec = std::make_shared<ManifoldSpec>(ManifoldSpec::build(cfg.manifold, cfg.seed));
    auto [train, test] = sample_dataset(spec, cfg.data, stream_seed(cfg.seed, "split"));

    const std::string train_path = (fs::path(out_dir) / "train.fatn").string();
    const std::string test_path = (fs::path(out_dir) / "test.fatn").string();
    write_dataset(train, train_path);
    write_dataset(test, test_path);

    print_class_bin_summary(train, "train");
    print_class_bin_summary(test, "test");
    std::cout << "wrote " << train_path << " (" << fs::file_size(train_path) << " bytes)\n";
    std::cout << "wrote " << test_path << " (" << fs::file_size(test_path) << " bytes)\n";
    return 0;
}

int cmd_pretrain(const std::string& config_path, uint64_t seed, bool has_seed,
                 const std::string& data_dir, const std::string& out_path,
                 const std::string& report_path) {
    ExperimentConfig cfg = load_config(config_path, seed, has_seed);
    Dataset train = load_data((fs::path(data_dir) / "train.fatn").string());
    Dataset test = load_data((fs::path(data_dir) / "test.fatn").string());

    ModelDims dims = cfg.model;
    dims.feature_dim = train.feature_dim();
    dims.pose_cells = train.binning.cells();
    dims.num_classes = train.num_classes;
    FattenModel model = FattenModel::init(train.binning, dims, cfg.seed);
    validate_model_dataset(model, train);
    validate_model_dataset(model, test);

    const auto start = Clock::now();
    TrainReport pose_report = pretrain_pose_predictor(model, train, test, cfg.train);
    TrainReport cat_report = pretrain_category_head(model, train, test, cfg.train);
    PoseErrorHistogram hist = pose_error_histogram(model, test);

    model.metadata["batchnorm"] = {{"epsilon", 1e-5}, {"momentum", 0.1}};
    save_checkpoint(model, out_path);
    write_text(out_path + ".pose_metrics.csv", pose_report.metrics_log());
    write_text(out_path + ".category_metrics.csv", cat_report.metrics_log());
    if (!report_path.empty()) {
        nlohmann::json j;
        j["pretrain_pose"] = pose_report.to_json();
        j["pretrain_category"] = cat_report.to_json();
        j["pose_error_histogram"] = hist.to_json();
        write_json(report_path, j);
    }

    std::cout << "held-out pose-bin accuracy: "
              << pose_report.heldout_metrics.at("pose_bin_accuracy") * 100.0 << "%\n";
    std::cout << "held-out category accuracy: "
              << cat_report.heldout_metrics.at("category_accuracy") * 100.0 << "%\n";
    std::cout << "pose error histogram (degrees: percent):\n" << hist.csv();
    std::cout << "wrote " << out_path << " in " << seconds_since(start) << "s\n";
    return 0;
}

int cmd_train(const std::string& config_path, uint64_t seed, bool has_seed,
              const std::string& data_dir, const std::string& model_in,
              const std::string& model_out, const std::string& report_path, double lr_override,
              int epochs_override) {
    ExperimentConfig cfg = load_config(config_path, seed, has_seed);
    if (lr_override > 0) cfg.train.main_learning_rate = lr_override;
    if (epochs_override > 0) cfg.train.main_epochs = epochs_override;

    Dataset train = load_data((fs::path(data_dir) / "train.fatn").string());
    Dataset test = load_data((fs::path(data_dir) / "test.fatn").string());
    FattenModel model = load_model(model_in);
    validate_model_dataset(model, train);
    validate_model_dataset(model, test);
    if (!model.metadata.contains("pretrain_pose") || !model.metadata.contains("pretrain_category"))
        throw ConfigError("model '" + model_in + "' lacks pre-trained heads; run "
                          "`fatten pretrain` first");

    const auto start = Clock::now();
    TrainReport report = train_fatten(model, train, test, cfg.train);
    save_checkpoint(model, model_out);
    write_text(model_out + ".metrics.csv", report.metrics_log());
    if (!report_path.empty())
        write_json(report_path, report.to_json());

    std::cout << "transfer pose accuracy: "
              << report.heldout_metrics.at("transfer_pose_accuracy") * 100.0 << "%\n";
    std::cout << "transfer category accuracy: "
              << report.heldout_metrics.at("transfer_category_accuracy") * 100.0 << "%\n";
    std::cout << "wrote " << model_out << " in " << seconds_since(start) << "s\n";
    return 0;
}

int cmd_transfer(const std::string& model_path, const std::string& data_path,
                 const std::string& out_path, int target_bin, bool identity) {
    FattenModel model = load_model(model_path);
    Dataset data = load_data(data_path);
    validate_model_dataset(model, data);

    Dataset generated;
    if (identity) {
        generated = data;
        generated.split = data.split.empty() ? "generated" : data.split + "-generated";
        generated.features = model.transfer_cells(data.features, data.pose_bins);

        Eigen::ArrayXd rel_err(data.size());
        for (Eigen::Index i = 0; i < data.size(); ++i) {
            double denom = std::max(data.features.row(i).norm(), 1e-12);
            rel_err[i] = (generated.features.row(i) - data.features.row(i)).norm() / denom;
        }
        std::vector<double> sorted(rel_err.data(), rel_err.data() + rel_err.size());
        std::sort(sorted.begin(), sorted.end());
        std::cout << "identity transfer median relative error: "
                  << sorted[sorted.size() / 2] << "\n";
    } else if (target_bin >= 0) {
        generated = generate_transfers(model, data, {target_bin});
    } else {
        generated = generate_transfers(model, data);
    }

    write_dataset(generated, out_path);
    std::cout << "wrote " << generated.size() << " synthesized records to " << out_path << "\n";
    return 0;
}

int cmd_eval_transfer(const std::string& model_path, const std::string& data_path,
                      const std::string& report_path, const std::string& csv_dir, int table) {
    FattenModel model = load_model(model_path);
    Dataset data = load_data(data_path);
    validate_model_dataset(model, data);

    const auto start = Clock::now();
    EvalReport report;
    report.pose_histogram = pose_error_histogram(model, data);
    report.transfer = transfer_accuracy(model, data);
    report.runtime_sec = seconds_since(start);

    if (table == 1 || table == 0) std::cout << report.pose_histogram->csv();
    if (table == 2 || table == 0) std::cout << report.transfer->csv();
    std::cout << "runtime: " << report.runtime_sec << "s\n";

    if (!report_path.empty()) write_json(report_path, report.to_json());
    if (!csv_dir.empty()) {
        fs::create_directories(csv_dir);
        write_text((fs::path(csv_dir) / "pose_error_histogram.csv").string(),
                   report.pose_histogram->csv());
        write_text((fs::path(csv_dir) / "transfer_accuracy.csv").string(),
                   report.transfer->csv());
    }
    return 0;
}

int cmd_eval_retrieval(const std::string& model_path, const std::string& data_path,
                       const std::string& report_path, const std::string& csv_path,
                       double lambda) {
    FattenModel model = load_model(model_path);
    Dataset data = load_data(data_path);
    validate_model_dataset(model, data);

    const auto start = Clock::now();
    Dataset generated = generate_transfers(model, data);

    EvalReport report;
    const std::array<std::tuple<const char*, RelevanceMode, DistanceKind>, 3> tasks{{
        {"pose", RelevanceMode::Pose, DistanceKind::D2},
        {"category", RelevanceMode::Category, DistanceKind::D1},
        {"pose+category", RelevanceMode::PoseAndCategory, DistanceKind::DC},
    }};
    for (const auto& [name, relevance, distance] : tasks) {
        RetrievalResult result;
        result.task = name;
        result.map_real =
            retrieval_map(model, self_retrieval_task(data, relevance, distance, lambda));
        result.map_generated =
            retrieval_map(model, self_retrieval_task(generated, relevance, distance, lambda));
        report.retrieval.push_back(result);
    }
    report.runtime_sec = seconds_since(start);

    std::cout << retrieval_csv(report.retrieval);
    std::cout << "runtime: " << report.runtime_sec << "s\n";
    if (!report_path.empty()) write_json(report_path, report.to_json());
    if (!csv_path.empty()) write_text(csv_path, retrieval_csv(report.retrieval));
    return 0;
}

int cmd_eval_fewshot(const std::string& config_path, uint64_t seed, bool has_seed,
                     const std::string& model_path, const std::string& data_path,
                     const std::string& report_path, const std::string& csv_path, int shots,
                     int repetitions, const std::vector<double>& targets, bool no_oracle) {
    ExperimentConfig cfg = load_config(config_path, seed, has_seed);
    FattenModel model = load_model(model_path);
    Dataset data = load_data(data_path);
    validate_model_dataset(model, data);

    FewShotConfig fs_config;
    fs_config.shots = shots > 0 ? shots : cfg.eval.shots;
    fs_config.repetitions = repetitions > 0 ? repetitions : cfg.eval.repetitions;
    fs_config.svm.cost = cfg.eval.svm_cost;
    fs_config.svm.epochs = cfg.eval.svm_epochs;
    fs_config.svm.learning_rate = cfg.eval.svm_learning_rate;
    fs_config.seed = cfg.seed;
    fs_config.with_oracle_bound = !no_oracle && cfg.eval.fewshot_oracle_bound && data.spec != nullptr;

    std::vector<double> target_poses = !targets.empty() ? targets : cfg.eval.fewshot_targets;
    if (target_poses.empty())
        for (int c = 0; c < model.binning.cells(); ++c)
            target_poses.push_back(model.binning.centroid(c));

    const auto start = Clock::now();
    std::vector<AugmentationSource> sources{{&model, target_poses}};
    EvalReport report;
    report.few_shot = few_shot_experiment(data, sources, fs_config);
    report.runtime_sec = seconds_since(start);

    std::cout << report.few_shot->csv();
    std::cout << "mean gain: " << report.few_shot->mean_gain * 100.0
              << " points, paired t = " << report.few_shot->paired_t << "\n";
    std::cout << "runtime: " << report.runtime_sec << "s\n";
    if (!report_path.empty()) write_json(report_path, report.to_json());
    if (!csv_path.empty()) write_text(csv_path, report.few_shot->csv());
    return 0;
}

int cmd_gradcheck(uint64_t seed, int seeds, double tolerance, bool corrupt) {
    GradCheckOptions options;
    options.seed = seed;
    options.seeds = seeds;
    options.tolerance = tolerance;
    options.corrupt = corrupt;
    GradCheckReport report = full_gradient_check(options);
    std::cout << report.summary();
    return report.pass ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"FATTEN: feature-space transfer for pose-aware data augmentation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, data_dir, data_path, model_in, model_out, report_path,
        csv_dir, csv_path, csv_import;
    uint64_t seed = 0;
    bool has_seed = false;
    int exit_code = 0;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
            has_seed = true;
        });
    };
    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file");
    };

    auto* defaults_cmd =
        app.add_subcommand("default-config", "print the default config schema to stdout");
    defaults_cmd->callback([&]() { std::cout << default_config_text(); });

    auto* gen = app.add_subcommand("gen-data", "generate synthetic train/test datasets");
    add_config(gen);
    add_seed(gen);
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--csv-import", csv_import,
                    "ingest an external CSV feature file instead of sampling");
    gen->callback([&]() { exit_code = cmd_gen_data(config_path, seed, has_seed, out_dir,
                                                   csv_import); });

    auto* pre = app.add_subcommand("pretrain", "pre-train the pose predictor and category head");
    add_config(pre);
    add_seed(pre);
    pre->add_option("--data-dir", data_dir, "directory holding train.fatn/test.fatn")->required();
    pre->add_option("--out", model_out, "output checkpoint path")->required();
    pre->add_option("--report", report_path, "write a JSON training report here");
    pre->callback([&]() {
        exit_code = cmd_pretrain(config_path, seed, has_seed, data_dir, model_out, report_path);
    });

    double lr_override = 0.0;
    int epochs_override = 0;
    auto* train_cmd =
        app.add_subcommand("train", "train the encoder/decoder with frozen heads");
    add_config(train_cmd);
    add_seed(train_cmd);
    train_cmd->add_option("--data-dir", data_dir, "directory holding train.fatn/test.fatn")
        ->required();
    train_cmd->add_option("--model", model_in, "pre-trained input checkpoint")->required();
    train_cmd->add_option("--out", model_out, "trained output checkpoint")->required();
    train_cmd->add_option("--report", report_path, "write a JSON training report here");
    train_cmd->add_option("--lr", lr_override, "override the main learning rate (fine-tuning)");
    train_cmd->add_option("--epochs", epochs_override, "override the main epoch count");
    train_cmd->callback([&]() {
        exit_code = cmd_train(config_path, seed, has_seed, data_dir, model_in, model_out,
                              report_path, lr_override, epochs_override);
    });

    int target_bin = -1;
    bool identity = false;
    auto* transfer_cmd =
        app.add_subcommand("transfer", "synthesize features and export them as a dataset");
    transfer_cmd->add_option("--model", model_in, "trained checkpoint")->required();
    transfer_cmd->add_option("--data", data_path, "source dataset file")->required();
    transfer_cmd->add_option("--out", model_out, "output dataset file")->required();
    transfer_cmd->add_option("--target-bin", target_bin, "single target cell (default: all)");
    transfer_cmd->add_flag("--identity", identity, "transfer every record to its own bin");
    transfer_cmd->callback([&]() {
        exit_code = cmd_transfer(model_in, data_path, model_out, target_bin, identity);
    });

    int table = 0;
    auto* evt = app.add_subcommand("eval-transfer",
                                   "pose-error histogram and generated-feature accuracy");
    evt->add_option("--model", model_in, "trained checkpoint")->required();
    evt->add_option("--data", data_path, "test dataset file")->required();
    evt->add_option("--report", report_path, "write a JSON report here");
    evt->add_option("--csv-dir", csv_dir, "write CSV tables into this directory");
    evt->add_option("--table", table, "print only table 1 (histogram) or 2 (accuracy)")
        ->check(CLI::Range(1, 2));
    evt->callback([&]() {
        exit_code = cmd_eval_transfer(model_in, data_path, report_path, csv_dir, table);
    });

    double lambda = 1.0;
    auto* evr = app.add_subcommand("eval-retrieval",
                                   "mAP of real vs generated features on pose/category tasks");
    evr->add_option("--model", model_in, "trained checkpoint")->required();
    evr->add_option("--data", data_path, "test dataset file")->required();
    evr->add_option("--report", report_path, "write a JSON report here");
    evr->add_option("--csv", csv_path, "write the mAP table as CSV here");
    evr->add_option("--lambda", lambda, "weight of the pose distance inside d_c");
    evr->callback([&]() {
        exit_code = cmd_eval_retrieval(model_in, data_path, report_path, csv_path, lambda);
    });

    int shots = 0, repetitions = 0;
    std::vector<double> targets;
    bool no_oracle = false;
    auto* evf = app.add_subcommand("eval-fewshot",
                                   "paired one/few-shot augmentation experiment");
    add_config(evf);
    add_seed(evf);
    evf->add_option("--model", model_in, "trained checkpoint")->required();
    evf->add_option("--data", data_path, "test dataset file")->required();
    evf->add_option("--report", report_path, "write a JSON report here");
    evf->add_option("--csv", csv_path, "write the accuracy table as CSV here");
    evf->add_option("--shots", shots, "labeled instances per class");
    evf->add_option("--repetitions", repetitions, "random repetitions");
    evf->add_option("--targets", targets, "augmentation target pose values")->delimiter(',');
    evf->add_flag("--no-oracle", no_oracle, "skip the exact-oracle augmentation upper bound");
    evf->callback([&]() {
        exit_code = cmd_eval_fewshot(config_path, seed, has_seed, model_in, data_path,
                                     report_path, csv_path, shots, repetitions, targets,
                                     no_oracle);
    });

    int gc_seeds = 20;
    double gc_tolerance = 1e-5;
    bool corrupt = false;
    auto* gc = app.add_subcommand("gradcheck",
                                  "verify analytic gradients against central differences");
    add_seed(gc);
    gc->add_option("--seeds", gc_seeds, "number of random seeds");
    gc->add_option("--tolerance", gc_tolerance, "maximum relative error");
    gc->add_flag("--corrupt-grad", corrupt, "inject a +10% fault into one gradient");
    gc->callback([&]() { exit_code = cmd_gradcheck(seed, gc_seeds, gc_tolerance, corrupt); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
