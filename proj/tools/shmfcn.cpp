#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shmfcn/cli.hpp"
#include "shmfcn/errors.hpp"

namespace fs = std::filesystem;
using namespace shmfcn;

int main(int argc, char** argv) {
    CLI::App app{"Synthetic vibration datasets and FCN damage classifiers for a shear-building twin.\n"
                 "Environment overrides: SHMFCN_SEED, SHMFCN_THREADS, SHMFCN_VG, SHMFCN_MAX_EPOCHS,\n"
                 "SHMFCN_DATASET, SHMFCN_CHECKPOINT, SHMFCN_REPORTS (flags win over environment)."};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("--config", config_path, "JSON run configuration (defaults reproduce the benchmark)");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--threads", threads, "worker threads, 0 = all cores");

    auto* show = app.add_subcommand("show-config", "print the effective configuration as JSON");

    auto* eigen = app.add_subcommand("eigen", "eigenfrequency tables per damage scenario");
    std::vector<int> scenarios;
    std::string eigen_out;
    eigen->add_option("--scenarios", scenarios, "scenario labels (default: all)")->delimiter(',');
    eigen->add_option("--out", eigen_out, "output directory (default: paths.reports)");

    auto* generate = app.add_subcommand("generate", "simulate, split and save a dataset");
    std::string gen_out;
    generate->add_option("--out", gen_out, "dataset directory (default: paths.dataset)");

    auto* train = app.add_subcommand("train", "train a classifier and write a checkpoint");
    std::string train_data, train_ckpt;
    bool resume = false;
    train->add_option("--dataset", train_data, "dataset directory (default: paths.dataset)");
    train->add_option("--checkpoint", train_ckpt, "checkpoint directory (default: paths.checkpoint)");
    train->add_flag("--resume", resume, "continue from the checkpoint's saved train state");

    auto* eval = app.add_subcommand("eval", "accuracy and confusion matrix on a split");
    std::string eval_ckpt, eval_data, eval_out, eval_split = "test";
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory (default: paths.checkpoint)");
    eval->add_option("--dataset", eval_data, "dataset directory (default: paths.dataset)");
    eval->add_option("--split", eval_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    eval->add_option("--out", eval_out, "report directory (default: paths.reports)");

    auto* predict = app.add_subcommand("predict", "classify one exported instance");
    std::string pred_ckpt, pred_instance;
    predict->add_option("--checkpoint", pred_ckpt, "checkpoint directory (default: paths.checkpoint)");
    predict->add_option("--instance", pred_instance, "single-instance dataset directory")->required();

    auto* exporter = app.add_subcommand("export-instance", "save one instance of a split for predict");
    std::string exp_data, exp_out, exp_split = "test";
    std::size_t exp_index = 0;
    exporter->add_option("--dataset", exp_data, "dataset directory (default: paths.dataset)");
    exporter->add_option("--split", exp_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    exporter->add_option("--index", exp_index, "position inside the split");
    exporter->add_option("--out", exp_out, "output directory")->required();

    auto* report = app.add_subcommand("report", "collect plot-ready CSVs into one directory");
    std::string rep_ckpt, rep_eval, rep_data, rep_out;
    report->add_option("--checkpoint", rep_ckpt, "checkpoint directory (default: paths.checkpoint)");
    report->add_option("--eval-dir", rep_eval, "eval output directory (default: paths.reports)");
    report->add_option("--dataset", rep_data, "dataset for PSD export (optional)");
    report->add_option("--out", rep_out, "bundle directory (default: <paths.reports>/bundle)");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        apply_env_overrides(cfg, process_env);
        if (seed) cfg.seed = cfg.train.seed = *seed;
        if (threads) cfg.threads = *threads;
        cfg.validate();
        auto pick = [](const std::string& flag, const std::string& fallback) { return flag.empty() ? fallback : flag; };

        if (*show) {
            std::cout << dump_run_config(cfg);
        } else if (*eigen) {
            cli::cmd_eigen(cfg, scenarios, pick(eigen_out, cfg.paths.reports), std::cout);
        } else if (*generate) {
            cli::cmd_generate(cfg, pick(gen_out, cfg.paths.dataset), std::cout);
        } else if (*train) {
            cli::cmd_train(cfg, pick(train_data, cfg.paths.dataset), pick(train_ckpt, cfg.paths.checkpoint), resume,
                           std::cout);
        } else if (*eval) {
            cli::cmd_eval(pick(eval_ckpt, cfg.paths.checkpoint), pick(eval_data, cfg.paths.dataset),
                          split_from_string(eval_split), pick(eval_out, cfg.paths.reports), cfg.threads, std::cout);
        } else if (*predict) {
            cli::cmd_predict(pick(pred_ckpt, cfg.paths.checkpoint), pred_instance, cfg.threads, std::cout);
        } else if (*exporter) {
            cli::cmd_export_instance(pick(exp_data, cfg.paths.dataset), split_from_string(exp_split), exp_index,
                                     exp_out);
        } else if (*report) {
            std::optional<fs::path> data;
            if (!rep_data.empty()) data = rep_data;
            cli::cmd_report(cfg, pick(rep_ckpt, cfg.paths.checkpoint), pick(rep_eval, cfg.paths.reports), data,
                            pick(rep_out, (fs::path(cfg.paths.reports) / "bundle").string()), std::cout);
        }
    } catch (const std::exception& e) {
        const int code = cli::exit_code_for_current_exception();
        std::cerr << "shmfcn: " << e.what() << '\n';
        return code;
    }
    return 0;
}
