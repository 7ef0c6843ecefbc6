#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shmfcn/config.hpp"

namespace shmfcn::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericError = 4 };

/// Maps the exception currently being handled to an exit code.
int exit_code_for_current_exception();

struct EigenTable {
    std::vector<int> scenarios;
    std::vector<std::vector<double>> shear;  // [mode][scenario], Hz
    std::vector<std::vector<double>> axial;
};

/// Frequencies for each scenario; empty list means 0..n_stories.
EigenTable eigen_table(const BuildingConfig& building, std::vector<int> scenarios);

/// Writes eigen_shear.csv and eigen_axial.csv (rows = modes, columns = scenarios).
EigenTable cmd_eigen(const RunConfig& cfg, const std::vector<int>& scenarios, const std::filesystem::path& out_dir,
                     std::ostream& log);

Dataset cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Trains and writes a resumable checkpoint (with history.csv) into `checkpoint_dir`.
TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                      const std::filesystem::path& checkpoint_dir, bool resume, std::ostream& log);

/// Writes summary_<split>.txt and confusion_<split>.csv into `out_dir`.
EvalReport cmd_eval(const std::filesystem::path& checkpoint_dir, const std::filesystem::path& dataset_dir, Split split,
                    const std::filesystem::path& out_dir, unsigned threads, std::ostream& log);

/// Prints the label and the class probabilities of a single-instance dataset.
Prediction cmd_predict(const std::filesystem::path& checkpoint_dir, const std::filesystem::path& instance_dir,
                       unsigned threads, std::ostream& out);

/// Saves instance `index` of a split as a single-instance dataset directory.
void cmd_export_instance(const std::filesystem::path& dataset_dir, Split split, std::size_t index,
                         const std::filesystem::path& out_dir);

/// Collates history and evaluation artifacts (and, with a dataset, per-scenario
/// PSDs of the top-floor shear channel) into `out_dir` with a manifest.
std::vector<std::string> cmd_report(const RunConfig& cfg, const std::filesystem::path& checkpoint_dir,
                                    const std::filesystem::path& eval_dir,
                                    const std::optional<std::filesystem::path>& dataset_dir,
                                    const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace shmfcn::cli
