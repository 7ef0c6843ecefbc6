#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "shmfcn/dataset.hpp"
#include "shmfcn/model.hpp"
#include "shmfcn/train.hpp"

namespace shmfcn {

struct DatasetSpec {
    Task task = Task::Localization;
    LoadCase load_case = LoadCase::Sinusoidal;
    int vg = 0;  // 0: 512 for sinusoidal loads, 128 for band noise
    std::optional<double> snr_db = 15.0;
    SplitSpec split;

    int effective_vg() const;
};

struct PathsConfig {
    std::string dataset = "data";
    std::string checkpoint = "checkpoint";
    std::string reports = "reports";
};

/// Whole-pipeline configuration. Defaults reproduce the benchmark setup.
struct RunConfig {
    BuildingConfig building;
    SensorConfig sensors;
    double simulation_rate_hz = 667.0;
    double band_variance_kn2 = 1e4;
    DatasetSpec dataset;
    nn::NetworkConfig network;
    TrainConfig train;
    PathsConfig paths;
    std::uint64_t seed = 0;
    unsigned threads = 0;

    GenerationSettings generation() const;
    /// Network config with classes and branch lengths filled from the
    /// task and sensor settings.
    nn::NetworkConfig resolved_network() const;
    void validate() const;
};

/// Strict JSON reader: unknown keys and wrong types throw ConfigError.
/// Missing keys keep their defaults.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& cfg);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Applies SHMFCN_SEED, SHMFCN_THREADS, SHMFCN_VG, SHMFCN_MAX_EPOCHS,
/// SHMFCN_DATASET, SHMFCN_CHECKPOINT and SHMFCN_REPORTS.
void apply_env_overrides(RunConfig& cfg, const EnvLookup& lookup);
std::optional<std::string> process_env(const std::string& name);

/// Hash of everything that determines a training run (dataset spec,
/// network, train settings, seed). Paths and thread count are excluded.
std::uint64_t training_hash(const RunConfig& cfg);

}  // namespace shmfcn
