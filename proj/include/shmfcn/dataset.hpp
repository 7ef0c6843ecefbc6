#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shmfcn/response_sim.hpp"
#include "shmfcn/structural_model.hpp"

namespace shmfcn {

enum class Task { Detection, Localization };
enum class LoadCase { Sinusoidal, Noise15_17, Noise5_7 };
enum class Split : std::uint8_t { Train, Val, Test, Unassigned };

std::string_view to_string(Task t);
std::string_view to_string(LoadCase c);
std::string_view to_string(Split s);
Task task_from_string(std::string_view s);
LoadCase load_case_from_string(std::string_view s);
Split split_from_string(std::string_view s);

/// Number of classes of a task for a building with n stories.
int class_count(Task task, int n_stories);

/// Everything needed to turn (scenario, load case, seed) into sensor blocks.
struct GenerationSettings {
    BuildingConfig building;
    SensorConfig sensors;
    double simulation_rate_hz = 667.0;
    double band_variance_kn2 = 1e4;

    void validate() const;
    double dt() const { return 1.0 / simulation_rate_hz; }
};

/// One multichannel series group stored as float32, row-major [channel][time].
struct Block {
    int channels = 0;
    int length = 0;
    std::vector<float> values;

    float at(int c, int t) const { return values[static_cast<std::size_t>(c) * length + t]; }
};

struct InstanceMeta {
    std::uint64_t seed = 0;
    int scenario = 0;
    LoadCase load_case = LoadCase::Sinusoidal;
    std::optional<double> snr_db;
    double sigma_shear = 0.0;
    double sigma_axial = 0.0;
};

struct Instance {
    Block shear;
    Block axial;
    int label = 0;
    Task task = Task::Localization;
    InstanceMeta meta;
};

struct DatasetManifest {
    Task task = Task::Localization;
    LoadCase load_case = LoadCase::Sinusoidal;
    int vg = 0;
    std::uint64_t master_seed = 0;
    std::optional<double> snr_db;
    std::optional<std::uint64_t> split_seed;
    int classes = 0;
    int n_stories = 8;
};

struct Dataset {
    std::vector<Instance> instances;
    std::vector<Split> split;  // parallel to instances
    DatasetManifest manifest;

    std::size_t size() const { return instances.size(); }
    std::vector<std::size_t> indices_of(Split s) const;
};

/// Fractions as exact rationals; default 56.25 / 18.75 / 25 %.
struct SplitSpec {
    std::array<std::array<int, 2>, 3> fractions{{{9, 16}, {3, 16}, {4, 16}}};
    std::uint64_t shuffle_seed = 0;
};

/// Per-instance seed; depends only on these five values.
std::uint64_t instance_seed(std::uint64_t master_seed, Task task, LoadCase load_case, int scenario, int index);

/// Simulates one experiment in 64-bit: load sampling, integration of both
/// directions, sensor sampling and (when snr_db is set) measurement noise.
ResponseRecord simulate_response(const GenerationSettings& settings, LoadCase load_case, DamageScenario scenario,
                                 std::optional<double> snr_db, std::uint64_t seed);

/// simulate_response cast to float32 storage. The label equals the scenario.
Instance build_instance(const GenerationSettings& settings, LoadCase load_case, DamageScenario scenario,
                        std::optional<double> snr_db, std::uint64_t seed);

/// Instances per scenario for a task: localization V_g for every label;
/// detection 8 V_g undamaged and V_g for each damaged scenario.
std::vector<std::pair<int, int>> dataset_composition(Task task, int vg, int n_stories);

/// Generates instances in (scenario, index) order, in parallel over
/// `threads` workers; content is independent of the worker count.
Dataset build_dataset(const GenerationSettings& settings, Task task, LoadCase load_case, int vg,
                      std::optional<double> snr_db, std::uint64_t master_seed, unsigned threads = 0);

/// Stratified assignment by (label, scenario): each group is shuffled with
/// the seed and cut by the fractions. Instances keep their order.
Dataset split_dataset(Dataset ds, const SplitSpec& spec);

/// Copy of a subset of instances (split tags carried over).
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

inline constexpr int kDatasetFormatVersion = 1;

/// Directory layout: manifest.json, shear.f32, axial.f32 (little-endian
/// float32, [instance][channel][time]).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// FNV-1a 64-bit over raw bytes.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace shmfcn
