#include "shmfcn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "shmfcn/errors.hpp"
#include "shmfcn/parallel.hpp"
#include "shmfcn/rng.hpp"

namespace shmfcn {

using nlohmann::json;

namespace {

// Sub-stream identifiers inside one instance seed.
enum Stream : std::uint64_t { kShearLoad = 1, kAxialLoad = 2, kShearNoise = 3, kAxialNoise = 4 };

std::pair<double, double> noise_band(LoadCase c) {
    switch (c) {
        case LoadCase::Noise15_17: return {15.0, 17.0};
        case LoadCase::Noise5_7: return {5.0, 7.0};
        default: throw DomainError("load case has no noise band");
    }
}

LoadSeries load_for(const GenerationSettings& settings, LoadCase load_case, Direction direction, Eigen::Index samples,
                    std::uint64_t seed) {
    Rng rng(derive_seed(seed, {direction == Direction::Shear ? kShearLoad : kAxialLoad}));
    const int n = settings.building.n_stories;
    if (load_case == LoadCase::Sinusoidal)
        return sinusoidal_load_series(sample_sinusoidal_params(rng, direction), n, settings.dt(), samples);
    const auto [f_min, f_max] = noise_band(load_case);
    BandNoiseParams params;
    params.f_min = f_min;
    params.f_max = f_max;
    params.variance_kn2 = settings.band_variance_kn2;
    params.dt = settings.dt();
    params.n_steps = static_cast<std::size_t>(samples);
    return generate_band_noise(rng, params, n, direction);
}

Eigen::MatrixXd simulate_direction(const GenerationSettings& settings, LoadCase load_case, Direction direction,
                                   DamageScenario scenario, double window_s, std::uint64_t seed) {
    const double dt = settings.dt();
    const Eigen::Index samples = trajectory_samples(dt, window_s);
    const SystemMatrices sys = assemble_chain(settings.building, direction, scenario);
    const ModalBasis basis = modal_basis(sys);
    const LoadSeries load = load_for(settings, load_case, direction, samples, seed);
    return integrate_modal(sys, basis, load, dt, window_s);
}

Block to_block(const Eigen::MatrixXd& m) {
    Block b;
    b.channels = static_cast<int>(m.rows());
    b.length = static_cast<int>(m.cols());
    b.values.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index c = 0; c < m.rows(); ++c)
        for (Eigen::Index t = 0; t < m.cols(); ++t)
            b.values[static_cast<std::size_t>(c * m.cols() + t)] = static_cast<float>(m(c, t));
    return b;
}

json block_layout(const Block& b, const std::string& file, std::size_t count, const std::vector<std::byte>& bytes) {
    return {{"file", file},
            {"channels", b.channels},
            {"length", b.length},
            {"instances", count},
            {"bytes", bytes.size()},
            {"fnv1a64", detail::hex64(fnv1a64(bytes))}};
}

}  // namespace

std::string_view to_string(Task t) { return t == Task::Detection ? "detection" : "localization"; }

std::string_view to_string(LoadCase c) {
    switch (c) {
        case LoadCase::Sinusoidal: return "sin";
        case LoadCase::Noise15_17: return "noise15_17";
        case LoadCase::Noise5_7: return "noise5_7";
    }
    return "?";
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Unassigned: return "none";
    }
    return "?";
}

Task task_from_string(std::string_view s) {
    if (s == "detection") return Task::Detection;
    if (s == "localization") return Task::Localization;
    throw DomainError("unknown task '" + std::string(s) + "' (expected detection|localization)");
}

LoadCase load_case_from_string(std::string_view s) {
    if (s == "sin") return LoadCase::Sinusoidal;
    if (s == "noise15_17") return LoadCase::Noise15_17;
    if (s == "noise5_7") return LoadCase::Noise5_7;
    throw DomainError("unknown load case '" + std::string(s) + "' (expected sin|noise15_17|noise5_7)");
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    if (s == "none") return Split::Unassigned;
    throw DomainError("unknown split '" + std::string(s) + "' (expected train|val|test)");
}

int class_count(Task task, int n_stories) { return task == Task::Detection ? 2 : n_stories + 1; }

void GenerationSettings::validate() const {
    building.validate();
    sensors.validate();
    if (!(simulation_rate_hz > 0.0)) throw DomainError("simulation rate must be > 0");
    if (!(band_variance_kn2 >= 0.0)) throw DomainError("band noise variance must be >= 0");
}

std::vector<std::size_t> Dataset::indices_of(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

std::uint64_t instance_seed(std::uint64_t master_seed, Task task, LoadCase load_case, int scenario, int index) {
    return derive_seed(master_seed, {static_cast<std::uint64_t>(task), static_cast<std::uint64_t>(load_case),
                                     static_cast<std::uint64_t>(scenario), static_cast<std::uint64_t>(index)});
}

ResponseRecord simulate_response(const GenerationSettings& settings, LoadCase load_case, DamageScenario scenario,
                                 std::optional<double> snr_db, std::uint64_t seed) {
    settings.validate();
    const auto& sensors = settings.sensors;
    const Eigen::MatrixXd shear_traj =
        simulate_direction(settings, load_case, Direction::Shear, scenario, sensors.shear_window_s, seed);
    const Eigen::MatrixXd axial_traj =
        simulate_direction(settings, load_case, Direction::Axial, scenario, sensors.axial_window_s, seed);
    SensorBlocks blocks = sample_sensors(shear_traj, axial_traj, settings.simulation_rate_hz, sensors);

    ResponseRecord rec;
    rec.scenario = scenario.label;
    rec.seed = seed;
    rec.snr_db = snr_db;
    if (snr_db) {
        rec.sigma_shear = sigma_for_snr(blocks.shear, *snr_db);
        rec.sigma_axial = sigma_for_snr(blocks.axial, *snr_db);
        Rng shear_rng(derive_seed(seed, {kShearNoise}));
        Rng axial_rng(derive_seed(seed, {kAxialNoise}));
        rec.shear_block = add_noise(blocks.shear, rec.sigma_shear, shear_rng);
        rec.axial_block = add_noise(blocks.axial, rec.sigma_axial, axial_rng);
    } else {
        rec.shear_block = blocks.shear;
        rec.axial_block = blocks.axial;
    }
    rec.noise_free_shear = std::move(blocks.shear);
    rec.noise_free_axial = std::move(blocks.axial);
    return rec;
}

Instance build_instance(const GenerationSettings& settings, LoadCase load_case, DamageScenario scenario,
                        std::optional<double> snr_db, std::uint64_t seed) {
    const ResponseRecord rec = simulate_response(settings, load_case, scenario, snr_db, seed);
    Instance inst;
    inst.shear = to_block(rec.shear_block);
    inst.axial = to_block(rec.axial_block);
    inst.label = scenario.label;
    inst.task = Task::Localization;
    inst.meta = {seed, scenario.label, load_case, snr_db, rec.sigma_shear, rec.sigma_axial};
    for (const Block* b : {&inst.shear, &inst.axial})
        for (float v : b->values)
            if (!std::isfinite(v)) throw NumericError("non-finite sensor value in generated instance");
    return inst;
}

std::vector<std::pair<int, int>> dataset_composition(Task task, int vg, int n_stories) {
    if (vg < 1) throw DomainError("V_g must be >= 1");
    std::vector<std::pair<int, int>> out;
    out.emplace_back(0, task == Task::Detection ? n_stories * vg : vg);
    for (int g = 1; g <= n_stories; ++g) out.emplace_back(g, vg);
    return out;
}

Dataset build_dataset(const GenerationSettings& settings, Task task, LoadCase load_case, int vg,
                      std::optional<double> snr_db, std::uint64_t master_seed, unsigned threads) {
    settings.validate();
    const int n = settings.building.n_stories;
    struct Job {
        int scenario;
        int index;
    };
    std::vector<Job> jobs;
    for (const auto& [g, count] : dataset_composition(task, vg, n))
        for (int i = 0; i < count; ++i) jobs.push_back({g, i});

    Dataset ds;
    ds.instances.resize(jobs.size());
    ds.split.assign(jobs.size(), Split::Unassigned);
    parallel_for(jobs.size(), threads, [&](std::size_t k) {
        const Job& job = jobs[k];
        const auto seed = instance_seed(master_seed, task, load_case, job.scenario, job.index);
        Instance inst = build_instance(settings, load_case, {job.scenario}, snr_db, seed);
        inst.task = task;
        inst.label = task == Task::Detection ? (job.scenario > 0 ? 1 : 0) : job.scenario;
        ds.instances[k] = std::move(inst);
    });
    ds.manifest.task = task;
    ds.manifest.load_case = load_case;
    ds.manifest.vg = vg;
    ds.manifest.master_seed = master_seed;
    ds.manifest.snr_db = snr_db;
    ds.manifest.classes = class_count(task, n);
    ds.manifest.n_stories = n;
    return ds;
}

Dataset split_dataset(Dataset ds, const SplitSpec& spec) {
    const int den = spec.fractions[0][1];
    int total_num = 0;
    for (const auto& [num, d] : spec.fractions) {
        if (d != den || den <= 0 || num < 0)
            throw DomainError("split fractions must be non-negative rationals over a common denominator");
        total_num += num;
    }
    if (total_num != den) throw DomainError("split fractions must sum to 1");

    std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ds.instances.size(); ++i)
        groups[{ds.instances[i].label, ds.instances[i].meta.scenario}].push_back(i);

    ds.split.assign(ds.instances.size(), Split::Unassigned);
    for (auto& [key, members] : groups) {
        const auto count = static_cast<long long>(members.size());
        std::array<long long, 3> cuts{};
        for (std::size_t s = 0; s < 3; ++s) {
            const long long scaled = count * spec.fractions[s][0];
            if (scaled % spec.fractions[s][1] != 0)
                throw DomainError("split: class " + std::to_string(key.first) + " / scenario " +
                                  std::to_string(key.second) + " has " + std::to_string(count) +
                                  " instances, which the fractions do not divide exactly; choose V_g divisible by " +
                                  std::to_string(spec.fractions[s][1]));
            cuts[s] = scaled / spec.fractions[s][1];
        }
        Rng rng(derive_seed(spec.shuffle_seed, {static_cast<std::uint64_t>(key.first),
                                                static_cast<std::uint64_t>(key.second)}));
        std::shuffle(members.begin(), members.end(), rng);
        std::size_t pos = 0;
        for (std::size_t s = 0; s < 3; ++s)
            for (long long j = 0; j < cuts[s]; ++j) ds.split[members[pos++]] = static_cast<Split>(s);
    }
    ds.manifest.split_seed = spec.shuffle_seed;
    return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
    Dataset out;
    out.manifest = ds.manifest;
    for (std::size_t i : indices) {
        if (i >= ds.size()) throw DomainError("subset index " + std::to_string(i) + " out of range");
        out.instances.push_back(ds.instances[i]);
        out.split.push_back(i < ds.split.size() ? ds.split[i] : Split::Unassigned);
    }
    return out;
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t h) {
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ULL;
    }
    return h;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    if (ds.instances.empty()) throw DomainError("refusing to save an empty dataset");
    std::filesystem::create_directories(dir);
    const Block& s0 = ds.instances.front().shear;
    const Block& a0 = ds.instances.front().axial;

    std::vector<float> shear, axial;
    shear.reserve(ds.size() * s0.values.size());
    axial.reserve(ds.size() * a0.values.size());
    json labels = json::array(), scenarios = json::array(), seeds = json::array(), splits = json::array(),
         sigmas = json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Instance& inst = ds.instances[i];
        if (inst.shear.channels != s0.channels || inst.shear.length != s0.length ||
            inst.axial.channels != a0.channels || inst.axial.length != a0.length)
            throw DomainError("instance " + std::to_string(i) + " has inconsistent block shapes");
        shear.insert(shear.end(), inst.shear.values.begin(), inst.shear.values.end());
        axial.insert(axial.end(), inst.axial.values.begin(), inst.axial.values.end());
        labels.push_back(inst.label);
        scenarios.push_back(inst.meta.scenario);
        seeds.push_back(inst.meta.seed);
        splits.push_back(to_string(i < ds.split.size() ? ds.split[i] : Split::Unassigned));
        sigmas.push_back({inst.meta.sigma_shear, inst.meta.sigma_axial});
    }
    const auto shear_bytes = detail::encode_f32(shear);
    const auto axial_bytes = detail::encode_f32(axial);

    const auto& m = ds.manifest;
    json manifest = {
        {"format", "shmfcn-dataset"},
        {"format_version", kDatasetFormatVersion},
        {"task", to_string(m.task)},
        {"load_case", to_string(m.load_case)},
        {"V", ds.size()},
        {"V_g", m.vg},
        {"classes", m.classes},
        {"n_stories", m.n_stories},
        {"master_seed", m.master_seed},
        {"snr_db", m.snr_db ? json(*m.snr_db) : json(nullptr)},
        {"split_seed", m.split_seed ? json(*m.split_seed) : json(nullptr)},
        {"layout",
         {{"order", "instance,channel,time"},
          {"dtype", "float32"},
          {"byte_order", "little"},
          {"shear", block_layout(s0, "shear.f32", ds.size(), shear_bytes)},
          {"axial", block_layout(a0, "axial.f32", ds.size(), axial_bytes)}}},
        {"labels", labels},
        {"scenarios", scenarios},
        {"seeds", seeds},
        {"splits", splits},
        {"noise_sigma_m", sigmas},
    };
    detail::write_bytes(dir / "shear.f32", shear_bytes);
    detail::write_bytes(dir / "axial.f32", axial_bytes);
    detail::write_text(dir / "manifest.json", manifest.dump(1) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    json m;
    try {
        m = json::parse(detail::read_text(manifest_path));
    } catch (const json::exception& e) {
        throw DataError("'" + manifest_path.string() + "' is not valid JSON: " + e.what());
    }
    try {
        if (m.at("format") != "shmfcn-dataset") throw DataError("'" + manifest_path.string() + "' is not a dataset manifest");
        if (m.at("format_version").get<int>() != kDatasetFormatVersion)
            throw DataError("dataset format version " + m.at("format_version").dump() + " in '" +
                            manifest_path.string() + "', this build reads version " +
                            std::to_string(kDatasetFormatVersion));

        const std::size_t count = m.at("V").get<std::size_t>();
        auto read_block = [&](const char* key) {
            const json& lay = m.at("layout").at(key);
            const auto path = dir / lay.at("file").get<std::string>();
            const auto bytes = detail::read_bytes(path);
            const std::size_t per = lay.at("channels").get<std::size_t>() * lay.at("length").get<std::size_t>();
            if (bytes.size() != count * per * 4)
                throw DataError("'" + path.string() + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string(count * per * 4) + " (truncated or corrupt)");
            if (detail::hex64(fnv1a64(bytes)) != lay.at("fnv1a64").get<std::string>())
                throw DataError("checksum mismatch for '" + path.string() + "'");
            return std::make_tuple(detail::decode_f32(bytes), lay.at("channels").get<int>(), lay.at("length").get<int>());
        };
        const auto [shear, sc, sl] = read_block("shear");
        const auto [axial, ac, al] = read_block("axial");

        Dataset ds;
        ds.manifest.task = task_from_string(m.at("task").get<std::string>());
        ds.manifest.load_case = load_case_from_string(m.at("load_case").get<std::string>());
        ds.manifest.vg = m.at("V_g").get<int>();
        ds.manifest.classes = m.at("classes").get<int>();
        ds.manifest.n_stories = m.at("n_stories").get<int>();
        ds.manifest.master_seed = m.at("master_seed").get<std::uint64_t>();
        if (!m.at("snr_db").is_null()) ds.manifest.snr_db = m.at("snr_db").get<double>();
        if (!m.at("split_seed").is_null()) ds.manifest.split_seed = m.at("split_seed").get<std::uint64_t>();

        const auto& labels = m.at("labels");
        const auto& scenarios = m.at("scenarios");
        const auto& seeds = m.at("seeds");
        const auto& splits = m.at("splits");
        const auto& sigmas = m.at("noise_sigma_m");
        if (labels.size() != count || scenarios.size() != count || seeds.size() != count || splits.size() != count)
            throw DataError("'" + manifest_path.string() + "': per-instance arrays do not match V");

        const std::size_t sper = static_cast<std::size_t>(sc) * sl, aper = static_cast<std::size_t>(ac) * al;
        ds.instances.resize(count);
        ds.split.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            Instance& inst = ds.instances[i];
            inst.shear = {sc, sl, std::vector<float>(shear.begin() + static_cast<std::ptrdiff_t>(i * sper),
                                                     shear.begin() + static_cast<std::ptrdiff_t>((i + 1) * sper))};
            inst.axial = {ac, al, std::vector<float>(axial.begin() + static_cast<std::ptrdiff_t>(i * aper),
                                                     axial.begin() + static_cast<std::ptrdiff_t>((i + 1) * aper))};
            inst.label = labels[i].get<int>();
            inst.task = ds.manifest.task;
            inst.meta.seed = seeds[i].get<std::uint64_t>();
            inst.meta.scenario = scenarios[i].get<int>();
            inst.meta.load_case = ds.manifest.load_case;
            inst.meta.snr_db = ds.manifest.snr_db;
            if (i < sigmas.size()) {
                inst.meta.sigma_shear = sigmas[i].at(0).get<double>();
                inst.meta.sigma_axial = sigmas[i].at(1).get<double>();
            }
            if (inst.label < 0 || inst.label >= ds.manifest.classes)
                throw DataError("'" + manifest_path.string() + "': label out of range at instance " + std::to_string(i));
            ds.split[i] = split_from_string(splits[i].get<std::string>());
        }
        return ds;
    } catch (const json::exception& e) {
        throw DataError("'" + manifest_path.string() + "' is missing fields: " + e.what());
    } catch (const DomainError& e) {
        throw DataError("'" + manifest_path.string() + "': " + e.what());
    }
}

}  // namespace shmfcn
