#include "shmfcn/config.hpp"

#include <cstdlib>
#include <set>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "shmfcn/errors.hpp"

namespace shmfcn {

using nlohmann::json;

namespace {

// Walks one JSON object, remembering which keys were read.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key '" + join(it.key()) + "'");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError("'" + join(key) + "' has the wrong type");
        }
    }
    void get_optional(const char* key, std::optional<double>& out) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        if (it->is_null()) {
            out.reset();
            return;
        }
        if (!it->is_number()) throw ConfigError("'" + join(key) + "' must be a number or null");
        out = it->get<double>();
    }
    template <typename Fn>
    void object(const char* key, Fn&& fn) {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        Obj sub(*it, join(key));
        fn(sub);
        sub.finish();
    }
    const json* raw(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }
    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <typename E, typename Parse>
void get_enum(Obj& o, const char* key, E& out, Parse parse) {
    std::string v;
    o.get(key, v);
    if (v.empty()) return;
    try {
        out = parse(v);
    } catch (const std::exception& e) {
        throw ConfigError("'" + o.join(key) + "': " + e.what());
    }
}

json branch_to_json(const nn::BranchSpec& b) { return {{"source", to_string(b.source)}, {"sensors", b.sensors}}; }

json to_json(const RunConfig& c) {
    json branches = json::array();
    for (const auto& b : c.network.branches) branches.push_back(branch_to_json(b));
    const auto& f = c.dataset.split.fractions;
    return {
        {"building",
         {{"n_stories", c.building.n_stories},
          {"floor_mass_t", c.building.floor_mass_t},
          {"shear_stiffness_kn_m", c.building.shear_stiffness_kn_m},
          {"axial_stiffness_kn_m", c.building.axial_stiffness_kn_m},
          {"damage_factor", c.building.damage_factor},
          {"column_slenderness", c.building.column_slenderness}}},
        {"sensors",
         {{"shear_rate_hz", c.sensors.shear_rate_hz},
          {"axial_rate_hz", c.sensors.axial_rate_hz},
          {"shear_window_s", c.sensors.shear_window_s},
          {"axial_window_s", c.sensors.axial_window_s}}},
        {"simulation", {{"rate_hz", c.simulation_rate_hz}, {"band_variance_kn2", c.band_variance_kn2}}},
        {"dataset",
         {{"task", to_string(c.dataset.task)},
          {"load_case", to_string(c.dataset.load_case)},
          {"vg", c.dataset.vg},
          {"snr_db", c.dataset.snr_db ? json(*c.dataset.snr_db) : json(nullptr)},
          {"split",
           {{"train", {f[0][0], f[0][1]}},
            {"val", {f[1][0], f[1][1]}},
            {"test", {f[2][0], f[2][1]}},
            {"shuffle_seed", c.dataset.split.shuffle_seed}}}}},
        {"network",
         {{"branches", branches},
          {"kernels", c.network.kernels},
          {"filters", c.network.filters},
          {"bn_epsilon", c.network.bn_epsilon},
          {"bn_momentum", c.network.bn_momentum}}},
        {"train",
         {{"max_epochs", c.train.max_epochs},
          {"min_epochs_before_stop", c.train.min_epochs_before_stop},
          {"early_stop_patience", c.train.early_stop_patience},
          {"lr_start", c.train.lr_start},
          {"lr_end", c.train.lr_end},
          {"zeta", c.train.zeta},
          {"zeta_window", c.train.zeta_window},
          {"minibatch", c.train.minibatch},
          {"adam_beta1", c.train.adam_beta1},
          {"adam_beta2", c.train.adam_beta2},
          {"adam_eps", c.train.adam_eps}}},
        {"paths", {{"dataset", c.paths.dataset}, {"checkpoint", c.paths.checkpoint}, {"reports", c.paths.reports}}},
        {"seed", c.seed},
        {"threads", c.threads},
    };
}

std::array<int, 2> fraction(Obj& o, const char* key, std::array<int, 2> def) {
    o.get(key, def);
    return def;
}

}  // namespace

int DatasetSpec::effective_vg() const {
    if (vg > 0) return vg;
    return load_case == LoadCase::Sinusoidal ? 512 : 128;
}

GenerationSettings RunConfig::generation() const {
    GenerationSettings g;
    g.building = building;
    g.sensors = sensors;
    g.simulation_rate_hz = simulation_rate_hz;
    g.band_variance_kn2 = band_variance_kn2;
    return g;
}

nn::NetworkConfig RunConfig::resolved_network() const {
    nn::NetworkConfig net = network;
    net.classes = class_count(dataset.task, building.n_stories);
    for (auto& b : net.branches)
        b.length = static_cast<int>(b.source == Direction::Shear ? sensors.shear_samples() : sensors.axial_samples());
    return net;
}

void RunConfig::validate() const {
    try {
        generation().validate();
        if (dataset.vg < 0) throw DomainError("dataset.vg must be >= 1 (or 0 for the load-case default)");
        const nn::NetworkConfig net = resolved_network();
        net.validate();
        for (const auto& b : net.branches)
            for (int s : b.sensors)
                if (s > building.n_stories)
                    throw DomainError("sensor " + std::to_string(s) + " exceeds n_stories " +
                                      std::to_string(building.n_stories));
        train.validate();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
}

RunConfig parse_run_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
    }
    RunConfig c;
    {
        Obj o(root, "");
        o.object("building", [&](Obj& b) {
            b.get("n_stories", c.building.n_stories);
            b.get("floor_mass_t", c.building.floor_mass_t);
            b.get("shear_stiffness_kn_m", c.building.shear_stiffness_kn_m);
            b.get("axial_stiffness_kn_m", c.building.axial_stiffness_kn_m);
            b.get("damage_factor", c.building.damage_factor);
            b.get("column_slenderness", c.building.column_slenderness);
        });
        o.object("sensors", [&](Obj& s) {
            s.get("shear_rate_hz", c.sensors.shear_rate_hz);
            s.get("axial_rate_hz", c.sensors.axial_rate_hz);
            s.get("shear_window_s", c.sensors.shear_window_s);
            s.get("axial_window_s", c.sensors.axial_window_s);
        });
        o.object("simulation", [&](Obj& s) {
            s.get("rate_hz", c.simulation_rate_hz);
            s.get("band_variance_kn2", c.band_variance_kn2);
        });
        o.object("dataset", [&](Obj& d) {
            get_enum(d, "task", c.dataset.task, task_from_string);
            get_enum(d, "load_case", c.dataset.load_case, load_case_from_string);
            d.get("vg", c.dataset.vg);
            d.get_optional("snr_db", c.dataset.snr_db);
            d.object("split", [&](Obj& s) {
                auto& f = c.dataset.split.fractions;
                f[0] = fraction(s, "train", f[0]);
                f[1] = fraction(s, "val", f[1]);
                f[2] = fraction(s, "test", f[2]);
                s.get("shuffle_seed", c.dataset.split.shuffle_seed);
            });
        });
        o.object("network", [&](Obj& n) {
            if (const json* br = n.raw("branches")) {
                if (!br->is_array()) throw ConfigError("'network.branches' must be an array");
                c.network.branches.clear();
                for (std::size_t i = 0; i < br->size(); ++i) {
                    Obj b((*br)[i], "network.branches[" + std::to_string(i) + "]");
                    nn::BranchSpec spec;
                    get_enum(b, "source", spec.source, direction_from_string);
                    b.get("sensors", spec.sensors);
                    b.finish();
                    c.network.branches.push_back(spec);
                }
            }
            n.get("kernels", c.network.kernels);
            n.get("filters", c.network.filters);
            n.get("bn_epsilon", c.network.bn_epsilon);
            n.get("bn_momentum", c.network.bn_momentum);
        });
        o.object("train", [&](Obj& t) {
            t.get("max_epochs", c.train.max_epochs);
            t.get("min_epochs_before_stop", c.train.min_epochs_before_stop);
            t.get("early_stop_patience", c.train.early_stop_patience);
            t.get("lr_start", c.train.lr_start);
            t.get("lr_end", c.train.lr_end);
            t.get("zeta", c.train.zeta);
            t.get("zeta_window", c.train.zeta_window);
            t.get("minibatch", c.train.minibatch);
            t.get("adam_beta1", c.train.adam_beta1);
            t.get("adam_beta2", c.train.adam_beta2);
            t.get("adam_eps", c.train.adam_eps);
        });
        o.object("paths", [&](Obj& p) {
            p.get("dataset", c.paths.dataset);
            p.get("checkpoint", c.paths.checkpoint);
            p.get("reports", c.paths.reports);
        });
        o.get("seed", c.seed);
        o.get("threads", c.threads);
        o.finish();
    }
    c.train.seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = detail::read_text(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    try {
        return parse_run_config(text);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string dump_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

void apply_env_overrides(RunConfig& cfg, const EnvLookup& lookup) {
    auto number = [&](const char* name, auto& out) {
        const auto v = lookup(name);
        if (!v) return;
        try {
            std::size_t used = 0;
            const unsigned long long x = std::stoull(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing characters");
            out = static_cast<std::remove_reference_t<decltype(out)>>(x);
        } catch (const std::exception&) {
            throw ConfigError(std::string(name) + "='" + *v + "' is not a non-negative integer");
        }
    };
    number("SHMFCN_SEED", cfg.seed);
    number("SHMFCN_THREADS", cfg.threads);
    number("SHMFCN_VG", cfg.dataset.vg);
    number("SHMFCN_MAX_EPOCHS", cfg.train.max_epochs);
    if (auto v = lookup("SHMFCN_DATASET")) cfg.paths.dataset = *v;
    if (auto v = lookup("SHMFCN_CHECKPOINT")) cfg.paths.checkpoint = *v;
    if (auto v = lookup("SHMFCN_REPORTS")) cfg.paths.reports = *v;
    cfg.train.seed = cfg.seed;
    cfg.validate();
}

std::uint64_t training_hash(const RunConfig& cfg) {
    json j = to_json(cfg);
    j.erase("paths");
    j.erase("threads");
    const std::string s = j.dump();
    return fnv1a64(std::as_bytes(std::span(s.data(), s.size())));
}

}  // namespace shmfcn
