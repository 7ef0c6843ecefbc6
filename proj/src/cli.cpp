#include "shmfcn/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "shmfcn/checkpoint.hpp"
#include "shmfcn/errors.hpp"
#include "shmfcn/excitation.hpp"

namespace shmfcn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v, const char* spec = "%.10g") {
    char buf[40];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string table_csv(const std::vector<int>& scenarios, const std::vector<std::vector<double>>& rows) {
    std::ostringstream os;
    os << "mode";
    for (int s : scenarios) os << ",scenario_" << s;
    os << '\n';
    for (std::size_t m = 0; m < rows.size(); ++m) {
        os << m + 1;
        for (double v : rows[m]) os << ',' << fmt(v);
        os << '\n';
    }
    return os.str();
}

constexpr int kCheckpointEvery = 25;

std::uint64_t hash_text(const std::string& s) { return fnv1a64(std::as_bytes(std::span(s.data(), s.size()))); }

void check_dataset_matches(const RunConfig& cfg, const Dataset& ds, const fs::path& dir) {
    const auto& m = ds.manifest;
    if (m.task != cfg.dataset.task || m.load_case != cfg.dataset.load_case)
        throw DataError("dataset '" + dir.string() + "' is " + std::string(to_string(m.task)) + "/" +
                        std::string(to_string(m.load_case)) + ", configuration asks for " +
                        std::string(to_string(cfg.dataset.task)) + "/" +
                        std::string(to_string(cfg.dataset.load_case)));
    if (m.n_stories != cfg.building.n_stories || m.classes != class_count(cfg.dataset.task, cfg.building.n_stories))
        throw DataError("dataset '" + dir.string() + "' does not match the configured building");
}

}  // namespace

int exit_code_for_current_exception() {
    try {
        throw;
    } catch (const ConfigError&) {
        return kConfigError;
    } catch (const DomainError&) {
        return kConfigError;
    } catch (const DataError&) {
        return kDataError;
    } catch (const NumericError&) {
        return kNumericError;
    } catch (...) {
        return kFailure;
    }
}

EigenTable eigen_table(const BuildingConfig& building, std::vector<int> scenarios) {
    building.validate();
    if (scenarios.empty())
        for (int g = 0; g <= building.n_stories; ++g) scenarios.push_back(g);
    EigenTable t;
    t.scenarios = scenarios;
    const auto n = static_cast<std::size_t>(building.n_stories);
    t.shear.assign(n, std::vector<double>(scenarios.size()));
    t.axial.assign(n, std::vector<double>(scenarios.size()));
    for (std::size_t j = 0; j < scenarios.size(); ++j) {
        const DamageScenario sc{scenarios[j]};
        const auto fs_ = eigenfrequencies(assemble_chain(building, Direction::Shear, sc));
        const auto fa = eigenfrequencies(assemble_chain(building, Direction::Axial, sc));
        for (std::size_t m = 0; m < n; ++m) {
            t.shear[m][j] = fs_[m];
            t.axial[m][j] = fa[m];
        }
    }
    return t;
}

EigenTable cmd_eigen(const RunConfig& cfg, const std::vector<int>& scenarios, const fs::path& out_dir,
                     std::ostream& log) {
    const EigenTable t = eigen_table(cfg.building, scenarios);
    ensure_dir(out_dir);
    detail::write_text(out_dir / "eigen_shear.csv", table_csv(t.scenarios, t.shear));
    detail::write_text(out_dir / "eigen_axial.csv", table_csv(t.scenarios, t.axial));
    log << "shear eigenfrequencies [Hz]\n" << table_csv(t.scenarios, t.shear);
    log << "wrote " << (out_dir / "eigen_shear.csv").string() << " and " << (out_dir / "eigen_axial.csv").string()
        << '\n';
    return t;
}

Dataset cmd_generate(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
    cfg.validate();
    Dataset ds = build_dataset(cfg.generation(), cfg.dataset.task, cfg.dataset.load_case, cfg.dataset.effective_vg(),
                               cfg.dataset.snr_db, cfg.seed, cfg.threads);
    ds = split_dataset(std::move(ds), cfg.dataset.split);
    save_dataset(ds, out_dir);
    log << "task=" << to_string(ds.manifest.task) << " load_case=" << to_string(ds.manifest.load_case)
        << " V_g=" << ds.manifest.vg << '\n';
    log << "V=" << ds.size() << ", " << ds.indices_of(Split::Train).size() << '/' << ds.indices_of(Split::Val).size()
        << '/' << ds.indices_of(Split::Test).size() << '\n';
    log << "wrote " << out_dir.string() << '\n';
    return ds;
}

TrainResult cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& checkpoint_dir, bool resume,
                      std::ostream& log) {
    cfg.validate();
    const Dataset ds = load_dataset(dataset_dir);
    check_dataset_matches(cfg, ds, dataset_dir);
    const nn::NetworkConfig net = cfg.resolved_network();
    const std::uint64_t hash = training_hash(cfg);

    std::optional<TrainState> state;
    if (resume) {
        Checkpoint ck = load_checkpoint(checkpoint_dir, true);
        if (ck.meta.training_hash != hash)
            throw ConfigError("resume refused: checkpoint '" + checkpoint_dir.string() + "' was trained with config hash " +
                              detail::hex64(ck.meta.training_hash) + ", current config hash is " +
                              detail::hex64(hash));
        state = std::move(ck.state);
        log << "resuming at epoch " << state->next_epoch << '\n';
    }
    TrainCallbacks cb;
    cb.on_epoch_end = [&](EpochRecord& r) {
        if (r.epoch % 25 == 0)
            log << "epoch " << r.epoch << " lr=" << fmt(r.lr, "%.3e") << " train_loss=" << fmt(r.train_loss, "%.4f")
                << " val_loss=" << fmt(r.val_loss, "%.4f") << " val_acc=" << fmt(r.val_accuracy, "%.4f") << '\n'
                << std::flush;
    };
    auto save = [&](const TrainState& st) {
        CheckpointMeta meta;
        meta.task = ds.manifest.task;
        meta.load_case = ds.manifest.load_case;
        meta.n_stories = ds.manifest.n_stories;
        meta.seed = cfg.seed;
        meta.training_hash = hash;
        meta.best_epoch = st.history.best_epoch;
        meta.epochs_completed = static_cast<int>(st.history.epochs.size());
        meta.history_digest = history_digest(st.history);
        save_checkpoint(checkpoint_dir, st.best, meta, &st);
    };
    cb.on_state = [&](const TrainState& st) {
        if (st.next_epoch % kCheckpointEvery == 0) save(st);
    };
    TrainResult res = train(net, ds, cfg.train, cfg.threads, cb, std::move(state));
    save(res.state);

    const auto& best = res.history.epochs.at(static_cast<std::size_t>(res.history.best_epoch));
    log << res.history.stop_reason << '\n';
    log << "best epoch " << res.history.best_epoch << ", validation accuracy " << fmt(best.val_accuracy, "%.4f")
        << '\n';
    log << "wrote " << checkpoint_dir.string() << '\n';
    return res;
}

EvalReport cmd_eval(const fs::path& checkpoint_dir, const fs::path& dataset_dir, Split split, const fs::path& out_dir,
                    unsigned threads, std::ostream& log) {
    const Checkpoint ck = load_checkpoint(checkpoint_dir);
    const Dataset ds = load_dataset(dataset_dir);
    if (ck.meta.task != ds.manifest.task || ck.params.config.classes != ds.manifest.classes)
        throw DataError("checkpoint '" + checkpoint_dir.string() + "' (" + std::string(to_string(ck.meta.task)) +
                        ") is incompatible with dataset '" + dataset_dir.string() + "' (" +
                        std::string(to_string(ds.manifest.task)) + ")");
    const EvalReport r = evaluate(ck.params, ds, split, threads);
    ensure_dir(out_dir);
    const std::string tag(to_string(split));
    write_confusion_csv(r, out_dir / ("confusion_" + tag + ".csv"));
    write_eval_summary(r, ds.manifest.task, ds.manifest.n_stories, split, out_dir / ("summary_" + tag + ".txt"));
    log << "split " << tag << ": " << r.total() << " instances, accuracy " << fmt(r.accuracy, "%.4f")
        << " (random guess " << fmt(random_guess_baseline(ds.manifest.task, ds.manifest.n_stories), "%.4f") << ")\n";
    return r;
}

Prediction cmd_predict(const fs::path& checkpoint_dir, const fs::path& instance_dir, unsigned threads,
                       std::ostream& out) {
    const Checkpoint ck = load_checkpoint(checkpoint_dir);
    const Dataset ds = load_dataset(instance_dir);
    if (ds.size() != 1)
        throw DataError("'" + instance_dir.string() + "' holds " + std::to_string(ds.size()) +
                        " instances, expected exactly one");
    const Prediction p = predict(ck.params, ds.instances.front(), threads);
    out << "label: " << p.label << '\n' << "probabilities:";
    for (double v : p.probabilities) out << ' ' << fmt(v, "%.9g");
    out << '\n';
    return p;
}

void cmd_export_instance(const fs::path& dataset_dir, Split split, std::size_t index, const fs::path& out_dir) {
    const Dataset ds = load_dataset(dataset_dir);
    const auto idx = ds.indices_of(split);
    if (index >= idx.size())
        throw DomainError("split " + std::string(to_string(split)) + " has " + std::to_string(idx.size()) +
                          " instances, index " + std::to_string(index) + " out of range");
    const std::size_t pick[] = {idx[index]};
    save_dataset(subset(ds, pick), out_dir);
}

std::vector<std::string> cmd_report(const RunConfig& cfg, const fs::path& checkpoint_dir, const fs::path& eval_dir,
                                    const std::optional<fs::path>& dataset_dir, const fs::path& out_dir,
                                    std::ostream& log) {
    const fs::path history_path = checkpoint_dir / "history.csv";
    std::vector<fs::path> confusions;
    if (fs::is_directory(eval_dir))
        for (const auto& e : fs::directory_iterator(eval_dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("confusion_", 0) == 0 && e.path().extension() == ".csv") confusions.push_back(e.path());
        }
    std::sort(confusions.begin(), confusions.end());
    std::vector<std::string> missing;
    if (!fs::exists(history_path)) missing.push_back(history_path.string());
    if (confusions.empty()) missing.push_back((eval_dir / "confusion_<split>.csv").string());
    if (!missing.empty()) {
        std::string msg = "report inputs missing; expected:";
        for (const auto& m : missing) msg += "\n  " + m;
        throw DataError(msg);
    }

    ensure_dir(out_dir);
    std::vector<std::pair<std::string, std::string>> files;  // name, content
    const TrainHistory h = read_history_csv(history_path);
    {
        std::ostringstream loss, acc;
        loss << "epoch,train_loss,val_loss\n";
        acc << "epoch,train_accuracy,val_accuracy\n";
        for (const auto& r : h.epochs) {
            loss << r.epoch << ',' << fmt(r.train_loss, "%.17g") << ',' << fmt(r.val_loss, "%.17g") << '\n';
            acc << r.epoch << ',' << fmt(r.train_accuracy, "%.17g") << ',' << fmt(r.val_accuracy, "%.17g") << '\n';
        }
        files.emplace_back("loss_curve.csv", loss.str());
        files.emplace_back("accuracy_curve.csv", acc.str());
    }
    for (const auto& c : confusions) {
        files.emplace_back(c.filename().string(), detail::read_text(c));
        std::string summary = c.filename().string();
        summary.replace(0, std::string("confusion_").size(), "summary_");
        summary.replace(summary.size() - 4, 4, ".txt");
        if (fs::exists(eval_dir / summary)) files.emplace_back(summary, detail::read_text(eval_dir / summary));
    }
    if (dataset_dir) {
        const Dataset ds = load_dataset(*dataset_dir);
        const double dt = 1.0 / cfg.sensors.shear_rate_hz;
        std::vector<PowerSpectrum> spectra;
        std::vector<int> scen;
        for (int g = 0; g <= ds.manifest.n_stories; ++g) {
            const auto it = std::find_if(ds.instances.begin(), ds.instances.end(),
                                         [&](const Instance& i) { return i.meta.scenario == g; });
            if (it == ds.instances.end()) continue;
            const Block& b = it->shear;
            std::vector<double> top(b.values.end() - b.length, b.values.end());
            spectra.push_back(compute_psd(top, dt));
            scen.push_back(g);
        }
        if (!spectra.empty()) {
            std::ostringstream os;
            os << "frequency_hz";
            for (int g : scen) os << ",scenario_" << g;
            os << '\n';
            for (std::size_t k = 0; k < spectra.front().frequency.size(); ++k) {
                os << fmt(spectra.front().frequency[k]);
                for (const auto& s : spectra) os << ',' << fmt(s.density[k]);
                os << '\n';
            }
            files.emplace_back("psd_shear_top.csv", os.str());
        }
    }

    json manifest = {{"format", "shmfcn-report"}, {"files", json::array()}};
    std::vector<std::string> names;
    for (const auto& [name, content] : files) {
        detail::write_text(out_dir / name, content);
        manifest["files"].push_back({{"file", name}, {"fnv1a64", detail::hex64(hash_text(content))}});
        names.push_back(name);
    }
    detail::write_text(out_dir / "report.json", manifest.dump(2) + "\n");
    log << "wrote " << names.size() << " files to " << out_dir.string() << '\n';
    return names;
}

}  // namespace shmfcn::cli
