#include "shmfcn/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "shmfcn/errors.hpp"

namespace shmfcn {

using nlohmann::json;

namespace {

json network_json(const nn::NetworkConfig& n) {
    json branches = json::array();
    for (const auto& b : n.branches)
        branches.push_back({{"source", to_string(b.source)}, {"sensors", b.sensors}, {"length", b.length}});
    return {{"branches", branches},       {"kernels", n.kernels},         {"filters", n.filters},
            {"classes", n.classes},       {"bn_epsilon", n.bn_epsilon}, {"bn_momentum", n.bn_momentum}};
}

nn::NetworkConfig network_from(const json& j) {
    nn::NetworkConfig n;
    n.branches.clear();
    for (const auto& b : j.at("branches")) {
        nn::BranchSpec s;
        s.source = direction_from_string(b.at("source").get<std::string>());
        s.sensors = b.at("sensors").get<std::vector<int>>();
        s.length = b.at("length").get<int>();
        n.branches.push_back(s);
    }
    n.kernels = j.at("kernels").get<std::array<int, nn::kLayers>>();
    n.filters = j.at("filters").get<int>();
    n.classes = j.at("classes").get<int>();
    n.bn_epsilon = j.at("bn_epsilon").get<double>();
    n.bn_momentum = j.at("bn_momentum").get<double>();
    return n;
}

std::vector<float> concat(const std::vector<float>& a, const std::vector<float>& b) {
    std::vector<float> out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

json write_f32(const std::filesystem::path& dir, const std::string& name, const std::vector<float>& values) {
    const auto bytes = detail::encode_f32(values);
    detail::write_bytes(dir / name, bytes);
    return {{"file", name}, {"count", values.size()}, {"fnv1a64", detail::hex64(fnv1a64(bytes))}};
}

std::vector<float> read_f32(const std::filesystem::path& dir, const json& entry) {
    const auto name = entry.at("file").get<std::string>();
    const auto count = entry.at("count").get<std::size_t>();
    const auto bytes = detail::read_bytes(dir / name);
    if (bytes.size() != 4 * count)
        throw DataError("'" + (dir / name).string() + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                        std::to_string(4 * count) + " (truncated or corrupt)");
    if (detail::hex64(fnv1a64(bytes)) != entry.at("fnv1a64").get<std::string>())
        throw DataError("'" + (dir / name).string() + "' fails its checksum");
    return detail::decode_f32(bytes);
}

void unpack(nn::NetworkParams<float>& p, const std::vector<float>& flat) {
    if (flat.size() != p.layout.n_weights + p.layout.n_buffers)
        throw DataError("parameter file size does not match the network layout");
    p.weights.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(p.layout.n_weights));
    p.buffers.assign(flat.begin() + static_cast<std::ptrdiff_t>(p.layout.n_weights), flat.end());
}

}  // namespace

std::string history_digest(const TrainHistory& history) {
    const std::string s = history_csv(history);
    return detail::hex64(fnv1a64(std::as_bytes(std::span(s.data(), s.size()))));
}

void save_checkpoint(const std::filesystem::path& dir, const nn::NetworkParams<float>& params,
                     const CheckpointMeta& meta, const TrainState* state) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create checkpoint directory '" + dir.string() + "': " + ec.message());
    json j = {
        {"format", "shmfcn-checkpoint"},
        {"format_version", kCheckpointFormatVersion},
        {"network", network_json(params.config)},
        {"task", to_string(meta.task)},
        {"load_case", to_string(meta.load_case)},
        {"n_stories", meta.n_stories},
        {"seed", meta.seed},
        {"training_hash", detail::hex64(meta.training_hash)},
        {"best_epoch", meta.best_epoch},
        {"epochs_completed", meta.epochs_completed},
        {"history_digest", meta.history_digest},
        {"layout",
         {{"dtype", "float32"},
          {"byte_order", "little"},
          {"order",
           "trainable: per branch, per layer [conv weights (out,in,kernel), conv bias, bn scale, bn shift], "
           "head theta (features,classes), head bias; then buffers: per branch [input mean, input scale, "
           "per layer running mean, running var]"},
          {"n_weights", params.layout.n_weights},
          {"n_buffers", params.layout.n_buffers}}},
        {"params", write_f32(dir, "params.f32", concat(params.weights, params.buffers))},
    };
    if (state) {
        write_history_csv(state->history, dir / "history.csv");
        j["resume"] = {
            {"last", write_f32(dir, "last.f32", concat(state->params.weights, state->params.buffers))},
            {"adam", write_f32(dir, "adam.f32", concat(state->adam.m, state->adam.v))},
            {"adam_step", state->adam.step},
            {"next_epoch", state->next_epoch},
            {"zeta_count", state->zeta_count},
            {"best_val_loss", state->best_val_loss},
            {"val_bad_streak", state->val_bad_streak},
            {"best_train_loss", state->best_train_loss},
            {"train_stale_epochs", state->train_stale_epochs},
            {"finished", state->finished},
            {"stop_reason", state->history.stop_reason},
            {"best_epoch", state->history.best_epoch},
        };
    }
    detail::write_text(dir / "checkpoint.json", j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, bool with_state) {
    const auto path = dir / "checkpoint.json";
    json j;
    try {
        j = json::parse(detail::read_text(path));
    } catch (const json::parse_error& e) {
        throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "shmfcn-checkpoint")
            throw DataError("'" + path.string() + "' is not a checkpoint manifest");
        if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
            throw DataError("'" + path.string() + "' has unsupported format_version");
        Checkpoint c;
        const nn::NetworkConfig net = network_from(j.at("network"));
        c.params.config = net;
        c.params.layout = nn::ParamLayout::build(net);
        unpack(c.params, read_f32(dir, j.at("params")));
        c.meta.task = task_from_string(j.at("task").get<std::string>());
        c.meta.load_case = load_case_from_string(j.at("load_case").get<std::string>());
        c.meta.n_stories = j.at("n_stories").get<int>();
        c.meta.seed = j.at("seed").get<std::uint64_t>();
        c.meta.training_hash = std::stoull(j.at("training_hash").get<std::string>(), nullptr, 16);
        c.meta.best_epoch = j.at("best_epoch").get<int>();
        c.meta.epochs_completed = j.at("epochs_completed").get<int>();
        c.meta.history_digest = j.at("history_digest").get<std::string>();
        if (with_state) {
            if (!j.contains("resume")) throw DataError("'" + path.string() + "' holds no resumable train state");
            const json& r = j.at("resume");
            TrainState st;
            st.best = c.params;
            st.params.config = net;
            st.params.layout = c.params.layout;
            unpack(st.params, read_f32(dir, r.at("last")));
            const auto adam = read_f32(dir, r.at("adam"));
            const std::size_t n = c.params.layout.n_weights;
            if (adam.size() != 2 * n) throw DataError("optimizer state size does not match the network layout");
            st.adam.m.assign(adam.begin(), adam.begin() + static_cast<std::ptrdiff_t>(n));
            st.adam.v.assign(adam.begin() + static_cast<std::ptrdiff_t>(n), adam.end());
            st.adam.step = r.at("adam_step").get<std::uint64_t>();
            st.next_epoch = r.at("next_epoch").get<int>();
            st.zeta_count = r.at("zeta_count").get<int>();
            st.best_val_loss = r.at("best_val_loss").is_null() ? INFINITY : r.at("best_val_loss").get<double>();
            st.val_bad_streak = r.at("val_bad_streak").get<int>();
            st.best_train_loss =
                r.at("best_train_loss").is_null() ? INFINITY : r.at("best_train_loss").get<double>();
            st.train_stale_epochs = r.at("train_stale_epochs").get<int>();
            st.finished = r.at("finished").get<bool>();
            st.history = read_history_csv(dir / "history.csv");
            st.history.stop_reason = r.at("stop_reason").get<std::string>();
            st.history.best_epoch = r.at("best_epoch").get<int>();
            c.state = std::move(st);
        }
        return c;
    } catch (const json::exception& e) {
        throw DataError("'" + path.string() + "' is malformed: " + e.what());
    } catch (const DomainError& e) {
        throw DataError("'" + path.string() + "' is inconsistent: " + e.what());
    }
}

}  // namespace shmfcn
