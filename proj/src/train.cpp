#include "shmfcn/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "shmfcn/errors.hpp"
#include "shmfcn/rng.hpp"

namespace shmfcn {

using nn::Matrix;
using nn::NetworkConfig;
using nn::NetworkParams;
using nn::Tensor3;

void TrainConfig::validate() const {
    if (max_epochs < 1) throw DomainError("max_epochs must be >= 1");
    if (min_epochs_before_stop < 0) throw DomainError("min_epochs_before_stop must be >= 0");
    if (early_stop_patience < 1) throw DomainError("early_stop_patience must be >= 1");
    if (!(lr_end > 0.0) || lr_start < lr_end) throw DomainError("need lr_start >= lr_end > 0");
    if (!(zeta > 0.0 && zeta < 1.0)) throw DomainError("zeta must be in (0, 1)");
    if (zeta_window < 1) throw DomainError("zeta_window must be >= 1");
    if (minibatch < 2) throw DomainError("minibatch must be >= 2 (batch normalization)");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw DomainError("adam betas must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw DomainError("adam_eps must be > 0");
}

double lr_at(int epoch, const TrainConfig& cfg, int zeta_count) {
    if (epoch < 0 || epoch >= cfg.max_epochs)
        throw DomainError("epoch " + std::to_string(epoch) + " outside [0, max_epochs)");
    const double frac = cfg.max_epochs > 1 ? static_cast<double>(epoch) / (cfg.max_epochs - 1) : 0.0;
    const double base = cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac;
    return base * std::pow(cfg.zeta, zeta_count);
}

template <typename Real>
void adam_update(std::span<Real> params, std::span<const Real> grads, AdamState<Real>& state, double lr,
                 const TrainConfig& cfg) {
    if (grads.size() != params.size()) throw DomainError("adam_update: gradient size mismatch");
    if (state.m.size() != params.size()) state.reset(params.size());
    ++state.step;
    const double b1 = cfg.adam_beta1;
    const double b2 = cfg.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        const double m = b1 * state.m[i] + (1.0 - b1) * g;
        const double v = b2 * state.v[i] + (1.0 - b2) * g * g;
        state.m[i] = static_cast<Real>(m);
        state.v[i] = static_cast<Real>(v);
        params[i] = static_cast<Real>(params[i] - lr * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps));
    }
}

template void adam_update<float>(std::span<float>, std::span<const float>, AdamState<float>&, double,
                                 const TrainConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, AdamState<double>&, double,
                                  const TrainConfig&);

namespace {

// Seed streams derived from TrainConfig::seed.
enum : std::uint64_t { kInitStream = 1, kShuffleStream = 2 };

constexpr std::size_t kInferChunk = 256;

const Block& source_block(const Instance& inst, Direction d) {
    return d == Direction::Shear ? inst.shear : inst.axial;
}

std::vector<Tensor3<float>> gather(std::span<const Instance* const> instances, const NetworkConfig& cfg) {
    std::vector<Tensor3<float>> out;
    out.reserve(cfg.branches.size());
    for (const nn::BranchSpec& br : cfg.branches) {
        Tensor3<float> t(instances.size(), br.channels(), static_cast<std::size_t>(br.length));
        for (std::size_t k = 0; k < instances.size(); ++k) {
            const Block& blk = source_block(*instances[k], br.source);
            if (blk.length != br.length)
                throw DomainError(std::string(to_string(br.source)) + " block has length " +
                                  std::to_string(blk.length) + ", network expects " + std::to_string(br.length));
            for (std::size_t c = 0; c < br.channels(); ++c) {
                const int sensor = br.sensors[c];
                if (sensor > blk.channels)
                    throw DomainError("sensor " + std::to_string(sensor) + " not present in " +
                                      std::string(to_string(br.source)) + " block with " +
                                      std::to_string(blk.channels) + " channels");
                const float* src = blk.values.data() + static_cast<std::size_t>(sensor - 1) * blk.length;
                std::copy(src, src + blk.length, t.row(k, c));
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<const Instance*> pointers(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<const Instance*> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(&ds.instances.at(i));
    return out;
}

// Minibatches over `order`; a trailing batch of one joins its predecessor
// because batch normalization needs two samples.
std::vector<std::span<const std::size_t>> partition(std::span<const std::size_t> order, std::size_t size) {
    std::vector<std::span<const std::size_t>> out;
    for (std::size_t lo = 0; lo < order.size(); lo += size)
        out.push_back(order.subspan(lo, std::min(size, order.size() - lo)));
    if (out.size() > 1 && out.back().size() == 1) {
        const std::size_t start = out[out.size() - 2].data() - order.data();
        out.pop_back();
        out.back() = order.subspan(start);
    }
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::vector<Tensor3<float>> make_batch(const Dataset& ds, std::span<const std::size_t> indices,
                                       const NetworkConfig& cfg) {
    const auto ptrs = pointers(ds, indices);
    return gather(ptrs, cfg);
}

void fit_input_standardization(NetworkParams<float>& params, const Dataset& ds, std::span<const std::size_t> indices) {
    if (indices.empty()) throw DomainError("input standardization needs at least one instance");
    const NetworkConfig& cfg = params.config;
    for (std::size_t b = 0; b < cfg.branches.size(); ++b) {
        const nn::BranchSpec& br = cfg.branches[b];
        auto mean = params.buffer(params.layout.branches[b].input_mean);
        auto scale = params.buffer(params.layout.branches[b].input_scale);
        for (std::size_t c = 0; c < br.channels(); ++c) {
            double s = 0.0, ss = 0.0;
            std::size_t n = 0;
            for (std::size_t i : indices) {
                const Block& blk = source_block(ds.instances.at(i), br.source);
                if (br.sensors[c] > blk.channels) throw DomainError("sensor index exceeds block channels");
                const float* row = blk.values.data() + static_cast<std::size_t>(br.sensors[c] - 1) * blk.length;
                for (int t = 0; t < blk.length; ++t) s += row[t];
                n += static_cast<std::size_t>(blk.length);
            }
            const double m = s / static_cast<double>(n);
            for (std::size_t i : indices) {
                const Block& blk = source_block(ds.instances.at(i), br.source);
                const float* row = blk.values.data() + static_cast<std::size_t>(br.sensors[c] - 1) * blk.length;
                for (int t = 0; t < blk.length; ++t) ss += (row[t] - m) * (row[t] - m);
            }
            const double sd = std::sqrt(ss / static_cast<double>(n));
            mean[c] = static_cast<float>(m);
            scale[c] = sd > 0.0 ? static_cast<float>(1.0 / sd) : 1.0f;
        }
    }
}

TrainState initial_state(const NetworkConfig& net, const Dataset& ds, const TrainConfig& cfg) {
    TrainState st;
    st.params = nn::init_params<float>(net, derive_seed(cfg.seed, {kInitStream}));
    fit_input_standardization(st.params, ds, ds.indices_of(Split::Train));
    st.best = st.params;
    st.adam.reset(st.params.weights.size());
    return st;
}

int argmax_lowest(std::span<const double> p) {
    if (p.empty()) throw DomainError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t g = 1; g < p.size(); ++g)
        if (p[g] > p[best]) best = g;
    return static_cast<int>(best);
}

namespace {

std::vector<Prediction> predict_pointers(const NetworkParams<float>& params, std::span<const Instance* const> ptrs,
                                         unsigned threads) {
    std::vector<Prediction> out;
    out.reserve(ptrs.size());
    for (std::size_t lo = 0; lo < ptrs.size(); lo += kInferChunk) {
        const auto chunk = ptrs.subspan(lo, std::min(kInferChunk, ptrs.size() - lo));
        const auto x = gather(chunk, params.config);
        const Matrix<float> probs = nn::model_infer<float>(params, x, threads);
        for (std::size_t r = 0; r < probs.rows; ++r) {
            Prediction p;
            p.probabilities.assign(probs.row(r), probs.row(r) + probs.cols);
            p.label = argmax_lowest(p.probabilities);
            out.push_back(std::move(p));
        }
    }
    return out;
}

double mean_loss(const std::vector<Prediction>& preds, std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        total -= std::log(std::max(preds[i].probabilities.at(static_cast<std::size_t>(labels[i])), nn::kLogClamp));
    return preds.empty() ? 0.0 : total / static_cast<double>(preds.size());
}

std::vector<int> labels_of(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(ds.instances.at(i).label);
    return out;
}

}  // namespace

std::vector<Prediction> predict_batch(const NetworkParams<float>& params, const Dataset& ds,
                                      std::span<const std::size_t> indices, unsigned threads) {
    const auto ptrs = pointers(ds, indices);
    return predict_pointers(params, ptrs, threads);
}

Prediction predict(const NetworkParams<float>& params, const Instance& instance, unsigned threads) {
    const Instance* ptr = &instance;
    return predict_pointers(params, std::span<const Instance* const>(&ptr, 1), threads).front();
}

EvalReport make_report(int classes, std::span<const int> targets, std::span<const int> predictions) {
    if (targets.size() != predictions.size()) throw DomainError("targets and predictions differ in length");
    EvalReport r;
    r.classes = classes;
    r.confusion.assign(static_cast<std::size_t>(classes), std::vector<long>(static_cast<std::size_t>(classes), 0));
    long hits = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const int t = targets[i];
        const int p = predictions[i];
        if (t < 0 || t >= classes || p < 0 || p >= classes) throw DomainError("class index out of range");
        ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
        if (t == p) ++hits;
    }
    r.targets.assign(targets.begin(), targets.end());
    r.predictions.assign(predictions.begin(), predictions.end());
    r.accuracy = targets.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(targets.size());
    for (int g = 0; g < classes; ++g) {
        long row = 0;
        for (long v : r.confusion[static_cast<std::size_t>(g)]) row += v;
        r.recall.push_back(row > 0 ? static_cast<double>(r.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(g)]) /
                                         static_cast<double>(row)
                                   : std::nan(""));
    }
    return r;
}

EvalReport evaluate(const NetworkParams<float>& params, const Dataset& ds, Split split, unsigned threads) {
    const auto idx = ds.indices_of(split);
    const auto preds = predict_batch(params, ds, idx, threads);
    const auto targets = labels_of(ds, idx);
    std::vector<int> labels;
    for (const auto& p : preds) labels.push_back(p.label);
    EvalReport r = make_report(params.config.classes, targets, labels);
    r.loss = mean_loss(preds, targets);
    return r;
}

double random_guess_baseline(Task task, int n_stories) { return 1.0 / class_count(task, n_stories); }

TrainResult train(const NetworkConfig& net, const Dataset& ds, const TrainConfig& cfg, unsigned threads,
                  const TrainCallbacks& callbacks, std::optional<TrainState> resume) {
    cfg.validate();
    net.validate();
    if (ds.manifest.classes != net.classes)
        throw DomainError("dataset has " + std::to_string(ds.manifest.classes) + " classes, network has " +
                          std::to_string(net.classes));
    const auto train_idx = ds.indices_of(Split::Train);
    const auto val_idx = ds.indices_of(Split::Val);
    if (train_idx.empty() || val_idx.empty()) throw DomainError("training needs non-empty train and val splits");
    if (train_idx.size() < 2) throw DomainError("training split needs at least 2 instances (batch normalization)");

    TrainState st = resume ? std::move(*resume) : initial_state(net, ds, cfg);
    if (st.params.layout.n_weights != nn::ParamLayout::build(net).n_weights)
        throw DomainError("resume state does not match the network configuration");

    const auto val_ptrs = pointers(ds, val_idx);
    const auto val_labels = labels_of(ds, val_idx);
    nn::ForwardCache<float> cache;
    std::vector<float> grad;

    for (int e = st.next_epoch; e < cfg.max_epochs && !st.finished; ++e) {
        EpochRecord rec;
        rec.epoch = e;
        rec.zeta_count = st.zeta_count;
        rec.lr = lr_at(e, cfg, st.zeta_count);

        std::vector<std::size_t> order = train_idx;
        Rng rng(derive_seed(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(e)}));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (const auto batch : partition(order, static_cast<std::size_t>(cfg.minibatch))) {
            const auto ptrs = pointers(ds, batch);
            const auto x = gather(ptrs, net);
            const auto labels = labels_of(ds, batch);
            const Matrix<float> probs = nn::model_forward<float>(st.params, x, nn::Mode::Train, &cache, threads);
            const auto ce = nn::model_backward<float>(st.params, cache, labels, grad, nullptr, threads);
            adam_update<float>(st.params.weights, grad, st.adam, rec.lr, cfg);
            ++st.params.version;
            loss_sum += ce.loss * static_cast<double>(batch.size());
            rec.clamped_logs += ce.clamped;
            for (std::size_t r = 0; r < probs.rows; ++r) {
                const float* row = probs.row(r);
                const auto best = std::max_element(row, row + probs.cols) - row;
                if (best == labels[r]) ++correct;
            }
        }
        rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_idx.size());

        const auto val_preds = predict_pointers(st.params, val_ptrs, threads);
        rec.val_loss = mean_loss(val_preds, val_labels);
        std::size_t val_hits = 0;
        for (std::size_t i = 0; i < val_preds.size(); ++i)
            if (val_preds[i].label == val_labels[i]) ++val_hits;
        rec.val_accuracy = static_cast<double>(val_hits) / static_cast<double>(val_preds.size());

        if (callbacks.on_epoch_end) callbacks.on_epoch_end(rec);
        st.history.epochs.push_back(rec);

        if (rec.val_loss < st.best_val_loss) {
            st.best_val_loss = rec.val_loss;
            st.val_bad_streak = 0;
            st.best = st.params;
            st.history.best_epoch = e;
        } else {
            ++st.val_bad_streak;
        }
        if (rec.train_loss < st.best_train_loss) {
            st.best_train_loss = rec.train_loss;
            st.train_stale_epochs = 0;
        } else {
            ++st.train_stale_epochs;
        }
        st.next_epoch = e + 1;
        if (e + 1 >= cfg.min_epochs_before_stop) {
            if (st.val_bad_streak >= cfg.early_stop_patience) {
                st.finished = true;
                st.history.stop_reason = "early stop at epoch " + std::to_string(e) + ": validation loss not improved " +
                                         std::to_string(st.val_bad_streak) + " times in a row";
            } else if (st.train_stale_epochs >= cfg.zeta_window) {
                ++st.zeta_count;
                st.train_stale_epochs = 0;
            }
        }
        if (callbacks.on_state) callbacks.on_state(st);
    }
    if (!st.finished && st.next_epoch >= cfg.max_epochs) {
        st.finished = true;
        st.history.stop_reason = "reached max_epochs";
    }
    TrainResult out;
    out.params = st.best;
    out.history = st.history;
    out.state = std::move(st);
    return out;
}

std::string history_csv(const TrainHistory& history) {
    std::ostringstream os;
    os << "epoch,lr,train_loss,val_loss,train_accuracy,val_accuracy,zeta_count,clamped_logs\n";
    for (const EpochRecord& r : history.epochs)
        os << r.epoch << ',' << fmt(r.lr) << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ','
           << fmt(r.train_accuracy) << ',' << fmt(r.val_accuracy) << ',' << r.zeta_count << ',' << r.clamped_logs
           << '\n';
    return os.str();
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    detail::write_text(path, history_csv(history));
}

TrainHistory read_history_csv(const std::filesystem::path& path) {
    std::istringstream in(detail::read_text(path));
    std::string line;
    if (!std::getline(in, line) || line.rfind("epoch,lr,", 0) != 0)
        throw DataError("'" + path.string() + "' is not a training history CSV");
    TrainHistory h;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        EpochRecord r;
        char c[7];
        std::istringstream ls(line);
        ls >> r.epoch >> c[0] >> r.lr >> c[1] >> r.train_loss >> c[2] >> r.val_loss >> c[3] >> r.train_accuracy >>
            c[4] >> r.val_accuracy >> c[5] >> r.zeta_count >> c[6] >> r.clamped_logs;
        if (!ls) throw DataError("'" + path.string() + "': malformed row " + std::to_string(lineno));
        h.epochs.push_back(r);
    }
    return h;
}

void write_confusion_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ostringstream os;
    os << "target";
    for (int g = 0; g < report.classes; ++g) os << ",pred_" << g;
    os << '\n';
    for (int t = 0; t < report.classes; ++t) {
        os << t;
        for (long v : report.confusion[static_cast<std::size_t>(t)]) os << ',' << v;
        os << '\n';
    }
    detail::write_text(path, os.str());
}

void write_eval_summary(const EvalReport& report, Task task, int n_stories, Split split,
                        const std::filesystem::path& path) {
    std::ostringstream os;
    os << "task: " << to_string(task) << '\n'
       << "split: " << to_string(split) << '\n'
       << "instances: " << report.total() << '\n'
       << "accuracy: " << fmt(report.accuracy) << '\n'
       << "loss: " << fmt(report.loss) << '\n'
       << "random_guess_baseline: " << fmt(random_guess_baseline(task, n_stories)) << '\n';
    for (int g = 0; g < report.classes; ++g) os << "recall_" << g << ": " << fmt(report.recall[g]) << '\n';
    detail::write_text(path, os.str());
}

}  // namespace shmfcn
