#include "nexus/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "nexus/error.hpp"
#include "nexus/loss.hpp"
#include "nexus/patches.hpp"

namespace nexus {

std::size_t TrainConfig::scaled(std::size_t count) const {
    const double s = static_cast<double>(count) * desk_scale;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s)));
}

void write_train_log(const TrainLog& log, std::ostream& out) {
    out << "phase,epoch,train_loss,val_loss,lr,seconds\n";
    for (const TrainLog::Row& r : log.rows) {
        std::ostringstream os;
        os.precision(12);
        os << r.phase << "," << r.epoch << "," << r.train_loss << "," << r.val_loss << ","
           << r.lr << "," << r.seconds;
        out << os.str() << "\n";
    }
}

namespace {

constexpr std::size_t kClasses = 5;

struct Pool {
    std::vector<PatchPair> patches;
    std::vector<std::vector<std::size_t>> by_class; // indices per label

    explicit Pool(std::vector<PatchPair> p) : patches(std::move(p)), by_class(kClasses) {
        for (std::size_t i = 0; i < patches.size(); ++i)
            by_class[static_cast<std::size_t>(*patches[i].label)].push_back(i);
    }
};

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.below(i)]);
}

/// Class-interleaved epoch order: every batch_size-long window holds
/// near-equal per-class counts while queues last.
std::vector<std::size_t> epoch_order(const Pool& pool, Rng& rng) {
    std::vector<std::vector<std::size_t>> queues = pool.by_class;
    for (auto& q : queues) shuffle(q, rng);
    std::vector<std::size_t> heads(queues.size(), 0);
    std::vector<std::size_t> order;
    order.reserve(pool.patches.size());
    bool progressed = true;
    while (progressed) {
        progressed = false;
        for (std::size_t c = 0; c < queues.size(); ++c) {
            if (heads[c] >= queues[c].size()) continue;
            order.push_back(queues[c][heads[c]++]);
            progressed = true;
        }
    }
    return order;
}

struct BatchTensors {
    Tensor big, small;
    std::vector<int> targets;
};

BatchTensors gather(const Pool& pool, const std::vector<std::size_t>& order, std::size_t begin,
                    std::size_t end) {
    const std::size_t B = end - begin;
    BatchTensors bt{Tensor({B, 4, 33, 33}), Tensor({B, 4, 15, 15}), {}};
    bt.targets.reserve(B);
    for (std::size_t i = 0; i < B; ++i) {
        const PatchPair& p = pool.patches[order[begin + i]];
        std::copy(p.big.data(), p.big.data() + p.big.size(), bt.big.data() + i * p.big.size());
        std::copy(p.small.data(), p.small.data() + p.small.size(),
                  bt.small.data() + i * p.small.size());
        bt.targets.push_back(*p.label);
    }
    return bt;
}

double validation_loss(NexusModel& model, const Pool& val_pool, const LossConfig& loss_cfg,
                       std::size_t batch_size) {
    if (val_pool.patches.empty()) return 0.0;
    std::vector<std::size_t> order(val_pool.patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t at = 0; at < order.size(); at += batch_size) {
        const std::size_t end = std::min(order.size(), at + batch_size);
        BatchTensors bt = gather(val_pool, order, at, end);
        const Tensor probs = model.forward_batch(bt.big, bt.small, Mode::infer);
        total += nll_loss(probs, bt.targets, loss_cfg).loss * static_cast<double>(end - at);
        counted += end - at;
    }
    return total / static_cast<double>(counted);
}

std::vector<ParamRef> active_params(NexusModel& model, bool output_only) {
    std::vector<ParamRef> refs;
    for (RegistryEntry& e : model.registry()) {
        if (!e.ref.trainable) continue;
        if (output_only && !e.output_layer) continue;
        refs.push_back(e.ref);
    }
    return refs;
}

} // namespace

TrainLog train(NexusModel& model, const std::vector<VolumeSet>& train_vols,
               const std::vector<VolumeSet>& val_vols, const TrainConfig& cfg,
               const std::string& checkpoint_path) {
    if (train_vols.empty()) throw ConfigError("train: no training volumes");
    for (const VolumeSet& v : train_vols)
        if (!v.labels) throw ConfigError("train: training volumes must carry labels");
    for (const VolumeSet& v : val_vols)
        if (!v.labels) throw ConfigError("train: validation volumes must carry labels");
    if (cfg.batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (cfg.phase2_weights.size() != kClasses)
        throw ConfigError("train: phase2_weights must list 5 classes");
    for (double w : cfg.phase2_weights)
        if (!(w > 0.0)) throw ConfigError("train: weights must be positive");

    model.check_dims();

    const Rng root(cfg.seed);
    Rng dropout_rng = root.child(4);
    Rng shuffle_rng = root.child(5);

    SamplerSpec p1_spec{SamplerMode::balanced, cfg.scaled_phase1_patches(),
                        root.child(1).seed()};
    SamplerSpec p2_spec{SamplerMode::balanced, cfg.scaled_phase2_patches(),
                        root.child(2).seed()};

    Pool phase1_pool(sample_patches(train_vols, p1_spec));
    Pool phase2_pool(sample_patches(train_vols, p2_spec));
    Pool val_pool(val_vols.empty()
                      ? std::vector<PatchPair>{}
                      : sample_patches(val_vols, {SamplerMode::balanced,
                                                  std::max<std::size_t>(1, cfg.val_patches),
                                                  root.child(3).seed()}));

    LrSchedule schedule{cfg.lr_start, cfg.lr_end,
                        cfg.lr_span ? cfg.lr_span : cfg.phase1_epochs + cfg.phase2_epochs};
    Sgd sgd(cfg.optimizer, cfg.momentum);

    TrainLog log;
    std::size_t global_epoch = 0;

    auto run_phase = [&](int phase, Pool& pool, std::size_t epochs, const LossConfig& loss_cfg,
                         bool output_only) {
        std::vector<ParamRef> params = active_params(model, output_only);
        for (std::size_t epoch = 0; epoch < epochs; ++epoch, ++global_epoch) {
            const auto t0 = std::chrono::steady_clock::now();
            const double lr = schedule.at(global_epoch);
            const std::vector<std::size_t> order = epoch_order(pool, shuffle_rng);
            double loss_sum = 0.0;
            std::size_t loss_count = 0;
            for (std::size_t at = 0; at + 2 <= order.size(); at += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), at + cfg.batch_size);
                if (end - at < 2) break; // batch-norm needs two samples
                BatchTensors bt = gather(pool, order, at, end);
                sgd.begin_step(params);
                const Tensor probs =
                    model.forward_batch(bt.big, bt.small, Mode::train, &dropout_rng);
                LossResult res = nll_loss(probs, bt.targets, loss_cfg);
                if (!std::isfinite(res.loss))
                    throw NumericError("training diverged: non-finite loss in phase " +
                                       std::to_string(phase));
                model.backward(res.grad_logits);
                sgd.apply_step(params, lr);
                loss_sum += res.loss * static_cast<double>(end - at);
                loss_count += end - at;
            }
            TrainLog::Row row;
            row.phase = phase;
            row.epoch = epoch;
            row.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
            row.val_loss = validation_loss(model, val_pool, loss_cfg, cfg.batch_size);
            row.lr = lr;
            row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count();
            log.rows.push_back(row);
            if (!checkpoint_path.empty()) save_checkpoint(model, checkpoint_path);
        }
    };

    run_phase(1, phase1_pool, cfg.phase1_epochs, LossConfig{}, /*output_only=*/false);

    // Phase 2: only the output layer moves; batch-norm running stats are
    // frozen so every non-output tensor stays bit-identical.
    model.set_bn_stats_frozen(true);
    LossConfig weighted{cfg.phase2_weights};
    run_phase(2, phase2_pool, cfg.phase2_epochs, weighted, /*output_only=*/true);
    model.set_bn_stats_frozen(false);

    return log;
}

// ------------------------------------------------------------- config files

namespace {

bool parse_bool_mode(const std::string& v, SgdMode& mode) {
    if (v == "plain") mode = SgdMode::plain;
    else if (v == "classical") mode = SgdMode::classical;
    else if (v == "nesterov") mode = SgdMode::nesterov;
    else return false;
    return true;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(trim(item)));
    return out;
}

} // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig rc;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "phase1.patches") rc.train.phase1_patches = std::stoull(value);
            else if (key == "phase1.epochs") rc.train.phase1_epochs = std::stoull(value);
            else if (key == "phase2.patches") rc.train.phase2_patches = std::stoull(value);
            else if (key == "phase2.epochs") rc.train.phase2_epochs = std::stoull(value);
            else if (key == "phase2.weights") rc.train.phase2_weights = parse_list(value);
            else if (key == "batch_size") rc.train.batch_size = std::stoull(value);
            else if (key == "optimizer.mode") {
                if (!parse_bool_mode(value, rc.train.optimizer))
                    throw ConfigError("optimizer.mode must be plain, classical or nesterov");
            } else if (key == "optimizer.momentum") rc.train.momentum = std::stod(value);
            else if (key == "optimizer.lr_start") rc.train.lr_start = std::stod(value);
            else if (key == "optimizer.lr_end") rc.train.lr_end = std::stod(value);
            else if (key == "optimizer.lr_span") rc.train.lr_span = std::stoull(value);
            else if (key == "seed") rc.train.seed = std::stoull(value);
            else if (key == "desk_scale") rc.train.desk_scale = std::stod(value);
            else if (key == "val_patches") rc.train.val_patches = std::stoull(value);
            else if (key == "model.width_scale") rc.model.width_scale = std::stod(value);
            else if (key == "model.drop_first") rc.model.drop_first = std::stod(value);
            else if (key == "model.drop_second") rc.model.drop_second = std::stod(value);
            else if (key == "model.drop_final") rc.model.drop_final = std::stod(value);
            else if (key == "model.init_std") rc.model.init_std = std::stod(value);
            else if (key == "model.classifier_std") rc.model.classifier_std = std::stod(value);
            else if (key == "model.output_bias") rc.model.output_bias = std::stod(value);
            else if (key == "model.bn_eps") rc.model.bn_eps = std::stod(value);
            else if (key == "model.bn_momentum") rc.model.bn_momentum = std::stod(value);
            else if (key == "threads") rc.threads = static_cast<unsigned>(std::stoul(value));
            else throw ConfigError("unknown config key '" + key + "' on line " +
                                   std::to_string(lineno));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad value for '" +
                              key + "'");
        }
    }
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_run_config(os.str());
}

} // namespace nexus
