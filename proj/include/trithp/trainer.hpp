#pragma once

// Adam training of the Tri-THP objective with gradient clipping, dev-set
// model selection and early stopping.
//
// Every random stream is derived from (seed, epoch, ...) rather than carried
// from step to step, so a run resumed from a checkpoint continues exactly as
// the uninterrupted run would have.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trithp/adam.hpp"
#include "trithp/checkpoint.hpp"
#include "trithp/dataset.hpp"
#include "trithp/evaluator.hpp"
#include "trithp/intensity.hpp"
#include "trithp/model.hpp"

namespace trithp {

struct TrainConfig {
    ModelConfig model;
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    AdamConfig adam;
    double clip_norm = 5.0;  // <= 0 disables clipping
    IntegrationMethod train_method = IntegrationMethod::MonteCarlo;
    std::size_t mc_samples = 20;
    IntegrationMethod eval_method = IntegrationMethod::Trapezoid;
    std::size_t patience = 10;  // 0 disables early stopping
    std::uint64_t seed = 0;
    ObjectiveWeights weights;
    /// Initial fusion weights; defaults to 1/3 each.
    std::optional<std::array<double, 3>> fusion_init;
    std::set<std::string> frozen;
    std::string train_path;
    std::string dev_path;
    std::string out_dir;
    bool rescale_times = false;

    void validate() const {
        model.validate();
        adam.validate();
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
        if (std::isnan(clip_norm)) throw ConfigError("clip_norm must be a number");
        if (epochs > 0 && model.num_types < 1) throw ConfigError("model.num_types must be set");
    }

    /// Freezes lambda1 and lambda3 at 0 so only the PRI branch contributes.
    void use_primary_only() {
        fusion_init = std::array<double, 3>{0.0, 1.0, 0.0};
        frozen.insert("fusion.lambda1");
        frozen.insert("fusion.lambda3");
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    nlohmann::json j = {{"model", to_json(c.model)},
                        {"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"lr", c.adam.lr},
                        {"beta1", c.adam.beta1},
                        {"beta2", c.adam.beta2},
                        {"adam_eps", c.adam.eps},
                        {"clip_norm", c.clip_norm},
                        {"method", method_name(c.train_method)},
                        {"mc_samples", c.mc_samples},
                        {"eval_method", method_name(c.eval_method)},
                        {"patience", c.patience},
                        {"seed", c.seed},
                        {"weights", {{"likelihood", c.weights.likelihood}, {"type", c.weights.type}, {"time", c.weights.time}}},
                        {"frozen", c.frozen},
                        {"train", c.train_path},
                        {"dev", c.dev_path},
                        {"out", c.out_dir},
                        {"rescale_times", c.rescale_times}};
    if (c.fusion_init) j["fusion_init"] = *c.fusion_init;
    return j;
}

/// Reads a config object; absent keys keep the values already in `c`.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
    auto take = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    try {
        if (j.contains("model")) c.model = model_config_from_json(j.at("model"), c.model);
        take("epochs", c.epochs);
        take("batch_size", c.batch_size);
        take("lr", c.adam.lr);
        take("beta1", c.adam.beta1);
        take("beta2", c.adam.beta2);
        take("adam_eps", c.adam.eps);
        take("clip_norm", c.clip_norm);
        if (j.contains("method")) c.train_method = parse_method(j.at("method").get<std::string>());
        take("mc_samples", c.mc_samples);
        if (j.contains("eval_method")) c.eval_method = parse_method(j.at("eval_method").get<std::string>());
        take("patience", c.patience);
        take("seed", c.seed);
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            c.weights.likelihood = w.value("likelihood", c.weights.likelihood);
            c.weights.type = w.value("type", c.weights.type);
            c.weights.time = w.value("time", c.weights.time);
        }
        if (j.contains("fusion_init")) c.fusion_init = j.at("fusion_init").get<std::array<double, 3>>();
        if (j.contains("frozen")) c.frozen = j.at("frozen").get<std::set<std::string>>();
        if (j.value("ablation", std::string{}) == "pri_only") c.use_primary_only();
        take("train", c.train_path);
        take("dev", c.dev_path);
        take("out", c.out_dir);
        take("rescale_times", c.rescale_times);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid training config: ") + e.what());
    }
    return c;
}

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_objective = 0.0;
    double dev_ll = 0.0;  // per event
    double dev_accuracy = 0.0;
    double dev_rmse = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

inline std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,objective,dev_ll,dev_acc,dev_rmse\n";
    for (const auto& r : history)
        os << r.epoch << ',' << r.train_objective << ',' << r.dev_ll << ',' << r.dev_accuracy << ',' << r.dev_rmse
           << '\n';
    return os.str();
}

/// Sum of per-sequence objectives over the unpadded rows of `batch`. Row r
/// uses random stream batch.ids[r], so the result matches evaluating each
/// sequence on its own.
inline Tensor objective(const PaddedBatch& batch, const TriThpModel& model, const ObjectiveOptions& opt) {
    if (batch.batch_size() == 0) throw DataError("objective over an empty batch");
    Tensor total;
    for (std::size_t r = 0; r < batch.batch_size(); ++r) {
        Tensor term = sequence_objective(batch.sequence(r), model, opt, batch.ids[r]).total;
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

/// Everything needed to continue a run.
struct TrainingState {
    TriThpModel model;
    AdamOptimizer optimizer;
    std::size_t epochs_done = 0;
    std::vector<EpochRecord> history;
    TriThpModel best_model;
    double best_dev_ll = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_since_best = 0;
    bool stopped = false;
    bool numeric_failure = false;  // stopped because of a NaN/inf, not by early stopping
    std::string stop_reason;

    TrainingState(TriThpModel m, const TrainConfig& cfg)
        : model(std::move(m)),
          optimizer(model.named_parameters(), cfg.adam, cfg.frozen),
          best_model(model.clone()) {}
};

/// Fresh model and optimizer for `cfg` (num_types must be set).
inline TrainingState init_training(const TrainConfig& cfg) {
    cfg.validate();
    TriThpModel model = TriThpModel::create(cfg.model, derive_seed(cfg.seed, 0));
    if (cfg.fusion_init) {
        for (std::size_t b = 0; b < 3; ++b) model.fusion[b].mutable_values()[0] = (*cfg.fusion_init)[b];
    }
    return TrainingState(std::move(model), cfg);
}

/// Runs one epoch over `train`, then scores `dev` and updates model selection.
inline void train_one_epoch(TrainingState& st, const Dataset& train, const Dataset& dev, const TrainConfig& cfg) {
    if (st.stopped) return;
    const std::size_t epoch = st.epochs_done + 1;
    const auto batches = make_batches(train, cfg.batch_size, derive_seed(cfg.seed, 1, epoch));
    auto params = st.optimizer.parameters();
    double epoch_objective = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        ObjectiveOptions opt;
        opt.method = cfg.train_method;
        opt.mc_samples = cfg.mc_samples;
        opt.seed = derive_seed(cfg.seed, 2 + epoch, b);
        opt.training = true;
        opt.weights = cfg.weights;
        st.model.zero_grad();
        Tensor loss;
        try {
            loss = objective(batches[b], st.model, opt);
        } catch (const NumericError& e) {
            st.stopped = true;
            st.numeric_failure = true;
            st.stop_reason = std::string("numeric failure in epoch ") + std::to_string(epoch) + ": " + e.what();
            return;
        }
        if (!std::isfinite(loss.item())) {
            st.stopped = true;
            st.numeric_failure = true;
            st.stop_reason = "objective became non-finite in epoch " + std::to_string(epoch);
            return;
        }
        epoch_objective += loss.item();
        backward(loss);
        if (cfg.clip_norm > 0.0) clip_grad_norm(params, cfg.clip_norm);
        try {
            st.optimizer.step();
        } catch (const NumericError& e) {
            st.stopped = true;
            st.numeric_failure = true;
            st.stop_reason = std::string("epoch ") + std::to_string(epoch) + " aborted: " + e.what();
            return;
        }
    }
    st.model.zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_objective = epoch_objective;
    if (!dev.sequences.empty()) {
        const EvalReport r = evaluate(st.model, dev, cfg.eval_method, cfg.mc_samples, derive_seed(cfg.seed, 3));
        rec.dev_ll = r.ll_per_event;
        rec.dev_accuracy = r.accuracy;
        rec.dev_rmse = r.rmse;
    }
    st.history.push_back(rec);
    st.epochs_done = epoch;
    if (dev.sequences.empty() || rec.dev_ll > st.best_dev_ll) {
        st.best_dev_ll = rec.dev_ll;
        st.best_epoch = epoch;
        st.best_model.assign_from(st.model);
        st.epochs_since_best = 0;
    } else if (cfg.patience > 0 && ++st.epochs_since_best >= cfg.patience) {
        st.stopped = true;
        st.stop_reason = "early stop: no dev improvement for " + std::to_string(cfg.patience) + " epochs";
    }
}

using EpochCallback = std::function<void(const TrainingState&)>;

/// Trains until cfg.epochs epochs are done or training stops early.
inline void train(TrainingState& st, const Dataset& train_ds, const Dataset& dev_ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}) {
    if (train_ds.sequences.empty() && cfg.epochs > st.epochs_done) throw DataError("training set is empty");
    while (!st.stopped && st.epochs_done < cfg.epochs) {
        train_one_epoch(st, train_ds, dev_ds, cfg);
        if (on_epoch && !st.history.empty() && st.history.back().epoch == st.epochs_done) on_epoch(st);
    }
}

inline nlohmann::json training_state_to_json(const TrainingState& st, const TrainConfig& cfg) {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& r : st.history) {
        hist.push_back({{"epoch", r.epoch},
                        {"objective", r.train_objective},
                        {"dev_ll", r.dev_ll},
                        {"dev_acc", r.dev_accuracy},
                        {"dev_rmse", r.dev_rmse}});
    }
    return {{"format", "trithp-training-state"},
            {"version", 1},
            {"config", to_json(cfg)},
            {"model", model_to_json(st.model)},
            {"best_model", model_to_json(st.best_model)},
            {"optimizer", st.optimizer.state_to_json()},
            {"epochs_done", st.epochs_done},
            {"history", std::move(hist)},
            {"best_dev_ll", st.best_dev_ll == -std::numeric_limits<double>::infinity() ? nlohmann::json(nullptr)
                                                                                       : nlohmann::json(st.best_dev_ll)},
            {"best_epoch", st.best_epoch},
            {"epochs_since_best", st.epochs_since_best},
            {"stopped", st.stopped},
            {"numeric_failure", st.numeric_failure},
            {"stop_reason", st.stop_reason}};
}

inline TrainingState training_state_from_json(const nlohmann::json& j, const TrainConfig& cfg) {
    if (j.value("format", "") != "trithp-training-state") throw DataError("not a trithp training-state file");
    TrainingState st(model_from_json(j.at("model")), cfg);
    st.best_model = model_from_json(j.at("best_model"));
    st.optimizer.state_from_json(j.at("optimizer"));
    st.epochs_done = j.at("epochs_done").get<std::size_t>();
    for (const auto& r : j.at("history")) {
        st.history.push_back({r.at("epoch").get<std::size_t>(), r.at("objective").get<double>(),
                              r.at("dev_ll").get<double>(), r.at("dev_acc").get<double>(),
                              r.at("dev_rmse").get<double>()});
    }
    st.best_dev_ll = j.at("best_dev_ll").is_null() ? -std::numeric_limits<double>::infinity()
                                                   : j.at("best_dev_ll").get<double>();
    st.best_epoch = j.at("best_epoch").get<std::size_t>();
    st.epochs_since_best = j.at("epochs_since_best").get<std::size_t>();
    st.stopped = j.at("stopped").get<bool>();
    st.numeric_failure = j.value("numeric_failure", false);
    st.stop_reason = j.at("stop_reason").get<std::string>();
    return st;
}

}  // namespace trithp
