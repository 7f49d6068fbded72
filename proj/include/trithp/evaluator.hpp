#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trithp/dataset.hpp"
#include "trithp/intensity.hpp"
#include "trithp/model.hpp"

namespace trithp {

struct EvalReport {
    double ll_total = 0.0;
    double ll_per_event = 0.0;     // nats
    double ll_per_sequence = 0.0;  // nats
    double accuracy = 0.0;         // over events i >= 2
    double rmse = 0.0;             // dataset time units, events i >= 2
    std::size_t events = 0;
    std::size_t sequences = 0;
    std::size_t predictions = 0;
    IntegrationMethod method = IntegrationMethod::Trapezoid;
    double time_scale = 1.0;
};

/// Predictions for events 2..N of one sequence: entry i-1 targets event i.
struct SequencePredictions {
    std::vector<double> times;
    std::vector<std::size_t> types;
};

struct PredictionMetrics {
    double accuracy = 0.0;
    double rmse = 0.0;
    std::size_t count = 0;
};

/// Type accuracy and time RMSE of `preds` against events 2..N of each
/// sequence.
inline PredictionMetrics prediction_metrics(const std::vector<EventSequence>& seqs,
                                            const std::vector<SequencePredictions>& preds) {
    if (seqs.size() != preds.size()) throw DimensionError("prediction_metrics: one prediction set per sequence");
    std::size_t hits = 0, count = 0;
    double sq = 0.0;
    for (std::size_t s = 0; s < seqs.size(); ++s) {
        const auto& seq = seqs[s];
        const auto& p = preds[s];
        if (seq.size() < 2) continue;
        if (p.times.size() != seq.size() - 1 || p.types.size() != seq.size() - 1) {
            throw DimensionError("prediction_metrics: sequence " + std::to_string(s) + " needs " +
                                 std::to_string(seq.size() - 1) + " predictions");
        }
        for (std::size_t i = 1; i < seq.size(); ++i) {
            hits += p.types[i - 1] == seq.types[i] ? 1 : 0;
            const double d = seq.times[i] - p.times[i - 1];
            sq += d * d;
            ++count;
        }
    }
    PredictionMetrics m;
    m.count = count;
    if (count > 0) {
        m.accuracy = static_cast<double>(hits) / static_cast<double>(count);
        m.rmse = std::sqrt(sq / static_cast<double>(count));
    }
    return m;
}

/// Model predictions for events 2..N: made from h(t_{i-1}).
inline SequencePredictions model_predictions(const Tensor& hidden, const PredictionHead& head) {
    const PredictionTensors pt = predict_all(hidden, head);
    const std::size_t n = hidden.rows(), k = pt.probabilities.cols();
    SequencePredictions out;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        out.times.push_back(pt.time(i, 0));
        out.types.push_back(argmax_first(pt.probabilities.values().subspan(i * k, k)));
    }
    return out;
}

/// Log-likelihood, type accuracy and time RMSE on `ds`, in inference mode.
/// Monte Carlo uses streams derived from `seed` and the sequence index.
inline EvalReport evaluate(const TriThpModel& model, const Dataset& ds, IntegrationMethod method,
                           std::size_t mc_samples = 20, std::uint64_t seed = 0) {
    if (ds.sequences.empty()) throw DataError("evaluate: dataset '" + ds.name + "' is empty");
    NoGradGuard no_grad;
    EvalReport r;
    r.method = method;
    r.time_scale = ds.time_scale;
    std::vector<SequencePredictions> preds;
    preds.reserve(ds.sequences.size());
    for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
        const auto& seq = ds.sequences[s];
        const ForwardResult fwd = tri_thp_forward(seq, model);
        SeededRng rng(derive_seed(seed, s, 2));
        r.ll_total += log_likelihood(seq, fwd.hidden, model.intensity, method, mc_samples, &rng).ll.item();
        r.events += seq.size();
        preds.push_back(model_predictions(fwd.hidden, model.prediction));
    }
    r.sequences = ds.sequences.size();
    r.ll_per_event = r.ll_total / static_cast<double>(r.events);
    r.ll_per_sequence = r.ll_total / static_cast<double>(r.sequences);
    const PredictionMetrics pm = prediction_metrics(ds.sequences, preds);
    r.accuracy = pm.accuracy;
    r.rmse = pm.rmse;
    r.predictions = pm.count;
    return r;
}

inline nlohmann::json to_json(const EvalReport& r, const std::string& dataset_name = "") {
    return {{"dataset", dataset_name},
            {"method", method_name(r.method)},
            {"ll_total", r.ll_total},
            {"ll_per_event", r.ll_per_event},
            {"ll_per_sequence", r.ll_per_sequence},
            {"accuracy", r.accuracy},
            {"rmse", r.rmse},
            {"events", r.events},
            {"sequences", r.sequences},
            {"predictions", r.predictions},
            {"time_scale", r.time_scale},
            {"times_rescaled", r.time_scale != 1.0}};
}

inline std::string eval_csv_header() {
    return "dataset,method,ll_per_event,ll_per_sequence,ll_total,accuracy,rmse,events,sequences";
}

inline std::string eval_csv_row(const EvalReport& r, const std::string& dataset_name) {
    std::ostringstream os;
    os.precision(17);
    os << dataset_name << ',' << method_name(r.method) << ',' << r.ll_per_event << ',' << r.ll_per_sequence << ','
       << r.ll_total << ',' << r.accuracy << ',' << r.rmse << ',' << r.events << ',' << r.sequences;
    return os.str();
}

}  // namespace trithp
