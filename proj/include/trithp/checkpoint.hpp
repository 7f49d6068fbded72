#pragma once

// JSON model checkpoints. Doubles are written in shortest round-trip form,
// so save followed by load reproduces every parameter bit for bit.

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "trithp/errors.hpp"
#include "trithp/model.hpp"

namespace trithp {

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"num_types", c.num_types}, {"layers", c.layers},         {"heads", c.heads},
            {"model_dim", c.model_dim}, {"key_dim", c.key_dim},       {"value_dim", c.value_dim},
            {"hidden_dim", c.hidden_dim}, {"dropout", c.dropout},     {"layer_norm_eps", c.layer_norm_eps}};
}

/// Missing keys keep their defaults.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
    auto take = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("num_types", c.num_types);
    take("layers", c.layers);
    take("heads", c.heads);
    take("model_dim", c.model_dim);
    take("key_dim", c.key_dim);
    take("value_dim", c.value_dim);
    take("hidden_dim", c.hidden_dim);
    take("dropout", c.dropout);
    take("layer_norm_eps", c.layer_norm_eps);
    return c;
}

inline nlohmann::json parameters_to_json(const TriThpModel& model) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& [name, t] : model.named_parameters()) {
        params.push_back({{"name", name},
                          {"rows", t.rows()},
                          {"cols", t.cols()},
                          {"data", std::vector<double>(t.values().begin(), t.values().end())}});
    }
    return params;
}

/// Overwrites the model's parameters; names and shapes must match exactly.
inline void parameters_from_json(TriThpModel& model, const nlohmann::json& params) {
    auto named = model.named_parameters();
    if (!params.is_array() || params.size() != named.size()) {
        throw DataError("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                        std::to_string(named.size()));
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& p = params[i];
        auto& [name, t] = named[i];
        if (p.at("name").get<std::string>() != name || p.at("rows").get<std::size_t>() != t.rows() ||
            p.at("cols").get<std::size_t>() != t.cols()) {
            throw DataError("checkpoint parameter " + std::to_string(i) + " (" + p.at("name").get<std::string>() +
                            ") does not match model parameter " + name + " " + t.shape().str());
        }
        const auto data = p.at("data").get<std::vector<double>>();
        if (data.size() != t.size()) throw DataError("checkpoint parameter " + name + " has the wrong length");
        std::copy(data.begin(), data.end(), t.mutable_values().begin());
    }
}

inline nlohmann::json model_to_json(const TriThpModel& model) {
    return {{"format", "trithp-model"}, {"version", 1}, {"config", to_json(model.config)},
            {"parameters", parameters_to_json(model)}};
}

inline TriThpModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "trithp-model") throw DataError("not a trithp model checkpoint");
    TriThpModel model = TriThpModel::create(model_config_from_json(j.at("config")), 0);
    parameters_from_json(model, j.at("parameters"));
    return model;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j, int indent = -1) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(indent) << "\n";
    if (!out) throw DataError("write failed for " + path.string());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
}

inline void save_model(const std::filesystem::path& path, const TriThpModel& model) {
    write_json_file(path, model_to_json(model));
}

inline TriThpModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

}  // namespace trithp
