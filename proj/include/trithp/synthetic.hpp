#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "trithp/dataset.hpp"
#include "trithp/hawkes.hpp"

namespace trithp {

struct SyntheticOptions {
    std::size_t num_sequences = 1000;
    std::size_t min_length = 20;
    std::size_t max_length = 100;
    double horizon = 16.0;
    std::uint64_t seed = 0;
    std::size_t max_attempts = 10000;  // per sequence, before giving up on the length band
};

/// Default generator: K types, mu_k = 0.2, alpha_jk = 0.8 / K, beta = 1.
/// The branching radius is 0.8 and, with horizon 16, lengths average ~60.
inline HawkesParams default_synthetic_params(std::size_t k = 5) {
    return HawkesParams::uniform(k, 0.2, 0.8 / static_cast<double>(k), 1.0);
}

struct SyntheticSplits {
    Dataset train, dev, test;
};

/// Simulates `num_sequences` sequences. Sequence s uses its own stream seeded
/// with seed + s and is re-simulated from that stream until its length falls
/// inside [min_length, max_length]. Splits are 70/10/20 in generation order.
inline SyntheticSplits generate_synthetic(const HawkesParams& params, const SyntheticOptions& opt) {
    params.require_stationary();
    if (opt.min_length < 2 || opt.min_length > opt.max_length) {
        throw ConfigError("synthetic length band must satisfy 2 <= min_length <= max_length");
    }
    const std::size_t n = opt.num_sequences;
    const std::size_t n_train = n * 70 / 100;
    const std::size_t n_dev = n * 10 / 100;
    SyntheticSplits out;
    for (Dataset* d : {&out.train, &out.dev, &out.test}) d->num_types = params.dim();
    out.train.name = "train";
    out.dev.name = "dev";
    out.test.name = "test";
    for (std::size_t s = 0; s < n; ++s) {
        SeededRng rng(opt.seed + s);
        EventSequence seq;
        std::size_t attempt = 0;
        do {
            if (++attempt > opt.max_attempts) {
                throw ConfigError("could not simulate a sequence with length in [" + std::to_string(opt.min_length) +
                                  ", " + std::to_string(opt.max_length) + "]; adjust the horizon");
            }
            seq = simulate_thinning(params, opt.horizon, rng);
        } while (seq.size() < opt.min_length || seq.size() > opt.max_length);
        Dataset& target = s < n_train ? out.train : (s < n_train + n_dev ? out.dev : out.test);
        target.sequences.push_back(std::move(seq));
    }
    return out;
}

inline nlohmann::json synthetic_manifest(const HawkesParams& params, const SyntheticOptions& opt,
                                         const SyntheticSplits& splits) {
    auto split_info = [](const Dataset& d, const char* file) {
        return nlohmann::json{{"file", file}, {"sequences", d.sequences.size()}, {"events", d.total_events()}};
    };
    return {
        {"generator", "hawkes-exponential-thinning"},
        {"params", {{"K", params.dim()}, {"mu", params.mu}, {"alpha", params.alpha}, {"beta", params.beta}}},
        {"horizon", opt.horizon},
        {"min_length", opt.min_length},
        {"max_length", opt.max_length},
        {"seed", opt.seed},
        {"num_sequences", opt.num_sequences},
        {"seeds", {{"rule", "seed + sequence index"}, {"first", opt.seed}, {"last", opt.seed + opt.num_sequences}}},
        {"splits",
         {{"train", split_info(splits.train, "train.jsonl")},
          {"dev", split_info(splits.dev, "dev.jsonl")},
          {"test", split_info(splits.test, "test.jsonl")}}},
    };
}

/// Generates the splits and writes train/dev/test .jsonl plus manifest.json
/// into `out_dir`.
inline SyntheticSplits make_synthetic_dataset(const HawkesParams& params, const SyntheticOptions& opt,
                                              const std::filesystem::path& out_dir) {
    SyntheticSplits splits = generate_synthetic(params, opt);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
    save_dataset(splits.train, out_dir / "train.jsonl");
    save_dataset(splits.dev, out_dir / "dev.jsonl");
    save_dataset(splits.test, out_dir / "test.jsonl");
    std::ofstream m(out_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!m) throw DataError("cannot write " + (out_dir / "manifest.json").string());
    m << synthetic_manifest(params, opt, splits).dump(2) << "\n";
    return splits;
}

/// Reads generator parameters and options back from a manifest.
inline std::pair<HawkesParams, SyntheticOptions> read_synthetic_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": malformed JSON (" + e.what() + ")");
    }
    HawkesParams p;
    p.mu = j.at("params").at("mu").get<std::vector<double>>();
    p.alpha = j.at("params").at("alpha").get<std::vector<double>>();
    p.beta = j.at("params").at("beta").get<std::vector<double>>();
    SyntheticOptions opt;
    opt.horizon = j.at("horizon").get<double>();
    opt.min_length = j.at("min_length").get<std::size_t>();
    opt.max_length = j.at("max_length").get<std::size_t>();
    opt.seed = j.at("seed").get<std::uint64_t>();
    opt.num_sequences = j.at("num_sequences").get<std::size_t>();
    return {p, opt};
}

}  // namespace trithp
