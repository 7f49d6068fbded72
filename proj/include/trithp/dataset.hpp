#pragma once

// Event-sequence datasets stored as JSON Lines. Each line is one sequence:
//   {"seq": [{"t": 0.52, "k": 3}, {"t": 1.7, "k": 1}, ...]}
// Types are 1-based on disk. An optional first line {"K": 5} fixes the type
// count; otherwise it is the largest type seen.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trithp/encodings.hpp"
#include "trithp/errors.hpp"
#include "trithp/rng.hpp"
#include "trithp/tensor.hpp"

namespace trithp {

struct Dataset {
    std::string name;
    std::size_t num_types = 0;
    std::vector<EventSequence> sequences;
    double time_scale = 1.0;  // factor applied to on-disk times
    std::size_t shifted_sequences = 0;

    std::size_t total_events() const {
        std::size_t n = 0;
        for (const auto& s : sequences) n += s.size();
        return n;
    }
};

struct LoadOptions {
    /// Sequences starting at t = 0 are shifted by this amount, since the
    /// intensity divides by the anchoring event time.
    double zero_start_shift = 1.0;
    /// Rescale all times so the mean inter-event gap is 1.
    bool rescale_times = false;
    /// Overrides the header / inferred type count when nonzero.
    std::size_t num_types = 0;
};

namespace detail {

inline EventSequence parse_sequence_line(const nlohmann::json& obj, std::size_t line_no) {
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (!obj.is_object() || !obj.contains("seq") || !obj["seq"].is_array()) {
        throw DataError(where + "expected an object with a \"seq\" array");
    }
    EventSequence seq;
    for (const auto& ev : obj["seq"]) {
        if (!ev.is_object() || !ev.contains("t") || !ev.contains("k") || !ev["t"].is_number() ||
            !ev["k"].is_number_integer()) {
            throw DataError(where + "each event needs a numeric \"t\" and an integer \"k\"");
        }
        const auto k = ev["k"].get<std::int64_t>();
        if (k < 1) throw DataError(where + "event type " + std::to_string(k) + " is < 1");
        const double t = ev["t"].get<double>();
        if (!std::isfinite(t) || t < 0.0) throw DataError(where + "event time must be finite and non-negative");
        if (!seq.times.empty() && !(t > seq.times.back())) {
            throw DataError(where + "event times not strictly increasing at index " + std::to_string(seq.size()));
        }
        seq.times.push_back(t);
        seq.types.push_back(static_cast<std::size_t>(k - 1));
    }
    if (seq.size() < 2) throw DataError(where + "a sequence needs at least 2 events");
    return seq;
}

}  // namespace detail

inline Dataset parse_dataset(std::istream& in, const std::string& name, const LoadOptions& opt = {}) {
    Dataset ds;
    ds.name = name;
    std::size_t header_k = 0, max_type = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(name + ": line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
        }
        if (obj.is_object() && obj.contains("K") && !obj.contains("seq")) {
            if (!ds.sequences.empty()) throw DataError(name + ": line " + std::to_string(line_no) + ": header must come first");
            if (!obj["K"].is_number_integer() || obj["K"].get<std::int64_t>() < 1) {
                throw DataError(name + ": line " + std::to_string(line_no) + ": \"K\" must be a positive integer");
            }
            header_k = obj["K"].get<std::size_t>();
            continue;
        }
        EventSequence seq;
        try {
            seq = detail::parse_sequence_line(obj, line_no);
        } catch (const DataError& e) {
            throw DataError(name + ": " + e.what());
        }
        for (auto k : seq.types) max_type = std::max(max_type, k + 1);
        if (seq.times.front() == 0.0) {
            for (double& t : seq.times) t += opt.zero_start_shift;
            ++ds.shifted_sequences;
        }
        ds.sequences.push_back(std::move(seq));
    }
    ds.num_types = opt.num_types ? opt.num_types : (header_k ? header_k : max_type);
    if (max_type > ds.num_types) {
        throw DataError(name + ": event type " + std::to_string(max_type) + " exceeds K = " + std::to_string(ds.num_types));
    }
    if (ds.shifted_sequences > 0) {
        std::clog << "warning: " << name << ": shifted " << ds.shifted_sequences << " sequence(s) starting at t = 0 by "
                  << opt.zero_start_shift << "\n";
    }
    if (opt.rescale_times) {
        double gaps = 0.0;
        std::size_t count = 0;
        for (const auto& s : ds.sequences) {
            gaps += s.times.back() - s.times.front();
            count += s.size() - 1;
        }
        if (count > 0 && gaps > 0.0) {
            ds.time_scale = static_cast<double>(count) / gaps;
            for (auto& s : ds.sequences)
                for (double& t : s.times) t *= ds.time_scale;
        }
    }
    return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset " + path.string());
    return parse_dataset(in, path.string(), opt);
}

inline std::string sequence_to_jsonl(const EventSequence& seq) {
    nlohmann::json events = nlohmann::json::array();
    for (std::size_t i = 0; i < seq.size(); ++i) {
        events.push_back({{"t", seq.times[i]}, {"k", seq.types[i] + 1}});
    }
    return nlohmann::json{{"seq", std::move(events)}}.dump();
}

/// Writes the header line followed by one line per sequence.
inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write dataset " + path.string());
    out << nlohmann::json{{"K", ds.num_types}}.dump() << "\n";
    for (const auto& s : ds.sequences) out << sequence_to_jsonl(s) << "\n";
    if (!out) throw DataError("write failed for " + path.string());
}

/// Variable-length sequences padded to the longest one in the batch.
struct PaddedBatch {
    Tensor times;                     // B x N_max, zero at padding
    std::vector<std::size_t> types;   // B x N_max row-major, 0 at padding
    std::vector<unsigned char> valid; // B x N_max, 1 for real events
    std::vector<std::size_t> lengths; // B
    std::vector<std::size_t> ids;     // dataset index of each row

    std::size_t batch_size() const { return lengths.size(); }
    std::size_t max_length() const { return times.defined() ? times.cols() : 0; }

    /// The unpadded sequence in row b.
    EventSequence sequence(std::size_t b) const {
        EventSequence s;
        const std::size_t n = max_length();
        for (std::size_t i = 0; i < lengths[b]; ++i) {
            s.times.push_back(times(b, i));
            s.types.push_back(types[b * n + i]);
        }
        return s;
    }
};

/// Shuffles sequence order with `shuffle_seed` and cuts it into padded
/// batches of at most `batch_size` sequences.
inline std::vector<PaddedBatch> make_batches(const Dataset& ds, std::size_t batch_size, std::uint64_t shuffle_seed) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<std::size_t> order(ds.sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SeededRng rng(shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    std::vector<PaddedBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        std::size_t n_max = 0;
        for (std::size_t i = start; i < end; ++i) n_max = std::max(n_max, ds.sequences[order[i]].size());
        const std::size_t b = end - start;
        PaddedBatch batch;
        std::vector<double> times(b * n_max, 0.0);
        batch.types.assign(b * n_max, 0);
        batch.valid.assign(b * n_max, 0);
        for (std::size_t r = 0; r < b; ++r) {
            const auto& s = ds.sequences[order[start + r]];
            batch.ids.push_back(order[start + r]);
            batch.lengths.push_back(s.size());
            for (std::size_t i = 0; i < s.size(); ++i) {
                times[r * n_max + i] = s.times[i];
                batch.types[r * n_max + i] = s.types[i];
                batch.valid[r * n_max + i] = 1;
            }
        }
        batch.times = Tensor::from(b, n_max, std::move(times));
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace trithp
