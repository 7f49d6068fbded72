#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trithp/errors.hpp"
#include "trithp/tensor.hpp"

namespace trithp {

/// An asynchronous event sequence. Types are 0-based internally; files
/// store them 1-based.
struct EventSequence {
    std::vector<double> times;
    std::vector<std::size_t> types;

    std::size_t size() const noexcept { return times.size(); }
    bool operator==(const EventSequence&) const = default;
};

/// Throws DataError unless times are finite and strictly increasing, every
/// type is below `num_types`, and there are at least `min_events` events.
inline void validate_sequence(const EventSequence& seq, std::size_t num_types, std::size_t min_events = 2) {
    if (seq.times.size() != seq.types.size()) throw DataError("sequence has mismatched time/type counts");
    if (seq.size() < min_events) {
        throw DataError("sequence has " + std::to_string(seq.size()) + " events, need at least " +
                        std::to_string(min_events));
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (!std::isfinite(seq.times[i])) throw DataError("event " + std::to_string(i) + " has a non-finite time");
        if (i > 0 && !(seq.times[i] > seq.times[i - 1])) {
            throw DataError("event " + std::to_string(i) + ": times not strictly increasing (" +
                            std::to_string(seq.times[i - 1]) + " then " + std::to_string(seq.times[i]) + ")");
        }
        if (seq.types[i] >= num_types) {
            throw DataError("event " + std::to_string(i) + ": type " + std::to_string(seq.types[i] + 1) +
                            " outside [1, " + std::to_string(num_types) + "]");
        }
    }
}

inline void require_even_dim(std::size_t dim) {
    if (dim < 2 || dim % 2 != 0) throw ConfigError("model dimension must be even and >= 2, got " + std::to_string(dim));
}

/// Sinusoidal time encoding. Component j (0-based) is sin(t / 10000^(j/Z))
/// for even j and cos(t / 10000^((j-1)/Z)) for odd j.
inline std::vector<double> temporal_encoding(double t, std::size_t dim) {
    require_even_dim(dim);
    std::vector<double> out(dim);
    const double z = static_cast<double>(dim);
    for (std::size_t j = 0; j < dim; j += 2) {
        const double freq = std::pow(10000.0, static_cast<double>(j) / z);
        out[j] = std::sin(t / freq);
        out[j + 1] = std::cos(t / freq);
    }
    return out;
}

/// N x Z matrix whose row i encodes times[i]. Constant (no gradient).
inline Tensor temporal_encoding_matrix(const std::vector<double>& times, std::size_t dim) {
    std::vector<double> data;
    data.reserve(times.size() * dim);
    for (double t : times) {
        auto row = temporal_encoding(t, dim);
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor::from(times.size(), dim, std::move(data));
}

struct SequenceEncoding {
    Tensor temporal;  ///< N x Z, row i = temporal_encoding(t_i)
    Tensor event;     ///< N x Z, row i = column k_i of the embedding
};

/// `embedding` is the Z x K type-embedding matrix.
inline SequenceEncoding encode_sequence(const EventSequence& seq, const Tensor& embedding) {
    const std::size_t num_types = embedding.cols();
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq.types[i] >= num_types) {
            throw DataError("event " + std::to_string(i) + ": type " + std::to_string(seq.types[i] + 1) +
                            " outside [1, " + std::to_string(num_types) + "]");
        }
    }
    return {temporal_encoding_matrix(seq.times, embedding.rows()),
            gather_rows(transpose(embedding), {seq.types.begin(), seq.types.end()})};
}

}  // namespace trithp
