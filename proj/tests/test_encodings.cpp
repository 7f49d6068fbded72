#include <cmath>

#include <gtest/gtest.h>

#include "trithp/encodings.hpp"

using namespace trithp;

TEST(TemporalEncoding, ZeroTimeAlternatesZeroOne) {
    EXPECT_EQ(temporal_encoding(0.0, 4), (std::vector<double>{0, 1, 0, 1}));
}

TEST(TemporalEncoding, TwoDimensionsIsSinCosPair) {
    for (double t : {-3.0, 0.25, 7.5, 1234.5}) {
        const auto c = temporal_encoding(t, 2);
        EXPECT_DOUBLE_EQ(c[0], std::sin(t));
        EXPECT_DOUBLE_EQ(c[1], std::cos(t));
        EXPECT_NEAR(c[0] * c[0] + c[1] * c[1], 1.0, 1e-15);
    }
}

TEST(TemporalEncoding, FrequencyDividesExponentByModelDimension) {
    const auto c = temporal_encoding(1.0, 4);
    EXPECT_NEAR(c[2], 0.00999983, 5e-9);
    EXPECT_DOUBLE_EQ(c[2], std::sin(1.0 / std::pow(10000.0, 2.0 / 4.0)));
    EXPECT_DOUBLE_EQ(c[3], std::cos(1.0 / std::pow(10000.0, 2.0 / 4.0)));
}

TEST(TemporalEncoding, ComponentsFollowTheEvenOddRule) {
    const double t = 3.7;
    const std::size_t z = 10;
    const auto c = temporal_encoding(t, z);
    for (std::size_t j = 0; j < z; ++j) {
        const double expected = j % 2 == 0 ? std::sin(t / std::pow(10000.0, double(j) / z))
                                           : std::cos(t / std::pow(10000.0, double(j - 1) / z));
        EXPECT_DOUBLE_EQ(c[j], expected) << "component " << j;
    }
}

TEST(TemporalEncoding, OddOrTinyDimensionIsRejected) {
    EXPECT_THROW(temporal_encoding(1.0, 3), ConfigError);
    EXPECT_THROW(temporal_encoding(1.0, 0), ConfigError);
}

TEST(EncodeSequence, IdentityEmbeddingGivesOneHotRows) {
    const EventSequence seq{{1.0, 2.0, 3.0, 4.0}, {2, 0, 1, 2}};
    const auto enc = encode_sequence(seq, Tensor::identity(4));
    for (std::size_t i = 0; i < seq.size(); ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(enc.event(i, j), j == seq.types[i] ? 1.0 : 0.0);
}

TEST(EncodeSequence, SingleEventTakesItsEmbeddingColumn) {
    // Type 2 on disk is index 1 here.
    const Tensor m = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
    const auto enc = encode_sequence(EventSequence{{0.5}, {1}}, m);
    EXPECT_EQ(enc.event.shape(), (Shape{1, 2}));
    EXPECT_EQ(enc.event(0, 0), 2.0);
    EXPECT_EQ(enc.event(0, 1), 5.0);
}

TEST(EncodeSequence, TemporalRowsMatchTemporalEncoding) {
    const EventSequence seq{{0.3, 1.1, 9.0}, {0, 0, 1}};
    const auto enc = encode_sequence(seq, Tensor::zeros(6, 2));
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const auto row = temporal_encoding(seq.times[i], 6);
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(enc.temporal(i, j), row[j]);
    }
}

TEST(EncodeSequence, PermutingEmbeddingColumnsPermutesEventRowsOnly) {
    const Tensor m = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
    const Tensor m_perm = Tensor::from(2, 3, {3, 1, 2, 6, 4, 5});  // column c of m is column (c+1)%3 of m_perm
    const EventSequence seq{{1.0, 2.0, 4.0}, {0, 2, 1}};
    EventSequence relabelled = seq;
    for (auto& k : relabelled.types) k = (k + 1) % 3;
    const auto a = encode_sequence(seq, m), b = encode_sequence(relabelled, m_perm);
    for (std::size_t i = 0; i < seq.size(); ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_EQ(a.event(i, j), b.event(i, j));
            EXPECT_EQ(a.temporal(i, j), b.temporal(i, j));
        }
}

TEST(EncodeSequence, TemporalPartIgnoresTypes) {
    const EventSequence x{{1.0, 2.5}, {0, 1}}, y{{1.0, 2.5}, {1, 1}};
    const Tensor m = Tensor::from(2, 2, {1, 2, 3, 4});
    const auto a = encode_sequence(x, m), b = encode_sequence(y, m);
    EXPECT_EQ(std::vector<double>(a.temporal.values().begin(), a.temporal.values().end()),
              std::vector<double>(b.temporal.values().begin(), b.temporal.values().end()));
}

TEST(EncodeSequence, OutOfRangeTypeNamesTheEvent) {
    try {
        encode_sequence(EventSequence{{1.0, 2.0}, {0, 3}}, Tensor::zeros(2, 3));
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("event 1"), std::string::npos) << e.what();
    }
}

TEST(EncodeSequence, EmbeddingGradientFlowsToUsedColumnsOnly) {
    Tensor m = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6}, true);
    const auto enc = encode_sequence(EventSequence{{1.0, 2.0}, {2, 2}}, m);
    backward(sum(enc.event));
    EXPECT_EQ(std::vector<double>(m.grad().begin(), m.grad().end()), (std::vector<double>{0, 0, 2, 0, 0, 2}));
}

TEST(ValidateSequence, AcceptsAValidSequence) {
    EXPECT_NO_THROW(validate_sequence(EventSequence{{0.5, 0.6, 2.0}, {0, 1, 0}}, 2));
}

TEST(ValidateSequence, RejectsEachInvariantViolation) {
    EXPECT_THROW(validate_sequence(EventSequence{{1.0}, {0}}, 2), DataError);
    EXPECT_THROW(validate_sequence(EventSequence{{1.0, 1.0}, {0, 0}}, 2), DataError);
    EXPECT_THROW(validate_sequence(EventSequence{{2.0, 1.0}, {0, 0}}, 2), DataError);
    EXPECT_THROW(validate_sequence(EventSequence{{1.0, 2.0}, {0, 2}}, 2), DataError);
    EXPECT_THROW(validate_sequence(EventSequence{{1.0, NAN}, {0, 0}}, 2), DataError);
    EXPECT_THROW(validate_sequence(EventSequence{{1.0, 2.0}, {0}}, 2), DataError);
}
