#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "trithp/gradient_suite.hpp"
#include "trithp/trainer.hpp"

using namespace trithp;

namespace {

Dataset parse(const std::string& text, const LoadOptions& opt = {}) {
    std::istringstream in(text);
    return parse_dataset(in, "mem", opt);
}

void expect_data_error_mentions(const std::string& text, const std::string& needle) {
    try {
        parse(text);
        FAIL() << "expected DataError for: " << text;
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
}

Dataset random_dataset(std::uint64_t seed, std::size_t count, std::size_t k) {
    SeededRng rng(seed);
    Dataset ds;
    ds.num_types = k;
    for (std::size_t i = 0; i < count; ++i) ds.sequences.push_back(random_sequence(rng, 2 + rng.below(9), k));
    return ds;
}

}  // namespace

TEST(ParseDataset, ReadsSequencesAndConvertsTypesToZeroBased) {
    const Dataset ds = parse(R"({"seq": [{"t": 0.5, "k": 2}, {"t": 1.5, "k": 1}]}
{"seq": [{"t": 2, "k": 3}, {"t": 2.25, "k": 3}, {"t": 9, "k": 1}]}
)");
    ASSERT_EQ(ds.sequences.size(), 2u);
    EXPECT_EQ(ds.num_types, 3u);
    EXPECT_EQ(ds.sequences[0].types, (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(ds.sequences[1].times, (std::vector<double>{2.0, 2.25, 9.0}));
    EXPECT_EQ(ds.total_events(), 5u);
}

TEST(ParseDataset, HeaderFixesTheTypeCount) {
    const std::string body = R"({"seq": [{"t": 1, "k": 1}, {"t": 2, "k": 2}]})";
    EXPECT_EQ(parse(body).num_types, 2u);
    EXPECT_EQ(parse("{\"K\": 7}\n" + body).num_types, 7u);
    LoadOptions opt;
    opt.num_types = 4;
    EXPECT_EQ(parse("{\"K\": 7}\n" + body, opt).num_types, 4u);
    expect_data_error_mentions("{\"K\": 1}\n" + body, "exceeds K");
    expect_data_error_mentions("{\"K\": 0}\n" + body, "line 1");
}

TEST(ParseDataset, BlankLinesAreSkipped) {
    EXPECT_EQ(parse("\n{\"seq\": [{\"t\": 1, \"k\": 1}, {\"t\": 2, \"k\": 1}]}\n\n").sequences.size(), 1u);
}

TEST(ParseDataset, ErrorsCarryTheLineNumber) {
    const std::string good = R"({"seq": [{"t": 1, "k": 1}, {"t": 2, "k": 1}]})";
    expect_data_error_mentions(good + "\n{not json", "line 2");
    expect_data_error_mentions(good + "\n" + good + "\n{\"seq\": [{\"t\": 1, \"k\": 1}]}", "line 3");
    expect_data_error_mentions(R"({"seq": [{"t": 2, "k": 1}, {"t": 1, "k": 1}]})", "line 1");
    expect_data_error_mentions(R"({"seq": [{"t": 1, "k": 1}, {"t": 1, "k": 1}]})", "line 1");
    expect_data_error_mentions(R"({"seq": [{"t": 1, "k": 0}, {"t": 2, "k": 1}]})", "line 1");
    expect_data_error_mentions(R"({"events": []})", "line 1");
    expect_data_error_mentions(R"({"seq": [{"t": 1}, {"t": 2, "k": 1}]})", "line 1");
    expect_data_error_mentions(good + "\n{\"K\": 3}", "header must come first");
}

TEST(ParseDataset, SequencesStartingAtZeroAreShifted) {
    const Dataset ds = parse(R"({"seq": [{"t": 0, "k": 1}, {"t": 0.5, "k": 1}]})");
    EXPECT_EQ(ds.sequences[0].times, (std::vector<double>{1.0, 1.5}));
    EXPECT_EQ(ds.shifted_sequences, 1u);
    LoadOptions opt;
    opt.zero_start_shift = 0.25;
    EXPECT_EQ(parse(R"({"seq": [{"t": 0, "k": 1}, {"t": 0.5, "k": 1}]})", opt).sequences[0].times,
              (std::vector<double>{0.25, 0.75}));
}

TEST(ParseDataset, OptionalRescalingGivesUnitMeanGap) {
    LoadOptions opt;
    opt.rescale_times = true;
    const Dataset ds = parse(R"({"seq": [{"t": 10, "k": 1}, {"t": 30, "k": 1}, {"t": 50, "k": 1}]})", opt);
    EXPECT_DOUBLE_EQ(ds.time_scale, 1.0 / 20.0);
    EXPECT_DOUBLE_EQ(ds.sequences[0].times[2] - ds.sequences[0].times[1], 1.0);
    EXPECT_EQ(parse(R"({"seq": [{"t": 10, "k": 1}, {"t": 30, "k": 1}]})").time_scale, 1.0);
}

TEST(LoadDataset, MissingFileNamesThePath) {
    try {
        load_dataset("/nonexistent/trithp.jsonl");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/trithp.jsonl"), std::string::npos);
    }
}

TEST(SaveDataset, RoundTripIsExact) {
    Dataset ds = random_dataset(1, 25, 4);
    ds.num_types = 6;  // more types than used survives via the header
    const auto path = std::filesystem::temp_directory_path() / "trithp_roundtrip.jsonl";
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);
    EXPECT_EQ(back.num_types, 6u);
    ASSERT_EQ(back.sequences.size(), ds.sequences.size());
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
        EXPECT_EQ(back.sequences[i].times, ds.sequences[i].times);
        EXPECT_EQ(back.sequences[i].types, ds.sequences[i].types);
    }
    std::filesystem::remove(path);
}

TEST(MakeBatches, EverySequenceAppearsExactlyOnce) {
    const Dataset ds = random_dataset(2, 23, 3);
    for (std::size_t bs : {1, 4, 23, 100}) {
        const auto batches = make_batches(ds, bs, 9);
        EXPECT_EQ(batches.size(), (23 + bs - 1) / bs);
        std::vector<std::size_t> seen;
        std::size_t events = 0;
        for (const auto& b : batches) {
            EXPECT_LE(b.batch_size(), bs);
            for (std::size_t r = 0; r < b.batch_size(); ++r) {
                seen.push_back(b.ids[r]);
                const auto s = b.sequence(r);
                EXPECT_EQ(s.times, ds.sequences[b.ids[r]].times);
                EXPECT_EQ(s.types, ds.sequences[b.ids[r]].types);
                events += b.lengths[r];
            }
        }
        std::sort(seen.begin(), seen.end());
        std::vector<std::size_t> all(23);
        std::iota(all.begin(), all.end(), 0);
        EXPECT_EQ(seen, all);
        EXPECT_EQ(events, ds.total_events());
    }
}

TEST(MakeBatches, PaddingIsZeroAndMasked) {
    const Dataset ds = random_dataset(3, 10, 3);
    for (const auto& b : make_batches(ds, 4, 1)) {
        const std::size_t n = b.max_length();
        std::size_t longest = 0;
        for (std::size_t r = 0; r < b.batch_size(); ++r) {
            longest = std::max(longest, b.lengths[r]);
            for (std::size_t i = 0; i < n; ++i) {
                const bool real = i < b.lengths[r];
                EXPECT_EQ(b.valid[r * n + i], real ? 1 : 0);
                if (!real) {
                    EXPECT_EQ(b.times(r, i), 0.0);
                    EXPECT_EQ(b.types[r * n + i], 0u);
                }
            }
        }
        EXPECT_EQ(longest, n);
    }
}

TEST(MakeBatches, ShuffleIsDeterministicPerSeed) {
    const Dataset ds = random_dataset(4, 40, 2);
    auto order = [&](std::uint64_t seed) {
        std::vector<std::size_t> ids;
        for (const auto& b : make_batches(ds, 7, seed)) ids.insert(ids.end(), b.ids.begin(), b.ids.end());
        return ids;
    };
    EXPECT_EQ(order(5), order(5));
    EXPECT_NE(order(5), order(6));
    EXPECT_THROW(make_batches(ds, 0, 1), ConfigError);
    EXPECT_TRUE(make_batches(Dataset{}, 3, 1).empty());
}

TEST(MakeBatches, PaddingDoesNotChangeTheObjective) {
    ModelConfig cfg;
    cfg.num_types = 3;
    const TriThpModel m = random_model(cfg, 5);
    const Dataset ds = random_dataset(6, 6, 3);
    ObjectiveOptions opt;
    opt.seed = 11;
    opt.training = true;
    for (std::size_t bs : {1, 3, 6}) {
        for (const auto& b : make_batches(ds, bs, 2)) {
            double separate = 0.0;
            for (std::size_t r = 0; r < b.batch_size(); ++r) {
                separate += sequence_objective(ds.sequences[b.ids[r]], m, opt, b.ids[r]).total.item();
            }
            EXPECT_NEAR(objective(b, m, opt).item(), separate, 1e-9);
        }
    }
}
