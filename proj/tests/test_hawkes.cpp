#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "reference.hpp"
#include "stats.hpp"
#include "trithp/hawkes.hpp"
#include "trithp/synthetic.hpp"

using namespace trithp;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("trithp_hawkes_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(ClassicalIntensity, EmptyHistoryIsTheBaseRate) {
    const auto p = HawkesParams::uniform(3, 0.7, 0.2, 1.0);
    EXPECT_EQ(classical_intensity(p, {}, 5.0, 1), 0.7);
}

TEST(ClassicalIntensity, OneEventOneTimeUnitLater) {
    const auto p = HawkesParams::uniform(1, 0.5, 0.8, 1.0);
    const EventSequence h{{0.0}, {0}};
    EXPECT_DOUBLE_EQ(classical_intensity(p, h, 1.0, 0), 0.5 + 0.8 * std::exp(-1.0));
    EXPECT_NEAR(classical_intensity(p, h, 1.0, 0), 0.7943036, 5e-7);
}

TEST(ClassicalIntensity, DecaysToBaseRate) {
    const auto p = HawkesParams::uniform(2, 0.3, 0.4, 2.0);
    const EventSequence h{{1.0, 1.5}, {0, 1}};
    EXPECT_NEAR(classical_intensity(p, h, 1e3, 0), 0.3, 1e-12);
}

TEST(ClassicalIntensity, CrossExcitationUsesTheRightEntry) {
    HawkesParams p{{0.1, 0.2}, {0.0, 0.5, 0.0, 0.0}, {1.0, 2.0, 1.0, 1.0}};
    const EventSequence h{{1.0}, {1}};  // a type-1 event excites type 0 only
    EXPECT_DOUBLE_EQ(classical_intensity(p, h, 2.0, 0), 0.1 + 0.5 * std::exp(-2.0));
    EXPECT_DOUBLE_EQ(classical_intensity(p, h, 2.0, 1), 0.2);
}

TEST(HawkesParams, ExplosiveOrInvalidParametersAreRefused) {
    SeededRng rng(1);
    EXPECT_THROW(simulate_thinning(HawkesParams::uniform(1, 0.5, 1.2, 1.0), 10.0, rng), ConfigError);
    EXPECT_THROW(simulate_thinning(HawkesParams::uniform(2, 0.5, 0.6, 1.0), 10.0, rng), ConfigError);  // radius 1.2
    EXPECT_THROW(simulate_thinning(HawkesParams::uniform(1, 0.0, 0.1, 1.0), 10.0, rng), ConfigError);
    EXPECT_THROW(simulate_thinning(HawkesParams::uniform(1, 0.5, -0.1, 1.0), 10.0, rng), ConfigError);
    EXPECT_THROW(simulate_thinning(HawkesParams::uniform(1, 0.5, 0.1, 1.0), 0.0, rng), ConfigError);
    EXPECT_NEAR(default_synthetic_params().branching_radius(), 0.8, 1e-12);
}

TEST(SimulateThinning, SameSeedSameSequence) {
    const auto p = default_synthetic_params();
    SeededRng a(42), b(42);
    const auto x = simulate_thinning(p, 16.0, a), y = simulate_thinning(p, 16.0, b);
    EXPECT_EQ(x.times, y.times);
    EXPECT_EQ(x.types, y.types);
}

TEST(SimulateThinning, TimesAreIncreasingInsideTheHorizon) {
    SeededRng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const auto s = simulate_thinning(default_synthetic_params(), 16.0, rng);
        for (std::size_t i = 0; i < s.size(); ++i) {
            EXPECT_GT(s.times[i], i == 0 ? 0.0 : s.times[i - 1]);
            EXPECT_LE(s.times[i], 16.0);
            EXPECT_LT(s.types[i], 5u);
        }
    }
}

TEST(SimulateThinning, PoissonCountsMatchRateTimesHorizon) {
    const auto p = HawkesParams::uniform(1, 2.0, 0.0, 1.0);
    std::vector<double> counts;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        SeededRng rng(s);
        counts.push_back(static_cast<double>(simulate_thinning(p, 5.0, rng).size()));
    }
    EXPECT_LE(std::abs(teststats::mean(counts) - 10.0), 3.0 * std::sqrt(10.0 / 10000.0));
}

TEST(SimulateThinning, PoissonGapsPassChiSquare) {
    const auto p = HawkesParams::uniform(1, 1.0, 0.0, 1.0);
    SeededRng rng(11);
    std::vector<double> gaps;
    while (gaps.size() < 10000) {
        const auto s = simulate_thinning(p, 200.0, rng);
        double prev = 0.0;
        for (double t : s.times) {
            if (gaps.size() < 10000) gaps.push_back(t - prev);
            prev = t;
        }
    }
    // 20 equiprobable Exp(1) bins.
    const std::size_t bins = 20;
    std::vector<double> observed(bins, 0.0);
    for (double g : gaps) {
        const double u = 1.0 - std::exp(-g);
        observed[std::min(bins - 1, static_cast<std::size_t>(u * bins))] += 1.0;
    }
    const double expected = static_cast<double>(gaps.size()) / bins;
    double stat = 0.0;
    for (double o : observed) stat += (o - expected) * (o - expected) / expected;
    const double p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(bins - 1.0), stat));
    EXPECT_GT(p_value, 0.01) << "chi-square statistic " << stat;
}

TEST(SimulateThinning, RescaledIncrementsAreUnitExponential) {
    const auto p = HawkesParams::uniform(1, 0.5, 0.8, 1.0);
    std::vector<double> z;
    for (std::uint64_t s = 0; z.size() < 10000; ++s) {
        SeededRng rng(500 + s);
        const auto seq = simulate_thinning(p, 1000.0, rng);
        for (double v : time_rescaled_intervals(p, seq))
            if (z.size() < 10000) z.push_back(v);
    }
    const auto ks = teststats::ks_exponential(z);
    EXPECT_GT(ks.p_value, 0.01) << "D = " << ks.statistic;
}

TEST(SimulateThinning, MultivariateRescaledIncrementsAreUnitExponential) {
    const auto p = default_synthetic_params();
    std::vector<double> z;
    for (std::uint64_t s = 0; z.size() < 5000; ++s) {
        SeededRng rng(900 + s);
        for (double v : time_rescaled_intervals(p, simulate_thinning(p, 200.0, rng)))
            if (z.size() < 5000) z.push_back(v);
    }
    EXPECT_GT(teststats::ks_exponential(z).p_value, 0.01);
}

TEST(AnalyticLoglik, PoissonCase) {
    const auto p = HawkesParams::uniform(1, 1.3, 0.0, 1.0);
    const EventSequence s{{0.5, 1.0, 4.0}, {0, 0, 0}};
    EXPECT_NEAR(analytic_loglik(p, s, 6.0), 3 * std::log(1.3) - 1.3 * 6.0, 1e-12);
}

TEST(AnalyticLoglik, CompensatorMatchesFineGridIntegration) {
    const auto p = default_synthetic_params();
    SeededRng rng(21);
    for (int rep = 0; rep < 5; ++rep) {
        const auto s = simulate_thinning(p, 16.0, rng);
        const double analytic_comp = ref::hawkes_log_intensity_sum(p, s) - analytic_loglik(p, s, 16.0);
        const double numeric = ref::hawkes_compensator(p, s, 16.0, 2000);
        EXPECT_LE(std::abs(analytic_comp - numeric) / numeric, 1e-4);
    }
}

TEST(AnalyticLoglik, GeneratingParametersScoreHigherThanPerturbed) {
    const auto p = HawkesParams::uniform(1, 0.5, 0.6, 1.0);
    std::vector<EventSequence> data;
    for (std::uint64_t s = 0; s < 50; ++s) {
        SeededRng rng(300 + s);
        data.push_back(simulate_thinning(p, 200.0, rng));
    }
    auto mean_ll = [&](const HawkesParams& q) {
        double total = 0.0;
        for (const auto& s : data) total += analytic_loglik(q, s, 200.0);
        return total / 50.0;
    };
    const double truth = mean_ll(p);
    EXPECT_GT(truth, mean_ll(HawkesParams::uniform(1, 0.5, 0.9, 1.0)));
    EXPECT_GT(truth, mean_ll(HawkesParams::uniform(1, 0.5, 0.3, 1.0)));
}

TEST(AnalyticLoglik, EventsOutsideTheWindowAreRejected) {
    EXPECT_THROW(analytic_loglik(HawkesParams::uniform(1, 1, 0, 1), EventSequence{{1.0, 7.0}, {0, 0}}, 6.0), DataError);
}

TEST(Synthetic, DefaultConfigLandsInTheLengthBand) {
    SyntheticOptions opt;
    opt.num_sequences = 100;
    opt.seed = 7;
    const auto splits = generate_synthetic(default_synthetic_params(), opt);
    EXPECT_EQ(splits.train.sequences.size(), 70u);
    EXPECT_EQ(splits.dev.sequences.size(), 10u);
    EXPECT_EQ(splits.test.sequences.size(), 20u);
    for (const Dataset* d : {&splits.train, &splits.dev, &splits.test}) {
        EXPECT_EQ(d->num_types, 5u);
        for (const auto& s : d->sequences) {
            EXPECT_GE(s.size(), 20u);
            EXPECT_LE(s.size(), 100u);
            EXPECT_NO_THROW(validate_sequence(s, 5));
        }
    }
}

TEST(Synthetic, ZeroSequencesWritesValidEmptyFiles) {
    const auto dir = scratch_dir("empty");
    SyntheticOptions opt;
    opt.num_sequences = 0;
    make_synthetic_dataset(default_synthetic_params(), opt, dir);
    for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl"}) {
        const auto ds = load_dataset(dir / f);
        EXPECT_TRUE(ds.sequences.empty());
        EXPECT_EQ(ds.num_types, 5u);
    }
    EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
    std::filesystem::remove_all(dir);
}

TEST(Synthetic, ManifestRegeneratesIdenticalFiles) {
    const auto a = scratch_dir("a"), b = scratch_dir("b");
    SyntheticOptions opt;
    opt.num_sequences = 30;
    opt.seed = 123;
    make_synthetic_dataset(default_synthetic_params(), opt, a);
    const auto [params, opt2] = read_synthetic_manifest(a / "manifest.json");
    make_synthetic_dataset(params, opt2, b);
    for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "manifest.json"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(Synthetic, UnwritableDirectoryNamesThePath) {
    SyntheticOptions opt;
    opt.num_sequences = 0;
    try {
        make_synthetic_dataset(default_synthetic_params(), opt, "/proc/trithp_no_such_dir");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("/proc/trithp_no_such_dir"), std::string::npos);
    }
}
