#include <poisonlab/aggregate.hpp>

#include <gtest/gtest.h>

#include <numeric>
#include <random>

using namespace poisonlab;

namespace {

Vector scalar(double x) { return Vector::Constant(1, x); }

AggregationInput scalars(std::vector<double> const& xs, std::size_t trim = 0) {
    AggregationInput in;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        in.agents.push_back(i);
        in.values.push_back(scalar(xs[i]));
        in.weights.push_back(1.0 / static_cast<double>(xs.size()));
    }
    in.trim_count = trim;
    return in;
}

AggregationInput random_input(std::mt19937_64& rng, std::size_t n, Eigen::Index dim) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.1, 1.0);
    AggregationInput in;
    double mass = 0;
    for (std::size_t i = 0; i < n; ++i) {
        in.agents.push_back(3 * i + 1);
        Vector v(dim);
        for (Eigen::Index k = 0; k < dim; ++k)
            v(k) = gauss(rng);
        in.values.push_back(v);
        in.weights.push_back(unit(rng));
        mass += in.weights.back();
    }
    for (auto& w : in.weights)
        w /= mass;
    in.self = in.agents[n / 2];
    in.trim_count = (n - 1) / 3;
    in.clip_threshold = 0.7;
    return in;
}

// Exhaustive trimmed-mean oracle per coordinate: average of order statistics
// Q+1..n-Q computed by repeated min/max removal.
double trimmed_oracle(std::vector<double> xs, std::size_t Q) {
    for (std::size_t q = 0; q < Q; ++q) {
        xs.erase(std::min_element(xs.begin(), xs.end()));
        xs.erase(std::max_element(xs.begin(), xs.end()));
    }
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

} // namespace

TEST(Names, RoundTrip) {
    for (auto a : all_aggregators)
        EXPECT_EQ(parse_aggregator(to_string(a)), a);
    EXPECT_THROW(parse_aggregator("median"), InvalidArgument);
}

TEST(WeiMean, WeightedSum) {
    auto in = scalars({1, 2, 3, 10});
    in.weights = {0.5, 0.25, 0.125, 0.125};
    EXPECT_DOUBLE_EQ(weimean(in)(0), 0.5 + 0.5 + 0.375 + 1.25);
    in.weights.clear();
    EXPECT_THROW(weimean(in), InvalidArgument);
}

TEST(Mean, Unweighted) { EXPECT_DOUBLE_EQ(mean(scalars({1, 2, 3, 10}))(0), 4.0); }

TEST(TriMean, Example) { EXPECT_DOUBLE_EQ(trimean(scalars({1, 2, 3, 10}, 1))(0), 2.5); }

TEST(TriMean, MatchesOracleCoordinatewise) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 50; ++t) {
        auto in = random_input(rng, 3 + t % 9, 3);
        auto const out = trimean(in);
        for (Eigen::Index k = 0; k < 3; ++k) {
            std::vector<double> column;
            for (auto const& v : in.values)
                column.push_back(v(k));
            EXPECT_NEAR(out(k), trimmed_oracle(column, in.trim_count), 1e-12);
        }
    }
}

TEST(TriMean, BreakdownWhenTrimmingEverything) {
    EXPECT_THROW(trimean(scalars({1, 2, 3, 4}, 2)), AggregatorBreakdown);
    EXPECT_NO_THROW(trimean(scalars({1, 2, 3, 4, 5}, 2)));
}

TEST(Faba, Example) { EXPECT_DOUBLE_EQ(faba(scalars({0, 0, 0, 5}, 1))(0), 0.0); }

TEST(Faba, RemovesFarthestIteratively) {
    // mean 26/5 -> drop 20; mean 1.5 -> drop 4; left {0,1,1}
    EXPECT_DOUBLE_EQ(faba(scalars({0, 1, 1, 4, 20}, 2))(0), 2.0 / 3);
}

TEST(Faba, TieDropsSmallestAgentId) {
    // mean 0; agents 0 and 2 are both at distance 1
    auto in = scalars({-1, 0, 1});
    in.trim_count = 1;
    EXPECT_DOUBLE_EQ(faba(in)(0), 0.5);
    // reversing arrival order must not change the outcome
    std::reverse(in.agents.begin(), in.agents.end());
    std::reverse(in.values.begin(), in.values.end());
    EXPECT_DOUBLE_EQ(faba(in)(0), 0.5);
}

TEST(Faba, BreakdownWhenTrimCountTooLarge) {
    EXPECT_THROW(faba(scalars({1, 2}, 2)), AggregatorBreakdown);
}

TEST(Ios, EqualsFabaUnderUniformWeights) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        auto in = random_input(rng, 2 + t % 10, 2);
        in.weights.assign(in.count(), 1.0 / static_cast<double>(in.count()));
        EXPECT_LE((ios(in) - faba(in)).norm(), 1e-12);
    }
}

TEST(Ios, WeightedExample) {
    auto in = scalars({0, 0, 6});
    in.weights = {0.3, 0.3, 0.4};
    in.trim_count = 1;
    EXPECT_DOUBLE_EQ(ios(in)(0), 0.0);
    in.trim_count = 0;
    EXPECT_DOUBLE_EQ(ios(in)(0), 2.4);
    // weighted mean 3 is equidistant from all three; agent 0 goes first
    in.weights = {0.25, 0.25, 0.5};
    in.trim_count = 1;
    EXPECT_DOUBLE_EQ(ios(in)(0), 4.0);
}

TEST(Ios, AllWeightRemoved) {
    auto in = scalars({5, 5});
    in.weights = {1.0, 0.0};
    in.trim_count = 1;
    EXPECT_THROW(ios(in), AggregatorBreakdown);
}

TEST(CenteredClipping, Example) {
    auto in = scalars({0, 0, 0, 3});
    in.clip_threshold = 1.0;
    EXPECT_DOUBLE_EQ(cc(in)(0), 0.25);
}

TEST(CenteredClipping, MoreStepsMoveFurther) {
    auto in = scalars({0, 0, 0, 3});
    in.clip_threshold = 1.0;
    in.cc_steps = 2;
    // s1 = 0.25; s2 = 0.25 + (3 * -0.25 + 1) / 4
    EXPECT_DOUBLE_EQ(cc(in)(0), 0.3125);
    in.cc_steps = 0;
    EXPECT_THROW(cc(in), InvalidArgument);
}

TEST(CenteredClipping, AdaptiveThresholdIsMedianDistance) {
    auto in = scalars({0, 1, 2, 10});
    // distances from self 0: 1, 2, 10 -> tau 2
    EXPECT_DOUBLE_EQ(cc(in)(0), (0 + 1 + 2 + 2) / 4.0);
    in.clip_threshold = -1.0;
    EXPECT_THROW(cc(in), InvalidArgument);
}

TEST(ClippedGossip, Example) {
    AggregationInput in;
    in.self = 0;
    in.agents = {0, 1};
    in.values = {scalar(0), scalar(3)};
    in.weights = {0.5, 0.5};
    in.clip_threshold = 1.0;
    EXPECT_DOUBLE_EQ(cg(in)(0), 0.5);
}

TEST(ClippedGossip, LargeThresholdIsWeiMean) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        auto in = random_input(rng, 6, 3);
        in.clip_threshold = 1e9;
        EXPECT_LE((cg(in) - weimean(in)).norm(), 1e-12);
    }
}

TEST(Rfa, MajorityPoint) {
    auto const in = scalars({0, 0, 0, 100});
    EXPECT_NEAR(rfa(in)(0), 0.0, 1e-4);
}

TEST(Rfa, TwoPointsGiveMidpoint) { EXPECT_NEAR(rfa(scalars({0, 1}))(0), 0.5, 1e-12); }

TEST(Rfa, MinimizesSumOfDistances) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> gauss(0.0, 0.05);
    for (int t = 0; t < 20; ++t) {
        auto in = random_input(rng, 7, 2);
        in.rfa_max_iter = 5000;
        auto const gm = geometric_median(in);
        auto objective = [&](Vector const& z) {
            double s = 0;
            for (auto const& v : in.values)
                s += (v - z).norm();
            return s;
        };
        auto const best = objective(gm.point);
        for (int probe = 0; probe < 20; ++probe) {
            Vector z = gm.point;
            z(0) += gauss(rng);
            z(1) += gauss(rng);
            EXPECT_GE(objective(z), best - 1e-9);
        }
    }
}

TEST(AllRules, PermutationInvariant) {
    std::mt19937_64 rng(17);
    for (auto rule : all_aggregators) {
        for (int t = 0; t < 10; ++t) {
            auto in = random_input(rng, 7, 3);
            auto const base = aggregate(rule, in);
            std::vector<std::size_t> perm(in.count());
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            AggregationInput shuffled = in;
            for (std::size_t i = 0; i < perm.size(); ++i) {
                shuffled.agents[i] = in.agents[perm[i]];
                shuffled.values[i] = in.values[perm[i]];
                shuffled.weights[i] = in.weights[perm[i]];
            }
            EXPECT_LE((aggregate(rule, shuffled) - base).norm(), 1e-12) << to_string(rule);
        }
    }
}

TEST(AllRules, TranslationEquivariant) {
    std::mt19937_64 rng(23);
    for (auto rule : all_aggregators) {
        for (int t = 0; t < 10; ++t) {
            auto in = random_input(rng, 6, 2);
            Vector shift(2);
            shift << 3.5, -1.25;
            auto moved = in;
            for (auto& v : moved.values)
                v += shift;
            EXPECT_LE((aggregate(rule, moved) - aggregate(rule, in) - shift).norm(), 1e-7) << to_string(rule);
        }
    }
}

TEST(AllRules, IdenticalInputsAreFixedPoints) {
    Vector z(3);
    z << 1.0, -2.0, 0.5;
    for (auto rule : all_aggregators) {
        AggregationInput in;
        for (AgentId i = 0; i < 5; ++i) {
            in.agents.push_back(i);
            in.values.push_back(z);
            in.weights.push_back(0.2);
        }
        in.self = 2;
        in.trim_count = 1;
        EXPECT_LE((aggregate(rule, in) - z).norm(), 1e-12) << to_string(rule);
    }
}

TEST(AllRules, InputValidation) {
    for (auto rule : all_aggregators) {
        AggregationInput empty;
        EXPECT_THROW(aggregate(rule, empty), InvalidArgument) << to_string(rule);
        auto mixed = scalars({1, 2, 3});
        mixed.values[1] = Vector::Zero(2);
        EXPECT_THROW(aggregate(rule, mixed), InvalidArgument) << to_string(rule);
    }
    auto missing_self = scalars({1, 2, 3});
    missing_self.self = 9;
    EXPECT_THROW(cc(missing_self), InvalidArgument);
    EXPECT_THROW(cg(missing_self), InvalidArgument);
}
