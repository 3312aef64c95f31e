#include <poisonlab/theory.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace poisonlab;

namespace {

MixingScheme weights_for(Aggregator rule) {
    return rule == Aggregator::ios ? MixingScheme::neighborhood_uniform : MixingScheme::metropolis_hastings;
}

} // namespace

TEST(LowerBoundPair, FourAndFour) {
    double const c = 1.7, L = 2.0;
    auto const pair = make_lower_bound_pair(4, 8, c, L);
    EXPECT_DOUBLE_EQ(pair.delta_max, 1.0 / 3);
    EXPECT_EQ(pair.labels[0], (std::vector<int>{1, 1, 1, 1, 2, 2, 2, 2}));
    auto const r2 = std::sqrt(2.0);
    Vector const x = Vector::Zero(2);
    // instance 1 optimum
    Vector opt = Vector::Zero(2);
    opt(0) = -(1 - 1.0 / 3) * c / (r2 * L);
    EXPECT_LE(pair.global_gradient(0, opt).norm(), 1e-15);
    // instance 2 gradient
    Vector g2(2);
    g2 << (1 - 2.0 / 3) * c / r2, (1.0 / 3) * c / r2;
    EXPECT_LE((pair.global_gradient(1, x) - g2).norm(), 1e-15);
    EXPECT_NEAR(pair.bound(), pair.delta_max_bound(), 1e-15);
    EXPECT_NEAR(pair.bound(), c * c / 72, 1e-15);
    EXPECT_DOUBLE_EQ(pair.f_star(), -c * c / (2 * L));
}

TEST(LowerBoundPair, SecondInstanceAgentsShareNoPoisonedNeighbor) {
    for (std::size_t R = 4; R <= 12; ++R) {
        for (std::size_t W = R + 4; W <= 2 * R + 3; ++W) {
            auto const pair = make_lower_bound_pair(R, W, 1.0, 1.0);
            auto const blocks = pair.plan.block_sizes.size();
            std::vector<AgentId> flipped;
            for (AgentId w = 0; w < W; ++w) {
                EXPECT_EQ(pair.labels[0][w], w >= R && w < R + blocks ? 2 : 1) << R << "," << W << " agent " << w;
                if (pair.labels[1][w] == 2) {
                    EXPECT_TRUE(pair.network.is_regular(w));
                    flipped.push_back(w);
                }
            }
            ASSERT_EQ(flipped.size(), 2u);
            for (AgentId p = R; p < R + blocks; ++p)
                EXPECT_FALSE(pair.network.adjacent(p, flipped[0]) && pair.network.adjacent(p, flipped[1]));
        }
    }
}

TEST(LowerBoundPair, FStarLowerBoundsBothInstances) {
    double const c = 1.0, L = 0.8;
    auto const pair = make_lower_bound_pair(4, 8, c, L);
    for (std::size_t t = 0; t < 2; ++t) {
        auto const costs = pair.costs(t);
        std::vector<CostPtr> regular(costs.begin(), costs.begin() + 4);
        for (double u = -2; u <= 2; u += 0.05)
            for (double v = -2; v <= 2; v += 0.05) {
                Vector x(2);
                x << u, v;
                EXPECT_GE(global_loss(regular, x), pair.f_star());
            }
    }
}

TEST(LowerBoundPair, ZeroCIsTrivial) {
    auto const pair = make_lower_bound_pair(4, 8, 0.0, 1.0);
    EXPECT_EQ(pair.bound(), 0.0);
    auto const report = verify_indistinguishable(pair, Aggregator::weimean, 20);
    EXPECT_TRUE(report.identical);
    EXPECT_TRUE(report.certified());
}

TEST(LowerBoundPair, InfeasibleRejected) {
    EXPECT_THROW(make_lower_bound_pair(1, 3, 1.0, 1.0), InvalidArgument);
    EXPECT_THROW(make_lower_bound_pair(4, 3, 1.0, 1.0), InvalidArgument);
    EXPECT_THROW(make_lower_bound_pair(4, 8, -1.0, 1.0), InvalidArgument);
    EXPECT_THROW(verify_indistinguishable(make_lower_bound_pair(4, 8, 1.0, 1.0), Aggregator::trimean, 0), InvalidArgument);
}

TEST(Indistinguishable, TriMeanFourAndFour) {
    auto const pair = make_lower_bound_pair(4, 8, 1.0, 1.0);
    auto const report = verify_indistinguishable(pair, Aggregator::trimean, 100);
    EXPECT_TRUE(report.identical) << report.max_divergence;
    EXPECT_GE(report.measured, pair.delta_max * pair.delta_max / 8);
    EXPECT_TRUE(report.certified());
}

TEST(Indistinguishable, WeiMeanSeparates) {
    auto const pair = make_lower_bound_pair(4, 8, 1.0, 1.0);
    auto const report = verify_indistinguishable(pair, Aggregator::weimean, 100);
    EXPECT_FALSE(report.identical);
    EXPECT_GT(report.max_divergence, 1e-3);
}

TEST(Indistinguishable, ClippingRulesSeparate) {
    auto const pair = make_lower_bound_pair(4, 8, 1.0, 1.0);
    for (auto rule : {Aggregator::cc, Aggregator::cg})
        EXPECT_FALSE(verify_indistinguishable(pair, rule, 50).identical) << to_string(rule);
}

TEST(Indistinguishable, MajorityDominantRulesAcrossFeasibleFamily) {
    std::mt19937_64 rng(2024);
    int tested = 0;
    for (int trial = 0; trial < 40; ++trial) {
        auto const R = std::uniform_int_distribution<std::size_t>(4, 10)(rng);
        auto const W = std::uniform_int_distribution<std::size_t>(R + 1, 2 * R + 4)(rng);
        auto const pair = make_lower_bound_pair(R, W, 1.0, 1.0);
        bool const regular_majority = std::ranges::all_of(pair.network.regular_agents(), [&](AgentId r) {
            return 2 * pair.network.poisoned_in_neighborhood(r) < pair.network.degree(r) + 1;
        });
        if (!regular_majority)
            continue;
        ++tested;
        for (auto rule : {Aggregator::trimean, Aggregator::faba, Aggregator::ios}) {
            auto const report = verify_indistinguishable(pair, rule, 30, weights_for(rule));
            EXPECT_TRUE(report.identical) << to_string(rule) << " R=" << R << " W=" << W << " div=" << report.max_divergence;
        }
    }
    EXPECT_GE(tested, 20);
}

TEST(Indistinguishable, BoundHoldsAcrossParameters) {
    for (double c : {0.1, 1.0, 10.0})
        for (double L : {1.0, 10.0})
            for (std::size_t K : {10u, 100u})
                for (auto rule : {Aggregator::trimean, Aggregator::faba, Aggregator::ios}) {
                    auto const pair = make_lower_bound_pair(4, 8, c, L);
                    auto const report = verify_indistinguishable(pair, rule, K, weights_for(rule));
                    EXPECT_TRUE(report.certified()) << to_string(rule) << " c=" << c << " L=" << L << " K=" << K;
                    EXPECT_GE(report.measured, report.delta_max_bound);
                }
}

TEST(Table1, Examples) {
    for (auto rule : {Aggregator::trimean, Aggregator::faba, Aggregator::cc, Aggregator::cg, Aggregator::ios})
        EXPECT_EQ(table1_rho(rule, 0.0).value(), 0.0) << to_string(rule);
    EXPECT_NEAR(table1_rho(Aggregator::ios, 1.0 / 9).value(), 1.0 / 6, 1e-15);
    EXPECT_FALSE(table1_rho(Aggregator::faba, 1.0 / 3).has_value());
    EXPECT_FALSE(table1_rho(Aggregator::trimean, 0.5).has_value());
    EXPECT_NEAR(table1_rho(Aggregator::trimean, 0.25).value(), 0.5, 1e-15);
    EXPECT_NEAR(table1_rho(Aggregator::cc, 0.25).value(), 0.5, 1e-15);
    EXPECT_NEAR(table1_rho(Aggregator::cg, 0.5).value(), 0.5, 1e-15);
    EXPECT_THROW(table1_rho(Aggregator::weimean, 0.1), InvalidArgument);
    EXPECT_THROW(table1_rho(Aggregator::rfa, 0.1), InvalidArgument);
}

TEST(Table1, MonotoneOnValidityRange) {
    for (auto rule : {Aggregator::trimean, Aggregator::faba, Aggregator::cc, Aggregator::ios}) {
        double prev = -1;
        for (double d = 0; d < 1; d += 0.001) {
            auto const r = table1_rho(rule, d);
            if (!r)
                break;
            EXPECT_GT(*r, prev) << to_string(rule) << " " << d;
            prev = *r;
        }
    }
    // the clipped-gossip form grows up to delta = 1/2
    double prev = -1;
    for (double d = 0; d <= 0.5; d += 0.001) {
        auto const r = *table1_rho(Aggregator::cg, d);
        EXPECT_GT(r, prev);
        prev = r;
    }
}

TEST(ErrorFloors, FanHasNoGuarantee) {
    BoundInputs q;
    q.rho = 0.01;
    q.lambda = 14.0 / 9;
    q.xi = 1;
    q.A = 1;
    q.delta = 0.1;
    auto const report = error_floors(q);
    EXPECT_FALSE(report.ragg_valid);
    EXPECT_EQ(report.verdict, FloorVerdict::ragg_no_guarantee);
    EXPECT_NE(report.ragg_note.find("no guarantee"), std::string::npos);
}

TEST(ErrorFloors, RhoTooLarge) {
    BoundInputs q;
    q.rho = 0.3;
    q.lambda = 0.0;
    auto const report = error_floors(q);
    EXPECT_FALSE(report.ragg_valid);
}

TEST(ErrorFloors, AttackFreeWeiMeanIsZero) {
    BoundInputs q;
    q.lambda_prime = 0.5;
    EXPECT_EQ(error_floors(q).weimean_floor, 0.0);
    EXPECT_DOUBLE_EQ(*error_floors(q).omega_weimean, 0.5);
}

TEST(ErrorFloors, ByHand) {
    BoundInputs q;
    q.rho = 0.1;
    q.lambda = 0.2;
    q.beta = 0.3;
    q.xi = 2;
    q.A = 3;
    q.delta = 0.5;
    auto const report = error_floors(q);
    ASSERT_TRUE(report.ragg_valid);
    EXPECT_NEAR(report.ragg_floor, (0.01 / 0.16 + 0.09) * 4, 1e-14);
    EXPECT_DOUBLE_EQ(report.weimean_floor, 0.25 * 9);
    EXPECT_NEAR(report.omega_ragg, 0.4, 1e-15);
    EXPECT_EQ(report.verdict, FloorVerdict::ragg_lower);
}

TEST(ErrorFloors, SmallGlobalContaminationFavorsWeiMean) {
    BoundInputs q;
    q.delta = 0.05;
    q.rho = *table1_rho(Aggregator::trimean, 0.15);
    q.lambda = 0.0;
    q.beta = 0.0;
    q.xi = 1.0;
    q.A = 1.0;
    EXPECT_EQ(error_floors(q).verdict, FloorVerdict::weimean_lower);
}

TEST(ErrorFloors, VerdictScaleInvariant) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 200; ++t) {
        BoundInputs q;
        q.rho = 0.2 * unit(rng);
        q.lambda = unit(rng);
        q.beta = unit(rng);
        q.delta = unit(rng);
        q.xi = q.A = 0.1 + unit(rng);
        auto const base = error_floors(q);
        double const s = 0.01 + 100 * unit(rng);
        auto scaled = q;
        scaled.xi *= s;
        scaled.A *= s;
        auto const other = error_floors(scaled);
        EXPECT_EQ(base.verdict, other.verdict);
        EXPECT_NEAR(other.weimean_floor, s * s * base.weimean_floor, 1e-9 * s * s);
        EXPECT_NEAR(other.ragg_floor, s * s * base.ragg_floor, 1e-9 * s * s * (1 + base.ragg_floor));
    }
}

TEST(MajorityDominance, CertifiedRules) {
    for (auto rule : {Aggregator::trimean, Aggregator::faba, Aggregator::ios}) {
        auto const v = certify_majority_dominance(rule, 1000, 1);
        EXPECT_TRUE(v.pass()) << to_string(rule) << " max deviation " << v.max_deviation;
        EXPECT_FALSE(v.unexpected());
    }
}

TEST(MajorityDominance, NonDominantRulesFail) {
    for (auto rule : {Aggregator::weimean, Aggregator::mean, Aggregator::cc, Aggregator::cg}) {
        auto const v = certify_majority_dominance(rule, 200, 1);
        EXPECT_FALSE(v.pass()) << to_string(rule);
        EXPECT_FALSE(v.unexpected());
    }
    auto const rfa = certify_majority_dominance(Aggregator::rfa, 50, 1);
    EXPECT_FALSE(rfa.unexpected());
    EXPECT_THROW(certify_majority_dominance(Aggregator::faba, 0, 1), InvalidArgument);
}

TEST(MajorityDominance, OneStepClippingShiftsByPredictedAmount) {
    for (auto rule : {Aggregator::cc, Aggregator::cg}) {
        auto const ex = clipping_counterexample(rule);
        EXPECT_NEAR((ex.a - ex.z).norm(), 2.0, 1e-15);
        EXPECT_LE(ex.prediction_error(), 1e-14) << to_string(rule);
        EXPECT_NEAR(ex.offset(), 0.4, 1e-14);
    }
    EXPECT_THROW(clipping_counterexample(Aggregator::faba), InvalidArgument);
}
