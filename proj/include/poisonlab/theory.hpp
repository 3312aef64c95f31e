#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "aggregate.hpp"
#include "common.hpp"
#include "mixing.hpp"
#include "model.hpp"
#include "sim.hpp"
#include "topology.hpp"

namespace poisonlab {

// -------------------------------------------------------------------------- //
// Lower-bound instances

/// Two label assignments on one network that every majority-dominant
/// aggregator cannot tell apart, although their regular global gradients
/// differ by a constant vector.
struct LowerBoundInstancePair {
    LowerBoundPlan plan;
    Network network;
    std::array<std::vector<int>, 2> labels; ///< per agent, 1-based label, instance 1 then 2
    double c = 1;
    double L = 1;
    double delta_max = 0;
    std::size_t dim = 2;

    /// Local costs of instance `t` (0 or 1), one per agent.
    [[nodiscard]] std::vector<CostPtr> costs(std::size_t t) const {
        std::vector<CostPtr> out;
        for (auto b : labels.at(t))
            out.push_back(std::make_shared<QuadraticLabelCost>(b, c, L, delta_max, dim));
        return out;
    }

    [[nodiscard]] Vector global_gradient(std::size_t t, Vector const& x) const {
        auto const all = costs(t);
        std::vector<CostPtr> regular;
        for (auto w : network.regular_agents())
            regular.push_back(all[w]);
        return poisonlab::global_gradient(regular, x);
    }

    /// ||grad f1(x) - grad f2(x)||, independent of x.
    [[nodiscard]] double gradient_gap() const {
        Vector const x = Vector::Zero(static_cast<Eigen::Index>(dim));
        return (global_gradient(0, x) - global_gradient(1, x)).norm();
    }

    /// Lower bound on max_t (1/K) sum_k ||grad f_t(xbar_k)||^2 for any shared trajectory.
    [[nodiscard]] double bound() const { return gradient_gap() * gradient_gap() / 8.0; }

    /// delta_max^2 c^2 / 8; equals bound() for the pointer layout.
    [[nodiscard]] double delta_max_bound() const { return delta_max * delta_max * c * c / 8.0; }

    /// Common lower bound -c^2/(2L) of both global costs.
    [[nodiscard]] double f_star() const { return -c * c / (2.0 * L); }
};

inline LowerBoundInstancePair make_lower_bound_pair(std::size_t R, std::size_t W, double c, double L, std::size_t dim = 2) {
    LowerBoundInstancePair pair{plan_lower_bound(R, W), build_lower_bound_topology(R, W), {}, c, L, 0, dim};
    pair.delta_max = contamination(pair.network).delta_max.value();
    auto& first = pair.labels[0];
    auto& second = pair.labels[1];
    first.assign(W, 1);
    second.assign(W, 1);
    switch (pair.plan.layout) {
    case LowerBoundLayout::attack_free:
        break;
    case LowerBoundLayout::pointer_blocks:
    case LowerBoundLayout::pointer_blocks_with_dummies:
        for (std::size_t i = 0; i < pair.plan.block_sizes.size(); ++i)
            first[R + i] = 2;
        second[0] = 2;
        second[R - 1] = 2;
        break;
    case LowerBoundLayout::fully_connected_poisoned:
        first[R] = 2;
        second[0] = 2;
        break;
    }
    // validates c, L, delta_max once
    QuadraticLabelCost(1, c, L, pair.delta_max, dim);
    return pair;
}

struct IndistinguishabilityReport {
    Aggregator aggregator = Aggregator::trimean;
    MixingScheme weighting = MixingScheme::metropolis_hastings;
    std::size_t iterations = 0;
    bool identical = false;
    double max_divergence = 0; ///< max |x_w^k(1) - x_w^k(2)| over agents, coordinates, k
    std::array<double, 2> avg_sq_grad{}; ///< (1/K) sum_{k=1..K} ||grad f_t(xbar_k)||^2
    double measured = 0; ///< max of avg_sq_grad
    double bound = 0;
    double delta_max_bound = 0;

    [[nodiscard]] bool bound_holds() const { return measured >= bound; }
    [[nodiscard]] bool certified() const { return identical && bound_holds(); }
};

inline constexpr double indistinguishability_tolerance = 1e-12;

/// Runs both instances from x0 = 0 with gamma = 1/sqrt(K) and compares every
/// agent's iterate at every k.
inline IndistinguishabilityReport verify_indistinguishable(LowerBoundInstancePair const& pair, Aggregator rule, std::size_t K,
                                                           MixingScheme weighting = MixingScheme::metropolis_hastings,
                                                           AggregatorParams const& params = {}) {
    if (K == 0)
        throw InvalidArgument("verify_indistinguishable: K must be positive");
    IndistinguishabilityReport report;
    report.aggregator = rule;
    report.weighting = weighting;
    report.iterations = K;
    report.bound = pair.bound();
    report.delta_max_bound = pair.delta_max_bound();

    SimConfig config;
    config.iterations = K;
    config.step = {StepRuleKind::inverse_sqrt_horizon, 1.0};
    config.aggregator = rule;
    config.params = params;
    config.metrics_every = K;

    auto const mixing = build_mixing(pair.network, weighting);
    Vector const x0 = Vector::Zero(static_cast<Eigen::Index>(pair.dim));
    std::vector<std::vector<Vector>> first_run;

    for (std::size_t t = 0; t < 2; ++t) {
        Problem problem(pair.network, mixing, pair.costs(t));
        double acc = 0;
        run(problem, config, x0, [&](SystemState const& s) {
            if (s.iteration > 0)
                acc += pair.global_gradient(t, regular_average(pair.network, s.models)).squaredNorm();
            if (t == 0) {
                first_run.push_back(s.models);
                return;
            }
            auto const& other = first_run.at(s.iteration);
            for (std::size_t w = 0; w < s.models.size(); ++w)
                report.max_divergence = std::max(report.max_divergence, (s.models[w] - other[w]).cwiseAbs().maxCoeff());
        });
        report.avg_sq_grad[t] = acc / static_cast<double>(K);
    }
    report.identical = report.max_divergence <= indistinguishability_tolerance;
    report.measured = std::max(report.avg_sq_grad[0], report.avg_sq_grad[1]);
    return report;
}

// -------------------------------------------------------------------------- //
// Contraction constants and error floors

/// Order-level contraction constant with unit hidden constant, or nullopt
/// past the rule's breakdown point. Throws for rules without an entry.
inline std::optional<double> table1_rho(Aggregator rule, double delta_max) {
    if (delta_max < 0 || delta_max >= 1)
        return std::nullopt;
    switch (rule) {
    case Aggregator::trimean:
        if (delta_max >= 0.5)
            return std::nullopt;
        return delta_max / (1 - 2 * delta_max);
    case Aggregator::faba:
    case Aggregator::ios:
        if (3 * delta_max >= 1)
            return std::nullopt;
        return delta_max / (1 - 3 * delta_max);
    case Aggregator::cc: return std::sqrt(delta_max);
    case Aggregator::cg: return std::sqrt(delta_max * (1 - delta_max));
    default: break;
    }
    throw InvalidArgument("table1_rho: no contraction constant for " + std::string(to_string(rule)));
}

struct BoundInputs {
    double rho = 0;
    double lambda = 0; ///< ||M - 1 p^T||_inf
    double beta = 0;
    double xi = 0;
    double A = 0;
    double delta = 0;
    std::optional<double> lambda_prime;
};

enum class FloorVerdict { weimean_lower, ragg_lower, tie, ragg_no_guarantee };

inline std::string_view to_string(FloorVerdict v) {
    switch (v) {
    case FloorVerdict::weimean_lower: return "weimean_lower";
    case FloorVerdict::ragg_lower: return "ragg_lower";
    case FloorVerdict::tie: return "tie";
    case FloorVerdict::ragg_no_guarantee: return "ragg_no_guarantee";
    }
    return "?";
}

/// Order-level floors with hidden constants set to 1.
struct BoundReport {
    BoundInputs inputs;
    double ragg_floor = 0;  ///< (rho^2/(1-lambda-4rho)^2 + beta^2) xi^2, meaningful only if ragg_valid
    bool ragg_valid = false;
    std::string ragg_note;
    double weimean_floor = 0; ///< delta^2 A^2
    double omega_ragg = 0;    ///< 1 - (4 rho + lambda)
    std::optional<double> omega_weimean; ///< 1 - lambda'
    FloorVerdict verdict = FloorVerdict::ragg_no_guarantee;
};

inline BoundReport error_floors(BoundInputs const& q) {
    BoundReport out;
    out.inputs = q;
    out.omega_ragg = 1 - (4 * q.rho + q.lambda);
    if (q.lambda_prime)
        out.omega_weimean = 1 - *q.lambda_prime;
    out.weimean_floor = q.delta * q.delta * q.A * q.A;
    if (!(q.lambda < 1)) {
        out.ragg_note = "no guarantee: lambda >= 1";
    } else if (!(q.rho < (1 - q.lambda) / 4)) {
        out.ragg_note = "no guarantee: rho >= (1 - lambda)/4";
    } else {
        out.ragg_valid = true;
        auto const denom = 1 - q.lambda - 4 * q.rho;
        out.ragg_floor = (q.rho * q.rho / (denom * denom) + q.beta * q.beta) * q.xi * q.xi;
    }
    if (!out.ragg_valid)
        out.verdict = FloorVerdict::ragg_no_guarantee;
    else if (out.weimean_floor < out.ragg_floor)
        out.verdict = FloorVerdict::weimean_lower;
    else if (out.ragg_floor < out.weimean_floor)
        out.verdict = FloorVerdict::ragg_lower;
    else
        out.verdict = FloorVerdict::tie;
    return out;
}

// -------------------------------------------------------------------------- //
// Majority-dominance certification

inline constexpr double majority_dominance_tolerance = 1e-10;

/// Whether the rule is known to be majority-dominant; nullopt when no claim
/// is made (the smoothed geometric median only approaches the majority point).
inline std::optional<bool> expected_majority_dominant(Aggregator rule) {
    switch (rule) {
    case Aggregator::trimean:
    case Aggregator::faba:
    case Aggregator::ios: return true;
    case Aggregator::weimean:
    case Aggregator::mean:
    case Aggregator::cc:
    case Aggregator::cg: return false;
    case Aggregator::rfa: return std::nullopt;
    }
    return std::nullopt;
}

/// Deterministic clipping counterexample: regular inputs z, poisoned inputs
/// a with 0 < tau < ||a - z||, aggregated at a regular agent.
struct ClippingCounterexample {
    Vector z;
    Vector a;
    std::size_t inputs = 5;
    std::size_t poisoned = 2;
    double tau = 1;
    Vector predicted; ///< z + (P/N) tau (a - z)/||a - z||
    Vector output;

    [[nodiscard]] double offset() const { return (output - z).norm(); }
    [[nodiscard]] double prediction_error() const { return (output - predicted).norm(); }
};

inline ClippingCounterexample clipping_counterexample(Aggregator rule) {
    if (rule != Aggregator::cc && rule != Aggregator::cg)
        throw InvalidArgument("clipping_counterexample: only cc and cg");
    ClippingCounterexample ex;
    ex.z = Vector::Zero(2);
    ex.z << 1.0, -1.0;
    ex.a = ex.z + Vector::Constant(2, std::sqrt(2.0)); // ||a - z|| = 2
    AggregationInput in;
    in.self = 0;
    for (AgentId v = 0; v < ex.inputs; ++v) {
        in.agents.push_back(v);
        in.values.push_back(v < ex.inputs - ex.poisoned ? ex.z : ex.a);
        in.weights.push_back(1.0 / static_cast<double>(ex.inputs));
    }
    in.clip_threshold = ex.tau;
    in.cc_steps = 1;
    Vector const dir = (ex.a - ex.z).normalized();
    ex.predicted = ex.z + (static_cast<double>(ex.poisoned) / static_cast<double>(ex.inputs)) * ex.tau * dir;
    ex.output = aggregate(rule, in);
    return ex;
}

struct CertificationVerdict {
    Aggregator aggregator = Aggregator::trimean;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double max_deviation = 0;
    std::optional<ClippingCounterexample> counterexample;

    [[nodiscard]] bool pass() const {
        return failures == 0 && (!counterexample || counterexample->offset() <= majority_dominance_tolerance);
    }
    /// True when the outcome contradicts a known property of the rule.
    [[nodiscard]] bool unexpected() const {
        auto const expected = expected_majority_dominant(aggregator);
        return expected && *expected != pass();
    }
};

/// One randomized majority-dominance trial: a strict majority of regular
/// inputs equal to z plus adversarial poisoned inputs. For weighted rules
/// the poisoned weight stays below 1/2. Returns ||output - z||_inf.
inline double majority_trial(Aggregator rule, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> pick_n(3, 15), pick_dim(1, 6), pick_mode(0, 3);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    auto const n = pick_n(rng);
    auto const P = std::uniform_int_distribution<std::size_t>(0, (n - 1) / 2)(rng);
    auto const dim = static_cast<Eigen::Index>(pick_dim(rng));
    auto const mode = pick_mode(rng);

    auto random_vector = [&](double scale) {
        Vector v(dim);
        for (Eigen::Index i = 0; i < dim; ++i)
            v(i) = scale * normal(rng);
        return v;
    };

    Vector const z = random_vector(1.0);
    Vector const direction = random_vector(1.0).normalized();
    Vector const shared = random_vector(10.0);

    std::vector<AgentId> ids(3 * n);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(n);

    AggregationInput in;
    in.agents = ids;
    in.self = ids[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)];
    in.trim_count = P;
    std::vector<double> raw(n);
    double regular_mass = 0, poisoned_mass = 0;
    for (std::size_t k = 0; k < n; ++k) {
        raw[k] = 0.1 + unit(rng);
        (k < n - P ? regular_mass : poisoned_mass) += raw[k];
        if (k < n - P) {
            in.values.push_back(z);
            continue;
        }
        switch (mode) {
        case 0: in.values.push_back(random_vector(10.0)); break;
        case 1: in.values.push_back(z + (20.0 * unit(rng) - 10.0) * direction); break;
        case 2: in.values.push_back(random_vector(1e6)); break;
        default: in.values.push_back(shared); break;
        }
    }
    auto const poisoned_share = 0.49 * unit(rng);
    for (std::size_t k = 0; k < n; ++k)
        in.weights.push_back(k < n - P ? raw[k] / regular_mass * (P ? 1 - poisoned_share : 1.0)
                                       : raw[k] / poisoned_mass * poisoned_share);
    in.clip_threshold = 0.5;

    Vector const out = aggregate(rule, in);
    return (out - z).cwiseAbs().maxCoeff();
}

inline CertificationVerdict certify_majority_dominance(Aggregator rule, std::size_t trials, std::uint64_t seed) {
    if (trials == 0)
        throw InvalidArgument("certify_majority_dominance: at least one trial required");
    CertificationVerdict verdict;
    verdict.aggregator = rule;
    verdict.trials = trials;
    std::mt19937_64 rng(seed);
    for (std::size_t t = 0; t < trials; ++t) {
        auto const dev = majority_trial(rule, rng);
        verdict.max_deviation = std::max(verdict.max_deviation, dev);
        if (!(dev <= majority_dominance_tolerance))
            ++verdict.failures;
    }
    if (rule == Aggregator::cc || rule == Aggregator::cg)
        verdict.counterexample = clipping_counterexample(rule);
    return verdict;
}

} // namespace poisonlab
