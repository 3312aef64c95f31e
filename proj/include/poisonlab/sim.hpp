#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "aggregate.hpp"
#include "common.hpp"
#include "mixing.hpp"
#include "model.hpp"
#include "topology.hpp"

namespace poisonlab {

// -------------------------------------------------------------------------- //
// Configuration

enum class StepRuleKind {
    inverse_sqrt_horizon, ///< gamma = scale / sqrt(K)
    decaying,             ///< gamma_k = scale / sqrt(k), k counted from 1
    fixed,                ///< gamma = scale
};

inline std::string_view to_string(StepRuleKind k) {
    switch (k) {
    case StepRuleKind::inverse_sqrt_horizon: return "inv_sqrt_K";
    case StepRuleKind::decaying: return "decaying";
    case StepRuleKind::fixed: return "fixed";
    }
    return "?";
}

inline StepRuleKind parse_step_rule(std::string_view name) {
    if (name == "inv_sqrt_K")
        return StepRuleKind::inverse_sqrt_horizon;
    if (name == "decaying")
        return StepRuleKind::decaying;
    if (name == "fixed")
        return StepRuleKind::fixed;
    throw InvalidArgument("unknown step rule '" + std::string(name) + "'");
}

struct StepRule {
    StepRuleKind kind = StepRuleKind::inverse_sqrt_horizon;
    double scale = 1.0;

    /// Step size for the update that produces iterate k+1 (k is 0-based).
    [[nodiscard]] double at(std::size_t k, std::size_t horizon) const {
        switch (kind) {
        case StepRuleKind::inverse_sqrt_horizon: return scale / std::sqrt(static_cast<double>(std::max<std::size_t>(horizon, 1)));
        case StepRuleKind::decaying: return scale / std::sqrt(static_cast<double>(k + 1));
        case StepRuleKind::fixed: return scale;
        }
        return scale;
    }

    friend bool operator==(StepRule const&, StepRule const&) = default;
};

/// Per-rule knobs; unset fields take the rule's default.
struct AggregatorParams {
    std::optional<std::size_t> trim_count;    ///< default: true poisoned count in the neighborhood
    std::optional<double> clip_threshold;     ///< default: adaptive median distance
    std::size_t cc_steps = 1;
    std::size_t rfa_max_iter = 200;
    double rfa_tol = 1e-10;

    friend bool operator==(AggregatorParams const&, AggregatorParams const&) = default;
};

struct SimConfig {
    std::size_t iterations = 100;
    StepRule step;
    Aggregator aggregator = Aggregator::weimean;
    AggregatorParams params;
    std::uint64_t seed = 1;
    std::size_t metrics_every = 10;
    std::size_t batch_size = 0; ///< 0: full local gradients

    friend bool operator==(SimConfig const&, SimConfig const&) = default;
};

/// A network with one local cost per agent (poisoned agents carry their
/// corrupted cost) and the mixing weights every agent uses.
struct Problem {
    Network network;
    MixingMatrix mixing;
    std::vector<CostPtr> costs;
    std::function<double(Vector const&)> accuracy; ///< optional evaluator of the average model

    Problem(Network net, MixingMatrix E, std::vector<CostPtr> local_costs, std::function<double(Vector const&)> acc = {})
        : network(std::move(net)), mixing(std::move(E)), costs(std::move(local_costs)), accuracy(std::move(acc)) {
        if (costs.size() != network.size())
            throw InvalidArgument("Problem: one cost per agent required");
        if (mixing.size() != network.size())
            throw InvalidArgument("Problem: mixing matrix size mismatch");
        for (auto const& c : costs)
            if (!c || c->dimension() != costs.front()->dimension())
                throw InvalidArgument("Problem: costs must share one dimension");
    }

    [[nodiscard]] std::size_t dimension() const { return costs.front()->dimension(); }

    [[nodiscard]] std::vector<CostPtr> regular_costs() const {
        std::vector<CostPtr> out;
        for (auto w : network.regular_agents())
            out.push_back(costs[w]);
        return out;
    }
    [[nodiscard]] std::vector<CostPtr> poisoned_costs() const {
        std::vector<CostPtr> out;
        for (auto w : network.poisoned_agents())
            out.push_back(costs[w]);
        return out;
    }
};

// -------------------------------------------------------------------------- //
// State and metrics

struct SystemState {
    std::size_t iteration = 0;
    std::vector<Vector> models; ///< one per agent
};

struct MetricsRow {
    std::size_t iter = 0;
    double grad_norm_sq = 0;  ///< ||grad f(xbar)||^2
    double consensus_err = 0; ///< max over regular w of ||x_w - xbar||^2
    double accuracy = std::numeric_limits<double>::quiet_NaN();
    double xi = 0;
    double A = 0;
    double loss = 0;
};

struct MetricsTrace {
    std::vector<MetricsRow> rows;

    [[nodiscard]] MetricsRow const& final() const {
        if (rows.empty())
            throw InvalidArgument("MetricsTrace: empty");
        return rows.back();
    }
};

inline constexpr char const* trace_csv_header = "iter,grad_norm_sq,consensus_err,accuracy,xi,A,loss";

inline void write_trace_csv(std::ostream& os, MetricsTrace const& trace) {
    os << trace_csv_header << '\n';
    for (auto const& r : trace.rows)
        os << r.iter << ',' << format_double(r.grad_norm_sq) << ',' << format_double(r.consensus_err) << ','
           << format_double(r.accuracy) << ',' << format_double(r.xi) << ',' << format_double(r.A) << ','
           << format_double(r.loss) << '\n';
}

/// Average of the regular agents' models.
inline Vector regular_average(Network const& net, std::vector<Vector> const& models) {
    Vector acc = Vector::Zero(models.front().size());
    for (auto w : net.regular_agents())
        acc += models[w];
    return acc / static_cast<double>(net.num_regular());
}

inline MetricsRow measure(Problem const& problem, SystemState const& state) {
    auto const& net = problem.network;
    MetricsRow row;
    row.iter = state.iteration;
    Vector const xbar = regular_average(net, state.models);
    for (auto w : net.regular_agents())
        row.consensus_err = std::max(row.consensus_err, (state.models[w] - xbar).squaredNorm());
    auto const regular = problem.regular_costs();
    Vector const g = global_gradient(regular, xbar);
    row.grad_norm_sq = g.squaredNorm();
    row.xi = max_deviation(regular, xbar, g);
    row.A = max_deviation(problem.poisoned_costs(), xbar, g);
    row.loss = global_loss(regular, xbar);
    if (problem.accuracy)
        row.accuracy = problem.accuracy(xbar);
    return row;
}

// -------------------------------------------------------------------------- //
// Algorithm

/// x - gamma * grad, the local half step.
inline Vector local_update(LocalCost const& cost, Vector const& x, double gamma, std::size_t batch, std::mt19937_64& rng) {
    if (!(gamma > 0))
        throw InvalidArgument("local_update: step size must be positive");
    Vector const g = cost.stochastic_gradient(x, batch, rng);
    if (!g.allFinite())
        throw Error("local_update: non-finite gradient");
    return x - gamma * g;
}

inline Vector local_update(LocalCost const& cost, Vector const& x, double gamma) {
    std::mt19937_64 unused;
    return local_update(cost, x, gamma, 0, unused);
}

/// Builds agent w's aggregation input from everyone's half steps.
inline AggregationInput aggregation_input(Problem const& problem, AgentId w, std::vector<Vector> const& half,
                                          AggregatorParams const& params) {
    AggregationInput in;
    in.self = w;
    in.agents = problem.network.closed_neighborhood(w);
    for (auto v : in.agents) {
        in.values.push_back(half[v]);
        in.weights.push_back(problem.mixing(w, v));
    }
    in.trim_count = params.trim_count.value_or(problem.network.poisoned_in_neighborhood(w));
    in.clip_threshold = params.clip_threshold;
    in.cc_steps = params.cc_steps;
    in.rfa_max_iter = params.rfa_max_iter;
    in.rfa_tol = params.rfa_tol;
    return in;
}

/// Synchronous rounds: every agent (poisoned ones included) takes a local
/// gradient step, then aggregates its neighbors' half steps.
class Simulation {
public:
    Simulation(Problem const& problem, SimConfig config, Vector const& x0)
        : Simulation(problem, std::move(config), std::vector<Vector>(problem.network.size(), x0)) {}

    Simulation(Problem const& problem, SimConfig config, std::vector<Vector> initial)
        : problem_(problem), config_(std::move(config)) {
        if (initial.size() != problem.network.size())
            throw InvalidArgument("Simulation: one initial model per agent required");
        for (auto const& x : initial)
            if (static_cast<std::size_t>(x.size()) != problem.dimension())
                throw InvalidArgument("Simulation: initial model dimension mismatch");
        state_.models = std::move(initial);
        for (AgentId w = 0; w < problem.network.size(); ++w)
            rngs_.emplace_back(config_.seed * 0x9e3779b97f4a7c15ULL + w);
    }

    [[nodiscard]] SystemState const& state() const noexcept { return state_; }
    [[nodiscard]] MetricsRow measure() const { return poisonlab::measure(problem_, state_); }

    void step() {
        auto const W = problem_.network.size();
        auto const gamma = config_.step.at(state_.iteration, config_.iterations);
        std::vector<Vector> half(W);
        for (AgentId w = 0; w < W; ++w) {
            try {
                half[w] = local_update(*problem_.costs[w], state_.models[w], gamma, config_.batch_size, rngs_[w]);
            } catch (Error const& e) {
                throw Error("agent " + std::to_string(w) + ": " + e.what());
            }
        }
        std::vector<Vector> next(W);
        for (AgentId w = 0; w < W; ++w) {
            try {
                next[w] = aggregate(config_.aggregator, aggregation_input(problem_, w, half, config_.params));
            } catch (AggregatorBreakdown const& e) {
                throw AggregatorBreakdown(std::string(to_string(config_.aggregator)) + " at agent " + std::to_string(w) + ": " + e.what());
            }
        }
        state_.models = std::move(next);
        ++state_.iteration;
    }

    /// Runs to the configured horizon. Metrics are taken at iteration 0,
    /// every `metrics_every` iterations, and at the end. `observer` sees
    /// every state including the initial one.
    MetricsTrace run(std::function<void(SystemState const&)> const& observer = {}) {
        MetricsTrace trace;
        auto const every = std::max<std::size_t>(config_.metrics_every, 1);
        if (observer)
            observer(state_);
        trace.rows.push_back(measure());
        while (state_.iteration < config_.iterations) {
            step();
            if (observer)
                observer(state_);
            if (state_.iteration % every == 0 || state_.iteration == config_.iterations)
                trace.rows.push_back(measure());
        }
        return trace;
    }

private:
    Problem const& problem_;
    SimConfig config_;
    SystemState state_;
    std::vector<std::mt19937_64> rngs_;
};

inline MetricsTrace run(Problem const& problem, SimConfig const& config, Vector const& x0,
                        std::function<void(SystemState const&)> const& observer = {}) {
    Simulation sim(problem, config, x0);
    return sim.run(observer);
}

} // namespace poisonlab
