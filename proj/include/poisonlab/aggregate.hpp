#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace poisonlab {

enum class Aggregator { weimean, mean, trimean, faba, cc, cg, ios, rfa };

inline constexpr Aggregator all_aggregators[] = {
    Aggregator::weimean, Aggregator::mean, Aggregator::trimean, Aggregator::faba,
    Aggregator::cc,      Aggregator::cg,   Aggregator::ios,     Aggregator::rfa,
};

inline std::string_view to_string(Aggregator a) {
    switch (a) {
    case Aggregator::weimean: return "weimean";
    case Aggregator::mean: return "mean";
    case Aggregator::trimean: return "trimean";
    case Aggregator::faba: return "faba";
    case Aggregator::cc: return "cc";
    case Aggregator::cg: return "cg";
    case Aggregator::ios: return "ios";
    case Aggregator::rfa: return "rfa";
    }
    return "?";
}

inline Aggregator parse_aggregator(std::string_view name) {
    for (auto a : all_aggregators)
        if (to_string(a) == name)
            return a;
    throw InvalidArgument("unknown aggregator '" + std::string(name) + "'");
}

/// Whether the rule reads the mixing row.
inline bool uses_weights(Aggregator a) {
    return a == Aggregator::weimean || a == Aggregator::cg || a == Aggregator::ios;
}

/// Everything agent w sees when aggregating: the messages of its closed
/// neighborhood plus the per-rule parameters.
struct AggregationInput {
    AgentId self = 0;
    std::vector<AgentId> agents; ///< senders, must contain `self`
    std::vector<Vector> values;  ///< values[i] was sent by agents[i]
    std::vector<double> weights; ///< mixing row entries per sender; empty if absent
    std::size_t trim_count = 0;  ///< Q_w
    std::optional<double> clip_threshold; ///< tau_w; adaptive when unset
    std::size_t cc_steps = 1;
    std::size_t rfa_max_iter = 200;
    double rfa_tol = 1e-10;

    [[nodiscard]] std::size_t count() const noexcept { return values.size(); }
    [[nodiscard]] bool has_weights() const noexcept { return !weights.empty(); }
};

namespace detail {

/// Sender order sorted by agent id, so that results never depend on the
/// order in which messages arrived.
inline std::vector<std::size_t> canonical_order(AggregationInput const& in) {
    if (in.values.empty())
        throw InvalidArgument("aggregate: no inputs");
    if (in.agents.size() != in.values.size())
        throw InvalidArgument("aggregate: agents/values size mismatch");
    if (in.has_weights() && in.weights.size() != in.values.size())
        throw InvalidArgument("aggregate: weights size mismatch");
    auto const dim = in.values.front().size();
    for (auto const& v : in.values)
        if (v.size() != dim)
            throw InvalidArgument("aggregate: inconsistent vector dimensions");
    std::vector<std::size_t> order(in.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return in.agents[a] < in.agents[b]; });
    return order;
}

inline std::size_t self_position(AggregationInput const& in) {
    auto const it = std::find(in.agents.begin(), in.agents.end(), in.self);
    if (it == in.agents.end())
        throw InvalidArgument("aggregate: inputs do not include the aggregating agent");
    return static_cast<std::size_t>(it - in.agents.begin());
}

inline void require_weights(AggregationInput const& in, std::string_view rule) {
    if (!in.has_weights())
        throw InvalidArgument(std::string(rule) + ": mixing weights required");
}

inline Vector clip(Vector const& v, double tau) {
    auto const norm = v.norm();
    if (norm <= tau)
        return v;
    return (tau / norm) * v;
}

inline double median(std::vector<double> xs) {
    if (xs.empty())
        return 0;
    std::sort(xs.begin(), xs.end());
    auto const n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Default clipping threshold: median distance from the local vector to the
/// other inputs.
inline double adaptive_threshold(AggregationInput const& in) {
    auto const self = in.values[self_position(in)];
    std::vector<double> dists;
    for (std::size_t i = 0; i < in.count(); ++i)
        if (in.agents[i] != in.self)
            dists.push_back((in.values[i] - self).norm());
    return median(std::move(dists));
}

inline double threshold(AggregationInput const& in) {
    if (in.clip_threshold) {
        if (*in.clip_threshold < 0)
            throw InvalidArgument("clipping threshold must be nonnegative");
        return *in.clip_threshold;
    }
    return adaptive_threshold(in);
}

/// Iterative filtering shared by FABA (uniform weights) and IOS (mixing
/// weights): drop the survivor farthest from the current weighted average,
/// trim_count times, then return the renormalized average of the rest.
/// Ties on distance drop the smallest agent id.
inline Vector filter_farthest(AggregationInput const& in, std::vector<double> const& weights, std::string_view rule) {
    auto const order = canonical_order(in);
    if (in.trim_count >= in.count())
        throw AggregatorBreakdown(std::string(rule) + ": trim count " + std::to_string(in.trim_count) +
                                  " leaves no input among " + std::to_string(in.count()));
    std::vector<std::size_t> alive = order;
    auto weighted_average = [&]() {
        Vector acc = Vector::Zero(in.values.front().size());
        double mass = 0;
        for (auto i : alive) {
            acc += weights[i] * in.values[i];
            mass += weights[i];
        }
        if (!(mass > 0))
            throw AggregatorBreakdown(std::string(rule) + ": all weight removed");
        return Vector(acc / mass);
    };
    for (std::size_t round = 0; round < in.trim_count; ++round) {
        auto const center = weighted_average();
        std::size_t victim = 0;
        double worst = -1;
        for (std::size_t k = 0; k < alive.size(); ++k) {
            auto const d = (in.values[alive[k]] - center).squaredNorm();
            if (d > worst) {
                worst = d;
                victim = k;
            }
        }
        alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    return weighted_average();
}

} // namespace detail

// -------------------------------------------------------------------------- //
// Rules

/// sum_v E_wv y_v over the closed neighborhood.
inline Vector weimean(AggregationInput const& in) {
    detail::require_weights(in, "weimean");
    auto const order = detail::canonical_order(in);
    Vector acc = Vector::Zero(in.values.front().size());
    for (auto i : order)
        acc += in.weights[i] * in.values[i];
    return acc;
}

inline Vector mean(AggregationInput const& in) {
    auto const order = detail::canonical_order(in);
    Vector acc = Vector::Zero(in.values.front().size());
    for (auto i : order)
        acc += in.values[i];
    return acc / static_cast<double>(in.count());
}

/// Coordinate-wise trimmed mean: drop the trim_count largest and smallest
/// values of each coordinate and average the rest.
inline Vector trimean(AggregationInput const& in) {
    detail::canonical_order(in);
    auto const n = in.count();
    if (2 * in.trim_count >= n)
        throw AggregatorBreakdown("trimean: 2*Q=" + std::to_string(2 * in.trim_count) + " >= " + std::to_string(n) + " inputs");
    auto const dim = in.values.front().size();
    Vector out(dim);
    std::vector<double> column(n);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (std::size_t k = 0; k < n; ++k)
            column[k] = in.values[k](i);
        std::sort(column.begin(), column.end());
        double acc = 0;
        for (std::size_t k = in.trim_count; k < n - in.trim_count; ++k)
            acc += column[k];
        out(i) = acc / static_cast<double>(n - 2 * in.trim_count);
    }
    return out;
}

inline Vector faba(AggregationInput const& in) {
    return detail::filter_farthest(in, std::vector<double>(in.count(), 1.0), "faba");
}

/// Weighted FABA. The local vector is eligible for removal like any other.
inline Vector ios(AggregationInput const& in) {
    detail::require_weights(in, "ios");
    return detail::filter_farthest(in, in.weights, "ios");
}

/// Centered clipping started from the local vector:
/// s <- s + mean_v CLIP(y_v - s, tau), cc_steps times.
inline Vector cc(AggregationInput const& in) {
    auto const order = detail::canonical_order(in);
    if (in.cc_steps < 1)
        throw InvalidArgument("cc: at least one step required");
    auto const tau = detail::threshold(in);
    Vector s = in.values[detail::self_position(in)];
    for (std::size_t t = 0; t < in.cc_steps; ++t) {
        Vector step = Vector::Zero(s.size());
        for (auto i : order)
            step += detail::clip(in.values[i] - s, tau);
        s += step / static_cast<double>(in.count());
    }
    return s;
}

/// Clipped gossip: y_w + sum_v E_wv CLIP(y_v - y_w, tau).
inline Vector cg(AggregationInput const& in) {
    detail::require_weights(in, "cg");
    auto const order = detail::canonical_order(in);
    auto const tau = detail::threshold(in);
    Vector const self = in.values[detail::self_position(in)];
    Vector step = Vector::Zero(self.size());
    for (auto i : order)
        step += in.weights[i] * detail::clip(in.values[i] - self, tau);
    return self + step;
}

struct GeometricMedianResult {
    Vector point;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Smoothed Weiszfeld iteration for the geometric median, started at the mean.
/// Distances below `smoothing` are clamped to it.
inline GeometricMedianResult geometric_median(AggregationInput const& in, double smoothing = 1e-6) {
    auto const order = detail::canonical_order(in);
    GeometricMedianResult out{mean(in), 0, false};
    auto const dim = in.values.front().size();
    for (std::size_t it = 0; it < in.rfa_max_iter; ++it) {
        Vector num = Vector::Zero(dim);
        double den = 0;
        for (auto i : order) {
            auto const beta = 1.0 / std::max(smoothing, (in.values[i] - out.point).norm());
            num += beta * in.values[i];
            den += beta;
        }
        Vector next = num / den;
        auto const step = (next - out.point).norm();
        out.point = std::move(next);
        out.iterations = it + 1;
        if (step < in.rfa_tol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

inline Vector rfa(AggregationInput const& in) { return geometric_median(in).point; }

inline Vector aggregate(Aggregator rule, AggregationInput const& in) {
    switch (rule) {
    case Aggregator::weimean: return weimean(in);
    case Aggregator::mean: return mean(in);
    case Aggregator::trimean: return trimean(in);
    case Aggregator::faba: return faba(in);
    case Aggregator::cc: return cc(in);
    case Aggregator::cg: return cg(in);
    case Aggregator::ios: return ios(in);
    case Aggregator::rfa: return rfa(in);
    }
    throw InvalidArgument("aggregate: unknown rule");
}

} // namespace poisonlab
