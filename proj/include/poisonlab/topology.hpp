#pragma once

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace poisonlab {

// -------------------------------------------------------------------------- //
// Network

/// Undirected graph over agents 0..W-1 with an implicit self-loop at every
/// agent, plus the split of agents into regular and poisoned roles.
///
/// Neighbor lists exclude the agent itself; `closed_neighborhood` adds it.
/// Immutable after construction.
class Network {
public:
    Network(std::size_t num_agents, std::vector<std::pair<AgentId, AgentId>> const& edges, std::set<AgentId> const& poisoned)
        : neighbors_(num_agents), poisoned_(num_agents, false) {
        if (num_agents == 0)
            throw InvalidArgument("Network: at least one agent required");
        for (auto p : poisoned) {
            if (p >= num_agents)
                throw InvalidArgument("Network: poisoned agent " + std::to_string(p) + " out of range");
            poisoned_[p] = true;
        }
        if (poisoned.size() == num_agents)
            throw InvalidArgument("Network: at least one regular agent required");
        for (auto [u, v] : edges) {
            if (u >= num_agents || v >= num_agents)
                throw InvalidArgument("Network: edge (" + std::to_string(u) + "," + std::to_string(v) + ") out of range");
            if (u == v)
                continue; // self-loops are implicit
            neighbors_[u].push_back(v);
            neighbors_[v].push_back(u);
        }
        for (auto& list : neighbors_) {
            std::sort(list.begin(), list.end());
            list.erase(std::unique(list.begin(), list.end()), list.end());
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return neighbors_.size(); }
    [[nodiscard]] std::size_t num_poisoned() const noexcept {
        return static_cast<std::size_t>(std::count(poisoned_.begin(), poisoned_.end(), true));
    }
    [[nodiscard]] std::size_t num_regular() const noexcept { return size() - num_poisoned(); }

    [[nodiscard]] bool is_poisoned(AgentId w) const { return poisoned_.at(w); }
    [[nodiscard]] bool is_regular(AgentId w) const { return !poisoned_.at(w); }

    /// Neighbors of `w` excluding `w` itself, ascending.
    [[nodiscard]] std::vector<AgentId> const& neighbors(AgentId w) const { return neighbors_.at(w); }

    /// Neighbors of `w` including `w`, ascending.
    [[nodiscard]] std::vector<AgentId> closed_neighborhood(AgentId w) const {
        auto out = neighbors_.at(w);
        out.insert(std::upper_bound(out.begin(), out.end(), w), w);
        return out;
    }

    /// Number of neighbors excluding self.
    [[nodiscard]] std::size_t degree(AgentId w) const { return neighbors_.at(w).size(); }

    [[nodiscard]] bool adjacent(AgentId u, AgentId v) const {
        if (u == v)
            return u < size();
        auto const& list = neighbors_.at(u);
        return std::binary_search(list.begin(), list.end(), v);
    }

    /// Number of poisoned agents in the closed neighborhood of `w`.
    [[nodiscard]] std::size_t poisoned_in_neighborhood(AgentId w) const {
        std::size_t n = poisoned_.at(w) ? 1 : 0;
        for (auto v : neighbors_.at(w))
            n += poisoned_[v] ? 1 : 0;
        return n;
    }

    [[nodiscard]] std::vector<AgentId> regular_agents() const {
        std::vector<AgentId> out;
        for (AgentId w = 0; w < size(); ++w)
            if (!poisoned_[w])
                out.push_back(w);
        return out;
    }

    [[nodiscard]] std::set<AgentId> poisoned_agents() const {
        std::set<AgentId> out;
        for (AgentId w = 0; w < size(); ++w)
            if (poisoned_[w])
                out.insert(w);
        return out;
    }

    /// Undirected edges (u < v), self-loops omitted, lexicographic order.
    [[nodiscard]] std::vector<std::pair<AgentId, AgentId>> edges() const {
        std::vector<std::pair<AgentId, AgentId>> out;
        for (AgentId u = 0; u < size(); ++u)
            for (auto v : neighbors_[u])
                if (u < v)
                    out.emplace_back(u, v);
        return out;
    }

    friend bool operator==(Network const&, Network const&) = default;

private:
    std::vector<std::vector<AgentId>> neighbors_;
    std::vector<bool> poisoned_;
};

// -------------------------------------------------------------------------- //
// Builders

inline Network build_complete(std::size_t num_agents, std::set<AgentId> const& poisoned = {}) {
    if (num_agents == 0)
        throw InvalidArgument("build_complete: W must be positive");
    std::vector<std::pair<AgentId, AgentId>> edges;
    for (AgentId u = 0; u < num_agents; ++u)
        for (AgentId v = u + 1; v < num_agents; ++v)
            edges.emplace_back(u, v);
    return Network(num_agents, edges, poisoned);
}

/// Two cliques {0..m-1} and {m..2m-1}; agent i and m+j are joined for every
/// i != j. Mirror pairs (i, m+i) stay disconnected.
inline Network build_two_castle(std::size_t castle_size, std::set<AgentId> const& poisoned = {}) {
    if (castle_size < 2)
        throw InvalidArgument("build_two_castle: castle size must be at least 2");
    auto const m = castle_size;
    std::vector<std::pair<AgentId, AgentId>> edges;
    for (AgentId i = 0; i < m; ++i)
        for (AgentId j = i + 1; j < m; ++j) {
            edges.emplace_back(i, j);
            edges.emplace_back(m + i, m + j);
        }
    for (AgentId i = 0; i < m; ++i)
        for (AgentId j = 0; j < m; ++j)
            if (i != j)
                edges.emplace_back(i, m + j);
    return Network(2 * m, edges, poisoned);
}

/// Path 0-1-...-(W-1). Default poisoned placement is the middle agent.
inline Network build_line(std::size_t num_agents, std::optional<std::set<AgentId>> poisoned = std::nullopt) {
    if (num_agents < 2)
        throw InvalidArgument("build_line: W must be at least 2");
    std::vector<std::pair<AgentId, AgentId>> edges;
    for (AgentId u = 0; u + 1 < num_agents; ++u)
        edges.emplace_back(u, u + 1);
    return Network(num_agents, edges, poisoned.value_or(std::set<AgentId>{num_agents / 2}));
}

/// Regular agents 0..R-1 on a path; every hub R..R+H-1 is poisoned and joined
/// to all regular agents. Hubs are mutually non-adjacent.
inline Network build_fan(std::size_t num_regular, std::size_t num_hubs) {
    if (num_regular < 2)
        throw InvalidArgument("build_fan: at least two regular agents required");
    if (num_hubs < 1)
        throw InvalidArgument("build_fan: at least one hub required");
    std::vector<std::pair<AgentId, AgentId>> edges;
    for (AgentId u = 0; u + 1 < num_regular; ++u)
        edges.emplace_back(u, u + 1);
    std::set<AgentId> poisoned;
    for (AgentId h = num_regular; h < num_regular + num_hubs; ++h) {
        poisoned.insert(h);
        for (AgentId u = 0; u < num_regular; ++u)
            edges.emplace_back(u, h);
    }
    return Network(num_regular + num_hubs, edges, poisoned);
}

// -------------------------------------------------------------------------- //
// Lower-bound topology

enum class LowerBoundLayout {
    /// No poisoned agents: a regular clique.
    attack_free,
    /// Pointer construction: each regular agent has exactly two poisoned neighbors.
    pointer_blocks,
    /// Pointer construction plus dummy poisoned agents joined to every regular agent.
    pointer_blocks_with_dummies,
    /// Every poisoned agent joined to every regular agent.
    fully_connected_poisoned,
};

/// Layout of the adversarial instance used for the lower bound. Regular agents
/// are 0..R-1 and poisoned agents R..W-1; within the poisoned range the
/// block-structured agents come first and dummies after them.
struct LowerBoundPlan {
    std::size_t num_regular = 0;
    std::size_t num_agents = 0;
    LowerBoundLayout layout = LowerBoundLayout::attack_free;
    std::size_t p = 0; ///< blocks in the first sweep over the regular agents
    std::size_t q = 0; ///< blocks in the second sweep
    std::vector<std::size_t> block_sizes; ///< n_1..n_{p+q}
    std::size_t num_dummies = 0;

    /// Regular neighbors of the i-th block-structured poisoned agent (0-based).
    [[nodiscard]] std::vector<AgentId> block(std::size_t i) const {
        std::size_t start = 0;
        for (std::size_t j = 0; j < i; ++j)
            start += block_sizes[j];
        std::vector<AgentId> out;
        for (std::size_t k = 0; k < block_sizes.at(i); ++k)
            out.push_back((start + k) % num_regular);
        return out;
    }
};

namespace detail {

/// Lexicographically smallest composition of `total` into `parts` parts, each >= 2.
inline std::vector<std::size_t> smallest_composition(std::size_t total, std::size_t parts) {
    std::vector<std::size_t> out(parts, 2);
    out.back() = total - 2 * (parts - 1);
    return out;
}

/// Main pointer construction for `poisoned` block agents, or nullopt when the
/// constraints p, q >= 2, n_i >= 2, sum of each sweep = R cannot be met.
inline std::optional<LowerBoundPlan> pointer_plan(std::size_t R, std::size_t poisoned) {
    auto const max_blocks = R / 2;
    if (poisoned < 4 || poisoned > 2 * max_blocks)
        return std::nullopt;
    LowerBoundPlan plan;
    plan.num_regular = R;
    plan.num_agents = R + poisoned;
    plan.layout = LowerBoundLayout::pointer_blocks;
    plan.p = poisoned > max_blocks + 2 ? poisoned - max_blocks : 2;
    plan.q = poisoned - plan.p;
    plan.block_sizes = smallest_composition(R, plan.p);
    auto const second = smallest_composition(R, plan.q);
    plan.block_sizes.insert(plan.block_sizes.end(), second.begin(), second.end());
    return plan;
}

} // namespace detail

/// Chooses the adversarial layout for R regular agents among W total.
///
/// The pointer construction needs R+4 <= W <= 2*floor(R/2)+R. Larger W
/// appends dummy poisoned agents to the largest pointer layout; smaller W
/// falls back to joining every poisoned agent to every regular agent, which
/// requires poisoned agents to stay a strict minority.
inline LowerBoundPlan plan_lower_bound(std::size_t R, std::size_t W) {
    if (R < 2)
        throw InvalidArgument("plan_lower_bound: at least two regular agents required");
    if (W < R)
        throw InvalidArgument("plan_lower_bound: W must be at least R");
    auto const poisoned = W - R;
    if (poisoned == 0)
        return LowerBoundPlan{R, W, LowerBoundLayout::attack_free, 0, 0, {}, 0};
    if (R >= 4) {
        if (auto plan = detail::pointer_plan(R, poisoned))
            return *plan;
        auto const max_blocks = 2 * (R / 2);
        if (poisoned > max_blocks) {
            auto plan = *detail::pointer_plan(R, max_blocks);
            plan.num_agents = W;
            plan.layout = LowerBoundLayout::pointer_blocks_with_dummies;
            plan.num_dummies = poisoned - max_blocks;
            return plan;
        }
    }
    if (poisoned >= R)
        throw InvalidArgument("plan_lower_bound: no feasible layout for R=" + std::to_string(R) + ", W=" + std::to_string(W));
    return LowerBoundPlan{R, W, LowerBoundLayout::fully_connected_poisoned, 0, 0, {}, 0};
}

inline Network build_lower_bound_topology(LowerBoundPlan const& plan) {
    auto const R = plan.num_regular;
    auto const W = plan.num_agents;
    std::vector<std::pair<AgentId, AgentId>> edges;
    for (AgentId u = 0; u < R; ++u)
        for (AgentId v = u + 1; v < R; ++v)
            edges.emplace_back(u, v);
    std::set<AgentId> poisoned;
    for (AgentId w = R; w < W; ++w)
        poisoned.insert(w);
    auto const blocks = plan.block_sizes.size();
    for (std::size_t i = 0; i < blocks; ++i)
        for (auto r : plan.block(i))
            edges.emplace_back(r, R + i);
    if (plan.layout == LowerBoundLayout::pointer_blocks_with_dummies) {
        // each dummy joins two regular agents other than 0 and R-1
        for (AgentId w = R + blocks; w < W; ++w) {
            auto const j = w - R - blocks;
            edges.emplace_back(1 + (2 * j) % (R - 2), w);
            edges.emplace_back(1 + (2 * j + 1) % (R - 2), w);
        }
    } else {
        for (AgentId w = R + blocks; w < W; ++w)
            for (AgentId r = 0; r < R; ++r)
                edges.emplace_back(r, w);
    }
    return Network(W, edges, poisoned);
}

inline Network build_lower_bound_topology(std::size_t R, std::size_t W) {
    return build_lower_bound_topology(plan_lower_bound(R, W));
}

// -------------------------------------------------------------------------- //
// Analysis

/// Induced subgraph on the regular agents, relabeled 0..R-1 in ascending
/// order of their original ids (see Network::regular_agents for the map).
inline Network regular_subgraph(Network const& net) {
    auto const regular = net.regular_agents();
    std::vector<AgentId> index(net.size(), net.size());
    for (std::size_t i = 0; i < regular.size(); ++i)
        index[regular[i]] = i;
    std::vector<std::pair<AgentId, AgentId>> edges;
    for (auto [u, v] : net.edges())
        if (index[u] < net.size() && index[v] < net.size())
            edges.emplace_back(index[u], index[v]);
    return Network(regular.size(), edges, {});
}

/// Component id per agent (ids assigned in order of first appearance).
inline std::vector<std::size_t> connected_components(Network const& net) {
    auto constexpr unseen = static_cast<std::size_t>(-1);
    std::vector<std::size_t> comp(net.size(), unseen);
    std::size_t next = 0;
    for (AgentId s = 0; s < net.size(); ++s) {
        if (comp[s] != unseen)
            continue;
        std::queue<AgentId> frontier;
        frontier.push(s);
        comp[s] = next;
        while (!frontier.empty()) {
            auto const u = frontier.front();
            frontier.pop();
            for (auto v : net.neighbors(u))
                if (comp[v] == unseen) {
                    comp[v] = next;
                    frontier.push(v);
                }
        }
        ++next;
    }
    return comp;
}

inline bool is_connected(Network const& net) {
    auto const comp = connected_components(net);
    return std::all_of(comp.begin(), comp.end(), [](auto c) { return c == 0; });
}

struct AgentContamination {
    AgentId agent;
    Rational fraction; ///< poisoned share of the closed neighborhood
};

struct ContaminationReport {
    Rational delta;     ///< 1 - R/W
    Rational delta_max; ///< max over regular agents of their poisoned share
    std::vector<AgentContamination> per_agent; ///< regular agents only
};

inline ContaminationReport contamination(Network const& net) {
    auto const W = static_cast<long long>(net.size());
    auto const R = static_cast<long long>(net.num_regular());
    ContaminationReport report{Rational(W - R, W), Rational(0, 1), {}};
    for (auto w : net.regular_agents()) {
        auto const closed = static_cast<long long>(net.degree(w) + 1);
        Rational frac(static_cast<long long>(net.poisoned_in_neighborhood(w)), closed);
        report.per_agent.push_back({w, frac});
        if (report.delta_max < frac)
            report.delta_max = frac;
    }
    return report;
}

/// Relabels agent w as perm[w]; roles travel with the agents.
inline Network relabel(Network const& net, std::vector<AgentId> const& perm) {
    if (perm.size() != net.size())
        throw InvalidArgument("relabel: permutation size mismatch");
    std::vector<std::pair<AgentId, AgentId>> edges;
    for (auto [u, v] : net.edges())
        edges.emplace_back(perm[u], perm[v]);
    std::set<AgentId> poisoned;
    for (auto p : net.poisoned_agents())
        poisoned.insert(perm[p]);
    return Network(net.size(), edges, poisoned);
}

// -------------------------------------------------------------------------- //
// Edge-list text format
//
//   W R
//   u v          (one undirected edge per line, self-loops implicit)
//   ...
//   poisoned: i j k

inline void write_edge_list(std::ostream& os, Network const& net) {
    os << net.size() << ' ' << net.num_regular() << '\n';
    for (auto [u, v] : net.edges())
        os << u << ' ' << v << '\n';
    os << "poisoned:";
    for (auto p : net.poisoned_agents())
        os << ' ' << p;
    os << '\n';
}

inline Network read_edge_list(std::istream& is) {
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](std::string const& what) -> Network {
        throw InvalidArgument("edge list line " + std::to_string(lineno) + ": " + what);
    };
    std::size_t W = 0, R = 0;
    bool have_header = false;
    std::optional<std::set<AgentId>> poisoned;
    std::vector<std::pair<AgentId, AgentId>> edges;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        if (!have_header) {
            if (!(ls >> W >> R))
                return fail("expected 'W R' header");
            have_header = true;
            continue;
        }
        if (line.rfind("poisoned:", 0) == 0) {
            std::istringstream ps(line.substr(9));
            poisoned.emplace();
            AgentId p;
            while (ps >> p)
                poisoned->insert(p);
            if (!ps.eof())
                return fail("malformed poisoned list");
            continue;
        }
        AgentId u, v;
        if (!(ls >> u >> v))
            return fail("expected 'u v' edge");
        edges.emplace_back(u, v);
    }
    if (!have_header)
        return fail("missing header");
    if (!poisoned)
        return fail("missing 'poisoned:' line");
    if (W < poisoned->size() || W - poisoned->size() != R)
        return fail("header R does not match the poisoned list");
    return Network(W, edges, *poisoned);
}

} // namespace poisonlab
