#pragma once

#include <algorithm>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"
#include "topology.hpp"

namespace poisonlab {

// -------------------------------------------------------------------------- //
// Mixing matrices

enum class MixingScheme {
    metropolis_hastings,
    equal_weight,
    /// E_wv = 1/|closed neighborhood of w|. Row-stochastic only.
    neighborhood_uniform,
};

inline std::string_view to_string(MixingScheme s) {
    switch (s) {
    case MixingScheme::metropolis_hastings: return "metropolis_hastings";
    case MixingScheme::equal_weight: return "equal_weight";
    case MixingScheme::neighborhood_uniform: return "neighborhood_uniform";
    }
    return "?";
}

inline MixingScheme parse_mixing_scheme(std::string_view name) {
    if (name == "metropolis_hastings" || name == "mh")
        return MixingScheme::metropolis_hastings;
    if (name == "equal_weight" || name == "equal")
        return MixingScheme::equal_weight;
    if (name == "neighborhood_uniform" || name == "uniform")
        return MixingScheme::neighborhood_uniform;
    throw InvalidArgument("unknown mixing scheme '" + std::string(name) + "'");
}

/// W x W weights supported on the edges (and self-loops) of a network.
struct MixingMatrix {
    Matrix entries;
    MixingScheme scheme = MixingScheme::metropolis_hastings;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(entries.rows()); }
    [[nodiscard]] double operator()(AgentId w, AgentId v) const { return entries(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(v)); }
};

/// Row-stochastic R x R matrix over the regular subgraph.
struct VirtualMixing {
    Matrix entries;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(entries.rows()); }
};

namespace detail {

/// 1 - sum_i 1/den_i, rounded once. Falls back to floating-point summation
/// if the exact fraction outgrows 64 bits.
inline double one_minus_reciprocals(std::vector<std::size_t> const& dens) {
    __int128 num = 0, den = 1;
    for (auto d : dens) {
        auto const k = static_cast<__int128>(d);
        num = num * k + den;
        den *= k;
        __int128 a = num < 0 ? -num : num, b = den;
        while (b != 0) {
            auto const t = a % b;
            a = b;
            b = t;
        }
        if (a > 1) {
            num /= a;
            den /= a;
        }
        if (den > (static_cast<__int128>(1) << 62)) {
            double off = 0;
            for (auto x : dens)
                off += 1.0 / static_cast<double>(x);
            return 1.0 - off;
        }
    }
    return static_cast<double>(static_cast<long long>(den - num)) / static_cast<double>(static_cast<long long>(den));
}

} // namespace detail

inline MixingMatrix metropolis_hastings(Network const& net) {
    auto const W = static_cast<Eigen::Index>(net.size());
    Matrix E = Matrix::Zero(W, W);
    for (AgentId w = 0; w < net.size(); ++w) {
        std::vector<std::size_t> dens;
        for (auto v : net.neighbors(w)) {
            dens.push_back(std::max(net.degree(w), net.degree(v)) + 1);
            E(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(v)) = 1.0 / static_cast<double>(dens.back());
        }
        E(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(w)) = detail::one_minus_reciprocals(dens);
    }
    return {std::move(E), MixingScheme::metropolis_hastings};
}

inline MixingMatrix equal_weight(Network const& net) {
    auto const W = static_cast<Eigen::Index>(net.size());
    std::size_t d_max = 0;
    for (AgentId w = 0; w < net.size(); ++w)
        d_max = std::max(d_max, net.degree(w));
    auto const weight = 1.0 / static_cast<double>(d_max + 1);
    Matrix E = Matrix::Zero(W, W);
    for (AgentId w = 0; w < net.size(); ++w) {
        for (auto v : net.neighbors(w))
            E(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(v)) = weight;
        E(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(w)) =
            static_cast<double>(d_max + 1 - net.degree(w)) / static_cast<double>(d_max + 1);
    }
    return {std::move(E), MixingScheme::equal_weight};
}

inline MixingMatrix neighborhood_uniform(Network const& net) {
    auto const W = static_cast<Eigen::Index>(net.size());
    Matrix E = Matrix::Zero(W, W);
    for (AgentId w = 0; w < net.size(); ++w) {
        auto const weight = 1.0 / static_cast<double>(net.degree(w) + 1);
        for (auto v : net.closed_neighborhood(w))
            E(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(v)) = weight;
    }
    return {std::move(E), MixingScheme::neighborhood_uniform};
}

inline MixingMatrix build_mixing(Network const& net, MixingScheme scheme) {
    switch (scheme) {
    case MixingScheme::metropolis_hastings: return metropolis_hastings(net);
    case MixingScheme::equal_weight: return equal_weight(net);
    case MixingScheme::neighborhood_uniform: return neighborhood_uniform(net);
    }
    throw InvalidArgument("build_mixing: unknown scheme");
}

/// Largest deviation of any row or column sum from 1.
inline double stochasticity_defect(Matrix const& E) {
    auto const rows = (E.rowwise().sum().array() - 1.0).abs().maxCoeff();
    auto const cols = (E.colwise().sum().array() - 1.0).abs().maxCoeff();
    return std::max(rows, cols);
}

inline bool is_doubly_stochastic(Matrix const& E, double tol = 1e-12) {
    return E.rows() == E.cols() && (E.array() >= -tol).all() && stochasticity_defect(E) <= tol;
}

/// True when nonzeros of E sit exactly on the edges and self-loops of `net`.
inline bool supported_on(Matrix const& E, Network const& net) {
    if (static_cast<std::size_t>(E.rows()) != net.size() || E.rows() != E.cols())
        return false;
    for (AgentId w = 0; w < net.size(); ++w)
        for (AgentId v = 0; v < net.size(); ++v) {
            auto const nonzero = E(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(v)) != 0.0;
            if (nonzero != net.adjacent(w, v))
                return false;
        }
    return true;
}

// -------------------------------------------------------------------------- //
// Spectral quantities

/// Operator 2-norm of E - (1/W) 11^T. Symmetric E goes through an exact
/// eigen-solve; anything else through singular values.
inline double lambda_prime(Matrix const& E) {
    auto const W = E.rows();
    if (W != E.cols())
        throw InvalidArgument("lambda_prime: matrix must be square");
    Matrix const D = E - Matrix::Constant(W, W, 1.0 / static_cast<double>(W));
    if ((E - E.transpose()).cwiseAbs().maxCoeff() <= 1e-15) {
        Eigen::SelfAdjointEigenSolver<Matrix> solver(D, Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success)
            throw NotConverged("lambda_prime: eigen-solve failed");
        return solver.eigenvalues().cwiseAbs().maxCoeff();
    }
    Eigen::JacobiSVD<Matrix> svd(D);
    return svd.singularValues()(0);
}

inline double lambda_prime(MixingMatrix const& E) { return lambda_prime(E.entries); }

/// Number of closed communicating classes of the chain with transition matrix M.
inline std::size_t closed_class_count(Matrix const& M) {
    auto const n = static_cast<std::size_t>(M.rows());
    // reach[i][j]: j reachable from i
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<std::size_t> stack{s};
        reach[s][s] = true;
        while (!stack.empty()) {
            auto const u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < n; ++v)
                if (M(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) > 0 && !reach[s][v]) {
                    reach[s][v] = true;
                    stack.push_back(v);
                }
        }
    }
    std::size_t closed = 0;
    std::vector<bool> assigned(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i])
            continue;
        bool is_closed = true;
        for (std::size_t j = 0; j < n; ++j) {
            auto const mutual = reach[i][j] && reach[j][i];
            if (mutual)
                assigned[j] = true;
            else if (reach[i][j])
                is_closed = false;
        }
        closed += is_closed ? 1 : 0;
    }
    return closed;
}

/// Stationary left eigenvector p^T M = p^T, p >= 0, sum(p) = 1.
///
/// Power iteration on the lazy chain (I + M)/2, which shares M's stationary
/// vector and is aperiodic. Throws when the stationary vector is not unique.
inline Vector perron(VirtualMixing const& M, double tol = 1e-12, std::size_t max_iter = 100000) {
    auto const R = M.entries.rows();
    if (R == 0 || M.entries.cols() != R)
        throw InvalidArgument("perron: matrix must be square and non-empty");
    if (((M.entries.rowwise().sum().array() - 1.0).abs() > 1e-12).any() || (M.entries.array() < 0).any())
        throw InvalidArgument("perron: matrix is not row-stochastic");
    if (closed_class_count(M.entries) != 1)
        throw InvalidArgument("perron: stationary vector is not unique (reducible virtual mixing matrix)");
    Matrix const lazy_t = 0.5 * (Matrix::Identity(R, R) + M.entries).transpose();
    Vector p = Vector::Constant(R, 1.0 / static_cast<double>(R));
    double change = 0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        Vector next = lazy_t * p;
        next /= next.sum();
        change = (next - p).lpNorm<1>();
        p = std::move(next);
        if (change <= 0.01 * tol)
            return p;
    }
    if (change <= tol)
        return p;
    throw NotConverged("perron: power iteration did not converge");
}

/// ||M - 1 p^T||_inf (max absolute row sum).
inline double lambda_inf(VirtualMixing const& M, Vector const& p) {
    auto const R = M.entries.rows();
    if (p.size() != R || M.entries.cols() != R)
        throw InvalidArgument("lambda_inf: dimension mismatch");
    Matrix const D = M.entries - Vector::Ones(R) * p.transpose();
    return D.cwiseAbs().rowwise().sum().maxCoeff();
}

/// ||1 p^T - (1/R) 1 1^T||_inf. Every row equals p^T - 1^T/R.
inline double beta_inf(Vector const& p, std::size_t R) {
    if (static_cast<std::size_t>(p.size()) != R)
        throw InvalidArgument("beta_inf: dimension mismatch");
    return (p.array() - 1.0 / static_cast<double>(R)).abs().sum();
}

/// E restricted to the regular agents with rows renormalized to sum 1.
/// Only meaningful for the weight-based aggregators (CG, IOS).
inline VirtualMixing restrict_to_regular(MixingMatrix const& E, Network const& net) {
    auto const regular = net.regular_agents();
    auto const R = static_cast<Eigen::Index>(regular.size());
    Matrix M(R, R);
    for (Eigen::Index i = 0; i < R; ++i)
        for (Eigen::Index j = 0; j < R; ++j)
            M(i, j) = E(regular[static_cast<std::size_t>(i)], regular[static_cast<std::size_t>(j)]);
    for (Eigen::Index i = 0; i < R; ++i)
        M.row(i) /= M.row(i).sum();
    return {std::move(M)};
}

struct SpectralReport {
    double lambda_prime = 0;
    double lambda_inf = 0;
    double beta_inf = 0;
    Vector perron;
};

inline SpectralReport spectral_report(MixingMatrix const& E, VirtualMixing const& M) {
    SpectralReport out;
    out.lambda_prime = lambda_prime(E);
    out.perron = perron(M);
    out.lambda_inf = lambda_inf(M, out.perron);
    out.beta_inf = beta_inf(out.perron, M.size());
    return out;
}

/// Row-major CSV, 17 significant digits, no header.
inline void write_matrix_csv(std::ostream& os, Matrix const& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j)
                os << ',';
            os << format_double(m(i, j));
        }
        os << '\n';
    }
}

} // namespace poisonlab
