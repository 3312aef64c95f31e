#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "common.hpp"
#include "data.hpp"

namespace poisonlab {

/// A differentiable local objective f_w.
class LocalCost {
public:
    virtual ~LocalCost() = default;

    [[nodiscard]] virtual std::size_t dimension() const = 0;
    [[nodiscard]] virtual double loss(Vector const& x) const = 0;
    [[nodiscard]] virtual Vector gradient(Vector const& x) const = 0;

    /// Mini-batch estimate; batch == 0 or deterministic costs give the full gradient.
    [[nodiscard]] virtual Vector stochastic_gradient(Vector const& x, std::size_t batch [[maybe_unused]],
                                                     std::mt19937_64& rng [[maybe_unused]]) const {
        return gradient(x);
    }
};

using CostPtr = std::shared_ptr<LocalCost const>;

// -------------------------------------------------------------------------- //
// Softmax regression

/// Model parameters viewed as a (num_features + 1) x num_classes matrix in
/// column-major order; the last row holds the biases.
struct SoftmaxShape {
    std::size_t num_features = 0;
    int num_classes = 0;

    [[nodiscard]] std::size_t dimension() const noexcept { return (num_features + 1) * static_cast<std::size_t>(num_classes); }
    [[nodiscard]] Eigen::Map<Matrix const> view(Vector const& x) const {
        return {x.data(), static_cast<Eigen::Index>(num_features + 1), num_classes};
    }
};

struct LossAndGradient {
    double loss = 0;
    Vector gradient;
};

namespace detail {

/// [X | 1] for a block of rows.
inline Matrix augment(Matrix const& features) {
    Matrix out(features.rows(), features.cols() + 1);
    out.leftCols(features.cols()) = features;
    out.col(features.cols()).setOnes();
    return out;
}

/// Row-wise softmax probabilities of the logits, numerically stabilized.
inline Matrix softmax_rows(Matrix logits) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        logits.row(i).array() -= logits.row(i).maxCoeff();
        logits.row(i) = logits.row(i).array().exp().matrix();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

} // namespace detail

/// Mean cross-entropy over the rows of `augmented` and its exact gradient,
/// plus `l2/2 * ||x||^2` when l2 > 0.
inline LossAndGradient softmax_loss_grad(SoftmaxShape const& shape, Vector const& x, Matrix const& augmented,
                                         std::vector<int> const& labels, double l2 = 0.0) {
    if (labels.empty())
        throw InvalidArgument("softmax_loss_grad: empty batch");
    if (static_cast<std::size_t>(x.size()) != shape.dimension())
        throw InvalidArgument("softmax_loss_grad: parameter dimension mismatch");
    auto const n = static_cast<Eigen::Index>(labels.size());
    Matrix probs = detail::softmax_rows(augmented * shape.view(x));
    double loss = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        auto const b = labels[static_cast<std::size_t>(i)];
        if (b < 0 || b >= shape.num_classes)
            throw InvalidArgument("softmax_loss_grad: label out of range");
        loss -= std::log(std::max(probs(i, b), std::numeric_limits<double>::min()));
        probs(i, b) -= 1.0;
    }
    LossAndGradient out;
    out.loss = loss / static_cast<double>(n);
    Matrix const g = augmented.transpose() * probs / static_cast<double>(n);
    out.gradient = Eigen::Map<Vector const>(g.data(), g.size());
    if (l2 > 0) {
        out.loss += 0.5 * l2 * x.squaredNorm();
        out.gradient += l2 * x;
    }
    return out;
}

inline LossAndGradient softmax_loss_grad(SoftmaxShape const& shape, Vector const& x, LabeledDataset const& data, double l2 = 0.0) {
    return softmax_loss_grad(shape, x, detail::augment(data.features), data.labels, l2);
}

class SoftmaxCost final : public LocalCost {
public:
    SoftmaxCost(LabeledDataset data, double l2 = 0.0)
        : shape_{data.num_features(), data.num_classes}, augmented_(detail::augment(data.features)), labels_(std::move(data.labels)), l2_(l2) {
        if (labels_.empty())
            throw InvalidArgument("SoftmaxCost: empty dataset");
    }

    [[nodiscard]] std::size_t dimension() const override { return shape_.dimension(); }
    [[nodiscard]] SoftmaxShape const& shape() const noexcept { return shape_; }

    [[nodiscard]] double loss(Vector const& x) const override { return softmax_loss_grad(shape_, x, augmented_, labels_, l2_).loss; }
    [[nodiscard]] Vector gradient(Vector const& x) const override {
        return softmax_loss_grad(shape_, x, augmented_, labels_, l2_).gradient;
    }

    [[nodiscard]] Vector stochastic_gradient(Vector const& x, std::size_t batch, std::mt19937_64& rng) const override {
        if (batch == 0 || batch >= labels_.size())
            return gradient(x);
        std::uniform_int_distribution<std::size_t> pick(0, labels_.size() - 1);
        Matrix rows(static_cast<Eigen::Index>(batch), augmented_.cols());
        std::vector<int> labels(batch);
        for (std::size_t k = 0; k < batch; ++k) {
            auto const i = pick(rng);
            rows.row(static_cast<Eigen::Index>(k)) = augmented_.row(static_cast<Eigen::Index>(i));
            labels[k] = labels_[i];
        }
        return softmax_loss_grad(shape_, x, rows, labels, l2_).gradient;
    }

private:
    SoftmaxShape shape_;
    Matrix augmented_;
    std::vector<int> labels_;
    double l2_;
};

/// Fraction of samples whose arg-max class matches the label.
inline double softmax_accuracy(SoftmaxShape const& shape, Vector const& x, LabeledDataset const& data) {
    if (data.size() == 0)
        return 0;
    Matrix const logits = detail::augment(data.features) * shape.view(x);
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        Eigen::Index best;
        logits.row(i).maxCoeff(&best);
        hits += best == data.labels[static_cast<std::size_t>(i)] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

// -------------------------------------------------------------------------- //
// Quadratic costs

/// f(x; t) = a [x]_t + (L/2) ||x||^2 with a = (1 - delta_max) c / sqrt(2).
/// Labels are 1-based, t in {1, 2}.
class QuadraticLabelCost final : public LocalCost {
public:
    QuadraticLabelCost(int label, double c, double L, double delta_max, std::size_t dim = 2)
        : label_(label), c_(c), L_(L), delta_max_(delta_max), dim_(dim) {
        if (dim < 2)
            throw InvalidArgument("QuadraticLabelCost: dimension must be at least 2");
        if (label < 1 || label > 2)
            throw InvalidArgument("QuadraticLabelCost: label must be 1 or 2");
        if (c < 0 || !(L > 0) || delta_max < 0 || delta_max >= 1)
            throw InvalidArgument("QuadraticLabelCost: need c >= 0, L > 0, delta_max in [0,1)");
    }

    [[nodiscard]] std::size_t dimension() const override { return dim_; }
    [[nodiscard]] int label() const noexcept { return label_; }
    [[nodiscard]] double linear_coefficient() const noexcept { return (1.0 - delta_max_) * c_ / std::sqrt(2.0); }

    [[nodiscard]] double loss(Vector const& x) const override {
        check(x);
        return linear_coefficient() * x(label_ - 1) + 0.5 * L_ * x.squaredNorm();
    }
    [[nodiscard]] Vector gradient(Vector const& x) const override {
        check(x);
        Vector g = L_ * x;
        g(label_ - 1) += linear_coefficient();
        return g;
    }

    /// The unique minimizer -(a/L) e_t.
    [[nodiscard]] Vector minimizer() const {
        Vector x = Vector::Zero(static_cast<Eigen::Index>(dim_));
        x(label_ - 1) = -linear_coefficient() / L_;
        return x;
    }

private:
    void check(Vector const& x) const {
        if (static_cast<std::size_t>(x.size()) != dim_)
            throw InvalidArgument("QuadraticLabelCost: dimension mismatch");
    }

    int label_;
    double c_, L_, delta_max_;
    std::size_t dim_;
};

/// f(x) = 1/2 (x - center)^T diag(curvature) (x - center).
class DiagonalQuadraticCost final : public LocalCost {
public:
    DiagonalQuadraticCost(Vector center, Vector curvature) : center_(std::move(center)), curvature_(std::move(curvature)) {
        if (center_.size() != curvature_.size() || center_.size() == 0)
            throw InvalidArgument("DiagonalQuadraticCost: dimension mismatch");
        if ((curvature_.array() <= 0).any())
            throw InvalidArgument("DiagonalQuadraticCost: curvature must be positive");
    }

    [[nodiscard]] std::size_t dimension() const override { return static_cast<std::size_t>(center_.size()); }
    [[nodiscard]] Vector const& center() const noexcept { return center_; }
    [[nodiscard]] Vector const& curvature() const noexcept { return curvature_; }

    [[nodiscard]] double loss(Vector const& x) const override {
        return 0.5 * (curvature_.array() * (x - center_).array().square()).sum();
    }
    [[nodiscard]] Vector gradient(Vector const& x) const override { return curvature_.cwiseProduct(x - center_); }

private:
    Vector center_;
    Vector curvature_;
};

// -------------------------------------------------------------------------- //
// Global quantities

/// Gradient of f = (1/R) sum of the given costs.
inline Vector global_gradient(std::vector<CostPtr> const& costs, Vector const& x) {
    if (costs.empty())
        throw InvalidArgument("global_gradient: no costs");
    Vector g = Vector::Zero(x.size());
    for (auto const& c : costs)
        g += c->gradient(x);
    return g / static_cast<double>(costs.size());
}

inline double global_loss(std::vector<CostPtr> const& costs, Vector const& x) {
    if (costs.empty())
        throw InvalidArgument("global_loss: no costs");
    double acc = 0;
    for (auto const& c : costs)
        acc += c->loss(x);
    return acc / static_cast<double>(costs.size());
}

/// max_w ||grad f_w(x) - g|| over `costs`; 0 when empty.
inline double max_deviation(std::vector<CostPtr> const& costs, Vector const& x, Vector const& g) {
    double out = 0;
    for (auto const& c : costs)
        out = std::max(out, (c->gradient(x) - g).norm());
    return out;
}

/// Empirical heterogeneity at x: max over regular costs of the deviation
/// from the global gradient.
inline double heterogeneity_xi(std::vector<CostPtr> const& regular, Vector const& x) {
    return max_deviation(regular, x, global_gradient(regular, x));
}

/// Empirical disturbance at x: max over poisoned costs of the deviation from
/// the regular global gradient. Zero without poisoned agents.
inline double disturbance_A(std::vector<CostPtr> const& poisoned, std::vector<CostPtr> const& regular, Vector const& x) {
    if (poisoned.empty())
        return 0;
    return max_deviation(poisoned, x, global_gradient(regular, x));
}

/// max ||grad f(x) - grad f(y)|| / ||x - y|| over `pairs` random pairs drawn
/// from N(0, scale^2 I).
inline double lipschitz_probe(LocalCost const& cost, std::size_t pairs, double scale, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale);
    auto const dim = static_cast<Eigen::Index>(cost.dimension());
    double best = 0;
    for (std::size_t k = 0; k < pairs; ++k) {
        Vector x(dim), y(dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            x(i) = normal(rng);
            y(i) = normal(rng);
        }
        best = std::max(best, (cost.gradient(x) - cost.gradient(y)).norm() / (x - y).norm());
    }
    return best;
}

} // namespace poisonlab
