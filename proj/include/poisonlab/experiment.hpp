#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "attack.hpp"
#include "config.hpp"
#include "data.hpp"
#include "mixing.hpp"
#include "model.hpp"
#include "sim.hpp"
#include "topology.hpp"

namespace poisonlab {

/// Everything a run needs except the aggregator.
struct Workload {
    Network network;
    MixingMatrix mixing;
    std::vector<LabeledDataset> clean_shards;
    std::vector<LabeledDataset> attacked_shards;
    LabeledDataset eval;
    SoftmaxShape shape;
};

inline Workload prepare_workload(ExperimentConfig const& config) {
    auto network = build_network(config.topology);
    auto mixing = build_mixing(network, config.topology.mixing);
    LabeledDataset train, eval;
    int const B = config.data.synthetic.num_classes;
    if (config.data.source == DataSource::synthetic) {
        train = synth_gaussian(config.data.synthetic);
        auto test_spec = config.data.synthetic;
        test_spec.per_class = config.data.test_per_class;
        test_spec.seed = config.data.synthetic.seed + 1;
        eval = synth_gaussian(test_spec);
    } else {
        train = load_idx(config.data.images, config.data.labels, B);
        eval = config.data.test_images.empty() ? train : load_idx(config.data.test_images, config.data.test_labels, B);
    }
    auto pspec = config.partition;
    pspec.num_agents = network.size();
    auto clean = partition(train, pspec);
    auto aspec = config.attack;
    aspec.num_classes = B;
    auto attacked = apply_attack(clean, network, aspec);
    SoftmaxShape const shape{train.num_features(), B};
    return {std::move(network), std::move(mixing), std::move(clean), std::move(attacked), std::move(eval), shape};
}

inline Problem make_problem(Workload const& w, bool attacked, double l2) {
    auto const& shards = attacked ? w.attacked_shards : w.clean_shards;
    std::vector<CostPtr> costs;
    costs.reserve(shards.size());
    for (auto const& s : shards)
        costs.push_back(std::make_shared<SoftmaxCost>(s, l2));
    auto eval = std::make_shared<LabeledDataset const>(w.eval);
    auto const shape = w.shape;
    return Problem(w.network, w.mixing, std::move(costs), [eval, shape](Vector const& x) { return softmax_accuracy(shape, x, *eval); });
}

namespace detail {

template <class F>
auto with_context(std::string const& ctx, F&& f) {
    try {
        return f();
    } catch (AggregatorBreakdown const& e) {
        throw AggregatorBreakdown(ctx + ": " + e.what());
    } catch (NotConverged const& e) {
        throw NotConverged(ctx + ": " + e.what());
    } catch (InvalidArgument const& e) {
        throw InvalidArgument(ctx + ": " + e.what());
    } catch (Error const& e) {
        throw Error(ctx + ": " + e.what());
    }
}

} // namespace detail

struct RunResult {
    std::string label; ///< aggregator name, or weimean_attackfree for the baseline
    MetricsTrace trace;
};

struct SummaryRow {
    std::string label;
    double final_accuracy = 0;
    double final_grad_norm_sq = 0;
    double final_consensus_err = 0;
};

struct ExperimentResult {
    std::vector<RunResult> runs;

    [[nodiscard]] std::vector<SummaryRow> summary() const {
        std::vector<SummaryRow> out;
        for (auto const& r : runs) {
            auto const& f = r.trace.final();
            out.push_back({r.label, f.accuracy, f.grad_norm_sq, f.consensus_err});
        }
        return out;
    }

    [[nodiscard]] SummaryRow at(std::string const& label) const {
        for (auto const& row : summary())
            if (row.label == label)
                return row;
        throw InvalidArgument("no run labelled '" + label + "'");
    }
};

inline constexpr char const* baseline_label = "weimean_attackfree";

/// Runs every configured aggregator from x0 = 0, then the optional baseline.
inline ExperimentResult run_experiment(ExperimentConfig const& config) {
    auto const workload = detail::with_context("experiment " + config.name, [&] { return prepare_workload(config); });
    Problem const attacked = make_problem(workload, true, config.l2);
    Vector const x0 = Vector::Zero(static_cast<Eigen::Index>(workload.shape.dimension()));
    ExperimentResult result;
    for (auto rule : config.aggregators) {
        auto sim = config.sim;
        sim.aggregator = rule;
        auto const label = std::string(to_string(rule));
        result.runs.push_back({label, detail::with_context("aggregator " + label, [&] { return run(attacked, sim, x0); })});
    }
    if (config.baseline) {
        Problem const clean = make_problem(workload, false, config.l2);
        auto sim = config.sim;
        sim.aggregator = Aggregator::weimean;
        result.runs.push_back({baseline_label, detail::with_context(baseline_label, [&] { return run(clean, sim, x0); })});
    }
    return result;
}

inline constexpr char const* summary_csv_header = "aggregator,final_accuracy,final_grad_norm_sq,final_consensus_err";

inline void write_summary_csv(std::ostream& os, std::vector<SummaryRow> const& rows) {
    os << summary_csv_header << '\n';
    for (auto const& r : rows)
        os << r.label << ',' << format_double(r.final_accuracy) << ',' << format_double(r.final_grad_norm_sq) << ','
           << format_double(r.final_consensus_err) << '\n';
}

inline constexpr char const* output_dir_env = "POISONLAB_OUTPUT_DIR";

/// The environment override wins over the config's output_dir.
inline std::filesystem::path resolve_output_dir(ExperimentConfig const& config) {
    if (char const* env = std::getenv(output_dir_env); env && *env)
        return env;
    return config.output_dir;
}

/// <dir>/<label>.csv per run plus <dir>/summary.csv. Returns the files written.
inline std::vector<std::filesystem::path> write_experiment(ExperimentResult const& result, std::filesystem::path const& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto open = [&](std::filesystem::path const& p) {
        std::ofstream out(p);
        if (!out)
            throw Error("cannot write '" + p.string() + "'");
        written.push_back(p);
        return out;
    };
    for (auto const& r : result.runs) {
        auto out = open(dir / (r.label + ".csv"));
        write_trace_csv(out, r.trace);
    }
    auto out = open(dir / "summary.csv");
    write_summary_csv(out, result.summary());
    return written;
}

} // namespace poisonlab
