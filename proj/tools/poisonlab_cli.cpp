#include <poisonlab/config.hpp>
#include <poisonlab/experiment.hpp>
#include <poisonlab/mixing.hpp>
#include <poisonlab/theory.hpp>
#include <poisonlab/topology.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace poisonlab;

namespace {

enum Exit { ok = 0, usage = 1, runtime = 2, certification = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::size_t parse_count(std::string const& s, char const* what) {
    std::size_t value = 0;
    auto const [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw UsageError(std::string(what) + ": expected a non-negative integer, got '" + s + "'");
    return value;
}

Aggregator aggregator_arg(std::string const& name) {
    try {
        return parse_aggregator(name);
    } catch (InvalidArgument const& e) {
        throw UsageError(e.what());
    }
}

/// "auto" picks neighborhood-uniform weights for ios and MH otherwise.
MixingScheme weighting_arg(std::string const& name, Aggregator rule) {
    if (name == "auto")
        return rule == Aggregator::ios ? MixingScheme::neighborhood_uniform : MixingScheme::metropolis_hastings;
    try {
        return parse_mixing_scheme(name);
    } catch (InvalidArgument const& e) {
        throw UsageError(e.what());
    }
}

/// `kind args...` as on the command line: complete W, two-castle m, line W,
/// fan R [H], lowerbound R W, file PATH.
TopologySpec topology_from_args(std::string const& kind_name, std::vector<std::string> const& args,
                                std::optional<std::vector<AgentId>> const& poisoned) {
    TopologySpec spec;
    try {
        spec.kind = parse_topology_kind(kind_name);
    } catch (InvalidArgument const& e) {
        throw UsageError(e.what());
    }
    auto want = [&](std::size_t lo, std::size_t hi, char const* form) {
        if (args.size() < lo || args.size() > hi)
            throw UsageError(std::string("usage: topology ") + form);
    };
    switch (spec.kind) {
    case TopologyKind::complete: want(1, 1, "complete W"); spec.size = parse_count(args[0], "W"); break;
    case TopologyKind::two_castle: want(1, 1, "two-castle m"); spec.size = parse_count(args[0], "m"); break;
    case TopologyKind::line: want(1, 1, "line W"); spec.size = parse_count(args[0], "W"); break;
    case TopologyKind::fan:
        want(1, 2, "fan R [H]");
        spec.size = parse_count(args[0], "R");
        spec.hubs = args.size() > 1 ? parse_count(args[1], "H") : 1;
        break;
    case TopologyKind::lower_bound:
        want(2, 2, "lowerbound R W");
        spec.size = parse_count(args[0], "R");
        spec.agents = parse_count(args[1], "W");
        break;
    case TopologyKind::edge_list: want(1, 1, "file PATH"); spec.file = args[0]; break;
    }
    spec.poisoned = poisoned;
    return spec;
}

void add_topology_args(CLI::App* cmd, std::string& kind, std::vector<std::string>& args, std::vector<AgentId>& poisoned) {
    cmd->add_option("kind", kind, "complete | two-castle | line | fan | lowerbound | file")->required();
    cmd->add_option("args", args, "sizes for the chosen kind, or an edge-list path");
    cmd->add_option("--poisoned", poisoned, "poisoned agent ids (complete, two-castle, line)");
}

std::optional<std::vector<AgentId>> given(CLI::App const* cmd, std::vector<AgentId> const& ids) {
    if (cmd->count("--poisoned") == 0)
        return std::nullopt;
    return ids;
}

/// Writes CSV to `path`, or to stdout for "-".
template <class F>
void emit_csv(std::string const& path, F&& write) {
    if (path.empty())
        return;
    if (path == "-") {
        write(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write '" + path + "'");
    write(out);
}

std::string yes_no(bool b) { return b ? "true" : "false"; }

// -------------------------------------------------------------------------- //

int cmd_run(std::string const& path, bool print_only) {
    auto const config = load_config(path);
    if (print_only) {
        std::cout << serialize_config(config);
        return ok;
    }
    auto const result = run_experiment(config);
    auto const dir = resolve_output_dir(config);
    auto const files = write_experiment(result, dir);
    std::cout << "experiment " << config.name << '\n';
    write_summary_csv(std::cout, result.summary());
    for (auto const& f : files)
        std::cout << "wrote " << f.string() << '\n';
    return ok;
}

int cmd_topology(TopologySpec const& spec, std::string const& export_path) {
    auto const net = build_network(spec);
    auto const report = contamination(net);
    auto const regular = regular_subgraph(net);
    std::cout << "W = " << net.size() << '\n'
              << "R = " << net.num_regular() << '\n'
              << "delta = " << report.delta << '\n'
              << "delta_max = " << report.delta_max << '\n'
              << "connected = " << yes_no(is_connected(net)) << '\n'
              << "regular_connected = " << yes_no(net.num_regular() > 0 && is_connected(regular)) << '\n'
              << "lambda_prime_mh = " << format_double(lambda_prime(metropolis_hastings(net))) << '\n'
              << "lambda_prime_equal = " << format_double(lambda_prime(equal_weight(net))) << '\n';
    if (!export_path.empty()) {
        if (export_path == "-") {
            write_edge_list(std::cout, net);
        } else {
            std::ofstream out(export_path);
            if (!out)
                throw Error("cannot write '" + export_path + "'");
            write_edge_list(out, net);
            std::cout << "wrote " << export_path << '\n';
        }
    }
    return ok;
}

struct LowerBoundArgs {
    std::size_t R = 4, W = 8, K = 100, dim = 2;
    double c = 1, L = 1;
    std::string agg = "trimean";
    std::string weights = "auto";
    std::string csv;
};

int cmd_lowerbound(LowerBoundArgs const& a) {
    auto const rule = aggregator_arg(a.agg);
    auto const scheme = weighting_arg(a.weights, rule);
    auto const pair = make_lower_bound_pair(a.R, a.W, a.c, a.L, a.dim);
    auto const r = verify_indistinguishable(pair, rule, a.K, scheme);
    auto const pass = r.certified();
    std::cout << "lowerbound R=" << a.R << " W=" << a.W << " agg=" << a.agg << " K=" << a.K << " c=" << format_double(a.c)
              << " L=" << format_double(a.L) << " weights=" << to_string(scheme) << '\n'
              << "delta_max = " << format_double(pair.delta_max) << '\n'
              << "identical = " << yes_no(r.identical) << '\n'
              << "max_divergence = " << format_double(r.max_divergence) << '\n'
              << "avg_sq_grad_1 = " << format_double(r.avg_sq_grad[0]) << '\n'
              << "avg_sq_grad_2 = " << format_double(r.avg_sq_grad[1]) << '\n'
              << "measured = " << format_double(r.measured) << '\n'
              << "bound = " << format_double(r.bound) << '\n'
              << "delta_max_bound = " << format_double(r.delta_max_bound) << '\n'
              << (pass ? "PASS" : "FAIL") << ' ' << a.agg << ": "
              << (pass ? "iterates identical, measured >= bound" : r.identical ? "bound violated" : "iterates diverge") << '\n';
    emit_csv(a.csv, [&](std::ostream& os) {
        os << "R,W,aggregator,K,c,L,weights,delta_max,identical,max_divergence,avg_sq_grad_1,avg_sq_grad_2,measured,bound,delta_max_bound,pass\n"
           << a.R << ',' << a.W << ',' << a.agg << ',' << a.K << ',' << format_double(a.c) << ',' << format_double(a.L) << ','
           << to_string(scheme) << ',' << format_double(pair.delta_max) << ',' << yes_no(r.identical) << ','
           << format_double(r.max_divergence) << ',' << format_double(r.avg_sq_grad[0]) << ',' << format_double(r.avg_sq_grad[1])
           << ',' << format_double(r.measured) << ',' << format_double(r.bound) << ',' << format_double(r.delta_max_bound) << ','
           << yes_no(pass) << '\n';
    });
    auto const expected = expected_majority_dominant(rule);
    return !pass && expected && *expected ? certification : ok;
}

int cmd_certify(std::string const& agg, std::size_t trials, std::uint64_t seed, std::string const& csv) {
    auto const rule = aggregator_arg(agg);
    auto const v = certify_majority_dominance(rule, trials, seed);
    auto const expected = expected_majority_dominant(rule);
    std::cout << "certify " << agg << " trials=" << trials << " seed=" << seed << '\n'
              << "failures = " << v.failures << '\n'
              << "max_deviation = " << format_double(v.max_deviation) << '\n'
              << "expected = " << (expected ? (*expected ? "majority-dominant" : "not majority-dominant") : "no claim") << '\n';
    if (auto const& ex = v.counterexample) {
        std::cout << "counterexample: " << ex->inputs << " inputs, " << ex->poisoned << " at a = (" << format_double(ex->a(0)) << ", "
                  << format_double(ex->a(1)) << "), rest at z = (" << format_double(ex->z(0)) << ", " << format_double(ex->z(1))
                  << "), tau = " << format_double(ex->tau) << '\n'
                  << "  output = (" << format_double(ex->output(0)) << ", " << format_double(ex->output(1)) << ")\n"
                  << "  predicted = (" << format_double(ex->predicted(0)) << ", " << format_double(ex->predicted(1)) << ")\n"
                  << "  offset = " << format_double(ex->offset()) << '\n';
    }
    std::cout << (v.pass() ? "PASS" : "FAIL") << ' ' << agg << '\n';
    emit_csv(csv, [&](std::ostream& os) {
        os << "aggregator,trials,seed,failures,max_deviation,counterexample_offset,pass,unexpected\n"
           << agg << ',' << trials << ',' << seed << ',' << v.failures << ',' << format_double(v.max_deviation) << ','
           << (v.counterexample ? format_double(v.counterexample->offset()) : "") << ',' << yes_no(v.pass()) << ','
           << yes_no(v.unexpected()) << '\n';
    });
    return v.unexpected() ? certification : ok;
}

int cmd_bounds(TopologySpec const& spec, std::vector<std::string> const& aggs, double xi, double A, std::string const& csv) {
    auto const net = build_network(spec);
    auto const report = contamination(net);
    auto const E = metropolis_hastings(net);
    auto const regular = regular_subgraph(net);
    bool const connected = net.num_regular() > 0 && is_connected(regular);
    double lambda = std::numeric_limits<double>::infinity(), beta = 0;
    if (connected) {
        VirtualMixing const M{metropolis_hastings(regular).entries};
        auto const p = perron(M);
        lambda = lambda_inf(M, p);
        beta = beta_inf(p, M.size());
    }
    auto const lp = lambda_prime(E);
    std::cout << "W = " << net.size() << ", R = " << net.num_regular() << ", delta = " << report.delta
              << ", delta_max = " << report.delta_max << '\n'
              << "regular_connected = " << yes_no(connected) << '\n'
              << "lambda = " << format_double(lambda) << ", beta = " << format_double(beta) << ", lambda_prime = " << format_double(lp)
              << '\n'
              << "xi = " << format_double(xi) << ", A = " << format_double(A) << '\n';
    struct Row {
        std::string agg;
        std::optional<double> rho;
        BoundReport b;
    };
    std::vector<Row> rows;
    for (auto const& name : aggs) {
        auto const rule = aggregator_arg(name);
        auto const rho = table1_rho(rule, report.delta_max.value());
        BoundInputs in{rho.value_or(std::numeric_limits<double>::infinity()), lambda, beta, xi, A, report.delta.value(), lp};
        auto b = error_floors(in);
        if (!rho)
            b.ragg_note = "no guarantee: breakdown at this delta_max";
        rows.push_back({name, rho, b});
        std::cout << name << ": rho = " << (rho ? format_double(*rho) : "breakdown") << ", ragg_floor = "
                  << (b.ragg_valid ? format_double(b.ragg_floor) : b.ragg_note) << ", weimean_floor = " << format_double(b.weimean_floor)
                  << ", verdict = " << to_string(b.verdict) << '\n';
    }
    emit_csv(csv, [&](std::ostream& os) {
        os << "aggregator,W,R,delta,delta_max,regular_connected,lambda,beta,lambda_prime,xi,A,rho,ragg_valid,ragg_floor,weimean_floor,verdict\n";
        for (auto const& r : rows)
            os << r.agg << ',' << net.size() << ',' << net.num_regular() << ',' << format_double(report.delta.value()) << ','
               << format_double(report.delta_max.value()) << ',' << yes_no(connected) << ',' << format_double(lambda) << ','
               << format_double(beta) << ',' << format_double(lp) << ',' << format_double(xi) << ',' << format_double(A) << ','
               << (r.rho ? format_double(*r.rho) : "") << ',' << yes_no(r.b.ragg_valid) << ','
               << (r.b.ragg_valid ? format_double(r.b.ragg_floor) : "") << ',' << format_double(r.b.weimean_floor) << ','
               << to_string(r.b.verdict) << '\n';
    });
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decentralized learning under label poisoning"};
    app.require_subcommand(0, 1);
    bool print_defaults = false;
    app.add_flag("--print-config", print_defaults, "print the default experiment config and exit");

    auto* run = app.add_subcommand("run", "run every aggregator of an experiment config");
    std::string config_path;
    bool print_config = false;
    run->add_option("config", config_path, "experiment config file")->required();
    run->add_flag("--print-config", print_config, "print the parsed config with all defaults and exit");

    auto* topo = app.add_subcommand("topology", "contamination rates and spectra of a topology");
    std::string topo_kind, export_path;
    std::vector<std::string> topo_args;
    std::vector<AgentId> topo_poisoned;
    add_topology_args(topo, topo_kind, topo_args, topo_poisoned);
    topo->add_option("--export", export_path, "write the edge list to a file ('-' for stdout)");

    auto* lower = app.add_subcommand("lowerbound", "indistinguishable instance pair check");
    LowerBoundArgs lb;
    lower->add_option("-R,--R", lb.R, "regular agents")->capture_default_str();
    lower->add_option("-W,--W", lb.W, "all agents")->capture_default_str();
    lower->add_option("--agg", lb.agg, "aggregator")->capture_default_str();
    lower->add_option("-K,--K", lb.K, "iterations")->capture_default_str();
    lower->add_option("-c,--c", lb.c, "cost scale")->capture_default_str();
    lower->add_option("-L,--L", lb.L, "smoothness")->capture_default_str();
    lower->add_option("--dim", lb.dim, "model dimension")->capture_default_str();
    lower->add_option("--weights", lb.weights, "auto | mh | equal | uniform")->capture_default_str();
    lower->add_option("--csv", lb.csv, "CSV output path ('-' for stdout)");

    auto* cert = app.add_subcommand("certify", "randomized majority-dominance certification");
    std::string cert_agg, cert_csv;
    std::size_t trials = 1000;
    std::uint64_t seed = 1;
    cert->add_option("agg", cert_agg, "aggregator")->required();
    cert->add_option("--trials", trials, "randomized trials")->capture_default_str();
    cert->add_option("--seed", seed, "RNG seed")->capture_default_str();
    cert->add_option("--csv", cert_csv, "CSV output path ('-' for stdout)");

    auto* bounds = app.add_subcommand("bounds", "order-level error floors of robust aggregators and WeiMean");
    std::string bounds_kind, bounds_csv;
    std::vector<std::string> bounds_args;
    std::vector<AgentId> bounds_poisoned;
    std::vector<std::string> bounds_aggs{"trimean", "faba", "ios", "cc", "cg"};
    double xi = 1, A = 1;
    add_topology_args(bounds, bounds_kind, bounds_args, bounds_poisoned);
    bounds->add_option("--agg", bounds_aggs, "robust aggregators")->capture_default_str();
    bounds->add_option("--xi", xi, "heterogeneity bound")->capture_default_str();
    bounds->add_option("--A", A, "disturbance bound")->capture_default_str();
    bounds->add_option("--csv", bounds_csv, "CSV output path ('-' for stdout)");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        auto const code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (print_defaults) {
            std::cout << serialize_config(ExperimentConfig{});
            return ok;
        }
        if (*run)
            return cmd_run(config_path, print_config);
        if (*topo)
            return cmd_topology(topology_from_args(topo_kind, topo_args, given(topo, topo_poisoned)), export_path);
        if (*lower)
            return cmd_lowerbound(lb);
        if (*cert)
            return cmd_certify(cert_agg, trials, seed, cert_csv);
        if (*bounds)
            return cmd_bounds(topology_from_args(bounds_kind, bounds_args, given(bounds, bounds_poisoned)), bounds_aggs, xi, A, bounds_csv);
        std::cerr << app.help();
        return usage;
    } catch (UsageError const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    } catch (std::exception const& e) {
        std::cerr << "error: " << e.what() << '\n';
        return runtime;
    }
}
