#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "attack.hpp"
#include "common.hpp"
#include "data.hpp"
#include "mixing.hpp"
#include "sim.hpp"
#include "topology.hpp"

namespace poisonlab {

/// Malformed or inconsistent config text; carries the 1-based line.
class ConfigError : public InvalidArgument {
public:
    ConfigError(std::size_t line, std::string const& message, std::string const& source = "config")
        : InvalidArgument(source + " line " + std::to_string(line) + ": " + message), line_(line), message_(message) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::string const& message() const noexcept { return message_; }

private:
    std::size_t line_;
    std::string message_;
};

// -------------------------------------------------------------------------- //
// Experiment description

enum class TopologyKind { complete, two_castle, line, fan, lower_bound, edge_list };

inline std::string_view to_string(TopologyKind k) {
    switch (k) {
    case TopologyKind::complete: return "complete";
    case TopologyKind::two_castle: return "two_castle";
    case TopologyKind::line: return "line";
    case TopologyKind::fan: return "fan";
    case TopologyKind::lower_bound: return "lower_bound";
    case TopologyKind::edge_list: return "edge_list";
    }
    return "?";
}

inline TopologyKind parse_topology_kind(std::string_view name) {
    if (name == "complete")
        return TopologyKind::complete;
    if (name == "two_castle" || name == "two-castle")
        return TopologyKind::two_castle;
    if (name == "line")
        return TopologyKind::line;
    if (name == "fan")
        return TopologyKind::fan;
    if (name == "lower_bound" || name == "lowerbound")
        return TopologyKind::lower_bound;
    if (name == "edge_list" || name == "file")
        return TopologyKind::edge_list;
    throw InvalidArgument("unknown topology '" + std::string(name) + "'");
}

/// `size` means W for complete and line, the castle size for two_castle and R
/// for fan and lower_bound. Unset `poisoned` keeps each builder's default.
struct TopologySpec {
    TopologyKind kind = TopologyKind::two_castle;
    std::size_t size = 5;
    std::size_t hubs = 1;
    std::size_t agents = 8;
    std::optional<std::vector<AgentId>> poisoned;
    std::string file;
    MixingScheme mixing = MixingScheme::metropolis_hastings;

    friend bool operator==(TopologySpec const&, TopologySpec const&) = default;
};

inline Network build_network(TopologySpec const& spec) {
    std::optional<std::set<AgentId>> poisoned;
    if (spec.poisoned)
        poisoned.emplace(spec.poisoned->begin(), spec.poisoned->end());
    auto fixed = [&](std::string_view kind) {
        if (spec.poisoned)
            throw InvalidArgument("topology " + std::string(kind) + ": poisoned agents are fixed by the construction");
    };
    switch (spec.kind) {
    case TopologyKind::complete: return build_complete(spec.size, poisoned.value_or(std::set<AgentId>{}));
    case TopologyKind::two_castle: return build_two_castle(spec.size, poisoned.value_or(std::set<AgentId>{}));
    case TopologyKind::line: return build_line(spec.size, poisoned);
    case TopologyKind::fan: fixed("fan"); return build_fan(spec.size, spec.hubs);
    case TopologyKind::lower_bound: fixed("lower_bound"); return build_lower_bound_topology(spec.size, spec.agents);
    case TopologyKind::edge_list: {
        fixed("edge_list");
        std::ifstream in(spec.file);
        if (!in)
            throw Error("cannot open edge list '" + spec.file + "'");
        return read_edge_list(in);
    }
    }
    throw InvalidArgument("build_network: unknown topology");
}

enum class DataSource { synthetic, idx };

inline std::string_view to_string(DataSource s) { return s == DataSource::synthetic ? "synthetic" : "idx"; }

inline DataSource parse_data_source(std::string_view name) {
    if (name == "synthetic")
        return DataSource::synthetic;
    if (name == "idx" || name == "mnist")
        return DataSource::idx;
    throw InvalidArgument("unknown data source '" + std::string(name) + "'");
}

/// Synthetic data draws its evaluation set with seed + 1. IDX data is
/// evaluated on the test files when given and on the training set otherwise.
struct DataSpec {
    DataSource source = DataSource::synthetic;
    SyntheticSpec synthetic;
    std::size_t test_per_class = 50;
    std::string images;
    std::string labels;
    std::string test_images;
    std::string test_labels;

    friend bool operator==(DataSpec const&, DataSpec const&) = default;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::string output_dir = "out";
    bool baseline = true; ///< also run WeiMean with every agent's data left clean
    std::vector<Aggregator> aggregators{Aggregator::weimean, Aggregator::trimean, Aggregator::faba, Aggregator::ios};
    TopologySpec topology;
    DataSpec data;
    PartitionSpec partition;
    AttackSpec attack;
    SimConfig sim;
    double l2 = 0.0;

    friend bool operator==(ExperimentConfig const&, ExperimentConfig const&) = default;
};

// -------------------------------------------------------------------------- //
// TOML subset: [section] headers, key = value, '#' comments, values are
// "strings", true/false, numbers and one-line arrays of those.

namespace detail {

struct ConfigValue {
    enum class Type { string, boolean, number, array } type = Type::string;
    std::string text; ///< string contents or number literal
    bool flag = false;
    std::vector<ConfigValue> items;
    std::size_t line = 0;
};

class ConfigLexer {
public:
    ConfigLexer(std::string_view s, std::size_t line) : s_(s), line_(line) {}

    ConfigValue value() {
        skip_ws();
        if (pos_ >= s_.size())
            fail("missing value");
        ConfigValue v;
        v.line = line_;
        char const c = s_[pos_];
        if (c == '"') {
            v.type = ConfigValue::Type::string;
            v.text = string();
        } else if (c == '[') {
            v.type = ConfigValue::Type::array;
            ++pos_;
            for (;;) {
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ']') {
                    ++pos_;
                    break;
                }
                auto item = value();
                if (item.type == ConfigValue::Type::array)
                    fail("nested arrays are not supported");
                v.items.push_back(std::move(item));
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                if (pos_ < s_.size() && s_[pos_] == ']') {
                    ++pos_;
                    break;
                }
                fail("expected ',' or ']' in array");
            }
        } else {
            auto const start = pos_;
            while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != ' ' && s_[pos_] != '\t')
                ++pos_;
            auto const word = s_.substr(start, pos_ - start);
            if (word == "true" || word == "false") {
                v.type = ConfigValue::Type::boolean;
                v.flag = word == "true";
            } else if (!word.empty() && (std::isdigit(static_cast<unsigned char>(word[0])) || word[0] == '-' || word[0] == '+' || word[0] == '.')) {
                v.type = ConfigValue::Type::number;
                v.text = std::string(word.front() == '+' ? word.substr(1) : word);
            } else {
                fail("unrecognized value '" + std::string(word) + "'");
            }
        }
        return v;
    }

    void finish() {
        skip_ws();
        if (pos_ < s_.size())
            fail("trailing characters after value");
    }

private:
    [[noreturn]] void fail(std::string const& what) const { throw ConfigError(line_, what); }

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t'))
            ++pos_;
    }

    std::string string() {
        ++pos_;
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            char c = s_[pos_++];
            if (c == '\\') {
                if (pos_ >= s_.size())
                    break;
                switch (char e = s_[pos_++]) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                default: fail(std::string("unknown escape '\\") + e + "'");
                }
            } else {
                out += c;
            }
        }
        if (pos_ >= s_.size())
            fail("unterminated string");
        ++pos_;
        return out;
    }

    std::string_view s_;
    std::size_t line_;
    std::size_t pos_ = 0;
};

/// Drops a trailing '#' comment that is not inside a string.
inline std::string_view strip_comment(std::string_view line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '\\' && quoted) {
            ++i;
            continue;
        }
        if (line[i] == '"')
            quoted = !quoted;
        else if (line[i] == '#' && !quoted)
            return line.substr(0, i);
    }
    return line;
}

inline std::string_view trim(std::string_view s) {
    auto const b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T number_as(ConfigValue const& v, std::string_view key) {
    if (v.type != ConfigValue::Type::number)
        throw ConfigError(v.line, std::string(key) + ": expected a number");
    T out{};
    auto const* first = v.text.data();
    auto const* last = first + v.text.size();
    auto const [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last)
        throw ConfigError(v.line, std::string(key) + ": '" + v.text + "' is not a valid " +
                                      (std::is_floating_point_v<T> ? "real" : std::is_unsigned_v<T> ? "non-negative integer" : "integer"));
    if constexpr (std::is_floating_point_v<T>)
        if (!std::isfinite(out))
            throw ConfigError(v.line, std::string(key) + ": must be finite");
    return out;
}

inline std::string string_as(ConfigValue const& v, std::string_view key) {
    if (v.type != ConfigValue::Type::string)
        throw ConfigError(v.line, std::string(key) + ": expected a quoted string");
    return v.text;
}

inline bool bool_as(ConfigValue const& v, std::string_view key) {
    if (v.type != ConfigValue::Type::boolean)
        throw ConfigError(v.line, std::string(key) + ": expected true or false");
    return v.flag;
}

inline std::vector<ConfigValue> const& array_as(ConfigValue const& v, std::string_view key) {
    if (v.type != ConfigValue::Type::array)
        throw ConfigError(v.line, std::string(key) + ": expected an array");
    return v.items;
}

inline bool is_auto(ConfigValue const& v) { return v.type == ConfigValue::Type::string && v.text == "auto"; }

/// Runs `f`, turning library argument errors into line-tagged config errors.
template <class F>
auto at_line(ConfigValue const& v, F&& f) {
    try {
        return f();
    } catch (ConfigError const&) {
        throw;
    } catch (InvalidArgument const& e) {
        throw ConfigError(v.line, e.what());
    }
}

/// Shortest text that reads back to the same double.
inline std::string shortest(double x) {
    char buf[64];
    auto const [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return ec == std::errc{} ? std::string(buf, end) : format_double(x);
}

inline std::string quote(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out += c;
        }
    }
    return out + '"';
}

template <class T, class F>
std::string list(std::vector<T> const& xs, F&& fmt) {
    std::string out = "[";
    for (std::size_t i = 0; i < xs.size(); ++i)
        out += (i ? ", " : "") + fmt(xs[i]);
    return out + "]";
}

using Setter = std::function<void(ConfigValue const&)>;

inline std::map<std::string, std::map<std::string, Setter>> config_setters(ExperimentConfig& c) {
    using V = ConfigValue;
    auto str = [](std::string& dst) { return [&dst](V const& v) { dst = string_as(v, "value"); }; };
    std::map<std::string, std::map<std::string, Setter>> s;
    auto& ex = s["experiment"];
    ex["name"] = str(c.name);
    ex["output_dir"] = str(c.output_dir);
    ex["baseline"] = [&](V const& v) { c.baseline = bool_as(v, "baseline"); };
    ex["aggregators"] = [&](V const& v) {
        c.aggregators.clear();
        for (auto const& item : array_as(v, "aggregators"))
            c.aggregators.push_back(at_line(item, [&] { return parse_aggregator(string_as(item, "aggregators")); }));
        if (c.aggregators.empty())
            throw ConfigError(v.line, "aggregators: at least one aggregator required");
    };

    auto& t = s["topology"];
    t["kind"] = [&](V const& v) { c.topology.kind = at_line(v, [&] { return parse_topology_kind(string_as(v, "kind")); }); };
    t["size"] = [&](V const& v) { c.topology.size = number_as<std::size_t>(v, "size"); };
    t["hubs"] = [&](V const& v) { c.topology.hubs = number_as<std::size_t>(v, "hubs"); };
    t["agents"] = [&](V const& v) { c.topology.agents = number_as<std::size_t>(v, "agents"); };
    t["poisoned"] = [&](V const& v) {
        if (is_auto(v)) {
            c.topology.poisoned.reset();
            return;
        }
        c.topology.poisoned.emplace();
        for (auto const& item : array_as(v, "poisoned"))
            c.topology.poisoned->push_back(number_as<AgentId>(item, "poisoned"));
    };
    t["file"] = str(c.topology.file);
    t["mixing"] = [&](V const& v) { c.topology.mixing = at_line(v, [&] { return parse_mixing_scheme(string_as(v, "mixing")); }); };

    auto& d = s["data"];
    d["source"] = [&](V const& v) { c.data.source = at_line(v, [&] { return parse_data_source(string_as(v, "source")); }); };
    d["num_classes"] = [&](V const& v) {
        c.data.synthetic.num_classes = number_as<int>(v, "num_classes");
        if (c.data.synthetic.num_classes < 2)
            throw ConfigError(v.line, "num_classes: at least two classes required");
    };
    d["per_class"] = [&](V const& v) { c.data.synthetic.per_class = number_as<std::size_t>(v, "per_class"); };
    d["num_features"] = [&](V const& v) { c.data.synthetic.num_features = number_as<std::size_t>(v, "num_features"); };
    d["separation"] = [&](V const& v) { c.data.synthetic.separation = number_as<double>(v, "separation"); };
    d["noise"] = [&](V const& v) { c.data.synthetic.noise = number_as<double>(v, "noise"); };
    d["seed"] = [&](V const& v) { c.data.synthetic.seed = number_as<std::uint64_t>(v, "seed"); };
    d["test_per_class"] = [&](V const& v) { c.data.test_per_class = number_as<std::size_t>(v, "test_per_class"); };
    d["images"] = str(c.data.images);
    d["labels"] = str(c.data.labels);
    d["test_images"] = str(c.data.test_images);
    d["test_labels"] = str(c.data.test_labels);

    auto& p = s["partition"];
    p["scheme"] = [&](V const& v) { c.partition.scheme = at_line(v, [&] { return parse_partition_scheme(string_as(v, "scheme")); }); };
    p["alpha"] = [&](V const& v) { c.partition.alpha = number_as<double>(v, "alpha"); };
    p["seed"] = [&](V const& v) { c.partition.seed = number_as<std::uint64_t>(v, "seed"); };
    p["max_retries"] = [&](V const& v) { c.partition.max_retries = number_as<std::size_t>(v, "max_retries"); };

    auto& a = s["attack"];
    a["kind"] = [&](V const& v) { c.attack.kind = at_line(v, [&] { return parse_attack_kind(string_as(v, "kind")); }); };
    a["off_by_one"] = [&](V const& v) { c.attack.off_by_one = bool_as(v, "off_by_one"); };
    a["map"] = [&](V const& v) {
        c.attack.map.clear();
        for (auto const& item : array_as(v, "map"))
            c.attack.map.push_back(number_as<int>(item, "map"));
    };

    auto& m = s["sim"];
    m["iterations"] = [&](V const& v) { c.sim.iterations = number_as<std::size_t>(v, "iterations"); };
    m["step"] = [&](V const& v) { c.sim.step.kind = at_line(v, [&] { return parse_step_rule(string_as(v, "step")); }); };
    m["step_scale"] = [&](V const& v) {
        c.sim.step.scale = number_as<double>(v, "step_scale");
        if (!(c.sim.step.scale > 0))
            throw ConfigError(v.line, "step_scale: must be positive");
    };
    m["seed"] = [&](V const& v) { c.sim.seed = number_as<std::uint64_t>(v, "seed"); };
    m["metrics_every"] = [&](V const& v) {
        c.sim.metrics_every = number_as<std::size_t>(v, "metrics_every");
        if (c.sim.metrics_every == 0)
            throw ConfigError(v.line, "metrics_every: must be positive");
    };
    m["batch_size"] = [&](V const& v) { c.sim.batch_size = number_as<std::size_t>(v, "batch_size"); };
    m["l2"] = [&](V const& v) { c.l2 = number_as<double>(v, "l2"); };
    m["trim_count"] = [&](V const& v) {
        c.sim.params.trim_count = is_auto(v) ? std::nullopt : std::optional(number_as<std::size_t>(v, "trim_count"));
    };
    m["clip_threshold"] = [&](V const& v) {
        c.sim.params.clip_threshold = is_auto(v) ? std::nullopt : std::optional(number_as<double>(v, "clip_threshold"));
    };
    m["cc_steps"] = [&](V const& v) { c.sim.params.cc_steps = number_as<std::size_t>(v, "cc_steps"); };
    m["rfa_max_iter"] = [&](V const& v) { c.sim.params.rfa_max_iter = number_as<std::size_t>(v, "rfa_max_iter"); };
    m["rfa_tol"] = [&](V const& v) { c.sim.params.rfa_tol = number_as<double>(v, "rfa_tol"); };
    return s;
}

} // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig config;
    auto setters = detail::config_setters(config);
    std::map<std::string, std::size_t> seen;
    std::string section, raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        auto const line = detail::trim(detail::strip_comment(raw));
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(lineno, "malformed section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            if (!setters.count(section))
                throw ConfigError(lineno, "unknown section [" + section + "]");
            continue;
        }
        auto const eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(lineno, "expected 'key = value'");
        auto const key = std::string(detail::trim(line.substr(0, eq)));
        if (section.empty())
            throw ConfigError(lineno, "key '" + key + "' outside any section");
        auto const& table = setters.at(section);
        auto const it = table.find(key);
        if (it == table.end())
            throw ConfigError(lineno, "unknown key '" + key + "' in [" + section + "]");
        auto const full = section + "." + key;
        if (auto const prev = seen.find(full); prev != seen.end())
            throw ConfigError(lineno, "duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) + ")");
        seen[full] = lineno;
        detail::ConfigLexer lex(line.substr(eq + 1), lineno);
        auto const value = lex.value();
        lex.finish();
        it->second(value);
    }
    config.attack.num_classes = config.data.synthetic.num_classes;
    return config;
}

inline ExperimentConfig parse_config(std::string const& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline ExperimentConfig load_config(std::string const& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open config '" + path + "'");
    try {
        return parse_config(in);
    } catch (ConfigError const& e) {
        throw ConfigError(e.line(), e.message(), path);
    }
}

/// Every field, defaults included; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(ExperimentConfig const& c) {
    using detail::list;
    using detail::quote;
    using detail::shortest;
    auto name = [](auto x) { return quote(to_string(x)); };
    auto num = [](auto x) {
        if constexpr (std::is_floating_point_v<decltype(x)>)
            return shortest(x);
        else
            return std::to_string(x);
    };
    std::ostringstream os;
    os << "[experiment]\n"
       << "name = " << quote(c.name) << '\n'
       << "output_dir = " << quote(c.output_dir) << '\n'
       << "baseline = " << (c.baseline ? "true" : "false") << '\n'
       << "aggregators = " << list(c.aggregators, name) << "\n\n";
    auto const& t = c.topology;
    os << "[topology]\n"
       << "kind = " << name(t.kind) << '\n'
       << "size = " << t.size << '\n'
       << "hubs = " << t.hubs << '\n'
       << "agents = " << t.agents << '\n'
       << "poisoned = " << (t.poisoned ? list(*t.poisoned, num) : quote("auto")) << '\n'
       << "file = " << quote(t.file) << '\n'
       << "mixing = " << name(t.mixing) << "\n\n";
    auto const& d = c.data;
    os << "[data]\n"
       << "source = " << name(d.source) << '\n'
       << "num_classes = " << d.synthetic.num_classes << '\n'
       << "per_class = " << d.synthetic.per_class << '\n'
       << "num_features = " << d.synthetic.num_features << '\n'
       << "separation = " << shortest(d.synthetic.separation) << '\n'
       << "noise = " << shortest(d.synthetic.noise) << '\n'
       << "seed = " << d.synthetic.seed << '\n'
       << "test_per_class = " << d.test_per_class << '\n'
       << "images = " << quote(d.images) << '\n'
       << "labels = " << quote(d.labels) << '\n'
       << "test_images = " << quote(d.test_images) << '\n'
       << "test_labels = " << quote(d.test_labels) << "\n\n";
    os << "[partition]\n"
       << "scheme = " << name(c.partition.scheme) << '\n'
       << "alpha = " << shortest(c.partition.alpha) << '\n'
       << "seed = " << c.partition.seed << '\n'
       << "max_retries = " << c.partition.max_retries << "\n\n";
    os << "[attack]\n"
       << "kind = " << name(c.attack.kind) << '\n'
       << "off_by_one = " << (c.attack.off_by_one ? "true" : "false") << '\n'
       << "map = " << list(c.attack.map, num) << "\n\n";
    auto const& s = c.sim;
    os << "[sim]\n"
       << "iterations = " << s.iterations << '\n'
       << "step = " << name(s.step.kind) << '\n'
       << "step_scale = " << shortest(s.step.scale) << '\n'
       << "seed = " << s.seed << '\n'
       << "metrics_every = " << s.metrics_every << '\n'
       << "batch_size = " << s.batch_size << '\n'
       << "l2 = " << shortest(c.l2) << '\n'
       << "trim_count = " << (s.params.trim_count ? std::to_string(*s.params.trim_count) : quote("auto")) << '\n'
       << "clip_threshold = " << (s.params.clip_threshold ? shortest(*s.params.clip_threshold) : quote("auto")) << '\n'
       << "cc_steps = " << s.params.cc_steps << '\n'
       << "rfa_max_iter = " << s.params.rfa_max_iter << '\n'
       << "rfa_tol = " << shortest(s.params.rfa_tol) << '\n';
    return os.str();
}

} // namespace poisonlab
