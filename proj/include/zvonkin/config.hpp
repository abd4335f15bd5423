// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration: a small key-value format with [nested.tables]
// (see README for the schema) plus the built-in problem presets.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "zvonkin/errors.hpp"
#include "zvonkin/problem.hpp"

namespace zvonkin {

struct ConfigValue {
    enum class Type { Number, String, Boolean, NumberList } type = Type::Number;
    double number = 0.0;
    std::string text;
    bool boolean = false;
    std::vector<double> list;
};

/// Flat map from "section.key" to value.
class ParsedConfig {
  public:
    void set(const std::string& key, ConfigValue v) { values_[key] = std::move(v); }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    double number(const std::string& key) const {
        const auto& v = get(key);
        if (v.type != ConfigValue::Type::Number)
            throw ConfigError("'" + key + "' must be a number");
        return v.number;
    }
    double number_or(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }
    std::int64_t integer(const std::string& key) const {
        const double v = number(key);
        if (v != static_cast<double>(static_cast<std::int64_t>(v)))
            throw ConfigError("'" + key + "' must be an integer");
        return static_cast<std::int64_t>(v);
    }
    std::int64_t integer_or(const std::string& key, std::int64_t fallback) const {
        return has(key) ? integer(key) : fallback;
    }
    std::string text(const std::string& key) const {
        const auto& v = get(key);
        if (v.type != ConfigValue::Type::String)
            throw ConfigError("'" + key + "' must be a string");
        return v.text;
    }
    std::string text_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? text(key) : fallback;
    }
    bool boolean_or(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = get(key);
        if (v.type != ConfigValue::Type::Boolean)
            throw ConfigError("'" + key + "' must be true or false");
        return v.boolean;
    }
    std::vector<double> number_list(const std::string& key) const {
        const auto& v = get(key);
        if (v.type == ConfigValue::Type::NumberList) return v.list;
        if (v.type == ConfigValue::Type::Number) return {v.number};
        throw ConfigError("'" + key + "' must be a list of numbers");
    }
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (k.rfind(prefix, 0) == 0) out.push_back(k);
        return out;
    }

  private:
    const ConfigValue& get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
        return it->second;
    }
    std::map<std::string, ConfigValue> values_;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline ConfigValue parse_value(const std::string& raw, int line_no) {
    ConfigValue v;
    const std::string s = trim(raw);
    if (s.empty()) throw ConfigError("empty value at line " + std::to_string(line_no));
    if (s.front() == '[') {
        if (s.back() != ']')
            throw ConfigError("unterminated list at line " + std::to_string(line_no));
        v.type = ConfigValue::Type::NumberList;
        std::string body = s.substr(1, s.size() - 2);
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            try {
                std::size_t used = 0;
                v.list.push_back(std::stod(item, &used));
                if (used != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("bad number '" + item + "' at line " + std::to_string(line_no));
            }
        }
        return v;
    }
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"')
            throw ConfigError("unterminated string at line " + std::to_string(line_no));
        v.type = ConfigValue::Type::String;
        v.text = s.substr(1, s.size() - 2);
        return v;
    }
    if (s == "true" || s == "false") {
        v.type = ConfigValue::Type::Boolean;
        v.boolean = (s == "true");
        return v;
    }
    try {
        std::size_t used = 0;
        v.number = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        v.type = ConfigValue::Type::Number;
        return v;
    } catch (const std::exception&) {
        v.type = ConfigValue::Type::String;  // bare word
        v.text = s;
        return v;
    }
}

}  // namespace detail

inline ParsedConfig parse_config_text(const std::string& text) {
    ParsedConfig cfg;
    std::stringstream ss(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("bad section header at line " + std::to_string(line_no));
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("empty section name at line " + std::to_string(line_no));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " + std::to_string(line_no));
        const std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("empty key at line " + std::to_string(line_no));
        const std::string full = section.empty() ? key : section + "." + key;
        cfg.set(full, detail::parse_value(line.substr(eq + 1), line_no));
    }
    return cfg;
}

inline ParsedConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

namespace detail {

inline FunctionSpec function_from_config(const ParsedConfig& cfg, const std::string& section) {
    const std::string kind_name = cfg.text(section + ".kind");
    const FunctionSpec::Kind kind = FunctionSpec::kind_from_name(kind_name);
    switch (kind) {
        case FunctionSpec::Kind::Linear:
            return FunctionSpec::linear(cfg.number_list(section + ".matrix"));
        case FunctionSpec::Kind::HolderSine:
            return FunctionSpec::holder_sine(cfg.number(section + ".amplitude"),
                                             cfg.number(section + ".alpha"));
        case FunctionSpec::Kind::Bump:
            return FunctionSpec::bump(cfg.number(section + ".height"),
                                      cfg.number(section + ".halfwidth"));
        case FunctionSpec::Kind::ConstantMatrix:
            return FunctionSpec::constant_matrix(cfg.number_list(section + ".matrix"));
        case FunctionSpec::Kind::DiagonalSineMatrix:
            return FunctionSpec::diagonal_sine_matrix(cfg.number(section + ".base"),
                                                      cfg.number(section + ".amplitude"),
                                                      cfg.number(section + ".frequency"));
        case FunctionSpec::Kind::Composite: {
            std::vector<FunctionSpec> terms;
            for (int i = 1;; ++i) {
                const std::string sub = section + ".term" + std::to_string(i);
                if (!cfg.has(sub + ".kind")) break;
                terms.push_back(function_from_config(cfg, sub));
            }
            return FunctionSpec::composite(std::move(terms));
        }
    }
    throw UnknownKind("unknown function kind '" + kind_name + "'");
}

}  // namespace detail

inline ProblemSpec problem_from_config(const ParsedConfig& cfg, const std::string& id) {
    ProblemSpec p;
    p.id = cfg.text_or("problem.name", id);
    p.dim = static_cast<int>(cfg.integer("problem.dim"));
    const std::string case_str = cfg.text("problem.case");
    if (case_str == "case1") {
        p.case_tag = CaseTag::Case1LinfL1;
    } else if (case_str == "case2") {
        p.case_tag = CaseTag::Case2HolderAlpha;
        p.alpha = cfg.number("problem.alpha");
    } else {
        throw ConfigError("problem.case must be \"case1\" or \"case2\"");
    }
    p.theta1 = cfg.number("problem.theta1");
    p.theta2 = cfg.number("problem.theta2");
    p.theta3 = cfg.number("problem.theta3");
    p.lambda_sigma = cfg.number("problem.lambda_sigma");
    p.b1 = detail::function_from_config(cfg, "problem.b1");
    p.b2 = detail::function_from_config(cfg, "problem.b2");
    p.sigma = detail::function_from_config(cfg, "problem.sigma");
    return p;
}

struct ExperimentConfig {
    ProblemSpec problem;
    double gamma_target = 0.9;
    std::vector<double> eta_grid;  // strictly descending, all <= 0.5
    int chains = 8;
    double t_burn = 20.0;
    double t_run = 2000.0;
    std::uint64_t master_seed = 1;
    bool baseline = false;

    bool use_reference = true;
    double r_ref = 12.0;
    int ref_n_grid = 20001;

    double grid_radius = 12.0;
    int n_per_axis = 0;  // 0 -> 4097 (dim 1) or 257 (dim 2)
    double lambda0 = 1.0;
    double grad_target = 0.4;

    double thin_dt = 0.1;     // one retained sample per thin_dt time units
    int bootstrap_resamples = 200;
    int drift_probe_draws = 4096;
    std::string out_dir = "out";

    int resolved_n_per_axis() const {
        if (n_per_axis > 0) return n_per_axis;
        return problem.dim == 1 ? 4097 : 257;
    }

    void validate() const {
        if (eta_grid.empty()) throw ConfigError("eta_grid must not be empty");
        for (std::size_t i = 0; i < eta_grid.size(); ++i) {
            if (!(eta_grid[i] > 0.0 && eta_grid[i] <= 0.5))
                throw ConfigError("eta_grid entries must lie in (0, 0.5]");
            if (i > 0 && !(eta_grid[i] < eta_grid[i - 1]))
                throw ConfigError("eta_grid must be strictly descending");
        }
        if (!(t_run > t_burn && t_burn > 0.0))
            throw ConfigError("need t_run > t_burn > 0");
        if (chains < 1) throw ConfigError("chains must be >= 1");
        if (!(gamma_target > 0.0 && gamma_target < 1.0))
            throw ConfigError("gamma_target must lie in (0, 1)");
        if (baseline && problem.case_tag != CaseTag::Case2HolderAlpha)
            throw ConfigError("the naive baseline is available only for Case 2 problems");
    }
};

inline ExperimentConfig experiment_from_config(const ParsedConfig& cfg,
                                               const std::string& id = "problem") {
    ExperimentConfig e;
    e.problem = problem_from_config(cfg, id);
    e.gamma_target = cfg.number_or("experiment.gamma_target", e.gamma_target);
    if (cfg.has("experiment.eta_grid")) e.eta_grid = cfg.number_list("experiment.eta_grid");
    else
        e.eta_grid = {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128, 1.0 / 256, 1.0 / 512};
    e.chains = static_cast<int>(cfg.integer_or("experiment.chains", e.chains));
    e.t_burn = cfg.number_or("experiment.t_burn", e.t_burn);
    e.t_run = cfg.number_or("experiment.t_run", e.t_run);
    e.master_seed = static_cast<std::uint64_t>(cfg.integer_or("experiment.master_seed", 1));
    e.baseline = cfg.boolean_or("experiment.baseline", false);
    e.thin_dt = cfg.number_or("experiment.thin_dt", e.thin_dt);
    e.bootstrap_resamples =
        static_cast<int>(cfg.integer_or("experiment.bootstrap_resamples", 200));
    e.drift_probe_draws =
        static_cast<int>(cfg.integer_or("experiment.drift_probe_draws", 4096));
    e.out_dir = cfg.text_or("experiment.out_dir", e.out_dir);

    const std::string ref_kind = cfg.text_or("reference.kind", "gibbs1d");
    if (ref_kind == "none") {
        e.use_reference = false;
    } else if (ref_kind == "gibbs1d") {
        e.use_reference = true;
        e.r_ref = cfg.number_or("reference.r_ref", e.r_ref);
        e.ref_n_grid = static_cast<int>(cfg.integer_or("reference.n_grid", e.ref_n_grid));
    } else {
        throw ConfigError("reference.kind must be \"gibbs1d\" or \"none\"");
    }

    e.grid_radius = cfg.number_or("corrector.radius", e.grid_radius);
    e.n_per_axis = static_cast<int>(cfg.integer_or("corrector.n_per_axis", 0));
    e.lambda0 = cfg.number_or("corrector.lambda0", e.lambda0);
    e.grad_target = cfg.number_or("corrector.grad_target", e.grad_target);
    return e;
}

// --- built-in problem presets ---

struct PresetInfo {
    std::string name;
    std::string description;
    std::string config_text;
};

inline const std::vector<PresetInfo>& builtin_problems() {
    static const std::vector<PresetInfo> presets = {
        {"ou-1d",
         "Ornstein-Uhlenbeck control (b1 = 0, b2 = -x, sigma = 1); exact law N(0, 1/2)",
         R"(# Ornstein-Uhlenbeck control problem
[problem]
name = "ou-1d"
dim = 1
case = "case1"
theta1 = 1.0
theta2 = 0.0
theta3 = 1.0
lambda_sigma = 0.9
[problem.b1]
kind = "linear"
matrix = [0.0]
[problem.b2]
kind = "linear"
matrix = [-1.0]
[problem.sigma]
kind = "constant_matrix"
matrix = [1.0]
)"},
        {"bump-1d",
         "Case 1: discontinuous integrable drift b1 = 1_{|x|<=0.5}, b2 = -x, sigma = 1",
         R"(# Case 1 bump problem
[problem]
name = "bump-1d"
dim = 1
case = "case1"
theta1 = 1.0
theta2 = 0.0
theta3 = 1.0
lambda_sigma = 0.9
[problem.b1]
kind = "bump"
height = 1.0
halfwidth = 0.5
[problem.b2]
kind = "linear"
matrix = [-1.0]
[problem.sigma]
kind = "constant_matrix"
matrix = [1.0]
)"},
        {"holder-sine-1d",
         "Case 2: alpha-Hoelder drift b1 = 0.5 |sin x|^0.25, b2 = -x, sigma = 1",
         R"(# Case 2 Hoelder problem
[problem]
name = "holder-sine-1d"
dim = 1
case = "case2"
alpha = 0.25
theta1 = 1.0
theta2 = 0.0
theta3 = 1.0
lambda_sigma = 0.9
[problem.b1]
kind = "holder_sine"
amplitude = 0.5
alpha = 0.25
[problem.b2]
kind = "linear"
matrix = [-1.0]
[problem.sigma]
kind = "constant_matrix"
matrix = [1.0]
[experiment]
baseline = true
)"},
        {"holder-sine-2d",
         "Case 2 in 2d: Hoelder drift, variable diagonal diffusion; property-suite problem",
         R"(# Case 2 two-dimensional problem
[problem]
name = "holder-sine-2d"
dim = 2
case = "case2"
alpha = 0.25
theta1 = 1.0
theta2 = 0.0
theta3 = 1.0
lambda_sigma = 0.6
[problem.b1]
kind = "holder_sine"
amplitude = 0.5
alpha = 0.25
[problem.b2]
kind = "linear"
matrix = [-1.0, 0.0, 0.0, -1.0]
[problem.sigma]
kind = "diagonal_sine_matrix"
base = 1.0
amplitude = 0.2
frequency = 1.0
[reference]
kind = "none"
[experiment]
eta_grid = [0.03125]
t_run = 400.0
)"},
    };
    return presets;
}

inline const PresetInfo* find_preset(const std::string& name) {
    for (const auto& p : builtin_problems())
        if (p.name == name) return &p;
    return nullptr;
}

}  // namespace zvonkin
