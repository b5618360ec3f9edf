#pragma once

// Plain-text run configuration: one "dotted.key = value" per line, '#' starts
// a comment. Unknown keys are rejected; every key has a default, and the
// normalized form lists all keys sorted with canonical value spelling.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "edflow/errors.hpp"
#include "edflow/snapshot.hpp"
#include "edflow/torus.hpp"

namespace edflow {

// Shortest decimal spelling that reads back to the same double.
inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

// a * cos(k . x) or a * sin(k . x); a constant term has k = 0 and kind cos.
struct TrigTerm {
    double amplitude = 0.0;
    bool sine = false;
    std::array<long, 3> k{0, 0, 0};

    friend bool operator==(const TrigTerm&, const TrigTerm&) = default;
};

struct RunConfig {
    std::size_t grid_n = 8;
    double grid_length = two_pi;
    Vec3 spin_shift{0.5, 0.5, 0.5};
    std::string initial_kind = "trig";  // constant | trig | file
    std::string initial_terms;          // raw text; meaning depends on the kind
    double eigen_target = 0.9;
    double eigen_gap_tol = 1e-3;
    std::size_t eigen_count = 8;
    double flow_dt = 0.0;  // 0: CFL-limited step
    double flow_cfl = 0.05;
    double flow_horizon = 0.1;
    std::string flow_scheme = "rk4";  // rk4 | imex
    std::size_t flow_projection_period = 5;
    std::string output_dir = "out";
    std::size_t output_stride = 10;
    std::uint64_t seed = 1;
};

namespace config_detail {

inline const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {
        "eigen.count",  "eigen.gap_tol", "eigen.target",    "flow.cfl",      "flow.dt",
        "flow.horizon", "flow.projection_period",           "flow.scheme",   "grid.length",
        "grid.n",       "initial.kind",  "initial.terms",   "output.dir",    "output.stride",
        "seed",         "spin.shift"};
    return keys;
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Value {
    std::string text;
    std::size_t line = 0, column = 0;
};

inline double to_double(const std::string& key, const Value& v) {
    double out = 0.0;
    const char* first = v.text.data();
    const char* last = first + v.text.size();
    const auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(out))
        throw ParseError(v.line, v.column, "'" + key + "' expects a number, got '" + v.text + "'");
    return out;
}

inline std::uint64_t to_unsigned(const std::string& key, const Value& v) {
    std::uint64_t out = 0;
    const char* first = v.text.data();
    const char* last = first + v.text.size();
    const auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ParseError(v.line, v.column, "'" + key + "' expects a non-negative integer, got '" + v.text + "'");
    return out;
}

// "(a, b, c)" or "a, b, c"
inline Vec3 to_vec3(const std::string& key, const Value& v) {
    std::string s = v.text;
    if (!s.empty() && s.front() == '(') {
        if (s.back() != ')') throw ParseError(v.line, v.column, "unbalanced parenthesis in '" + key + "'");
        s = s.substr(1, s.size() - 2);
    }
    Vec3 out{};
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
        const std::size_t comma = s.find(',', start);
        if ((i < 2) != (comma != std::string::npos))
            throw ParseError(v.line, v.column, "'" + key + "' expects three comma-separated numbers");
        const std::string part(trim(std::string_view(s).substr(start, comma == std::string::npos ? s.npos : comma - start)));
        out[static_cast<std::size_t>(i)] = to_double(key, Value{part, v.line, v.column});
        start = comma + 1;
    }
    return out;
}

}  // namespace config_detail

// Trig polynomial syntax: terms separated by ';', each either a number (the
// constant) or "a cos(k1,k2,k3)" / "a sin(k1,k2,k3)".
inline std::vector<TrigTerm> parse_trig_terms(const std::string& text) {
    std::vector<TrigTerm> terms;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t semi = text.find(';', start);
        const std::string item(config_detail::trim(
            std::string_view(text).substr(start, semi == std::string::npos ? text.npos : semi - start)));
        start = semi == std::string::npos ? text.size() + 1 : semi + 1;
        if (item.empty()) continue;
        TrigTerm t;
        const std::size_t paren = item.find('(');
        auto number = [&](const std::string& s) {
            return config_detail::to_double("initial.terms", config_detail::Value{s, 0, 0});
        };
        if (paren == std::string::npos) {
            t.amplitude = number(item);
        } else {
            const std::string head(config_detail::trim(std::string_view(item).substr(0, paren)));
            if (head.size() < 3 || item.back() != ')')
                throw ValidationError("initial.terms", "malformed term '" + item + "'");
            const std::string fn = head.substr(head.size() - 3);
            if (fn != "cos" && fn != "sin") throw ValidationError("initial.terms", "unknown function in '" + item + "'");
            t.sine = fn == "sin";
            const std::string amp(config_detail::trim(std::string_view(head).substr(0, head.size() - 3)));
            t.amplitude = amp.empty() ? 1.0 : number(amp);
            const Vec3 k = config_detail::to_vec3("initial.terms",
                                                  config_detail::Value{item.substr(paren), 0, 0});
            for (int a = 0; a < 3; ++a) {
                const double ka = k[static_cast<std::size_t>(a)];
                if (ka != std::round(ka)) throw ValidationError("initial.terms", "wave numbers must be integers");
                t.k[static_cast<std::size_t>(a)] = std::lround(ka);
            }
        }
        terms.push_back(t);
    }
    return terms;
}

inline std::string format_trig_terms(const std::vector<TrigTerm>& terms) {
    std::string out;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (i) out += "; ";
        const TrigTerm& t = terms[i];
        out += format_double(t.amplitude);
        if (t.k == std::array<long, 3>{0, 0, 0} && !t.sine) continue;
        out += t.sine ? " sin(" : " cos(";
        out += std::to_string(t.k[0]) + "," + std::to_string(t.k[1]) + "," + std::to_string(t.k[2]) + ")";
    }
    return out;
}

inline ScalarField sample_trig(const TorusGrid& grid, const std::vector<TrigTerm>& terms) {
    const double c = grid.wavenumber_unit();
    return ScalarField::sample(grid, [&](double x, double y, double z) {
        double v = 0.0;
        for (const auto& t : terms) {
            const double arg = c * (t.k[0] * x + t.k[1] * y + t.k[2] * z);
            v += t.amplitude * (t.sine ? std::sin(arg) : std::cos(arg));
        }
        return v;
    });
}

inline RunConfig parse_config(const std::string& text) {
    using config_detail::Value;
    std::map<std::string, Value> values;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line(raw);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        if (config_detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            const auto col = line.find_first_not_of(" \t") + 1;
            throw ParseError(line_no, col, "expected 'key = value'");
        }
        const std::string key(config_detail::trim(line.substr(0, eq)));
        if (key.empty()) throw ParseError(line_no, eq + 1, "missing key before '='");
        for (std::size_t i = 0; i < key.size(); ++i) {
            const char ch = key[i];
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_'))
                throw ParseError(line_no, line.find(key) + i + 1, std::string("invalid character '") + ch + "' in key");
        }
        const std::string_view rest = line.substr(eq + 1);
        const std::string_view val = config_detail::trim(rest);
        const std::size_t val_col = eq + 2 + (val.empty() ? 0 : rest.find(val.front()));
        const auto& known = config_detail::known_keys();
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ValidationError(key, "unknown key");
        if (values.count(key)) throw ParseError(line_no, line.find(key) + 1, "duplicate key '" + key + "'");
        values[key] = Value{std::string(val), line_no, val_col};
    }

    RunConfig c;
    auto has = [&](const char* k) { return values.count(k) > 0; };
    using namespace config_detail;
    if (has("grid.n")) {
        const auto n = to_unsigned("grid.n", values["grid.n"]);
        if (n < 4 || n % 2 != 0 || n > 256) throw ValidationError("grid.n", "must be even, between 4 and 256");
        c.grid_n = static_cast<std::size_t>(n);
    }
    if (has("grid.length")) {
        c.grid_length = to_double("grid.length", values["grid.length"]);
        if (!(c.grid_length > 0.0)) throw ValidationError("grid.length", "must be positive");
    }
    if (has("spin.shift")) {
        c.spin_shift = to_vec3("spin.shift", values["spin.shift"]);
        for (double d : c.spin_shift)
            if (d != 0.0 && d != 0.5) throw ValidationError("spin.shift", "components must be 0 or 0.5");
    }
    if (has("initial.kind")) {
        c.initial_kind = values["initial.kind"].text;
        if (c.initial_kind != "constant" && c.initial_kind != "trig" && c.initial_kind != "file")
            throw ValidationError("initial.kind", "must be one of constant, trig, file");
    }
    if (has("initial.terms")) c.initial_terms = values["initial.terms"].text;
    if (c.initial_kind == "constant") {
        const double v = c.initial_terms.empty() ? 1.0 : to_double("initial.terms", values["initial.terms"]);
        if (!(v > 0.0)) throw ValidationError("initial.terms", "constant must be positive");
        c.initial_terms = format_double(v);
    } else if (c.initial_kind == "trig" && !c.initial_terms.empty()) {
        c.initial_terms = format_trig_terms(parse_trig_terms(c.initial_terms));
    } else if (c.initial_kind == "file" && c.initial_terms.empty()) {
        throw ValidationError("initial.terms", "kind 'file' needs a snapshot path");
    }
    if (has("eigen.target")) c.eigen_target = to_double("eigen.target", values["eigen.target"]);
    if (has("eigen.gap_tol")) {
        c.eigen_gap_tol = to_double("eigen.gap_tol", values["eigen.gap_tol"]);
        if (!(c.eigen_gap_tol > 0.0)) throw ValidationError("eigen.gap_tol", "must be positive");
    }
    if (has("eigen.count")) {
        c.eigen_count = static_cast<std::size_t>(to_unsigned("eigen.count", values["eigen.count"]));
        if (c.eigen_count < 4 || c.eigen_count > 256) throw ValidationError("eigen.count", "must be in [4, 256]");
    }
    if (has("flow.dt")) {
        c.flow_dt = to_double("flow.dt", values["flow.dt"]);
        if (c.flow_dt < 0.0) throw ValidationError("flow.dt", "must be >= 0 (0 selects the CFL step)");
    }
    if (has("flow.cfl")) {
        c.flow_cfl = to_double("flow.cfl", values["flow.cfl"]);
        if (!(c.flow_cfl > 0.0)) throw ValidationError("flow.cfl", "must be positive");
    }
    if (has("flow.horizon")) {
        c.flow_horizon = to_double("flow.horizon", values["flow.horizon"]);
        if (c.flow_horizon < 0.0) throw ValidationError("flow.horizon", "must be >= 0");
    }
    if (has("flow.scheme")) {
        c.flow_scheme = values["flow.scheme"].text;
        if (c.flow_scheme != "rk4" && c.flow_scheme != "imex")
            throw ValidationError("flow.scheme", "must be rk4 or imex");
    }
    if (has("flow.projection_period")) {
        c.flow_projection_period =
            static_cast<std::size_t>(to_unsigned("flow.projection_period", values["flow.projection_period"]));
        if (c.flow_projection_period < 1) throw ValidationError("flow.projection_period", "must be >= 1");
    }
    if (has("output.dir")) {
        c.output_dir = values["output.dir"].text;
        if (c.output_dir.empty()) throw ValidationError("output.dir", "must not be empty");
    }
    if (has("output.stride")) {
        c.output_stride = static_cast<std::size_t>(to_unsigned("output.stride", values["output.stride"]));
        if (c.output_stride < 1) throw ValidationError("output.stride", "must be >= 1");
    }
    if (has("seed")) c.seed = to_unsigned("seed", values["seed"]);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("config", "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// Every key, sorted, with canonical spelling; parse(normalized(c)) == c.
inline std::string normalized(const RunConfig& c) {
    std::ostringstream out;
    auto vec = [](const Vec3& v) {
        return "(" + format_double(v[0]) + ", " + format_double(v[1]) + ", " + format_double(v[2]) + ")";
    };
    out << "eigen.count = " << c.eigen_count << "\n";
    out << "eigen.gap_tol = " << format_double(c.eigen_gap_tol) << "\n";
    out << "eigen.target = " << format_double(c.eigen_target) << "\n";
    out << "flow.cfl = " << format_double(c.flow_cfl) << "\n";
    out << "flow.dt = " << format_double(c.flow_dt) << "\n";
    out << "flow.horizon = " << format_double(c.flow_horizon) << "\n";
    out << "flow.projection_period = " << c.flow_projection_period << "\n";
    out << "flow.scheme = " << c.flow_scheme << "\n";
    out << "grid.length = " << format_double(c.grid_length) << "\n";
    out << "grid.n = " << c.grid_n << "\n";
    out << "initial.kind = " << c.initial_kind << "\n";
    out << "initial.terms = " << c.initial_terms << "\n";
    out << "output.dir = " << c.output_dir << "\n";
    out << "output.stride = " << c.output_stride << "\n";
    out << "seed = " << c.seed << "\n";
    out << "spin.shift = " << vec(c.spin_shift) << "\n";
    return out.str();
}

// Initial conformal factor described by the configuration. A trig kind
// without terms draws a seeded band-limited perturbation of 1 whose amplitude
// stays below 0.5, so the result is positive.
inline ScalarField initial_field(const RunConfig& c) {
    const TorusGrid grid(c.grid_n, c.grid_length);
    if (c.initial_kind == "constant")
        return ScalarField(grid, config_detail::to_double("initial.terms", {c.initial_terms, 0, 0}));
    if (c.initial_kind == "file") {
        const auto decoded = snapshot::decode(snapshot::read_file(c.initial_terms), c.grid_length);
        if (!std::holds_alternative<ScalarField>(decoded))
            throw ValidationError("initial.terms", "snapshot does not hold a scalar field");
        ScalarField u = std::get<ScalarField>(decoded);
        if (u.grid.n != c.grid_n) throw ValidationError("initial.terms", "snapshot grid differs from grid.n");
        return u;
    }
    if (c.initial_terms.empty()) {
        std::mt19937_64 rng(c.seed);
        return random_band_limited(grid, rng, 2, 0.4) + 1.0;
    }
    return sample_trig(grid, parse_trig_terms(c.initial_terms));
}

}  // namespace edflow
