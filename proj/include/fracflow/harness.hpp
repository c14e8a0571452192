#pragma once

// Run configuration, experiment dispatch and persistence.
//
// Config text is INI-like:
//
//   # comment
//   [grid]
//   n = 256
//   box = 1
//
// Keys are addressed as "section.key".  Precedence: --set > file > defaults.
// Every emitted file is listed in manifest.json with its SHA-256.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "allen_cahn.hpp"
#include "barrier.hpp"
#include "core.hpp"
#include "fmcf.hpp"
#include "fracops.hpp"
#include "geometry.hpp"
#include "profiles.hpp"

namespace fracflow::harness {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "fracflow 1.0.0";

inline const std::vector<std::string>& experiment_kinds()
{
    static const std::vector<std::string> k{"constants", "layer", "corrector", "fmcf",
                                            "allencahn", "compare", "barrier-check"};
    return k;
}

/// Every recognised key with its default, in serialisation order.
inline const std::vector<std::pair<std::string, std::string>>& config_schema()
{
    static const std::vector<std::pair<std::string, std::string>> s{
        {"run.kind", ""},
        {"run.seed", "0"},
        {"order.s", "0.25"},
        {"order.n", "2"},
        {"grid.n", "256"},
        {"grid.box", "1"},
        {"physics.epsilons", "0.08, 0.04, 0.02"},
        {"physics.delta_rule", "eps^0.4"},
        {"physics.sigma", "0.03"},
        {"physics.rho", "0.08"},
        {"physics.seed", "circle"},
        {"physics.r0", "0.35"},
        {"physics.t_fraction", "0.3"},
        {"physics.checkpoints", "3"},
        {"physics.until", "0.5"},
        {"physics.move_fraction", "0.5"},
        {"physics.R", "0"},
        {"physics.r_min", "0.15"},
        {"physics.omega", "0"},
        {"output.dir", "out"},
    };
    return s;
}

inline std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

/// Flat "section.key" -> value map.
class Config {
public:
    std::map<std::string, std::string> values;

    static Config defaults()
    {
        Config c;
        for (const auto& [k, v] : config_schema()) c.values[k] = v;
        return c;
    }

    /// Overlay the assignments in `text`.
    void merge_text(const std::string& text, const std::string& origin = "config")
    {
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw Error(origin, strcat("line ", lineno, ": unterminated section header"));
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw Error(origin, strcat("line ", lineno, ": expected key = value"));
            const std::string key = trim(line.substr(0, eq));
            if (section.empty()) throw Error(origin, strcat("line ", lineno, ": key outside a section"));
            values[section + "." + key] = trim(line.substr(eq + 1));
        }
    }

    /// "section.key=value".
    void set(const std::string& assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || assignment.find('.') > eq)
            throw Error("--set", strcat("expected section.key=value, got '", assignment, "'"));
        values[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
    }

    std::string serialize() const
    {
        std::map<std::string, std::vector<std::pair<std::string, std::string>>> by;
        for (const auto& [k, v] : values) {
            const auto dot = k.find('.');
            by[k.substr(0, dot)].emplace_back(k.substr(dot + 1), v);
        }
        std::string out;
        for (const auto& [sec, kv] : by) {
            out += "[" + sec + "]\n";
            for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
            out += "\n";
        }
        return out;
    }

    const std::string& raw(const std::string& key) const
    {
        auto it = values.find(key);
        if (it == values.end()) throw Error("Config", "missing key " + key);
        return it->second;
    }
};

/// Typed view of a Config.
struct RunConfig {
    std::string kind;
    std::uint64_t seed = 0;  // reserved; no stochastic numerics
    double s = 0.25;
    int n_dim = 2;
    int n = 256;
    double box = 1.0;
    std::vector<double> epsilons;
    std::string delta_rule;
    double sigma = 0.03, rho = 0.08;
    std::string seed_shape;
    double r0 = 0.35, t_fraction = 0.3, until = 0.5, move_fraction = 0.5;
    int checkpoints = 3;
    double R = 0.0, r_min = 0.15, omega = 0.0;
    std::string out_dir;
    Config source;

    double h() const { return box / n; }
    double R_eff() const { return R > 0 ? R : 0.25 * box; }
    FracOrder order() const { return FracOrder(s, n_dim); }
};

namespace detail {

inline double to_double(const std::string& key, const std::string& v, std::vector<std::string>& bad)
{
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (trim(v.substr(pos)).empty()) return x;
    } catch (const std::exception&) {
    }
    bad.push_back(strcat(key, ": '", v, "' is not a number"));
    return NAN;
}

inline long to_int(const std::string& key, const std::string& v, std::vector<std::string>& bad)
{
    const double x = to_double(key, v, bad);
    if (std::isfinite(x) && x != std::floor(x)) bad.push_back(strcat(key, ": '", v, "' is not an integer"));
    return std::isfinite(x) ? long(x) : 0;
}

} // namespace detail

/// Parses and cross-validates; every violated constraint is reported at once.
inline RunConfig resolve(const Config& c)
{
    std::vector<std::string> bad;
    std::map<std::string, bool> known;
    for (const auto& [k, v] : config_schema()) known[k] = true;
    for (const auto& [k, v] : c.values)
        if (!known.count(k)) bad.push_back("unknown key " + k);

    RunConfig r;
    r.source = c;
    r.kind = c.raw("run.kind");
    r.seed = std::uint64_t(detail::to_int("run.seed", c.raw("run.seed"), bad));
    r.s = detail::to_double("order.s", c.raw("order.s"), bad);
    r.n_dim = int(detail::to_int("order.n", c.raw("order.n"), bad));
    r.n = int(detail::to_int("grid.n", c.raw("grid.n"), bad));
    r.box = detail::to_double("grid.box", c.raw("grid.box"), bad);
    {
        std::stringstream ss(c.raw("physics.epsilons"));
        std::string item;
        while (std::getline(ss, item, ','))
            if (!trim(item).empty()) r.epsilons.push_back(detail::to_double("physics.epsilons", trim(item), bad));
    }
    r.delta_rule = c.raw("physics.delta_rule");
    r.sigma = detail::to_double("physics.sigma", c.raw("physics.sigma"), bad);
    r.rho = detail::to_double("physics.rho", c.raw("physics.rho"), bad);
    r.seed_shape = c.raw("physics.seed");
    r.r0 = detail::to_double("physics.r0", c.raw("physics.r0"), bad);
    r.t_fraction = detail::to_double("physics.t_fraction", c.raw("physics.t_fraction"), bad);
    r.checkpoints = int(detail::to_int("physics.checkpoints", c.raw("physics.checkpoints"), bad));
    r.until = detail::to_double("physics.until", c.raw("physics.until"), bad);
    r.move_fraction = detail::to_double("physics.move_fraction", c.raw("physics.move_fraction"), bad);
    r.R = detail::to_double("physics.R", c.raw("physics.R"), bad);
    r.r_min = detail::to_double("physics.r_min", c.raw("physics.r_min"), bad);
    r.omega = detail::to_double("physics.omega", c.raw("physics.omega"), bad);
    r.out_dir = c.raw("output.dir");

    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end())
        bad.push_back("run.kind: unknown experiment kind '" + r.kind + "'");
    try {
        FracOrder(r.s, r.n_dim);
    } catch (const Error& e) {
        bad.push_back(e.what());
    }
    const bool spatial = r.kind != "constants" && r.kind != "layer" && r.kind != "corrector";
    if (spatial && r.n_dim != 2) bad.push_back("order.n: grid experiments are two-dimensional");
    if (!(r.n >= 16 && r.n % 2 == 0)) bad.push_back("grid.n must be an even integer >= 16");
    if (!(r.box > 0)) bad.push_back("grid.box must be positive");
    if (r.delta_rule != "eps^0.4") bad.push_back("physics.delta_rule: only eps^0.4 is supported");
    if (r.seed_shape != "circle" && r.seed_shape != "empty") bad.push_back("physics.seed must be circle or empty");
    if (!(r.rho > 2 * r.h())) bad.push_back("physics.rho must exceed two cells");
    if (!(r.t_fraction > 0)) bad.push_back("physics.t_fraction must be positive");
    if (!(r.checkpoints >= 1)) bad.push_back("physics.checkpoints must be >= 1");
    if (!(r.move_fraction > 0 && r.move_fraction <= 1)) bad.push_back("physics.move_fraction must lie in (0,1]");
    if (!(r.R >= 0)) bad.push_back("physics.R must be >= 0 (0 selects box/4)");
    if (r.R_eff() > 0.25 * r.box * (1 + 1e-12)) bad.push_back("physics.R exceeds a quarter of the box");
    if (!(r.omega >= 0)) bad.push_back("physics.omega must be >= 0 (0 selects the measured value)");
    const bool needs_eps = r.kind == "allencahn" || r.kind == "compare" || r.kind == "barrier-check";
    if (needs_eps) {
        if (r.epsilons.empty()) bad.push_back("physics.epsilons is empty");
        std::string feasible;
        bool under = false;
        for (double e : r.epsilons) {
            if (!(e > 0)) bad.push_back(strcat("physics.epsilons: ", e, " is not positive"));
            if (e < 4 * r.h() * (1 - 1e-12)) under = true;
            else feasible += strcat(feasible.empty() ? "" : ", ", e);
        }
        if (under)
            bad.push_back(strcat("physics.epsilons: below four cells (h = ", r.h(), "); feasible: {", feasible, "}"));
    }
    if (r.kind == "barrier-check") {
        if (!(r.sigma > 0 && r.sigma < 1)) bad.push_back("physics.sigma must lie in (0,1)");
        if (!(r.sigma < 0.5 * r.rho)) bad.push_back("physics.sigma / alpha must be below rho/2");
        if (!(r.r_min > 0 && r.r_min <= r.r0)) bad.push_back("physics.r_min must lie in (0, r0]");
    }
    if (r.kind == "fmcf" || ((r.kind == "compare" || r.kind == "allencahn" || r.kind == "barrier-check") &&
                             r.seed_shape == "circle")) {
        if (!(r.r0 > 0)) bad.push_back("physics.r0 must be positive for a circle seed");
        // the smooth band of the diffuse seed has to stay inside the box
        if (r.kind != "fmcf" && r.r0 + r.rho >= 0.5 * r.box) bad.push_back("physics.r0 + rho reaches the box edge");
        // the level-set flow (fmcf, and the reference of compare) keeps 4 x 6 cells of margin
        if ((r.kind == "fmcf" || r.kind == "compare") && r.r0 + 24 * r.h() > 0.5 * r.box)
            bad.push_back("physics.r0 + 24 cells exceeds half the box");
    }
    if (r.kind == "fmcf") {
        if (r.r0 < 15 * r.h()) bad.push_back("physics.r0 is below 15 cells");
        if (!(r.until > 0 && r.until < 1)) bad.push_back("physics.until must lie in (0,1)");
        else if (r.until * r.r0 < 15 * r.h()) bad.push_back("physics.until * r0 is below 15 cells");
    }
    if (!bad.empty()) {
        std::string msg;
        for (const auto& b : bad) msg += "\n  - " + b;
        throw Error("RunConfig", "invalid configuration:" + msg);
    }
    return r;
}

// ---------------------------------------------------------------------------
// persistence

inline std::string fmt17(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string sha256_hex(const std::string& bytes)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256", "digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("read_file", "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Collects the files of one run and their hashes.
class OutputDir {
public:
    explicit OutputDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

    const fs::path& root() const { return root_; }

    void write(const std::string& name, const std::string& bytes, const std::string& role)
    {
        std::ofstream out(root_ / name, std::ios::binary);
        if (!out) throw Error("OutputDir", "cannot write " + (root_ / name).string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.close();
        files_.push_back({{"path", name}, {"role", role}, {"bytes", bytes.size()}, {"sha256", sha256_hex(bytes)}});
    }

    void json_file(const std::string& name, const json& j, const std::string& role)
    {
        write(name, j.dump(2) + "\n", role);
    }

    void csv(const std::string& name, const std::vector<std::string>& header,
             const std::vector<std::vector<double>>& rows, const std::string& role)
    {
        std::string out;
        for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
        out += "\n";
        for (const auto& r : rows) {
            if (r.size() != header.size()) throw Error("OutputDir::csv", "row width differs from header");
            for (std::size_t c = 0; c < r.size(); ++c) out += (c ? "," : "") + fmt17(r[c]);
            out += "\n";
        }
        write(name, out, role);
    }

    /// Flat little-endian float64, row-major (y slow, x fast), plus a JSON sidecar.
    void f64(const std::string& name, const ScalarField& f, double t, double eps, double s, const std::string& role)
    {
        std::string bytes(f.data.size() * sizeof(double), '\0');
        for (std::size_t k = 0; k < f.data.size(); ++k) {
            std::uint64_t bits;
            std::memcpy(&bits, &f.data[k], sizeof bits);
            for (int b = 0; b < 8; ++b) bytes[8 * k + std::size_t(b)] = char((bits >> (8 * b)) & 0xff);
        }
        write(name, bytes, role);
        json side{{"shape", {f.ny, f.nx}},
                  {"order", "row-major"},
                  {"dtype", "float64-le"},
                  {"box", {f.box_x(), f.box_y()}},
                  {"h", f.h},
                  {"origin", {f.x0, f.y0}},
                  {"t", t},
                  {"epsilon", eps},
                  {"s", s}};
        json_file(name + ".json", side, role + "-sidecar");
    }

    const json& files() const { return files_; }

private:
    fs::path root_;
    json files_ = json::array();
};

inline std::vector<std::vector<double>> front_rows(const FrontCurve& f, double tag)
{
    std::vector<std::vector<double>> rows;
    for (std::size_t c = 0; c < f.curves.size(); ++c)
        for (const Vec2& p : f.curves[c].pts) rows.push_back({tag, double(c), p.x, p.y});
    return rows;
}

// ---------------------------------------------------------------------------
// shared physics ingredients, computed once per process and order

struct Ingredients {
    FracOrder order;
    DoubleWell well;
    double c_ns = 0.0;
    LayerResult layer;
    double c0 = 0.0;
};

inline const Ingredients& ingredients(const FracOrder& o)
{
    static std::map<std::pair<double, int>, Ingredients> cache;
    auto key = std::make_pair(o.s, o.n);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    Ingredients g;
    g.order = o;
    g.well = DoubleWell::standard();
    g.c_ns = FracConstants::get(o).c_ns;
    g.layer = solve_layer(g.well, o, g.c_ns, default_layer_grid(o, g.c_ns));
    g.c0 = compute_c0(g.layer.phi);
    return cache.emplace(key, std::move(g)).first->second;
}

inline const OmegaEstimate& measured_omega(const FracOrder& o)
{
    static std::map<double, OmegaEstimate> cache;
    auto it = cache.find(o.s);
    if (it != cache.end()) return it->second;
    return cache.emplace(o.s, omega_constant(o.with_n(2), {0.15, 0.2, 0.3, 0.4}, {256, 512})).first->second;
}

inline double omega_for(const RunConfig& rc)
{
    return rc.omega > 0 ? rc.omega : measured_omega(rc.order()).omega;
}

/// Tail-fit window used throughout: [L/4, L] of the sampled profile.
inline TailFit layer_tail_fit(const Profile1D& phi)
{
    const double L = phi.xi.back();
    return fit_right_tail(phi, 0.25 * L, L);
}

/// sup over [L/2, L] of |psi|(1 + xi^{2s}) relative to its value at L/2.
inline double corrector_decay_ratio(const Profile1D& psi, double s)
{
    const double L = psi.xi.back();
    double at_half = NAN, sup = 0.0;
    std::size_t ih = 0;
    for (std::size_t i = 0; i < psi.size(); ++i)
        if (psi.xi[i] <= 0.5 * L) ih = i;
    at_half = std::abs(psi.values[ih]) * (1 + std::pow(psi.xi[ih], 2 * s));
    for (std::size_t i = ih; i < psi.size(); ++i)
        sup = std::max(sup, std::abs(psi.values[i]) * (1 + std::pow(psi.xi[i], 2 * s)));
    return sup / at_half;
}

// ---------------------------------------------------------------------------
// experiment kinds

struct RunResult {
    json summary;                      // written as <kind>.json
    json tolerances = json::object();  // tolerance table for the manifest
};

inline RunResult run_constants(const RunConfig& rc, OutputDir& out)
{
    const FracOrder o = rc.order();
    const double c = compute_C_ns(o);
    const auto cal = calibrate_spectral_symbol(o);
    const auto& g = ingredients(o);
    const auto fit = layer_tail_fit(g.layer.phi);
    RunResult r;
    r.summary = {{"s", o.s},
                 {"n", o.n},
                 {"C_ns", c},
                 {"C_ns_closed_form", C_ns_closed_form(o)},
                 {"C_ns_rel_diff", std::abs(c / C_ns_closed_form(o) - 1)},
                 {"lambda", cal.lambda},
                 {"lambda_2k", cal.lambda_2k},
                 {"lambda_closed_form", cal.closed_form},
                 {"lambda_rel_diff", cal.rel_diff},
                 {"lambda_homogeneity", cal.homogeneity},
                 {"c0", g.c0},
                 {"int_dphi", layer_integrals(g.layer.phi).int_dphi},
                 {"tail_exponent", fit.exponent},
                 {"tail_coefficient", fit.coefficient}};
    if (o.n == 2) {
        const auto& om = measured_omega(o);
        r.summary["omega"] = om.omega;
        r.summary["omega_per_radius"] = om.per_radius;
        r.summary["omega_radii"] = om.radii;
        r.summary["omega_spread"] = om.spread;
    }
    r.tolerances = {{"C_ns_rel_diff", 1e-10}, {"lambda_rel_diff", 1e-6}, {"lambda_homogeneity", 1e-6}};
    return r;
}

inline RunResult run_layer(const RunConfig& rc, OutputDir& out)
{
    const auto& g = ingredients(rc.order());
    const Profile1D& phi = g.layer.phi;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < phi.size(); ++i) rows.push_back({phi.xi[i], phi.values[i], phi.deriv(phi.xi[i])});
    out.csv("layer.csv", {"xi", "phi", "dphi"}, rows, "profile");
    const auto fit = layer_tail_fit(phi);
    const double s = rc.s;
    RunResult r;
    r.summary = {{"s", s},
                 {"n", rc.n_dim},
                 {"L", phi.xi.back()},
                 {"N", phi.size()},
                 {"c_ns", g.c_ns},
                 {"residual", g.layer.residual},
                 {"iterations", g.layer.iterations},
                 {"phi_at_0", phi(0.0)},
                 {"int_dphi", layer_integrals(phi).int_dphi},
                 {"c0", g.c0},
                 {"tail_exponent", fit.exponent},
                 {"tail_exponent_expected", 2 * s},
                 {"tail_coefficient", fit.coefficient},
                 {"tail_coefficient_expected", g.c_ns / (2 * s * g.well.alpha)},
                 {"tail_window", {0.25 * phi.xi.back(), phi.xi.back()}},
                 {"left_tail", {{"kind", tail_name(phi.left.kind)}, {"limit", phi.left.limit}, {"p", phi.left.p}}},
                 {"right_tail", {{"kind", tail_name(phi.right.kind)}, {"limit", phi.right.limit}, {"p", phi.right.p}}}};
    r.tolerances = {{"residual", 1e-8}, {"tail_exponent_abs", 0.03}, {"tail_coefficient_rel", 0.05},
                    {"int_dphi_abs", 1e-6}};
    return r;
}

inline RunResult run_corrector(const RunConfig& rc, OutputDir& out)
{
    const auto& g = ingredients(rc.order());
    const Profile1D& phi = g.layer.phi;
    const auto cp = solve_corrector(phi, g.well, g.c0, g.c_ns, rc.s);
    const Profile1D rhs = corrector_rhs(phi, g.well, g.c0);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < phi.size(); ++i)
        rows.push_back({phi.xi[i], phi.values[i], phi.deriv(phi.xi[i]), cp.psi_tilde.values[i], rhs.values[i]});
    out.csv("corrector.csv", {"xi", "phi", "dphi", "psi_tilde", "g"}, rows, "profile");
    RunResult r;
    r.summary = {{"s", rc.s},
                 {"c0", g.c0},
                 {"solvability_integral", solvability_integral(phi, g.well, g.c0)},
                 {"residual_norm", cp.residual_norm},
                 {"orthogonality_defect", cp.orthogonality_defect},
                 {"kernel_defect", cp.kernel_defect},
                 {"multiplier", cp.multiplier},
                 {"rcond", cp.rcond},
                 {"decay_ratio", corrector_decay_ratio(cp.psi_tilde, rc.s)}};
    r.tolerances = {{"solvability_integral", 1e-8}, {"residual_norm", 1e-6}, {"decay_ratio", 2.0}};
    return r;
}

inline RunResult run_fmcf(const RunConfig& rc, OutputDir& out)
{
    const auto& g = ingredients(rc.order());
    FmcParams p;
    p.order = rc.order();
    p.c0 = g.c0;
    p.omega = omega_for(rc);
    p.move_fraction = rc.move_fraction;
    std::vector<std::vector<double>> fronts;
    ScalarField last;
    double last_t = 0.0;
    const double q = 1 + 2 * rc.s;
    const double T = std::pow(rc.r0, q) / (q * p.c0 * p.omega);
    // fronts at (roughly) evenly spaced fractions of the run
    int next_mark = 0;
    const int marks = std::max(rc.checkpoints, 1);
    const auto bench = run_circle_benchmark(
        rc.r0, p, rc.until, rc.n, rc.box, 1, [&](const FlowState& st, const FrontCurve& f) {
            const double r_exact_frac = std::pow(std::max(0.0, 1 - st.t / T), 1 / q);
            const double target = 1 - (1 - rc.until) * double(next_mark) / marks;
            if (next_mark <= marks && r_exact_frac <= target + 1e-12) {
                for (auto& row : front_rows(f, st.t)) fronts.push_back(row);
                ++next_mark;
            }
            last = st.u;
            last_t = st.t;
        });
    std::vector<std::vector<double>> rows;
    for (const auto& smp : bench.table) rows.push_back({smp.t, smp.r_measured, smp.r_exact});
    out.csv("radius.csv", {"t", "r_measured", "r_exact"}, rows, "radius-law");
    out.csv("fronts.csv", {"t", "curve_id", "x", "y"}, fronts, "fronts");
    out.f64("u_final.f64", last, last_t, 0.0, rc.s, "field");
    RunResult r;
    r.summary = {{"r0", rc.r0},
                 {"n", rc.n},
                 {"c0", p.c0},
                 {"omega", p.omega},
                 {"steps", bench.steps},
                 {"slope", bench.fit.slope},
                 {"intercept", bench.fit.intercept},
                 {"r2", bench.fit.r2},
                 {"t_extinction_fit", bench.fit.t_extinction},
                 {"t_extinction_exact", bench.fit.t_extinction_exact},
                 {"t_extinction_rel_error", bench.fit.rel_error}};
    r.tolerances = {{"r2_min", 0.999}, {"t_extinction_rel_error", 0.05}};
    return r;
}

inline SignedDistanceField seed_distance(const RunConfig& rc)
{
    ScalarField raw = ScalarField::square(rc.n, rc.box);
    const Vec2 c{0.5 * rc.box, 0.5 * rc.box};
    for (int j = 0; j < rc.n; ++j)
        for (int i = 0; i < rc.n; ++i)
            raw(i, j) = rc.seed_shape == "empty" ? -2 * rc.rho : rc.r0 - std::hypot(raw.x(i) - c.x, raw.y(j) - c.y);
    return extend_distance(raw, rc.rho);
}

inline RunResult run_allencahn(const RunConfig& rc, OutputDir& out)
{
    const auto& g = ingredients(rc.order());
    const double eps = rc.epsilons.front();
    AcState st = well_prepared_init(seed_distance(rc), g.layer.phi, eps, g.well, rc.order());
    const double q = 1 + 2 * rc.s;
    const double T = rc.seed_shape == "empty" ? 1.0 : std::pow(rc.r0, q) / (q * g.c0 * omega_for(rc));
    const double t_end = rc.t_fraction * T, dt0 = default_ac_dt(eps, rc.order());
    std::vector<std::vector<double>> energy_rows, fronts;
    auto record = [&](const EnergyReport& e) {
        double lo = INFINITY, hi = -INFINITY;
        for (double v : st.u.data) { lo = std::min(lo, v); hi = std::max(hi, v); }
        energy_rows.push_back({double(st.steps), e.t, e.gagliardo, e.potential, e.total, lo, hi});
    };
    EnergyReport e = energy(st);
    record(e);
    out.f64("u_0.f64", st.u, st.t, eps, rc.s, "snapshot");
    for (auto& row : front_rows(diffuse_front(st), 0.0)) fronts.push_back(row);
    double worst_increase = -INFINITY, worst_slack = 0.0;
    for (int c = 1; c <= rc.checkpoints; ++c) {
        const double tm = t_end * c / rc.checkpoints;
        while (st.t < tm * (1 - 1e-14)) {
            ac_step(st, std::min(dt0, tm - st.t));
            const EnergyReport en = energy(st);
            worst_increase = std::max(worst_increase, (en.total - e.total) / std::abs(e.total));
            e = en;
            record(e);
            worst_slack = std::max({worst_slack, -energy_rows.back()[5], energy_rows.back()[6] - 1});
        }
        out.f64(strcat("u_", c, ".f64"), st.u, st.t, eps, rc.s, "snapshot");
        for (auto& row : front_rows(diffuse_front(st), st.t)) fronts.push_back(row);
    }
    out.csv("energy.csv", {"step", "t", "gagliardo", "potential", "total", "u_min", "u_max"}, energy_rows,
            "energy");
    out.csv("fronts.csv", {"t", "curve_id", "x", "y"}, fronts, "fronts");
    RunResult r;
    r.summary = {{"epsilon", eps},
                 {"t_end", st.t},
                 {"steps", st.steps},
                 {"dt", dt0},
                 {"max_relative_energy_increase", worst_increase},
                 {"max_principle_excursion", worst_slack}};
    r.tolerances = {{"max_relative_energy_increase", 1e-9}, {"max_principle_excursion", 1e-10}};
    return r;
}

inline RunResult run_compare(const RunConfig& rc, OutputDir& out)
{
    const auto& g = ingredients(rc.order());
    ConvergenceParams p;
    p.n = rc.n;
    p.box = rc.box;
    p.centre = {0.5 * rc.box, 0.5 * rc.box};
    p.r0 = rc.seed_shape == "empty" ? 0.0 : rc.r0;
    p.rho = rc.rho;
    p.t_fraction = rc.t_fraction;
    p.checkpoints = rc.checkpoints;
    p.flow.order = rc.order();
    p.flow.c0 = g.c0;
    p.flow.omega = omega_for(rc);
    p.flow.move_fraction = rc.move_fraction;
    const auto rows = convergence_experiment(rc.epsilons, g.layer.phi, g.well, rc.order(), p);
    std::vector<std::vector<double>> table;
    for (const auto& rw : rows)
        table.push_back({rw.epsilon, rw.t, rw.hausdorff, rw.sup_in, rw.sup_out, rw.r_diffuse, rw.r_sharp,
                         double(rw.steps)});
    out.csv("convergence.csv", {"epsilon", "t", "hausdorff", "sup_in", "sup_out", "r_diffuse", "r_sharp", "steps"},
            table, "convergence");
    // final checkpoint per epsilon
    std::vector<const ConvergenceRow*> last;
    for (const auto& rw : rows)
        if (std::abs(rw.t - rows.back().t) <= 1e-12 * std::max(1.0, rw.t)) last.push_back(&rw);
    json per = json::array();
    bool monotone_h = true, monotone_in = true;
    for (std::size_t k = 0; k < last.size(); ++k) {
        per.push_back({{"epsilon", last[k]->epsilon}, {"hausdorff", last[k]->hausdorff}, {"sup_in", last[k]->sup_in}});
        if (k) {
            monotone_h = monotone_h && last[k]->hausdorff < last[k - 1]->hausdorff;
            monotone_in = monotone_in && last[k]->sup_in < last[k - 1]->sup_in;
        }
    }
    RunResult r;
    r.summary = {{"final", per},
                 {"hausdorff_monotone", monotone_h},
                 {"sup_in_monotone", monotone_in},
                 {"reduction_factor", last.size() >= 2 ? last.front()->hausdorff / last.back()->hausdorff : NAN},
                 {"omega", p.flow.omega},
                 {"c0", p.flow.c0}};
    r.tolerances = {{"reduction_factor_min", 2.0}};
    return r;
}

inline RunResult run_barrier(const RunConfig& rc, OutputDir& out)
{
    const auto& g = ingredients(rc.order());
    const auto cp = solve_corrector(g.layer.phi, g.well, g.c0, g.c_ns, rc.s);
    const double omega = omega_for(rc);
    CircleMotion mo;
    mo.centre = {0.5 * rc.box, 0.5 * rc.box};
    mo.r = rc.r0;
    mo.r_min = rc.r_min;
    std::vector<std::vector<double>> table;
    json runs = json::array();
    for (double eps : rc.epsilons) {
        BarrierConfig cfg;
        cfg.epsilon = eps;
        cfg.sigma = rc.sigma;
        cfg.alpha = g.well.alpha;
        cfg.R = rc.R_eff();
        cfg.rho = rc.rho;
        cfg.order = rc.order();
        const auto rep = subsolution_residual(rc.n, rc.box, mo, g.layer.phi, cp.psi_tilde, g.well, g.c0, omega, cfg);
        BarrierConfig resolved = cfg;
        resolved.resolve(rc.box, rc.h());
        const auto con = a_eps_consistency(rc.n, rc.box, mo, g.layer.phi, g.well, omega, cfg, 0.5 * rc.rho);
        char tag_buf[32];
        std::snprintf(tag_buf, sizeof tag_buf, "eps_%g", eps);
        const std::string tag = tag_buf;
        out.f64("J_" + tag + ".f64", rep.J, 0.0, eps, rc.s, "residual");
        json rj = {{"epsilon", eps},
                   {"parameters",
                    {{"delta", resolved.delta},
                     {"sigma", cfg.sigma},
                     {"sigma_tilde", cfg.sigma_tilde()},
                     {"alpha", cfg.alpha},
                     {"R", cfg.R},
                     {"rho", cfg.rho},
                     {"speed", rep.speed},
                     {"dt_difference", rep.dt_difference},
                     {"r", mo.r},
                     {"r_min", mo.r_min}}},
                   {"percentiles", {{"p05", rep.p05}, {"p50", rep.median}, {"p95", rep.p95}}},
                   {"band", {{"points", rep.band_points}, {"fraction_negative", rep.frac_negative_band},
                             {"max", rep.max_band}, {"audit_max", rep.audit_band_max}}},
                   {"far", {{"max", std::isfinite(rep.max_far) ? json(rep.max_far) : json(nullptr)}}},
                   {"fraction_negative", rep.frac_negative},
                   {"consistency", {{"a_minus_kappa", con.a_minus_kappa}, {"operator_defect", con.operator_defect},
                                    {"band_points", con.band_points}}},
                   {"pass", {{"fraction_negative_ge_0.95", rep.frac_negative >= 0.95},
                             {"band_all_negative", rep.frac_negative_band == 1.0}}}};
        out.json_file("residual_" + tag + ".json", rj, "residual-report");
        runs.push_back(rj);
        table.push_back({eps, resolved.delta, rep.frac_negative, rep.frac_negative_band, rep.max_band, rep.p05,
                         rep.median, rep.p95, rep.audit_band_max, con.a_minus_kappa, con.operator_defect});
    }
    out.csv("barrier.csv",
            {"epsilon", "delta", "fraction_negative", "fraction_negative_band", "max_band", "p05", "p50", "p95",
             "audit_band_max", "a_minus_kappa", "operator_defect"},
            table, "barrier-summary");
    bool trend = true;
    for (std::size_t k = 1; k < table.size(); ++k) trend = trend && table[k][4] < table[k - 1][4];
    RunResult r;
    r.summary = {{"runs", runs}, {"max_band_decreasing", trend}};
    r.tolerances = {{"fraction_negative_min", 0.95}, {"band_fraction_negative_min", 1.0}};
    return r;
}

/// Runs one experiment and writes manifest.json next to its outputs.
inline json run(const RunConfig& rc)
{
    const auto t0 = std::chrono::steady_clock::now();
    OutputDir out(rc.out_dir);
    out.write("config.ini", rc.source.serialize(), "config");
    static const std::map<std::string, std::function<RunResult(const RunConfig&, OutputDir&)>> table{
        {"constants", run_constants}, {"layer", run_layer},     {"corrector", run_corrector},
        {"fmcf", run_fmcf},           {"allencahn", run_allencahn}, {"compare", run_compare},
        {"barrier-check", run_barrier}};
    RunResult res;
    try {
        res = table.at(rc.kind)(rc, out);
    } catch (const Error& e) {
        throw Error(rc.kind, e.what());
    }
    out.json_file(rc.kind + ".json", res.summary, "summary");
    json config = json::object();
    for (const auto& [k, v] : rc.source.values) config[k] = v;
    json m = {{"kind", rc.kind},
              {"version", kVersion},
              {"config", config},
              {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()},
              {"files", out.files()},
              {"tolerances", res.tolerances}};
    std::ofstream(out.root() / "manifest.json") << m.dump(2) << "\n";
    return m;
}

// ---------------------------------------------------------------------------
// goldens

struct GoldenCheck {
    std::string file, name, status;  // status: pass | fail | absent
    double golden = NAN, value = NAN, tol = NAN;
};

/// Quantities recomputed by verify_goldens, per golden file.
inline std::map<std::string, std::map<std::string, double>> golden_quantities()
{
    const FracOrder o(0.25, 2);
    const auto cal = calibrate_spectral_symbol(o);
    const auto& g = ingredients(o);
    const auto fit = layer_tail_fit(g.layer.phi);
    return {{"constants.json",
             {{"C_ns", compute_C_ns(o)}, {"lambda", cal.lambda}, {"c0", g.c0}}},
            {"layer_tail.json",
             {{"tail_exponent", fit.exponent},
              {"tail_coefficient", fit.coefficient},
              {"int_dphi", layer_integrals(g.layer.phi).int_dphi},
              {"phi_at_0", g.layer.phi(0.0)}}}};
}

/// Golden files: {"quantities": {name: {"value": v, "rel_tol": t} or {"value": v, "abs_tol": t}}}.
inline std::vector<GoldenCheck> verify_goldens(const fs::path& dir)
{
    std::vector<GoldenCheck> out;
    for (const auto& [file, qs] : golden_quantities()) {
        const fs::path p = dir / file;
        json gj;
        const bool have = fs::exists(p);
        if (have) gj = json::parse(read_file(p));
        for (const auto& [name, value] : qs) {
            GoldenCheck c{file, name, "absent"};
            c.value = value;
            if (have && gj.contains("quantities") && gj["quantities"].contains(name)) {
                const auto& q = gj["quantities"][name];
                c.golden = q.at("value").get<double>();
                const bool rel = q.contains("rel_tol");
                c.tol = rel ? q["rel_tol"].get<double>() : q.at("abs_tol").get<double>();
                const double err = rel ? std::abs(value - c.golden) / std::abs(c.golden) : std::abs(value - c.golden);
                c.status = err <= c.tol ? "pass" : "fail";
            }
            out.push_back(c);
        }
    }
    return out;
}

} // namespace fracflow::harness
