#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clt.hpp"
#include "errors.hpp"
#include "montecarlo.hpp"
#include "solver.hpp"
#include "spectral_measure.hpp"
#include "test_function.hpp"

namespace sepcov {

using json = nlohmann::json;

// ---- strict schema helpers ----
// Configs are rejected on any unknown key: a typo must fail loudly, not
// silently fall back to a default.

inline void require_object(const json& j, const std::string& ctx) {
    if (!j.is_object())
        throw ConfigError(ctx + ": expected a JSON object");
}

inline void check_keys(const json& j, const std::string& ctx,
                       std::initializer_list<const char*> required,
                       std::initializer_list<const char*> optional = {}) {
    require_object(j, ctx);
    for (const char* k : required)
        if (!j.contains(k))
            throw ConfigError(ctx + ": missing required key '" + k + "'");
    for (const auto& [key, value] : j.items()) {
        const bool known =
            std::any_of(required.begin(), required.end(),
                        [&](const char* k) { return key == k; }) ||
            std::any_of(optional.begin(), optional.end(),
                        [&](const char* k) { return key == k; });
        if (!known)
            throw ConfigError(ctx + ": unknown key '" + key + "'");
    }
}

inline double get_double(const json& j, const std::string& ctx) {
    if (!j.is_number())
        throw ConfigError(ctx + ": expected a number");
    return j.get<double>();
}

inline long get_int(const json& j, const std::string& ctx) {
    if (!j.is_number_integer())
        throw ConfigError(ctx + ": expected an integer");
    return j.get<long>();
}

inline std::uint64_t get_uint64(const json& j, const std::string& ctx) {
    if (!j.is_number_integer() ||
        (!j.is_number_unsigned() && j.get<long long>() < 0))
        throw ConfigError(ctx + ": expected a nonnegative integer");
    return j.get<std::uint64_t>();
}

inline bool get_bool(const json& j, const std::string& ctx) {
    if (!j.is_boolean())
        throw ConfigError(ctx + ": expected true or false");
    return j.get<bool>();
}

inline std::string get_string(const json& j, const std::string& ctx) {
    if (!j.is_string())
        throw ConfigError(ctx + ": expected a string");
    return j.get<std::string>();
}

// ---- SpectralMeasure ----

inline json to_json(const SpectralMeasure& m) {
    json atoms = json::array();
    for (const Atom& a : m.atoms()) atoms.push_back({a.value, a.weight});
    return json{{"atoms", atoms}, {"label", m.label()}};
}

inline SpectralMeasure measure_from_json(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {"atoms"}, {"label"});
    if (!j["atoms"].is_array() || j["atoms"].empty())
        throw ConfigError(ctx + ".atoms: expected a nonempty array");
    std::vector<Atom> atoms;
    for (const json& a : j["atoms"]) {
        if (!a.is_array() || a.size() != 2)
            throw ConfigError(ctx + ".atoms: each atom is a [value, weight] pair");
        atoms.push_back({get_double(a[0], ctx + ".atoms.value"),
                         get_double(a[1], ctx + ".atoms.weight")});
    }
    std::string label = j.contains("label") ? get_string(j["label"], ctx + ".label")
                                            : "";
    return SpectralMeasure(std::move(atoms), std::move(label));
}

// ---- ModelParams ----

inline json to_json(const ModelParams& p) {
    return json{{"c", p.c}, {"h1", to_json(p.h1)}, {"h2", to_json(p.h2)}};
}

inline ModelParams model_from_json(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {"c", "h1", "h2"});
    return ModelParams(get_double(j["c"], ctx + ".c"),
                       measure_from_json(j["h1"], ctx + ".h1"),
                       measure_from_json(j["h2"], ctx + ".h2"));
}

// ---- SolverConfig ----

inline SolverConfig solver_from_json(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {}, {"tol", "max_iter", "damping"});
    SolverConfig cfg;
    if (j.contains("tol")) cfg.tol = get_double(j["tol"], ctx + ".tol");
    if (j.contains("max_iter")) cfg.max_iter = get_int(j["max_iter"], ctx + ".max_iter");
    if (j.contains("damping")) cfg.damping = get_double(j["damping"], ctx + ".damping");
    return cfg;
}

// ---- TestFunction ----

inline json to_json(const TestFunction& f) {
    json j{{"label", f.label()}};
    switch (f.kind()) {
        case FuncKind::polynomial:
            j["kind"] = "polynomial";
            j["coeffs"] = f.coeffs();
            break;
        case FuncKind::logarithm:
            j["kind"] = "log";
            j["scale"] = f.scale();
            j["shift"] = f.shift();
            break;
        case FuncKind::exponential:
            j["kind"] = "exp";
            j["scale"] = f.scale();
            j["shift"] = f.shift();
            break;
    }
    return j;
}

inline TestFunction function_from_json(const json& j, const std::string& ctx) {
    if (j.is_string()) return parse_function(j.get<std::string>());
    require_object(j, ctx);
    const std::string kind = j.contains("kind")
                                 ? get_string(j["kind"], ctx + ".kind")
                                 : throw ConfigError(ctx + ": missing 'kind'");
    std::string label;
    if (j.contains("label")) label = get_string(j["label"], ctx + ".label");
    if (kind == "polynomial") {
        check_keys(j, ctx, {"kind", "coeffs"}, {"label"});
        if (!j["coeffs"].is_array() || j["coeffs"].empty())
            throw ConfigError(ctx + ".coeffs: expected a nonempty array");
        std::vector<double> coeffs;
        for (const json& c : j["coeffs"])
            coeffs.push_back(get_double(c, ctx + ".coeffs"));
        return TestFunction::polynomial(std::move(coeffs), std::move(label));
    }
    check_keys(j, ctx, {"kind"}, {"scale", "shift", "label"});
    const double scale = j.contains("scale") ? get_double(j["scale"], ctx + ".scale")
                                             : 1.0;
    const double shift = j.contains("shift") ? get_double(j["shift"], ctx + ".shift")
                                             : 0.0;
    if (kind == "log") return TestFunction::log_affine(scale, shift, std::move(label));
    if (kind == "exp") return TestFunction::exp_affine(scale, shift, std::move(label));
    throw ConfigError(ctx + ".kind: expected polynomial, log, or exp");
}

// ---- CltSummary ----

inline json to_json(const CltSummary& s) {
    json fns = json::array();
    for (const TestFunction& f : s.functions) fns.push_back(to_json(f));
    return json{{"functions", fns},
                {"mean", s.mean},
                {"cov", s.cov},
                {"contour_meta",
                 {{"nodes_per_edge", s.contour_meta.nodes_per_edge},
                  {"mean_delta", s.contour_meta.mean_delta},
                  {"cov_delta", s.contour_meta.cov_delta}}}};
}

inline CltSummary summary_from_json(const json& j, const std::string& ctx) {
    check_keys(j, ctx, {"functions", "mean", "cov", "contour_meta"});
    CltSummary s;
    for (const json& f : j["functions"])
        s.functions.push_back(function_from_json(f, ctx + ".functions"));
    s.mean = j["mean"].get<std::vector<double>>();
    s.cov = j["cov"].get<std::vector<std::vector<double>>>();
    const json& cm = j["contour_meta"];
    check_keys(cm, ctx + ".contour_meta", {"nodes_per_edge", "mean_delta", "cov_delta"});
    s.contour_meta.nodes_per_edge =
        static_cast<int>(get_int(cm["nodes_per_edge"], ctx + ".nodes_per_edge"));
    s.contour_meta.mean_delta = get_double(cm["mean_delta"], ctx + ".mean_delta");
    s.contour_meta.cov_delta = get_double(cm["cov_delta"], ctx + ".cov_delta");
    return s;
}

// ---- SimConfig ----

inline std::string entry_name(EntryDistribution e) {
    return e == EntryDistribution::gaussian ? "gaussian" : "three_point";
}

inline EntryDistribution entry_from_name(const std::string& s, const std::string& ctx) {
    if (s == "gaussian") return EntryDistribution::gaussian;
    if (s == "three_point") return EntryDistribution::three_point;
    throw ConfigError(ctx + ": unknown entry distribution '" + s + "'");
}

// Spectrum lists accept three spellings: an explicit array (length must
// match the dimension), {"constant": v}, or {"atoms": [[v, w], ...]} which
// is expanded to dim entries with largest-remainder rounding.
inline std::vector<double> spectrum_from_json(const json& j, int dim,
                                              const std::string& ctx) {
    if (j.is_array()) {
        std::vector<double> out;
        for (const json& v : j) out.push_back(get_double(v, ctx));
        if (out.size() != static_cast<std::size_t>(dim))
            throw ConfigError(ctx + ": expected " + std::to_string(dim)
                              + " entries, got " + std::to_string(out.size()));
        return out;
    }
    require_object(j, ctx);
    if (j.contains("constant")) {
        check_keys(j, ctx, {"constant"});
        return std::vector<double>(static_cast<std::size_t>(dim),
                                   get_double(j["constant"], ctx + ".constant"));
    }
    check_keys(j, ctx, {"atoms"});
    const SpectralMeasure m = measure_from_json(j, ctx);
    std::vector<std::size_t> counts(m.atoms().size());
    std::vector<std::pair<double, std::size_t>> remainders; // (-frac, index)
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < m.atoms().size(); ++i) {
        const double exact = m.atoms()[i].weight * dim;
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[i];
        remainders.push_back({-(exact - std::floor(exact)), i});
    }
    std::sort(remainders.begin(), remainders.end());
    for (std::size_t k = 0; assigned < static_cast<std::size_t>(dim); ++k, ++assigned)
        ++counts[remainders[k % remainders.size()].second];
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(dim));
    for (std::size_t i = 0; i < counts.size(); ++i)
        out.insert(out.end(), counts[i], m.atoms()[i].value);
    return out;
}

inline json to_json(const SimConfig& c) {
    return json{{"bigN", c.big_n},
                {"n", c.n},
                {"t1_spectrum", c.t1_spectrum},
                {"t2_spectrum", c.t2_spectrum},
                {"entry", entry_name(c.entry)},
                {"reps", c.reps},
                {"master_seed", c.master_seed},
                {"haar_conjugate", c.haar_conjugate}};
}

inline SimConfig sim_from_json(const json& j, const std::string& ctx) {
    check_keys(j, ctx,
               {"bigN", "n", "t1_spectrum", "t2_spectrum", "entry", "reps",
                "master_seed"},
               {"haar_conjugate"});
    SimConfig c;
    c.big_n = static_cast<int>(get_int(j["bigN"], ctx + ".bigN"));
    c.n = static_cast<int>(get_int(j["n"], ctx + ".n"));
    c.t1_spectrum = spectrum_from_json(j["t1_spectrum"], c.n, ctx + ".t1_spectrum");
    c.t2_spectrum =
        spectrum_from_json(j["t2_spectrum"], c.big_n, ctx + ".t2_spectrum");
    c.entry = entry_from_name(get_string(j["entry"], ctx + ".entry"), ctx + ".entry");
    c.reps = static_cast<int>(get_int(j["reps"], ctx + ".reps"));
    c.master_seed = get_uint64(j["master_seed"], ctx + ".master_seed");
    if (j.contains("haar_conjugate"))
        c.haar_conjugate = get_bool(j["haar_conjugate"], ctx + ".haar_conjugate");
    c.validate();
    return c;
}

// ---- SimResult ----

inline json to_json(const SimResult& r) {
    json reps = json::array();
    for (const RepRecord& rec : r.per_rep) {
        json row{{"seed", rec.seed},
                 {"lss_values", rec.lss_values},
                 {"ok", rec.ok}};
        if (!rec.ok) row["error"] = rec.error;
        reps.push_back(std::move(row));
    }
    return json{{"f_labels", r.f_labels},
                {"per_rep", reps},
                {"empirical_mean", r.empirical_mean},
                {"empirical_var", r.empirical_var},
                {"variance_defined", r.variance_defined},
                {"centering", r.centering},
                {"theory", to_json(r.theory)},
                {"z_scores", r.z_scores}};
}

inline SimResult result_from_json(const json& j, const std::string& ctx) {
    check_keys(j, ctx,
               {"f_labels", "per_rep", "empirical_mean", "empirical_var",
                "variance_defined", "centering", "theory", "z_scores"});
    SimResult r;
    r.f_labels = j["f_labels"].get<std::vector<std::string>>();
    for (const json& row : j["per_rep"]) {
        check_keys(row, ctx + ".per_rep", {"seed", "lss_values", "ok"}, {"error"});
        RepRecord rec;
        rec.seed = get_uint64(row["seed"], ctx + ".per_rep.seed");
        rec.lss_values = row["lss_values"].get<std::vector<double>>();
        rec.ok = get_bool(row["ok"], ctx + ".per_rep.ok");
        if (row.contains("error"))
            rec.error = get_string(row["error"], ctx + ".per_rep.error");
        r.per_rep.push_back(std::move(rec));
    }
    r.empirical_mean = j["empirical_mean"].get<std::vector<double>>();
    r.empirical_var = j["empirical_var"].get<std::vector<std::vector<double>>>();
    r.variance_defined = get_bool(j["variance_defined"], ctx + ".variance_defined");
    r.centering = j["centering"].get<std::vector<double>>();
    r.theory = summary_from_json(j["theory"], ctx + ".theory");
    r.z_scores = j["z_scores"].get<std::vector<double>>();
    return r;
}

// ---- CSV emission ----

inline std::string fmt_full(double v) { // every bit, survives re-parsing
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string csv_safe(std::string s) {
    for (char& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
    return s;
}

inline void write_density_csv(std::ostream& os, std::span<const double> xs,
                              std::span<const double> densities) {
    os << "x,density\n";
    for (std::size_t i = 0; i < xs.size(); ++i)
        os << fmt_short(xs[i]) << "," << fmt_short(densities[i]) << "\n";
}

inline void write_per_rep_csv(std::ostream& os, const SimResult& r) {
    os << "rep,seed,f_label,value\n";
    for (std::size_t rep = 0; rep < r.per_rep.size(); ++rep) {
        const RepRecord& rec = r.per_rep[rep];
        if (!rec.ok) continue;
        for (std::size_t i = 0; i < r.f_labels.size(); ++i)
            os << rep << "," << rec.seed << "," << csv_safe(r.f_labels[i]) << ","
               << fmt_full(rec.lss_values[i]) << "\n";
    }
}

inline void write_summary_csv(std::ostream& os, const SimResult& r) {
    os << "f_label,emp_mean,theory_mean,emp_var,theory_var,z_score\n";
    for (std::size_t i = 0; i < r.f_labels.size(); ++i) {
        const double emp_var = r.variance_defined
                                   ? r.empirical_var[i][i]
                                   : std::numeric_limits<double>::quiet_NaN();
        os << csv_safe(r.f_labels[i]) << "," << fmt_short(r.empirical_mean[i])
           << "," << fmt_short(r.theory.mean[i]) << "," << fmt_short(emp_var)
           << "," << fmt_short(r.theory.cov[i][i]) << ","
           << fmt_short(r.z_scores[i]) << "\n";
    }
}

inline void write_clt_csv(std::ostream& os, const CltSummary& s) {
    os << "f_label,mean,variance\n";
    for (std::size_t i = 0; i < s.functions.size(); ++i)
        os << csv_safe(s.functions[i].label()) << "," << fmt_short(s.mean[i])
           << "," << fmt_short(s.cov[i][i]) << "\n";
}

// Standard normal quantile (Acklam's rational approximation, |rel err| ~
// 1e-9): plenty for plot data.
inline double inverse_normal(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw DomainViolation("inverse_normal: p must lie in (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > phigh) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// QQ data for one function: sorted standardized values against standard
// normal quantiles at (k - 1/2)/count.
inline void write_qq_csv(std::ostream& os, const SimResult& r, std::size_t f_index) {
    if (f_index >= r.f_labels.size())
        throw ConfigError("write_qq_csv: function index out of range");
    std::vector<double> vals;
    for (const RepRecord& rec : r.per_rep)
        if (rec.ok) vals.push_back(rec.lss_values[f_index]);
    const double mean = r.empirical_mean[f_index];
    const double sd = r.variance_defined
                          ? std::sqrt(r.empirical_var[f_index][f_index])
                          : 1.0;
    std::sort(vals.begin(), vals.end());
    os << "theoretical_quantile,empirical_quantile\n";
    for (std::size_t k = 0; k < vals.size(); ++k) {
        const double p = (static_cast<double>(k) + 0.5) / vals.size();
        os << fmt_short(inverse_normal(p)) << ","
           << fmt_short((vals[k] - mean) / sd) << "\n";
    }
}

} // namespace sepcov
