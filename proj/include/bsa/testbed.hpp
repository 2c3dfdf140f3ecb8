#ifndef BSA_TESTBED_HPP
#define BSA_TESTBED_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bsa/competitors.hpp"
#include "bsa/numerics.hpp"
#include "bsa/sequential.hpp"

namespace bsa {

// ---------------------------------------------------------------------------
// Models

enum class ModelId { m1 = 1, m2, m3, m4, m5, m6, m7, m8, m9, m10 };

inline std::string to_string(ModelId m) { return "M" + std::to_string(static_cast<int>(m)); }

inline ModelId model_from_string(std::string_view s) {
    if (s.size() >= 2 && (s[0] == 'M' || s[0] == 'm')) {
        const std::string digits(s.substr(1));
        if (digits.find_first_not_of("0123456789") == std::string::npos) {
            const int k = std::stoi(digits);
            if (k >= 1 && k <= 10) return static_cast<ModelId>(k);
        }
    }
    throw std::invalid_argument("unknown model '" + std::string(s) + "'");
}

inline int dimension(ModelId m) { return m >= ModelId::m8 ? 2 : 1; }

/// Native coordinate on (-3, 3) for a scaled point in (0, 1), and back.
inline double to_native(double u) { return 6.0 * u - 3.0; }
inline double to_unit(double x) { return (x + 3.0) / 6.0; }

/// One-dimensional model in native coordinates.
inline double eval_native(ModelId m, double x, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    using std::numbers::pi;
    switch (m) {
        case ModelId::m1: return std_normal_cdf(x);
        case ModelId::m2: return std_normal_cdf(std_normal_quantile(alpha) + x);
        case ModelId::m3: return std::clamp(alpha + x / 3.0, 0.0, 1.0);
        case ModelId::m4: return 1.0 / (1.0 + (1.0 - alpha) / alpha * std::exp(-x));
        case ModelId::m5: return -std::expm1(std::log1p(-alpha) * std::exp(x));
        case ModelId::m6: {
            const double r = std::sqrt(alpha);
            const double v = 1.0 / (1.0 + (1.0 - r) / r * std::exp(-x));
            return v * v;
        }
        case ModelId::m7: return 0.5 + std::atan(x + std::tan(pi * (alpha - 0.5))) / pi;
        default: throw std::invalid_argument(to_string(m) + " is two-dimensional");
    }
}

/// One-dimensional model at a scaled point in (0, 1).
inline double eval_model(ModelId m, double u, double alpha) { return eval_native(m, to_native(u), alpha); }

/// Two-dimensional model at a scaled point in (0, 1)^2.
inline double eval_model(ModelId m, const std::array<double, 2>& u, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    const double z1 = to_native(u[0]), z2 = to_native(u[1]);
    switch (m) {
        case ModelId::m8: return std::clamp(bivariate_normal_cdf(z1, z2, 0.0), 0.0, 1.0);
        case ModelId::m9: return std::clamp(bivariate_normal_cdf(z1, z2, 0.8), 0.0, 1.0);
        case ModelId::m10: return std::clamp(bivariate_normal_cdf(z1, z2, -0.8), 0.0, 1.0);
        default: throw std::invalid_argument(to_string(m) + " is one-dimensional");
    }
}

/// Root of M(x) = alpha in scaled coordinates (one-dimensional models).
inline double true_root(ModelId m, double alpha) {
    if (dimension(m) != 1) throw std::invalid_argument(to_string(m) + " is two-dimensional");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    return m == ModelId::m1 ? to_unit(std_normal_quantile(alpha)) : 0.5;
}

/// Symmetric point (r, r) on the level set M(x) = alpha (two-dimensional models).
inline std::array<double, 2> true_root_2d(ModelId m, double alpha) {
    if (dimension(m) != 2) throw std::invalid_argument(to_string(m) + " is one-dimensional");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    // Bisection on the diagonal in native coordinates; M is increasing along it.
    const double rho = m == ModelId::m8 ? 0.0 : (m == ModelId::m9 ? 0.8 : -0.8);
    double lo = -12.0, hi = 12.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        (bivariate_normal_cdf(mid, mid, rho) < alpha ? lo : hi) = mid;
    }
    const double r = to_unit(0.5 * (lo + hi));
    return {r, r};
}

/// Derivative of the native model at its root.
inline double root_slope(ModelId m, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    using std::numbers::pi;
    switch (m) {
        case ModelId::m1:
        case ModelId::m2: return std_normal_pdf(std_normal_quantile(alpha));
        case ModelId::m3: return 1.0 / 3.0;
        case ModelId::m4: return alpha * (1.0 - alpha);
        case ModelId::m5: return -(1.0 - alpha) * std::log1p(-alpha);
        case ModelId::m6: return 2.0 * alpha * (1.0 - std::sqrt(alpha));
        case ModelId::m7: {
            const double c = std::cos(pi * (alpha - 0.5));
            return c * c / pi;
        }
        default: throw std::invalid_argument(to_string(m) + " is two-dimensional");
    }
}

inline int simulate_response(ModelId m, double u, double alpha, SeededRng& rng) {
    return rng.bernoulli(eval_model(m, u, alpha));
}

inline int simulate_response(ModelId m, const std::array<double, 2>& u, double alpha, SeededRng& rng) {
    return rng.bernoulli(eval_model(m, u, alpha));
}

// ---------------------------------------------------------------------------
// Benchmark

enum class Method { rm, rmj, rpj, wu_map, bsa_bayes, bsa_map };

inline constexpr std::array<Method, 6> all_methods = {Method::rm,     Method::rmj,       Method::rpj,
                                                      Method::wu_map, Method::bsa_bayes, Method::bsa_map};

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::rm: return "rm";
        case Method::rmj: return "rmj";
        case Method::rpj: return "rpj";
        case Method::wu_map: return "wu-map";
        case Method::bsa_bayes: return "bsa-bayes";
        case Method::bsa_map: return "bsa-map";
    }
    return "?";
}

inline Method method_from_string(std::string_view s) {
    for (Method m : all_methods)
        if (to_string(m) == s) return m;
    throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

struct BenchmarkConfig {
    std::vector<Method> methods{all_methods.begin(), all_methods.end()};
    ModelId model = ModelId::m2;
    std::vector<double> alphas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    int horizon = 20;
    int replications = 1000;
    std::uint64_t seed = 20240611;
    SSchedule schedule = SSchedule::fixed(17);
    double x1 = 0.5;  // scaled
    bool carry_bounds = true;
    WuMapPrior wu_prior;

    void validate() const {
        if (methods.empty()) throw std::invalid_argument("benchmark needs at least one method");
        if (dimension(model) != 1) throw std::invalid_argument("benchmark methods are one-dimensional; " + to_string(model) + " is not");
        if (alphas.empty()) throw std::invalid_argument("alpha grid is empty");
        for (double a : alphas)
            if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("alpha grid must lie in (0,1)");
        if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
        if (replications < 1) throw std::invalid_argument("replication count must be >= 1");
        if (!(x1 > 0.0 && x1 < 1.0)) throw std::invalid_argument("starting point must lie in (0,1)");
        schedule.validate();
        wu_prior.validate();
    }
};

struct BenchmarkCell {
    Method method;
    double alpha;
    double true_root;
    std::vector<double> final_x;  // scaled
    std::vector<double> errors;   // final_x - true_root
    double rmse;
};

struct BenchmarkResult {
    ModelId model = ModelId::m2;
    int horizon = 0;
    int replications = 0;
    std::uint64_t seed = 0;
    std::vector<BenchmarkCell> cells;

    const BenchmarkCell& cell(Method m, double alpha) const {
        for (const auto& c : cells)
            if (c.method == m && c.alpha == alpha) return c;
        throw std::out_of_range("no benchmark cell for " + std::string(to_string(m)) + " at alpha " + std::to_string(alpha));
    }
    double rmse(Method m, double alpha) const { return cell(m, alpha).rmse; }
};

inline double rmse_of(const std::vector<double>& errors) {
    if (errors.empty()) return 0.0;
    double ss = 0.0;
    for (double e : errors) ss += e * e;
    return std::sqrt(ss / static_cast<double>(errors.size()));
}

/// Child seed for one (method, alpha, replication) cell.
inline std::uint64_t replication_seed(std::uint64_t master, Method m, double alpha, int replication) {
    const auto key = static_cast<std::uint64_t>(std::llround(alpha * 1e9));
    return derive_seed(master, static_cast<std::uint64_t>(m) + 1, key, static_cast<std::uint64_t>(replication));
}

/// Final estimate (scaled) of one method after `horizon` responses.
inline double run_replication(Method method, ModelId model, double alpha, const BenchmarkConfig& cfg, SeededRng& rng) {
    const int n = cfg.horizon;
    switch (method) {
        case Method::bsa_bayes:
        case Method::bsa_map: {
            SessionConfig sc;
            sc.alpha = alpha;
            sc.estimator = method == Method::bsa_bayes ? Estimator::bayes : Estimator::map;
            sc.schedule = cfg.schedule;
            sc.x1 = cfg.x1;
            sc.carry_bounds = cfg.carry_bounds;
            SessionState st = start_session(sc);
            for (int i = 0; i < n; ++i) advance(st, simulate_response(model, st.x, alpha, rng));
            return st.x;
        }
        case Method::rm: {
            RmState st{to_native(cfg.x1), 1, GainSequence::optimal(root_slope(model, alpha))};
            for (int i = 0; i < n; ++i) st = rm_step(st, rng.bernoulli(eval_native(model, st.x, alpha)), alpha);
            return to_unit(st.x);
        }
        case Method::rmj: {
            RmjState st = RmjState::with_slope(to_native(cfg.x1), alpha, root_slope(model, alpha));
            for (int i = 0; i < n; ++i) st = rmj_step(st, rng.bernoulli(eval_native(model, st.x, alpha)));
            return to_unit(st.x);
        }
        case Method::rpj: {
            RpjState st = rpj_start(to_native(cfg.x1));
            for (int i = 0; i < n; ++i) st = rpj_step(st, rng.bernoulli(eval_native(model, st.rm.x, alpha)), alpha);
            return to_unit(rpj_estimate(st));
        }
        case Method::wu_map: {
            WuMapState st = wu_map_start(to_native(cfg.x1), cfg.wu_prior);
            for (int i = 0; i < n; ++i) st = wu_map_step(st, rng.bernoulli(eval_native(model, st.x, alpha)), alpha);
            return to_unit(st.x);
        }
    }
    throw std::logic_error("unhandled method");
}

inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
    cfg.validate();
    BenchmarkResult res{cfg.model, cfg.horizon, cfg.replications, cfg.seed, {}};
    for (Method m : cfg.methods)
        for (double alpha : cfg.alphas) {
            BenchmarkCell cell{m, alpha, true_root(cfg.model, alpha), {}, {}, 0.0};
            cell.final_x.reserve(cfg.replications);
            cell.errors.reserve(cfg.replications);
            for (int r = 0; r < cfg.replications; ++r) {
                SeededRng rng(replication_seed(cfg.seed, m, alpha, r));
                const double x = run_replication(m, cfg.model, alpha, cfg, rng);
                cell.final_x.push_back(x);
                cell.errors.push_back(x - cell.true_root);
            }
            cell.rmse = rmse_of(cell.errors);
            res.cells.push_back(std::move(cell));
        }
    return res;
}

// ---------------------------------------------------------------------------
// CSV emission

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    return out;
}

inline void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

inline constexpr std::string_view summary_header = "method,model,alpha,n,replications,seed,rmse";
inline constexpr std::string_view long_header = "method,model,alpha,replication,final_x,true_root,error";

inline std::string summary_csv(const BenchmarkResult& r) {
    std::string s(summary_header);
    s += '\n';
    for (const auto& c : r.cells) {
        s += std::string(to_string(c.method)) + ',' + to_string(r.model) + ',' + detail::fmt_double(c.alpha) + ',' +
             std::to_string(r.horizon) + ',' + std::to_string(r.replications) + ',' + std::to_string(r.seed) + ',' +
             detail::fmt_double(c.rmse) + '\n';
    }
    return s;
}

inline std::string long_csv(const BenchmarkResult& r) {
    std::string s(long_header);
    s += '\n';
    for (const auto& c : r.cells)
        for (std::size_t i = 0; i < c.errors.size(); ++i)
            s += std::string(to_string(c.method)) + ',' + to_string(r.model) + ',' + detail::fmt_double(c.alpha) + ',' +
                 std::to_string(i) + ',' + detail::fmt_double(c.final_x[i]) + ',' + detail::fmt_double(c.true_root) +
                 ',' + detail::fmt_double(c.errors[i]) + '\n';
    return s;
}

/// Writes the summary table to `path` and, when `long_path` is non-empty, the
/// per-replication table there.
inline void emit_csv(const BenchmarkResult& r, const std::string& path, const std::string& long_path = {}) {
    auto out = detail::open_out(path);
    out << summary_csv(r);
    detail::finish(out, path);
    if (!long_path.empty()) {
        auto lo = detail::open_out(long_path);
        lo << long_csv(r);
        detail::finish(lo, long_path);
    }
}

/// Wide RMSE table: one row per alpha, one column per method.
inline void emit_plotdata(const BenchmarkResult& r, const std::string& path) {
    std::vector<Method> methods;
    std::vector<double> alphas;
    for (const auto& c : r.cells) {
        if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
        if (std::find(alphas.begin(), alphas.end(), c.alpha) == alphas.end()) alphas.push_back(c.alpha);
    }
    auto out = detail::open_out(path);
    out << "alpha";
    for (Method m : methods) out << ',' << to_string(m);
    out << '\n';
    for (double a : alphas) {
        out << detail::fmt_double(a);
        for (Method m : methods) out << ',' << detail::fmt_double(r.rmse(m, a));
        out << '\n';
    }
    detail::finish(out, path);
}

/// Reads a per-replication table back into a result (cells in file order,
/// RMSE recomputed from the errors).
inline BenchmarkResult read_long_csv(const std::string& path, std::uint64_t seed = 0, int horizon = 0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line) || line != long_header)
        throw std::runtime_error("'" + path + "' does not start with the per-replication header");
    BenchmarkResult r;
    r.seed = seed;
    r.horizon = horizon;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 7) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 7 fields");
        const Method m = method_from_string(f[0]);
        r.model = model_from_string(f[1]);
        const double alpha = std::stod(f[2]);
        if (r.cells.empty() || r.cells.back().method != m || r.cells.back().alpha != alpha)
            r.cells.push_back({m, alpha, std::stod(f[5]), {}, {}, 0.0});
        r.cells.back().final_x.push_back(std::stod(f[4]));
        r.cells.back().errors.push_back(std::stod(f[6]));
    }
    for (auto& c : r.cells) c.rmse = rmse_of(c.errors);
    r.replications = r.cells.empty() ? 0 : static_cast<int>(r.cells.front().errors.size());
    return r;
}

struct SummaryRow {
    Method method;
    ModelId model;
    double alpha;
    int n;
    int replications;
    std::uint64_t seed;
    double rmse;
};

inline std::vector<SummaryRow> read_summary_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line) || line != summary_header)
        throw std::runtime_error("'" + path + "' does not start with the summary header");
    std::vector<SummaryRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 7) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 7 fields");
        rows.push_back({method_from_string(f[0]), model_from_string(f[1]), std::stod(f[2]), std::stoi(f[3]),
                        std::stoi(f[4]), std::stoull(f[5]), std::stod(f[6])});
    }
    return rows;
}

}  // namespace bsa

#endif  // BSA_TESTBED_HPP
