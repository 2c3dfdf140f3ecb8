#ifndef BSA_SERVICE_HPP
#define BSA_SERVICE_HPP

#include <unistd.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "bsa/applications.hpp"
#include "bsa/multivariate.hpp"
#include "bsa/session_json.hpp"
#include "bsa/testbed.hpp"

namespace bsa {

/// Request failure with an HTTP status and the offending field, if any.
class ApiError : public std::runtime_error {
public:
    ApiError(int status, std::string field, const std::string& what)
        : std::runtime_error(what), status_(status), field_(std::move(field)) {}

    int status() const { return status_; }
    const std::string& field() const { return field_; }

    json body() const {
        json j{{"error", what()}};
        if (!field_.empty()) j["field"] = field_;
        return j;
    }

private:
    int status_;
    std::string field_;
};

inline ApiError unprocessable(const std::string& field, const std::string& what) { return {422, field, what}; }

// ---------------------------------------------------------------------------
// Session record

enum class SessionMode { quantile, continuous_root, kw_minimum };

inline std::string_view to_string(SessionMode m) {
    switch (m) {
        case SessionMode::quantile: return "quantile";
        case SessionMode::continuous_root: return "continuous-root";
        case SessionMode::kw_minimum: return "kw-minimum";
    }
    return "quantile";
}

inline SessionMode mode_from_string(std::string_view s) {
    if (s == "quantile") return SessionMode::quantile;
    if (s == "continuous-root") return SessionMode::continuous_root;
    if (s == "kw-minimum") return SessionMode::kw_minimum;
    throw unprocessable("mode", "mode must be quantile, continuous-root or kw-minimum");
}

/// Built-in response source: a testbed model (M1..M10) or a worked setting
/// (example2: cubic root search, example3: quadratic minimum search).
struct Simulation {
    std::string model;
    std::uint64_t seed = 0;
    std::uint64_t position = 0;  // draws consumed from the seeded stream
};

struct SessionRecord {
    std::string id;
    SessionMode mode = SessionMode::quantile;
    bool closed = false;
    std::string created;
    std::string updated;
    std::optional<Simulation> simulation;
    SigmoidEncoder encoder{1.0, 2};
    KwProbe probe;
    std::variant<SessionState, MvSessionState> state;
    json outcomes = json::array();         // one entry per step
    json recommendations = json::array();  // the starting point, then one per step

    bool multivariate() const { return std::holds_alternative<MvSessionState>(state); }
    const SessionState& uni() const { return std::get<SessionState>(state); }
    const MvSessionState& mv() const { return std::get<MvSessionState>(state); }
    int dimension() const { return multivariate() ? mv().config.dimension() : 1; }
    int step() const { return multivariate() ? mv().n : uni().n; }
};

inline std::string now_iso() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline json to_json(const Subinterval& sub, const SessionConfig& c) {
    return {{"index", sub.index},
            {"slices", sub.slices},
            {"v0", sub.v0()},
            {"v1", sub.v1()},
            {"lower", unscale(sub.v0(), c.domain_lo, c.domain_hi)},
            {"upper", unscale(sub.v1(), c.domain_lo, c.domain_hi)}};
}

inline json to_json(const Hypercube& h) {
    json lower = json::array(), upper = json::array();
    for (int j = 0; j < h.dimension(); ++j) {
        lower.push_back(h.lower(j));
        upper.push_back(h.upper(j));
    }
    return {{"index", h.index}, {"slices", h.slices}, {"lower", lower}, {"upper", upper}};
}

/// Scaled probe half-width and probe points for the current kw design point.
inline json kw_probes(const SessionState& st, const KwProbe& probe) {
    const double c = probe.c(st.n);
    const double h = std::min({c, st.x, 1.0 - st.x});
    const auto& cfg = st.config;
    return {{"upper", unscale(st.x + h, cfg.domain_lo, cfg.domain_hi)},
            {"lower", unscale(st.x - h, cfg.domain_lo, cfg.domain_hi)},
            {"half_width", h},
            {"clipped", h < c}};
}

inline json recommendation_json(const SessionRecord& rec, const StepResult& r) {
    const SessionConfig& c = rec.uni().config;
    auto orig = [&](double u) { return unscale(u, c.domain_lo, c.domain_hi); };
    json j{{"step", r.step},
           {"next", r.next_original},
           {"mean", orig(r.mean)},
           {"mode", orig(r.mode)},
           {"ci", {orig(r.ci_lower), orig(r.ci_upper)}},
           {"credible_level", c.credible_level},
           {"scaled", {{"next", r.next_scaled}, {"mean", r.mean}, {"mode", r.mode}, {"ci", {r.ci_lower, r.ci_upper}}}},
           {"theta0", r.theta0},
           {"subinterval", to_json(r.subinterval, c)},
           {"bounds", {{"rho_lower", r.bounds.rho_lower}, {"rho_upper", r.bounds.rho_upper}}},
           {"members", r.members}};
    if (rec.mode == SessionMode::kw_minimum) j["probes"] = kw_probes(rec.uni(), rec.probe);
    return j;
}

inline json recommendation_json(const MvStepResult& r) {
    return {{"step", r.step},       {"next", r.next},         {"theta", r.theta}, {"candidates", r.candidates},
            {"chosen", r.chosen},   {"hypercube", to_json(r.hypercube)}, {"members", r.members}};
}

/// Recommendation before any outcome: the configured starting point.
inline json initial_recommendation(const SessionRecord& rec) {
    if (rec.multivariate()) {
        const MvSessionState& st = rec.mv();
        return {{"step", st.n},
                {"next", st.x},
                {"theta", nullptr},
                {"candidates", json::array()},
                {"chosen", nullptr},
                {"hypercube", to_json(locate_hypercube(st.x, st.config.schedule.slices(st.n)))},
                {"members", 0}};
    }
    return recommendation_json(rec, estimate(rec.uni()));
}

inline json to_json(const SessionRecord& rec) {
    json sim = nullptr;
    if (rec.simulation)
        sim = {{"model", rec.simulation->model}, {"seed", rec.simulation->seed}, {"position", rec.simulation->position}};
    json state = rec.multivariate() ? to_json(rec.mv()) : to_json(rec.uni());
    return {{"schema_version", session_schema_version},
            {"id", rec.id},
            {"mode", std::string(to_string(rec.mode))},
            {"status", rec.closed ? "closed" : "active"},
            {"created", rec.created},
            {"updated", rec.updated},
            {"dimension", rec.dimension()},
            {"simulation", sim},
            {"encoder", {{"scale", rec.encoder.scale}, {"q", rec.encoder.q}}},
            {"kw_probe", {{"gain", rec.probe.gain}, {"width", rec.probe.width}}},
            {"state", state},
            {"outcomes", rec.outcomes},
            {"recommendations", rec.recommendations}};
}

inline SessionRecord record_from_json(const json& j) {
    try {
        if (j.at("schema_version").get<int>() != session_schema_version)
            throw unprocessable("schema_version", "unsupported schema version");
        SessionRecord rec;
        rec.id = j.at("id").get<std::string>();
        rec.mode = mode_from_string(j.at("mode").get<std::string>());
        rec.closed = j.at("status").get<std::string>() == "closed";
        rec.created = j.at("created").get<std::string>();
        rec.updated = j.at("updated").get<std::string>();
        if (!j.at("simulation").is_null()) {
            const json& s = j.at("simulation");
            rec.simulation = Simulation{s.at("model").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                                        s.at("position").get<std::uint64_t>()};
        }
        rec.encoder = {j.at("encoder").at("scale").get<double>(), j.at("encoder").at("q").get<int>()};
        rec.probe = {j.at("kw_probe").at("gain").get<double>(), j.at("kw_probe").at("width").get<double>()};
        const json& state = j.at("state");
        if (state.at("dimension").get<int>() == 1)
            rec.state = session_state_from_json(state);
        else
            rec.state = mv_state_from_json(state);
        rec.outcomes = j.at("outcomes");
        rec.recommendations = j.at("recommendations");
        return rec;
    } catch (const json::exception& e) {
        throw unprocessable("transcript", std::string("malformed session document: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw unprocessable("transcript", std::string("malformed session document: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Session creation

namespace detail {

template <class T>
T field(const json& body, const char* name, T fallback) {
    if (!body.contains(name) || body.at(name).is_null()) return fallback;
    try {
        return body.at(name).get<T>();
    } catch (const json::exception&) {
        throw unprocessable(name, std::string("field '") + name + "' has the wrong type");
    }
}

inline double finite_number(const json& v, const std::string& name) {
    if (!v.is_number()) throw unprocessable(name, name + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw unprocessable(name, name + " must be finite");
    return x;
}

inline bool is_builtin_example(const std::string& m) { return m == "example2" || m == "example3"; }

inline Simulation parse_simulation(const json& s, SessionMode mode, int dimension) {
    if (!s.is_object()) throw unprocessable("simulation", "simulation must be an object");
    Simulation sim;
    sim.model = field<std::string>(s, "model", "");
    sim.seed = field<std::uint64_t>(s, "seed", 0);
    if (mode == SessionMode::continuous_root) {
        if (sim.model != "example2") throw unprocessable("simulation", "continuous-root simulation uses example2");
        return sim;
    }
    if (mode == SessionMode::kw_minimum) {
        if (sim.model != "example3") throw unprocessable("simulation", "kw-minimum simulation uses example3");
        return sim;
    }
    try {
        const ModelId m = model_from_string(sim.model);
        if (bsa::dimension(m) != dimension)
            throw unprocessable("simulation", "model " + sim.model + " does not match the session dimension");
    } catch (const std::invalid_argument&) {
        throw unprocessable("simulation", "unknown model '" + sim.model + "'");
    }
    return sim;
}

inline SSchedule parse_schedule(const json& body, double alpha) {
    if (body.contains("slices") && body.contains("schedule"))
        throw unprocessable("schedule", "give either slices or schedule, not both");
    SSchedule s = SSchedule::table(alpha);
    if (body.contains("slices")) s = SSchedule::fixed(field<int>(body, "slices", 0));
    if (body.contains("schedule")) {
        const json& j = body.at("schedule");
        if (!j.is_object()) throw unprocessable("schedule", "schedule must be an object");
        s = {field<int>(j, "stage1", s.stage1), field<int>(j, "stage2", s.stage2),
             field<int>(j, "switch_step", s.switch_step)};
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw unprocessable(body.contains("slices") ? "slices" : "schedule", e.what());
    }
    return s;
}

inline Quadrature parse_quadrature(const json& body) {
    if (!body.contains("quadrature")) return {};
    Quadrature q;
    try {
        q = quadrature_from_json(body.at("quadrature"));
        q.validate();
    } catch (const std::exception& e) {
        throw unprocessable("quadrature", e.what());
    }
    return q;
}

}  // namespace detail

/// Builds an unpersisted record from a creation request. Unset fields take
/// their defaults; x1 is given in original coordinates and defaults to the
/// middle of the domain.
inline SessionRecord record_from_request(const json& body) {
    using detail::field;
    if (!body.is_object()) throw unprocessable("body", "request body must be a JSON object");
    SessionRecord rec;
    rec.mode = mode_from_string(field<std::string>(body, "mode", "quantile"));
    const bool quantile = rec.mode == SessionMode::quantile;

    int dim = 1;
    if (body.contains("x1") && body.at("x1").is_array()) dim = static_cast<int>(body.at("x1").size());
    dim = field<int>(body, "dimension", dim);
    if (dim < 1) throw unprocessable("dimension", "dimension must be >= 1");
    if (dim > 1 && !quantile) throw unprocessable("dimension", "continuous modes are univariate");

    const double alpha = field<double>(body, "alpha", 0.5);
    if (!(alpha > 0.0 && alpha < 1.0)) throw unprocessable("alpha", "alpha must lie in (0,1)");
    if (!quantile && alpha != 0.5) throw unprocessable("alpha", "continuous modes search the median, alpha = 0.5");

    std::array<double, 2> domain{0.0, 1.0};
    if (body.contains("domain")) {
        const json& d = body.at("domain");
        if (!d.is_array() || d.size() != 2) throw unprocessable("domain", "domain must be [lo, hi]");
        domain = {detail::finite_number(d[0], "domain"), detail::finite_number(d[1], "domain")};
        if (!(domain[0] < domain[1])) throw unprocessable("domain", "domain must satisfy lo < hi");
        if (dim > 1 && (domain[0] != 0.0 || domain[1] != 1.0))
            throw unprocessable("domain", "multivariate sessions run on the unit cube");
    }

    std::optional<Estimator> estimator;
    if (body.contains("estimator")) {
        try {
            estimator = estimator_from_string(field<std::string>(body, "estimator", ""));
        } catch (const std::invalid_argument& e) {
            throw unprocessable("estimator", e.what());
        }
        if (!quantile && *estimator != Estimator::bayes)
            throw unprocessable("estimator", "continuous modes use the Bayes estimator");
    }
    const SSchedule schedule = detail::parse_schedule(body, alpha);
    const Quadrature quad = detail::parse_quadrature(body);

    if (body.contains("simulation") && !body.at("simulation").is_null())
        rec.simulation = detail::parse_simulation(body.at("simulation"), rec.mode, dim);

    if (body.contains("encoder")) {
        const json& e = body.at("encoder");
        if (!e.is_object()) throw unprocessable("encoder", "encoder must be an object");
        const int q = field<int>(e, "q", 2);
        try {
            rec.encoder = e.contains("range") ? SigmoidEncoder::for_range(field<double>(e, "range", 0.0), q)
                                              : SigmoidEncoder{field<double>(e, "scale", 1.0), q};
            rec.encoder.validate();
        } catch (const std::invalid_argument& ex) {
            throw unprocessable("encoder", ex.what());
        }
    }
    if (body.contains("kw_probe")) {
        const json& p = body.at("kw_probe");
        rec.probe = {field<double>(p, "gain", 1.0), field<double>(p, "width", 1.0)};
        try {
            rec.probe.validate();
        } catch (const std::invalid_argument& ex) {
            throw unprocessable("kw_probe", ex.what());
        }
    }

    if (dim == 1) {
        SessionConfig c;
        c.alpha = alpha;
        c.estimator = estimator.value_or(quantile ? default_estimator(alpha) : Estimator::bayes);
        c.schedule = schedule;
        c.domain_lo = domain[0];
        c.domain_hi = domain[1];
        c.x1 = 0.5;
        if (body.contains("x1")) {
            const json& x = body.at("x1");
            const double x1 = detail::finite_number(x.is_array() ? x.at(0) : x, "x1");
            c.x1 = scale(x1, c.domain_lo, c.domain_hi);
            if (!(c.x1 > 0.0 && c.x1 < 1.0)) throw unprocessable("x1", "starting point must lie inside the domain");
        }
        c.carry_bounds = field<bool>(body, "carry_bounds", true);
        c.credible_level = field<double>(body, "credible_level", 0.9);
        if (!(c.credible_level > 0.0 && c.credible_level < 1.0))
            throw unprocessable("credible_level", "credible level must lie in (0,1)");
        c.quad = quad;
        rec.state = start_session(c);
    } else {
        MvSessionConfig c;
        c.alpha = alpha;
        c.estimator = estimator.value_or(default_mv_estimator(alpha));
        c.schedule = schedule;
        c.x1.assign(dim, 0.5);
        if (body.contains("x1")) {
            const json& x = body.at("x1");
            if (!x.is_array() || static_cast<int>(x.size()) != dim)
                throw unprocessable("x1", "starting point needs one coordinate per dimension");
            for (int j = 0; j < dim; ++j) {
                c.x1[j] = detail::finite_number(x[j], "x1");
                if (!(c.x1[j] > 0.0 && c.x1[j] < 1.0)) throw unprocessable("x1", "starting point must lie inside (0,1)^p");
            }
        }
        try {
            c.u = ukind_from_string(field<std::string>(body, "u", "diagonal"));
        } catch (const std::invalid_argument& e) {
            throw unprocessable("u", e.what());
        }
        c.draws = field<int>(body, "draws", 64);
        if (c.draws < 1) throw unprocessable("draws", "draw count must be >= 1");
        c.seed = field<std::uint64_t>(body, "seed", 0);
        c.quad = quad;
        rec.state = start_mv_session(c);
    }
    rec.recommendations.push_back(initial_recommendation(rec));
    return rec;
}

// ---------------------------------------------------------------------------
// Outcomes

/// Feeds one outcome to the record and appends the outcome entry and the new
/// recommendation. Quantile sessions take 0 or 1, continuous-root sessions a
/// real response, kw-minimum sessions [y(x + h), y(x - h)]. The record is
/// untouched when anything throws.
inline json apply_outcome(SessionRecord& rec, const json& outcome, bool simulated = false) {
    if (rec.closed) throw ApiError(409, "status", "session is closed");
    json entry{{"step", rec.step()}, {"outcome", outcome}, {"simulated", simulated}};
    json recommendation;
    try {
        if (rec.mode == SessionMode::quantile) {
            if (!outcome.is_number_integer() || (outcome.get<long long>() != 0 && outcome.get<long long>() != 1))
                throw unprocessable("outcome", "binary outcome must be 0 or 1");
            const int y = outcome.get<int>();
            if (rec.multivariate()) {
                auto [next, r] = mv_step(rec.mv(), y);
                rec.state = std::move(next);
                recommendation = recommendation_json(r);
            } else {
                auto [next, r] = step(rec.uni(), y);
                rec.state = std::move(next);
                recommendation = recommendation_json(rec, r);
            }
        } else {
            double y = 0.0;
            if (rec.mode == SessionMode::continuous_root) {
                y = detail::finite_number(outcome, "outcome");
            } else {
                if (!outcome.is_array() || outcome.size() != 2)
                    throw unprocessable("outcome", "kw outcome must be [y_plus, y_minus]");
                const double yp = detail::finite_number(outcome[0], "outcome");
                const double ym = detail::finite_number(outcome[1], "outcome");
                const double h = kw_probes(rec.uni(), rec.probe).at("half_width").get<double>();
                y = (yp - ym) / h;
                entry["quotient"] = y;
            }
            std::vector<int> bits = encode(y, rec.encoder);
            entry["binaries"] = bits;
            auto [next, r] = step_batch(rec.uni(), bits);
            SessionRecord tmp = rec;
            tmp.state = std::move(next);
            recommendation = recommendation_json(tmp, r);
            rec.state = std::move(tmp.state);
        }
    } catch (const ApiError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw unprocessable("outcome", e.what());
    } catch (const DegeneratePosterior& e) {
        throw ApiError(500, "", std::string("posterior computation failed: ") + e.what());
    } catch (const QuadratureError& e) {
        throw ApiError(500, "", std::string("posterior computation failed: ") + e.what());
    }
    rec.outcomes.push_back(std::move(entry));
    rec.recommendations.push_back(recommendation);
    return recommendation;
}

/// Draws the next outcome from the record's built-in simulation and advances
/// the stream position.
inline json simulate_outcome(SessionRecord& rec) {
    if (!rec.simulation) throw unprocessable("simulate", "session has no simulation model");
    SeededRng rng(rec.simulation->seed);
    rng.seek(rec.simulation->position);
    json outcome;
    if (rec.mode == SessionMode::quantile) {
        const ModelId m = model_from_string(rec.simulation->model);
        const double alpha = rec.multivariate() ? rec.mv().config.alpha : rec.uni().config.alpha;
        if (rec.multivariate()) {
            const Point& x = rec.mv().x;
            outcome = simulate_response(m, std::array<double, 2>{x[0], x[1]}, alpha, rng);
        } else {
            outcome = simulate_response(m, rec.uni().x, alpha, rng);
        }
    } else if (rec.mode == SessionMode::continuous_root) {
        outcome = cubic_response(rec.uni().x_original(), rng);
    } else {
        const json probes = kw_probes(rec.uni(), rec.probe);
        const double yp = quadratic_objective(probes.at("upper").get<double>(), rng);
        const double ym = quadratic_objective(probes.at("lower").get<double>(), rng);
        outcome = {yp, ym};
    }
    rec.simulation->position = rng.position();
    return outcome;
}

/// Root of the simulation model in original coordinates.
inline json simulation_root(const SessionRecord& rec) {
    if (!rec.simulation) return nullptr;
    if (detail::is_builtin_example(rec.simulation->model)) return worked_root;
    const ModelId m = model_from_string(rec.simulation->model);
    if (rec.multivariate()) {
        const auto r = true_root_2d(m, rec.mv().config.alpha);
        return {r[0], r[1]};
    }
    const SessionConfig& c = rec.uni().config;
    return unscale(true_root(m, c.alpha), c.domain_lo, c.domain_hi);
}

// ---------------------------------------------------------------------------
// Views

/// Session overview: configuration, current recommendation and the step log
/// (design point and outcome per step, original coordinates).
inline json summary_json(const SessionRecord& rec) {
    json steps = json::array();
    for (std::size_t i = 0; i < rec.outcomes.size(); ++i)
        steps.push_back({{"step", i + 1},
                         {"x", rec.recommendations.at(i).at("next")},
                         {"outcome", rec.outcomes[i].at("outcome")},
                         {"simulated", rec.outcomes[i].at("simulated")}});
    json sim = nullptr;
    if (rec.simulation) sim = {{"model", rec.simulation->model}, {"seed", rec.simulation->seed}, {"root", simulation_root(rec)}};
    return {{"schema_version", session_schema_version},
            {"id", rec.id},
            {"mode", std::string(to_string(rec.mode))},
            {"status", rec.closed ? "closed" : "active"},
            {"created", rec.created},
            {"updated", rec.updated},
            {"dimension", rec.dimension()},
            {"step", rec.step()},
            {"simulation", sim},
            {"encoder", {{"scale", rec.encoder.scale}, {"q", rec.encoder.q}}},
            {"kw_probe", {{"gain", rec.probe.gain}, {"width", rec.probe.width}}},
            {"config", rec.multivariate() ? to_json(rec.mv().config) : to_json(rec.uni().config)},
            {"recommendation", rec.recommendations.back()},
            {"steps", steps}};
}

inline json list_entry(const SessionRecord& rec) {
    return {{"id", rec.id},
            {"mode", std::string(to_string(rec.mode))},
            {"status", rec.closed ? "closed" : "active"},
            {"dimension", rec.dimension()},
            {"alpha", rec.multivariate() ? rec.mv().config.alpha : rec.uni().config.alpha},
            {"step", rec.step()},
            {"simulated", rec.simulation.has_value()},
            {"created", rec.created},
            {"updated", rec.updated}};
}

/// Density of the root behind the current recommendation on theta_i =
/// i / (points + 1), i = 1..points, in scaled units. Multivariate sessions
/// give one curve per coordinate, each a mixture of the conditional
/// posteriors over the averaging nodes.
inline json posterior_json(const SessionRecord& rec, int points) {
    if (points < 2 || points > 100000) throw unprocessable("points", "points must lie in [2, 100000]");
    json theta = json::array();
    for (int i = 1; i <= points; ++i) theta.push_back(static_cast<double>(i) / (points + 1));
    try {
        if (!rec.multivariate()) {
            const SessionState& st = rec.uni();
            const SessionConfig& c = st.config;
            const LocalPosterior model = current_model(st);
            const PosteriorCurve curve = model.posterior_theta(c.quad);
            json density = json::array(), x = json::array();
            for (const json& t : theta) {
                density.push_back(curve.density(t.get<double>()));
                x.push_back(unscale(t.get<double>(), c.domain_lo, c.domain_hi));
            }
            const auto [lo, hi] = curve.credible_interval(c.credible_level);
            return {{"step", st.n},
                    {"points", points},
                    {"theta", theta},
                    {"x", x},
                    {"density", density},
                    {"theta0", model.theta0()},
                    {"subinterval", to_json(model.subinterval(), c)},
                    {"members", model.members().size()},
                    {"mean", curve.mean()},
                    {"mode", curve.mode()},
                    {"ci", {lo, hi}},
                    {"credible_level", c.credible_level},
                    {"domain", {c.domain_lo, c.domain_hi}}};
        }
        const MvSessionState& st = rec.mv();
        const MvSessionConfig& c = st.config;
        const bool fresh = st.history.empty();
        const int at = fresh ? st.n : st.n - 1;
        const Point current = fresh ? st.x : st.history.back().x;
        const Hypercube cube = locate_hypercube(current, c.schedule.slices(at));
        const MvPriorBounds bounds{0.0, 1.0, c.alpha};
        std::vector<MvObservation> members;
        for (const MvObservation& o : st.history)
            if (cube.contains_strictly(o.x)) members.push_back(o);
        json coords = json::array();
        for (int j = 0; j < c.dimension(); ++j) {
            const AveragingOptions opt{c.estimator, c.draws,
                                       derive_seed(c.seed, static_cast<std::uint64_t>(at), static_cast<std::uint64_t>(j)),
                                       c.quad};
            const auto nodes = averaging_nodes(cube, bounds, current, j, opt);
            std::vector<double> density(points, 0.0);
            double theta0 = 0.0;
            for (const auto& b : nodes) {
                const ConditionalModel model(cube, bounds, current, members, j, b);
                const PosteriorCurve curve = model.posterior_theta(c.quad);
                for (int i = 0; i < points; ++i) density[i] += curve.density(theta[i].get<double>());
                theta0 += model.theta0();
            }
            for (double& d : density) d /= static_cast<double>(nodes.size());
            coords.push_back({{"coordinate", j},
                              {"density", density},
                              {"theta0", theta0 / static_cast<double>(nodes.size())},
                              {"lower", cube.lower(j)},
                              {"upper", cube.upper(j)}});
        }
        return {{"step", st.n},     {"points", points},       {"theta", theta},
                {"hypercube", to_json(cube)}, {"members", members.size()}, {"coordinates", coords}};
    } catch (const DegeneratePosterior& e) {
        throw ApiError(500, "", std::string("posterior computation failed: ") + e.what());
    } catch (const QuadratureError& e) {
        throw ApiError(500, "", std::string("posterior computation failed: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayReport {
    SessionRecord record;
    bool state_matches = false;
    bool recommendations_match = false;

    bool identical() const { return state_matches && recommendations_match; }
};

/// Rebuilds a session from the configuration and recorded outcomes of an
/// exported transcript and compares the result with the recorded state.
inline ReplayReport replay(const json& transcript) {
    const SessionRecord recorded = record_from_json(transcript);
    SessionRecord rec = recorded;
    rec.closed = false;
    rec.outcomes = json::array();
    rec.recommendations = json::array();
    if (recorded.multivariate())
        rec.state = start_mv_session(recorded.mv().config);
    else
        rec.state = start_session(recorded.uni().config);
    rec.recommendations.push_back(initial_recommendation(rec));
    for (const json& o : recorded.outcomes) apply_outcome(rec, o.at("outcome"), o.value("simulated", false));
    rec.closed = recorded.closed;

    ReplayReport report;
    const json& recorded_state = transcript.at("state");
    report.state_matches = (rec.multivariate() ? to_json(rec.mv()) : to_json(rec.uni())) == recorded_state;
    report.recommendations_match = rec.recommendations == recorded.recommendations;
    report.record = std::move(rec);
    return report;
}

// ---------------------------------------------------------------------------
// Store

/// Data directory: BSA_DATA_DIR when set, else ./bsa-sessions.
inline std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("BSA_DATA_DIR"); env && *env) return env;
    return "bsa-sessions";
}

/// One JSON file per session. Writes go to a temporary file that is renamed
/// over the old one, so a file always holds a complete state. Mutations of a
/// session hold its lock; reads parse the last file on disk.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& directory() const { return dir_; }

    json create(const json& body) {
        if (body.is_object() && body.contains("import")) return summary_json(import(body.at("import")));
        SessionRecord rec = record_from_request(body);
        rec.created = rec.updated = now_iso();
        assign_id_and_save(rec);
        return summary_json(rec);
    }

    /// Replays an exported transcript under a new id; the replay must
    /// reproduce the recorded state.
    SessionRecord import(const json& transcript) {
        ReplayReport report = replay(transcript);
        if (!report.identical()) throw unprocessable("import", "transcript does not replay to its recorded state");
        SessionRecord rec = std::move(report.record);
        rec.updated = now_iso();
        assign_id_and_save(rec);
        return rec;
    }

    json list() const {
        std::vector<SessionRecord> recs;
        for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
            if (entry.path().extension() != ".json") continue;
            try {
                recs.push_back(read(entry.path()));
            } catch (const std::exception&) {
                // unreadable files are left out of the listing
            }
        }
        std::sort(recs.begin(), recs.end(), [](const SessionRecord& a, const SessionRecord& b) {
            return a.created < b.created || (a.created == b.created && a.id < b.id);
        });
        json out = json::array();
        for (const SessionRecord& r : recs) out.push_back(list_entry(r));
        return out;
    }

    SessionRecord load(const std::string& id) const { return read(path_of(id)); }

    json get(const std::string& id) const { return summary_json(load(id)); }

    json recommendation(const std::string& id) const {
        const SessionRecord rec = load(id);
        json r = rec.recommendations.back();
        r["status"] = rec.closed ? "closed" : "active";
        return r;
    }

    json posterior(const std::string& id, int points) const { return posterior_json(load(id), points); }

    json export_transcript(const std::string& id) const { return to_json(load(id)); }

    /// Body: {"step": n, "outcome": ...} or {"step": n, "simulate": true}.
    json post_outcome(const std::string& id, const json& body) {
        if (!body.is_object()) throw unprocessable("body", "request body must be a JSON object");
        std::lock_guard lock(session_lock(id));
        SessionRecord rec = load(id);
        if (rec.closed) throw ApiError(409, "status", "session is closed");
        if (!body.contains("step")) throw unprocessable("step", "the expected step number is required");
        if (!body.at("step").is_number_integer()) throw unprocessable("step", "step must be an integer");
        if (body.at("step").get<long long>() != rec.step())
            throw ApiError(409, "step", "step mismatch: session is at step " + std::to_string(rec.step()));
        const bool simulate = detail::field<bool>(body, "simulate", false);
        json outcome;
        if (simulate) {
            if (body.contains("outcome")) throw unprocessable("outcome", "give either outcome or simulate");
            outcome = simulate_outcome(rec);
        } else {
            if (!body.contains("outcome")) throw unprocessable("outcome", "outcome is required");
            outcome = body.at("outcome");
        }
        json r = apply_outcome(rec, outcome, simulate);
        rec.updated = now_iso();
        save(rec);
        r["outcome"] = outcome;
        return r;
    }

    json close(const std::string& id) {
        std::lock_guard lock(session_lock(id));
        SessionRecord rec = load(id);
        if (!rec.closed) {
            rec.closed = true;
            rec.updated = now_iso();
            save(rec);
        }
        return summary_json(rec);
    }

private:
    static bool valid_id(const std::string& id) {
        if (id.empty() || id.size() > 64) return false;
        for (char ch : id)
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_')) return false;
        return true;
    }

    std::filesystem::path path_of(const std::string& id) const {
        if (!valid_id(id)) throw ApiError(404, "id", "unknown session '" + id + "'");
        return dir_ / (id + ".json");
    }

    static SessionRecord read(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ApiError(404, "id", "unknown session '" + path.stem().string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        json j;
        try {
            j = json::parse(ss.str());
        } catch (const json::parse_error& e) {
            throw ApiError(500, "", "corrupt session file " + path.string() + ": " + e.what());
        }
        return record_from_json(j);
    }

    void save(const SessionRecord& rec) const {
        const std::filesystem::path target = dir_ / (rec.id + ".json");
        std::filesystem::path tmp = target;
        tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(tmp_counter());
        const std::string text = to_json(rec).dump(2) + "\n";
        std::FILE* f = std::fopen(tmp.c_str(), "wb");
        if (!f) throw std::runtime_error("cannot write " + tmp.string());
        const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size() && std::fflush(f) == 0 &&
                        ::fsync(::fileno(f)) == 0;
        std::fclose(f);
        if (!ok) {
            std::filesystem::remove(tmp);
            throw std::runtime_error("cannot write " + tmp.string());
        }
        std::filesystem::rename(tmp, target);
    }

    static std::uint64_t tmp_counter() {
        static std::mutex m;
        static std::uint64_t c = 0;
        std::lock_guard lock(m);
        return ++c;
    }

    void assign_id_and_save(SessionRecord& rec) {
        std::lock_guard lock(ids_);
        std::random_device rd;
        std::mt19937_64 gen((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
        do {
            char buf[17];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
            rec.id = std::string("s") + buf;
        } while (std::filesystem::exists(dir_ / (rec.id + ".json")));
        save(rec);
    }

    std::mutex& session_lock(const std::string& id) {
        std::lock_guard lock(locks_mutex_);
        auto& m = locks_[id];
        if (!m) m = std::make_unique<std::mutex>();
        return *m;
    }

    std::filesystem::path dir_;
    std::mutex ids_;
    std::mutex locks_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

// ---------------------------------------------------------------------------
// HTTP binding

namespace detail {

inline void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const ApiError& e) {
        reply(res, e.status(), e.body());
    } catch (const json::parse_error& e) {
        reply(res, 400, {{"error", std::string("invalid JSON: ") + e.what()}});
    } catch (const std::invalid_argument& e) {
        reply(res, 422, {{"error", e.what()}});
    } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
    }
}

inline json parse_body(const httplib::Request& req) { return req.body.empty() ? json::object() : json::parse(req.body); }

}  // namespace detail

/// Binds the session API to a server. Responses are JSON; errors carry
/// {"error": message, "field": name}.
inline void register_routes(httplib::Server& server, SessionStore& store) {
    using detail::guarded;
    using detail::reply;
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 201, store.create(detail::parse_body(req))); });
    });
    server.Get("/sessions", [&store](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, store.list()); });
    });
    server.Get("/sessions/:id", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, store.get(req.path_params.at("id"))); });
    });
    server.Post("/sessions/:id/outcomes", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, store.post_outcome(req.path_params.at("id"), detail::parse_body(req))); });
    });
    server.Get("/sessions/:id/posterior", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            int points = 512;
            if (req.has_param("points")) {
                const std::string p = req.get_param_value("points");
                std::size_t used = 0;
                try {
                    points = std::stoi(p, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != p.size() || p.empty()) throw unprocessable("points", "points must be an integer");
            }
            reply(res, 200, store.posterior(req.path_params.at("id"), points));
        });
    });
    server.Get("/sessions/:id/recommendation", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, store.recommendation(req.path_params.at("id"))); });
    });
    server.Post("/sessions/:id/close", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, store.close(req.path_params.at("id"))); });
    });
    server.Get("/sessions/:id/export", [&store](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { reply(res, 200, store.export_transcript(req.path_params.at("id"))); });
    });
}

}  // namespace bsa

#endif  // BSA_SERVICE_HPP
