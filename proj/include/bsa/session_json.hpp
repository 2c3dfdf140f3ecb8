#ifndef BSA_SESSION_JSON_HPP
#define BSA_SESSION_JSON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bsa/multivariate.hpp"
#include "bsa/sequential.hpp"

namespace bsa {

using json = nlohmann::json;

inline constexpr int session_schema_version = 1;

// Doubles are written in shortest round-trip form, so every state survives a
// save/load cycle bit for bit.

inline json to_json(const Quadrature& q) {
    return {{"abs_tol", q.abs_tol}, {"rel_tol", q.rel_tol}, {"max_depth", q.max_depth}, {"max_panels", q.max_panels}};
}

inline Quadrature quadrature_from_json(const json& j) {
    Quadrature q;
    q.abs_tol = j.value("abs_tol", q.abs_tol);
    q.rel_tol = j.value("rel_tol", q.rel_tol);
    q.max_depth = j.value("max_depth", q.max_depth);
    q.max_panels = j.value("max_panels", q.max_panels);
    return q;
}

inline json to_json(const SSchedule& s) {
    return {{"stage1", s.stage1}, {"stage2", s.stage2}, {"switch_step", s.switch_step}};
}

inline SSchedule schedule_from_json(const json& j) {
    return {j.at("stage1").get<int>(), j.at("stage2").get<int>(), j.at("switch_step").get<int>()};
}

inline json to_json(const SessionConfig& c) {
    return {{"alpha", c.alpha},
            {"estimator", std::string(to_string(c.estimator))},
            {"schedule", to_json(c.schedule)},
            {"domain", {c.domain_lo, c.domain_hi}},
            {"x1", c.x1},
            {"carry_bounds", c.carry_bounds},
            {"credible_level", c.credible_level},
            {"quadrature", to_json(c.quad)}};
}

inline SessionConfig session_config_from_json(const json& j) {
    SessionConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.estimator = estimator_from_string(j.at("estimator").get<std::string>());
    c.schedule = schedule_from_json(j.at("schedule"));
    c.domain_lo = j.at("domain").at(0).get<double>();
    c.domain_hi = j.at("domain").at(1).get<double>();
    c.x1 = j.at("x1").get<double>();
    c.carry_bounds = j.at("carry_bounds").get<bool>();
    c.credible_level = j.at("credible_level").get<double>();
    if (j.contains("quadrature")) c.quad = quadrature_from_json(j.at("quadrature"));
    return c;
}

inline json to_json(const SessionState& st) {
    json history = json::array();
    for (const Observation& o : st.history) history.push_back({{"x", o.x}, {"y", o.y}});
    json bounds = json::array();
    for (const auto& [index, b] : st.bounds)
        bounds.push_back({{"index", index}, {"rho_lower", b.rho_lower}, {"rho_upper", b.rho_upper}});
    return {{"dimension", 1},     {"config", to_json(st.config)},      {"history", history},
            {"bounds", bounds},   {"bounds_slices", st.bounds_slices}, {"x", st.x},
            {"n", st.n}};
}

inline SessionState session_state_from_json(const json& j) {
    SessionState st;
    st.config = session_config_from_json(j.at("config"));
    for (const json& o : j.at("history")) st.history.push_back({o.at("x").get<double>(), o.at("y").get<int>()});
    for (const json& b : j.at("bounds"))
        st.bounds[b.at("index").get<int>()] = {b.at("rho_lower").get<double>(), b.at("rho_upper").get<double>(),
                                               st.config.alpha};
    st.bounds_slices = j.at("bounds_slices").get<int>();
    st.x = j.at("x").get<double>();
    st.n = j.at("n").get<int>();
    return st;
}

inline json to_json(const MvSessionConfig& c) {
    return {{"alpha", c.alpha},
            {"estimator", std::string(to_string(c.estimator))},
            {"schedule", to_json(c.schedule)},
            {"x1", c.x1},
            {"u", std::string(to_string(c.u))},
            {"draws", c.draws},
            {"seed", c.seed},
            {"quadrature", to_json(c.quad)}};
}

inline MvSessionConfig mv_config_from_json(const json& j) {
    MvSessionConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.estimator = estimator_from_string(j.at("estimator").get<std::string>());
    c.schedule = schedule_from_json(j.at("schedule"));
    c.x1 = j.at("x1").get<Point>();
    c.u = ukind_from_string(j.at("u").get<std::string>());
    c.draws = j.at("draws").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("quadrature")) c.quad = quadrature_from_json(j.at("quadrature"));
    return c;
}

inline json to_json(const MvSessionState& st) {
    json history = json::array();
    for (const MvObservation& o : st.history) history.push_back({{"x", o.x}, {"y", o.y}});
    return {{"dimension", st.config.dimension()},
            {"config", to_json(st.config)},
            {"history", history},
            {"x", st.x},
            {"n", st.n}};
}

inline MvSessionState mv_state_from_json(const json& j) {
    MvSessionState st;
    st.config = mv_config_from_json(j.at("config"));
    for (const json& o : j.at("history")) st.history.push_back({o.at("x").get<Point>(), o.at("y").get<int>()});
    st.x = j.at("x").get<Point>();
    st.n = j.at("n").get<int>();
    return st;
}

}  // namespace bsa

#endif  // BSA_SESSION_JSON_HPP
