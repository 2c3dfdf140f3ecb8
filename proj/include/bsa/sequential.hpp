#ifndef BSA_SEQUENTIAL_HPP
#define BSA_SEQUENTIAL_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "bsa/local_model.hpp"

namespace bsa {

enum class Estimator { bayes, map };

inline std::string_view to_string(Estimator e) { return e == Estimator::bayes ? "bayes" : "map"; }

inline Estimator estimator_from_string(std::string_view s) {
    if (s == "bayes") return Estimator::bayes;
    if (s == "map") return Estimator::map;
    throw std::invalid_argument("unknown estimator '" + std::string(s) + "'");
}

/// Posterior mean for moderate levels, posterior mode in the tails.
inline Estimator default_estimator(double alpha) {
    return alpha >= 0.2 && alpha <= 0.8 ? Estimator::bayes : Estimator::map;
}

// ---------------------------------------------------------------------------
// Domain mapping and slice location

inline double scale(double x, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("search domain must satisfy lo < hi");
    return (x - lo) / (hi - lo);
}

inline double unscale(double u, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("search domain must satisfy lo < hi");
    return lo + u * (hi - lo);
}

/// Slice (v0, v1] of an s-grid containing x, with t = ceil(x s).
inline Subinterval locate(double x, int s) {
    if (!(x > 0.0 && x <= 1.0)) throw std::invalid_argument("locate: point must lie in (0,1]");
    if (s < 1) throw std::invalid_argument("locate: slice count must be >= 1");
    int t = static_cast<int>(std::ceil(x * s));
    t = std::clamp(t, 1, s);
    // Guard the ceiling against rounding in x * s.
    if (t > 1 && x <= static_cast<double>(t - 1) / s) --t;
    if (t < s && x > static_cast<double>(t) / s) ++t;
    return Subinterval(t, s);
}

/// Keeps a design point inside (0,1): the ends are replaced by the midpoint
/// of the outermost slice.
inline double interior_point(double x, int s) {
    if (!std::isfinite(x)) throw std::invalid_argument("design point is not finite");
    if (x <= 0.0) return 0.5 / s;
    if (x >= 1.0) return 1.0 - 0.5 / s;
    return x;
}

// ---------------------------------------------------------------------------
// Slice-count schedule

/// Two-stage slice-count guideline by target level and step number. Levels
/// on a band edge take the band with fewer slices.
inline int schedule_s(double alpha, int n) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    if (n < 1) throw std::invalid_argument("step number must be >= 1");
    const bool early = n <= 10;
    if (alpha >= 0.4 && alpha <= 0.6) return early ? 5 : 9;
    if (alpha >= 0.1 && alpha <= 0.9) return early ? 9 : 17;
    return early ? 13 : 23;
}

struct SSchedule {
    int stage1 = 5;
    int stage2 = 9;
    int switch_step = 11;  // first step using stage2

    static SSchedule fixed(int s) { return {s, s, 2}; }

    static SSchedule table(double alpha) { return {schedule_s(alpha, 1), schedule_s(alpha, 11), 11}; }

    bool is_fixed() const { return stage1 == stage2; }

    int slices(int n) const { return n < switch_step ? stage1 : stage2; }

    void validate() const {
        if (stage1 < 1 || stage2 < 1) throw std::invalid_argument("slice counts must be >= 1");
        if (switch_step < 2) throw std::invalid_argument("switch step must be >= 2");
    }

    friend bool operator==(const SSchedule&, const SSchedule&) = default;
};

// ---------------------------------------------------------------------------
// Session

struct SessionConfig {
    double alpha = 0.5;
    Estimator estimator = Estimator::bayes;
    SSchedule schedule;
    double domain_lo = 0.0;
    double domain_hi = 1.0;
    double x1 = 0.5;            // starting point, scaled
    bool carry_bounds = true;   // percentile update of neighbouring priors
    double credible_level = 0.9;
    Quadrature quad;

    static SessionConfig for_alpha(double alpha) {
        SessionConfig c;
        c.alpha = alpha;
        c.estimator = default_estimator(alpha);
        c.schedule = SSchedule::table(alpha);
        return c;
    }

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
        if (!(std::isfinite(domain_lo) && std::isfinite(domain_hi) && domain_lo < domain_hi))
            throw std::invalid_argument("search domain must satisfy lo < hi");
        if (!(x1 > 0.0 && x1 < 1.0)) throw std::invalid_argument("starting point must lie inside the domain");
        if (!(credible_level > 0.0 && credible_level < 1.0))
            throw std::invalid_argument("credible level must lie in (0,1)");
        schedule.validate();
        quad.validate();
    }
};

struct SessionState {
    SessionConfig config;
    std::vector<Observation> history;       // scaled design points
    std::map<int, PriorBounds> bounds;      // per-slice priors for the grid below
    int bounds_slices = 0;                  // slice count the bounds map refers to
    double x = 0.5;                         // current design point, scaled
    int n = 1;                              // index of the current design point

    double x_original() const { return unscale(x, config.domain_lo, config.domain_hi); }

    PriorBounds bounds_for(int index) const {
        auto it = bounds.find(index);
        return it != bounds.end() ? it->second : PriorBounds{0.0, 1.0, config.alpha};
    }

    friend bool operator==(const SessionState& l, const SessionState& r) {
        return l.history == r.history && l.bounds == r.bounds && l.bounds_slices == r.bounds_slices &&
               l.x == r.x && l.n == r.n && l.config.alpha == r.config.alpha &&
               l.config.estimator == r.config.estimator && l.config.schedule == r.config.schedule &&
               l.config.domain_lo == r.config.domain_lo && l.config.domain_hi == r.config.domain_hi &&
               l.config.x1 == r.config.x1 && l.config.carry_bounds == r.config.carry_bounds &&
               l.config.credible_level == r.config.credible_level;
    }
};

inline SessionState start_session(const SessionConfig& config) {
    config.validate();
    SessionState st;
    st.config = config;
    st.x = config.x1;
    st.n = 1;
    st.bounds_slices = config.schedule.slices(1);
    return st;
}

/// Posterior summary behind a recommendation.
struct StepResult {
    int step = 1;                 // index of the recommended point
    double next_scaled = 0.5;
    double next_original = 0.5;
    double mean = 0.5;            // scaled
    double mode = 0.5;            // scaled
    double ci_lower = 0.0;        // scaled, equal-tail
    double ci_upper = 1.0;
    double theta0 = 0.5;
    Subinterval subinterval;
    PriorBounds bounds;
    int members = 0;

    friend bool operator==(const StepResult&, const StepResult&) = default;
};

/// Prior of the landing slice after the design point crosses into a
/// neighbouring slice. Moving up raises rho_L to the 5% point of the departed
/// slice's rho1 posterior; moving down lowers rho_U to the 95% point of its
/// rho0 posterior. The stored bound is kept when it is already tighter, and an
/// ordering violation resets the slice to (0, 1). Other moves return the
/// stored bounds unchanged.
inline PriorBounds update_bounds(const LocalPosterior& departed, int to_index, const PriorBounds& stored,
                                 const Quadrature& quad = {}) {
    const int from = departed.subinterval().index;
    PriorBounds next = stored;
    if (to_index == from + 1) {
        next.rho_lower = std::max(stored.rho_lower, departed.posterior_rho1(quad).quantile(0.05));
    } else if (to_index == from - 1) {
        next.rho_upper = std::min(stored.rho_upper, departed.posterior_rho0(quad).quantile(0.95));
    } else {
        return stored;
    }
    if (!next.valid()) return {0.0, 1.0, stored.alpha};
    return next;
}

namespace detail {

inline LocalPosterior slice_model(const SessionState& st, int step_index, double x) {
    const int s = st.config.schedule.slices(step_index);
    const Subinterval sub = locate(x, s);
    const PriorBounds b = s == st.bounds_slices ? st.bounds_for(sub.index) : PriorBounds{0.0, 1.0, st.config.alpha};
    return LocalPosterior::from_history(sub, b, st.history);
}

inline double point_estimate(const LocalPosterior& model, Estimator est, const Quadrature& quad) {
    if (est == Estimator::bayes) return model.posterior_theta(quad).mean();
    const double t0 = model.theta0();
    using Piece = PosteriorCurve::Piece;
    return PosteriorCurve::find_mode([&](double th) { return model.theta_kernel(th); },
                                     {Piece{0.0, t0, model.subinterval().v1()}, Piece{t0, 1.0, model.subinterval().v0()}},
                                     t0);
}

inline StepResult summarize(const SessionState& st, const LocalPosterior& model, double next) {
    const PosteriorCurve curve = model.posterior_theta(st.config.quad);
    StepResult r;
    r.step = st.n;
    r.next_scaled = next;
    r.next_original = unscale(next, st.config.domain_lo, st.config.domain_hi);
    r.mean = curve.mean();
    r.mode = curve.mode();
    std::tie(r.ci_lower, r.ci_upper) = curve.credible_interval(st.config.credible_level);
    r.theta0 = model.theta0();
    r.subinterval = model.subinterval();
    r.bounds = model.bounds();
    r.members = static_cast<int>(model.members().size());
    return r;
}

// Consumes y for the current point; returns the model that set the next point.
inline LocalPosterior advance_in_place(SessionState& st, int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("binary outcome must be 0 or 1");
    const int n = st.n;
    const int s = st.config.schedule.slices(n);
    st.history.push_back({st.x, y});
    if (s != st.bounds_slices) {
        st.bounds.clear();
        st.bounds_slices = s;
    }
    const LocalPosterior model = slice_model(st, n, st.x);
    const double raw = point_estimate(model, st.config.estimator, st.config.quad);
    const double next = interior_point(raw, s);

    if (st.config.carry_bounds && st.config.schedule.slices(n + 1) == s) {
        const int to = locate(next, s).index;
        const int from = model.subinterval().index;
        if (std::abs(to - from) == 1)
            st.bounds[to] = update_bounds(model, to, st.bounds_for(to), st.config.quad);
    }
    st.x = next;
    st.n = n + 1;
    return model;
}

}  // namespace detail

/// Feeds the outcome at the current design point and moves to the next one.
/// On failure (degenerate posterior, bad outcome) the input is untouched.
inline std::pair<SessionState, StepResult> step(const SessionState& state, int y) {
    SessionState next = state;
    const LocalPosterior model = detail::advance_in_place(next, y);
    StepResult r = detail::summarize(next, model, next.x);
    return {std::move(next), r};
}

/// Same transition as step without the posterior summary; returns the new
/// design point (scaled).
inline double advance(SessionState& state, int y) {
    SessionState next = state;
    detail::advance_in_place(next, y);
    state = std::move(next);
    return state.x;
}

/// Feeds several outcomes at the current design point before moving on.
inline std::pair<SessionState, StepResult> step_batch(const SessionState& state, const std::vector<int>& ys) {
    if (ys.empty()) throw std::invalid_argument("outcome batch is empty");
    SessionState tmp = state;
    for (std::size_t i = 0; i + 1 < ys.size(); ++i) {
        if (ys[i] != 0 && ys[i] != 1) throw std::invalid_argument("binary outcome must be 0 or 1");
        tmp.history.push_back({tmp.x, ys[i]});
    }
    return step(tmp, ys.back());
}

/// Model behind the current design point: the slice of the last observation
/// under the slice count of that step, or the starting slice's prior.
inline LocalPosterior current_model(const SessionState& st) {
    if (st.history.empty()) return detail::slice_model(st, st.n, st.x);
    return detail::slice_model(st, st.n - 1, st.history.back().x);
}

/// Recommendation for the current state without consuming an outcome: the
/// current design point together with the posterior that produced it.
inline StepResult estimate(const SessionState& st) { return detail::summarize(st, current_model(st), st.x); }

}  // namespace bsa

#endif  // BSA_SEQUENTIAL_HPP
