#ifndef BSA_MULTIVARIATE_HPP
#define BSA_MULTIVARIATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bsa/local_model.hpp"
#include "bsa/sequential.hpp"

namespace bsa {

using Point = std::vector<double>;

// ---------------------------------------------------------------------------
// Hypercube location

/// Cell prod ((t_j - 1)/s, t_j/s] of the s-grid on (0,1]^p.
struct Hypercube {
    int slices = 1;
    std::vector<int> index;

    int dimension() const { return static_cast<int>(index.size()); }
    double lower(int j) const { return static_cast<double>(index[j] - 1) / slices; }
    double upper(int j) const { return static_cast<double>(index[j]) / slices; }

    /// Helix vertices: v_0 = (t - 1)/s, v_a = v_{a-1} + e_a/s.
    Point vertex(int a) const {
        if (a < 0 || a > dimension()) throw std::out_of_range("vertex index out of range");
        Point v(index.size());
        for (int j = 0; j < dimension(); ++j) v[j] = j < a ? upper(j) : lower(j);
        return v;
    }

    bool contains_strictly(const Point& x) const {
        if (x.size() != index.size()) return false;
        for (int j = 0; j < dimension(); ++j)
            if (!(x[j] > lower(j) && x[j] < upper(j))) return false;
        return true;
    }

    friend bool operator==(const Hypercube&, const Hypercube&) = default;
};

inline Hypercube locate_hypercube(const Point& x, int s) {
    if (x.empty()) throw std::invalid_argument("point has no coordinates");
    Hypercube h;
    h.slices = s;
    h.index.reserve(x.size());
    for (double xj : x) h.index.push_back(locate(xj, s).index);
    return h;
}

struct MvObservation {
    Point x;
    int y = 0;

    friend bool operator==(const MvObservation&, const MvObservation&) = default;
};

using MvPriorBounds = PriorBounds;

// ---------------------------------------------------------------------------
// Conditional model along one coordinate

/// Posterior of (theta_j, beta-tilde_j) given the other scaled slopes, for the
/// hyperplane through (x^(j), alpha) on the hypercube of the current point.
class ConditionalModel {
public:
    /// `others` has one entry per coordinate; entry j is ignored.
    ConditionalModel(Hypercube cube, MvPriorBounds bounds, Point current, std::vector<MvObservation> members, int j,
                     std::vector<double> others)
        : data_(std::make_shared<Data>()) {
        bounds.validate();
        const int p = cube.dimension();
        if (p < 1) throw std::invalid_argument("hypercube has no coordinates");
        if (j < 0 || j >= p) throw std::invalid_argument("coordinate index out of range");
        if (static_cast<int>(current.size()) != p || static_cast<int>(others.size()) != p)
            throw std::invalid_argument("dimension mismatch");
        Data& d = *data_;
        d.cube = std::move(cube);
        d.bounds = bounds;
        d.current = std::move(current);
        d.members = std::move(members);
        d.j = j;
        d.others = std::move(others);
        d.others[j] = 0.0;
        std::sort(d.members.begin(), d.members.end(), [](const MvObservation& l, const MvObservation& r) {
            return l.x < r.x || (l.x == r.x && l.y < r.y);
        });
        for (const MvObservation& o : d.members) {
            if (!d.cube.contains_strictly(o.x)) throw std::invalid_argument("member observation outside the open hypercube");
            if (o.y != 0 && o.y != 1) throw std::invalid_argument("responses must be binary");
        }
        const double s = d.cube.slices;
        d.alpha0 = d.alpha1 = bounds.alpha;
        double sum = 0.0;
        for (int a = 0; a < p; ++a) {
            if (a == j) continue;
            if (!(d.others[a] > 0.0)) throw std::invalid_argument("conditioning slopes must be positive");
            d.alpha0 += d.others[a] * s * (d.cube.lower(a) - d.current[a]);
            d.alpha1 += d.others[a] * s * (d.cube.upper(a) - d.current[a]);
            sum += d.others[a];
        }
        if (!(d.alpha0 > bounds.rho_lower && d.alpha1 < bounds.rho_upper))
            throw std::invalid_argument("conditioning slopes outside the admissible simplex");
        d.other_sum = sum;
        d.alpha_i.reserve(d.members.size());
        for (const MvObservation& o : d.members) {
            double ai = bounds.alpha;
            for (int a = 0; a < p; ++a)
                if (a != j) ai += d.others[a] * s * (o.x[a] - d.current[a]);
            d.alpha_i.push_back(ai);
        }
        d.theta0 = ((bounds.rho_upper - d.alpha1) * d.cube.lower(j) + (d.alpha0 - bounds.rho_lower) * d.cube.upper(j)) /
                   (bounds.rho_upper - d.alpha1 + d.alpha0 - bounds.rho_lower);
    }

    /// Members are the history points strictly inside the hypercube.
    static ConditionalModel from_history(const Hypercube& cube, const MvPriorBounds& bounds, const Point& current,
                                         std::span<const MvObservation> history, int j, std::vector<double> others) {
        std::vector<MvObservation> members;
        for (const MvObservation& o : history)
            if (cube.contains_strictly(o.x)) members.push_back(o);
        return ConditionalModel(cube, bounds, current, std::move(members), j, std::move(others));
    }

    int coordinate() const { return data_->j; }
    const Hypercube& hypercube() const { return data_->cube; }
    std::span<const MvObservation> members() const { return data_->members; }
    double alpha0() const { return data_->alpha0; }
    double alpha1() const { return data_->alpha1; }
    double theta0() const { return data_->theta0; }
    double eta(double theta) const { return eta_of(*data_, theta); }

    /// Unnormalised conditional root posterior, divided by prod a_i.
    double theta_kernel(double theta) const { return theta_kernel_of(*data_, theta); }
    double beta_kernel(double bt) const { return beta_kernel_of(*data_, bt); }

    double beta_lower() const {
        const Data& d = *data_;
        const double s = d.cube.slices;
        return std::max((d.bounds.rho_upper - d.alpha1) / (s * d.cube.upper(d.j)),
                        (d.alpha0 - d.bounds.rho_lower) / (s * (1.0 - d.cube.lower(d.j))));
    }
    double beta_upper() const { return data_->bounds.width() - data_->other_sum; }

    std::vector<PosteriorCurve::Piece> theta_pieces() const {
        const Data& d = *data_;
        return {{0.0, d.theta0, d.cube.upper(d.j)}, {d.theta0, 1.0, d.cube.lower(d.j)}};
    }

    PosteriorCurve posterior_theta(const Quadrature& quad = {}) const {
        auto data = data_;
        return PosteriorCurve([data](double theta) { return theta_kernel_of(*data, theta); }, theta_pieces(),
                              data->theta0, quad);
    }

    double theta_mode() const {
        return PosteriorCurve::find_mode([this](double th) { return theta_kernel(th); }, theta_pieces(), theta0());
    }

    PosteriorCurve posterior_beta(const Quadrature& quad = {}) const {
        const double lo = beta_lower();
        const double hi = beta_upper();
        if (!(lo < hi)) throw DegeneratePosterior("conditional slope posterior has empty support");
        auto data = data_;
        return PosteriorCurve([data](double bt) { return beta_kernel_of(*data, bt); }, {{lo, hi, {}}}, {}, quad);
    }

private:
    struct Data {
        Hypercube cube;
        MvPriorBounds bounds;
        Point current;
        std::vector<MvObservation> members;
        int j = 0;
        std::vector<double> others;
        std::vector<double> alpha_i;
        double alpha0 = 0.0;
        double alpha1 = 0.0;
        double theta0 = 0.0;
        double other_sum = 0.0;
    };

    static std::vector<double>& scratch() {
        thread_local std::vector<double> buf;
        return buf;
    }
    static std::vector<LinearFactor>& factor_scratch() {
        thread_local std::vector<LinearFactor> buf;
        return buf;
    }

    // (p+1)! s / (rho_U - rho_L)^(p+1)
    static double prior_constant(const Data& d) {
        double c = d.cube.slices;
        for (int k = 2; k <= d.cube.dimension() + 1; ++k) c *= k / d.bounds.width();
        return c / d.bounds.width();
    }

    static double eta_of(const Data& d, double theta) {
        if (!std::isfinite(theta)) throw std::invalid_argument("eta: non-finite theta");
        const double s = d.cube.slices;
        if (theta <= d.theta0) {
            const double gap = d.cube.upper(d.j) - theta;
            if (gap <= 0.0) throw std::domain_error("eta: theta at or beyond the upper face");
            return (d.bounds.rho_upper - d.alpha1) / (s * gap);
        }
        const double gap = theta - d.cube.lower(d.j);
        if (gap <= 0.0) throw std::domain_error("eta: theta at or below the lower face");
        return (d.alpha0 - d.bounds.rho_lower) / (s * gap);
    }

    static double theta_kernel_of(const Data& d, double theta) {
        const double e = eta_of(d, theta);
        const double s = d.cube.slices;
        auto& f = factor_scratch();
        f.clear();
        for (std::size_t i = 0; i < d.members.size(); ++i) {
            const int y = d.members[i].y;
            const double sign = 2.0 * y - 1.0;
            const double a = 1.0 - y + sign * d.alpha_i[i];
            const double b = s * sign * (d.members[i].x[d.j] - theta);
            f.push_back({1.0, b / a});
        }
        return prior_constant(d) * product_integral(f, 0.0, e, 1, scratch());
    }

    static double beta_kernel_of(const Data& d, double bt) {
        const double s = d.cube.slices;
        const double lo = d.cube.upper(d.j) - (d.bounds.rho_upper - d.alpha1) / (s * bt);
        const double hi = d.cube.lower(d.j) + (d.alpha0 - d.bounds.rho_lower) / (s * bt);
        auto& f = factor_scratch();
        f.clear();
        for (std::size_t i = 0; i < d.members.size(); ++i) {
            const int y = d.members[i].y;
            const double sign = 2.0 * y - 1.0;
            f.push_back({1.0 - y + sign * (d.alpha_i[i] + s * bt * d.members[i].x[d.j]), -sign * s * bt});
        }
        return prior_constant(d) * bt * product_integral(f, lo, hi, 0, scratch());
    }

    std::shared_ptr<Data> data_;
};

// ---------------------------------------------------------------------------
// Averaging over the other slopes

/// Upper end of the admissible range of the single other slope (p = 2).
inline double other_slope_limit(const Hypercube& cube, const MvPriorBounds& bounds, const Point& current, int j) {
    if (cube.dimension() != 2) throw std::invalid_argument("other_slope_limit needs p = 2");
    const int k = 1 - j;
    const double s = cube.slices;
    const double below = current[k] - cube.lower(k);
    const double above = cube.upper(k) - current[k];
    const double inf = std::numeric_limits<double>::infinity();
    return std::min(below > 0.0 ? (bounds.alpha - bounds.rho_lower) / (s * below) : inf,
                    above > 0.0 ? (bounds.rho_upper - bounds.alpha) / (s * above) : inf);
}

/// Per-coordinate box containing the admissible simplex of the other slopes.
inline std::vector<double> other_slope_box(const Hypercube& cube, const MvPriorBounds& bounds, const Point& current,
                                           int j) {
    const double s = cube.slices;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> box(cube.dimension(), 0.0);
    for (int a = 0; a < cube.dimension(); ++a) {
        if (a == j) continue;
        const double below = current[a] - cube.lower(a);
        const double above = cube.upper(a) - current[a];
        box[a] = std::min(below > 0.0 ? (bounds.alpha - bounds.rho_lower) / (s * below) : inf,
                          above > 0.0 ? (bounds.rho_upper - bounds.alpha) / (s * above) : inf);
    }
    return box;
}

inline bool in_simplex(const Hypercube& cube, const MvPriorBounds& bounds, const Point& current, int j,
                       const std::vector<double>& others) {
    const double s = cube.slices;
    double a0 = bounds.alpha, a1 = bounds.alpha;
    for (int a = 0; a < cube.dimension(); ++a) {
        if (a == j) continue;
        if (!(others[a] > 0.0)) return false;
        a0 += others[a] * s * (cube.lower(a) - current[a]);
        a1 += others[a] * s * (cube.upper(a) - current[a]);
    }
    return a0 > bounds.rho_lower && a1 < bounds.rho_upper;
}

struct AveragingOptions {
    Estimator estimator = Estimator::bayes;
    int draws = 64;               // p > 2
    std::uint64_t seed = 0;       // p > 2
    Quadrature quad;
};

/// Nodes of the other slopes used to average the conditional estimates:
/// i u/8, i = 1..7, for p = 2; uniform draws from the simplex otherwise.
inline std::vector<std::vector<double>> averaging_nodes(const Hypercube& cube, const MvPriorBounds& bounds,
                                                        const Point& current, int j, const AveragingOptions& opt) {
    const int p = cube.dimension();
    std::vector<std::vector<double>> nodes;
    if (p == 1) {
        nodes.push_back({0.0});
        return nodes;
    }
    if (p == 2) {
        const double u = other_slope_limit(cube, bounds, current, j);
        if (!(u > 0.0) || !std::isfinite(u)) throw DegeneratePosterior("empty slope simplex");
        for (int i = 1; i <= 7; ++i) {
            std::vector<double> b(2, 0.0);
            b[1 - j] = i * u / 8.0;
            nodes.push_back(std::move(b));
        }
        return nodes;
    }
    if (opt.draws < 1) throw std::invalid_argument("draw count must be >= 1");
    const std::vector<double> box = other_slope_box(cube, bounds, current, j);
    for (int a = 0; a < p; ++a)
        if (a != j && !(box[a] > 0.0 && std::isfinite(box[a]))) throw DegeneratePosterior("empty slope simplex");
    SeededRng rng(opt.seed);
    constexpr long max_tries = 1000000;
    long tries = 0;
    while (static_cast<int>(nodes.size()) < opt.draws) {
        if (++tries > max_tries) throw DegeneratePosterior("slope simplex rejection sampling did not converge");
        std::vector<double> b(p, 0.0);
        for (int a = 0; a < p; ++a)
            if (a != j) b[a] = box[a] * (1.0 - rng.uniform());
        if (in_simplex(cube, bounds, current, j, b)) nodes.push_back(std::move(b));
    }
    return nodes;
}

/// Conditional mean (or mode) of theta_j averaged over the other slopes.
inline double averaged_theta(int j, const Hypercube& cube, const MvPriorBounds& bounds, const Point& current,
                             std::span<const MvObservation> history, const AveragingOptions& opt = {}) {
    std::vector<MvObservation> members;
    for (const MvObservation& o : history)
        if (cube.contains_strictly(o.x)) members.push_back(o);
    const auto nodes = averaging_nodes(cube, bounds, current, j, opt);
    double sum = 0.0;
    for (const auto& b : nodes) {
        const ConditionalModel model(cube, bounds, current, members, j, b);
        sum += opt.estimator == Estimator::bayes ? model.posterior_theta(opt.quad).mean() : model.theta_mode();
    }
    return sum / static_cast<double>(nodes.size());
}

// ---------------------------------------------------------------------------
// Next-point selection

using UFunction = std::function<double(const Point&)>;

enum class UKind { euclidean, diagonal };

inline std::string_view to_string(UKind u) { return u == UKind::euclidean ? "euclidean" : "diagonal"; }

inline UKind ukind_from_string(std::string_view s) {
    if (s == "euclidean") return UKind::euclidean;
    if (s == "diagonal") return UKind::diagonal;
    throw std::invalid_argument("unknown U function '" + std::string(s) + "'");
}

inline double euclidean_norm(const Point& x) {
    double sum = 0.0;
    for (double v : x) sum += v * v;
    return std::sqrt(sum);
}

/// Distance from the diagonal x_1 = ... = x_p.
inline double diagonal_distance(const Point& x) {
    if (x.empty()) return 0.0;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double sum = 0.0;
    for (double v : x) sum += (v - mean) * (v - mean);
    return std::sqrt(sum);
}

inline UFunction make_u(UKind u) {
    return u == UKind::euclidean ? UFunction(euclidean_norm) : UFunction(diagonal_distance);
}

/// Index of the candidate minimising U; ties go to the smallest index.
inline int select_candidate(const std::vector<Point>& candidates, const UFunction& u) {
    if (candidates.empty()) throw std::invalid_argument("no candidates");
    int best = 0;
    double best_value = u(candidates[0]);
    for (int j = 1; j < static_cast<int>(candidates.size()); ++j) {
        const double v = u(candidates[j]);
        if (v < best_value) {
            best = j;
            best_value = v;
        }
    }
    return best;
}

/// Candidate x^(j): the current point with coordinate j replaced.
inline std::vector<Point> candidates_from(const Point& current, const std::vector<double>& theta, int s) {
    std::vector<Point> c;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        Point x = current;
        x[j] = interior_point(theta[j], s);
        c.push_back(std::move(x));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Multivariate session

/// Posterior mean inside (0.25, 0.75), posterior mode otherwise.
inline Estimator default_mv_estimator(double alpha) {
    return alpha > 0.25 && alpha < 0.75 ? Estimator::bayes : Estimator::map;
}

struct MvSessionConfig {
    double alpha = 0.5;
    Estimator estimator = Estimator::bayes;
    SSchedule schedule;
    Point x1{0.6, 0.6};
    UKind u = UKind::diagonal;
    int draws = 64;
    std::uint64_t seed = 0;
    Quadrature quad;

    static MvSessionConfig for_alpha(double alpha, int p = 2) {
        MvSessionConfig c;
        c.alpha = alpha;
        c.estimator = default_mv_estimator(alpha);
        c.schedule = SSchedule::table(alpha);
        c.x1.assign(p, 0.6);
        return c;
    }

    int dimension() const { return static_cast<int>(x1.size()); }

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
        if (x1.empty()) throw std::invalid_argument("starting point has no coordinates");
        for (double v : x1)
            if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("starting point must lie inside (0,1)^p");
        if (draws < 1) throw std::invalid_argument("draw count must be >= 1");
        schedule.validate();
        quad.validate();
    }
};

struct MvSessionState {
    MvSessionConfig config;
    std::vector<MvObservation> history;
    Point x;
    int n = 1;
};

struct MvStepResult {
    int step = 1;                 // index of the recommended point
    Point next;
    std::vector<double> theta;    // averaged estimate per coordinate
    std::vector<Point> candidates;
    int chosen = 0;
    Hypercube hypercube;
    int members = 0;
};

inline MvSessionState start_mv_session(const MvSessionConfig& config) {
    config.validate();
    MvSessionState st;
    st.config = config;
    st.x = config.x1;
    return st;
}

/// Feeds the outcome at the current point and moves to the next one. Uses flat
/// (rho_L, rho_U) = (0, 1) priors on every hypercube.
inline std::pair<MvSessionState, MvStepResult> mv_step(const MvSessionState& state, int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("binary outcome must be 0 or 1");
    MvSessionState next = state;
    const int n = state.n;
    const int s = state.config.schedule.slices(n);
    const int p = state.config.dimension();
    next.history.push_back({state.x, y});
    const Hypercube cube = locate_hypercube(state.x, s);
    const MvPriorBounds bounds{0.0, 1.0, state.config.alpha};

    MvStepResult r;
    r.step = n + 1;
    r.hypercube = cube;
    for (const MvObservation& o : next.history)
        if (cube.contains_strictly(o.x)) ++r.members;
    for (int j = 0; j < p; ++j) {
        AveragingOptions opt{state.config.estimator, state.config.draws,
                             derive_seed(state.config.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(j)),
                             state.config.quad};
        r.theta.push_back(averaged_theta(j, cube, bounds, state.x, next.history, opt));
    }
    r.candidates = candidates_from(state.x, r.theta, s);
    r.chosen = select_candidate(r.candidates, make_u(state.config.u));
    r.next = r.candidates[r.chosen];
    next.x = r.next;
    next.n = n + 1;
    return {std::move(next), std::move(r)};
}

}  // namespace bsa

#endif  // BSA_MULTIVARIATE_HPP
