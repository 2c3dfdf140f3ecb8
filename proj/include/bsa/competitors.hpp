#ifndef BSA_COMPETITORS_HPP
#define BSA_COMPETITORS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bsa/numerics.hpp"

namespace bsa {

// ---------------------------------------------------------------------------
// Robbins-Monro

/// Gain a_n = constant * n^(-exponent).
struct GainSequence {
    double constant = 1.0;
    double exponent = 1.0;

    /// a_n = 1 / (n M'(theta)).
    static GainSequence optimal(double slope) {
        if (!(slope > 0.0) || !std::isfinite(slope)) throw std::invalid_argument("optimal gain needs a positive slope");
        return {1.0 / slope, 1.0};
    }
    static GainSequence polyak() { return {1.0, 2.0 / 3.0}; }

    double operator()(int n) const { return constant * std::pow(static_cast<double>(n), -exponent); }

    void validate() const {
        if (!(constant > 0.0) || !std::isfinite(constant)) throw std::invalid_argument("gain constant must be positive");
        if (!std::isfinite(exponent)) throw std::invalid_argument("gain exponent must be finite");
    }
};

struct RmState {
    double x = 0.0;
    int n = 1;
    GainSequence gain;
};

inline RmState rm_step(const RmState& st, int y, double alpha) {
    if (y != 0 && y != 1) throw std::invalid_argument("outcome must be 0 or 1");
    st.gain.validate();
    RmState next = st;
    next.x = st.x - st.gain(st.n) * (y - alpha);
    next.n = st.n + 1;
    return next;
}

// ---------------------------------------------------------------------------
// Efficient Robbins-Monro with shrinking targets

inline constexpr double rmj_tau2_floor = 1e-12;

struct RmjState {
    double x = 0.0;
    double tau2 = 1.0;
    double beta = 1.0;
    double alpha = 0.5;
    int n = 1;

    /// beta = M'(theta) / phi(Phi^-1(alpha)).
    static RmjState with_slope(double x1, double alpha, double slope, double tau2 = 1.0) {
        return {x1, tau2, slope / std_normal_pdf(std_normal_quantile(alpha)), alpha, 1};
    }

    double alpha_n() const { return std_normal_cdf(std_normal_quantile(alpha) / std::sqrt(1.0 + beta * beta * tau2)); }

    double a_n() const {
        const double root = std::sqrt(1.0 + beta * beta * tau2);
        const double an = alpha_n();
        return beta * tau2 / (an * (1.0 - an) * root) * std_normal_pdf(std_normal_quantile(alpha) / root);
    }
};

inline RmjState rmj_step(const RmjState& st, int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("outcome must be 0 or 1");
    if (!(st.tau2 > 0.0)) throw std::invalid_argument("tau^2 must be positive");
    if (!(st.alpha > 0.0 && st.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    const double an = st.alpha_n();
    const double a = st.a_n();
    RmjState next = st;
    next.x = st.x - a * (y - an);
    next.tau2 = std::max(st.tau2 - an * (1.0 - an) * a * a, rmj_tau2_floor);
    next.n = st.n + 1;
    return next;
}

// ---------------------------------------------------------------------------
// Averaged trajectory

/// Designs at the RM iterate and estimates by the mean of the design points
/// already used.
struct RpjState {
    RmState rm{0.0, 1, GainSequence::polyak()};
    double sum = 0.0;
    int count = 0;
};

inline RpjState rpj_start(double x1, GainSequence gain = GainSequence::polyak()) { return {{x1, 1, gain}, 0.0, 0}; }

inline RpjState rpj_step(const RpjState& st, int y, double alpha) {
    RpjState next = st;
    next.sum = st.sum + st.rm.x;
    next.count = st.count + 1;
    next.rm = rm_step(st.rm, y, alpha);
    return next;
}

inline double rpj_estimate(const RpjState& st) {
    return st.count == 0 ? st.rm.x : st.sum / st.count;
}

// ---------------------------------------------------------------------------
// Bayesian logit MAP

struct WuMapPrior {
    double mu0 = 0.0;
    double tau = 3.0;
    /// Rate of the exponential prior on sigma.
    double xi = 3.0;
    double sigma_min = 1e-3;
    double domain_lo = -3.0;
    double domain_hi = 3.0;

    void validate() const {
        if (!(tau > 0.0) || !(xi > 0.0) || !(sigma_min > 0.0)) throw std::invalid_argument("Wu-MAP prior scales must be positive");
        if (!(domain_lo < domain_hi)) throw std::invalid_argument("Wu-MAP domain must satisfy lo < hi");
    }
};

struct WuMapFit {
    double mu = 0.0;
    double sigma = 0.0;
    double objective = 0.0;
    bool converged = true;
    int iterations = 0;
};

namespace detail {

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace detail

/// Log posterior up to a constant: logistic log-likelihood, normal prior on
/// mu and exponential prior on sigma.
inline double wu_map_objective(const std::vector<std::pair<double, int>>& history, const WuMapPrior& prior, double mu,
                               double sigma) {
    if (!(sigma > 0.0)) return -std::numeric_limits<double>::infinity();
    double ll = 0.0;
    for (const auto& [x, y] : history) {
        const double z = (x - mu) / sigma;
        ll -= y == 1 ? detail::softplus(-z) : detail::softplus(z);
    }
    const double dm = (mu - prior.mu0) / prior.tau;
    return ll - 0.5 * dm * dm - prior.xi * sigma;
}

namespace detail {

struct NelderMeadResult {
    std::array<double, 2> x;
    double f;
    bool converged;
    int iterations;
};

/// Maximizes f on R^2 by Nelder-Mead.
template <class F>
NelderMeadResult nelder_mead_max(F&& f, std::array<double, 2> start, std::array<double, 2> step, int max_iter = 2000,
                                 double ftol = 1e-12, double xtol = 1e-8) {
    std::array<std::array<double, 2>, 3> p{start, start, start};
    p[1][0] += step[0];
    p[2][1] += step[1];
    std::array<double, 3> v{};
    for (int i = 0; i < 3; ++i) v[i] = -f(p[i]);
    int it = 0;
    for (; it < max_iter; ++it) {
        std::array<int, 3> idx{0, 1, 2};
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
        const auto best = p[idx[0]], mid = p[idx[1]], worst = p[idx[2]];
        const double fb = v[idx[0]], fm = v[idx[1]], fw = v[idx[2]];
        p = {best, mid, worst};
        v = {fb, fm, fw};
        const double spread = std::max(std::abs(p[1][0] - p[0][0]) + std::abs(p[2][0] - p[0][0]),
                                       std::abs(p[1][1] - p[0][1]) + std::abs(p[2][1] - p[0][1]));
        if (std::abs(fw - fb) <= ftol * (1.0 + std::abs(fb)) && spread <= xtol * (1.0 + std::abs(p[0][0]))) break;
        const std::array<double, 2> c{(best[0] + mid[0]) / 2, (best[1] + mid[1]) / 2};
        auto along = [&](double t) { return std::array<double, 2>{c[0] + t * (worst[0] - c[0]), c[1] + t * (worst[1] - c[1])}; };
        const auto r = along(-1.0);
        const double fr = -f(r);
        if (fr < fb) {
            const auto e = along(-2.0);
            const double fe = -f(e);
            if (fe < fr) { p[2] = e; v[2] = fe; } else { p[2] = r; v[2] = fr; }
        } else if (fr < fm) {
            p[2] = r;
            v[2] = fr;
        } else {
            const auto k = fr < fw ? along(-0.5) : along(0.5);
            const double fk = -f(k);
            if (fk < std::min(fr, fw)) {
                p[2] = k;
                v[2] = fk;
            } else {
                for (int i = 1; i < 3; ++i) {
                    p[i] = {(p[i][0] + best[0]) / 2, (p[i][1] + best[1]) / 2};
                    v[i] = -f(p[i]);
                }
            }
        }
    }
    const int b = static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
    return {p[b], -v[b], it < max_iter, it};
}

}  // namespace detail

/// MAP of (mu, sigma). Multi-start Nelder-Mead in (mu, log sigma) seeded from
/// a coarse grid over the domain; sigma is held at or above sigma_min.
inline WuMapFit wu_map_fit(const std::vector<std::pair<double, int>>& history, const WuMapPrior& prior = {}) {
    prior.validate();
    for (const auto& [x, y] : history) {
        if (y != 0 && y != 1) throw std::invalid_argument("outcome must be 0 or 1");
        if (!std::isfinite(x)) throw std::invalid_argument("design point is not finite");
    }
    const double log_min = std::log(prior.sigma_min);
    const double log_max = std::log(prior.domain_hi - prior.domain_lo);
    auto obj = [&](const std::array<double, 2>& q) {
        return wu_map_objective(history, prior, q[0], std::exp(std::max(q[1], log_min)));
    };
    constexpr int grid_mu = 13, grid_sigma = 10, starts = 2;
    std::vector<std::pair<double, std::array<double, 2>>> grid;
    grid.reserve(grid_mu * grid_sigma);
    for (int i = 0; i < grid_mu; ++i)
        for (int j = 0; j < grid_sigma; ++j) {
            const std::array<double, 2> q{prior.domain_lo + (prior.domain_hi - prior.domain_lo) * i / (grid_mu - 1),
                                          log_min + (log_max - log_min) * j / (grid_sigma - 1)};
            grid.emplace_back(obj(q), q);
        }
    std::partial_sort(grid.begin(), grid.begin() + starts, grid.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::array<double, 2> step{(prior.domain_hi - prior.domain_lo) / (grid_mu - 1),
                                     (log_max - log_min) / (grid_sigma - 1)};
    detail::NelderMeadResult top{{0, 0}, -std::numeric_limits<double>::infinity(), false, 0};
    int iterations = 0;
    for (int k = 0; k < starts; ++k) {
        const auto r = detail::nelder_mead_max(obj, grid[k].second, step);
        iterations += r.iterations;
        if (r.f > top.f) top = r;
    }
    // Restart from the winner to shake off a collapsed simplex.
    const auto polish = detail::nelder_mead_max(obj, top.x, {step[0] * 0.05, step[1] * 0.05});
    iterations += polish.iterations;
    if (polish.f >= top.f) top = {polish.x, polish.f, polish.converged && top.converged, 0};
    WuMapFit best{top.x[0], std::exp(std::max(top.x[1], log_min)), top.f, top.converged, iterations};
    return best;
}

/// Next design point mu + sigma log(alpha / (1 - alpha)).
inline double wu_map_next(const WuMapFit& fit, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    return fit.mu + fit.sigma * std::log(alpha / (1.0 - alpha));
}

struct WuMapState {
    std::vector<std::pair<double, int>> history;
    WuMapPrior prior;
    WuMapFit fit;
    double x = 0.0;
};

inline WuMapState wu_map_start(double x1, const WuMapPrior& prior = {}) {
    prior.validate();
    return {{}, prior, {prior.mu0, prior.sigma_min, 0.0, true, 0}, x1};
}

inline WuMapState wu_map_step(const WuMapState& st, int y, double alpha) {
    WuMapState next = st;
    next.history.emplace_back(st.x, y);
    next.fit = wu_map_fit(next.history, st.prior);
    next.x = wu_map_next(next.fit, alpha);
    return next;
}

}  // namespace bsa

#endif
