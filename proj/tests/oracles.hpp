// Independent reference computations used only by the tests.
//
// Nothing here calls into the d-recursion or the closed-form kernels: the
// posteriors are rebuilt by brute-force numerical integration of
// prior x likelihood written directly in terms of the line F.
#ifndef BSA_TESTS_ORACLES_HPP
#define BSA_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "bsa/local_model.hpp"

namespace oracle {

/// Composite Simpson rule with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2) ++n;
    if (b <= a) return 0.0;
    const double h = (b - a) / n;
    double sum = f(a) + f(b);
    for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return sum * h / 3.0;
}

inline double trapezoid(const std::function<double(double)>& f, double a, double b, long n) {
    const double h = (b - a) / n;
    double sum = 0.5 * (f(a) + f(b));
    for (long i = 1; i < n; ++i) sum += f(a + i * h);
    return sum * h;
}

/// Coefficient sums over all r-subsets, straight from the expansion.
inline std::vector<double> d_bruteforce(std::span<const bsa::LinearFactor> f) {
    const std::size_t m = f.size();
    std::vector<double> d(m + 1, 0.0);
    for (unsigned long mask = 0; mask < (1UL << m); ++mask) {
        double prod = 1.0;
        int r = 0;
        for (std::size_t i = 0; i < m; ++i) {
            if (mask & (1UL << i)) {
                prod *= f[i].b;
                ++r;
            } else {
                prod *= f[i].a;
            }
        }
        d[r] += prod;
    }
    return d;
}

inline double bernoulli_lik(double F, int y) { return y ? F : 1.0 - F; }

struct Config {
    bsa::Subinterval sub;
    bsa::PriorBounds bounds;
    std::vector<bsa::Observation> obs;
};

inline double likelihood_theta_beta(const Config& c, double theta, double bt) {
    double L = 1.0;
    for (const auto& o : c.obs)
        L *= bernoulli_lik(c.bounds.alpha + c.sub.slices * bt * (o.x - theta), o.y);
    return L;
}

/// Largest beta-tilde keeping rho_L < F(v0) < F(v1) < rho_U for a given root.
inline double beta_limit(const Config& c, double theta) {
    const double s = c.sub.slices;
    double lim = c.bounds.width();
    if (theta > c.sub.v0()) lim = std::min(lim, (c.bounds.alpha - c.bounds.rho_lower) / (s * (theta - c.sub.v0())));
    if (theta < c.sub.v1()) lim = std::min(lim, (c.bounds.rho_upper - c.bounds.alpha) / (s * (c.sub.v1() - theta)));
    return lim;
}

/// Root posterior on (0,1): integrate the joint (theta, beta) posterior over beta.
struct ThetaGrid {
    Config c;
    int n, inner;
    double norm = 1.0;
    ThetaGrid(Config cfg, int n_, int inner_ = 0) : c(std::move(cfg)), n(n_), inner(inner_ ? inner_ : n_) {
        const double t0 = bsa::theta_breakpoint(c.bounds, c.sub);
        auto f = [&](double th) { return raw(th); };
        norm = simpson(f, 0.0, t0, n) + simpson(f, t0, 1.0, n);
    }
    double raw(double theta) const {
        const double lim = beta_limit(c, theta);
        return simpson([&](double bt) { return 2.0 * c.sub.slices * bt * likelihood_theta_beta(c, theta, bt); },
                       0.0, lim, inner);
    }
    double density(double theta) const { return raw(theta) / norm; }
};

inline double likelihood_rho(const Config& c, double rho0, double rho1) {
    const double v0 = c.sub.v0(), v1 = c.sub.v1();
    double L = 1.0;
    for (const auto& o : c.obs) {
        const double q = (v1 - o.x) / (v1 - v0);
        L *= bernoulli_lik(q * rho0 + (1.0 - q) * rho1, o.y);
    }
    return L;
}

/// Marginal posterior of rho0 (upper=false) or rho1 (upper=true) over the
/// ordered triangle rho_L < rho0 < rho1 < rho_U.
struct RhoGrid {
    Config c;
    bool upper;
    int n, inner;
    double norm = 1.0;
    RhoGrid(Config cfg, bool up, int n_, int inner_ = 0)
        : c(std::move(cfg)), upper(up), n(n_), inner(inner_ ? inner_ : n_) {
        norm = simpson([&](double r) { return raw(r); }, c.bounds.rho_lower, c.bounds.rho_upper, n);
    }
    double raw(double rho) const {
        if (upper)
            return simpson([&](double r0) { return likelihood_rho(c, r0, rho); }, c.bounds.rho_lower, rho, inner);
        return simpson([&](double r1) { return likelihood_rho(c, rho, r1); }, rho, c.bounds.rho_upper, inner);
    }
    double density(double rho) const { return raw(rho) / norm; }
};

/// Slope posterior on (beta0, rho_U - rho_L): integrate over the admissible roots.
struct BetaGrid {
    Config c;
    int n, inner;
    double lower;
    double norm = 1.0;
    BetaGrid(Config cfg, int n_, int inner_ = 0) : c(std::move(cfg)), n(n_), inner(inner_ ? inner_ : n_) {
        const double s = c.sub.slices;
        lower = std::max((c.bounds.rho_upper - c.bounds.alpha) / (s * c.sub.v1()),
                         (c.bounds.alpha - c.bounds.rho_lower) / (s * (1.0 - c.sub.v0())));
        norm = simpson([&](double b) { return raw(b); }, lower, c.bounds.width(), n);
    }
    double raw(double bt) const {
        const double s = c.sub.slices;
        const double lo = c.sub.v1() - (c.bounds.rho_upper - c.bounds.alpha) / (s * bt);
        const double hi = c.sub.v0() + (c.bounds.alpha - c.bounds.rho_lower) / (s * bt);
        return simpson([&](double th) { return 2.0 * s * bt * likelihood_theta_beta(c, th, bt); }, lo, hi, inner);
    }
    double density(double bt) const { return raw(bt) / norm; }
};

}  // namespace oracle

#endif  // BSA_TESTS_ORACLES_HPP
