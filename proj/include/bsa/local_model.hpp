#ifndef BSA_LOCAL_MODEL_HPP
#define BSA_LOCAL_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bsa/numerics.hpp"
#include "bsa/posterior_curve.hpp"

namespace bsa {

/// The t-th of s equal slices of the unit interval, (v0, v1] = ((t-1)/s, t/s].
struct Subinterval {
    int index = 1;
    int slices = 1;

    Subinterval() = default;
    Subinterval(int t, int s) : index(t), slices(s) {
        if (s < 1) throw std::invalid_argument("slice count must be >= 1");
        if (t < 1 || t > s) throw std::invalid_argument("slice index out of range");
    }

    double v0() const { return static_cast<double>(index - 1) / slices; }
    double v1() const { return static_cast<double>(index) / slices; }
    bool contains_strictly(double x) const { return x > v0() && x < v1(); }

    friend bool operator==(const Subinterval&, const Subinterval&) = default;
};

/// Support of the uniform prior on the slice-end values (rho0, rho1), plus
/// the target level alpha that the line passes through.
struct PriorBounds {
    double rho_lower = 0.0;
    double rho_upper = 1.0;
    double alpha = 0.5;

    bool valid() const {
        return rho_lower >= 0.0 && rho_lower < alpha && alpha < rho_upper && rho_upper <= 1.0;
    }
    void validate() const {
        if (!valid())
            throw std::invalid_argument("prior bounds must satisfy 0 <= rho_L < alpha < rho_U <= 1");
    }
    double width() const { return rho_upper - rho_lower; }

    friend bool operator==(const PriorBounds&, const PriorBounds&) = default;
};

struct Observation {
    double x = 0.0;
    int y = 0;

    friend bool operator==(const Observation&, const Observation&) = default;
};

/// One likelihood factor a + b * beta.
struct LinearFactor {
    double a = 0.0;
    double b = 0.0;
};

/// Breakpoint of eta: the root implied by the steepest admissible line.
inline double theta_breakpoint(const PriorBounds& bounds, const Subinterval& sub) {
    return ((bounds.rho_upper - bounds.alpha) * sub.v0() + (bounds.alpha - bounds.rho_lower) * sub.v1()) /
           bounds.width();
}

/// Upper limit of the scaled slope compatible with the prior at root theta.
inline double eta(double theta, const PriorBounds& bounds, const Subinterval& sub) {
    if (!std::isfinite(theta)) throw std::invalid_argument("eta: non-finite theta");
    const double s = sub.slices;
    if (theta <= theta_breakpoint(bounds, sub)) {
        const double gap = sub.v1() - theta;
        if (gap <= 0.0) throw std::domain_error("eta: theta at or beyond v1 on the left branch");
        return (bounds.rho_upper - bounds.alpha) / (s * gap);
    }
    const double gap = theta - sub.v0();
    if (gap <= 0.0) throw std::domain_error("eta: theta at or below v0 on the right branch");
    return (bounds.alpha - bounds.rho_lower) / (s * gap);
}

/// Likelihood of one binary observation as a linear function of beta-tilde.
inline LinearFactor likelihood_coeffs(const Observation& obs, double theta, const Subinterval& sub,
                                      double alpha) {
    const double sign = 2.0 * obs.y - 1.0;
    return {1.0 - obs.y + sign * alpha, sub.slices * sign * (obs.x - theta)};
}

/// Coefficients d_{m,r}, r = 0..m, of beta^r in prod (a_i + b_i beta),
/// accumulated one factor at a time starting from d_{0,0} = 1.
inline void d_coefficients_into(std::span<const LinearFactor> factors, std::vector<double>& d) {
    d.assign(factors.size() + 1, 0.0);
    d[0] = 1.0;
    for (std::size_t k = 0; k < factors.size(); ++k) {
        const auto [a, b] = factors[k];
        d[k + 1] = d[k] * b;
        for (std::size_t r = k; r >= 1; --r) d[r] = d[r] * a + d[r - 1] * b;
        d[0] *= a;
    }
}

inline std::vector<double> d_coefficients(std::span<const LinearFactor> factors) {
    std::vector<double> d;
    d_coefficients_into(factors, d);
    return d;
}

inline std::vector<double> d_coefficients(std::span<const Observation> obs, double theta,
                                          const Subinterval& sub, double alpha) {
    std::vector<LinearFactor> f;
    f.reserve(obs.size());
    for (const Observation& o : obs) f.push_back(likelihood_coeffs(o, theta, sub, alpha));
    return d_coefficients(f);
}

/// Integral over [lo, hi] of u^k * prod (a_i + b_i u), k in {0, 1}.
///
/// Summed through the d-coefficients. For long factor lists the expanded
/// coefficients can cancel badly; when the summed terms exceed the result by
/// more than 1e2 the same polynomial is integrated exactly by Gauss-Legendre.
inline double product_integral(std::span<const LinearFactor> factors, double lo, double hi, int k,
                               std::vector<double>& d) {
    d_coefficients_into(factors, d);
    double sum = 0.0;
    double magnitude = 0.0;
    double plo = k ? lo * lo : lo;
    double phi = k ? hi * hi : hi;
    for (std::size_t r = 0; r < d.size(); ++r) {
        const double term = d[r] * (phi - plo) / (r + k + 1.0);
        sum += term;
        magnitude += std::abs(term);
        plo *= lo;
        phi *= hi;
    }
    if (magnitude <= 1e2 * std::abs(sum)) return sum;

    const GaussLegendreRule& rule = gauss_legendre((factors.size() + k) / 2 + 1);
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    double total = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double u = mid + half * rule.nodes[i];
        double prod = k ? u : 1.0;
        for (const LinearFactor& f : factors) prod *= f.a + f.b * u;
        total += rule.weights[i] * prod;
    }
    return total * half;
}

/// c_m h_m(theta): the unnormalised posterior of the root, computed directly
/// from sum_r d_{m,r} eta^{r+2} / (r+2). No rescaling.
inline double theta_kernel_direct(double theta, const PriorBounds& bounds, const Subinterval& sub,
                                  std::span<const Observation> obs) {
    std::vector<LinearFactor> f;
    for (const Observation& o : obs) f.push_back(likelihood_coeffs(o, theta, sub, bounds.alpha));
    const std::vector<double> d = d_coefficients(f);
    const double e = eta(theta, bounds, sub);
    double sum = 0.0;
    double power = e * e;
    for (std::size_t r = 0; r < d.size(); ++r) {
        sum += d[r] * power / (r + 2.0);
        power *= e;
    }
    return 2.0 * sub.slices * sum / (bounds.width() * bounds.width());
}

/// Same quantity built observation by observation through
/// c_m h_m = c_{m-1} h_{m-1} (a_m + b_m eta R_{m-1}).
inline double theta_kernel_recursive(double theta, const PriorBounds& bounds, const Subinterval& sub,
                                     std::span<const Observation> obs) {
    const double e = eta(theta, bounds, sub);
    double value = sub.slices * e * e / (bounds.width() * bounds.width());  // c_0 h_0
    std::vector<LinearFactor> f;
    std::vector<double> d{1.0};
    for (const Observation& o : obs) {
        double num = 0.0;
        double den = 0.0;
        double power = 1.0;
        for (std::size_t r = 0; r < d.size(); ++r) {
            num += d[r] * power / (r + 3.0);
            den += d[r] * power / (r + 2.0);
            power *= e;
        }
        const LinearFactor lf = likelihood_coeffs(o, theta, sub, bounds.alpha);
        value *= lf.a + lf.b * e * (num / den);
        f.push_back(lf);
        d_coefficients_into(f, d);
    }
    return value;
}

/// Local linear Bayesian model on one slice.
///
/// Holds the slice, its prior bounds and the member observations (those
/// strictly inside the slice), kept sorted by design point. Immutable; the
/// posterior curves it produces share its data.
class LocalPosterior {
public:
    LocalPosterior(Subinterval sub, PriorBounds bounds, std::vector<Observation> members)
        : data_(std::make_shared<Data>(Data{sub, bounds, std::move(members)})) {
        bounds.validate();
        // Canonical order makes every kernel bit-identical under permutation.
        std::sort(data_->members.begin(), data_->members.end(),
                  [](const Observation& l, const Observation& r) { return l.x < r.x || (l.x == r.x && l.y < r.y); });
        for (const Observation& o : data_->members) {
            if (!data_->sub.contains_strictly(o.x))
                throw std::invalid_argument("member observation outside the open slice");
            if (o.y != 0 && o.y != 1) throw std::invalid_argument("responses must be binary");
        }
    }

    /// Picks the members out of a full history: every point strictly inside
    /// the slice. Points on a slice edge are left out.
    static LocalPosterior from_history(Subinterval sub, PriorBounds bounds,
                                       std::span<const Observation> history) {
        std::vector<Observation> members;
        for (const Observation& o : history)
            if (sub.contains_strictly(o.x)) members.push_back(o);
        return LocalPosterior(sub, bounds, std::move(members));
    }

    const Subinterval& subinterval() const { return data_->sub; }
    const PriorBounds& bounds() const { return data_->bounds; }
    std::span<const Observation> members() const { return data_->members; }
    double theta0() const { return theta_breakpoint(data_->bounds, data_->sub); }

    /// Unnormalised root posterior, divided by prod a_i to keep long member
    /// lists away from underflow.
    double theta_kernel(double theta) const { return theta_kernel_of(*data_, theta); }

    PosteriorCurve posterior_theta(const Quadrature& quad = {}) const {
        const double t0 = theta0();
        auto data = data_;
        return PosteriorCurve([data](double theta) { return theta_kernel_of(*data, theta); },
                              {{0.0, t0, data->sub.v1()}, {t0, 1.0, data->sub.v0()}}, t0, quad);
    }

    PosteriorCurve posterior_rho0(const Quadrature& quad = {}) const {
        auto data = data_;
        return PosteriorCurve([data](double rho) { return rho_kernel(*data, rho, false); },
                              {{data->bounds.rho_lower, data->bounds.rho_upper, {}}}, {}, quad);
    }

    PosteriorCurve posterior_rho1(const Quadrature& quad = {}) const {
        auto data = data_;
        return PosteriorCurve([data](double rho) { return rho_kernel(*data, rho, true); },
                              {{data->bounds.rho_lower, data->bounds.rho_upper, {}}}, {}, quad);
    }

    /// Smallest scaled slope for which every admissible root stays in (0,1).
    double beta_tilde_lower() const {
        const PriorBounds& b = data_->bounds;
        const double s = data_->sub.slices;
        return std::max((b.rho_upper - b.alpha) / (s * data_->sub.v1()),
                        (b.alpha - b.rho_lower) / (s * (1.0 - data_->sub.v0())));
    }

    PosteriorCurve posterior_betatilde(const Quadrature& quad = {}) const {
        const double lower = beta_tilde_lower();
        const double upper = data_->bounds.width();
        if (!(lower < upper)) throw DegeneratePosterior("slope posterior has empty support");
        auto data = data_;
        return PosteriorCurve([data](double bt) { return betatilde_kernel(*data, bt); },
                              {{lower, upper, {}}}, {}, quad);
    }

private:
    struct Data {
        Subinterval sub;
        PriorBounds bounds;
        std::vector<Observation> members;
    };

    static std::vector<double>& scratch() {
        thread_local std::vector<double> buf;
        return buf;
    }
    static std::vector<LinearFactor>& factor_scratch() {
        thread_local std::vector<LinearFactor> buf;
        return buf;
    }

    static double theta_kernel_of(const Data& data, double theta) {
        const double e = eta(theta, data.bounds, data.sub);
        auto& f = factor_scratch();
        f.clear();
        for (const Observation& o : data.members) {
            const LinearFactor lf = likelihood_coeffs(o, theta, data.sub, data.bounds.alpha);
            f.push_back({1.0, lf.b / lf.a});
        }
        const double w = data.bounds.width();
        return 2.0 * data.sub.slices * product_integral(f, 0.0, e, 1, scratch()) / (w * w);
    }

    // Marginal of rho0 (upper == false) or rho1 (upper == true) after
    // integrating the other slice-end value over the ordered triangle.
    static double rho_kernel(const Data& data, double rho, bool upper) {
        const double v0 = data.sub.v0();
        const double v1 = data.sub.v1();
        auto& f = factor_scratch();
        f.clear();
        for (const Observation& o : data.members) {
            const double q = (v1 - o.x) / (v1 - v0);
            const double sign = 2.0 * o.y - 1.0;
            if (upper)
                f.push_back({1.0 - o.y + sign * (1.0 - q) * rho, sign * q});
            else
                f.push_back({1.0 - o.y + sign * q * rho, sign * (1.0 - q)});
        }
        const double lo = upper ? data.bounds.rho_lower : rho;
        const double hi = upper ? rho : data.bounds.rho_upper;
        const double w = data.bounds.width();
        return 2.0 * product_integral(f, lo, hi, 0, scratch()) / (w * w);
    }

    static double betatilde_kernel(const Data& data, double bt) {
        const PriorBounds& b = data.bounds;
        const double s = data.sub.slices;
        const double lower = data.sub.v1() - (b.rho_upper - b.alpha) / (s * bt);
        const double upper = data.sub.v0() + (b.alpha - b.rho_lower) / (s * bt);
        auto& f = factor_scratch();
        f.clear();
        for (const Observation& o : data.members) {
            const double sign = 2.0 * o.y - 1.0;
            f.push_back({1.0 - o.y + sign * (b.alpha + s * bt * o.x), -sign * s * bt});
        }
        return 2.0 * s * bt * product_integral(f, lower, upper, 0, scratch());
    }

    std::shared_ptr<Data> data_;
};

/// Both printed forms of the one-observation MAP, for rho_L = 0, rho_U = 1.
struct OneStepMap {
    double value = 0.0;      // first algebraic form
    double alternate = 0.0;  // second algebraic form (equal up to rounding)
};

inline OneStepMap one_step_map_forms(double x1, int y1, double alpha, const Subinterval& sub) {
    const double v0 = sub.v0();
    const double v1 = sub.v1();
    const double theta0 = (1.0 - alpha) * v0 + alpha * v1;
    const double t0 = ((2.0 + alpha) * v0 + (1.0 - alpha) * v1) / 3.0;
    const double t1 = (alpha * v0 + (3.0 - alpha) * v1) / 3.0;
    if (x1 < t0 && y1 == 1) {
        return {x1 - (1.0 - 4.0 * alpha) / (2.0 + alpha) * (v1 - x1),
                theta0 - 3.0 * (1.0 - alpha) / (2.0 + alpha) * (t0 - x1)};
    }
    if (x1 > t1 && y1 == 0) {
        return {x1 + (4.0 * alpha - 3.0) / (3.0 - alpha) * (x1 - v0),
                theta0 + 3.0 * alpha / (3.0 - alpha) * (x1 - t1)};
    }
    return {theta0, theta0};
}

/// Closed-form posterior mode after a single observation (rho_L = 0, rho_U = 1).
/// The value is not truncated to (0,1).
inline double x2_oracle(double x1, int y1, double alpha, const Subinterval& sub) {
    return one_step_map_forms(x1, y1, alpha, sub).value;
}

}  // namespace bsa

#endif  // BSA_LOCAL_MODEL_HPP
