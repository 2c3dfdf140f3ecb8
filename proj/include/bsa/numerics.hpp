#ifndef BSA_NUMERICS_HPP
#define BSA_NUMERICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <queue>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

namespace bsa {

/// Raised when an adaptive integral cannot meet its tolerance within the
/// configured subdivision depth.
class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Settings for the adaptive Gauss-Kronrod integrator.
///
/// Convergence is declared once the summed panel error drops below
/// max(abs_tol, rel_tol * |integral|).
struct Quadrature {
    double abs_tol = 1e-10;
    double rel_tol = 1e-12;
    int max_depth = 48;
    int max_panels = 20000;

    void validate() const {
        if (!(abs_tol > 0.0) || !(rel_tol >= 0.0))
            throw std::invalid_argument("quadrature tolerance must be positive");
        if (max_depth < 1)
            throw std::invalid_argument("quadrature depth must be at least 1");
        if (max_panels < 1)
            throw std::invalid_argument("quadrature panel limit must be at least 1");
    }
};

/// One accepted subinterval of an adaptive integration.
struct Panel {
    double a = 0.0;
    double b = 0.0;
    double value = 0.0;
    double error = 0.0;
    int depth = 0;
};

struct IntegrationResult {
    double value = 0.0;
    double error = 0.0;
    std::vector<Panel> panels;  // ordered by position, left to right
};

namespace detail {

// 15-point Kronrod abscissae/weights and the embedded 7-point Gauss weights.
inline constexpr std::array<double, 8> kronrod_x = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_w = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss_w = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
Panel gauss_kronrod_15(F&& f, double a, double b, int depth) {
    const double center = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    Panel p;
    const double fc = f(center);
    double kronrod = fc * kronrod_w[7];
    double gauss = fc * gauss_w[3];
    for (int i = 0; i < 7; ++i) {
        const double dx = half * kronrod_x[i];
        const double fl = f(center - dx);
        const double fr = f(center + dx);
        const double sum = fl + fr;
        kronrod += kronrod_w[i] * sum;
        if (i % 2 == 1) gauss += gauss_w[i / 2] * sum;
    }
    p.a = a;
    p.b = b;
    p.depth = depth;
    p.value = kronrod * half;
    p.error = std::abs((kronrod - gauss) * half);
    return p;
}

}  // namespace detail

/// Single 15-point Gauss-Kronrod rule on [a,b], no error control.
template <class F>
double gauss_kronrod(F&& f, double a, double b) {
    return detail::gauss_kronrod_15(f, a, b, 0).value;
}

/// Globally adaptive Gauss-Kronrod integration of f over [a,b].
///
/// Breakpoints strictly inside (a,b) start as panel edges, so kinks of the
/// integrand never fall inside a Kronrod panel. The accepted panels are
/// returned in order so callers can build cumulative distributions.
template <class F>
IntegrationResult integrate_panels(F&& f, double a, double b,
                                   std::span<const double> breakpoints = {},
                                   const Quadrature& quad = {}) {
    quad.validate();
    if (!std::isfinite(a) || !std::isfinite(b))
        throw std::invalid_argument("integration limits must be finite");
    IntegrationResult out;
    if (a == b) return out;
    if (a > b) throw std::invalid_argument("integration limits out of order");

    std::vector<double> edges{a};
    for (double bp : breakpoints)
        if (bp > a && bp < b) edges.push_back(bp);
    edges.push_back(b);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    auto worse = [](const Panel& l, const Panel& r) { return l.error < r.error; };
    std::priority_queue<Panel, std::vector<Panel>, decltype(worse)> queue(worse);
    double total = 0.0;
    double total_err = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        Panel p = detail::gauss_kronrod_15(f, edges[i], edges[i + 1], 0);
        total += p.value;
        total_err += p.error;
        queue.push(p);
    }

    constexpr double eps = std::numeric_limits<double>::epsilon();
    while (total_err > std::max(quad.abs_tol, quad.rel_tol * std::abs(total))) {
        Panel worst = queue.top();
        // Panels whose estimate is already at rounding level cannot improve.
        if (worst.error <= 50.0 * eps * std::abs(worst.value)) break;
        if (worst.depth >= quad.max_depth || static_cast<int>(queue.size()) >= quad.max_panels) {
            throw QuadratureError("adaptive quadrature did not converge on [" +
                                  std::to_string(a) + ", " + std::to_string(b) +
                                  "]: estimated error " + std::to_string(total_err));
        }
        queue.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        Panel left = detail::gauss_kronrod_15(f, worst.a, mid, worst.depth + 1);
        Panel right = detail::gauss_kronrod_15(f, mid, worst.b, worst.depth + 1);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        queue.push(left);
        queue.push(right);
    }
    if (!std::isfinite(total)) throw QuadratureError("integrand produced a non-finite value");

    out.panels.reserve(queue.size());
    while (!queue.empty()) {
        out.panels.push_back(queue.top());
        queue.pop();
    }
    std::sort(out.panels.begin(), out.panels.end(),
              [](const Panel& l, const Panel& r) { return l.a < r.a; });
    // Re-sum in positional order so the result does not depend on heap order.
    out.value = 0.0;
    out.error = 0.0;
    for (const Panel& p : out.panels) {
        out.value += p.value;
        out.error += p.error;
    }
    return out;
}

template <class F>
double integrate(F&& f, double a, double b, std::span<const double> breakpoints = {},
                 const Quadrature& quad = {}) {
    return integrate_panels(std::forward<F>(f), a, b, breakpoints, quad).value;
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1,1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Cached per thread; exact for polynomials of degree <= 2n-1.
inline const GaussLegendreRule& gauss_legendre(std::size_t n) {
    thread_local std::vector<GaussLegendreRule> cache;
    if (n == 0) throw std::invalid_argument("Gauss-Legendre rule needs at least one node");
    if (cache.size() <= n) cache.resize(n + 1);
    GaussLegendreRule& rule = cache[n];
    if (!rule.nodes.empty()) return rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = 1.0;
            double p2 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
            }
            dp = n * (z * p1 - p2) / (z * z - 1.0);
            const double step = p1 / dp;
            z -= step;
            if (std::abs(step) < 1e-16) break;
        }
        rule.nodes[i] = -z;
        rule.nodes[n - 1 - i] = z;
        rule.weights[i] = rule.weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return rule;
}

// ---------------------------------------------------------------------------
// Normal distribution

inline constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934381868;

inline double std_normal_pdf(double z) { return inv_sqrt_2pi * std::exp(-0.5 * z * z); }

inline double std_normal_cdf(double z) {
    if (!std::isfinite(z)) throw std::invalid_argument("std_normal_cdf: non-finite argument");
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

inline double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("std_normal_quantile: probability must lie in (0,1)");
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// P(Z1 <= z1, Z2 <= z2) for a standard bivariate normal with correlation rho.
///
/// Integrates phi(t) * Phi((z2 - rho t) / sqrt(1 - rho^2)) over t <= z1.
/// The lower limit is cut where phi has no mass left at double precision.
inline double bivariate_normal_cdf(double z1, double z2, double rho) {
    if (!(rho > -1.0 && rho < 1.0))
        throw std::invalid_argument("bivariate_normal_cdf: |rho| must be < 1");
    if (std::isnan(z1) || std::isnan(z2))
        throw std::invalid_argument("bivariate_normal_cdf: NaN argument");
    constexpr double tail = 9.0;
    // Integrate along the smaller argument; the result is symmetric.
    if (z2 < z1) std::swap(z1, z2);
    if (z1 <= -tail) return 0.0;
    const double root = std::sqrt(1.0 - rho * rho);
    auto conditional = [&](double t) {
        return std_normal_pdf(t) * 0.5 * std::erfc(-((z2 - rho * t) / root) / std::numbers::sqrt2);
    };
    Quadrature quad;
    quad.abs_tol = 1e-13;
    quad.rel_tol = 1e-13;
    const double upper = std::min(z1, tail);
    // The conditional factor switches fastest near t = z2 / rho.
    std::vector<double> bps;
    if (rho != 0.0) bps.push_back(z2 / rho);
    bps.push_back(0.0);
    double value = integrate(conditional, -tail, upper, bps, quad);
    if (z1 > tail) value += std_normal_cdf(z1) - std_normal_cdf(tail);  // Phi(cond) ~ 1 there
    return std::clamp(value, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Random numbers

/// SplitMix64 finaliser; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t h = mix_seed(master);
    h = mix_seed(h ^ a);
    h = mix_seed(h ^ (b + 0x632be59bd9b4e019ULL));
    h = mix_seed(h ^ (c + 0x85157af5ULL));
    return h;
}

/// Deterministic random source built on std::mt19937_64, whose output
/// sequence is fixed by the C++ standard. Uniform and normal variates are
/// produced here rather than through <random> distributions, which are not
/// portable across standard libraries.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return position_; }

    std::uint64_t next_u64() {
        ++position_;
        return engine_();
    }

    /// Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Marsaglia polar method; the spare variate is discarded so the stream
    /// position alone determines the next draw.
    double normal() {
        for (;;) {
            const double u = 2.0 * uniform() - 1.0;
            const double v = 2.0 * uniform() - 1.0;
            const double r = u * u + v * v;
            if (r > 0.0 && r < 1.0) return u * std::sqrt(-2.0 * std::log(r) / r);
        }
    }

    int bernoulli(double p) { return uniform() < p ? 1 : 0; }

    /// Advance to the given stream position (for restoring persisted state).
    void seek(std::uint64_t position) {
        engine_.seed(seed_);
        if (position > 0) engine_.discard(position);
        position_ = position;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::uint64_t position_ = 0;
};

}  // namespace bsa

#endif  // BSA_NUMERICS_HPP
