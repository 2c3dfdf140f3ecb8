#ifndef BSA_APPLICATIONS_HPP
#define BSA_APPLICATIONS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bsa/competitors.hpp"
#include "bsa/sequential.hpp"

namespace bsa {

// ---------------------------------------------------------------------------
// Continuous responses as q binaries

/// Sigmoid y* = 1 / (1 + exp(-b y)) followed by the nearest fraction a/q.
struct SigmoidEncoder {
    double scale = 1.0;
    int q = 1;

    /// b = 3 / C for responses known to lie in (-C, C).
    static SigmoidEncoder for_range(double c, int q) {
        if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("response range must be positive");
        return {3.0 / c, q};
    }

    void validate() const {
        if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("sigmoid scale must be positive");
        if (q < 1) throw std::invalid_argument("binary count q must be >= 1");
    }
};

inline double sigmoid(double y, double b) { return 1.0 / (1.0 + std::exp(-b * y)); }

/// a ones followed by q - a zeros, a/q the fraction nearest y* (ties up).
inline std::vector<int> encode(double y, const SigmoidEncoder& enc) {
    enc.validate();
    if (std::isnan(y)) throw std::invalid_argument("response is NaN");
    const double ys = sigmoid(y, enc.scale);
    const int a = std::clamp(static_cast<int>(std::floor(enc.q * ys + 0.5)), 0, enc.q);
    std::vector<int> out(enc.q, 0);
    std::fill(out.begin(), out.begin() + a, 1);
    return out;
}

// ---------------------------------------------------------------------------
// Searches

/// Noisy response at a point in original coordinates.
using NoisyOracle = std::function<double(double, SeededRng&)>;

struct SearchOptions {
    SigmoidEncoder encoder{1.0, 2};
    int horizon = 30;              // responses consumed
    std::uint64_t seed = 0;
    double x1 = 0.5;               // scaled
    double domain_lo = 0.0;
    double domain_hi = 1.0;

    void validate() const {
        encoder.validate();
        if (horizon < 0) throw std::invalid_argument("horizon must be >= 0");
        if (!(x1 > 0.0 && x1 < 1.0)) throw std::invalid_argument("starting point must lie inside the domain");
        if (!(std::isfinite(domain_lo) && std::isfinite(domain_hi) && domain_lo < domain_hi))
            throw std::invalid_argument("search domain must satisfy lo < hi");
    }
};

struct SearchTrajectory {
    std::vector<double> x;                  // design points x_1..x_{horizon+1}, original
    std::vector<double> y;                  // response (or difference quotient) per step
    std::vector<std::vector<int>> binaries;
    std::vector<bool> clipped;              // kw: a probe left the domain
};

/// Half-width c_n = width n^(-1/3) and gain gamma_n = gain / n.
struct KwProbe {
    double gain = 1.0;
    double width = 1.0;

    double c(int n) const { return width * std::pow(static_cast<double>(n), -1.0 / 3.0); }
    double gamma(int n) const { return gain / static_cast<double>(n); }

    void validate() const {
        if (!(gain > 0.0) || !(width > 0.0)) throw std::invalid_argument("probe constants must be positive");
    }
};

inline SessionConfig median_session(const SearchOptions& opt) {
    SessionConfig sc = SessionConfig::for_alpha(0.5);
    sc.estimator = Estimator::bayes;
    sc.x1 = opt.x1;
    sc.domain_lo = opt.domain_lo;
    sc.domain_hi = opt.domain_hi;
    return sc;
}

/// Median search on q encoded binaries per response, Bayes estimator.
inline SearchTrajectory root_search(const NoisyOracle& oracle, const SearchOptions& opt) {
    opt.validate();
    SeededRng rng(opt.seed);
    SessionState st = start_session(median_session(opt));
    SearchTrajectory tr;
    tr.x.push_back(st.x_original());
    for (int n = 1; n <= opt.horizon; ++n) {
        const double y = oracle(st.x_original(), rng);
        std::vector<int> bits = encode(y, opt.encoder);
        st = step_batch(st, bits).first;
        tr.y.push_back(y);
        tr.binaries.push_back(std::move(bits));
        tr.clipped.push_back(false);
        tr.x.push_back(st.x_original());
    }
    return tr;
}

struct KwQuotient {
    double value = 0.0;
    bool clipped = false;
};

/// (y(x + c) - y(x - c)) / c. Near the domain ends the half-width shrinks
/// symmetrically so both probes stay in [0,1]; the upper probe is queried first.
inline KwQuotient kw_quotient(const NoisyOracle& objective, double u, double c, const SearchOptions& opt,
                              SeededRng& rng) {
    if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("probe centre must lie inside (0,1)");
    const double h = std::min({c, u, 1.0 - u});
    const double y1 = objective(unscale(u + h, opt.domain_lo, opt.domain_hi), rng);
    const double y2 = objective(unscale(u - h, opt.domain_lo, opt.domain_hi), rng);
    return {(y1 - y2) / h, h < c};
}

/// Minimum search: the difference quotient at x_n is encoded and fed to the
/// median search. Probe half-widths are in scaled units.
inline SearchTrajectory kw_search(const NoisyOracle& objective, const SearchOptions& opt, const KwProbe& probe = {}) {
    opt.validate();
    probe.validate();
    SeededRng rng(opt.seed);
    SessionState st = start_session(median_session(opt));
    SearchTrajectory tr;
    tr.x.push_back(st.x_original());
    for (int n = 1; n <= opt.horizon; ++n) {
        const KwQuotient kq = kw_quotient(objective, st.x, probe.c(n), opt, rng);
        std::vector<int> bits = encode(kq.value, opt.encoder);
        st = step_batch(st, bits).first;
        tr.y.push_back(kq.value);
        tr.binaries.push_back(std::move(bits));
        tr.clipped.push_back(kq.clipped);
        tr.x.push_back(st.x_original());
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Baselines

struct KwState {
    double x = 0.0;
    int n = 1;
};

/// x_{n+1} = x_n - gamma_n (y_{n1} - y_{n2}) / c_n.
inline KwState kw_classic_step(const KwState& st, double y1, double y2, const KwProbe& probe = {}) {
    probe.validate();
    if (!std::isfinite(y1) || !std::isfinite(y2)) throw std::invalid_argument("responses must be finite");
    return {st.x - probe.gamma(st.n) * (y1 - y2) / probe.c(st.n), st.n + 1};
}

/// Constants of the RMJ baseline in scaled units: the sign curve is taken to
/// rise by one over the unit interval, and tau^2 = 1 on a domain of width 6.
struct RmjBaseline {
    double slope = 1.0;
    double tau2 = 1.0 / 36.0;
    double margin = 0.005;  // kw probe centres are kept this far inside (0,1)
};

/// RMJ at the median on the signs of the responses; points in original units.
inline SearchTrajectory rmj_root_search(const NoisyOracle& oracle, const SearchOptions& opt,
                                        const RmjBaseline& base = {}) {
    opt.validate();
    SeededRng rng(opt.seed);
    RmjState st = RmjState::with_slope(opt.x1, 0.5, base.slope, base.tau2);
    SearchTrajectory tr;
    tr.x.push_back(unscale(st.x, opt.domain_lo, opt.domain_hi));
    for (int n = 1; n <= opt.horizon; ++n) {
        const double y = oracle(unscale(st.x, opt.domain_lo, opt.domain_hi), rng);
        const int bit = y >= 0.0 ? 1 : 0;
        st = rmj_step(st, bit);
        tr.y.push_back(y);
        tr.binaries.push_back({bit});
        tr.clipped.push_back(false);
        tr.x.push_back(unscale(st.x, opt.domain_lo, opt.domain_hi));
    }
    return tr;
}

/// RMJ on the signs of the difference quotients.
inline SearchTrajectory rmj_kw_search(const NoisyOracle& objective, const SearchOptions& opt,
                                      const KwProbe& probe = {}, const RmjBaseline& base = {}) {
    opt.validate();
    probe.validate();
    SeededRng rng(opt.seed);
    RmjState st = RmjState::with_slope(opt.x1, 0.5, base.slope, base.tau2);
    SearchTrajectory tr;
    tr.x.push_back(unscale(st.x, opt.domain_lo, opt.domain_hi));
    for (int n = 1; n <= opt.horizon; ++n) {
        const double u = std::clamp(st.x, base.margin, 1.0 - base.margin);
        const KwQuotient kq = kw_quotient(objective, u, probe.c(n), opt, rng);
        const int bit = kq.value >= 0.0 ? 1 : 0;
        st = rmj_step(st, bit);
        tr.y.push_back(kq.value);
        tr.binaries.push_back({bit});
        tr.clipped.push_back(kq.clipped);
        tr.x.push_back(unscale(st.x, opt.domain_lo, opt.domain_hi));
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Worked settings

/// y = 200 (x - 0.3)^3 + e, e standard normal.
inline double cubic_response(double x, SeededRng& rng) {
    const double d = x - 0.3;
    return 200.0 * d * d * d + rng.normal();
}

/// y = 200 (x - 0.3)^2 + e, e standard normal.
inline double quadratic_objective(double x, SeededRng& rng) {
    const double d = x - 0.3;
    return 200.0 * d * d + rng.normal();
}

inline constexpr double worked_root = 0.3;

/// RMSE of x_n (1-based) over trajectories against a known target.
inline double trajectory_rmse(const std::vector<SearchTrajectory>& runs, int n, double target) {
    if (runs.empty()) return 0.0;
    double ss = 0.0;
    for (const auto& r : runs) {
        if (n < 1 || n > static_cast<int>(r.x.size())) throw std::out_of_range("step outside trajectory");
        const double e = r.x[n - 1] - target;
        ss += e * e;
    }
    return std::sqrt(ss / static_cast<double>(runs.size()));
}

}  // namespace bsa

#endif  // BSA_APPLICATIONS_HPP
