#ifndef BSA_POSTERIOR_CURVE_HPP
#define BSA_POSTERIOR_CURVE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bsa/numerics.hpp"

namespace bsa {

/// Raised when a posterior cannot be normalised (vanishing or non-finite mass).
class DegeneratePosterior : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A one-dimensional density known up to a constant, normalised numerically.
///
/// The support is a sequence of contiguous smooth pieces. A piece may name a
/// pole of the kernel lying outside it; that piece is then integrated in the
/// variable t = 1/(pole - x), under which kernels of the form
/// (pole - x)^-2 * P(1/(pole - x)) become polynomials.
///
/// Mean and normaliser are computed on construction; everything else is
/// derived lazily from the stored quadrature panels.
class PosteriorCurve {
public:
    using Kernel = std::function<double(double)>;

    struct Piece {
        double lo = 0.0;
        double hi = 0.0;
        std::optional<double> pole;
    };

    PosteriorCurve(Kernel kernel, std::vector<Piece> pieces, std::optional<double> kink = {},
                   const Quadrature& quad = {})
        : kernel_(std::move(kernel)), kink_(kink) {
        if (pieces.empty()) throw std::invalid_argument("posterior curve needs a support");
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            const Piece& p = pieces[i];
            if (!(p.lo < p.hi)) throw std::invalid_argument("empty posterior piece");
            if (i > 0 && pieces[i - 1].hi != p.lo)
                throw std::invalid_argument("posterior pieces must be contiguous");
            if (p.pole && *p.pole >= p.lo && *p.pole <= p.hi)
                throw std::invalid_argument("pole must lie outside its piece");
        }
        double mass = 0.0;
        double first_moment = 0.0;
        Quadrature moment_quad = quad;
        moment_quad.rel_tol = std::max(quad.rel_tol, 1e-10);
        for (const Piece& p : pieces) {
            PieceData data;
            data.piece = p;
            auto g = [&](double t) { return transformed(data, t); };
            IntegrationResult res = integrate_panels(g, to_t(data, p.lo), to_t(data, p.hi), {}, quad);
            data.panels = std::move(res.panels);
            data.cumulative.reserve(data.panels.size());
            for (const Panel& panel : data.panels) {
                data.cumulative.push_back(mass);
                mass += panel.value;
            }
            first_moment += moment(data, moment_quad);
            data.mass_after = mass;
            pieces_.push_back(std::move(data));
        }
        if (!std::isfinite(mass) || mass < 1e-300)
            throw DegeneratePosterior("posterior normalisation constant is " + std::to_string(mass));
        normalizer_ = mass;
        mean_ = std::clamp(first_moment / mass, lo(), hi());
    }

    double lo() const { return pieces_.front().piece.lo; }
    double hi() const { return pieces_.back().piece.hi; }
    std::optional<double> kink() const { return kink_; }

    /// Integral of the kernel over the support.
    double normalizer() const { return normalizer_; }

    double unnormalized(double x) const { return kernel_(x); }

    double density(double x) const {
        if (x < lo() || x > hi()) return 0.0;
        return std::max(0.0, kernel_(x)) / normalizer_;
    }

    double mean() const { return mean_; }

    double cdf(double x) const {
        if (x <= lo()) return 0.0;
        if (x >= hi()) return 1.0;
        const PieceData& d = piece_for(x);
        const double t = to_t(d, x);
        auto it = std::upper_bound(d.panels.begin(), d.panels.end(), t,
                                   [](double v, const Panel& p) { return v < p.a; });
        const std::size_t k = it == d.panels.begin() ? 0 : static_cast<std::size_t>(it - d.panels.begin()) - 1;
        const Panel& panel = d.panels[k];
        const double partial = gauss_kronrod([&](double u) { return transformed(d, u); }, panel.a, t);
        return std::clamp((d.cumulative[k] + partial) / normalizer_, 0.0, 1.0);
    }

    double quantile(double p) const {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level outside [0,1]");
        if (p == 0.0) return lo();
        if (p == 1.0) return hi();
        const double target = p * normalizer_;
        for (const PieceData& d : pieces_) {
            if (target > d.mass_after && &d != &pieces_.back()) continue;
            for (std::size_t k = 0; k < d.panels.size(); ++k) {
                const Panel& panel = d.panels[k];
                const double after = d.cumulative[k] + panel.value;
                if (target > after && k + 1 < d.panels.size()) continue;
                return to_x(d, solve_in_panel(d, panel, target - d.cumulative[k]));
            }
        }
        return hi();
    }

    std::pair<double, double> credible_interval(double level) const {
        if (!(level > 0.0 && level < 1.0))
            throw std::invalid_argument("credible level must lie in (0,1)");
        const double tail = 0.5 * (1.0 - level);
        return {quantile(tail), quantile(1.0 - tail)};
    }

    /// Posterior mode; see find_mode.
    double mode() const {
        std::vector<Piece> pieces;
        for (const PieceData& d : pieces_) pieces.push_back(d.piece);
        return find_mode(kernel_, pieces, kink_);
    }

    /// Maximiser of a piecewise smooth kernel; no normalisation needed.
    ///
    /// Each piece is scanned on a grid (512 points shared in proportion to
    /// length, at least 16 per piece) and refined by golden-section search;
    /// piece ends are checked explicitly. When the best values of two pieces
    /// agree within a relative 1e-12 the shared kink is returned.
    template <class K>
    static double find_mode(const K& kernel, const std::vector<Piece>& pieces, std::optional<double> kink) {
        constexpr int scan_points = 512;
        const double width = pieces.back().hi - pieces.front().lo;
        std::vector<Candidate> best;
        for (const Piece& p : pieces) {
            const double a = p.lo;
            const double b = p.hi;
            const int n = std::max(16, static_cast<int>(std::lround(scan_points * (b - a) / width)));
            int arg = 0;
            double fmax = -std::numeric_limits<double>::infinity();
            for (int i = 0; i <= n; ++i) {
                const double x = i == n ? b : a + (b - a) * i / n;
                const double f = kernel(x);
                if (f > fmax) {
                    fmax = f;
                    arg = i;
                }
            }
            const double l = a + (b - a) * std::max(arg - 1, 0) / n;
            const double r = arg + 1 >= n ? b : a + (b - a) * (arg + 1) / n;
            Candidate c = golden_max(kernel, l, r);
            for (double edge : {a, b}) {
                const double fe = kernel(edge);
                if (fe >= c.f) c = {edge, fe};
            }
            best.push_back(c);
        }
        auto top = std::max_element(best.begin(), best.end(),
                                    [](const Candidate& l, const Candidate& r) { return l.f < r.f; });
        if (kink && best.size() > 1) {
            for (const Candidate& c : best) {
                if (&c == &*top) continue;
                if (std::abs(c.f - top->f) <= 1e-12 * std::abs(top->f)) return *kink;
            }
        }
        return top->x;
    }

private:
    struct PieceData {
        Piece piece;
        std::vector<Panel> panels;
        std::vector<double> cumulative;  // mass before each panel
        double mass_after = 0.0;
    };

    static double to_t(const PieceData& d, double x) {
        return d.piece.pole ? 1.0 / (*d.piece.pole - x) : x;
    }
    static double to_x(const PieceData& d, double t) {
        return d.piece.pole ? *d.piece.pole - 1.0 / t : t;
    }
    // First moment of one piece. With a pole, x(t) = pole - 1/t varies on a
    // geometric scale in t, so the integral runs over u = log|t|.
    double moment(const PieceData& d, const Quadrature& quad) const {
        const double ta = d.panels.front().a, tb = d.panels.back().b;
        if (!d.piece.pole) return integrate([&](double t) { return transformed(d, t) * t; }, ta, tb, {}, quad);
        const double sign = ta > 0.0 ? 1.0 : -1.0;
        auto f = [&](double u) {
            const double t = sign * std::exp(u);
            return transformed(d, t) * to_x(d, t) * t;
        };
        const double ua = std::log(std::abs(ta)), ub = std::log(std::abs(tb));
        return ua <= ub ? integrate(f, ua, ub, {}, quad) : -integrate(f, ub, ua, {}, quad);
    }

    double transformed(const PieceData& d, double t) const {
        if (!d.piece.pole) return kernel_(t);
        return kernel_(*d.piece.pole - 1.0 / t) / (t * t);
    }

    const PieceData& piece_for(double x) const {
        for (const PieceData& d : pieces_)
            if (x <= d.piece.hi) return d;
        return pieces_.back();
    }

    // Finds t in the panel with integral from panel.a to t equal to `mass`.
    double solve_in_panel(const PieceData& d, const Panel& panel, double mass) const {
        double a = panel.a;
        double b = panel.b;
        double t = a + (b - a) * std::clamp(mass / panel.value, 0.0, 1.0);
        for (int iter = 0; iter < 100; ++iter) {
            const double f =
                gauss_kronrod([&](double u) { return transformed(d, u); }, panel.a, t) - mass;
            if (std::abs(f) <= 1e-15 * std::abs(panel.value)) return t;
            if (f > 0.0)
                b = t;
            else
                a = t;
            const double g = transformed(d, t);
            double next = g > 0.0 ? t - f / g : 0.5 * (a + b);
            if (!(next > a && next < b)) next = 0.5 * (a + b);
            if (std::abs(next - t) <= 1e-14 * (std::abs(t) + 1e-300) || b - a <= 1e-14 * std::abs(t))
                return next;
            t = next;
        }
        return t;
    }

    struct Candidate {
        double x;
        double f;
    };

    template <class K>
    static Candidate golden_max(const K& kernel, double a, double b) {
        constexpr double inv_phi = 0.6180339887498948482;
        double c = b - inv_phi * (b - a);
        double d = a + inv_phi * (b - a);
        double fc = kernel(c);
        double fd = kernel(d);
        while (b - a > 1e-13) {
            if (fc >= fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = kernel(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = kernel(d);
            }
        }
        return fc >= fd ? Candidate{c, fc} : Candidate{d, fd};
    }

    Kernel kernel_;
    std::optional<double> kink_;
    std::vector<PieceData> pieces_;
    double normalizer_ = 0.0;
    double mean_ = 0.0;
};

}  // namespace bsa

#endif  // BSA_POSTERIOR_CURVE_HPP
