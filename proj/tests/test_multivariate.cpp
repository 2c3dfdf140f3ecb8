#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "bsa/multivariate.hpp"
#include "bsa/testbed.hpp"

using namespace bsa;

namespace {

// Composite Simpson on [a, b] with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
    const double h = (b - a) / n;
    double sum = f(a) + f(b);
    for (int i = 1; i < n; ++i) sum += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return sum * h / 3.0;
}

// Likelihood of one observation under the hyperplane through (x^(j), alpha)
// with slopes beta_a = s * bt[a], written straight from F_j.
double raw_likelihood(const MvObservation& o, const Point& current, int j, double theta, const std::vector<double>& bt,
                      int s, double alpha) {
    double f = alpha;
    for (std::size_t a = 0; a < current.size(); ++a) {
        const double anchor = static_cast<int>(a) == j ? theta : current[a];
        f += s * bt[a] * (o.x[a] - anchor);
    }
    return o.y ? f : 1.0 - f;
}

struct Fixture {
    Hypercube cube;
    MvPriorBounds bounds;
    Point current;
    std::vector<MvObservation> members;
};

// Members drawn uniformly inside the hypercube of `current`.
Fixture random_fixture(std::uint64_t seed, int m, Point current, int s, double alpha) {
    SeededRng rng(seed);
    Fixture fx{locate_hypercube(current, s), {0.0, 1.0, alpha}, current, {}};
    for (int i = 0; i < m; ++i) {
        Point x(current.size());
        for (std::size_t a = 0; a < x.size(); ++a)
            x[a] = rng.uniform(fx.cube.lower(static_cast<int>(a)), fx.cube.upper(static_cast<int>(a)));
        fx.members.push_back({x, rng.bernoulli(0.5)});
    }
    return fx;
}

// Normalised theta density from the joint prior times likelihood, the slope
// integrated out by Simpson and the normaliser taken by Simpson over theta.
std::function<double(double)> theta_oracle(const Fixture& fx, int j, const std::vector<double>& others) {
    const int s = fx.cube.slices;
    const double alpha = fx.bounds.alpha;
    double a0 = alpha, a1 = alpha;
    for (int a = 0; a < fx.cube.dimension(); ++a)
        if (a != j) {
            a0 += others[a] * s * (fx.cube.lower(a) - fx.current[a]);
            a1 += others[a] * s * (fx.cube.upper(a) - fx.current[a]);
        }
    const double v0 = fx.cube.lower(j), vp = fx.cube.upper(j);
    const double t0 = ((1.0 - a1) * v0 + a0 * vp) / (1.0 - a1 + a0);
    auto unnorm = [=](double theta) {
        const double e = theta <= t0 ? (1.0 - a1) / (s * (vp - theta)) : a0 / (s * (theta - v0));
        return simpson(
            [&](double b) {
                std::vector<double> bt = others;
                bt[j] = b;
                double prod = b;
                for (const auto& o : fx.members) prod *= raw_likelihood(o, fx.current, j, theta, bt, s, alpha);
                return prod;
            },
            0.0, e, 400);
    };
    const double mass = simpson(unnorm, 0.0, t0, 800) + simpson(unnorm, t0, 1.0, 800);
    return [=](double theta) { return unnorm(theta) / mass; };
}

std::function<double(double)> beta_oracle(const Fixture& fx, int j, const std::vector<double>& others, double lo,
                                          double hi) {
    const int s = fx.cube.slices;
    const double alpha = fx.bounds.alpha;
    double a0 = alpha, a1 = alpha;
    for (int a = 0; a < fx.cube.dimension(); ++a)
        if (a != j) {
            a0 += others[a] * s * (fx.cube.lower(a) - fx.current[a]);
            a1 += others[a] * s * (fx.cube.upper(a) - fx.current[a]);
        }
    const double v0 = fx.cube.lower(j), vp = fx.cube.upper(j);
    auto unnorm = [=](double b) {
        std::vector<double> bt = others;
        bt[j] = b;
        const double l = vp - (1.0 - a1) / (s * b), u = v0 + a0 / (s * b);
        return b * simpson(
                       [&](double theta) {
                           double prod = 1.0;
                           for (const auto& o : fx.members) prod *= raw_likelihood(o, fx.current, j, theta, bt, s, alpha);
                           return prod;
                       },
                       l, u, 400);
    };
    const double mass = simpson(unnorm, lo, hi, 800);
    return [=](double b) { return unnorm(b) / mass; };
}

double oracle_mean(const std::function<double(double)>& density, double kink) {
    auto f = [&](double t) { return t * density(t); };
    return simpson(f, 0.0, kink, 800) + simpson(f, kink, 1.0, 800);
}

}  // namespace

TEST(Hypercube, LocateAndHelix) {
    const Hypercube h = locate_hypercube({0.6, 0.6}, 5);
    EXPECT_EQ(h.index, (std::vector<int>{3, 3}));
    EXPECT_EQ(h.vertex(0), (Point{0.4, 0.4}));
    EXPECT_EQ(h.vertex(1), (Point{0.6, 0.4}));
    EXPECT_EQ(h.vertex(2), (Point{0.6, 0.6}));
    const Hypercube c = locate_hypercube({0.3, 0.1, 0.5}, 2);
    EXPECT_EQ(c.vertex(0), (Point{0.0, 0.0, 0.0}));
    EXPECT_EQ(c.vertex(3), (Point{0.5, 0.5, 0.5}));
    EXPECT_THROW(locate_hypercube({0.0, 0.5}, 3), std::invalid_argument);
    EXPECT_FALSE(h.contains_strictly({0.6, 0.5}));
    EXPECT_TRUE(h.contains_strictly({0.5, 0.5}));
}

TEST(Hypercube, ConsecutiveVerticesDifferInOneCoordinate) {
    SeededRng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const int p = 1 + trial % 5;
        const int s = 1 + trial % 7;
        Point x(p);
        for (double& v : x) v = 1.0 - rng.uniform();
        const Hypercube h = locate_hypercube(x, s);
        for (int a = 1; a <= p; ++a) {
            const Point u = h.vertex(a - 1), v = h.vertex(a);
            int changed = 0;
            for (int k = 0; k < p; ++k)
                if (u[k] != v[k]) {
                    ++changed;
                    EXPECT_NEAR(v[k] - u[k], 1.0 / s, 1e-15);
                }
            EXPECT_EQ(changed, 1);
        }
        for (int k = 0; k < p; ++k) {
            EXPECT_GT(x[k], h.lower(k));
            EXPECT_LE(x[k], h.upper(k));
        }
    }
}

TEST(Conditional, ReducesToUnivariate) {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        SeededRng rng(seed);
        const int s = 5 + static_cast<int>(seed);
        const double alpha = 0.2 + 0.2 * (seed - 3);
        const double xn = rng.uniform(0.05, 0.95);
        const Subinterval sub = locate(xn, s);
        std::vector<Observation> uni;
        std::vector<MvObservation> multi;
        for (int i = 0; i < 8; ++i) {
            const double x = rng.uniform(sub.v0(), sub.v1());
            const int y = rng.bernoulli(0.5);
            uni.push_back({x, y});
            multi.push_back({{x}, y});
        }
        const LocalPosterior lp(sub, {0.0, 1.0, alpha}, uni);
        const ConditionalModel cm(locate_hypercube({xn}, s), {0.0, 1.0, alpha}, {xn}, multi, 0, {0.0});
        EXPECT_NEAR(cm.theta0(), lp.theta0(), 1e-15);
        const auto a = lp.posterior_theta(), b = cm.posterior_theta();
        for (int i = 1; i < 1000; ++i) {
            const double t = i / 1000.0;
            EXPECT_NEAR(a.density(t), b.density(t), 1e-10) << t;
        }
        EXPECT_NEAR(a.mean(), b.mean(), 1e-10);
        const auto ga = lp.posterior_betatilde(), gb = cm.posterior_beta();
        EXPECT_NEAR(ga.lo(), gb.lo(), 1e-15);
        EXPECT_NEAR(ga.hi(), gb.hi(), 1e-15);
        for (int i = 1; i < 200; ++i) {
            const double bt = ga.lo() + (ga.hi() - ga.lo()) * i / 200.0;
            EXPECT_NEAR(ga.density(bt), gb.density(bt), 1e-10 * std::max(1.0, ga.density(bt)));
        }
    }
}

TEST(Conditional, PriorIsEtaSquared) {
    const Point xn{0.37, 0.71};
    const Hypercube cube = locate_hypercube(xn, 4);
    const MvPriorBounds bounds{0.0, 1.0, 0.3};
    const std::vector<double> others{0.0, 0.2};
    const ConditionalModel cm(cube, bounds, xn, {}, 0, others);
    // Direct substitution.
    const double a0 = 0.3 + 0.2 * 4 * (0.5 - 0.71);
    const double a1 = 0.3 + 0.2 * 4 * (0.75 - 0.71);
    EXPECT_NEAR(cm.alpha0(), a0, 1e-15);
    EXPECT_NEAR(cm.alpha1(), a1, 1e-15);
    const double t0 = ((1 - a1) * 0.25 + a0 * 0.5) / (1 - a1 + a0);
    EXPECT_NEAR(cm.theta0(), t0, 1e-15);
    const auto curve = cm.posterior_theta();
    const double ref = curve.density(0.4) / std::pow(cm.eta(0.4), 2);
    for (double t : {0.05, 0.2, t0 - 1e-6, t0 + 1e-6, 0.6, 0.95}) {
        const double e = t <= t0 ? (1 - a1) / (4 * (0.5 - t)) : a0 / (4 * (t - 0.25));
        EXPECT_NEAR(cm.eta(t), e, 1e-14);
        EXPECT_NEAR(curve.density(t) / (e * e), ref, 1e-10 * ref);
    }
}

TEST(Conditional, SlopeSupportEndpoints) {
    const Point xn{0.45, 0.55};
    const Hypercube cube = locate_hypercube(xn, 5);  // (0.4,0.6] x (0.4,0.6]
    const ConditionalModel cm(cube, {0.0, 1.0, 0.5}, xn, {}, 1, {0.3, 0.0});
    const double a0 = 0.5 + 0.3 * 5 * (0.4 - 0.45);
    const double a1 = 0.5 + 0.3 * 5 * (0.6 - 0.45);
    EXPECT_NEAR(cm.beta_lower(), std::max((1 - a1) / (5 * 0.6), a0 / (5 * 0.6)), 1e-15);
    EXPECT_NEAR(cm.beta_upper(), 0.7, 1e-15);
    EXPECT_THROW(ConditionalModel(cube, {0.0, 1.0, 0.5}, xn, {}, 1, {2.0, 0.0}), std::invalid_argument);
}

TEST(Conditional, ThetaMatchesGridOracle) {
    for (std::uint64_t seed : {11u, 12u}) {
        const Fixture fx = random_fixture(seed, 3, {0.47, 0.58}, 3, 0.4);
        for (int j = 0; j < 2; ++j) {
            std::vector<double> others(2, 0.0);
            others[1 - j] = 0.5 * other_slope_limit(fx.cube, fx.bounds, fx.current, j);
            const ConditionalModel cm(fx.cube, fx.bounds, fx.current, fx.members, j, others);
            const auto curve = cm.posterior_theta();
            const auto oracle = theta_oracle(fx, j, others);
            double worst = 0.0;
            for (int i = 1; i < 200; ++i) {
                const double t = i / 200.0;
                worst = std::max(worst, std::abs(curve.density(t) - oracle(t)));
            }
            EXPECT_LE(worst, 1e-4) << "seed " << seed << " j " << j;
            EXPECT_NEAR(curve.mean(), oracle_mean(oracle, cm.theta0()), 1e-6);
        }
    }
}

TEST(Conditional, SlopeMatchesGridOracle) {
    const Fixture fx = random_fixture(21, 3, {0.47, 0.58}, 3, 0.4);
    for (int j = 0; j < 2; ++j) {
        std::vector<double> others(2, 0.0);
        others[1 - j] = 0.3 * other_slope_limit(fx.cube, fx.bounds, fx.current, j);
        const ConditionalModel cm(fx.cube, fx.bounds, fx.current, fx.members, j, others);
        const auto curve = cm.posterior_beta();
        const auto oracle = beta_oracle(fx, j, others, curve.lo(), curve.hi());
        double worst = 0.0;
        for (int i = 1; i < 200; ++i) {
            const double b = curve.lo() + (curve.hi() - curve.lo()) * i / 200.0;
            worst = std::max(worst, std::abs(curve.density(b) - oracle(b)));
        }
        EXPECT_LE(worst, 1e-4) << "j " << j;
    }
}

TEST(Conditional, NormalisedAtEveryNode) {
    const Fixture fx = random_fixture(31, 6, {0.33, 0.81}, 9, 0.2);
    for (int j = 0; j < 2; ++j)
        for (const auto& b : averaging_nodes(fx.cube, fx.bounds, fx.current, j, {})) {
            const ConditionalModel cm(fx.cube, fx.bounds, fx.current, fx.members, j, b);
            const auto curve = cm.posterior_theta();
            auto d = [&](double t) { return curve.density(t); };
            const double total = simpson(d, 0.0, cm.theta0(), 4000) + simpson(d, cm.theta0(), 1.0, 4000);
            EXPECT_NEAR(total, 1.0, 1e-6);
        }
}

TEST(Conditional, PermutationInvariant) {
    Fixture fx = random_fixture(41, 5, {0.52, 0.44}, 5, 0.5);
    const ConditionalModel a(fx.cube, fx.bounds, fx.current, fx.members, 0, {0.0, 0.2});
    std::reverse(fx.members.begin(), fx.members.end());
    const ConditionalModel b(fx.cube, fx.bounds, fx.current, fx.members, 0, {0.0, 0.2});
    for (int i = 1; i < 100; ++i) EXPECT_EQ(a.theta_kernel(i / 100.0), b.theta_kernel(i / 100.0));
}

TEST(Averaging, UpperLimitAtCentre) {
    const Hypercube cube = locate_hypercube({0.5, 0.5}, 1);
    EXPECT_DOUBLE_EQ(other_slope_limit(cube, {0.0, 1.0, 0.5}, {0.5, 0.5}, 0), 1.0);
    EXPECT_DOUBLE_EQ(other_slope_limit(cube, {0.0, 1.0, 0.5}, {0.5, 0.5}, 1), 1.0);
}

TEST(Averaging, SymmetricPriorGivesBreakpoint) {
    const Hypercube cube = locate_hypercube({0.5, 0.5}, 1);
    const MvPriorBounds bounds{0.0, 1.0, 0.5};
    for (int j = 0; j < 2; ++j) {
        for (const auto& b : averaging_nodes(cube, bounds, {0.5, 0.5}, j, {})) {
            const ConditionalModel cm(cube, bounds, {0.5, 0.5}, {}, j, b);
            EXPECT_NEAR(cm.theta0(), 0.5, 1e-15);
            EXPECT_NEAR(cm.posterior_theta().mean(), 0.5, 1e-10);
        }
        EXPECT_NEAR(averaged_theta(j, cube, bounds, {0.5, 0.5}, {}), 0.5, 1e-10);
    }
}

TEST(Averaging, MatchesMonteCarloOverNodes) {
    const Fixture fx = random_fixture(51, 4, {0.62, 0.35}, 5, 0.5);
    for (int j = 0; j < 2; ++j) {
        const double u = other_slope_limit(fx.cube, fx.bounds, fx.current, j);
        // Independent per-node conditional means from the grid oracle.
        std::vector<double> node_mean;
        for (int i = 1; i <= 7; ++i) {
            std::vector<double> others(2, 0.0);
            others[1 - j] = i * u / 8.0;
            const ConditionalModel cm(fx.cube, fx.bounds, fx.current, fx.members, j, others);
            node_mean.push_back(oracle_mean(theta_oracle(fx, j, others), cm.theta0()));
        }
        SeededRng rng(derive_seed(52, j));
        const int draws = 100000;
        double sum = 0.0, sq = 0.0;
        for (int k = 0; k < draws; ++k) {
            const double v = node_mean[static_cast<int>(rng.uniform() * 7)];
            sum += v;
            sq += v * v;
        }
        const double mc = sum / draws;
        const double se = std::sqrt(std::max(sq / draws - mc * mc, 0.0) / draws);
        const double got = averaged_theta(j, fx.cube, fx.bounds, fx.current, fx.members);
        EXPECT_LE(std::abs(got - mc), 3 * se + 1e-6) << "j " << j << " se " << se;
    }
}

TEST(Averaging, HigherDimensionDrawsStayInSimplex) {
    const Point xn{0.3, 0.55, 0.8};
    const Hypercube cube = locate_hypercube(xn, 3);
    const MvPriorBounds bounds{0.0, 1.0, 0.4};
    AveragingOptions opt;
    opt.seed = 9;
    opt.draws = 64;
    for (int j = 0; j < 3; ++j) {
        const auto nodes = averaging_nodes(cube, bounds, xn, j, opt);
        ASSERT_EQ(nodes.size(), 64u);
        for (const auto& b : nodes) EXPECT_TRUE(in_simplex(cube, bounds, xn, j, b));
        EXPECT_EQ(nodes, averaging_nodes(cube, bounds, xn, j, opt));
        const double t = averaged_theta(j, cube, bounds, xn, {}, opt);
        EXPECT_GT(t, 0.0);
        EXPECT_LT(t, 1.0);
    }
}

TEST(NextPoint, EuclideanPicksSmallerNorm) {
    EXPECT_EQ(select_candidate({{0.9, 0.6}, {0.6, 0.2}}, make_u(UKind::euclidean)), 1);
}

TEST(NextPoint, TiesGoToFirstCoordinate) {
    const Point xn{0.4, 0.4};
    const auto c = candidates_from(xn, {0.45, 0.45}, 5);
    EXPECT_EQ(select_candidate(c, make_u(UKind::diagonal)), 0);
    EXPECT_EQ(c[0], (Point{0.45, 0.4}));
    EXPECT_EQ(ukind_from_string("euclidean"), UKind::euclidean);
    EXPECT_THROW(ukind_from_string("manhattan"), std::invalid_argument);
}

TEST(MvSession, OneDimensionMatchesUnivariate) {
    for (double alpha : {0.1, 0.5, 0.7}) {
        SessionConfig uc = SessionConfig::for_alpha(alpha);
        uc.carry_bounds = false;
        uc.x1 = 0.6;
        MvSessionConfig mc = MvSessionConfig::for_alpha(alpha, 1);
        mc.estimator = uc.estimator;
        SessionState us = start_session(uc);
        MvSessionState ms = start_mv_session(mc);
        SeededRng rng(derive_seed(61, static_cast<std::uint64_t>(alpha * 100)));
        for (int i = 0; i < 30; ++i) {
            const int y = rng.bernoulli(eval_model(ModelId::m1, us.x, alpha));
            advance(us, y);
            ms = mv_step(ms, y).first;
            ASSERT_NEAR(ms.x[0], us.x, 1e-10) << "alpha " << alpha << " step " << i;
        }
    }
}

TEST(MvSession, CandidatesStayInsideUnitCube) {
    for (ModelId m : {ModelId::m8, ModelId::m9, ModelId::m10}) {
        MvSessionState st = start_mv_session(MvSessionConfig::for_alpha(0.25));
        SeededRng rng(derive_seed(71, static_cast<std::uint64_t>(m)));
        for (int i = 0; i < 25; ++i) {
            const int y = simulate_response(m, {st.x[0], st.x[1]}, 0.25, rng);
            auto [next, r] = mv_step(st, y);
            ASSERT_EQ(r.candidates.size(), 2u);
            for (const auto& c : r.candidates)
                for (double v : c) {
                    EXPECT_GT(v, 0.0);
                    EXPECT_LT(v, 1.0);
                }
            EXPECT_EQ(r.next, r.candidates[r.chosen]);
            st = std::move(next);
        }
    }
}

TEST(MvSession, RejectsBadInput) {
    MvSessionConfig c;
    c.x1 = {0.5, 1.0};
    EXPECT_THROW(start_mv_session(c), std::invalid_argument);
    const MvSessionState st = start_mv_session(MvSessionConfig{});
    EXPECT_THROW(mv_step(st, 3), std::invalid_argument);
    EXPECT_EQ(MvSessionConfig::for_alpha(0.25).estimator, Estimator::map);
    EXPECT_EQ(MvSessionConfig::for_alpha(0.5).estimator, Estimator::bayes);
}

TEST(MvSession, M8LowerTailRun) {
    const double alpha = 0.05;
    const auto root = true_root_2d(ModelId::m8, alpha);
    MvSessionState st = start_mv_session(MvSessionConfig::for_alpha(alpha));
    ASSERT_EQ(st.config.estimator, Estimator::map);
    SeededRng rng(20240611);
    for (int i = 0; i < 60; ++i) st = mv_step(st, simulate_response(ModelId::m8, {st.x[0], st.x[1]}, alpha, rng)).first;
    const double dist = std::hypot(st.x[0] - root[0], st.x[1] - root[1]);
    EXPECT_LE(dist, 0.15) << st.x[0] << "," << st.x[1];
}
