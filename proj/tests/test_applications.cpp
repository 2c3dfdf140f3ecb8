#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "bsa/applications.hpp"

using namespace bsa;

TEST(Encode, NamedValues) {
    EXPECT_EQ(encode(0.0, {1.0, 2}), (std::vector<int>{1, 0}));
    EXPECT_EQ(encode(0.0, {7.5, 2}), (std::vector<int>{1, 0}));
    EXPECT_EQ(encode(std::numeric_limits<double>::infinity(), {1.0, 3}), (std::vector<int>{1, 1, 1}));
    EXPECT_EQ(encode(-std::numeric_limits<double>::infinity(), {1.0, 3}), (std::vector<int>{0, 0, 0}));
    EXPECT_NEAR(sigmoid(1.0, 1.0), 0.7310585786300049, 1e-15);
    EXPECT_EQ(encode(1.0, {1.0, 3}), (std::vector<int>{1, 1, 0}));
    EXPECT_THROW(encode(std::nan(""), {1.0, 2}), std::invalid_argument);
    EXPECT_THROW(encode(0.0, {1.0, 0}), std::invalid_argument);
    EXPECT_DOUBLE_EQ(SigmoidEncoder::for_range(6.0, 3).scale, 0.5);
}

TEST(Encode, NearestFractionExhaustive) {
    for (int q = 1; q <= 8; ++q)
        for (int i = 1; i < 1000; ++i) {
            const double target = i / 1000.0;
            const double y = std::log(target / (1.0 - target));
            const auto bits = encode(y, {1.0, q});
            ASSERT_EQ(static_cast<int>(bits.size()), q);
            int a = 0;
            for (std::size_t k = 0; k < bits.size(); ++k) {
                if (k > 0) {
                    ASSERT_LE(bits[k], bits[k - 1]);  // ones first
                }
                a += bits[k];
            }
            const double ys = sigmoid(y, 1.0);
            for (int k = 0; k <= q; ++k)
                ASSERT_LE(std::abs(static_cast<double>(a) / q - ys), std::abs(static_cast<double>(k) / q - ys) + 1e-15)
                    << "q " << q << " y* " << ys;
        }
}

TEST(Encode, SingleBinaryIsSign) {
    for (double y : {-3.0, -1e-9, 1e-9, 2.0}) EXPECT_EQ(encode(y, {0.7, 1})[0], y > 0 ? 1 : 0);
}

TEST(RootSearch, SingleBinaryEqualsFeedingSigns) {
    SearchOptions opt;
    opt.encoder = {1.0, 1};
    opt.seed = 5;
    opt.horizon = 20;
    const SearchTrajectory tr = root_search(cubic_response, opt);

    SeededRng rng(5);
    SessionState st = start_session(median_session(opt));
    for (int n = 0; n < 20; ++n) {
        const double y = cubic_response(st.x_original(), rng);
        advance(st, y > 0 ? 1 : 0);
        EXPECT_EQ(tr.x[n + 1], st.x_original());
    }
}

TEST(RootSearch, NoiselessLinearConverges) {
    SearchOptions opt;
    opt.encoder = SigmoidEncoder::for_range(0.5, 3);
    opt.x1 = 0.2;
    const SearchTrajectory tr = root_search([](double x, SeededRng&) { return x - 0.5; }, opt);
    ASSERT_EQ(tr.x.size(), 31u);
    EXPECT_NEAR(tr.x.back(), 0.5, 0.05);
}

TEST(RootSearch, ReproducibleAndImproving) {
    SearchOptions opt;
    opt.seed = 77;
    const auto a = root_search(cubic_response, opt), b = root_search(cubic_response, opt);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.binaries, b.binaries);

    std::vector<SearchTrajectory> runs;
    for (int r = 0; r < 500; ++r) {
        opt.seed = derive_seed(2024, r);
        runs.push_back(root_search(cubic_response, opt));
    }
    EXPECT_LT(trajectory_rmse(runs, 30, worked_root), trajectory_rmse(runs, 5, worked_root));
}

TEST(RootSearch, OriginalCoordinates) {
    SearchOptions opt;
    opt.domain_lo = -2.0;
    opt.domain_hi = 2.0;
    opt.encoder = SigmoidEncoder::for_range(4.0, 3);
    const auto tr = root_search([](double x, SeededRng& rng) { return x - 1.0 + 0.1 * rng.normal(); }, opt);
    EXPECT_DOUBLE_EQ(tr.x.front(), 0.0);
    EXPECT_NEAR(tr.x.back(), 1.0, 0.25);
}

TEST(KwProbe, Widths) {
    const KwProbe p;
    EXPECT_DOUBLE_EQ(p.c(1), 1.0);
    EXPECT_NEAR(p.c(8), 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(p.gamma(4), 0.25);
    EXPECT_THROW(kw_classic_step({}, 0, 0, {0.0, 1.0}), std::invalid_argument);
}

TEST(KwClassic, Recursion) {
    EXPECT_DOUBLE_EQ(kw_classic_step({0.4, 3}, 1.5, 1.5).x, 0.4);
    const KwState next = kw_classic_step({0.5, 1}, 0.3, 0.1);
    EXPECT_NEAR(next.x, 0.3, 1e-15);
    EXPECT_EQ(next.n, 2);

    KwState st{0.9, 1};
    auto phi = [](double x) { return (x - 0.3) * (x - 0.3); };
    const KwProbe p;
    for (int i = 0; i < 500; ++i) st = kw_classic_step(st, phi(st.x + p.c(st.n)), phi(st.x - p.c(st.n)));
    EXPECT_LT(std::abs(st.x - 0.3), 0.05);
}

TEST(KwSearch, ProbesStayInDomain) {
    SearchOptions opt;
    opt.seed = 3;
    std::vector<double> probes;
    const auto tr = kw_search(
        [&](double x, SeededRng& rng) {
            probes.push_back(x);
            return quadratic_objective(x, rng);
        },
        opt);
    ASSERT_EQ(probes.size(), 60u);
    for (double x : probes) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
    }
    EXPECT_TRUE(tr.clipped.front());  // c_1 = 1 exceeds the distance to either end
}

TEST(KwSearch, NoiselessQuadraticApproachesMinimum) {
    SearchOptions opt;
    const auto tr = kw_search([](double x, SeededRng&) { return 200.0 * (x - 0.3) * (x - 0.3); }, opt);
    for (std::size_t n = 0; n < tr.y.size(); ++n) {
        if (tr.y[n] != 0.0) {
            EXPECT_EQ(tr.y[n] > 0, tr.x[n] > 0.3) << n;
        }
    }
    EXPECT_LT(std::abs(tr.x.back() - 0.3), std::abs(tr.x.front() - 0.3));
    EXPECT_NEAR(tr.x.back(), 0.3, 0.05);
}

TEST(KwSearch, ReproducibleAndImproving) {
    SearchOptions opt;
    opt.seed = 8;
    EXPECT_EQ(kw_search(quadratic_objective, opt).x, kw_search(quadratic_objective, opt).x);
    std::vector<SearchTrajectory> runs;
    for (int r = 0; r < 500; ++r) {
        opt.seed = derive_seed(2025, r);
        runs.push_back(kw_search(quadratic_objective, opt));
    }
    EXPECT_LT(trajectory_rmse(runs, 30, worked_root), trajectory_rmse(runs, 5, worked_root));
}

TEST(RmjBaselines, RunAndAreDeterministic) {
    SearchOptions opt;
    opt.seed = 10;
    const auto a = rmj_root_search(cubic_response, opt);
    EXPECT_EQ(a.x, rmj_root_search(cubic_response, opt).x);
    EXPECT_EQ(a.x.size(), 31u);
    const auto b = rmj_kw_search(quadratic_objective, opt);
    EXPECT_EQ(b.x, rmj_kw_search(quadratic_objective, opt).x);
    for (const auto& bits : b.binaries) EXPECT_EQ(bits.size(), 1u);
}
