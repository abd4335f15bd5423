// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <vector>

#include "oracles.hpp"
#include "zvonkin/corrector.hpp"
#include "zvonkin/metrics.hpp"
#include "zvonkin/reference.hpp"
#include "zvonkin/sampler.hpp"
#include "zvonkin/transformed.hpp"

using namespace zvonkin;

namespace {

/// Test coefficients with closed-form drift/diffusion.
struct FnCoeffs {
    int d = 1;
    double drift_slope = 0.0;  // b(z) = drift_slope * z
    double diffusion = 1.0;    // sigma = diffusion * I
    int dim() const { return d; }
    void eval(std::span<const double> z, std::span<double> b, std::span<double> sig,
              EvalStats* = nullptr) const {
        const std::size_t dd = z.size();
        for (std::size_t i = 0; i < dd; ++i) b[i] = drift_slope * z[i];
        if (!sig.empty()) {
            for (std::size_t i = 0; i < dd * dd; ++i) sig[i] = 0.0;
            for (std::size_t i = 0; i < dd; ++i) sig[i * dd + i] = diffusion;
        }
    }
};

struct NanCoeffs {
    int dim() const { return 1; }
    void eval(std::span<const double>, std::span<double> b, std::span<double> sig,
              EvalStats* = nullptr) const {
        b[0] = std::numeric_limits<double>::quiet_NaN();
        if (!sig.empty()) sig[0] = 1.0;
    }
};

Problem trivial_case2_problem() {
    ProblemSpec s;
    s.dim = 1;
    s.b1 = FunctionSpec::linear({0.0});
    s.b2 = FunctionSpec::linear({-1.0});
    s.sigma = FunctionSpec::constant_matrix({1.0});
    s.case_tag = CaseTag::Case2HolderAlpha;
    s.alpha = 0.5;
    s.id = "trivial-case2";
    return make_problem(s);
}

}  // namespace

TEST_CASE("em_step arithmetic") {
    SUBCASE("zero drift, identity diffusion, zero noise keeps the state") {
        FnCoeffs c{1, 0.0, 1.0};
        const double z[1] = {0.7}, xi[1] = {0.0};
        double out[1];
        em_step(c, {z, 1}, 0.01, {xi, 1}, {out, 1});
        CHECK(out[0] == 0.7);
    }
    SUBCASE("z=1, eta=0.01, b=-1, sigma=1, xi=0.5 gives 1.04") {
        FnCoeffs c{1, -1.0, 1.0};
        const double z[1] = {1.0}, xi[1] = {0.5};
        double out[1];
        em_step(c, {z, 1}, 0.01, {xi, 1}, {out, 1});
        CHECK(out[0] == doctest::Approx(1.04).epsilon(1e-15));
    }
    SUBCASE("d=2 diagonal diffusion scales the noise") {
        struct DiagCoeffs {
            int dim() const { return 2; }
            void eval(std::span<const double>, std::span<double> b, std::span<double> sig,
                      EvalStats* = nullptr) const {
                b[0] = b[1] = 0.0;
                if (!sig.empty()) {
                    sig[0] = 2.0;
                    sig[1] = 0.0;
                    sig[2] = 0.0;
                    sig[3] = 3.0;
                }
            }
        } c;
        const double z[2] = {0.0, 0.0}, xi[2] = {1.0, 1.0};
        double out[2];
        em_step(c, {z, 2}, 0.04, {xi, 2}, {out, 2});
        CHECK(out[0] == doctest::Approx(0.4).epsilon(1e-15));
        CHECK(out[1] == doctest::Approx(0.6).epsilon(1e-15));
    }
    SUBCASE("non-finite output is loud") {
        NanCoeffs c;
        const double z[1] = {0.0}, xi[1] = {0.0};
        double out[1];
        CHECK_THROWS_AS(em_step(c, {z, 1}, 0.01, {xi, 1}, {out, 1}), NonFiniteState);
    }
}

TEST_CASE("chain config validation") {
    FnCoeffs c{1, -1.0, 1.0};
    ChainConfig cfg;
    cfg.z0 = {0.0};
    cfg.k_total = 10;
    cfg.eta = 0.7;  // above the 0.5 cap
    CHECK_THROWS_AS(run_chain(c, cfg), PreconditionViolation);
    cfg.eta = 0.1;
    cfg.k_burn = 10;  // must be < k_total
    CHECK_THROWS_AS(run_chain(c, cfg), PreconditionViolation);
    cfg.k_burn = 0;
    cfg.thin = 0;
    CHECK_THROWS_AS(run_chain(c, cfg), PreconditionViolation);
}

TEST_CASE("same seed gives bit-identical chains") {
    FnCoeffs c{1, -1.0, 1.0};
    ChainConfig cfg;
    cfg.eta = 0.01;
    cfg.k_total = 5000;
    cfg.k_burn = 100;
    cfg.thin = 3;
    cfg.z0 = {0.3};
    cfg.seed = 12345;
    const auto r1 = run_chain(c, cfg);
    const auto r2 = run_chain(c, cfg);
    REQUIRE(r1.retained.size() == r2.retained.size());
    CHECK(r1.retained == r2.retained);
    CHECK(r1.final_state == r2.final_state);
}

TEST_CASE("pure diffusion: increment variance tracks k eta") {
    FnCoeffs c{1, 0.0, 1.0};
    const std::int64_t k = 256;
    const double eta = 1.0 / 64.0;
    std::vector<double> finals(1000);
    for (std::size_t i = 0; i < finals.size(); ++i) {
        ChainConfig cfg;
        cfg.eta = eta;
        cfg.k_total = k;
        cfg.k_burn = k - 1;
        cfg.thin = 1;
        cfg.z0 = {0.0};
        cfg.seed = derive_seed(777, i);
        finals[i] = run_chain(c, cfg).final_state[0];
    }
    const auto mv = oracles::mean_var(finals);
    CHECK(std::fabs(mv.mean) <= 0.2);  // ~3 sigma of the mean estimate
    CHECK(mv.var == doctest::Approx(k * eta).epsilon(0.10));
}

TEST_CASE("OU chain reproduces the stationary gaussian") {
    FnCoeffs c{1, -1.0, 1.0};
    ChainConfig cfg;
    cfg.eta = 1e-3;
    cfg.k_total = 2000000;
    cfg.k_burn = 20000;
    cfg.thin = 10;
    cfg.z0 = {0.0};
    cfg.seed = 99;
    const auto r = run_chain(c, cfg);
    std::vector<double> xs(r.retained.begin(), r.retained.end());
    const auto mv = oracles::mean_var(xs);
    CHECK(mv.mean >= -0.01);
    CHECK(mv.mean <= 0.01);
    CHECK(mv.var >= 0.49 * (1.0 - 3e-2));
    CHECK(mv.var <= 0.50 * (1.0 + 3e-2));
    CHECK(r.telemetry.max_excursion < 5.0);
}

TEST_CASE("one-step lyapunov drift is nonpositive on the stationary stretch") {
    // consecutive retained OU states: E[V(Z_{k+1}) - V(Z_k)] <= 0 + 3 se
    FnCoeffs c{1, -1.0, 1.0};
    ChainConfig cfg;
    cfg.eta = 1e-2;
    cfg.k_total = 200000;
    cfg.k_burn = 2000;
    cfg.thin = 1;
    cfg.z0 = {0.0};
    cfg.seed = 4242;
    const auto r = run_chain(c, cfg);
    std::vector<double> dv;
    for (std::size_t i = 1; i < r.retained.size(); ++i) {
        const double v1 = 1.0 + r.retained[i] * r.retained[i];
        const double v0 = 1.0 + r.retained[i - 1] * r.retained[i - 1];
        dv.push_back(v1 - v0);
    }
    const auto mv = oracles::mean_var(dv);
    const double se = std::sqrt(mv.var / dv.size());
    CHECK(mv.mean <= 3.0 * se);
}

TEST_CASE("excursion guard trips instead of silent extrapolation") {
    FnCoeffs c{1, 0.0, 1.0};
    ChainConfig cfg;
    cfg.eta = 0.25;
    cfg.k_total = 10000;
    cfg.k_burn = 1;
    cfg.thin = 1;
    cfg.z0 = {0.0};
    cfg.seed = 5;
    CHECK_THROWS_AS(run_chain(c, cfg, /*excursion_limit=*/0.5), ExcursionGuard);
}

TEST_CASE("ensembles are schedule independent") {
    FnCoeffs c{1, -1.0, 1.0};
    ChainConfig cfg;
    cfg.eta = 0.01;
    cfg.k_total = 2000;
    cfg.k_burn = 100;
    cfg.thin = 2;
    cfg.z0 = {0.0};
    const auto e1 = run_ensemble(c, cfg, 8, 321, "p", 1e18, /*n_threads=*/1);
    const auto e4 = run_ensemble(c, cfg, 8, 321, "p", 1e18, /*n_threads=*/4);
    CHECK(e1.set.samples == e4.set.samples);
    CHECK(e1.chain_first_sample == e4.chain_first_sample);

    // n_chains = 1 equals a single chain with the derived seed
    const auto single = run_ensemble(c, cfg, 1, 321, "p", 1e18, 1);
    ChainConfig cfg1 = cfg;
    cfg1.seed = derive_seed(321, 0);
    const auto direct = run_chain(c, cfg1);
    CHECK(single.set.samples == direct.retained);
}

TEST_CASE("ensemble averaging shrinks the estimator spread") {
    FnCoeffs c{1, -1.0, 1.0};
    ChainConfig cfg;
    cfg.eta = 0.01;
    cfg.k_total = 10000;
    cfg.k_burn = 1000;
    cfg.thin = 5;
    cfg.z0 = {0.0};
    std::vector<double> est1, est16;
    for (std::uint64_t s = 0; s < 8; ++s) {
        const auto e1 = run_ensemble(c, cfg, 1, 1000 + s, "p", 1e18);
        const auto e16 = run_ensemble(c, cfg, 16, 2000 + s, "p", 1e18);
        est1.push_back(empirical_moment(e1.set, 2));
        est16.push_back(empirical_moment(e16.set, 2));
    }
    const auto v1 = oracles::mean_var(est1);
    const auto v16 = oracles::mean_var(est16);
    // 16 independent chains cut the standard error by about 4; allow slack
    CHECK(std::sqrt(v16.var) < std::sqrt(v1.var) / 2.0);
}

TEST_CASE("pull_back maps through the inverse transform") {
    ProblemSpec sp;
    sp.dim = 1;
    sp.b1 = FunctionSpec::bump(1.0, 0.5);
    sp.b2 = FunctionSpec::linear({-1.0});
    sp.sigma = FunctionSpec::constant_matrix({1.0});
    sp.case_tag = CaseTag::Case1LinfL1;
    const auto problem = make_problem(sp);
    const auto sel = select_lambda(problem, Grid(1, 12.0, 4097), 0.4, 1.0);
    const auto tc = make_transformed(problem, sel.field);

    ChainConfig cfg;
    cfg.eta = 1.0 / 64;
    cfg.k_total = 20000;
    cfg.k_burn = 1280;
    cfg.thin = 6;
    cfg.z0 = tc.field().phi(std::vector<double>{0.0});
    const auto ens = run_ensemble(tc, cfg, 4, 11, "bump-1d", 120.0);
    const auto pulled = pull_back(tc.field(), ens.set);
    CHECK(pulled.coordinates == Coordinates::PulledBack);
    REQUIRE(pulled.size() == ens.set.size());

    SUBCASE("round trip through phi recovers the transformed samples") {
        double worst = 0.0;
        for (std::size_t i = 0; i < pulled.size(); i += 7) {
            double y[1];
            tc.field().phi(pulled.sample(i), {y, 1});
            worst = std::max(worst, std::fabs(y[0] - ens.set.sample(i)[0]));
        }
        CHECK(worst <= 2e-10);
    }
    SUBCASE("mean shift equals minus the mean corrector value") {
        double mean_t = 0.0, mean_p = 0.0, mean_u = 0.0;
        for (std::size_t i = 0; i < pulled.size(); ++i) {
            mean_t += ens.set.sample(i)[0];
            mean_p += pulled.sample(i)[0];
            double uo[1], go[1];
            tc.field().eval(pulled.sample(i), {uo, 1}, {go, 1});
            mean_u += uo[0];
        }
        mean_t /= pulled.size();
        mean_p /= pulled.size();
        mean_u /= pulled.size();
        CHECK(mean_p - mean_t == doctest::Approx(-mean_u).epsilon(1e-9));
    }
    SUBCASE("zero field leaves samples unchanged") {
        CorrectorField zf;
        zf.grid = Grid(1, 12.0, 65);
        zf.lambda = 1.0;
        zf.u.assign(zf.grid.node_count(), 0.0);
        zf.grad_u.assign(zf.grid.node_count(), 0.0);
        const auto same = pull_back(zf, ens.set);
        CHECK(same.samples == ens.set.samples);
        CHECK(same.coordinates == Coordinates::PulledBack);
        CHECK_THROWS_AS(pull_back(zf, same), PreconditionViolation);  // already pulled
    }
}

TEST_CASE("naive chain") {
    SUBCASE("refused for Case 1") {
        ProblemSpec sp;
        sp.dim = 1;
        sp.b1 = FunctionSpec::bump(1.0, 0.5);
        sp.b2 = FunctionSpec::linear({-1.0});
        sp.sigma = FunctionSpec::constant_matrix({1.0});
        sp.case_tag = CaseTag::Case1LinfL1;
        ChainConfig cfg;
        cfg.eta = 0.01;
        cfg.k_total = 100;
        cfg.z0 = {0.0};
        CHECK_THROWS_AS(naive_chain(make_problem(sp), cfg), Case1Unsupported);
    }
    SUBCASE("coincides with the transformed scheme when b1 = 0") {
        const auto problem = trivial_case2_problem();
        ChainConfig cfg;
        cfg.eta = 0.01;
        cfg.k_total = 3000;
        cfg.k_burn = 500;
        cfg.thin = 2;
        cfg.z0 = {0.0};
        cfg.seed = 31;
        const auto naive = naive_chain(problem, cfg);
        // transformed scheme with a zero corrector field is the same recursion
        const auto field = solve_corrector(problem, Grid(1, 12.0, 129), 1.0);
        const auto tc = make_transformed(problem, field);
        const auto direct = run_chain(tc, cfg);
        CHECK(naive.samples == direct.retained);
        CHECK(naive.coordinates == Coordinates::PulledBack);
    }
}

TEST_CASE("sample set text round trip") {
    SampleSet s;
    s.dim = 2;
    s.samples = {0.25, -1.5, 3.0, 1.0 / 3.0, -0.125, 9.75};
    s.eta = 0.03125;
    s.n_chains = 3;
    s.coordinates = Coordinates::Transformed;
    s.seed = 987654321;
    s.problem_id = "holder-sine-2d";
    const std::string path = "samples_roundtrip_test.txt";
    write_samples(s, path);
    const auto r = read_samples(path);
    CHECK(r.dim == s.dim);
    CHECK(r.samples == s.samples);
    CHECK(r.eta == s.eta);
    CHECK(r.n_chains == s.n_chains);
    CHECK(r.coordinates == s.coordinates);
    CHECK(r.seed == s.seed);
    CHECK(r.problem_id == s.problem_id);
    std::remove(path.c_str());
}
