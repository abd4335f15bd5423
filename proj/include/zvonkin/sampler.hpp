// SPDX-License-Identifier: Apache-2.0
#pragma once

// Euler-Maruyama chains Z_{k+1} = Z_k + eta bhat(Z_k) + sqrt(eta) sigmahat(Z_k) xi_{k+1}
// with counter-based noise: the k-th Gaussian vector is a pure function of
// (chain seed, k), so ensembles are reproducible under any schedule.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "zvonkin/corrector.hpp"
#include "zvonkin/errors.hpp"
#include "zvonkin/parallel.hpp"
#include "zvonkin/problem.hpp"
#include "zvonkin/rng.hpp"
#include "zvonkin/transformed.hpp"

namespace zvonkin {

struct ChainConfig {
    double eta = 1.0 / 64.0;
    std::int64_t k_total = 0;
    std::int64_t k_burn = 0;
    std::int64_t thin = 1;
    std::vector<double> z0;
    std::uint64_t seed = 0;

    void validate(int dim) const {
        if (!(eta > 0.0 && eta <= 0.5))
            throw PreconditionViolation("eta must lie in (0, 0.5]");
        if (k_burn < 0 || k_burn >= k_total)
            throw PreconditionViolation("k_burn must satisfy 0 <= k_burn < k_total");
        if (thin < 1) throw PreconditionViolation("thin must be >= 1");
        if (z0.size() != static_cast<std::size_t>(dim))
            throw DimensionMismatch("z0 dimension does not match the problem");
    }
};

enum class Coordinates { Transformed, PulledBack };

/// A tagged, flat collection of d-dimensional samples.
struct SampleSet {
    int dim = 1;
    std::vector<double> samples;  // size n * dim, sample-major
    double eta = 0.0;
    int n_chains = 1;
    Coordinates coordinates = Coordinates::Transformed;
    std::uint64_t seed = 0;
    std::string problem_id;

    std::size_t size() const { return dim ? samples.size() / static_cast<std::size_t>(dim) : 0; }
    std::span<const double> sample(std::size_t i) const {
        return {samples.data() + i * static_cast<std::size_t>(dim),
                static_cast<std::size_t>(dim)};
    }
};

struct ChainTelemetry {
    double max_excursion = 0.0;
    std::uint64_t out_of_domain_hits = 0;
};

struct ChainResult {
    std::vector<double> final_state;
    std::vector<double> retained;  // flat, sample-major
    ChainTelemetry telemetry;
};

/// One EM update: z + eta bhat(z) + sqrt(eta) sigmahat(z) xi.
template <class Coeffs>
void em_step(const Coeffs& coeffs, std::span<const double> z, double eta,
             std::span<const double> xi, std::span<double> out, EvalStats* stats = nullptr) {
    const std::size_t d = z.size();
    std::vector<double> b(d), sig(d * d);
    coeffs.eval(z, b, sig, stats);
    const double sq = std::sqrt(eta);
    for (std::size_t m = 0; m < d; ++m) {
        double noise = 0.0;
        for (std::size_t k = 0; k < d; ++k) noise += sig[m * d + k] * xi[k];
        out[m] = z[m] + eta * b[m] + sq * noise;
        if (!std::isfinite(out[m])) throw NonFiniteState("EM step produced a non-finite state");
    }
}

/// Iterates em_step with noise keyed by (cfg.seed, step); retains every
/// thin-th state after the burn-in. excursion_limit converts runaway chains
/// into a loud failure.
template <class Coeffs>
ChainResult run_chain(const Coeffs& coeffs, const ChainConfig& cfg,
                      double excursion_limit = std::numeric_limits<double>::infinity()) {
    cfg.validate(coeffs.dim());
    const std::size_t d = static_cast<std::size_t>(coeffs.dim());
    ChainResult res;
    EvalStats stats;
    std::vector<double> z = cfg.z0, znext(d), xi(d), b(d), sig(d * d);
    const double sq = std::sqrt(cfg.eta);
    const std::int64_t retained_hint = (cfg.k_total - cfg.k_burn) / cfg.thin + 1;
    res.retained.reserve(static_cast<std::size_t>(retained_hint) * d);

    for (std::int64_t k = 0; k < cfg.k_total; ++k) {
        normal_vector(cfg.seed, /*stream=*/0, static_cast<std::uint64_t>(k), xi);
        coeffs.eval(z, b, sig, &stats);
        double r2 = 0.0;
        for (std::size_t m = 0; m < d; ++m) {
            double noise = 0.0;
            for (std::size_t j = 0; j < d; ++j) noise += sig[m * d + j] * xi[j];
            znext[m] = z[m] + cfg.eta * b[m] + sq * noise;
            if (!std::isfinite(znext[m]))
                throw NonFiniteState("non-finite state at step " + std::to_string(k + 1));
            r2 += znext[m] * znext[m];
        }
        z.swap(znext);
        const double r = std::sqrt(r2);
        res.telemetry.max_excursion = std::max(res.telemetry.max_excursion, r);
        if (r > excursion_limit)
            throw ExcursionGuard("excursion " + std::to_string(r) + " at step " +
                                 std::to_string(k + 1) + "; reduce eta");
        const std::int64_t kk = k + 1;
        if (kk > cfg.k_burn && (kk - cfg.k_burn) % cfg.thin == 0)
            res.retained.insert(res.retained.end(), z.begin(), z.end());
    }
    res.final_state = z;
    res.telemetry.out_of_domain_hits = stats.out_of_domain;
    return res;
}

struct EnsembleResult {
    SampleSet set;
    std::vector<std::size_t> chain_first_sample;  // per-chain offsets into set, plus end
    ChainTelemetry telemetry;                     // max over chains / summed hits
};

/// Runs n_chains independent chains with per-chain seeds derived from the
/// master seed; the result is a pure function of (base_cfg, n_chains,
/// master_seed) regardless of thread count.
template <class Coeffs>
EnsembleResult run_ensemble(const Coeffs& coeffs, const ChainConfig& base_cfg, int n_chains,
                            std::uint64_t master_seed, const std::string& problem_id = "",
                            double excursion_limit = std::numeric_limits<double>::infinity(),
                            int n_threads = 0) {
    if (n_chains < 1) throw PreconditionViolation("n_chains must be >= 1");
    std::vector<ChainResult> chains(static_cast<std::size_t>(n_chains));
    std::vector<std::string> failures(static_cast<std::size_t>(n_chains));
    parallel_for(static_cast<std::size_t>(n_chains),
                 [&](std::size_t c) {
                     ChainConfig cfg = base_cfg;
                     cfg.seed = derive_seed(master_seed, c);
                     try {
                         chains[c] = run_chain(coeffs, cfg, excursion_limit);
                     } catch (const Error& e) {
                         failures[c] = e.what();
                     }
                 },
                 n_threads);
    for (std::size_t c = 0; c < chains.size(); ++c)
        if (!failures[c].empty())
            throw NonFiniteState("chain " + std::to_string(c) + ": " + failures[c]);

    EnsembleResult out;
    out.set.dim = coeffs.dim();
    out.set.eta = base_cfg.eta;
    out.set.n_chains = n_chains;
    out.set.coordinates = Coordinates::Transformed;
    out.set.seed = master_seed;
    out.set.problem_id = problem_id;
    out.chain_first_sample.reserve(chains.size() + 1);
    for (const auto& ch : chains) {
        out.chain_first_sample.push_back(out.set.size());
        out.set.samples.insert(out.set.samples.end(), ch.retained.begin(), ch.retained.end());
        out.telemetry.max_excursion =
            std::max(out.telemetry.max_excursion, ch.telemetry.max_excursion);
        out.telemetry.out_of_domain_hits += ch.telemetry.out_of_domain_hits;
    }
    out.chain_first_sample.push_back(out.set.size());
    return out;
}

/// Maps every sample through Phi^{-1} and flips the coordinates tag.
inline SampleSet pull_back(const CorrectorField& field, const SampleSet& s, int n_threads = 0) {
    if (s.coordinates != Coordinates::Transformed)
        throw PreconditionViolation("pull_back expects transformed-coordinate samples");
    if (s.dim != field.grid.dim)
        throw DimensionMismatch("sample dimension does not match the corrector field");
    SampleSet out = s;
    out.coordinates = Coordinates::PulledBack;
    const std::size_t d = static_cast<std::size_t>(s.dim);
    const std::size_t n = s.size();
    std::atomic<std::size_t> first_fail{n};
    parallel_for(n,
                 [&](std::size_t i) {
                     try {
                         field.phi_inverse(s.sample(i),
                                           std::span<double>(out.samples.data() + i * d, d));
                     } catch (const Error&) {
                         std::size_t cur = first_fail.load();
                         while (i < cur && !first_fail.compare_exchange_weak(cur, i)) {
                         }
                     }
                 },
                 n_threads);
    if (first_fail.load() < n) {
        const std::size_t i = first_fail.load();
        try {
            std::vector<double> tmp(d);
            field.phi_inverse(s.sample(i), tmp);
        } catch (const Error& e) {
            throw NoConvergence("sample " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

/// Baseline EM on the original coefficients (b, sigma). Refused for Case 1,
/// where pointwise values of b1 are meaningless.
inline SampleSet naive_chain(const Problem& problem, const ChainConfig& cfg,
                             double excursion_limit = std::numeric_limits<double>::infinity()) {
    if (problem.case_tag == CaseTag::Case1LinfL1)
        throw Case1Unsupported("naive EM baseline is defined only for Case 2 problems");
    NaiveCoefficients coeffs(problem);
    ChainResult res = run_chain(coeffs, cfg, excursion_limit);
    SampleSet out;
    out.dim = problem.dim;
    out.samples = std::move(res.retained);
    out.eta = cfg.eta;
    out.n_chains = 1;
    out.coordinates = Coordinates::PulledBack;  // original coordinates
    out.seed = cfg.seed;
    out.problem_id = problem.id;
    return out;
}

// --- columnar text serialization (see README for the format) ---

inline void write_samples(const SampleSet& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", s.eta);
    out << "# dim=" << s.dim << " eta=" << buf << " seed=" << s.seed << " coordinates="
        << (s.coordinates == Coordinates::Transformed ? "transformed" : "pulled_back")
        << " n_chains=" << s.n_chains << " problem=" << s.problem_id << '\n';
    const std::size_t d = static_cast<std::size_t>(s.dim);
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", s.samples[i * d + k]);
            out << (k ? " " : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw IoFailure("write failed for '" + path + "'");
}

inline SampleSet read_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path + "' for reading");
    std::string header;
    std::getline(in, header);
    SampleSet s;
    auto field = [&](const std::string& key) -> std::string {
        const auto pos = header.find(key + "=");
        if (pos == std::string::npos) throw IoFailure("missing '" + key + "' in sample header");
        const auto start = pos + key.size() + 1;
        const auto end = header.find(' ', start);
        return header.substr(start, end == std::string::npos ? end : end - start);
    };
    s.dim = std::stoi(field("dim"));
    s.eta = std::stod(field("eta"));
    s.seed = std::stoull(field("seed"));
    s.n_chains = std::stoi(field("n_chains"));
    s.problem_id = field("problem");
    s.coordinates = field("coordinates") == "transformed" ? Coordinates::Transformed
                                                          : Coordinates::PulledBack;
    double v = 0.0;
    while (in >> v) s.samples.push_back(v);
    if (s.dim < 1 || s.samples.size() % static_cast<std::size_t>(s.dim) != 0)
        throw IoFailure("sample body does not match the declared dimension");
    return s;
}

}  // namespace zvonkin
