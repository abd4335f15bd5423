// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end experiments: assumption certificates, corrector solve with
// lambda selection, EM ensembles over the eta grid, pull-back, W1 metrics
// with a split-half statistical floor, drift probes, and rate fits. Every
// stage draws from counters keyed on the master seed, so a config determines
// the CSV byte for byte at any thread count.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zvonkin/config.hpp"
#include "zvonkin/corrector.hpp"
#include "zvonkin/metrics.hpp"
#include "zvonkin/problem.hpp"
#include "zvonkin/ratefit.hpp"
#include "zvonkin/reference.hpp"
#include "zvonkin/sampler.hpp"
#include "zvonkin/transformed.hpp"

namespace zvonkin {

struct MetricRow {
    std::string problem;
    std::string case_name;
    double eta = 0.0;
    std::size_t n_samples = 0;
    double w1 = 0.0;
    double w1_ci = 0.0;
    double floor = 0.0;
    double moment2 = 0.0;
    double moment6 = 0.0;
    double lambda = 0.0;
    double sup_grad_u = 0.0;
    std::uint64_t seed = 0;
    // telemetry, written to the summary only (the CSV schema is pinned)
    double max_excursion = 0.0;
    std::uint64_t out_of_domain_hits = 0;
};

inline constexpr const char* kCsvHeader =
    "problem,case,eta,n_samples,w1,w1_ci,floor,moment2,moment6,lambda,sup_grad_u,seed";

struct SchemeResult {
    std::string scheme;  // "transformed" or "naive"
    std::vector<MetricRow> rows;
    std::optional<RateFit> fit_pure;
    std::optional<RateFit> fit_powerlog;
    std::string fit_note;  // reason when a fit is unavailable
};

struct DriftProbeSummary {
    double eta = 0.0;
    double theta1_hat = 0.0;
    double c3 = 0.0;
    int violations = 0;
};

struct ExperimentResult {
    std::string problem_id;
    std::string case_name;
    double gamma_target = 0.9;
    double alpha = 0.0;
    DissipativityReport dissipativity;
    LipschitzReport lipschitz;
    EllipticityReport ellipticity;
    double lambda = 0.0;
    double sup_u = 0.0;
    double sup_grad_u = 0.0;
    std::vector<SchemeResult> schemes;
    std::vector<DriftProbeSummary> drift;
    double pinned_alpha_half_residual = 0.0;  // Case 2 comparison
    std::uint64_t master_seed = 0;
    std::vector<double> eta_grid;
    std::string warning;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Gathers the samples of the given chains (with repetition) into one array.
inline std::vector<double> gather_chains(const SampleSet& set,
                                         const std::vector<std::size_t>& offsets,
                                         const std::vector<std::size_t>& chain_ids) {
    std::vector<double> out;
    for (std::size_t c : chain_ids) {
        const std::size_t lo = offsets[c] * static_cast<std::size_t>(set.dim);
        const std::size_t hi = offsets[c + 1] * static_cast<std::size_t>(set.dim);
        out.insert(out.end(), set.samples.begin() + lo, set.samples.begin() + hi);
    }
    return out;
}

inline SampleSet slice_chains(const SampleSet& set, const std::vector<std::size_t>& offsets,
                              std::size_t first_chain, std::size_t last_chain) {
    SampleSet out = set;
    const std::size_t d = static_cast<std::size_t>(set.dim);
    out.samples.assign(set.samples.begin() + offsets[first_chain] * d,
                       set.samples.begin() + offsets[last_chain] * d);
    out.n_chains = static_cast<int>(last_chain - first_chain);
    return out;
}

}  // namespace detail

struct OutputPaths {
    std::string csv;
    std::string svg;
    std::string summary;
    static OutputPaths in_dir(const std::string& dir) {
        return {dir + "/results.csv", dir + "/plot.svg", dir + "/summary.json"};
    }
};

inline void write_metric_csv(const std::vector<MetricRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    out << kCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.problem << ',' << r.case_name << ',' << detail::fmt_double(r.eta) << ','
            << r.n_samples << ',' << detail::fmt_double(r.w1) << ','
            << detail::fmt_double(r.w1_ci) << ',' << detail::fmt_double(r.floor) << ','
            << detail::fmt_double(r.moment2) << ',' << detail::fmt_double(r.moment6) << ','
            << detail::fmt_double(r.lambda) << ',' << detail::fmt_double(r.sup_grad_u) << ','
            << r.seed << '\n';
    }
    if (!out) throw IoFailure("write failed for '" + path + "'");
}

inline std::vector<MetricRow> parse_metric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        throw IoFailure("unexpected CSV header in '" + path + "'");
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (;;) {
            const auto pos = line.find(',', start);
            f.push_back(line.substr(start, pos == std::string::npos ? pos : pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (f.size() != 12) throw IoFailure("bad CSV row: " + line);
        MetricRow r;
        r.problem = f[0];
        r.case_name = f[1];
        r.eta = std::stod(f[2]);
        r.n_samples = std::stoull(f[3]);
        r.w1 = std::stod(f[4]);
        r.w1_ci = std::stod(f[5]);
        r.floor = std::stod(f[6]);
        r.moment2 = std::stod(f[7]);
        r.moment6 = std::stod(f[8]);
        r.lambda = std::stod(f[9]);
        r.sup_grad_u = std::stod(f[10]);
        r.seed = std::stoull(f[11]);
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Self-contained log-log SVG plot of w1 against eta with fitted lines.
inline void write_loglog_svg(const ExperimentResult& result, const std::string& path) {
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
    for (const auto& sch : result.schemes) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : sch.rows)
            if (r.w1 > 0.0) pts.emplace_back(r.eta, r.w1);
        if (!pts.empty()) series.emplace_back(sch.scheme, std::move(pts));
    }
    if (series.empty()) return;  // nothing to plot

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& [name, pts] : series)
        for (const auto& [x, y] : pts) {
            xmin = std::min(xmin, std::log10(x));
            xmax = std::max(xmax, std::log10(x));
            ymin = std::min(ymin, std::log10(y));
            ymax = std::max(ymax, std::log10(y));
        }
    if (xmax - xmin < 1e-9) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-9) ymax = ymin + 1.0;
    const double W = 640, H = 480, L = 70, R = 20, T = 30, B = 50;
    auto px = [&](double lx) { return L + (lx - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double ly) { return H - B - (ly - ymin) / (ymax - ymin) * (H - T - B); };

    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' viewBox='0 0 " << W << ' ' << H << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << W / 2 << "' y='18' text-anchor='middle' font-size='14'>"
        << result.problem_id << ": W1 error vs step size</text>\n";
    out << "<rect x='" << L << "' y='" << T << "' width='" << W - L - R << "' height='"
        << H - T - B << "' fill='none' stroke='black'/>\n";
    // decade ticks
    for (int e = static_cast<int>(std::floor(xmin)); e <= static_cast<int>(std::ceil(xmax));
         ++e) {
        if (e < xmin - 1e-9 || e > xmax + 1e-9) continue;
        out << "<line x1='" << px(e) << "' y1='" << H - B << "' x2='" << px(e) << "' y2='"
            << H - B + 5 << "' stroke='black'/>\n";
        out << "<text x='" << px(e) << "' y='" << H - B + 20
            << "' text-anchor='middle' font-size='11'>1e" << e << "</text>\n";
    }
    for (int e = static_cast<int>(std::floor(ymin)); e <= static_cast<int>(std::ceil(ymax));
         ++e) {
        if (e < ymin - 1e-9 || e > ymax + 1e-9) continue;
        out << "<line x1='" << L - 5 << "' y1='" << py(e) << "' x2='" << L << "' y2='" << py(e)
            << "' stroke='black'/>\n";
        out << "<text x='" << L - 8 << "' y='" << py(e) + 4
            << "' text-anchor='end' font-size='11'>1e" << e << "</text>\n";
    }
    out << "<text x='" << (L + W - R) / 2 << "' y='" << H - 10
        << "' text-anchor='middle' font-size='12'>eta</text>\n";
    out << "<text x='16' y='" << (T + H - B) / 2
        << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
        << (T + H - B) / 2 << ")'>W1</text>\n";

    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    int si = 0;
    for (const auto& [name, pts] : series) {
        const char* col = colors[si % 4];
        out << "<polyline fill='none' stroke='" << col << "' stroke-width='1.5' points='";
        for (const auto& [x, y] : pts) out << px(std::log10(x)) << ',' << py(std::log10(y)) << ' ';
        out << "'/>\n";
        for (const auto& [x, y] : pts)
            out << "<circle cx='" << px(std::log10(x)) << "' cy='" << py(std::log10(y))
                << "' r='3.5' fill='" << col << "'/>\n";
        // fitted line over the span of the used points, when available
        const SchemeResult* sch = nullptr;
        for (const auto& s : result.schemes)
            if (s.scheme == name) sch = &s;
        if (sch && sch->fit_pure) {
            const RateFit& fit = *sch->fit_pure;
            const double lx0 = std::log(fit.points_used.back().eta);
            const double lx1 = std::log(fit.points_used.front().eta);
            auto fy = [&](double lx) { return fit.log_constant + fit.exponent * lx; };
            constexpr double ln10 = 2.302585092994046;
            out << "<line x1='" << px(lx0 / ln10) << "' y1='" << py(fy(lx0) / ln10) << "' x2='"
                << px(lx1 / ln10) << "' y2='" << py(fy(lx1) / ln10) << "' stroke='" << col
                << "' stroke-dasharray='6 4'/>\n";
        }
        out << "<text x='" << W - R - 10 << "' y='" << T + 20 + 16 * si
            << "' text-anchor='end' font-size='12' fill='" << col << "'>" << name
            << "</text>\n";
        ++si;
    }
    out << "</svg>\n";
    if (!out) throw IoFailure("write failed for '" + path + "'");
}

/// Writes CSV + plot + machine-readable summary for a finished experiment.
inline void emit_report(const ExperimentResult& result, const OutputPaths& paths) {
    std::vector<MetricRow> all_rows;
    for (const auto& sch : result.schemes)
        all_rows.insert(all_rows.end(), sch.rows.begin(), sch.rows.end());
    write_metric_csv(all_rows, paths.csv);
    if (!all_rows.empty()) write_loglog_svg(result, paths.svg);

    nlohmann::json j;
    j["problem"] = result.problem_id;
    j["case"] = result.case_name;
    j["master_seed"] = result.master_seed;
    j["eta_grid"] = result.eta_grid;
    j["gamma_target"] = result.gamma_target;
    if (result.case_name == "case2") j["alpha"] = result.alpha;
    j["assumptions"] = {
        {"dissipativity_max_violation", result.dissipativity.max_violation},
        {"dissipativity_pass", result.dissipativity.pass()},
        {"lipschitz_estimate", result.lipschitz.estimate},
        {"lipschitz_exceeds_theta3", result.lipschitz.exceeds_theta3},
        {"ellipticity_min_eig", result.ellipticity.min_eig},
        {"ellipticity_max_eig", result.ellipticity.max_eig},
        {"ellipticity_pass", result.ellipticity.pass},
    };
    j["corrector"] = {{"lambda", result.lambda},
                      {"sup_u", result.sup_u},
                      {"sup_grad_u", result.sup_grad_u}};
    if (!result.warning.empty()) j["warning"] = result.warning;
    if (all_rows.empty()) j["warning"] = "empty eta grid: no metric rows, no plot";

    auto fit_json = [](const RateFit& f) {
        nlohmann::json fj;
        fj["model"] = rate_model_name(f.model);
        fj["exponent"] = f.exponent;
        fj["log_constant"] = f.log_constant;
        fj["residual_rms"] = f.residual_rms;
        fj["ci"] = {f.ci_lo, f.ci_hi};
        fj["points_used"] = f.points_used.size();
        fj["points_dropped"] = f.points_dropped.size();
        return fj;
    };
    for (const auto& sch : result.schemes) {
        nlohmann::json sj;
        sj["scheme"] = sch.scheme;
        sj["rows"] = nlohmann::json::array();
        for (const auto& r : sch.rows)
            sj["rows"].push_back({{"eta", r.eta},
                                  {"n_samples", r.n_samples},
                                  {"w1", r.w1},
                                  {"w1_ci", r.w1_ci},
                                  {"floor", r.floor},
                                  {"moment2", r.moment2},
                                  {"moment6", r.moment6},
                                  {"max_excursion", r.max_excursion},
                                  {"out_of_domain_hits", r.out_of_domain_hits}});
        if (sch.fit_pure) sj["fit_pure_power"] = fit_json(*sch.fit_pure);
        if (sch.fit_powerlog) sj["fit_power_log"] = fit_json(*sch.fit_powerlog);
        if (!sch.fit_note.empty()) sj["fit_note"] = sch.fit_note;
        // worst-case error budgets for the target accuracy, plus what was observed
        if (sch.fit_pure && !sch.rows.empty()) {
            const MetricRow& finest = sch.rows.back();
            const double eps = finest.w1;
            const double eta_theory =
                (result.case_name == "case1")
                    ? std::pow(eps, 2.0 / result.gamma_target)
                    : std::pow(eps, 8.0 / 3.0);
            sj["budget"] = {{"epsilon", eps},
                            {"eta_theoretical", eta_theory},
                            {"eta_empirical", finest.eta}};
        }
        j["schemes"].push_back(sj);
    }
    if (result.case_name == "case2" && result.pinned_alpha_half_residual > 0.0)
        j["pinned_alpha_half_residual"] = result.pinned_alpha_half_residual;
    j["drift_probes"] = nlohmann::json::array();
    for (const auto& d : result.drift)
        j["drift_probes"].push_back({{"eta", d.eta},
                                     {"theta1_hat", d.theta1_hat},
                                     {"c3", d.c3},
                                     {"violations", d.violations}});

    std::ofstream out(paths.summary);
    if (!out) throw IoFailure("cannot open '" + paths.summary + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoFailure("write failed for '" + paths.summary + "'");
}

namespace detail {

template <class Fn>
auto stage(const std::string& name, double eta, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        std::string where = "stage=" + name;
        if (eta > 0.0) where += " eta=" + fmt_double(eta);
        throw Error(where + ": " + e.what());
    }
}

}  // namespace detail

/// Runs the full pipeline for one experiment configuration. Deterministic
/// given cfg (master_seed included), independent of thread count.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, bool emit = true,
                                       int n_threads = 0) {
    cfg.validate();
    const Problem problem = make_problem(cfg.problem);

    ExperimentResult result;
    result.problem_id = problem.id;
    result.case_name = case_name(problem.case_tag);
    result.gamma_target = cfg.gamma_target;
    result.alpha = problem.alpha;
    result.master_seed = cfg.master_seed;
    result.eta_grid = cfg.eta_grid;

    // 1) assumption certificates
    detail::stage("assumptions", 0.0, [&] {
        result.dissipativity =
            check_dissipativity(problem, 10000, 10.0, derive_seed(cfg.master_seed, 11));
        result.lipschitz =
            check_lipschitz_b2(problem, 10000, 10.0, derive_seed(cfg.master_seed, 12));
        result.ellipticity =
            check_ellipticity(problem, 10000, 10.0, derive_seed(cfg.master_seed, 13));
        return 0;
    });

    // 2) corrector + lambda selection
    const Grid grid(problem.dim, cfg.grid_radius, cfg.resolved_n_per_axis());
    LambdaSelection sel = detail::stage("corrector", 0.0, [&] {
        return select_lambda(problem, grid, cfg.grad_target, cfg.lambda0);
    });
    result.lambda = sel.lambda;
    result.sup_u = sel.field.sup_u;
    result.sup_grad_u = sel.field.sup_grad_u;
    const TransformedCoefficients tc = make_transformed(problem, std::move(sel.field));
    const CorrectorField& field = tc.field();

    std::optional<ReferenceMeasure> ref;
    if (cfg.use_reference)
        detail::stage("reference", 0.0, [&] {
            ref = gibbs_reference_1d(problem, cfg.r_ref, cfg.ref_n_grid);
            return 0;
        });

    const std::vector<double> origin(problem.dim, 0.0);
    std::vector<double> z0_transformed(problem.dim, 0.0);
    field.phi(origin, z0_transformed);
    const double excursion_limit = 10.0 * grid.radius;

    SchemeResult transformed;
    transformed.scheme = "transformed";
    SchemeResult naive;
    naive.scheme = "naive";

    struct EtaData {
        SampleSet pulled;                          // transformed scheme, original coords
        std::vector<std::size_t> chain_offsets;   // into pulled
        SampleSet naive_set;                      // baseline, original coords
        std::vector<std::size_t> naive_offsets;
    };
    std::vector<EtaData> per_eta(cfg.eta_grid.size());

    for (std::size_t ei = 0; ei < cfg.eta_grid.size(); ++ei) {
        const double eta = cfg.eta_grid[ei];
        ChainConfig ccfg;
        ccfg.eta = eta;
        ccfg.k_total = static_cast<std::int64_t>(std::ceil(cfg.t_run / eta));
        ccfg.k_burn = static_cast<std::int64_t>(std::ceil(cfg.t_burn / eta));
        ccfg.thin = std::max<std::int64_t>(1, static_cast<std::int64_t>(cfg.thin_dt / eta));
        ccfg.z0 = z0_transformed;

        EnsembleResult ens = detail::stage("ensemble", eta, [&] {
            return run_ensemble(tc, ccfg, cfg.chains, derive_seed(cfg.master_seed, 1000 + ei),
                                problem.id, excursion_limit, n_threads);
        });
        per_eta[ei].pulled = detail::stage("pull_back", eta, [&] {
            return pull_back(field, ens.set, n_threads);
        });
        per_eta[ei].chain_offsets = ens.chain_first_sample;

        MetricRow row;
        row.problem = problem.id;
        row.case_name = result.case_name;
        row.eta = eta;
        row.seed = cfg.master_seed;
        row.lambda = result.lambda;
        row.sup_grad_u = result.sup_grad_u;
        row.n_samples = per_eta[ei].pulled.size();
        row.moment2 = empirical_moment(ens.set, 2);
        row.moment6 = empirical_moment(ens.set, 6);
        row.max_excursion = ens.telemetry.max_excursion;
        row.out_of_domain_hits = ens.telemetry.out_of_domain_hits;
        detail::stage("metrics", eta, [&] {
            const auto& off = per_eta[ei].chain_offsets;
            const std::size_t half = static_cast<std::size_t>(cfg.chains) / 2;
            if (cfg.use_reference) {
                const W1Result w = w1_to_reference_1d(per_eta[ei].pulled, *ref,
                                                      cfg.bootstrap_resamples,
                                                      derive_seed(cfg.master_seed, 3000 + ei),
                                                      n_threads);
                row.w1 = w.value;
                row.w1_ci = w.ci_half_width;
                if (cfg.chains >= 2) {
                    const SampleSet a = detail::slice_chains(per_eta[ei].pulled, off, 0, half);
                    const SampleSet b = detail::slice_chains(per_eta[ei].pulled, off, half,
                                                             off.size() - 1);
                    row.floor = w1_exact_1d(a, b).value;
                }
            } else if (cfg.chains >= 2) {
                const SampleSet a = detail::slice_chains(per_eta[ei].pulled, off, 0, half);
                const SampleSet b =
                    detail::slice_chains(per_eta[ei].pulled, off, half, off.size() - 1);
                const W1Result w =
                    sliced_w1(a, b, 64, derive_seed(cfg.master_seed, 3500 + ei));
                row.w1 = w.value;
                row.floor = w.value;  // self-distance is the floor itself
            }
            return 0;
        });
        transformed.rows.push_back(row);

        DriftReport drep = detail::stage("drift_probe", eta, [&] {
            std::vector<std::vector<double>> probes;
            for (int r = 0; r <= 8; ++r) {
                std::vector<double> p(problem.dim, 0.0);
                p[0] = static_cast<double>(r);
                probes.push_back(std::move(p));
            }
            return lyapunov_drift_probe(tc, probes, eta, cfg.drift_probe_draws,
                                        derive_seed(cfg.master_seed, 5000 + ei));
        });
        result.drift.push_back(
            {eta, drep.fitted_theta1_hat, drep.fitted_c3, drep.violations});

        if (cfg.baseline) {
            ChainConfig ncfg = ccfg;
            ncfg.z0.assign(problem.dim, 0.0);
            NaiveCoefficients ncoef(problem);
            EnsembleResult nens = detail::stage("naive_ensemble", eta, [&] {
                return run_ensemble(ncoef, ncfg, cfg.chains,
                                    derive_seed(cfg.master_seed, 2000 + ei), problem.id,
                                    excursion_limit, n_threads);
            });
            nens.set.coordinates = Coordinates::PulledBack;  // original coordinates
            per_eta[ei].naive_set = nens.set;
            per_eta[ei].naive_offsets = nens.chain_first_sample;

            MetricRow nrow;
            nrow.problem = problem.id + ":naive";
            nrow.case_name = result.case_name;
            nrow.eta = eta;
            nrow.seed = cfg.master_seed;
            nrow.n_samples = nens.set.size();
            nrow.moment2 = empirical_moment(nens.set, 2);
            nrow.moment6 = empirical_moment(nens.set, 6);
            nrow.max_excursion = nens.telemetry.max_excursion;
            detail::stage("naive_metrics", eta, [&] {
                if (cfg.use_reference) {
                    const W1Result w = w1_to_reference_1d(
                        nens.set, *ref, cfg.bootstrap_resamples,
                        derive_seed(cfg.master_seed, 4000 + ei), n_threads);
                    nrow.w1 = w.value;
                    nrow.w1_ci = w.ci_half_width;
                    if (cfg.chains >= 2) {
                        const auto& noff = per_eta[ei].naive_offsets;
                        const std::size_t half = static_cast<std::size_t>(cfg.chains) / 2;
                        const SampleSet a = detail::slice_chains(nens.set, noff, 0, half);
                        const SampleSet b =
                            detail::slice_chains(nens.set, noff, half, noff.size() - 1);
                        nrow.floor = w1_exact_1d(a, b).value;
                    }
                }
                return 0;
            });
            naive.rows.push_back(nrow);
        }
    }

    // 4) rate fits with chain-replicate bootstrap
    auto fit_scheme = [&](SchemeResult& sch, bool is_naive) {
        if (!cfg.use_reference) {
            sch.fit_note = "no exact reference: quantitative fits skipped";
            return;
        }
        std::vector<RatePoint> pts;
        for (const auto& r : sch.rows) pts.push_back({r.eta, r.w1, r.floor});
        try {
            RateFit pure = fit_rate(pts, RateModel::PurePower);
            RateFit plog = fit_rate(pts, RateModel::PowerLog);
            const int B = cfg.bootstrap_resamples;
            if (B > 0 && cfg.chains >= 2) {
                std::vector<double> exps_pure(static_cast<std::size_t>(B));
                std::vector<double> exps_plog(static_cast<std::size_t>(B));
                std::vector<char> ok(static_cast<std::size_t>(B), 0);
                parallel_for(
                    static_cast<std::size_t>(B),
                    [&](std::size_t bi) {
                        const std::uint64_t bseed =
                            derive_seed(cfg.master_seed, (is_naive ? 7000 : 6000) + bi);
                        std::vector<RatePoint> bpts;
                        for (std::size_t ei = 0; ei < cfg.eta_grid.size(); ++ei) {
                            const SampleSet& base =
                                is_naive ? per_eta[ei].naive_set : per_eta[ei].pulled;
                            const auto& off = is_naive ? per_eta[ei].naive_offsets
                                                       : per_eta[ei].chain_offsets;
                            std::vector<std::size_t> ids(
                                static_cast<std::size_t>(cfg.chains));
                            for (std::size_t c = 0; c < ids.size(); ++c)
                                ids[c] = uniform_index(bseed, 3,
                                                       ei * ids.size() + c, ids.size());
                            std::vector<double> pool =
                                detail::gather_chains(base, off, ids);
                            std::sort(pool.begin(), pool.end());
                            const double w1 = detail::w1_quantile_integral(pool, *ref);
                            bpts.push_back(
                                {cfg.eta_grid[ei], w1, sch.rows[ei].floor});
                        }
                        try {
                            exps_pure[bi] = fit_rate(bpts, RateModel::PurePower).exponent;
                            exps_plog[bi] = fit_rate(bpts, RateModel::PowerLog).exponent;
                            ok[bi] = 1;
                        } catch (const Error&) {
                            ok[bi] = 0;
                        }
                    },
                    n_threads);
                std::vector<double> ep, el;
                for (std::size_t bi = 0; bi < ok.size(); ++bi)
                    if (ok[bi]) {
                        ep.push_back(exps_pure[bi]);
                        el.push_back(exps_plog[bi]);
                    }
                attach_bootstrap_ci(pure, std::move(ep));
                attach_bootstrap_ci(plog, std::move(el));
            }
            sch.fit_pure = std::move(pure);
            sch.fit_powerlog = std::move(plog);
        } catch (const Error& e) {
            sch.fit_note = e.what();
        }
        if (!is_naive && problem.case_tag == CaseTag::Case2HolderAlpha) {
            try {
                result.pinned_alpha_half_residual =
                    pinned_power_residual(pts, problem.alpha / 2.0);
            } catch (const Error&) {
            }
        }
    };
    fit_scheme(transformed, false);
    result.schemes.push_back(std::move(transformed));
    if (cfg.baseline) {
        fit_scheme(naive, true);
        result.schemes.push_back(std::move(naive));
    }

    if (emit) {
        std::filesystem::create_directories(cfg.out_dir);
        emit_report(result, OutputPaths::in_dir(cfg.out_dir));
    }
    return result;
}

}  // namespace zvonkin
