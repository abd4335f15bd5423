// SPDX-License-Identifier: Apache-2.0
//
// zvonkin-em: sample the invariant measure of an SDE with singular drift.
// Subcommands: run, solve-corrector, check, list-problems.
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "zvonkin/config.hpp"
#include "zvonkin/corrector.hpp"
#include "zvonkin/experiment.hpp"
#include "zvonkin/problem.hpp"

namespace {

// --config accepts a file path or a built-in preset name
zvonkin::ParsedConfig load_config(const std::string& source) {
    if (const auto* preset = zvonkin::find_preset(source))
        return zvonkin::parse_config_text(preset->config_text);
    return zvonkin::parse_config_file(source);
}

int cmd_run(const std::string& config, const std::string& out_dir, long long seed,
            bool seed_set) {
    zvonkin::ExperimentConfig cfg =
        zvonkin::experiment_from_config(load_config(config), config);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) cfg.master_seed = static_cast<std::uint64_t>(seed);
    cfg.validate();

    const zvonkin::ExperimentResult result = zvonkin::run_experiment(cfg);
    std::cout << "problem " << result.problem_id << " (" << result.case_name << ")\n";
    std::cout << "  lambda = " << result.lambda << ", sup|grad u| = " << result.sup_grad_u
              << "\n";
    for (const auto& sch : result.schemes) {
        std::cout << "  scheme " << sch.scheme << ":\n";
        for (const auto& r : sch.rows)
            std::printf("    eta=%-12.6g w1=%-12.6g floor=%-12.6g n=%zu\n", r.eta, r.w1,
                        r.floor, r.n_samples);
        if (sch.fit_pure)
            std::printf("    fitted exponent %.4f  (ci [%.4f, %.4f], residual %.3g)\n",
                        sch.fit_pure->exponent, sch.fit_pure->ci_lo, sch.fit_pure->ci_hi,
                        sch.fit_pure->residual_rms);
        if (!sch.fit_note.empty()) std::cout << "    fit: " << sch.fit_note << "\n";
    }
    const auto paths = zvonkin::OutputPaths::in_dir(cfg.out_dir);
    std::cout << "wrote " << paths.csv << ", " << paths.svg << ", " << paths.summary << "\n";
    return 0;
}

int cmd_solve_corrector(const std::string& config, const std::string& cache) {
    zvonkin::ExperimentConfig cfg =
        zvonkin::experiment_from_config(load_config(config), config);
    const zvonkin::Problem problem = zvonkin::make_problem(cfg.problem);
    const zvonkin::Grid grid(problem.dim, cfg.grid_radius, cfg.resolved_n_per_axis());
    const zvonkin::LambdaSelection sel =
        zvonkin::select_lambda(problem, grid, cfg.grad_target, cfg.lambda0);
    zvonkin::save_corrector(sel.field, cache);
    std::cout << "lambda = " << sel.lambda << ", sup|u| = " << sel.field.sup_u
              << ", sup|grad u| = " << sel.field.sup_grad_u << "\n";
    std::cout << "wrote " << cache << "\n";
    return 0;
}

int cmd_check(const std::string& config) {
    zvonkin::ExperimentConfig cfg =
        zvonkin::experiment_from_config(load_config(config), config);
    const zvonkin::Problem problem = zvonkin::make_problem(cfg.problem);
    const auto dis = zvonkin::check_dissipativity(problem, 10000, 10.0, 11);
    const auto lip = zvonkin::check_lipschitz_b2(problem, 10000, 10.0, 12);
    const auto ell = zvonkin::check_ellipticity(problem, 10000, 10.0, 13);
    std::printf("problem %s (%s), dim %d\n", problem.id.c_str(),
                zvonkin::case_name(problem.case_tag), problem.dim);
    std::printf("dissipativity: max <x,b2(x)> + theta1|x|^2 - theta2 = %.6g  [%s]\n",
                dis.max_violation, dis.pass() ? "ok" : "VIOLATED");
    std::printf("lipschitz b2 : estimate %.6g vs theta3 = %.6g  [%s]\n", lip.estimate,
                problem.theta3, lip.exceeds_theta3 ? "EXCEEDED" : "ok");
    std::printf("ellipticity  : eigenvalues of sigma sigma' in [%.6g, %.6g], "
                "required [%.6g, %.6g]  [%s]\n",
                ell.min_eig, ell.max_eig, problem.lambda_sigma, 1.0 / problem.lambda_sigma,
                ell.pass ? "ok" : "VIOLATED");
    const bool all_ok = dis.pass() && !lip.exceeds_theta3 && ell.pass;
    return all_ok ? 0 : 1;
}

int cmd_list_problems() {
    for (const auto& p : zvonkin::builtin_problems())
        std::printf("%-16s %s\n", p.name.c_str(), p.description.c_str());
    std::printf("\nfunction kinds: linear, holder_sine, bump, constant_matrix, "
                "diagonal_sine_matrix, composite\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Invariant-measure sampling for SDEs with singular drift"};
    app.require_subcommand(1);

    std::string config, out_dir, cache;
    long long seed = 0;

    auto* run = app.add_subcommand("run", "run a full experiment");
    run->add_option("--config", config, "config file or preset name")->required();
    run->add_option("--out", out_dir, "output directory (default from config)");
    auto* seed_opt = run->add_option("--seed", seed, "override the master seed");

    auto* solve = app.add_subcommand("solve-corrector", "solve and cache the corrector field");
    solve->add_option("--config", config, "config file or preset name")->required();
    solve->add_option("--cache", cache, "cache file to write")->required();

    auto* check = app.add_subcommand("check", "print assumption reports only");
    check->add_option("--config", config, "config file or preset name")->required();

    app.add_subcommand("list-problems", "list built-in problem presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) return cmd_run(config, out_dir, seed, seed_opt->count() > 0);
        if (solve->parsed()) return cmd_solve_corrector(config, cache);
        if (check->parsed()) return cmd_check(config);
        return cmd_list_problems();
    } catch (const zvonkin::ConfigError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const zvonkin::InvalidConstant& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const zvonkin::UnknownKind& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const zvonkin::DimensionMismatch& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const zvonkin::PreconditionViolation& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const zvonkin::Error& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
