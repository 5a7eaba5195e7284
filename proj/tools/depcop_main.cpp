#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "CLI11.hpp"

#include "depcop/error.hpp"
#include "depcop/pipeline.hpp"

namespace {

void add_common(CLI::App* sub, depcop::RunConfig& cfg) {
    sub->add_option("--input", cfg.input, "CSV file, header row of variable names");
    sub->add_option("--m", cfg.m, "histogram resolution")->capture_default_str();
    sub->add_option("--lambda", cfg.lambda, "entropic strength (default 50 m^2)");
    sub->add_option("--tol", cfg.tol, "marginal tolerance")->capture_default_str();
    sub->add_option("--max-iter", cfg.max_iter, "iteration cap per solve")->capture_default_str();
    sub->add_option("--k", cfg.k, "number of clusters")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "seed for stochastic commands");
    sub->add_flag("--debias", cfg.debias, "use the Sinkhorn divergence");
    sub->add_option("--targets", cfg.targets, ".cop files scored 1 (query: the reference)");
    sub->add_option("--forgets", cfg.forgets, ".cop files scored 0");
    sub->add_option("--out", cfg.out, "output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Copula-based dependence exploration"};
    app.require_subcommand(1);
    depcop::RunConfig cfg;

    const struct {
        const char* name;
        const char* help;
    } commands[] = {
        {"copula", "write the empirical copula of every variable pair"},
        {"dist", "pairwise Sinkhorn distance matrix of all pair copulas"},
        {"cluster", "cluster pair copulas around Wasserstein barycenters"},
        {"tfdc", "target/forget dependence coefficient of every variable pair"},
        {"query", "rank pairs by distance to a target copula"},
        {"synth", "draw a synthetic sample"},
        {"power", "power of dependence tests on noisy patterns"},
        {"target", "write a reference copula"},
    };
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, cfg);
        const std::string name = c.name;
        if (name == "synth") {
            sub->add_option("--generator", cfg.generator,
                            "discontinuity, parabola, gaussian or a pattern name")
                ->capture_default_str();
            sub->add_option("--param", cfg.param, "a, offset, rho or noise level")->capture_default_str();
            sub->add_option("--samples", cfg.samples, "sample size")->capture_default_str();
        } else if (name == "power") {
            sub->add_option("--patterns", cfg.patterns, "patterns (default all)");
            sub->add_option("--noise", cfg.noise_levels, "noise levels (default 0, 0.1, ..., 3)");
            sub->add_option("--coefficients", cfg.coefficients, "pearson spearman dcor rdc tfdc (default all)");
            sub->add_option("--n-sims", cfg.n_sims, "replicates")->capture_default_str();
            sub->add_option("--sample-size", cfg.sample_size, "samples per replicate")->capture_default_str();
            sub->add_option("--reference-samples", cfg.reference_samples, "samples per target copula")
                ->capture_default_str();
        } else if (name == "target") {
            sub->add_option("--target", cfg.target, "M, W, Pi or gaussian")->capture_default_str();
            sub->add_option("--param", cfg.param, "rho for gaussian")->capture_default_str();
        }
        sub->callback([&cfg, name] { cfg.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        depcop::run_pipeline(cfg);
    } catch (const depcop::Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", std::string(depcop::to_string(e.kind())).c_str(), e.what());
        return depcop::exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error (io): %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
