#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "depcop/copula.hpp"
#include "depcop/error.hpp"
#include "depcop/transport.hpp"

namespace depcop {

struct RunConfig {
    /// copula, dist, cluster, tfdc, query, synth, power or target.
    std::string command;
    std::filesystem::path input;
    std::size_t m = kDefaultResolution;
    /// Defaults to 50 m^2.
    std::optional<double> lambda;
    double tol = 1e-6;
    std::size_t max_iter = 10000;
    std::size_t k = 5;
    std::optional<std::uint64_t> seed;
    bool debias = false;
    std::vector<std::filesystem::path> targets;
    std::vector<std::filesystem::path> forgets;
    std::filesystem::path out = ".";

    // synth: discontinuity (param = a), parabola (offset), gaussian (rho) or
    // a power pattern name (noise level).
    std::string generator = "discontinuity";
    double param = 0.0;
    std::size_t samples = 1000;

    // power
    std::vector<std::string> patterns;
    std::vector<double> noise_levels;
    std::vector<std::string> coefficients;
    std::size_t n_sims = 100;
    std::size_t sample_size = 200;
    std::size_t reference_samples = 100000;

    // target: M, W, Pi or gaussian (param = rho).
    std::string target = "M";

    SinkhornConfig sinkhorn() const;
    /// Range checks and required options of the chosen command.
    /// InvalidParameter on failure.
    void validate() const;
};

/// Runs one command and writes its artifacts plus run-meta.json into
/// cfg.out. Nothing is written until every result has been computed.
void run_pipeline(const RunConfig& cfg);

/// 2 for parse and configuration errors, 3 for convergence failures, 4 for
/// I/O errors.
int exit_code(ErrorKind kind);

}  // namespace depcop
