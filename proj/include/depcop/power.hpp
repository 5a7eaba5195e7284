#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "depcop/dependence.hpp"
#include "depcop/synth.hpp"

namespace depcop {

enum class Coefficient { Pearson, Spearman, DistanceCorrelation, Rdc, Tfdc };

std::string_view to_string(Coefficient c);
/// "pearson", "spearman", "dcor", "rdc", "tfdc". InvalidParameter otherwise.
Coefficient parse_coefficient(std::string_view name);

struct PowerSettings {
    std::size_t n_sims = 100;
    std::size_t sample_size = 200;
    std::uint64_t seed = 0;
    RdcOptions rdc;
    /// Required for Coefficient::Tfdc; copulas are binned at its resolution.
    const TFDCSpec* tfdc = nullptr;
    /// Draw the alternative datasets under independence as well, which turns
    /// the estimate into the size of the test.
    bool calibration = false;
};

struct PowerResult {
    PowerPattern pattern = PowerPattern::Linear;
    double noise_level = 0.0;
    Coefficient coefficient = Coefficient::Pearson;
    double power = 0.0;
    std::size_t n_sims = 0;
    std::size_t sample_size = 0;
    /// 95th percentile of the statistic under independence.
    double threshold = 0.0;
    std::uint64_t seed = 0;
    /// Replicates whose statistic could not be computed. Failed alternatives
    /// count as non-rejections; failed null replicates are left out of the
    /// threshold.
    std::size_t failures = 0;
};

/// Statistic used for the test: |pearson|, |spearman|, dcor, rdc or tfdc.
double dependence_statistic(Coefficient c, std::span<const double> x, std::span<const double> y,
                            const PowerSettings& settings, std::uint64_t replicate_seed);

/// Replicate r draws its alternative from gen_power_pattern with seed
/// derive_seed(seed, 2r) and its null from an independent draw (seed
/// derive_seed(seed, 2r + 1)) whose y is randomly permuted. The threshold is
/// the order statistic at rank ceil(0.95 n) of the null values; power is the
/// fraction of alternatives strictly above it. Datasets depend only on the
/// seed and replicate index, so coefficients compared at one seed see the
/// same data.
PowerResult estimate_power(PowerPattern pattern, double noise_level, Coefficient coefficient,
                           const PowerSettings& settings);

/// Targets: the eight noise-free patterns binned at resolution m from T_ref
/// samples each. Forgets: the independence copula.
TFDCSpec tfdc_power_targets(std::size_t m, std::size_t T_ref, std::uint64_t seed);

}  // namespace depcop
