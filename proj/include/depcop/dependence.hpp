#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "depcop/copula.hpp"
#include "depcop/transport.hpp"

namespace depcop {

/// Target copulas (score 1) and forget copulas (score 0) of a TFDC query.
struct TFDCSpec {
    std::vector<CopulaHistogram> targets;
    std::vector<CopulaHistogram> forgets;
    GroundCost cost{kDefaultResolution};
    SinkhornConfig cfg = SinkhornConfig::for_resolution(kDefaultResolution);
    /// Sinkhorn divergence instead of the raw dual-Sinkhorn value.
    bool debias = false;

    /// Non-empty sets sharing the cost's resolution, valid cfg.
    void validate() const;
};

/// Target/Forget Dependence Coefficient
///
///   d_f / (d_f + d_t),  d_f = min_l d(forget_l, c),  d_t = min_k d(c, target_k).
///
/// A histogram bit-equal to a forget copula scores exactly 0 and one bit-equal
/// to a target exactly 1. Throws AmbiguousSpec when c belongs to both sets or
/// both distances vanish, InvalidData on a resolution mismatch.
double tfdc(const CopulaHistogram& c, const TFDCSpec& spec);

/// Product-moment correlation. DegenerateColumn for a constant input.
double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of average-tie ranks.
double spearman(std::span<const double> x, std::span<const double> y);

/// Distance correlation (V-statistic on doubly centered |x_s - x_t|), in
/// [0, 1]. Quadratic time, linear memory. Needs at least 4 samples.
double distance_correlation(std::span<const double> x, std::span<const double> y);

struct RdcOptions {
    std::size_t k = 20;
    double s = 1.0 / 6.0;
    std::uint64_t seed = 0;
};

/// Randomized dependence coefficient: the largest canonical correlation
/// between k random sinusoidal features of each rank-transformed input. The
/// projections of [u, 1] have N(0, (s/2)^2) weights; even features use sin,
/// odd ones cos. Needs more than k samples.
double rdc(std::span<const double> x, std::span<const double> y, const RdcOptions& options = {});

}  // namespace depcop
