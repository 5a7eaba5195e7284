#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "depcop/copula.hpp"
#include "depcop/transport.hpp"

namespace depcop {

/// Largest |supp r| + |supp c| accepted by exact_ot.
inline constexpr std::size_t kExactOtMaxSupport = 4096;

struct Shipment {
    std::size_t from;  // source cell
    std::size_t to;    // destination cell
    double mass;
};

struct ExactTransport {
    double value = 0.0;
    /// Nonzero entries of an optimal plan, in cell indices.
    std::vector<Shipment> plan;

    /// Dense cells x cells row-major plan.
    std::vector<double> dense(std::size_t cells) const;
};

/// Balanced transportation problem solved by the transportation (network)
/// simplex: northwest-corner start, u-v potentials, Dantzig pricing. Demands
/// are rescaled to the supply total. Indices in the result refer to positions
/// in `supply` and `demand`.
ExactTransport solve_transportation(std::span<const double> supply, std::span<const double> demand,
                                    const std::function<double(std::size_t, std::size_t)>& cost);

/// Exact optimum of min_{P in U(r,c)} <P, M> restricted to the supports of r
/// and c. Throws OracleTooLarge beyond kExactOtMaxSupport support cells.
ExactTransport exact_ot(const CopulaHistogram& r, const CopulaHistogram& c, const GroundCost& cost);

}  // namespace depcop
