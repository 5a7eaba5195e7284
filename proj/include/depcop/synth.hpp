#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace depcop {

struct SamplePair {
    std::vector<double> x;
    std::vector<double> y;
};

/// Z ~ U[0,1); X = Z if Z < a else eps_X; Y = Z if Z < a + 0.25 else eps_Y,
/// with eps_X, eps_Y independent U[0,1). Requires a in [0, 1], T >= 2.
SamplePair gen_discontinuity(double a, std::size_t T, std::uint64_t seed);

/// X ~ U[0,1), Y = (X - 1/2 + offset)^2: a parabola with its vertex moved
/// by `offset` from the middle of the unit interval.
SamplePair gen_noisy_parabola(double offset, std::size_t T, std::uint64_t seed);

enum class PowerPattern {
    Linear,
    Quadratic,
    Cubic,
    Sine4,   // sin(4 pi x)
    Sine16,  // sin(16 pi x)
    FourthRoot,
    Circle,
    Step,
};

inline constexpr std::array<PowerPattern, 8> kPowerPatterns = {
    PowerPattern::Linear, PowerPattern::Quadratic, PowerPattern::Cubic,      PowerPattern::Sine4,
    PowerPattern::Sine16, PowerPattern::FourthRoot, PowerPattern::Circle, PowerPattern::Step,
};

std::string_view to_string(PowerPattern p);
/// Accepts the names returned by to_string. InvalidParameter otherwise.
PowerPattern parse_power_pattern(std::string_view name);

/// Noise-free value of the pattern at x in [0, 1]. The circle returns the
/// upper or lower half depending on `upper`.
double pattern_value(PowerPattern p, double x, bool upper = true);

/// Range (max - min) of the noise-free pattern over [0, 1].
double pattern_range(PowerPattern p);

/// X ~ U[0,1), y = f(X) + noise_level * range(f) * N(0,1). The circle picks
/// its upper or lower half with probability 1/2 per sample.
SamplePair gen_power_pattern(PowerPattern p, double noise_level, std::size_t T, std::uint64_t seed);

/// Bivariate standard normal with correlation rho in (-1, 1).
SamplePair gen_gaussian_pair(double rho, std::size_t T, std::uint64_t seed);

}  // namespace depcop
