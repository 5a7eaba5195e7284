#include "depcop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "depcop/error.hpp"
#include "depcop/random.hpp"

namespace depcop {

namespace {

void require_samples(std::size_t T) {
    if (T < 2) fail(ErrorKind::InvalidParameter, "need at least 2 samples, got " + std::to_string(T));
}

double cubic(double x) {
    const double t = x - 1.0 / 3.0;
    return 128.0 * t * t * t - 48.0 * t * t - 12.0 * t;
}

}  // namespace

SamplePair gen_discontinuity(double a, std::size_t T, std::uint64_t seed) {
    if (!(a >= 0.0 && a <= 1.0)) fail(ErrorKind::InvalidParameter, "a must lie in [0, 1]");
    require_samples(T);
    Rng rng = make_rng(seed);
    SamplePair out;
    out.x.resize(T);
    out.y.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double z = uniform01(rng);
        const double ex = uniform01(rng);
        const double ey = uniform01(rng);
        out.x[t] = z < a ? z : ex;
        out.y[t] = z < a + 0.25 ? z : ey;
    }
    return out;
}

SamplePair gen_noisy_parabola(double offset, std::size_t T, std::uint64_t seed) {
    if (!std::isfinite(offset)) fail(ErrorKind::InvalidParameter, "offset must be finite");
    require_samples(T);
    Rng rng = make_rng(seed);
    SamplePair out;
    out.x.resize(T);
    out.y.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double x = uniform01(rng);
        const double s = x - 0.5 + offset;
        out.x[t] = x;
        out.y[t] = s * s;
    }
    return out;
}

std::string_view to_string(PowerPattern p) {
    switch (p) {
        case PowerPattern::Linear: return "linear";
        case PowerPattern::Quadratic: return "quadratic";
        case PowerPattern::Cubic: return "cubic";
        case PowerPattern::Sine4: return "sine4";
        case PowerPattern::Sine16: return "sine16";
        case PowerPattern::FourthRoot: return "fourth-root";
        case PowerPattern::Circle: return "circle";
        case PowerPattern::Step: return "step";
    }
    return "unknown";
}

PowerPattern parse_power_pattern(std::string_view name) {
    for (PowerPattern p : kPowerPatterns) {
        if (to_string(p) == name) return p;
    }
    fail(ErrorKind::InvalidParameter, "unknown pattern '" + std::string(name) + "'");
}

double pattern_value(PowerPattern p, double x, bool upper) {
    constexpr double pi = std::numbers::pi;
    switch (p) {
        case PowerPattern::Linear: return x;
        case PowerPattern::Quadratic: return 4.0 * (x - 0.5) * (x - 0.5);
        case PowerPattern::Cubic: return cubic(x);
        case PowerPattern::Sine4: return std::sin(4.0 * pi * x);
        case PowerPattern::Sine16: return std::sin(16.0 * pi * x);
        case PowerPattern::FourthRoot: return std::pow(x, 0.25);
        case PowerPattern::Circle: {
            const double h = std::sqrt(std::max(0.0, 1.0 - (2.0 * x - 1.0) * (2.0 * x - 1.0)));
            return upper ? h : -h;
        }
        case PowerPattern::Step: return x > 0.5 ? 1.0 : 0.0;
    }
    return 0.0;
}

double pattern_range(PowerPattern p) {
    switch (p) {
        case PowerPattern::Sine4:
        case PowerPattern::Sine16:
        case PowerPattern::Circle: return 2.0;
        case PowerPattern::Cubic: {
            // Extremes sit at the ends of [0, 1] or at the roots of the derivative
            // 384 t^2 - 96 t - 12, t = x - 1/3.
            const double disc = std::sqrt(96.0 * 96.0 + 4.0 * 384.0 * 12.0);
            const double candidates[] = {0.0, 1.0, 1.0 / 3.0 + (96.0 + disc) / 768.0,
                                         1.0 / 3.0 + (96.0 - disc) / 768.0};
            double lo = cubic(0.0), hi = cubic(0.0);
            for (double x : candidates) {
                lo = std::min(lo, cubic(x));
                hi = std::max(hi, cubic(x));
            }
            return hi - lo;
        }
        default: return 1.0;
    }
}

SamplePair gen_power_pattern(PowerPattern p, double noise_level, std::size_t T, std::uint64_t seed) {
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
        fail(ErrorKind::InvalidParameter, "noise level must be finite and >= 0");
    }
    require_samples(T);
    Rng rng = make_rng(seed);
    const double scale = noise_level * pattern_range(p);
    SamplePair out;
    out.x.resize(T);
    out.y.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double x = uniform01(rng);
        const bool upper = (rng() >> 63) == 0;
        const double noise = standard_normal(rng);
        out.x[t] = x;
        out.y[t] = pattern_value(p, x, upper) + scale * noise;
    }
    return out;
}

SamplePair gen_gaussian_pair(double rho, std::size_t T, std::uint64_t seed) {
    if (!(rho > -1.0 && rho < 1.0)) fail(ErrorKind::InvalidParameter, "rho must lie in (-1, 1)");
    require_samples(T);
    Rng rng = make_rng(seed);
    const double c = std::sqrt(1.0 - rho * rho);
    SamplePair out;
    out.x.resize(T);
    out.y.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double z1 = standard_normal(rng);
        const double z2 = standard_normal(rng);
        out.x[t] = z1;
        out.y[t] = rho * z1 + c * z2;
    }
    return out;
}

}  // namespace depcop
