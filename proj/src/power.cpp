#include "depcop/power.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "depcop/error.hpp"
#include "depcop/parallel.hpp"
#include "depcop/random.hpp"

namespace depcop {

namespace {

constexpr double kLevel = 0.95;

void permute(std::vector<double>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i)), i - 1);
        std::swap(v[i - 1], v[j]);
    }
}

SamplePair null_sample(PowerPattern pattern, double noise, std::size_t T, std::uint64_t seed) {
    SamplePair s = gen_power_pattern(pattern, noise, T, seed);
    Rng rng = make_rng(seed, 1);
    permute(s.y, rng);
    return s;
}

double safe_statistic(Coefficient c, const SamplePair& s, const PowerSettings& settings, std::uint64_t seed) {
    try {
        return dependence_statistic(c, s.x, s.y, settings, seed);
    } catch (const Error&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace

std::string_view to_string(Coefficient c) {
    switch (c) {
        case Coefficient::Pearson: return "pearson";
        case Coefficient::Spearman: return "spearman";
        case Coefficient::DistanceCorrelation: return "dcor";
        case Coefficient::Rdc: return "rdc";
        case Coefficient::Tfdc: return "tfdc";
    }
    return "unknown";
}

Coefficient parse_coefficient(std::string_view name) {
    for (Coefficient c : {Coefficient::Pearson, Coefficient::Spearman, Coefficient::DistanceCorrelation,
                          Coefficient::Rdc, Coefficient::Tfdc}) {
        if (to_string(c) == name) return c;
    }
    fail(ErrorKind::InvalidParameter, "unknown coefficient '" + std::string(name) + "'");
}

double dependence_statistic(Coefficient c, std::span<const double> x, std::span<const double> y,
                            const PowerSettings& settings, std::uint64_t replicate_seed) {
    switch (c) {
        case Coefficient::Pearson: return std::abs(pearson(x, y));
        case Coefficient::Spearman: return std::abs(spearman(x, y));
        case Coefficient::DistanceCorrelation: return distance_correlation(x, y);
        case Coefficient::Rdc: {
            RdcOptions options = settings.rdc;
            options.seed = derive_seed(options.seed, replicate_seed);
            return rdc(x, y, options);
        }
        case Coefficient::Tfdc: {
            if (settings.tfdc == nullptr) fail(ErrorKind::InvalidParameter, "tfdc power needs a target spec");
            const CopulaHistogram h = copula_from_samples(x, y, settings.tfdc->cost.m());
            return tfdc(h, *settings.tfdc);
        }
    }
    fail(ErrorKind::InvalidParameter, "unknown coefficient");
}

PowerResult estimate_power(PowerPattern pattern, double noise_level, Coefficient coefficient,
                           const PowerSettings& settings) {
    if (settings.n_sims < 10) {
        fail(ErrorKind::InvalidParameter, "power needs n_sims >= 10, got " + std::to_string(settings.n_sims));
    }
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
        fail(ErrorKind::InvalidParameter, "noise level must be finite and >= 0");
    }
    if (coefficient == Coefficient::Tfdc) {
        if (settings.tfdc == nullptr) fail(ErrorKind::InvalidParameter, "tfdc power needs a target spec");
        settings.tfdc->validate();
    }

    const std::size_t n = settings.n_sims;
    const std::size_t T = settings.sample_size;
    std::vector<double> alt(n), null(n);
    parallel_for(2 * n, [&](std::size_t job) {
        const std::size_t r = job / 2;
        if (job % 2 == 0) {
            const std::uint64_t seed = derive_seed(settings.seed, 2 * r);
            const SamplePair s = settings.calibration ? null_sample(pattern, noise_level, T, seed)
                                                      : gen_power_pattern(pattern, noise_level, T, seed);
            alt[r] = safe_statistic(coefficient, s, settings, seed);
        } else {
            const std::uint64_t seed = derive_seed(settings.seed, 2 * r + 1);
            null[r] = safe_statistic(coefficient, null_sample(pattern, noise_level, T, seed), settings, seed);
        }
    });

    PowerResult out;
    out.pattern = pattern;
    out.noise_level = noise_level;
    out.coefficient = coefficient;
    out.n_sims = n;
    out.sample_size = T;
    out.seed = settings.seed;

    std::vector<double> valid;
    for (double v : null) {
        if (std::isfinite(v)) valid.push_back(v);
    }
    out.failures = n - valid.size();
    if (valid.empty()) fail(ErrorKind::InvalidData, "no null replicate produced a statistic");
    std::sort(valid.begin(), valid.end());
    const auto rank = static_cast<std::size_t>(std::ceil(kLevel * static_cast<double>(valid.size())));
    out.threshold = valid[std::max<std::size_t>(rank, 1) - 1];

    std::size_t rejections = 0;
    for (double v : alt) {
        if (!std::isfinite(v)) {
            ++out.failures;
        } else if (v > out.threshold) {
            ++rejections;
        }
    }
    out.power = static_cast<double>(rejections) / static_cast<double>(n);
    return out;
}

TFDCSpec tfdc_power_targets(std::size_t m, std::size_t T_ref, std::uint64_t seed) {
    if (T_ref < m) fail(ErrorKind::InvalidParameter, "reference sample smaller than the resolution");
    TFDCSpec spec;
    spec.cost = GroundCost(m);
    spec.cfg = SinkhornConfig::for_resolution(m);
    spec.targets.resize(kPowerPatterns.size(), independence(m));
    parallel_for(kPowerPatterns.size(), [&](std::size_t i) {
        const SamplePair s = gen_power_pattern(kPowerPatterns[i], 0.0, T_ref, derive_seed(seed, i));
        spec.targets[i] = copula_from_samples(s.x, s.y, m);
    });
    spec.forgets = {independence(m)};
    return spec;
}

}  // namespace depcop
