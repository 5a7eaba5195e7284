#pragma once

// Reference computations for the tests. Each one is written from first
// principles and shares no code with the library beyond its data types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace oracle {

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        sxy += (x[t] - mx) * (y[t] - my);
        sxx += (x[t] - mx) * (x[t] - mx);
        syy += (y[t] - my) * (y[t] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// 1 - 6 sum d^2 / (T (T^2 - 1)); valid without ties.
inline double spearman_no_ties(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    auto ranks = [n](std::span<const double> v) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        for (std::size_t k = 0; k < n; ++k) r[idx[k]] = static_cast<double>(k + 1);
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    double d2 = 0.0;
    for (std::size_t t = 0; t < n; ++t) d2 += (rx[t] - ry[t]) * (rx[t] - ry[t]);
    const double nd = static_cast<double>(n);
    return 1.0 - 6.0 * d2 / (nd * (nd * nd - 1.0));
}

// Distance correlation from the full doubly centered T x T matrices.
inline double distance_correlation(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    auto centered = [n](std::span<const double> v) {
        std::vector<double> d(n * n), row(n, 0.0);
        double all = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                d[i * n + j] = std::abs(v[i] - v[j]);
                row[i] += d[i * n + j];
                all += d[i * n + j];
            }
        const double nd = static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                d[i * n + j] += -row[i] / nd - row[j] / nd + all / (nd * nd);
        return d;
    };
    const auto a = centered(x), b = centered(y);
    double vxy = 0.0, vxx = 0.0, vyy = 0.0;
    for (std::size_t k = 0; k < n * n; ++k) {
        vxy += a[k] * b[k];
        vxx += a[k] * a[k];
        vyy += b[k] * b[k];
    }
    return std::sqrt(std::max(vxy, 0.0) / std::sqrt(vxx * vyy));
}

// Squared 2-Wasserstein distance between two discrete laws on the same
// sorted points, by monotone (north-west corner) matching of quantiles.
inline double w2_squared_1d(std::span<const double> a, std::span<const double> b, std::span<const double> points) {
    std::size_t i = 0, j = 0;
    double left_a = a.empty() ? 0.0 : a[0], left_b = b.empty() ? 0.0 : b[0];
    double total = 0.0;
    while (i < a.size() && j < b.size()) {
        if (left_a <= 0.0) {
            if (++i < a.size()) left_a = a[i];
            continue;
        }
        if (left_b <= 0.0) {
            if (++j < b.size()) left_b = b[j];
            continue;
        }
        const double moved = std::min(left_a, left_b);
        const double d = points[i] - points[j];
        total += moved * d * d;
        left_a -= moved;
        left_b -= moved;
    }
    return total;
}

// Two sources, two sinks: the plan [[t, r1 - t], [c1 - t, r2 - c1 + t]] is
// linear in t, so the optimum sits at an end of the feasible interval.
inline double transport_2x2(double r1, double r2, double c1, double c2, const double cost[2][2]) {
    (void)c2;
    const double lo = std::max(0.0, c1 - r2);
    const double hi = std::min(r1, c1);
    auto value = [&](double t) {
        return t * cost[0][0] + (r1 - t) * cost[0][1] + (c1 - t) * cost[1][0] + (r2 - c1 + t) * cost[1][1];
    };
    return std::min(value(lo), value(hi));
}

// Uniform-margin fixed point of [[k, 1], [1, k]]: scaling keeps the cross
// ratio k^2, so a / (1/2 - a) = k.
inline double ipf_2x2_diagonal(double k) { return k / (2.0 * (1.0 + k)); }

// |observed - p| <= sigmas * sqrt(p (1 - p) / n).
inline bool within_binomial(double observed, double p, std::size_t n, double sigmas = 3.0) {
    return std::abs(observed - p) <= sigmas * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Normal quantile by bisection on erfc.
inline double normal_quantile(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    double lo = -40.0, hi = 40.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// P(X <= h, Y <= k) for a standard bivariate normal with correlation rho:
// Phi(h) Phi(k) + (1 / 2 pi) int_0^rho exp(-(h^2 - 2 r h k + k^2) / (2 (1 - r^2))) / sqrt(1 - r^2) dr,
// by composite Simpson.
inline double bivariate_normal_cdf(double h, double k, double rho) {
    if (std::isinf(h) || std::isinf(k)) {
        if (h == -std::numeric_limits<double>::infinity() || k == -std::numeric_limits<double>::infinity()) return 0.0;
        if (std::isinf(h) && std::isinf(k)) return 1.0;
        return normal_cdf(std::isinf(h) ? k : h);
    }
    const int steps = 2000;
    const double step = rho / steps;
    auto f = [&](double r) {
        const double s = 1.0 - r * r;
        return std::exp(-(h * h - 2.0 * r * h * k + k * k) / (2.0 * s)) / std::sqrt(s);
    };
    double acc = f(0.0) + f(rho);
    for (int i = 1; i < steps; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(i * step);
    return normal_cdf(h) * normal_cdf(k) + acc * step / 3.0 / (2.0 * std::numbers::pi);
}

// Exact Gaussian-copula mass of every m x m cell, row-major.
inline std::vector<double> gaussian_cell_masses(double rho, std::size_t m) {
    std::vector<double> z(m + 1);
    for (std::size_t p = 0; p <= m; ++p) z[p] = normal_quantile(static_cast<double>(p) / static_cast<double>(m));
    std::vector<double> out(m * m);
    for (std::size_t p = 0; p < m; ++p)
        for (std::size_t q = 0; q < m; ++q)
            out[p * m + q] = bivariate_normal_cdf(z[p + 1], z[q + 1], rho) - bivariate_normal_cdf(z[p], z[q + 1], rho) -
                             bivariate_normal_cdf(z[p + 1], z[q], rho) + bivariate_normal_cdf(z[p], z[q], rho);
    return out;
}

// Lowest objective over all splits of n items into two non-empty groups.
// Item 0 always sits in group 0, so each split is visited once. Returns the
// group of every item.
inline std::vector<std::size_t> best_two_partition(std::size_t n,
                                                   const std::function<double(const std::vector<std::size_t>&)>& objective) {
    std::vector<std::size_t> best, groups(n);
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t mask = 1; mask < (std::size_t{1} << (n - 1)); ++mask) {
        groups[0] = 0;
        for (std::size_t i = 1; i < n; ++i) groups[i] = (mask >> (i - 1)) & 1u;
        const double v = objective(groups);
        if (v < best_value) {
            best_value = v;
            best = groups;
        }
    }
    return best;
}

// True when two labelings describe the same partition.
inline bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    return true;
}

// Entropic transport by plain Sinkhorn scaling with the dense kernel
// exp(-lambda C); returns <P, C>. Meant for small grids and moderate lambda.
inline double dense_sinkhorn(std::span<const double> r, std::span<const double> c, const std::vector<double>& cost,
                             double lambda, std::size_t sweeps = 20000) {
    const std::size_t n = r.size();
    std::vector<double> k(n * n), u(n, 1.0), v(n, 1.0);
    for (std::size_t i = 0; i < n * n; ++i) k[i] = std::exp(-lambda * cost[i]);
    for (std::size_t s = 0; s < sweeps; ++s) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += k[i * n + j] * v[j];
            u[i] = r[i] > 0.0 ? r[i] / acc : 0.0;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += k[i * n + j] * u[i];
            v[j] = c[j] > 0.0 ? c[j] / acc : 0.0;
        }
    }
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) value += u[i] * k[i * n + j] * v[j] * cost[i * n + j];
    return value;
}

}  // namespace oracle
