#include "depcop/copula.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "depcop/error.hpp"
#include "depcop/normal.hpp"

namespace depcop {

namespace {

constexpr double kMassTolerance = 1e-9;

double sum(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void ObservationTable::validate() const {
    if (names.size() != columns.size()) {
        fail(ErrorKind::InvalidData, "variable names and columns disagree in count");
    }
    if (columns.empty()) fail(ErrorKind::InvalidData, "table has no variables");
    const std::size_t t = columns.front().size();
    if (t < 2) fail(ErrorKind::InvalidData, "table needs at least 2 observations");
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto& col = columns[i];
        if (col.size() != t) fail(ErrorKind::InvalidData, "column '" + names[i] + "' is ragged");
        for (std::size_t r = 0; r < t; ++r) {
            if (!std::isfinite(col[r])) {
                fail(ErrorKind::InvalidData, "column '" + names[i] + "' has a non-finite value at row " +
                                                 std::to_string(r));
            }
        }
        const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        if (*lo == *hi) {
            fail(ErrorKind::DegenerateColumn, "column '" + names[i] + "' is constant");
        }
    }
}

// ---------------------------------------------------------------------------

RankColumn::RankColumn(std::vector<double> u) : u_(std::move(u)) {
    for (double v : u_) {
        if (!(v > 0.0 && v <= 1.0)) {
            fail(ErrorKind::InvalidData, "normalized rank outside (0,1]: " + std::to_string(v));
        }
    }
}

std::int64_t RankColumn::doubled_rank(std::size_t t) const {
    return std::llround(2.0 * u_[t] * static_cast<double>(u_.size()));
}

RankColumn rank_transform(std::span<const double> column) {
    const std::size_t n = column.size();
    if (n < 2) fail(ErrorKind::InvalidData, "rank transform needs at least 2 samples");
    for (double v : column) {
        if (!std::isfinite(v)) fail(ErrorKind::InvalidData, "rank transform input is not finite");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });
    if (column[order.front()] == column[order.back()]) {
        fail(ErrorKind::DegenerateColumn, "rank transform of a constant column");
    }

    std::vector<double> u(n);
    const double denom = static_cast<double>(n);
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start + 1;
        while (end < n && column[order[end]] == column[order[start]]) ++end;
        // Ranks start..end-1 (1-based: start+1..end) share their mean.
        const double rank = 0.5 * static_cast<double>(start + 1 + end);
        for (std::size_t k = start; k < end; ++k) u[order[k]] = rank / denom;
        start = end;
    }
    return RankColumn(std::move(u));
}

// ---------------------------------------------------------------------------

CopulaHistogram::CopulaHistogram(std::size_t m, std::vector<double> mass)
    : m_(m), mass_(std::move(mass)) {
    if (m_ == 0) fail(ErrorKind::InvalidData, "histogram resolution must be positive");
    if (mass_.size() != m_ * m_) {
        fail(ErrorKind::InvalidData, "histogram of resolution " + std::to_string(m_) + " needs " +
                                         std::to_string(m_ * m_) + " cells, got " +
                                         std::to_string(mass_.size()));
    }
    for (double v : mass_) {
        if (!std::isfinite(v) || v < 0.0) {
            fail(ErrorKind::InvalidData, "histogram cell is negative or non-finite");
        }
    }
    const double total = sum(mass_);
    if (std::abs(total - 1.0) > kMassTolerance) {
        fail(ErrorKind::InvalidData, "histogram mass sums to " + std::to_string(total));
    }
}

CopulaHistogram CopulaHistogram::normalized(std::size_t m, std::vector<double> raw) {
    const double total = sum(raw);
    if (!(total > 0.0) || !std::isfinite(total)) {
        fail(ErrorKind::InvalidData, "cannot normalize a grid without positive finite mass");
    }
    for (double& v : raw) v /= total;
    return CopulaHistogram(m, std::move(raw));
}

double CopulaHistogram::total() const { return sum(mass_); }

std::vector<double> CopulaHistogram::row_marginals() const {
    std::vector<double> rows(m_, 0.0);
    for (std::size_t p = 0; p < m_; ++p)
        for (std::size_t q = 0; q < m_; ++q) rows[p] += mass_[p * m_ + q];
    return rows;
}

std::vector<double> CopulaHistogram::column_marginals() const {
    std::vector<double> cols(m_, 0.0);
    for (std::size_t p = 0; p < m_; ++p)
        for (std::size_t q = 0; q < m_; ++q) cols[q] += mass_[p * m_ + q];
    return cols;
}

// ---------------------------------------------------------------------------

CopulaHistogram empirical_copula(const RankColumn& x, const RankColumn& y, std::size_t m) {
    const std::size_t t = x.size();
    if (y.size() != t) {
        fail(ErrorKind::InvalidData, "rank columns differ in length (" + std::to_string(t) + " vs " +
                                         std::to_string(y.size()) + ")");
    }
    if (m < 2 || m > t) {
        fail(ErrorKind::InvalidParameter, "resolution m=" + std::to_string(m) +
                                              " must satisfy 2 <= m <= T=" + std::to_string(t));
    }

    // Bin p holds u in (p/m, (p+1)/m]. With u = r/T and r = d/2, the bin is
    // ceil(d*m / 2T) - 1, evaluated in integers so that values sitting exactly
    // on a bin edge are never misplaced by rounding.
    const auto two_t = static_cast<std::int64_t>(2 * t);
    const auto mi = static_cast<std::int64_t>(m);
    auto bin = [&](std::int64_t d) {
        const std::int64_t b = (d * mi + two_t - 1) / two_t - 1;
        return static_cast<std::size_t>(std::clamp<std::int64_t>(b, 0, mi - 1));
    };

    // A tied group of n samples with average rank d/2 occupies the ranks
    // lo+1..lo+n, lo = (d - n - 1) / 2. Its mass is spread evenly over the
    // interval (lo/T, (lo+n)/T] rather than placed at the average, so the
    // histogram keeps uniform margins and moves continuously with the tie
    // counts. Untied samples are binned as points.
    auto group_sizes = [&](const RankColumn& r) {
        std::vector<std::size_t> n(2 * t + 2, 0);
        for (std::size_t s = 0; s < t; ++s) ++n[static_cast<std::size_t>(r.doubled_rank(s))];
        return n;
    };
    const auto nx = group_sizes(x), ny = group_sizes(y);
    auto spread = [&](std::int64_t d, std::size_t n, std::vector<std::pair<std::size_t, double>>& out) {
        out.clear();
        const double lo = static_cast<double>((d - static_cast<std::int64_t>(n) - 1) / 2);
        const double a = lo / static_cast<double>(t), b = (lo + static_cast<double>(n)) / static_cast<double>(t);
        const double width = b - a;
        const auto first = static_cast<std::size_t>(std::clamp<double>(std::floor(a * mi), 0.0, mi - 1.0));
        for (std::size_t p = first; p < m; ++p) {
            const double lo_edge = static_cast<double>(p) / static_cast<double>(m);
            if (lo_edge >= b) break;
            const double hi_edge = static_cast<double>(p + 1) / static_cast<double>(m);
            const double overlap = std::min(b, hi_edge) - std::max(a, lo_edge);
            if (overlap > 0.0) out.emplace_back(p, overlap / width);
        }
    };

    std::vector<std::size_t> counts(m * m, 0);
    std::vector<double> shared(m * m, 0.0);
    std::vector<std::pair<std::size_t, double>> wx, wy;
    for (std::size_t s = 0; s < t; ++s) {
        const std::int64_t dx = x.doubled_rank(s), dy = y.doubled_rank(s);
        const std::size_t gx = nx[static_cast<std::size_t>(dx)], gy = ny[static_cast<std::size_t>(dy)];
        if (gx == 1 && gy == 1) {
            ++counts[bin(dx) * m + bin(dy)];
            continue;
        }
        if (gx == 1) wx.assign(1, {bin(dx), 1.0});
        else spread(dx, gx, wx);
        if (gy == 1) wy.assign(1, {bin(dy), 1.0});
        else spread(dy, gy, wy);
        for (const auto& [p, fp] : wx)
            for (const auto& [q, fq] : wy) shared[p * m + q] += fp * fq;
    }

    std::vector<double> mass(m * m);
    const double denom = static_cast<double>(t);
    for (std::size_t c = 0; c < mass.size(); ++c) mass[c] = (static_cast<double>(counts[c]) + shared[c]) / denom;
    return CopulaHistogram(m, std::move(mass));
}

CopulaHistogram copula_from_samples(std::span<const double> x, std::span<const double> y,
                                    std::size_t m) {
    return empirical_copula(rank_transform(x), rank_transform(y), m);
}

// ---------------------------------------------------------------------------

CopulaHistogram frechet_upper(std::size_t m) {
    std::vector<double> mass(m * m, 0.0);
    for (std::size_t p = 0; p < m; ++p) mass[p * m + p] = 1.0 / static_cast<double>(m);
    return CopulaHistogram(m, std::move(mass));
}

CopulaHistogram frechet_lower(std::size_t m) {
    std::vector<double> mass(m * m, 0.0);
    for (std::size_t p = 0; p < m; ++p) mass[p * m + (m - 1 - p)] = 1.0 / static_cast<double>(m);
    return CopulaHistogram(m, std::move(mass));
}

CopulaHistogram independence(std::size_t m) {
    const double cell = 1.0 / static_cast<double>(m * m);
    return CopulaHistogram(m, std::vector<double>(m * m, cell));
}

CopulaHistogram gaussian_copula(double rho, std::size_t m) {
    if (!(rho > -1.0 && rho < 1.0)) {
        fail(ErrorKind::InvalidParameter, "gaussian copula needs rho in (-1,1), got " + std::to_string(rho));
    }
    if (m == 0) fail(ErrorKind::InvalidParameter, "resolution must be positive");

    std::vector<double> z(m);
    for (std::size_t p = 0; p < m; ++p) {
        z[p] = normal_quantile((static_cast<double>(p) + 0.5) / static_cast<double>(m));
    }
    // c(u,v) = phi2_rho(a,b) / (phi(a) phi(b))
    //        = exp(-(rho^2 (a^2 + b^2) - 2 rho a b) / (2 (1 - rho^2))) / sqrt(1 - rho^2)
    const double one_minus = 1.0 - rho * rho;
    std::vector<double> density(m * m);
    for (std::size_t p = 0; p < m; ++p) {
        for (std::size_t q = 0; q < m; ++q) {
            const double a = z[p];
            const double b = z[q];
            const double expo = -(rho * rho * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * one_minus);
            density[p * m + q] = std::exp(expo) / std::sqrt(one_minus);
        }
    }
    if (rho == 0.0) return CopulaHistogram::normalized(m, std::move(density));
    return project_uniform_margins(density, m);
}

CopulaHistogram patch_copula(std::span<const Patch> patches, std::size_t m) {
    if (m == 0) fail(ErrorKind::InvalidParameter, "resolution must be positive");
    bool any_positive = false;
    for (const Patch& patch : patches) {
        if (!std::isfinite(patch.weight) || patch.weight < 0.0) {
            fail(ErrorKind::InvalidParameter, "patch weights must be finite and nonnegative");
        }
        if (!(patch.u_lo <= patch.u_hi && patch.v_lo <= patch.v_hi)) {
            fail(ErrorKind::InvalidParameter, "patch rectangle has inverted bounds");
        }
        any_positive = any_positive || patch.weight > 0.0;
    }
    if (!patches.empty() && !any_positive) {
        fail(ErrorKind::InvalidParameter, "at least one patch weight must be positive");
    }

    std::vector<double> raw(m * m, 1.0);
    const double md = static_cast<double>(m);
    for (const Patch& patch : patches) {
        for (std::size_t p = 0; p < m; ++p) {
            const double cu = (static_cast<double>(p) + 0.5) / md;
            if (cu < patch.u_lo || cu > patch.u_hi) continue;
            for (std::size_t q = 0; q < m; ++q) {
                const double cv = (static_cast<double>(q) + 0.5) / md;
                if (cv < patch.v_lo || cv > patch.v_hi) continue;
                raw[p * m + q] = patch.weight;
            }
        }
    }
    return project_uniform_margins(raw, m);
}

namespace {

struct TargetVisitor {
    std::size_t m;
    CopulaHistogram operator()(const FrechetUpper&) const { return frechet_upper(m); }
    CopulaHistogram operator()(const FrechetLower&) const { return frechet_lower(m); }
    CopulaHistogram operator()(const Independence&) const { return independence(m); }
    CopulaHistogram operator()(const GaussianTarget& g) const { return gaussian_copula(g.rho, m); }
    CopulaHistogram operator()(const PatchTarget& p) const { return patch_copula(p.patches, m); }
};

}  // namespace

CopulaHistogram reference_copula(const TargetBuilderSpec& spec) {
    if (spec.m == 0) fail(ErrorKind::InvalidParameter, "resolution must be positive");
    return std::visit(TargetVisitor{spec.m}, spec.kind);
}

// ---------------------------------------------------------------------------

CopulaHistogram project_uniform_margins(std::span<const double> raw, std::size_t m, double tol,
                                        std::size_t max_iter) {
    if (m == 0 || raw.size() != m * m) {
        fail(ErrorKind::InvalidData, "IPF input must be an m x m grid");
    }
    if (!(tol > 0.0)) fail(ErrorKind::InvalidParameter, "IPF tolerance must be positive");
    for (double v : raw) {
        if (!std::isfinite(v) || v < 0.0) fail(ErrorKind::InvalidData, "IPF input must be nonnegative");
    }

    std::vector<double> grid(raw.begin(), raw.end());
    const double target = 1.0 / static_cast<double>(m);
    std::vector<double> rows(m), cols(m);

    auto row_sums = [&] {
        std::fill(rows.begin(), rows.end(), 0.0);
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t q = 0; q < m; ++q) rows[p] += grid[p * m + q];
    };
    auto col_sums = [&] {
        std::fill(cols.begin(), cols.end(), 0.0);
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t q = 0; q < m; ++q) cols[q] += grid[p * m + q];
    };

    row_sums();
    col_sums();
    for (std::size_t i = 0; i < m; ++i) {
        if (!(rows[i] > 0.0)) fail(ErrorKind::InfeasibleProjection, "row " + std::to_string(i) + " is zero");
        if (!(cols[i] > 0.0)) fail(ErrorKind::InfeasibleProjection, "column " + std::to_string(i) + " is zero");
    }

    double residual = 0.0;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        row_sums();
        col_sums();
        residual = 0.0;
        for (std::size_t p = 0; p < m; ++p) {
            residual = std::max({residual, std::abs(rows[p] - target), std::abs(cols[p] - target)});
        }
        if (residual < tol) {
            return CopulaHistogram(m, std::move(grid));
        }
        for (std::size_t p = 0; p < m; ++p) {
            const double scale = target / rows[p];
            for (std::size_t q = 0; q < m; ++q) grid[p * m + q] *= scale;
        }
        col_sums();
        for (std::size_t q = 0; q < m; ++q) {
            const double scale = target / cols[q];
            for (std::size_t p = 0; p < m; ++p) grid[p * m + q] *= scale;
        }
    }
    throw ConvergenceFailure("IPF did not reach uniform margins in " + std::to_string(max_iter) +
                                 " sweeps",
                             std::nan(""), residual);
}

// ---------------------------------------------------------------------------

double spearman_from_copula(const CopulaHistogram& c) {
    const std::size_t m = c.m();
    const double md = static_cast<double>(m);
    double acc = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
        const double cp = (static_cast<double>(p) + 0.5) / md;
        for (std::size_t q = 0; q < m; ++q) {
            const double cq = (static_cast<double>(q) + 0.5) / md;
            acc += c(p, q) * cp * cq;
        }
    }
    return 12.0 * acc - 3.0;
}

}  // namespace depcop
