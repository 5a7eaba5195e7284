#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace depcop {

/// N named variables observed T times. Stored column-wise: columns[i] holds
/// the T observations of names[i].
struct ObservationTable {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    std::size_t sample_count() const { return columns.empty() ? 0 : columns.front().size(); }
    std::size_t variable_count() const { return columns.size(); }

    /// Throws InvalidData (shape, non-finite values) or DegenerateColumn
    /// (a column with fewer than two distinct values).
    void validate() const;
};

/// Normalized ranks u[t] = rank[t] / T, with ties sharing their average rank.
class RankColumn {
public:
    /// Wraps precomputed values; each must lie in (0, 1] and be a (half-)
    /// integer rank divided by the column length.
    explicit RankColumn(std::vector<double> u);

    std::size_t size() const { return u_.size(); }
    std::span<const double> values() const { return u_; }
    double operator[](std::size_t t) const { return u_[t]; }

    /// Twice the rank of sample t, as an exact integer (average ranks are
    /// multiples of 1/2).
    std::int64_t doubled_rank(std::size_t t) const;

private:
    std::vector<double> u_;
};

/// m x m grid of probability mass on [0,1]^2. Row p is the u_i bin
/// (p/m, (p+1)/m], column q the u_j bin. Mass is stored row-major.
class CopulaHistogram {
public:
    CopulaHistogram() = default;

    /// Validates: m >= 1, m*m entries, all finite and >= 0, total mass 1
    /// within 1e-9. Throws InvalidData otherwise.
    CopulaHistogram(std::size_t m, std::vector<double> mass);

    /// Scales a nonnegative grid to unit mass before validating.
    static CopulaHistogram normalized(std::size_t m, std::vector<double> raw);

    std::size_t m() const { return m_; }
    std::size_t cells() const { return mass_.size(); }
    std::span<const double> mass() const { return mass_; }
    double operator()(std::size_t p, std::size_t q) const { return mass_[p * m_ + q]; }
    double total() const;

    std::vector<double> row_marginals() const;
    std::vector<double> column_marginals() const;

    /// Bitwise equality of resolution and every cell.
    friend bool operator==(const CopulaHistogram&, const CopulaHistogram&) = default;

private:
    std::size_t m_ = 0;
    std::vector<double> mass_;
};

inline constexpr std::size_t kDefaultResolution = 20;

/// Average-tie normalized ranks of one column. Throws InvalidData for fewer
/// than two samples or non-finite values, DegenerateColumn for a constant
/// column.
RankColumn rank_transform(std::span<const double> column);

/// Bins paired ranks into an m x m histogram; each sample carries mass 1/T.
/// A sample in a tied group spreads its mass evenly over the rank interval
/// its group occupies, so ties do not pile up at the average rank.
/// Requires equal lengths and 2 <= m <= T.
CopulaHistogram empirical_copula(const RankColumn& x, const RankColumn& y, std::size_t m);

/// rank_transform on both columns followed by empirical_copula.
CopulaHistogram copula_from_samples(std::span<const double> x, std::span<const double> y,
                                    std::size_t m);

// ---------------------------------------------------------------------------
// Reference and target copulas

struct FrechetUpper {};   // M, comonotonic
struct FrechetLower {};   // W, countermonotonic
struct Independence {};   // Pi
struct GaussianTarget {
    double rho = 0.0;
};

/// A rectangle [u_lo, u_hi] x [v_lo, v_hi] of the unit square painted with a
/// relative density. u runs over rows (u_i), v over columns (u_j).
struct Patch {
    double u_lo = 0.0;
    double u_hi = 1.0;
    double v_lo = 0.0;
    double v_hi = 1.0;
    double weight = 1.0;
};

/// Cells whose centers fall inside a patch take its weight (later patches
/// override earlier ones); every other cell keeps the base density 1, i.e. the
/// independence copula. The painted grid is then projected to uniform margins.
struct PatchTarget {
    std::vector<Patch> patches;
};

using TargetKind = std::variant<FrechetUpper, FrechetLower, Independence, GaussianTarget, PatchTarget>;

struct TargetBuilderSpec {
    TargetKind kind;
    std::size_t m = kDefaultResolution;
};

CopulaHistogram reference_copula(const TargetBuilderSpec& spec);

CopulaHistogram frechet_upper(std::size_t m);
CopulaHistogram frechet_lower(std::size_t m);
CopulaHistogram independence(std::size_t m);
CopulaHistogram gaussian_copula(double rho, std::size_t m);
CopulaHistogram patch_copula(std::span<const Patch> patches, std::size_t m);

/// Iterative proportional fitting: alternately rescales rows and columns of a
/// nonnegative m x m grid until every marginal is within tol of 1/m.
/// Throws InfeasibleProjection for an all-zero row or column and
/// ConvergenceFailure (carrying the residual) after max_iter sweeps.
CopulaHistogram project_uniform_margins(std::span<const double> raw, std::size_t m,
                                        double tol = 1e-12, std::size_t max_iter = 10000);

/// 12 * sum mass[p,q] c_p c_q - 3 with cell centers c_p = (p + 1/2) / m.
double spearman_from_copula(const CopulaHistogram& c);

// ---------------------------------------------------------------------------
// .cop text format: first line m, then m lines of m masses, row-major.

std::string format_cop(const CopulaHistogram& c);
CopulaHistogram parse_cop(std::istream& in, const std::string& source = "<stream>");
CopulaHistogram read_cop(const std::filesystem::path& path);
void write_cop(const CopulaHistogram& c, const std::filesystem::path& path);

}  // namespace depcop
