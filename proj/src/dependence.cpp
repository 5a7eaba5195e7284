#include "depcop/dependence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "depcop/error.hpp"
#include "depcop/random.hpp"

namespace depcop {

namespace {

void require_pair(std::span<const double> x, std::span<const double> y, std::size_t min_size) {
    if (x.size() != y.size()) {
        fail(ErrorKind::InvalidData, "length mismatch: " + std::to_string(x.size()) + " vs " +
                                         std::to_string(y.size()));
    }
    if (x.size() < min_size) {
        fail(ErrorKind::InvalidData, "need at least " + std::to_string(min_size) + " samples, got " +
                                         std::to_string(x.size()));
    }
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (!std::isfinite(x[t]) || !std::isfinite(y[t])) {
            fail(ErrorKind::InvalidData, "non-finite value at sample " + std::to_string(t));
        }
    }
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Row means of |v_s - v_t| in O(T log T) from the sorted order.
std::vector<double> distance_row_means(std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    double total = 0.0;
    for (double x : v) total += x;
    std::vector<double> out(n);
    double below = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const double x = v[order[r]];
        const double above = total - below - x;
        const double rd = static_cast<double>(r);
        const double sum = x * rd - below + above - x * (static_cast<double>(n) - rd - 1.0);
        out[order[r]] = sum / static_cast<double>(n);
        below += x;
    }
    return out;
}

// (1/T^2) sum_{s,t} A_st B_st with A, B the doubly centered distance matrices.
double centered_product(std::span<const double> x, std::span<const double> y, const std::vector<double>& ax,
                        double ax_mean, const std::vector<double>& by, double by_mean) {
    const std::size_t n = x.size();
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        double row = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double a = std::abs(x[s] - x[t]) - ax[s] - ax[t] + ax_mean;
            const double b = std::abs(y[s] - y[t]) - by[s] - by[t] + by_mean;
            row += a * b;
        }
        sum += row;
    }
    return sum / (static_cast<double>(n) * static_cast<double>(n));
}

bool is_constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

Eigen::MatrixXd random_features(const RankColumn& u, std::size_t k, double s, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(u.size());
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(k));
    for (std::size_t f = 0; f < k; ++f) {
        const double w = standard_normal(rng) * s / 2.0;
        const double b = standard_normal(rng) * s / 2.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double z = w * u[static_cast<std::size_t>(t)] + b;
            out(t, static_cast<Eigen::Index>(f)) = f % 2 == 0 ? std::sin(z) : std::cos(z);
        }
    }
    return out;
}

// Pseudo-inverse square root of a symmetric PSD matrix; eigenvalues below
// 1e-10 of the largest are dropped.
Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& c) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    const Eigen::VectorXd values = eig.eigenvalues();
    const double cutoff = 1e-10 * std::max(values.maxCoeff(), 0.0);
    Eigen::VectorXd scale(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        scale[i] = values[i] > cutoff && values[i] > 0.0 ? 1.0 / std::sqrt(values[i]) : 0.0;
    }
    return eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

void TFDCSpec::validate() const {
    cfg.validate();
    if (targets.empty()) fail(ErrorKind::InvalidParameter, "TFDC needs at least one target copula");
    if (forgets.empty()) fail(ErrorKind::InvalidParameter, "TFDC needs at least one forget copula");
    for (const auto* set : {&targets, &forgets}) {
        for (const auto& h : *set) {
            if (h.m() != cost.m()) {
                fail(ErrorKind::InvalidData, "TFDC copula resolution " + std::to_string(h.m()) +
                                                 " does not match " + std::to_string(cost.m()));
            }
        }
    }
}

double tfdc(const CopulaHistogram& c, const TFDCSpec& spec) {
    spec.validate();
    if (c.m() != spec.cost.m()) {
        fail(ErrorKind::InvalidData, "copula resolution " + std::to_string(c.m()) + " does not match " +
                                         std::to_string(spec.cost.m()));
    }
    const bool forget = std::find(spec.forgets.begin(), spec.forgets.end(), c) != spec.forgets.end();
    const bool target = std::find(spec.targets.begin(), spec.targets.end(), c) != spec.targets.end();
    if (forget && target) fail(ErrorKind::AmbiguousSpec, "copula is both a target and a forget copula");
    if (forget) return 0.0;
    if (target) return 1.0;

    auto d = [&](const CopulaHistogram& a, const CopulaHistogram& b) {
        return spec.debias ? sinkhorn_divergence(a, b, spec.cost, spec.cfg)
                           : sinkhorn_distance(a, b, spec.cost, spec.cfg).value;
    };
    double df = std::numeric_limits<double>::infinity();
    for (const auto& f : spec.forgets) df = std::min(df, d(f, c));
    double dt = std::numeric_limits<double>::infinity();
    for (const auto& t : spec.targets) dt = std::min(dt, d(c, t));
    if (df <= 0.0 && dt <= 0.0) {
        fail(ErrorKind::AmbiguousSpec, "copula is at distance 0 from both a target and a forget copula");
    }
    return std::clamp(df / (df + dt), 0.0, 1.0);
}

double pearson(std::span<const double> x, std::span<const double> y) {
    require_pair(x, y, 2);
    if (is_constant(x) || is_constant(y)) fail(ErrorKind::DegenerateColumn, "pearson of a constant input");
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double dx = x[t] - mx;
        const double dy = y[t] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    require_pair(x, y, 2);
    const RankColumn rx = rank_transform(x);
    const RankColumn ry = rank_transform(y);
    return pearson(rx.values(), ry.values());
}

double distance_correlation(std::span<const double> x, std::span<const double> y) {
    require_pair(x, y, 4);
    if (is_constant(x) || is_constant(y)) {
        fail(ErrorKind::DegenerateColumn, "distance correlation of a constant input");
    }
    const std::vector<double> ax = distance_row_means(x);
    const std::vector<double> by = distance_row_means(y);
    const double ax_mean = mean_of(ax);
    const double by_mean = mean_of(by);

    const double vxy = std::max(centered_product(x, y, ax, ax_mean, by, by_mean), 0.0);
    const double vxx = centered_product(x, x, ax, ax_mean, ax, ax_mean);
    const double vyy = centered_product(y, y, by, by_mean, by, by_mean);
    if (!(vxx > 0.0) || !(vyy > 0.0)) return 0.0;
    return std::clamp(std::sqrt(vxy / std::sqrt(vxx * vyy)), 0.0, 1.0);
}

double rdc(std::span<const double> x, std::span<const double> y, const RdcOptions& options) {
    if (options.k == 0) fail(ErrorKind::InvalidParameter, "rdc needs k >= 1");
    if (!(options.s > 0.0) || !std::isfinite(options.s)) fail(ErrorKind::InvalidParameter, "rdc needs s > 0");
    require_pair(x, y, 2);
    if (x.size() <= options.k) {
        fail(ErrorKind::InvalidParameter, "rdc needs more samples than features (" + std::to_string(x.size()) +
                                              " <= " + std::to_string(options.k) + ")");
    }
    const RankColumn ux = rank_transform(x);
    const RankColumn uy = rank_transform(y);
    Rng rx = make_rng(options.seed, 0);
    Rng ry = make_rng(options.seed, 1);
    Eigen::MatrixXd fx = random_features(ux, options.k, options.s, rx);
    Eigen::MatrixXd fy = random_features(uy, options.k, options.s, ry);
    fx.rowwise() -= fx.colwise().mean();
    fy.rowwise() -= fy.colwise().mean();

    const double scale = 1.0 / static_cast<double>(x.size() - 1);
    const Eigen::MatrixXd cxx = scale * fx.transpose() * fx;
    const Eigen::MatrixXd cyy = scale * fy.transpose() * fy;
    const Eigen::MatrixXd cxy = scale * fx.transpose() * fy;
    const Eigen::MatrixXd whitened = inverse_sqrt(cxx) * cxy * inverse_sqrt(cyy);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(whitened);
    const Eigen::VectorXd sv = svd.singularValues();
    return sv.size() == 0 ? 0.0 : std::clamp(sv[0], 0.0, 1.0);
}

}  // namespace depcop
