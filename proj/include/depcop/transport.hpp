#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "depcop/copula.hpp"

namespace depcop {

enum class CostKind {
    /// ((p - p')^2 + (q - q')^2) / m^2; separable into two one-axis factors.
    SquaredEuclidean,
    /// sqrt of the above; a metric, but not separable.
    Euclidean,
};

/// Ground cost between the cell centers of an m x m grid. Cells are indexed
/// row-major, cell = p * m + q.
class GroundCost {
public:
    explicit GroundCost(std::size_t m, CostKind kind = CostKind::SquaredEuclidean);

    std::size_t m() const { return m_; }
    std::size_t cells() const { return m_ * m_; }
    CostKind kind() const { return kind_; }
    bool separable() const { return kind_ == CostKind::SquaredEuclidean; }

    double operator()(std::size_t cell_a, std::size_t cell_b) const;

    /// One-axis factor (p - p')^2 / m^2 of the separable cost.
    double axis(std::size_t p, std::size_t p2) const;

    /// Cost of moving mass by one grid step; sets the natural scale of lambda.
    double unit_step() const;

    /// Full (m^2 x m^2) row-major matrix.
    std::vector<double> dense() const;

private:
    std::size_t m_;
    CostKind kind_;
};

/// Settings for the entropy-regularized problem
///   P^lambda = argmin_{P in U(r,c)} <P, M> - h(P) / lambda.
struct SinkhornConfig {
    double lambda = 50.0 * 400.0;
    std::size_t max_iter = 10000;
    /// Stop once the worst marginal violation (L-infinity) is below tol.
    double tol = 1e-6;
    /// Stabilized log-domain iterations; the plain scaling path underflows
    /// once lambda * cost exceeds ~700.
    bool log_domain = true;

    /// Defaults with lambda = 50 m^2, i.e. a one-step move costs 50 nats.
    static SinkhornConfig for_resolution(std::size_t m);

    void validate() const;
};

/// Gibbs kernel K = exp(-lambda * M). Applies itself either through the two
/// one-axis m x m factors (squared-Euclidean costs) or densely.
class GibbsKernel {
public:
    GibbsKernel(const GroundCost& cost, double lambda);

    const GroundCost& cost() const { return cost_; }
    double lambda() const { return lambda_; }

    /// out = K v. Separable when the cost allows it.
    void apply(std::span<const double> v, std::span<double> out) const;
    /// out = K v through the explicit m^2 x m^2 matrix.
    void apply_dense(std::span<const double> v, std::span<double> out) const;

    /// out_i = log sum_j exp(g_j - lambda M_ij), with -inf entries allowed.
    void log_apply(std::span<const double> g, std::span<double> out) const;
    void log_apply_dense(std::span<const double> g, std::span<double> out) const;

private:
    GroundCost cost_;
    double lambda_;
    std::vector<double> axis_scaled_;  // lambda * axis cost, m x m
    std::vector<double> axis_kernel_;  // exp(-lambda * axis cost), m x m
};

/// Entropic transport plan P_ij = exp(log_u_i + log_v_j - lambda M_ij) kept in
/// factored form.
class TransportPlan {
public:
    TransportPlan(GroundCost cost, double lambda, std::vector<double> log_u, std::vector<double> log_v);

    std::size_t cells() const { return log_u_.size(); }
    double lambda() const { return lambda_; }
    std::span<const double> log_u() const { return log_u_; }
    std::span<const double> log_v() const { return log_v_; }

    double entry(std::size_t i, std::size_t j) const;
    std::vector<double> dense() const;
    std::vector<double> row_sums() const;
    std::vector<double> column_sums() const;
    /// Frobenius product <P, M>.
    double cost_inner_product() const;

private:
    GroundCost cost_;
    double lambda_;
    std::vector<double> log_u_;
    std::vector<double> log_v_;
};

struct SinkhornResult {
    double value = 0.0;
    TransportPlan plan;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/// Dual-Sinkhorn distance <P^lambda, M>. Throws UnderflowDetected on the plain
/// path when the kernel underflows, and ConvergenceFailure (last value and
/// residual attached) after max_iter iterations.
///
/// The log-domain path anneals lambda from about 1/unit_step up to
/// cfg.lambda, doubling at each stage and warm-starting the dual potentials.
/// Only the final stage counts towards tol; iterations of all stages count
/// towards max_iter.
SinkhornResult sinkhorn_distance(const CopulaHistogram& r, const CopulaHistogram& c,
                                 const GroundCost& cost, const SinkhornConfig& cfg);

/// S(r,c) = d(r,c) - d(r,r)/2 - d(c,c)/2, clamped at 0. Arguments are put in
/// a canonical order first, so S(r,c) and S(c,r) are bitwise equal, and
/// S(r,r) is exactly 0.
double sinkhorn_divergence(const CopulaHistogram& r, const CopulaHistogram& c,
                           const GroundCost& cost, const SinkhornConfig& cfg);

/// Fixed-support entropic Wasserstein barycenter by iterative Bregman
/// projections. Weights must lie on the simplex; zero-weight inputs are
/// ignored.
CopulaHistogram wasserstein_barycenter(std::span<const CopulaHistogram> hists,
                                       std::span<const double> weights, const GroundCost& cost,
                                       const SinkhornConfig& cfg);

/// Uniform-weight convenience overload.
CopulaHistogram wasserstein_barycenter(std::span<const CopulaHistogram> hists,
                                       const GroundCost& cost, const SinkhornConfig& cfg);

/// Dense symmetric n x n matrix.
class DistanceMatrix {
public:
    explicit DistanceMatrix(std::size_t n = 0) : n_(n), values_(n * n, 0.0) {}

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return values_[i * n_ + j]; }

private:
    std::size_t n_;
    std::vector<double> values_;
};

/// Entry (i,j) = sinkhorn_distance(h_i, h_j) for i <= j, mirrored below the
/// diagonal. The diagonal keeps the entropic self-distance. Pairs run in
/// parallel; the result does not depend on the thread count.
DistanceMatrix pairwise_distance_matrix(std::span<const CopulaHistogram> hists, const GroundCost& cost,
                                        const SinkhornConfig& cfg);

}  // namespace depcop
