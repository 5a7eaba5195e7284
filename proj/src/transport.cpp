#include "depcop/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "depcop/error.hpp"
#include "depcop/parallel.hpp"

namespace depcop {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_same_resolution(const CopulaHistogram& h, const GroundCost& cost) {
    if (h.m() != cost.m()) {
        fail(ErrorKind::InvalidData, "histogram resolution " + std::to_string(h.m()) +
                                         " does not match cost resolution " + std::to_string(cost.m()));
    }
}

std::vector<double> log_of(std::span<const double> v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? std::log(v[i]) : kNegInf;
    return out;
}

/// Annealing schedule lambda / 2^S, ..., lambda / 2, lambda, starting near
/// 1 / unit_step.
std::vector<double> lambda_schedule(double lambda, const GroundCost& cost, bool log_domain) {
    std::vector<double> stages{lambda};
    if (!log_domain) return stages;
    const double floor = 1.0 / cost.unit_step();
    double l = lambda;
    while (l / 2.0 >= floor) {
        l /= 2.0;
        stages.push_back(l);
    }
    std::reverse(stages.begin(), stages.end());
    return stages;
}

// Intermediate annealing stages stop at this residual.
constexpr double kStageTolerance = 1e-5;
// Sinkhorn sweeps per stage before handing over to Newton.
constexpr std::size_t kStageSweeps = 300;

// Over-relaxed updates x <- (1 - w) x + w x_sinkhorn share the Sinkhorn fixed
// point. Each stage starts with plain sweeps, estimates their contraction
// rate eta and switches to w = 2 / (1 + sqrt(1 - eta)). w is pulled towards 1
// whenever the residual grows over a window of sweeps.
constexpr std::size_t kRateProbe = 20;
constexpr double kMaxRelaxation = 1.95;
constexpr std::size_t kRelaxationWindow = 200;

// Newton on the semi-dual needs a dense Hessian over the support of c.
constexpr std::size_t kNewtonMaxSupport = 1600;
constexpr std::size_t kNewtonStepsPerStage = 200;

// Log-sum-exp terms this far below the maximum change the sum by less than
// 1e-17 relative and are skipped.
constexpr double kLseCutoff = 40.0;

}  // namespace

// ---------------------------------------------------------------------------

GroundCost::GroundCost(std::size_t m, CostKind kind) : m_(m), kind_(kind) {
    if (m == 0) fail(ErrorKind::InvalidParameter, "cost resolution must be positive");
}

double GroundCost::axis(std::size_t p, std::size_t p2) const {
    const double d = static_cast<double>(p) - static_cast<double>(p2);
    const double md = static_cast<double>(m_);
    return d * d / (md * md);
}

double GroundCost::operator()(std::size_t cell_a, std::size_t cell_b) const {
    const double sq = axis(cell_a / m_, cell_b / m_) + axis(cell_a % m_, cell_b % m_);
    return kind_ == CostKind::SquaredEuclidean ? sq : std::sqrt(sq);
}

double GroundCost::unit_step() const {
    const double md = static_cast<double>(m_);
    return kind_ == CostKind::SquaredEuclidean ? 1.0 / (md * md) : 1.0 / md;
}

std::vector<double> GroundCost::dense() const {
    const std::size_t n = cells();
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (*this)(i, j);
    return out;
}

SinkhornConfig SinkhornConfig::for_resolution(std::size_t m) {
    SinkhornConfig cfg;
    const double md = static_cast<double>(m);
    cfg.lambda = 50.0 * md * md;
    return cfg;
}

void SinkhornConfig::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        fail(ErrorKind::InvalidParameter, "lambda must be positive and finite");
    }
    if (!(tol > 0.0)) fail(ErrorKind::InvalidParameter, "tol must be positive");
    if (max_iter == 0) fail(ErrorKind::InvalidParameter, "max_iter must be positive");
}

// ---------------------------------------------------------------------------

GibbsKernel::GibbsKernel(const GroundCost& cost, double lambda) : cost_(cost), lambda_(lambda) {
    const std::size_t m = cost.m();
    axis_scaled_.resize(m * m);
    axis_kernel_.resize(m * m);
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) {
            axis_scaled_[a * m + b] = lambda * cost.axis(a, b);
            axis_kernel_[a * m + b] = std::exp(-axis_scaled_[a * m + b]);
        }
    }
}

void GibbsKernel::apply_dense(std::span<const double> v, std::span<double> out) const {
    const std::size_t n = cost_.cells();
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(-lambda_ * cost_(i, j)) * v[j];
        out[i] = acc;
    }
}

void GibbsKernel::apply(std::span<const double> v, std::span<double> out) const {
    if (!cost_.separable()) {
        apply_dense(v, out);
        return;
    }
    const std::size_t m = cost_.m();
    // tmp[p'][q] = sum_q' k(q,q') v[p'][q'];  out[p][q] = sum_p' k(p,p') tmp[p'][q]
    std::vector<double> tmp(m * m, 0.0);
    for (std::size_t pp = 0; pp < m; ++pp) {
        for (std::size_t q = 0; q < m; ++q) {
            double acc = 0.0;
            for (std::size_t qq = 0; qq < m; ++qq) acc += axis_kernel_[q * m + qq] * v[pp * m + qq];
            tmp[pp * m + q] = acc;
        }
    }
    for (std::size_t p = 0; p < m; ++p) {
        for (std::size_t q = 0; q < m; ++q) {
            double acc = 0.0;
            for (std::size_t pp = 0; pp < m; ++pp) acc += axis_kernel_[p * m + pp] * tmp[pp * m + q];
            out[p * m + q] = acc;
        }
    }
}

void GibbsKernel::log_apply_dense(std::span<const double> g, std::span<double> out) const {
    const std::size_t n = cost_.cells();
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double hi = kNegInf;
        for (std::size_t j = 0; j < n; ++j) {
            terms[j] = g[j] - lambda_ * cost_(i, j);
            hi = std::max(hi, terms[j]);
        }
        if (hi == kNegInf) {
            out[i] = kNegInf;
            continue;
        }
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(terms[j] - hi);
        out[i] = hi + std::log(acc);
    }
}

void GibbsKernel::log_apply(std::span<const double> g, std::span<double> out) const {
    if (!cost_.separable()) {
        log_apply_dense(g, out);
        return;
    }
    const std::size_t m = cost_.m();
    std::vector<double> tmp(m * m);
    std::vector<double> terms(m);

    // One-axis log-sum-exp: result = log sum_b exp(x[b] - s[a][b]).
    auto lse = [&](const double* s_row, auto&& x_at) {
        double hi = kNegInf;
        for (std::size_t b = 0; b < m; ++b) {
            terms[b] = x_at(b) - s_row[b];
            hi = std::max(hi, terms[b]);
        }
        if (hi == kNegInf) return kNegInf;
        double acc = 0.0;
        const double cutoff = hi - kLseCutoff;
        for (std::size_t b = 0; b < m; ++b)
            if (terms[b] > cutoff) acc += std::exp(terms[b] - hi);
        return hi + std::log(acc);
    };

    for (std::size_t pp = 0; pp < m; ++pp) {
        const double* row = &g[pp * m];
        for (std::size_t q = 0; q < m; ++q) {
            tmp[pp * m + q] = lse(&axis_scaled_[q * m], [&](std::size_t qq) { return row[qq]; });
        }
    }
    for (std::size_t p = 0; p < m; ++p) {
        for (std::size_t q = 0; q < m; ++q) {
            out[p * m + q] = lse(&axis_scaled_[p * m], [&](std::size_t pp) { return tmp[pp * m + q]; });
        }
    }
}

// ---------------------------------------------------------------------------

TransportPlan::TransportPlan(GroundCost cost, double lambda, std::vector<double> log_u,
                             std::vector<double> log_v)
    : cost_(cost), lambda_(lambda), log_u_(std::move(log_u)), log_v_(std::move(log_v)) {}

double TransportPlan::entry(std::size_t i, std::size_t j) const {
    if (log_u_[i] == kNegInf || log_v_[j] == kNegInf) return 0.0;
    return std::exp(log_u_[i] + log_v_[j] - lambda_ * cost_(i, j));
}

std::vector<double> TransportPlan::dense() const {
    const std::size_t n = cells();
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = entry(i, j);
    return out;
}

std::vector<double> TransportPlan::row_sums() const {
    const std::size_t n = cells();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (log_u_[i] == kNegInf) continue;
        for (std::size_t j = 0; j < n; ++j) out[i] += entry(i, j);
    }
    return out;
}

std::vector<double> TransportPlan::column_sums() const {
    const std::size_t n = cells();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (log_u_[i] == kNegInf) continue;
        for (std::size_t j = 0; j < n; ++j) out[j] += entry(i, j);
    }
    return out;
}

double TransportPlan::cost_inner_product() const {
    const std::size_t n = cells();
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < n; ++j)
        if (log_v_[j] != kNegInf) cols.push_back(j);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (log_u_[i] == kNegInf) continue;
        for (std::size_t j : cols) {
            const double c = cost_(i, j);
            acc += std::exp(log_u_[i] + log_v_[j] - lambda_ * c) * c;
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------

namespace {

double max_violation(std::span<const double> log_scale, std::span<const double> log_kernel_sum,
                     std::span<const double> target) {
    double worst = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double s = log_scale[i] + log_kernel_sum[i];
        const double marginal = s == kNegInf || std::isnan(s) ? 0.0 : std::exp(s);
        worst = std::max(worst, std::abs(marginal - target[i]));
    }
    return worst;
}

// Newton's method on the semi-dual. The row potential is eliminated by an
// exact row projection,
//
//   psi(g) = <c, g> - sum_i r_i log sum_j exp(g_j - lambda C_ij),
//
// a smooth concave function of the column potential over the support of c.
// Steps are damped Levenberg-Marquardt style and must pass an Armijo test.
class SemiDualNewton {
public:
    SemiDualNewton(const CopulaHistogram& r, const CopulaHistogram& c, const GroundCost& cost, double lambda) {
        for (std::size_t i = 0; i < r.cells(); ++i)
            if (r.mass()[i] > 0.0) rows_.push_back(i);
        for (std::size_t j = 0; j < c.cells(); ++j)
            if (c.mass()[j] > 0.0) cols_.push_back(j);
        const auto nr = static_cast<Eigen::Index>(rows_.size());
        const auto nc = static_cast<Eigen::Index>(cols_.size());
        r_.resize(nr);
        c_.resize(nc);
        scaled_cost_.resize(nr, nc);
        for (Eigen::Index p = 0; p < nr; ++p) r_[p] = r.mass()[rows_[static_cast<std::size_t>(p)]];
        for (Eigen::Index q = 0; q < nc; ++q) c_[q] = c.mass()[cols_[static_cast<std::size_t>(q)]];
        for (Eigen::Index q = 0; q < nc; ++q)
            for (Eigen::Index p = 0; p < nr; ++p)
                scaled_cost_(p, q) =
                    lambda * cost(rows_[static_cast<std::size_t>(p)], cols_[static_cast<std::size_t>(q)]);
        plan_.resize(nr, nc);
        trial_plan_.resize(nr, nc);
        lse_.resize(nr);
        trial_lse_.resize(nr);
    }

    // Improves g in place until the column residual drops below tol, the
    // step budget runs out or no acceptable step exists. Leaves f, g with
    // exact rows and returns the column residual.
    double solve(std::vector<double>& f, std::vector<double>& g, double tol, std::size_t steps,
                 std::size_t& iterations) {
        const auto nc = static_cast<Eigen::Index>(cols_.size());
        Eigen::VectorXd beta(nc), trial(nc);
        for (Eigen::Index q = 0; q < nc; ++q) beta[q] = g[cols_[static_cast<std::size_t>(q)]];
        double psi = evaluate(beta, plan_, lse_);
        double mu = 1e-6;
        double residual = std::numeric_limits<double>::infinity();

        for (std::size_t step = 0;; ++step) {
            const Eigen::VectorXd cs = plan_.colwise().sum().transpose();
            const Eigen::VectorXd grad = c_ - cs;
            residual = grad.cwiseAbs().maxCoeff();
            if (residual < tol || step >= steps || !std::isfinite(psi)) break;

            // -Hessian = diag(cs) - P^T diag(1/r) P, singular along the
            // constant shift; the rank-one term removes that direction.
            Eigen::MatrixXd h = -(plan_.transpose() * r_.cwiseInverse().asDiagonal() * plan_);
            h.diagonal() += cs;
            h.array() += cs.mean() / static_cast<double>(nc);
            const double scale = h.diagonal().maxCoeff();
            ++iterations;

            bool accepted = false;
            for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
                Eigen::MatrixXd damped = h;
                damped.diagonal().array() += mu * scale;
                const Eigen::VectorXd d = damped.ldlt().solve(grad);
                trial = beta + d;
                const double value = evaluate(trial, trial_plan_, trial_lse_);
                if (d.allFinite() && std::isfinite(value) && value >= psi + 1e-4 * grad.dot(d)) {
                    beta = trial;
                    psi = value;
                    std::swap(plan_, trial_plan_);
                    std::swap(lse_, trial_lse_);
                    mu = std::max(mu / 10.0, 1e-12);
                    accepted = true;
                } else {
                    mu *= 10.0;
                }
            }
            if (!accepted) break;
        }

        for (Eigen::Index q = 0; q < nc; ++q) g[cols_[static_cast<std::size_t>(q)]] = beta[q];
        for (std::size_t p = 0; p < rows_.size(); ++p)
            f[rows_[p]] = std::log(r_[static_cast<Eigen::Index>(p)]) - lse_[static_cast<Eigen::Index>(p)];
        return residual;
    }

private:
    double evaluate(const Eigen::VectorXd& beta, Eigen::MatrixXd& plan, Eigen::VectorXd& lse) const {
        double value = c_.dot(beta);
        for (Eigen::Index p = 0; p < plan.rows(); ++p) {
            double hi = kNegInf;
            for (Eigen::Index q = 0; q < plan.cols(); ++q) hi = std::max(hi, beta[q] - scaled_cost_(p, q));
            double acc = 0.0;
            for (Eigen::Index q = 0; q < plan.cols(); ++q) {
                plan(p, q) = std::exp(beta[q] - scaled_cost_(p, q) - hi);
                acc += plan(p, q);
            }
            lse[p] = hi + std::log(acc);
            plan.row(p) *= r_[p] / acc;
            value -= r_[p] * lse[p];
        }
        return value;
    }

    std::vector<std::size_t> rows_, cols_;
    Eigen::VectorXd r_, c_, lse_, trial_lse_;
    Eigen::MatrixXd scaled_cost_, plan_, trial_plan_;
};

SinkhornResult sinkhorn_log(const CopulaHistogram& r, const CopulaHistogram& c, const GroundCost& cost,
                            const SinkhornConfig& cfg) {
    const std::size_t n = cost.cells();
    const std::vector<double> log_r = log_of(r.mass());
    const std::vector<double> log_c = log_of(c.mass());
    std::vector<double> f(n, 0.0), g(n, 0.0), a(n), b(n);
    std::size_t support = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (log_c[j] == kNegInf) g[j] = kNegInf;
        else ++support;
    }
    const bool newton = support <= kNewtonMaxSupport;

    auto relax = [](std::vector<double>& x, std::span<const double> log_target, std::span<const double> k,
                    double w) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (log_target[i] == kNegInf) {
                x[i] = kNegInf;
                continue;
            }
            const double exact = log_target[i] - k[i];
            x[i] = x[i] == kNegInf || w == 1.0 ? exact : (1.0 - w) * x[i] + w * exact;
        }
    };

    const std::vector<double> stages = lambda_schedule(cfg.lambda, cost, true);
    std::size_t iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    double previous_lambda = stages.front();

    auto give_up = [&](double lambda) {
        const TransportPlan plan(cost, lambda, f, g);
        throw ConvergenceFailure("Sinkhorn did not converge in " + std::to_string(cfg.max_iter) + " iterations",
                                 plan.cost_inner_product(), residual);
    };

    for (std::size_t s = 0; s < stages.size(); ++s) {
        const double lambda = stages[s];
        const bool final_stage = s + 1 == stages.size();
        const double ratio = lambda / previous_lambda;
        for (std::size_t i = 0; i < n; ++i) {
            if (f[i] != kNegInf) f[i] *= ratio;
            if (g[i] != kNegInf) g[i] *= ratio;
        }
        previous_lambda = lambda;
        const GibbsKernel kernel(cost, lambda);
        const double stage_tol = final_stage ? cfg.tol : std::max(cfg.tol, kStageTolerance);
        // Without Newton the final stage keeps sweeping until max_iter.
        const bool capped = newton || !final_stage;

        double omega = 1.0;
        double probe_start = 0.0;
        double window_start = std::numeric_limits<double>::infinity();
        bool columns_exact = false;
        bool converged = false;

        for (std::size_t it = 0;; ++it) {
            kernel.log_apply(g, a);
            residual = it == 0 ? std::numeric_limits<double>::infinity() : max_violation(f, a, r.mass());
            if (residual < stage_tol && columns_exact) {
                converged = true;
                break;
            }
            if (capped && it >= kStageSweeps) break;
            if (iterations >= cfg.max_iter) give_up(lambda);
            if (it == kRateProbe / 2) probe_start = residual;
            if (it == kRateProbe && probe_start > 0.0) {
                const double eta = std::pow(residual / probe_start, 2.0 / static_cast<double>(kRateProbe));
                if (eta < 1.0) omega = std::min(kMaxRelaxation, 2.0 / (1.0 + std::sqrt(1.0 - eta)));
            }
            if (it > kRateProbe && it % kRelaxationWindow == 0) {
                if (residual > 2.0 * window_start) omega = 1.0 + 0.5 * (omega - 1.0);
                window_start = residual;
            }
            // Once rows are within tolerance only the columns need an exact
            // projection.
            const bool polish = residual < stage_tol;
            if (!polish) relax(f, log_r, a, omega);
            kernel.log_apply(f, b);
            const double w = polish ? 1.0 : omega;
            relax(g, log_c, b, w);
            columns_exact = w == 1.0;
            ++iterations;
        }

        if (!converged && newton) {
            SemiDualNewton solver(r, c, cost, lambda);
            const std::size_t budget = cfg.max_iter > iterations ? cfg.max_iter - iterations : 0;
            residual = solver.solve(f, g, stage_tol, std::min(budget, kNewtonStepsPerStage), iterations);
            converged = residual < stage_tol;
        }
        if (final_stage && !converged) give_up(lambda);
    }

    TransportPlan plan(cost, cfg.lambda, std::move(f), std::move(g));
    const double value = plan.cost_inner_product();
    return SinkhornResult{value, std::move(plan), iterations, residual};
}

SinkhornResult sinkhorn_plain(const CopulaHistogram& r, const CopulaHistogram& c, const GroundCost& cost,
                              const SinkhornConfig& cfg) {
    const std::size_t n = cost.cells();
    const GibbsKernel kernel(cost, cfg.lambda);
    std::vector<double> u(n, 1.0), v(n, 1.0), kv(n), ku(n);
    const auto rm = r.mass();
    const auto cm = c.mass();

    auto scale = [&](std::span<const double> target, std::span<const double> k, std::span<double> out) {
        for (std::size_t i = 0; i < n; ++i) {
            if (target[i] == 0.0) {
                out[i] = 0.0;
                continue;
            }
            if (!(k[i] > 0.0) || !std::isfinite(target[i] / k[i])) {
                fail(ErrorKind::UnderflowDetected,
                     "Gibbs kernel underflow at lambda=" + std::to_string(cfg.lambda) +
                         "; retry with log-domain iterations");
            }
            out[i] = target[i] / k[i];
        }
    };

    double residual = std::numeric_limits<double>::infinity();
    std::size_t iterations = 0;
    for (std::size_t it = 0;; ++it) {
        kernel.apply(v, kv);
        if (it > 0) {
            residual = 0.0;
            for (std::size_t i = 0; i < n; ++i) residual = std::max(residual, std::abs(u[i] * kv[i] - rm[i]));
            if (residual < cfg.tol) break;
        }
        if (iterations >= cfg.max_iter) {
            const TransportPlan plan(cost, cfg.lambda, log_of(u), log_of(v));
            throw ConvergenceFailure("Sinkhorn did not converge in " + std::to_string(cfg.max_iter) +
                                         " iterations",
                                     plan.cost_inner_product(), residual);
        }
        scale(rm, kv, u);
        kernel.apply(u, ku);
        scale(cm, ku, v);
        ++iterations;
    }
    TransportPlan plan(cost, cfg.lambda, log_of(u), log_of(v));
    const double value = plan.cost_inner_product();
    return SinkhornResult{value, std::move(plan), iterations, residual};
}

}  // namespace

SinkhornResult sinkhorn_distance(const CopulaHistogram& r, const CopulaHistogram& c, const GroundCost& cost,
                                 const SinkhornConfig& cfg) {
    cfg.validate();
    require_same_resolution(r, cost);
    require_same_resolution(c, cost);
    return cfg.log_domain ? sinkhorn_log(r, c, cost, cfg) : sinkhorn_plain(r, c, cost, cfg);
}

double sinkhorn_divergence(const CopulaHistogram& r, const CopulaHistogram& c, const GroundCost& cost,
                           const SinkhornConfig& cfg) {
    if (r == c) {
        cfg.validate();
        require_same_resolution(r, cost);
        return 0.0;
    }
    const bool swap = std::lexicographical_compare(c.mass().begin(), c.mass().end(), r.mass().begin(),
                                                   r.mass().end());
    const CopulaHistogram& first = swap ? c : r;
    const CopulaHistogram& second = swap ? r : c;
    const double cross = sinkhorn_distance(first, second, cost, cfg).value;
    const double self_first = sinkhorn_distance(first, first, cost, cfg).value;
    const double self_second = sinkhorn_distance(second, second, cost, cfg).value;
    return std::max(0.0, cross - 0.5 * self_first - 0.5 * self_second);
}

// ---------------------------------------------------------------------------

namespace {

struct BarycenterInput {
    std::vector<double> log_p;
    std::span<const double> p;
    double weight;
};

// Anderson mixing over the potentials g. The Bregman sweep is a fixed-point
// map g -> G(g) whose slow modes are nearly linear, so extrapolating from
// the last few residuals removes most of them.
class AndersonMixer {
public:
    // Tikhonov weight on the mixing coefficients, relative to the trace of
    // the normal matrix.
    static constexpr double kRegularization = 1e-8;
    // The extrapolated correction is clipped to this multiple of the plain
    // step (max norm).
    static constexpr double kMaxStepRatio = 100.0;

    AndersonMixer(std::size_t dim, std::size_t depth) : dim_(dim), depth_(depth) {}

    void reset() { history_ = 0; has_previous_ = false; }

    // x is the current iterate, gx = G(x); overwrites x with the next iterate.
    // The least-squares fit weighs coordinate i by weight[i].
    void step(std::vector<double>& x, const std::vector<double>& gx, const std::vector<double>& weight) {
        Eigen::VectorXd r(dim_);
        for (std::size_t i = 0; i < dim_; ++i) r[i] = gx[i] - x[i];
        if (has_previous_) {
            const std::size_t slot = next_slot_;
            if (dx_.cols() == 0) {
                dx_.resize(dim_, depth_);
                dr_.resize(dim_, depth_);
            }
            for (std::size_t i = 0; i < dim_; ++i) {
                dx_(i, slot) = x[i] - prev_x_[i];
                dr_(i, slot) = r[i] - prev_r_[i];
            }
            next_slot_ = (next_slot_ + 1) % depth_;
            history_ = std::min(history_ + 1, depth_);
        }
        prev_x_.assign(x.begin(), x.end());
        prev_r_ = r;
        has_previous_ = true;

        if (history_ == 0) {
            x = gx;
            return;
        }
        const auto cols = static_cast<Eigen::Index>(history_);
        const Eigen::MatrixXd dr = dr_.leftCols(cols);
        const Eigen::Map<const Eigen::VectorXd> w(weight.data(), static_cast<Eigen::Index>(dim_));
        const Eigen::MatrixXd a = w.asDiagonal() * dr;
        const Eigen::VectorXd rhs = w.asDiagonal() * r;
        Eigen::MatrixXd normal = a.transpose() * a;
        normal.diagonal().array() += kRegularization * normal.trace() + 1e-300;
        const Eigen::VectorXd gamma = normal.ldlt().solve(a.transpose() * rhs);
        if (!gamma.allFinite()) {
            reset();
            x = gx;
            return;
        }
        Eigen::VectorXd shift = (dx_.leftCols(cols) + dr) * gamma;
        const double limit = kMaxStepRatio * r.cwiseAbs().maxCoeff();
        const double size = shift.cwiseAbs().maxCoeff();
        if (size > limit) shift *= limit / size;
        for (std::size_t i = 0; i < dim_; ++i) x[i] = gx[i] - shift[static_cast<Eigen::Index>(i)];
    }

private:
    std::size_t dim_;
    std::size_t depth_;
    std::size_t history_ = 0;
    std::size_t next_slot_ = 0;
    bool has_previous_ = false;
    std::vector<double> prev_x_;
    Eigen::VectorXd prev_r_;
    Eigen::MatrixXd dx_;
    Eigen::MatrixXd dr_;
};

constexpr std::size_t kAndersonDepth = 6;
// Restart the history after this many sweeps without a new best residual.
constexpr std::size_t kStallLimit = 12;
// Barycenter annealing stages are solved tighter than distance stages.
constexpr double kBarycenterStageTolerance = 1e-5;
constexpr std::size_t kBarycenterStageIterations = 1000;

// Newton's method on the barycenter dual with the row potentials eliminated:
//
//   minimize  Phi(g) = sum_t w_t sum_i p_ti log sum_j exp(g_tj - lambda C_ij)
//   subject to sum_t w_t g_t = 0.
//
// The gradient block t is w_t c_t, c_t the column sums of plan t, so the
// optimum equalizes all c_t. Each Newton step solves the equality-constrained
// quadratic model through the Schur complement of the block-diagonal Hessian
// diag(c_t) - P_t^T diag(1/p_t) P_t (plus a rank-one term against the
// constant shift of each block), with Levenberg-Marquardt damping and an
// Armijo test.
class BarycenterNewton {
public:
    BarycenterNewton(const std::vector<BarycenterInput>& inputs, const GroundCost& cost, double lambda)
        : n_(cost.cells()) {
        for (const auto& in : inputs) {
            Block b;
            b.weight = in.weight;
            for (std::size_t i = 0; i < n_; ++i)
                if (in.p[i] > 0.0) b.rows.push_back(i);
            const auto nr = static_cast<Eigen::Index>(b.rows.size());
            const auto n = static_cast<Eigen::Index>(n_);
            b.p.resize(nr);
            b.scaled_cost.resize(nr, n);
            for (Eigen::Index r = 0; r < nr; ++r) {
                const std::size_t i = b.rows[static_cast<std::size_t>(r)];
                b.p[r] = in.p[i];
                for (Eigen::Index j = 0; j < n; ++j) b.scaled_cost(r, j) = lambda * cost(i, static_cast<std::size_t>(j));
            }
            b.plan.resize(nr, n);
            b.trial_plan.resize(nr, n);
            blocks_.push_back(std::move(b));
        }
    }

    // Improves the stacked potentials g in place. Writes the log of the
    // weighted geometric mean of the column sums to log_b and returns the
    // largest deviation of any column sum from it.
    double solve(std::vector<double>& g, std::vector<double>& log_b, double tol, std::size_t steps,
                 std::size_t& iterations) {
        const std::size_t k = blocks_.size();
        const auto n = static_cast<Eigen::Index>(n_);
        std::vector<Eigen::VectorXd> x(k), trial(k), cs(k);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
        for (std::size_t t = 0; t < k; ++t) {
            x[t] = Eigen::Map<const Eigen::VectorXd>(g.data() + t * n_, n);
            mean += blocks_[t].weight * x[t];
        }
        double phi = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            x[t] -= mean;
            phi += blocks_[t].weight * evaluate(blocks_[t], x[t], blocks_[t].plan);
        }
        double mu = 1e-6;
        double residual = std::numeric_limits<double>::infinity();
        Eigen::VectorXd lb(n);

        for (std::size_t step = 0;; ++step) {
            lb.setZero();
            for (std::size_t t = 0; t < k; ++t) {
                cs[t] = blocks_[t].plan.colwise().sum().transpose();
                lb += blocks_[t].weight * cs[t].array().log().matrix();
            }
            residual = 0.0;
            for (std::size_t t = 0; t < k; ++t)
                residual = std::max(residual, (cs[t].array() - lb.array().exp()).abs().maxCoeff());
            if (!(residual >= tol) || step >= steps || !std::isfinite(phi)) break;

            std::vector<Eigen::MatrixXd> hessian(k);
            std::vector<double> scale(k);
            for (std::size_t t = 0; t < k; ++t) {
                const Block& b = blocks_[t];
                Eigen::MatrixXd h = -(b.plan.transpose() * b.p.cwiseInverse().asDiagonal() * b.plan);
                h.diagonal() += cs[t];
                h.array() += cs[t].mean() / static_cast<double>(n_);
                scale[t] = h.diagonal().maxCoeff();
                hessian[t] = std::move(h);
            }
            ++iterations;

            bool accepted = false;
            for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
                std::vector<Eigen::MatrixXd> inverse(k);
                Eigen::MatrixXd schur = Eigen::MatrixXd::Zero(n, n);
                Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
                for (std::size_t t = 0; t < k; ++t) {
                    Eigen::MatrixXd damped = hessian[t];
                    damped.diagonal().array() += mu * scale[t];
                    inverse[t] = damped.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
                    schur += blocks_[t].weight * inverse[t];
                    rhs -= blocks_[t].weight * (inverse[t] * cs[t]);
                }
                const Eigen::VectorXd nu = schur.ldlt().solve(rhs);
                double slope = 0.0;
                for (std::size_t t = 0; t < k; ++t) {
                    const Eigen::VectorXd d = -(inverse[t] * (cs[t] + nu));
                    slope += blocks_[t].weight * cs[t].dot(d);
                    trial[t] = x[t] + d;
                }
                double value = 0.0;
                if (std::isfinite(slope) && slope < 0.0) {
                    for (std::size_t t = 0; t < k; ++t)
                        value += blocks_[t].weight * evaluate(blocks_[t], trial[t], blocks_[t].trial_plan);
                }
                if (std::isfinite(slope) && slope < 0.0 && std::isfinite(value) && value <= phi + 1e-4 * slope) {
                    for (std::size_t t = 0; t < k; ++t) {
                        x[t] = trial[t];
                        std::swap(blocks_[t].plan, blocks_[t].trial_plan);
                    }
                    phi = value;
                    mu = std::max(mu / 10.0, 1e-12);
                    accepted = true;
                } else {
                    mu *= 10.0;
                }
            }
            if (!accepted) break;
        }

        for (std::size_t t = 0; t < k; ++t)
            for (Eigen::Index j = 0; j < n; ++j) g[t * n_ + static_cast<std::size_t>(j)] = x[t][j];
        for (Eigen::Index j = 0; j < n; ++j) log_b[static_cast<std::size_t>(j)] = lb[j];
        return residual;
    }

private:
    struct Block {
        double weight = 0.0;
        std::vector<std::size_t> rows;
        Eigen::VectorXd p;
        Eigen::MatrixXd scaled_cost, plan, trial_plan;
    };

    // sum_i p_i log sum_j exp(g_j - lambda C_ij); fills the plan with
    // exact rows p.
    static double evaluate(const Block& b, const Eigen::VectorXd& g, Eigen::MatrixXd& plan) {
        double value = 0.0;
        for (Eigen::Index r = 0; r < plan.rows(); ++r) {
            double hi = kNegInf;
            for (Eigen::Index j = 0; j < plan.cols(); ++j) hi = std::max(hi, g[j] - b.scaled_cost(r, j));
            double acc = 0.0;
            for (Eigen::Index j = 0; j < plan.cols(); ++j) {
                plan(r, j) = std::exp(g[j] - b.scaled_cost(r, j) - hi);
                acc += plan(r, j);
            }
            plan.row(r) *= b.p[r] / acc;
            value += b.p[r] * (hi + std::log(acc));
        }
        return value;
    }

    std::size_t n_;
    std::vector<Block> blocks_;
};

// The Newton fallback factors one n x n matrix per input and step.
constexpr std::size_t kBarycenterNewtonMaxCells = 400;
constexpr std::size_t kBarycenterNewtonMaxInputs = 40;

std::vector<double> barycenter_log(const std::vector<BarycenterInput>& inputs, const GroundCost& cost,
                                   const SinkhornConfig& cfg) {
    const std::size_t n = cost.cells();
    const std::size_t k = inputs.size();
    const bool newton_available = n <= kBarycenterNewtonMaxCells && k <= kBarycenterNewtonMaxInputs;
    // g holds all k potentials back to back.
    std::vector<double> g(k * n, 0.0), g_next(k * n), weight(k * n);
    std::vector<double> f(n), phi(k * n), a(n), log_b(n);

    const std::vector<double> stages = lambda_schedule(cfg.lambda, cost, true);
    std::size_t iterations = 0;
    double residual = std::numeric_limits<double>::infinity();
    double previous_lambda = stages.front();

    for (std::size_t s = 0; s < stages.size(); ++s) {
        const double lambda = stages[s];
        const bool final_stage = s + 1 == stages.size();
        const double ratio = lambda / previous_lambda;
        for (double& x : g) x *= ratio;
        previous_lambda = lambda;
        const GibbsKernel kernel(cost, lambda);
        const double stage_tol = final_stage ? cfg.tol : std::max(cfg.tol, kBarycenterStageTolerance);
        AndersonMixer mixer(k * n, kAndersonDepth);
        double best_residual = std::numeric_limits<double>::infinity();
        std::size_t stalled = 0;
        bool newton_tried = false;

        for (std::size_t it = 0;; ++it) {
            // Exact row projections, then the common column marginal b.
            std::fill(log_b.begin(), log_b.end(), 0.0);
            for (std::size_t t = 0; t < k; ++t) {
                const std::span<const double> gt(g.data() + t * n, n);
                const std::span<double> pt(phi.data() + t * n, n);
                kernel.log_apply(gt, a);
                for (std::size_t i = 0; i < n; ++i) f[i] = inputs[t].log_p[i] - a[i];
                kernel.log_apply(f, pt);
                for (std::size_t j = 0; j < n; ++j) log_b[j] += inputs[t].weight * (gt[j] + pt[j]);
            }
            residual = 0.0;
            bool finite = true;
            for (std::size_t t = 0; t < k; ++t) {
                // g_t and f_t may trade a constant; pin it by centering g_t.
                double mean = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t idx = t * n + j;
                    g_next[idx] = log_b[j] - phi[idx];
                    mean += g_next[idx];
                    residual = std::max(residual, std::abs(std::exp(g[idx] + phi[idx]) - std::exp(log_b[j])));
                }
                mean /= static_cast<double>(n);
                for (std::size_t j = 0; j < n; ++j) {
                    g_next[t * n + j] -= mean;
                    finite = finite && std::isfinite(g_next[t * n + j]);
                }
            }
            if (residual < stage_tol) break;
            if (it >= kBarycenterStageIterations && newton_available && !newton_tried) {
                newton_tried = true;
                const std::size_t budget = cfg.max_iter > iterations ? cfg.max_iter - iterations : 0;
                BarycenterNewton newton(inputs, cost, lambda);
                residual = newton.solve(g, log_b, stage_tol, std::min(kNewtonStepsPerStage, budget), iterations);
                if (residual < stage_tol) break;
                mixer.reset();
                best_residual = std::numeric_limits<double>::infinity();
                continue;
            }
            if (!final_stage && it >= kBarycenterStageIterations) break;
            if (iterations >= cfg.max_iter) {
                throw ConvergenceFailure("barycenter did not converge in " + std::to_string(cfg.max_iter) +
                                             " iterations",
                                         std::nan(""), residual);
            }
            ++iterations;
            // Restart the mixing history once it stops paying off.
            if (residual < best_residual) {
                best_residual = residual;
                stalled = 0;
            } else {
                ++stalled;
            }
            if (!finite || stalled >= kStallLimit || residual > 10.0 * best_residual) {
                mixer.reset();
                g = g_next;
                best_residual = residual;
                stalled = 0;
                continue;
            }
            for (std::size_t t = 0; t < k; ++t)
                for (std::size_t j = 0; j < n; ++j) weight[t * n + j] = std::exp(log_b[j]);
            mixer.step(g, g_next, weight);
        }
    }

    std::vector<double> b(n);
    for (std::size_t j = 0; j < n; ++j) b[j] = log_b[j] == kNegInf ? 0.0 : std::exp(log_b[j]);
    return b;
}

std::vector<double> barycenter_plain(const std::vector<BarycenterInput>& inputs, const GroundCost& cost,
                                     const SinkhornConfig& cfg) {
    const std::size_t n = cost.cells();
    const std::size_t k = inputs.size();
    const GibbsKernel kernel(cost, cfg.lambda);
    std::vector<std::vector<double>> u(k, std::vector<double>(n, 1.0));
    std::vector<std::vector<double>> v(k, std::vector<double>(n, 1.0));
    std::vector<std::vector<double>> ktu(k, std::vector<double>(n));
    std::vector<double> kv(n), b(n, 1.0);

    auto underflow = [&] {
        fail(ErrorKind::UnderflowDetected, "Gibbs kernel underflow at lambda=" + std::to_string(cfg.lambda) +
                                               "; retry with log-domain iterations");
    };

    std::size_t iterations = 0;
    for (std::size_t it = 0;; ++it) {
        double residual = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            kernel.apply(v[t], kv);
            for (std::size_t i = 0; i < n; ++i) {
                const double p = inputs[t].p[i];
                if (it > 0) residual = std::max(residual, std::abs(u[t][i] * kv[i] - p));
                if (p == 0.0) {
                    u[t][i] = 0.0;
                } else {
                    if (!(kv[i] > 0.0) || !std::isfinite(p / kv[i])) underflow();
                    u[t][i] = p / kv[i];
                }
            }
        }
        if (it > 0 && residual < cfg.tol) break;
        if (iterations >= cfg.max_iter) {
            throw ConvergenceFailure("barycenter did not converge in " + std::to_string(cfg.max_iter) +
                                         " iterations",
                                     std::nan(""), residual);
        }
        std::fill(b.begin(), b.end(), 1.0);
        for (std::size_t t = 0; t < k; ++t) {
            kernel.apply(u[t], ktu[t]);
            for (std::size_t j = 0; j < n; ++j) b[j] *= std::pow(ktu[t][j], inputs[t].weight);
        }
        for (std::size_t t = 0; t < k; ++t) {
            for (std::size_t j = 0; j < n; ++j) {
                if (b[j] == 0.0) {
                    v[t][j] = 0.0;
                    continue;
                }
                if (!(ktu[t][j] > 0.0)) underflow();
                v[t][j] = b[j] / ktu[t][j];
            }
        }
        ++iterations;
    }
    return b;
}

}  // namespace

CopulaHistogram wasserstein_barycenter(std::span<const CopulaHistogram> hists, std::span<const double> weights,
                                       const GroundCost& cost, const SinkhornConfig& cfg) {
    cfg.validate();
    if (hists.empty()) fail(ErrorKind::InvalidData, "barycenter needs at least one histogram");
    if (weights.size() != hists.size()) fail(ErrorKind::InvalidParameter, "one weight per histogram required");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::InvalidParameter, "weights must be nonnegative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::InvalidParameter, "weights must sum to 1");

    std::vector<BarycenterInput> inputs;
    for (std::size_t t = 0; t < hists.size(); ++t) {
        require_same_resolution(hists[t], cost);
        if (weights[t] == 0.0) continue;
        inputs.push_back(BarycenterInput{log_of(hists[t].mass()), hists[t].mass(), weights[t]});
    }

    std::vector<double> b = cfg.log_domain ? barycenter_log(inputs, cost, cfg) : barycenter_plain(inputs, cost, cfg);
    return CopulaHistogram::normalized(cost.m(), std::move(b));
}

CopulaHistogram wasserstein_barycenter(std::span<const CopulaHistogram> hists, const GroundCost& cost,
                                       const SinkhornConfig& cfg) {
    if (hists.empty()) fail(ErrorKind::InvalidData, "barycenter needs at least one histogram");
    const std::vector<double> weights(hists.size(), 1.0 / static_cast<double>(hists.size()));
    return wasserstein_barycenter(hists, weights, cost, cfg);
}

// ---------------------------------------------------------------------------

DistanceMatrix pairwise_distance_matrix(std::span<const CopulaHistogram> hists, const GroundCost& cost,
                                        const SinkhornConfig& cfg) {
    cfg.validate();
    const std::size_t n = hists.size();
    for (const auto& h : hists) require_same_resolution(h, cost);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) pairs.emplace_back(i, j);

    std::vector<double> values(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t k) {
        const auto [i, j] = pairs[k];
        try {
            values[k] = sinkhorn_distance(hists[i], hists[j], cost, cfg).value;
        } catch (const ConvergenceFailure& e) {
            throw ConvergenceFailure(std::string(e.what()) + " (pair " + std::to_string(i) + ", " +
                                         std::to_string(j) + ")",
                                     e.last_value(), e.residual());
        }
    });

    DistanceMatrix out(n);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, j] = pairs[k];
        out(i, j) = values[k];
        out(j, i) = values[k];
    }
    return out;
}

}  // namespace depcop
