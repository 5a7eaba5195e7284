#include "depcop/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "depcop/error.hpp"
#include "depcop/parallel.hpp"
#include "depcop/random.hpp"

namespace depcop {

namespace {

struct Metric {
    const GroundCost& cost;
    const SinkhornConfig& cfg;
    bool debias;

    double operator()(const CopulaHistogram& h, const CopulaHistogram& c) const {
        return debias ? sinkhorn_divergence(h, c, cost, cfg) : sinkhorn_distance(h, c, cost, cfg).value;
    }
};

// table[i * k + j] = d(h_i, centroid_j)
class DistanceTable {
public:
    DistanceTable(std::size_t n, std::size_t k) : n_(n), k_(k), values_(n * k) {}

    double operator()(std::size_t i, std::size_t j) const { return values_[i * k_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return values_[i * k_ + j]; }

    void fill(std::span<const CopulaHistogram> hists, std::span<const CopulaHistogram> centroids,
              const Metric& d) {
        parallel_for(n_ * k_, [&](std::size_t idx) {
            values_[idx] = d(hists[idx / k_], centroids[idx % k_]);
        });
    }

    void fill_column(std::size_t j, std::span<const CopulaHistogram> hists, const CopulaHistogram& centroid,
                     const Metric& d) {
        parallel_for(n_, [&](std::size_t i) { values_[i * k_ + j] = d(hists[i], centroid); });
    }

    std::vector<std::size_t> nearest() const {
        std::vector<std::size_t> out(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < k_; ++j) {
                if ((*this)(i, j) < (*this)(i, best)) best = j;
            }
            out[i] = best;
        }
        return out;
    }

    double objective(const std::vector<std::size_t>& assignment) const {
        double total = 0.0;
        for (std::size_t i = 0; i < n_; ++i) total += (*this)(i, assignment[i]);
        return total;
    }

private:
    std::size_t n_;
    std::size_t k_;
    std::vector<double> values_;
};

std::vector<std::size_t> cluster_sizes(const std::vector<std::size_t>& assignment, std::size_t k) {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assignment) ++sizes[a];
    return sizes;
}

void repair_empty_clusters(std::span<const CopulaHistogram> hists, std::vector<CopulaHistogram>& centroids,
                           DistanceTable& table, std::vector<std::size_t>& assignment, const Metric& d) {
    const std::size_t k = centroids.size();
    for (std::size_t attempt = 0; attempt < k; ++attempt) {
        const std::vector<std::size_t> sizes = cluster_sizes(assignment, k);
        const auto empty = std::find(sizes.begin(), sizes.end(), std::size_t{0});
        if (empty == sizes.end()) return;
        const auto j = static_cast<std::size_t>(empty - sizes.begin());

        std::size_t farthest = hists.size();
        for (std::size_t i = 0; i < hists.size(); ++i) {
            if (sizes[assignment[i]] < 2) continue;
            if (farthest == hists.size() || table(i, assignment[i]) > table(farthest, assignment[farthest])) {
                farthest = i;
            }
        }
        centroids[j] = hists[farthest];
        table.fill_column(j, hists, centroids[j], d);
        assignment = table.nearest();
        if (cluster_sizes(assignment, k)[j] == 0) assignment[farthest] = j;
    }
}

std::vector<std::size_t> seed_centroids(std::span<const CopulaHistogram> hists, std::size_t k, Rng& rng,
                                        const Metric& d) {
    const std::size_t n = hists.size();
    std::vector<std::size_t> chosen;
    std::vector<bool> taken(n, false);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

    auto take = [&](std::size_t i) {
        chosen.push_back(i);
        taken[i] = true;
    };
    take(std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n))));

    std::vector<double> latest(n);
    while (chosen.size() < k) {
        const CopulaHistogram& last = hists[chosen.back()];
        parallel_for(n, [&](std::size_t i) { latest[i] = taken[i] ? 0.0 : d(hists[i], last); });
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            nearest[i] = std::min(nearest[i], std::max(latest[i], 0.0));
            total += nearest[i];
        }

        const double target = uniform01(rng) * total;
        std::size_t pick = n;
        if (total > 0.0 && std::isfinite(total)) {
            double cumulative = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (taken[i]) continue;
                cumulative += nearest[i];
                if (cumulative > target) {
                    pick = i;
                    break;
                }
            }
        }
        if (pick == n) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && (pick == n || nearest[i] > nearest[pick])) pick = i;
            }
        }
        take(pick);
    }
    return chosen;
}

std::vector<std::size_t> find_medoids(std::span<const CopulaHistogram> hists,
                                      const std::vector<std::size_t>& assignment, std::size_t k,
                                      const Metric& d) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < hists.size(); ++a)
        for (std::size_t b = a + 1; b < hists.size(); ++b)
            if (assignment[a] == assignment[b]) pairs.emplace_back(a, b);

    std::vector<double> values(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t p) { values[p] = d(hists[pairs[p].first], hists[pairs[p].second]); });

    std::vector<double> summed(hists.size(), 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        summed[pairs[p].first] += values[p];
        summed[pairs[p].second] += values[p];
    }
    std::vector<std::size_t> medoids(k, hists.size());
    for (std::size_t i = 0; i < hists.size(); ++i) {
        std::size_t& best = medoids[assignment[i]];
        if (best == hists.size() || summed[i] < summed[best]) best = i;
    }
    return medoids;
}

}  // namespace

ClusterModel cluster_copulas(std::span<const CopulaHistogram> hists, const GroundCost& cost,
                             const SinkhornConfig& cfg, const ClusterOptions& options) {
    cfg.validate();
    const std::size_t n = hists.size();
    const std::size_t k = options.k;
    if (n == 0) fail(ErrorKind::InvalidData, "clustering needs at least one histogram");
    if (k == 0 || k > n) {
        fail(ErrorKind::InvalidParameter,
             "k must lie in [1, " + std::to_string(n) + "], got " + std::to_string(k));
    }
    if (options.max_rounds == 0) fail(ErrorKind::InvalidParameter, "max_rounds must be positive");
    for (const auto& h : hists) {
        if (h.m() != cost.m()) fail(ErrorKind::InvalidData, "histogram resolution does not match the cost");
    }

    const Metric d{cost, cfg, options.debias};
    Rng rng = make_rng(options.seed);

    ClusterModel model;
    model.k = k;
    model.seed = options.seed;
    for (std::size_t i : seed_centroids(hists, k, rng, d)) model.centroids.push_back(hists[i]);

    DistanceTable table(n, k);
    table.fill(hists, model.centroids, d);
    model.assignment = table.nearest();
    repair_empty_clusters(hists, model.centroids, table, model.assignment, d);
    model.objective_trace.push_back(table.objective(model.assignment));

    for (std::size_t round = 1; round <= options.max_rounds; ++round) {
        std::vector<std::vector<CopulaHistogram>> members(k);
        for (std::size_t i = 0; i < n; ++i) members[model.assignment[i]].push_back(hists[i]);

        std::vector<CopulaHistogram> candidates(k);
        parallel_for(k, [&](std::size_t j) {
            candidates[j] = members[j].size() == 1 ? members[j].front()
                                                   : wasserstein_barycenter(members[j], cost, cfg);
        });

        DistanceTable trial(n, k);
        trial.fill(hists, candidates, d);
        for (std::size_t j = 0; j < k; ++j) {
            double before = 0.0;
            double after = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (model.assignment[i] != j) continue;
                before += table(i, j);
                after += trial(i, j);
            }
            if (after <= before) {
                model.centroids[j] = std::move(candidates[j]);
                for (std::size_t i = 0; i < n; ++i) table(i, j) = trial(i, j);
            }
        }

        std::vector<std::size_t> next = table.nearest();
        repair_empty_clusters(hists, model.centroids, table, next, d);
        model.objective_trace.push_back(table.objective(next));
        model.rounds = round;
        const bool stable = next == model.assignment;
        model.assignment = std::move(next);
        if (stable) {
            model.converged = true;
            break;
        }
    }

    model.distances.resize(n);
    for (std::size_t i = 0; i < n; ++i) model.distances[i] = table(i, model.assignment[i]);
    model.medoids = find_medoids(hists, model.assignment, k, d);
    return model;
}

std::vector<CentroidSummary> centroid_report(const ClusterModel& model) {
    std::vector<CentroidSummary> out;
    for (std::size_t j = 0; j < model.k; ++j) {
        CentroidSummary s;
        s.cluster = j;
        s.size = static_cast<std::size_t>(std::count(model.assignment.begin(), model.assignment.end(), j));
        s.centroid = model.centroids[j];
        s.medoid = model.medoids[j];
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace depcop
