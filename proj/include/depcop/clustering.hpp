#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "depcop/copula.hpp"
#include "depcop/transport.hpp"

namespace depcop {

struct ClusterOptions {
    std::size_t k = 5;
    std::uint64_t seed = 0;
    std::size_t max_rounds = 100;
    /// Use the Sinkhorn divergence instead of the raw dual-Sinkhorn value.
    bool debias = false;
};

struct ClusterModel {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<CopulaHistogram> centroids;
    /// assignment[i] is the cluster of input i.
    std::vector<std::size_t> assignment;
    /// Distance of input i to its centroid.
    std::vector<double> distances;
    /// Sum of distances to assigned centroids, once per round (the first entry
    /// is the seeded assignment).
    std::vector<double> objective_trace;
    /// Member of each cluster with the smallest summed distance to the other
    /// members. Lower index on ties.
    std::vector<std::size_t> medoids;
    std::size_t rounds = 0;
    bool converged = false;
};

/// Lloyd-style k-means over copula histograms.
///
/// Seeding is k-means++ with draw probabilities proportional to the distance
/// to the nearest chosen seed. Each round recomputes every centroid as the
/// uniform-weight barycenter of its members, keeping the previous centroid if
/// the barycenter does not lower the cluster's summed distance, then assigns
/// every input to its nearest centroid (lowest id on ties). An empty cluster
/// is re-seeded with the input farthest from its centroid among clusters of
/// two or more. Stops once an assignment repeats or after max_rounds.
///
/// Deterministic for a given seed, independent of the thread count.
ClusterModel cluster_copulas(std::span<const CopulaHistogram> hists, const GroundCost& cost,
                             const SinkhornConfig& cfg, const ClusterOptions& options);

struct CentroidSummary {
    std::size_t cluster = 0;
    std::size_t size = 0;
    CopulaHistogram centroid;
    std::size_t medoid = 0;
};

std::vector<CentroidSummary> centroid_report(const ClusterModel& model);

}  // namespace depcop
