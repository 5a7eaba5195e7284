#include "depcop/exact_ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "depcop/error.hpp"

namespace depcop {

namespace {

struct Arc {
    std::size_t row;
    std::size_t col;
    double flow;
};

/// Spanning-tree basis over row nodes [0, rows) and column nodes
/// [rows, rows + cols).
class TransportBasis {
public:
    TransportBasis(std::size_t rows, std::size_t cols) : rows_(rows), adjacency_(rows + cols) {}

    std::size_t add(std::size_t row, std::size_t col, double flow) {
        const std::size_t id = arcs_.size();
        arcs_.push_back(Arc{row, col, flow});
        link(id);
        return id;
    }

    void replace(std::size_t id, std::size_t row, std::size_t col, double flow) {
        unlink(id);
        arcs_[id] = Arc{row, col, flow};
        link(id);
    }

    const std::vector<Arc>& arcs() const { return arcs_; }
    Arc& arc(std::size_t id) { return arcs_[id]; }

    std::size_t other(std::size_t id, std::size_t node) const {
        const Arc& a = arcs_[id];
        return node == a.row ? rows_ + a.col : a.row;
    }

    const std::vector<std::size_t>& incident(std::size_t node) const { return adjacency_[node]; }
    std::size_t node_count() const { return adjacency_.size(); }
    std::size_t rows() const { return rows_; }

private:
    void link(std::size_t id) {
        adjacency_[arcs_[id].row].push_back(id);
        adjacency_[rows_ + arcs_[id].col].push_back(id);
    }
    void unlink(std::size_t id) {
        auto drop = [&](std::vector<std::size_t>& v) { v.erase(std::find(v.begin(), v.end(), id)); };
        drop(adjacency_[arcs_[id].row]);
        drop(adjacency_[rows_ + arcs_[id].col]);
    }

    std::size_t rows_;
    std::vector<Arc> arcs_;
    std::vector<std::vector<std::size_t>> adjacency_;
};

}  // namespace

std::vector<double> ExactTransport::dense(std::size_t cells) const {
    std::vector<double> out(cells * cells, 0.0);
    for (const Shipment& s : plan) out[s.from * cells + s.to] += s.mass;
    return out;
}

ExactTransport solve_transportation(std::span<const double> supply, std::span<const double> demand,
                                    const std::function<double(std::size_t, std::size_t)>& cost) {
    const std::size_t rows = supply.size();
    const std::size_t cols = demand.size();
    if (rows == 0 || cols == 0) fail(ErrorKind::InvalidData, "transportation problem needs supply and demand");

    double supply_total = 0.0, demand_total = 0.0;
    for (double s : supply) {
        if (!(s >= 0.0)) fail(ErrorKind::InvalidData, "negative supply");
        supply_total += s;
    }
    for (double d : demand) {
        if (!(d >= 0.0)) fail(ErrorKind::InvalidData, "negative demand");
        demand_total += d;
    }
    if (!(supply_total > 0.0) || !(demand_total > 0.0)) fail(ErrorKind::InvalidData, "empty transport problem");

    std::vector<double> costs(rows * cols);
    double max_cost = 0.0;
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            costs[i * cols + j] = cost(i, j);
            max_cost = std::max(max_cost, std::abs(costs[i * cols + j]));
        }
    }

    // Northwest corner: exactly rows + cols - 1 basic arcs, some possibly zero.
    TransportBasis basis(rows, cols);
    std::vector<char> in_basis(rows * cols, 0);
    {
        std::vector<double> rem_s(supply.begin(), supply.end());
        std::vector<double> rem_d(demand.begin(), demand.end());
        const double scale = supply_total / demand_total;
        for (double& d : rem_d) d *= scale;
        std::size_t i = 0, j = 0;
        for (;;) {
            const double q = std::min(rem_s[i], rem_d[j]);
            const bool last = i + 1 == rows && j + 1 == cols;
            basis.add(i, j, last ? std::max(rem_s[i], rem_d[j]) : q);
            in_basis[i * cols + j] = 1;
            if (last) break;
            const bool row_done = rem_s[i] <= rem_d[j];
            rem_s[i] -= q;
            rem_d[j] -= q;
            if (i + 1 == rows) {
                ++j;
            } else if (j + 1 == cols) {
                ++i;
            } else if (row_done) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    const std::size_t nodes = rows + cols;
    std::vector<double> potential(nodes);
    std::vector<char> seen(nodes);
    std::vector<std::size_t> stack;
    std::vector<std::size_t> parent_arc(nodes);
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

    auto compute_potentials = [&] {
        std::fill(seen.begin(), seen.end(), 0);
        potential[0] = 0.0;
        seen[0] = 1;
        stack.assign(1, 0);
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (std::size_t id : basis.incident(node)) {
                const std::size_t next = basis.other(id, node);
                if (seen[next]) continue;
                const Arc& a = basis.arcs()[id];
                const double c = costs[a.row * cols + a.col];
                // u_row + v_col = c
                potential[next] = c - potential[node];
                seen[next] = 1;
                stack.push_back(next);
            }
        }
    };

    const double optimality_eps = 1e-12 * std::max(1.0, max_cost);
    const std::size_t max_pivots = 50 * nodes * nodes + 1000;

    for (std::size_t pivot = 0;; ++pivot) {
        if (pivot > max_pivots) {
            throw ConvergenceFailure("transportation simplex exceeded its pivot budget", std::nan(""), 0.0);
        }
        compute_potentials();

        double best = -optimality_eps;
        std::size_t enter_row = kNone, enter_col = kNone;
        for (std::size_t i = 0; i < rows; ++i) {
            const double ui = potential[i];
            for (std::size_t j = 0; j < cols; ++j) {
                if (in_basis[i * cols + j]) continue;
                const double reduced = costs[i * cols + j] - ui - potential[rows + j];
                if (reduced < best) {
                    best = reduced;
                    enter_row = i;
                    enter_col = j;
                }
            }
        }
        if (enter_row == kNone) break;

        // Tree path from the entering row node to the entering column node.
        std::fill(seen.begin(), seen.end(), 0);
        std::fill(parent_arc.begin(), parent_arc.end(), kNone);
        const std::size_t source = enter_row;
        const std::size_t target = rows + enter_col;
        seen[source] = 1;
        stack.assign(1, source);
        while (!stack.empty() && !seen[target]) {
            const std::size_t node = stack.back();
            stack.pop_back();
            for (std::size_t id : basis.incident(node)) {
                const std::size_t next = basis.other(id, node);
                if (seen[next]) continue;
                seen[next] = 1;
                parent_arc[next] = id;
                stack.push_back(next);
            }
        }

        // Walking back from the column node, arcs alternate -, +, -, ...
        // ending with a decreasing arc at the entering row.
        std::vector<std::size_t> path;
        for (std::size_t node = target; node != source;) {
            const std::size_t id = parent_arc[node];
            path.push_back(id);
            node = basis.other(id, node);
        }
        double theta = std::numeric_limits<double>::infinity();
        std::size_t leaving = kNone;
        for (std::size_t k = 0; k < path.size(); k += 2) {
            const double flow = basis.arc(path[k]).flow;
            if (flow < theta) {
                theta = flow;
                leaving = path[k];
            }
        }
        theta = std::max(theta, 0.0);
        for (std::size_t k = 0; k < path.size(); ++k) {
            Arc& a = basis.arc(path[k]);
            a.flow = k % 2 == 0 ? std::max(0.0, a.flow - theta) : a.flow + theta;
        }
        const Arc old = basis.arcs()[leaving];
        in_basis[old.row * cols + old.col] = 0;
        basis.replace(leaving, enter_row, enter_col, theta);
        in_basis[enter_row * cols + enter_col] = 1;
    }

    ExactTransport out;
    for (const Arc& a : basis.arcs()) {
        if (a.flow <= 0.0) continue;
        out.value += a.flow * costs[a.row * cols + a.col];
        out.plan.push_back(Shipment{a.row, a.col, a.flow});
    }
    std::sort(out.plan.begin(), out.plan.end(), [](const Shipment& x, const Shipment& y) {
        return x.from != y.from ? x.from < y.from : x.to < y.to;
    });
    return out;
}

ExactTransport exact_ot(const CopulaHistogram& r, const CopulaHistogram& c, const GroundCost& cost) {
    if (r.m() != cost.m() || c.m() != cost.m()) {
        fail(ErrorKind::InvalidData, "histogram resolution does not match the cost");
    }
    std::vector<std::size_t> src, dst;
    std::vector<double> supply, demand;
    for (std::size_t i = 0; i < r.cells(); ++i) {
        if (r.mass()[i] > 0.0) {
            src.push_back(i);
            supply.push_back(r.mass()[i]);
        }
    }
    for (std::size_t j = 0; j < c.cells(); ++j) {
        if (c.mass()[j] > 0.0) {
            dst.push_back(j);
            demand.push_back(c.mass()[j]);
        }
    }
    if (src.size() + dst.size() > kExactOtMaxSupport) {
        fail(ErrorKind::OracleTooLarge, "combined support of " + std::to_string(src.size() + dst.size()) +
                                            " cells exceeds " + std::to_string(kExactOtMaxSupport));
    }

    ExactTransport local =
        solve_transportation(supply, demand, [&](std::size_t i, std::size_t j) { return cost(src[i], dst[j]); });
    for (Shipment& s : local.plan) {
        s.from = src[s.from];
        s.to = dst[s.to];
    }
    return local;
}

}  // namespace depcop
