#include "nlspde/lattice.hpp"

#include <cmath>
#include <string>

#include "nlspde/error.hpp"

namespace nlspde {

namespace {

// Neumaier summation over matrix entries.
struct CompensatedSum {
    Mat sum;
    Mat comp;

    CompensatedSum(Eigen::Index rows, Eigen::Index cols)
        : sum(Mat::Zero(rows, cols)), comp(Mat::Zero(rows, cols)) {}

    template <class Block>
    void add(Eigen::Index col, const Block& x) {
        for (Eigen::Index i = 0; i < sum.rows(); ++i) {
            const double s = sum(i, col);
            const double v = x(i);
            const double t = s + v;
            comp(i, col) += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
            sum(i, col) = t;
        }
    }

    Mat result() const { return sum + comp; }
};

int ipow(int base, int e) {
    int r = 1;
    for (int i = 0; i < e; ++i) r *= base;
    return r;
}

}  // namespace

NoiseLattice NoiseLattice::build(int components, const TimeGrid& tg, Topology topology) {
    require(components >= 1 && components <= 8, ErrorCode::InvalidArgument,
            "noise component count must lie in [1, 8]");
    require(tg.steps() >= 1, ErrorCode::InvalidArgument, "time grid needs at least one step");
    if (topology == Topology::Recombining) {
        require(tg.is_uniform(), ErrorCode::InvalidArgument,
                "recombining lattice needs a uniform time grid");
    }
    NoiseLattice lat;
    lat.n_ = components;
    lat.tg_ = tg;
    lat.topology_ = topology;

    const int K = tg.steps();
    const int B = lat.branches();
    std::int64_t total = 0;
    for (int k = 0; k <= K; ++k) {
        double count = topology == Topology::Recombining ? std::pow(k + 1.0, components)
                                                         : std::pow(static_cast<double>(B), k);
        total += static_cast<std::int64_t>(count);
        require(count <= kNodeGuard && total <= kNodeGuard, ErrorCode::Guard,
                "lattice exceeds " + std::to_string(kNodeGuard) + " nodes at step " +
                    std::to_string(k));
        lat.counts_.push_back(static_cast<int>(count));
    }

    lat.prob_.resize(K + 1);
    lat.w_.resize(K + 1);
    lat.prob_[0] = {1.0};
    lat.w_[0] = Mat::Zero(components, 1);
    const double p = lat.branch_probability();
    for (int k = 0; k < K; ++k) {
        lat.prob_[k + 1].assign(lat.counts_[k + 1], 0.0);
        lat.w_[k + 1] = Mat::Zero(components, lat.counts_[k + 1]);
        for (int node = 0; node < lat.counts_[k]; ++node) {
            for (int b = 0; b < B; ++b) {
                const int c = lat.child(k, node, b);
                lat.prob_[k + 1][c] += p * lat.prob_[k][node];
                if (topology == Topology::Tree) {
                    for (int j = 0; j < components; ++j) {
                        lat.w_[k + 1](j, c) = lat.w_[k](j, node) + lat.increment(k, b, j);
                    }
                }
            }
        }
        if (topology == Topology::Recombining) {
            const double sq = std::sqrt(tg.dt(0));
            for (int node = 0; node < lat.counts_[k + 1]; ++node) {
                const auto s = lat.state(k + 1, node);
                for (int j = 0; j < components; ++j) lat.w_[k + 1](j, node) = (2 * s[j] - (k + 1)) * sq;
            }
        }
    }
    return lat;
}

std::int64_t NoiseLattice::total_nodes() const {
    std::int64_t t = 0;
    for (int c : counts_) t += c;
    return t;
}

int NoiseLattice::child(int k, int node, int branch) const {
    if (topology_ == Topology::Tree) return node + branch * ipow(branches(), k);
    // Digits of node in base k+1 are the up-counts; re-encode in base k+2.
    int out = 0;
    int scale = 1;
    for (int j = 0; j < n_; ++j) {
        const int c = node % (k + 1) + ((branch >> j) & 1);
        node /= (k + 1);
        out += c * scale;
        scale *= (k + 2);
    }
    return out;
}

double NoiseLattice::increment(int k, int branch, int j) const {
    const double s = std::sqrt(tg_.dt(k));
    return ((branch >> j) & 1) ? s : -s;
}

std::vector<int> NoiseLattice::state(int k, int node) const {
    std::vector<int> out;
    if (topology_ == Topology::Recombining) {
        for (int j = 0; j < n_; ++j) {
            out.push_back(node % (k + 1));
            node /= (k + 1);
        }
    } else {
        for (int m = 0; m < k; ++m) {
            out.push_back(node % branches());
            node /= branches();
        }
    }
    return out;
}

AdaptedField::AdaptedField(const NoiseLattice& lat, int rows)
    : rows_(rows), values_(lat.steps() + 1) {}

void AdaptedField::set(int k, Mat m) {
    require(m.rows() == rows_, ErrorCode::InvalidArgument, "field value has wrong row count");
    values_[k] = std::move(m);
}

void AdaptedField::fill(int k, const Vec& v, int nodes) {
    require(v.size() == rows_, ErrorCode::InvalidArgument, "field value has wrong row count");
    values_[k] = v.replicate(1, nodes);
}

Mat step_expectation(const NoiseLattice& lat, int k, const Mat& next, Exec exec) {
    require(k >= 0 && k < lat.steps(), ErrorCode::InvalidArgument, "step out of range");
    require(next.cols() == lat.nodes(k + 1), ErrorCode::InvalidArgument,
            "field does not cover step " + std::to_string(k + 1));
    const int nodes = lat.nodes(k);
    const int B = lat.branches();
    const double p = lat.branch_probability();
    CompensatedSum acc(next.rows(), nodes);
    auto body = [&](int node) {
        for (int b = 0; b < B; ++b) acc.add(node, next.col(lat.child(k, node, b)) * p);
    };
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int node = 0; node < nodes; ++node) body(node);
    } else {
        for (int node = 0; node < nodes; ++node) body(node);
    }
    return acc.result();
}

Mat conditional_expectation(const NoiseLattice& lat, const AdaptedField& field, int k2, int k1,
                            Exec exec) {
    require(0 <= k1 && k1 < k2 && k2 <= lat.steps(), ErrorCode::InvalidArgument,
            "conditional expectation needs 0 <= k1 < k2 <= K");
    require(field.defined(k2), ErrorCode::InvalidArgument,
            "field undefined at step " + std::to_string(k2));
    Mat cur = field.at(k2);
    for (int k = k2 - 1; k >= k1; --k) cur = step_expectation(lat, k, cur, exec);
    return cur;
}

Vec mean(const NoiseLattice& lat, const Mat& values, int k) {
    require(values.cols() == lat.nodes(k), ErrorCode::InvalidArgument, "field does not cover step");
    Mat cur = values;
    for (int m = k - 1; m >= 0; --m) cur = step_expectation(lat, m, cur, Exec::Serial);
    return cur.col(0);
}

AdaptedField stochastic_integral(const NoiseLattice& lat, const AdaptedField& integrand, int j,
                                 int k) {
    require(0 <= j && j < lat.components(), ErrorCode::InvalidArgument, "component out of range");
    require(0 <= k && k <= lat.steps(), ErrorCode::InvalidArgument, "step out of range");
    const int rows = integrand.rows();
    AdaptedField out(lat, rows);
    out.set(0, Mat::Zero(rows, 1));
    for (int m = 0; m < k; ++m) {
        require(integrand.defined(m), ErrorCode::InvalidArgument,
                "integrand undefined at step " + std::to_string(m));
        const Mat& z = integrand.at(m);
        const Mat& prev = out.at(m);
        Mat next(rows, lat.nodes(m + 1));
        std::vector<char> seen(lat.nodes(m + 1), 0);
        for (int node = 0; node < lat.nodes(m); ++node) {
            for (int b = 0; b < lat.branches(); ++b) {
                const int c = lat.child(m, node, b);
                Vec v = prev.col(node) + z.col(node) * lat.increment(m, b, j);
                if (!seen[c]) {
                    next.col(c) = v;
                    seen[c] = 1;
                    continue;
                }
                const double scale = 1.0 + std::max(v.cwiseAbs().maxCoeff(), next.col(c).cwiseAbs().maxCoeff());
                if ((v - next.col(c)).cwiseAbs().maxCoeff() > 1e-12 * scale) {
                    throw Error(ErrorCode::PathDependent,
                                "stochastic integral is path-dependent at step " + std::to_string(m + 1) +
                                    "; use a tree lattice");
                }
            }
        }
        out.set(m + 1, std::move(next));
    }
    return out;
}

MartingalePart martingale_part(const NoiseLattice& lat, int k, const Mat& next, Exec exec) {
    MartingalePart mp;
    mp.mean = step_expectation(lat, k, next, exec);
    const int N = lat.components();
    const int B = lat.branches();
    const int nodes = lat.nodes(k);
    const double scale = std::ldexp(1.0, -(N - 1)) / (2.0 * std::sqrt(lat.time_grid().dt(k)));
    mp.chi.assign(N, Mat::Zero(next.rows(), nodes));
    std::vector<double> node_residual(nodes, 0.0);
    auto body = [&](int node) {
        for (int j = 0; j < N; ++j) {
            CompensatedSum acc(next.rows(), 1);
            for (int b = 0; b < B; ++b) {
                if (!((b >> j) & 1)) continue;
                const int down = b & ~(1 << j);
                acc.add(0, next.col(lat.child(k, node, b)) - next.col(lat.child(k, node, down)));
            }
            mp.chi[j].col(node) = acc.result() * scale;
        }
        double r = 0.0;
        for (int b = 0; b < B; ++b) {
            Vec d = next.col(lat.child(k, node, b)) - mp.mean.col(node);
            for (int j = 0; j < N; ++j) d -= mp.chi[j].col(node) * lat.increment(k, b, j);
            if (d.size() > 0) r = std::max(r, d.cwiseAbs().maxCoeff());
        }
        node_residual[node] = r;
    };
    if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (int node = 0; node < nodes; ++node) body(node);
    } else {
        for (int node = 0; node < nodes; ++node) body(node);
    }
    for (double r : node_residual) mp.residual = std::max(mp.residual, r);
    return mp;
}

nlohmann::json dump_lattice_json(const NoiseLattice& lat) {
    using nlohmann::json;
    json out;
    out["components"] = lat.components();
    out["topology"] = lat.topology() == Topology::Recombining ? "recombining" : "tree";
    out["branch_probability"] = lat.branch_probability();
    out["total_nodes"] = lat.total_nodes();
    json steps = json::array();
    std::vector<json> parents(1, json::array());
    for (int k = 0; k <= lat.steps(); ++k) {
        std::vector<json> next_parents;
        if (k < lat.steps()) next_parents.assign(lat.nodes(k + 1), json::array());
        json nodes = json::array();
        for (int node = 0; node < lat.nodes(k); ++node) {
            json w = json::array();
            for (int j = 0; j < lat.components(); ++j) w.push_back(lat.w(k, node, j));
            nodes.push_back({{"id", node},
                             {"state", lat.state(k, node)},
                             {"probability", lat.probability(k, node)},
                             {"w", w},
                             {"parents", k == 0 ? json::array() : parents[node]}});
            if (k < lat.steps()) {
                for (int b = 0; b < lat.branches(); ++b) {
                    next_parents[lat.child(k, node, b)].push_back({{"parent", node}, {"branch", b}});
                }
            }
        }
        steps.push_back({{"k", k}, {"t", lat.time_grid().knot(k)}, {"nodes", nodes}});
        parents = std::move(next_parents);
    }
    out["steps"] = steps;
    return out;
}

}  // namespace nlspde
