#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccp/linalg.hpp"

namespace ccp {

struct PointCloud {
    Matrix points;            // N x D
    std::vector<int> labels;  // optional, empty or size N

    std::size_t size() const { return points.rows; }
    std::size_t dim() const { return points.cols; }
};

// max over cloud points of the min distance to any center (given as rows of
// a matrix).
inline double covering_radius_vectors(const PointCloud& cloud, const Matrix& centers) {
    if (centers.rows == 0) throw std::invalid_argument("covering_radius: empty centers");
    if (centers.cols != cloud.dim())
        throw std::invalid_argument("covering_radius: dim mismatch");
    double radius = 0.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.rows; ++c)
            best = std::min(best, squared_distance(cloud.points.row(i), centers.row(c),
                                                   cloud.dim()));
        radius = std::max(radius, best);
    }
    return std::sqrt(radius);
}

inline double covering_radius(const PointCloud& cloud, const std::vector<std::size_t>& centers) {
    if (centers.empty()) throw std::invalid_argument("covering_radius: empty centers");
    Matrix m(centers.size(), cloud.dim());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        if (centers[i] >= cloud.size())
            throw std::invalid_argument("covering_radius: center index out of range");
        m.set_row(i, cloud.points.row_vec(centers[i]));
    }
    return covering_radius_vectors(cloud, m);
}

// Farthest-first traversal (Gonzalez). Seeds are explicit center vectors that
// stay fixed; k new centers are picked from the cloud. With no seeds the
// first center is the lowest-index point attaining max distance from the
// centroid. Ties break by lowest index.
inline std::vector<std::size_t> greedy_k_center(const PointCloud& cloud, const Matrix& seeds,
                                                std::size_t k) {
    const std::size_t n = cloud.size();
    if (k > n) throw std::invalid_argument("greedy_k_center: k > N");
    std::vector<std::size_t> selected;
    if (k == 0) return selected;

    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    std::vector<bool> taken(n, false);

    auto absorb_center = [&](const double* c) {
        for (std::size_t i = 0; i < n; ++i)
            min_sq[i] = std::min(min_sq[i], squared_distance(cloud.points.row(i), c, cloud.dim()));
    };

    std::size_t start = 0;
    if (seeds.rows == 0) {
        Vec centroid(cloud.dim(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < cloud.dim(); ++d)
                centroid[d] += cloud.points(i, d);
        for (double& v : centroid) v /= static_cast<double>(n);
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dd = squared_distance(cloud.points.row(i), centroid.data(), cloud.dim());
            if (dd > best) {
                best = dd;
                start = i;
            }
        }
        selected.push_back(start);
        taken[start] = true;
        absorb_center(cloud.points.row(start));
    } else {
        if (seeds.cols != cloud.dim())
            throw std::invalid_argument("greedy_k_center: seed dim mismatch");
        for (std::size_t s = 0; s < seeds.rows; ++s) absorb_center(seeds.row(s));
    }

    while (selected.size() < k) {
        double best = -1.0;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (min_sq[i] > best) {
                best = min_sq[i];
                pick = i;
            }
        }
        if (pick == n) throw std::logic_error("greedy_k_center: no candidate left");
        selected.push_back(pick);
        taken[pick] = true;
        absorb_center(cloud.points.row(pick));
    }
    return selected;
}

inline std::vector<std::size_t> greedy_k_center(const PointCloud& cloud, std::size_t k) {
    return greedy_k_center(cloud, Matrix(), k);
}

// Exhaustive k-center for small instances; returns the lexicographically
// smallest optimal subset.
inline std::pair<std::vector<std::size_t>, double> exact_k_center(const PointCloud& cloud,
                                                                  std::size_t k) {
    const std::size_t n = cloud.size();
    if (k == 0 || k > n) throw std::invalid_argument("exact_k_center: bad k");
    double combos = 1.0;
    for (std::size_t i = 0; i < k; ++i) combos *= static_cast<double>(n - i) / (i + 1);
    if (combos > 1e6) throw std::invalid_argument("exact_k_center: instance too large");

    std::vector<std::size_t> subset(k);
    for (std::size_t i = 0; i < k; ++i) subset[i] = i;
    std::vector<std::size_t> best_subset;
    double best_radius = std::numeric_limits<double>::infinity();

    while (true) {
        const double r = covering_radius(cloud, subset);
        if (r < best_radius) {
            best_radius = r;
            best_subset = subset;
        }
        // next combination in lexicographic order
        std::size_t i = k;
        while (i-- > 0) {
            if (subset[i] != i + n - k) {
                ++subset[i];
                for (std::size_t j = i + 1; j < k; ++j) subset[j] = subset[j - 1] + 1;
                break;
            }
            if (i == 0) return {best_subset, best_radius};
        }
    }
}

// Mean over k in [1, N] of the covering radius of the first k centers of one
// farthest-first traversal.
inline double average_covering_radius(const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    if (n == 0) throw std::invalid_argument("average_covering_radius: empty cloud");
    const std::vector<std::size_t> order = greedy_k_center(cloud, n);

    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double* c = cloud.points.row(order[k]);
        double radius = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            min_sq[i] = std::min(min_sq[i], squared_distance(cloud.points.row(i), c, cloud.dim()));
            radius = std::max(radius, min_sq[i]);
        }
        total += std::sqrt(radius);
    }
    return total / static_cast<double>(n);
}

struct ClassPool {
    Matrix embeddings;                   // b x D candidate embeddings
    std::vector<std::size_t> sample_ids; // dataset index per candidate
};

// Per class: greedy k-center over the pool seeded with the class's previous
// proxies; the first P picks become the new proxy sources. b = P degenerates
// to taking the whole pool.
inline std::map<int, std::vector<std::size_t>> select_proxies(
    const std::map<int, ClassPool>& per_class_pools, std::size_t proxies_per_class,
    const std::map<int, Matrix>& previous_proxies) {
    std::map<int, std::vector<std::size_t>> out;
    for (const auto& [cls, pool] : per_class_pools) {
        if (pool.embeddings.rows < proxies_per_class)
            throw std::invalid_argument("select_proxies: class " + std::to_string(cls) +
                                        " pool smaller than proxies_per_class");
        PointCloud cloud;
        cloud.points = pool.embeddings;
        Matrix seeds;
        if (auto it = previous_proxies.find(cls); it != previous_proxies.end())
            seeds = it->second;
        const auto picks = greedy_k_center(cloud, seeds, proxies_per_class);
        std::vector<std::size_t> ids;
        ids.reserve(picks.size());
        for (std::size_t p : picks) ids.push_back(pool.sample_ids[p]);
        out[cls] = std::move(ids);
    }
    return out;
}

}  // namespace ccp
