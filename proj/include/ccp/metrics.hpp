#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ccp/linalg.hpp"
#include "ccp/losses.hpp"

namespace ccp {

struct RetrievalReport {
    double p_at_1 = 0.0;
    double p_at_r = 0.0;
    double map_at_r = 0.0;
    std::vector<double> per_query_map_at_r;  // valid queries only, in index order
    std::size_t num_queries = 0;             // valid queries
    std::size_t num_skipped = 0;             // queries with R = 0
    double violation_rate = std::numeric_limits<double>::quiet_NaN();
    double violation_beta = std::numeric_limits<double>::quiet_NaN();
    double avg_covering_radius = std::numeric_limits<double>::quiet_NaN();
    double min_proxy_distance = std::numeric_limits<double>::quiet_NaN();
};

// Ascending Euclidean distance, ties by ascending index; exclude_index (the
// query itself when query set == reference set) is omitted.
inline std::vector<std::size_t> rank_references(const Vec& query, const Matrix& references,
                                                std::ptrdiff_t exclude_index = -1) {
    if (references.rows == 0) throw std::invalid_argument("rank_references: empty references");
    if (query.size() != references.cols)
        throw std::invalid_argument("rank_references: dim mismatch");
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(references.rows);
    for (std::size_t i = 0; i < references.rows; ++i) {
        if (static_cast<std::ptrdiff_t>(i) == exclude_index) continue;
        order.emplace_back(squared_distance(query.data(), references.row(i), query.size()), i);
    }
    std::stable_sort(order.begin(), order.end());
    std::vector<std::size_t> idx;
    idx.reserve(order.size());
    for (const auto& [d, i] : order) idx.push_back(i);
    return idx;
}

// MAP@R over the first R ranks: (1/R) sum_i P@i * [i-th retrieval correct].
inline double map_at_r(const std::vector<int>& ranked_labels, int query_label, std::size_t R) {
    if (R == 0) throw std::invalid_argument("map_at_r: R = 0");
    if (ranked_labels.size() < R) throw std::invalid_argument("map_at_r: ranking shorter than R");
    double sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < R; ++i) {
        if (ranked_labels[i] == query_label) {
            ++correct;
            sum += static_cast<double>(correct) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(R);
}

// Every sample queries against all others; R_i = same-class reference count.
// Queries with R = 0 are skipped (and counted); no valid query is an error.
inline RetrievalReport evaluate(const Matrix& embeddings, const std::vector<int>& labels) {
    const std::size_t n = embeddings.rows;
    if (n < 2) throw std::invalid_argument("evaluate: need >= 2 samples");
    if (labels.size() != n) throw std::invalid_argument("evaluate: labels size mismatch");

    RetrievalReport rep;
    double sum_p1 = 0.0, sum_pr = 0.0, sum_map = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
        std::size_t R = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (i != q && labels[i] == labels[q]) ++R;
        if (R == 0) {
            ++rep.num_skipped;
            continue;
        }
        const auto ranked = rank_references(embeddings.row_vec(q), embeddings,
                                            static_cast<std::ptrdiff_t>(q));
        std::vector<int> ranked_labels(ranked.size());
        for (std::size_t i = 0; i < ranked.size(); ++i) ranked_labels[i] = labels[ranked[i]];

        sum_p1 += ranked_labels[0] == labels[q] ? 1.0 : 0.0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < R; ++i)
            if (ranked_labels[i] == labels[q]) ++correct;
        sum_pr += static_cast<double>(correct) / static_cast<double>(R);
        const double m = map_at_r(ranked_labels, labels[q], R);
        sum_map += m;
        rep.per_query_map_at_r.push_back(m);
        ++rep.num_queries;
    }
    if (rep.num_queries == 0) throw std::invalid_argument("evaluate: no valid query");
    const double nq = static_cast<double>(rep.num_queries);
    rep.p_at_1 = sum_p1 / nq;
    rep.p_at_r = sum_pr / nq;
    rep.map_at_r = sum_map / nq;
    return rep;
}

// Fraction of unordered pairs whose proximity indicator fires.
inline double violation_rate(const Matrix& embeddings, const std::vector<int>& labels,
                             double beta) {
    const std::size_t n = embeddings.rows;
    if (n < 2) throw std::invalid_argument("violation_rate: need >= 2 samples");
    std::size_t violations = 0, pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d =
                std::sqrt(squared_distance(embeddings.row(i), embeddings.row(j), embeddings.cols));
            violations += violation_indicator(d, labels[i] == labels[j], beta);
            ++pairs;
        }
    }
    return static_cast<double>(violations) / static_cast<double>(pairs);
}

}  // namespace ccp
