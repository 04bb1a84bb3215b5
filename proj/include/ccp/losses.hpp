#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccp/linalg.hpp"

namespace ccp {

enum class LossKind {
    GeneralizedContrastive,  // (iota(d - beta) + alpha)_+
    ContrastiveC1,           // pos d^2, neg (margin - d)_+^2
    ContrastiveC2,           // pos (d - m_plus)_+, neg (m_minus - d)_+
    Triplet,                 // (d_ap - d_an + margin)_+
    MultiSimilarity,         // similarity-based, see multi_similarity_loss
};

struct LossSpec {
    LossKind kind = LossKind::GeneralizedContrastive;
    double alpha = 0.0;     // generalized contrastive shift
    double beta = 0.5;      // generalized contrastive threshold
    double margin = 0.5;    // C1 / triplet margin
    double m_plus = 0.0;    // C2 positive margin
    double m_minus = 0.3841;
    double ms_alpha = 2.0;
    double ms_beta = 40.0;
    double ms_lambda = 0.5;

    static LossSpec generalized_contrastive(double alpha, double beta) {
        if (alpha < 0.0) throw std::invalid_argument("generalized contrastive: alpha < 0");
        if (beta <= 0.0) throw std::invalid_argument("generalized contrastive: beta <= 0");
        LossSpec s;
        s.kind = LossKind::GeneralizedContrastive;
        s.alpha = alpha;
        s.beta = beta;
        return s;
    }
    static LossSpec contrastive_c1(double margin) {
        if (margin <= 0.0) throw std::invalid_argument("c1: margin <= 0");
        LossSpec s;
        s.kind = LossKind::ContrastiveC1;
        s.margin = margin;
        return s;
    }
    static LossSpec contrastive_c2(double m_plus, double m_minus) {
        if (m_plus < 0.0) throw std::invalid_argument("c2: m_plus < 0");
        if (m_minus <= m_plus) throw std::invalid_argument("c2: m_minus <= m_plus");
        LossSpec s;
        s.kind = LossKind::ContrastiveC2;
        s.m_plus = m_plus;
        s.m_minus = m_minus;
        return s;
    }
    static LossSpec triplet(double margin) {
        if (margin <= 0.0) throw std::invalid_argument("triplet: margin <= 0");
        LossSpec s;
        s.kind = LossKind::Triplet;
        s.margin = margin;
        return s;
    }
    static LossSpec multi_similarity(double alpha, double beta, double lambda) {
        if (alpha <= 0.0 || beta <= 0.0)
            throw std::invalid_argument("multi-similarity: alpha and beta must be positive");
        LossSpec s;
        s.kind = LossKind::MultiSimilarity;
        s.ms_alpha = alpha;
        s.ms_beta = beta;
        s.ms_lambda = lambda;
        return s;
    }
};

// Hinge of the chance-constraint surrogate; iota = +1 for same class, -1
// otherwise.
inline double generalized_contrastive(double d, bool same_class, double alpha, double beta) {
    const double iota = same_class ? 1.0 : -1.0;
    return std::max(0.0, iota * (d - beta) + alpha);
}

// 1 iff the pair violates the beta-proximity constraint.
inline int violation_indicator(double d, bool same_class, double beta) {
    const double iota = same_class ? 1.0 : -1.0;
    return iota * (d - beta) >= 0.0 ? 1 : 0;
}

struct PairBatch {
    Matrix embeddings;             // B x D
    std::vector<int> labels;       // B
    Matrix anchor_embeddings;      // A x D (rows == 0 -> in-batch mode)
    std::vector<int> anchor_labels;

    bool has_anchors() const { return anchor_embeddings.rows > 0; }
};

struct BatchLossResult {
    double value = 0.0;
    Matrix embedding_grads;  // B x D, d(loss)/d(embedding)
    Matrix anchor_grads;     // A x D (empty in in-batch mode)
    bool empty = false;      // no contributing terms
};

namespace detail {

// value and d/dd of a distance-based pair loss. Hinge subgradient at 0 is 0.
inline void pair_loss(const LossSpec& spec, double d, bool same, double& value,
                      double& dvalue_dd) {
    value = 0.0;
    dvalue_dd = 0.0;
    switch (spec.kind) {
        case LossKind::GeneralizedContrastive: {
            const double iota = same ? 1.0 : -1.0;
            const double u = iota * (d - spec.beta) + spec.alpha;
            if (u > 0.0) {
                value = u;
                dvalue_dd = iota;
            }
            break;
        }
        case LossKind::ContrastiveC1: {
            if (same) {
                value = d * d;
                dvalue_dd = 2.0 * d;
            } else if (d < spec.margin) {
                const double u = spec.margin - d;
                value = u * u;
                dvalue_dd = -2.0 * u;
            }
            break;
        }
        case LossKind::ContrastiveC2: {
            if (same) {
                if (d > spec.m_plus) {
                    value = d - spec.m_plus;
                    dvalue_dd = 1.0;
                }
            } else if (d < spec.m_minus) {
                value = spec.m_minus - d;
                dvalue_dd = -1.0;
            }
            break;
        }
        default:
            throw std::logic_error("pair_loss: not a pair loss kind");
    }
}

// Adds coeff * d(d)/d(z_i) to gi and the opposite to gj; pairs at zero
// distance contribute no distance gradient.
inline void add_distance_grad(const double* zi, const double* zj, std::size_t dim, double d,
                              double coeff, double* gi, double* gj) {
    if (d <= 0.0 || coeff == 0.0) return;
    for (std::size_t k = 0; k < dim; ++k) {
        const double g = coeff * (zi[k] - zj[k]) / d;
        gi[k] += g;
        gj[k] -= g;
    }
}

}  // namespace detail

inline double dot_raw_similarity(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline BatchLossResult multi_similarity_loss(const PairBatch& batch, double alpha, double beta,
                                             double lambda);

// Mean loss over all contributing terms with exact gradients.
// In-batch mode: unordered pairs i < j (pair losses) or all valid (a, p, n)
// triples (triplet). Anchor mode: every sample against every anchor; triplet
// uses (sample, positive anchor, negative anchor) triples.
inline BatchLossResult batch_loss_and_grads(const LossSpec& spec, const PairBatch& batch) {
    const std::size_t B = batch.embeddings.rows;
    const std::size_t D = batch.embeddings.cols;
    if (batch.labels.size() != B)
        throw std::invalid_argument("batch_loss_and_grads: labels size mismatch");
    if (batch.has_anchors() && batch.anchor_embeddings.cols != D)
        throw std::invalid_argument("batch_loss_and_grads: anchor dim mismatch");

    if (spec.kind == LossKind::MultiSimilarity)
        return multi_similarity_loss(batch, spec.ms_alpha, spec.ms_beta, spec.ms_lambda);

    BatchLossResult res;
    res.embedding_grads = Matrix(B, D);
    res.anchor_grads = Matrix(batch.anchor_embeddings.rows, D);

    double total = 0.0;
    std::size_t terms = 0;

    auto dist = [&](const double* a, const double* b) {
        return std::sqrt(squared_distance(a, b, D));
    };

    if (spec.kind == LossKind::Triplet) {
        const double m = spec.margin;
        if (batch.has_anchors()) {
            const std::size_t A = batch.anchor_embeddings.rows;
            for (std::size_t j = 0; j < B; ++j) {
                const double* z = batch.embeddings.row(j);
                for (std::size_t p = 0; p < A; ++p) {
                    if (batch.anchor_labels[p] != batch.labels[j]) continue;
                    const double dp = dist(z, batch.anchor_embeddings.row(p));
                    for (std::size_t n = 0; n < A; ++n) {
                        if (batch.anchor_labels[n] == batch.labels[j]) continue;
                        const double dn = dist(z, batch.anchor_embeddings.row(n));
                        ++terms;
                        const double u = dp - dn + m;
                        if (u > 0.0) {
                            total += u;
                            detail::add_distance_grad(z, batch.anchor_embeddings.row(p), D, dp,
                                                      1.0, res.embedding_grads.row(j),
                                                      res.anchor_grads.row(p));
                            detail::add_distance_grad(z, batch.anchor_embeddings.row(n), D, dn,
                                                      -1.0, res.embedding_grads.row(j),
                                                      res.anchor_grads.row(n));
                        }
                    }
                }
            }
        } else {
            for (std::size_t a = 0; a < B; ++a) {
                const double* za = batch.embeddings.row(a);
                for (std::size_t p = 0; p < B; ++p) {
                    if (p == a || batch.labels[p] != batch.labels[a]) continue;
                    const double dp = dist(za, batch.embeddings.row(p));
                    for (std::size_t n = 0; n < B; ++n) {
                        if (batch.labels[n] == batch.labels[a]) continue;
                        const double dn = dist(za, batch.embeddings.row(n));
                        ++terms;
                        const double u = dp - dn + m;
                        if (u > 0.0) {
                            total += u;
                            detail::add_distance_grad(za, batch.embeddings.row(p), D, dp, 1.0,
                                                      res.embedding_grads.row(a),
                                                      res.embedding_grads.row(p));
                            detail::add_distance_grad(za, batch.embeddings.row(n), D, dn, -1.0,
                                                      res.embedding_grads.row(a),
                                                      res.embedding_grads.row(n));
                        }
                    }
                }
            }
        }
    } else {
        if (batch.has_anchors()) {
            const std::size_t A = batch.anchor_embeddings.rows;
            for (std::size_t j = 0; j < B; ++j) {
                const double* z = batch.embeddings.row(j);
                for (std::size_t i = 0; i < A; ++i) {
                    const double* a = batch.anchor_embeddings.row(i);
                    const double d = dist(z, a);
                    const bool same = batch.anchor_labels[i] == batch.labels[j];
                    double v, dv;
                    detail::pair_loss(spec, d, same, v, dv);
                    total += v;
                    ++terms;
                    detail::add_distance_grad(z, a, D, d, dv, res.embedding_grads.row(j),
                                              res.anchor_grads.row(i));
                }
            }
        } else {
            for (std::size_t i = 0; i < B; ++i) {
                for (std::size_t j = i + 1; j < B; ++j) {
                    const double* zi = batch.embeddings.row(i);
                    const double* zj = batch.embeddings.row(j);
                    const double d = dist(zi, zj);
                    const bool same = batch.labels[i] == batch.labels[j];
                    double v, dv;
                    detail::pair_loss(spec, d, same, v, dv);
                    total += v;
                    ++terms;
                    detail::add_distance_grad(zi, zj, D, d, dv, res.embedding_grads.row(i),
                                              res.embedding_grads.row(j));
                }
            }
        }
    }

    if (terms == 0) {
        res.empty = true;
        return res;
    }
    const double inv = 1.0 / static_cast<double>(terms);
    res.value = total * inv;
    for (double& g : res.embedding_grads.data) g *= inv;
    for (double& g : res.anchor_grads.data) g *= inv;
    return res;
}

// Multi-similarity over inner-product similarities. Per anchor with non-empty
// positive and negative sets:
//   (1/alpha) log(1 + sum_pos e^{-alpha(S - lambda)})
// + (1/beta)  log(1 + sum_neg e^{ beta(S - lambda)})
// averaged over qualifying anchors. Anchor mode treats each batch sample as
// the MS anchor with the proxy set as candidates.
inline BatchLossResult multi_similarity_loss(const PairBatch& batch, double alpha, double beta,
                                             double lambda) {
    const std::size_t B = batch.embeddings.rows;
    const std::size_t D = batch.embeddings.cols;
    BatchLossResult res;
    res.embedding_grads = Matrix(B, D);
    res.anchor_grads = Matrix(batch.anchor_embeddings.rows, D);

    const bool anchored = batch.has_anchors();
    const std::size_t ncand = anchored ? batch.anchor_embeddings.rows : B;

    auto cand_row = [&](std::size_t c) {
        return anchored ? batch.anchor_embeddings.row(c) : batch.embeddings.row(c);
    };
    auto cand_label = [&](std::size_t c) {
        return anchored ? batch.anchor_labels[c] : batch.labels[c];
    };

    // log(1 + sum e^{x_i}) with max shift
    auto stable_log1psumexp = [](const std::vector<double>& xs) {
        double m = 0.0;
        for (double x : xs) m = std::max(m, x);
        double s = std::exp(-m);
        for (double x : xs) s += std::exp(x - m);
        return m + std::log(s);
    };

    double total = 0.0;
    std::size_t qualifying = 0;

    for (std::size_t a = 0; a < B; ++a) {
        const double* za = batch.embeddings.row(a);
        std::vector<std::size_t> pos, neg;
        std::vector<double> spos, sneg;
        for (std::size_t c = 0; c < ncand; ++c) {
            if (!anchored && c == a) continue;
            const double s = dot_raw_similarity(za, cand_row(c), D);
            if (cand_label(c) == batch.labels[a]) {
                pos.push_back(c);
                spos.push_back(s);
            } else {
                neg.push_back(c);
                sneg.push_back(s);
            }
        }
        if (pos.empty() || neg.empty()) continue;
        ++qualifying;

        std::vector<double> xp(pos.size()), xn(neg.size());
        for (std::size_t i = 0; i < pos.size(); ++i) xp[i] = -alpha * (spos[i] - lambda);
        for (std::size_t i = 0; i < neg.size(); ++i) xn[i] = beta * (sneg[i] - lambda);
        const double lp = stable_log1psumexp(xp);
        const double ln = stable_log1psumexp(xn);
        total += lp / alpha + ln / beta;

        // d loss_a / dS_ap = -e^{xp}/(1+sum e^{xp}); dS/dz via S = za . zc
        const double zp = std::exp(-lp);  // 1 / (1 + sum e^{xp})
        const double zn = std::exp(-ln);
        for (std::size_t i = 0; i < pos.size(); ++i) {
            const double coeff = -std::exp(xp[i]) * zp;
            const double* zc = cand_row(pos[i]);
            double* ga = res.embedding_grads.row(a);
            double* gc = anchored ? res.anchor_grads.row(pos[i])
                                  : res.embedding_grads.row(pos[i]);
            for (std::size_t k = 0; k < D; ++k) {
                ga[k] += coeff * zc[k];
                gc[k] += coeff * za[k];
            }
        }
        for (std::size_t i = 0; i < neg.size(); ++i) {
            const double coeff = std::exp(xn[i]) * zn;
            const double* zc = cand_row(neg[i]);
            double* ga = res.embedding_grads.row(a);
            double* gc = anchored ? res.anchor_grads.row(neg[i])
                                  : res.embedding_grads.row(neg[i]);
            for (std::size_t k = 0; k < D; ++k) {
                ga[k] += coeff * zc[k];
                gc[k] += coeff * za[k];
            }
        }
    }

    if (qualifying == 0) {
        res.empty = true;
        return res;
    }
    const double inv = 1.0 / static_cast<double>(qualifying);
    res.value = total * inv;
    for (double& g : res.embedding_grads.data) g *= inv;
    for (double& g : res.anchor_grads.data) g *= inv;
    return res;
}

}  // namespace ccp
