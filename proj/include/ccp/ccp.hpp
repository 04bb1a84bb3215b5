#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccp/data.hpp"
#include "ccp/kcenter.hpp"
#include "ccp/linalg.hpp"
#include "ccp/losses.hpp"
#include "ccp/metrics.hpp"
#include "ccp/net.hpp"
#include "ccp/rng.hpp"

namespace ccp {

enum class TrainMode { BaselineProxy, CCP, SampleBased };

struct TrainConfig {
    std::vector<std::size_t> net_dims;  // input dim ... embedding dim D
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.99;
    double adam_eps = 1e-8;
    LossSpec loss = LossSpec::generalized_contrastive(0.0, 0.5);
    std::size_t batch_size = 32;
    std::size_t samples_per_class = 4;
    double lambda = 2e-4;
    std::size_t proxies_per_class = 1;
    std::size_t pool_budget = 1;  // candidates sampled per class, b
    std::size_t eval_every = 25;
    std::size_t inner_patience = 3;
    std::size_t global_patience = 60;
    std::size_t max_projections = 100;
    std::size_t max_steps_per_projection = 0;  // 0 = unlimited
    std::size_t total_step_budget = 0;         // 0 = unlimited
    TrainMode mode = TrainMode::CCP;
    std::uint64_t seed = 0;
    double violation_beta = 0.5;   // beta used for the reported violation rate
    double markov_alpha = 1.0;     // alpha used for the reported induced epsilon
};

// Trainable class anchors plus the dataset indices they were initialized from.
struct ProxySet {
    Matrix proxies;                         // (C*P) x D
    std::vector<int> class_of;              // per proxy
    std::vector<std::size_t> source_sample; // dataset index per proxy
};

struct CCPState {
    Vec theta_prev;                 // snapshot theta^(k-1)
    std::size_t projection_index = 0;
    std::size_t inner_bad_evals = 0;
    std::size_t global_bad_evals = 0;
    double best_val_map_at_r = -std::numeric_limits<double>::infinity();
    Vec best_checkpoint;
    double lambda = 0.0;
};

struct TraceRow {
    std::size_t step = 0;        // global Adam steps so far
    std::size_t projection = 0;  // k
    double train_loss = 0.0;
    double val_p_at_1 = 0.0;
    double val_p_at_r = 0.0;
    double val_map_at_r = 0.0;
    double violation_rate = 0.0;
    double avg_covering_radius = 0.0;
    double min_proxy_distance = std::numeric_limits<double>::quiet_NaN();
};

struct ProjectionDiagnostics {
    std::size_t projection = 0;
    std::size_t steps = 0;
    double val_map_at_r = 0.0;
    double avg_covering_radius = 0.0;
    double min_proxy_distance = std::numeric_limits<double>::quiet_NaN();
    double violation_rate = 0.0;
};

struct TrainResult {
    EmbeddingNetwork net;  // globally best checkpoint
    double best_val_map_at_r = 0.0;
    std::vector<TraceRow> trace;
    std::vector<ProjectionDiagnostics> projections;
    std::size_t total_steps = 0;
};

// Proxies equal the current network's embedding of their source samples.
inline ProxySet init_proxies(const EmbeddingNetwork& net,
                             const std::map<int, std::vector<std::size_t>>& selected,
                             const Dataset& dataset) {
    ProxySet ps;
    std::size_t total = 0;
    for (const auto& [cls, ids] : selected) total += ids.size();
    ps.proxies = Matrix(total, net.output_dim());
    std::size_t row = 0;
    for (const auto& [cls, ids] : selected) {
        for (std::size_t id : ids) {
            if (id >= dataset.size())
                throw std::invalid_argument("init_proxies: sample id out of range");
            ps.proxies.set_row(row, forward(net, dataset.inputs.row_vec(id)));
            ps.class_of.push_back(cls);
            ps.source_sample.push_back(id);
            ++row;
        }
    }
    return ps;
}

struct ObjectiveResult {
    double value = 0.0;
    Vec net_grad;       // flat, same layout as flatten_params
    Matrix proxy_grads; // same shape as proxies
    bool empty = false;
};

// Regularized projection objective: (lambda/2)||theta - theta_prev||^2 plus
// the mean proxy-anchored batch loss. The regularizer gradient touches only
// network parameters. theta_prev empty or lambda == 0 drops the regularizer.
inline ObjectiveResult projection_objective(const EmbeddingNetwork& net, const ProxySet& proxies,
                                            const Matrix& batch_inputs,
                                            const std::vector<int>& batch_labels,
                                            const Vec& theta_prev, double lambda,
                                            const LossSpec& spec) {
    const std::size_t B = batch_inputs.rows;
    std::vector<ForwardCache> caches(B);
    PairBatch pb;
    pb.embeddings = Matrix(B, net.output_dim());
    pb.labels = batch_labels;
    for (std::size_t i = 0; i < B; ++i) {
        caches[i] = forward_cached(net, batch_inputs.row_vec(i));
        pb.embeddings.set_row(i, caches[i].output);
    }
    pb.anchor_embeddings = proxies.proxies;
    pb.anchor_labels = proxies.class_of;

    BatchLossResult loss = batch_loss_and_grads(spec, pb);

    Gradients net_grads = zero_gradients(net);
    for (std::size_t i = 0; i < B; ++i)
        backward_accumulate(net, caches[i], loss.embedding_grads.row_vec(i), net_grads);

    ObjectiveResult res;
    res.value = loss.value;
    res.net_grad = flatten_gradients(net_grads);
    res.proxy_grads = loss.anchor_grads;
    res.empty = loss.empty;

    if (lambda != 0.0 && !theta_prev.empty()) {
        const Vec theta = flatten_params(net);
        if (theta.size() != theta_prev.size())
            throw std::invalid_argument("projection_objective: snapshot shape mismatch");
        double sq = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double d = theta[i] - theta_prev[i];
            sq += d * d;
            res.net_grad[i] += lambda * d;
        }
        res.value += 0.5 * lambda * sq;
    }
    return res;
}

namespace detail {

inline Matrix embed_indices(const EmbeddingNetwork& net, const Dataset& ds,
                            const std::vector<std::size_t>& indices) {
    Matrix out(indices.size(), net.output_dim());
    for (std::size_t i = 0; i < indices.size(); ++i)
        out.set_row(i, forward(net, ds.inputs.row_vec(indices[i])));
    return out;
}

inline std::vector<int> gather_labels(const Dataset& ds, const std::vector<std::size_t>& idx) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = ds.labels[idx[i]];
    return out;
}

inline double mean_class_covering_radius(const Matrix& emb, const std::vector<int>& labels) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < emb.rows; ++i) by_class[labels[i]].push_back(i);
    double total = 0.0;
    std::size_t classes = 0;
    for (const auto& [cls, idxs] : by_class) {
        PointCloud cloud;
        cloud.points = Matrix(idxs.size(), emb.cols);
        for (std::size_t i = 0; i < idxs.size(); ++i)
            cloud.points.set_row(i, emb.row_vec(idxs[i]));
        total += average_covering_radius(cloud);
        ++classes;
    }
    return classes ? total / static_cast<double>(classes) : 0.0;
}

inline double min_same_class_proxy_distance(const ProxySet& ps) {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < ps.proxies.rows; ++i)
        for (std::size_t j = i + 1; j < ps.proxies.rows; ++j) {
            if (ps.class_of[i] != ps.class_of[j]) continue;
            const double d = std::sqrt(
                squared_distance(ps.proxies.row(i), ps.proxies.row(j), ps.proxies.cols));
            if (std::isnan(best) || d < best) best = d;
        }
    return best;
}

}  // namespace detail

// The outer projection loop (and its baseline / sample-based reductions).
class CCPTrainer {
public:
    CCPTrainer(const TrainConfig& config, const Dataset& dataset)
        : cfg_(config), ds_(dataset) {
        validate();
        auto init_rng = substream(cfg_.seed, "init");
        net_ = make_network(cfg_.net_dims, init_rng);
        net_adam_ = make_adam(net_.param_count(), cfg_.lr, cfg_.weight_decay, cfg_.adam_beta1,
                              cfg_.adam_beta2, cfg_.adam_eps);
        sampler_ = std::make_unique<MPerClassSampler>(ds_, cfg_.batch_size,
                                                      cfg_.samples_per_class, cfg_.seed);
        pool_rng_ = substream(cfg_.seed, "pool");
        for (std::size_t i : ds_.train_indices) train_by_class_[ds_.labels[i]].push_back(i);
        state_.lambda = effective_lambda();
    }

    TrainResult run() {
        const std::size_t max_proj =
            cfg_.mode == TrainMode::BaselineProxy ? 1 : cfg_.max_projections;
        bool stop = false;
        while (!stop && state_.projection_index < max_proj) {
            stop = run_projection();
            ++state_.projection_index;
        }
        if (!state_.best_checkpoint.empty()) unflatten_params(net_, state_.best_checkpoint);

        TrainResult res;
        res.net = net_;
        res.best_val_map_at_r = state_.best_val_map_at_r;
        res.trace = trace_;
        res.projections = projections_;
        res.total_steps = total_steps_;
        return res;
    }

    // Runs one projection: select + init proxies, snapshot, minimize the
    // regularized objective with early stopping, restore the projection's
    // best checkpoint. Returns true when training as a whole should stop.
    bool run_projection() {
        select_and_init_proxies();
        state_.theta_prev = flatten_params(net_);
        proxy_adam_ = make_adam(proxies_.proxies.data.size(), cfg_.lr, 0.0, cfg_.adam_beta1,
                                cfg_.adam_beta2, cfg_.adam_eps);
        state_.inner_bad_evals = 0;

        double inner_best = -std::numeric_limits<double>::infinity();
        Vec inner_best_net;
        Matrix inner_best_proxies;
        std::size_t proj_steps = 0;
        double last_loss = 0.0;
        bool stop_all = false;

        while (true) {
            if (cfg_.total_step_budget && total_steps_ >= cfg_.total_step_budget) {
                stop_all = true;
                break;
            }
            if (cfg_.max_steps_per_projection && proj_steps >= cfg_.max_steps_per_projection)
                break;

            last_loss = train_step();
            ++proj_steps;
            ++total_steps_;

            if (total_steps_ % cfg_.eval_every != 0) continue;

            const EvalSnapshot ev = evaluate_validation(last_loss);
            if (ev.report.map_at_r > inner_best) {
                inner_best = ev.report.map_at_r;
                inner_best_net = flatten_params(net_);
                inner_best_proxies = proxies_.proxies;
                state_.inner_bad_evals = 0;
            } else {
                ++state_.inner_bad_evals;
            }
            if (ev.report.map_at_r > state_.best_val_map_at_r) {
                state_.best_val_map_at_r = ev.report.map_at_r;
                state_.best_checkpoint = flatten_params(net_);
                state_.global_bad_evals = 0;
            } else {
                ++state_.global_bad_evals;
            }
            if (state_.global_bad_evals >= cfg_.global_patience) {
                stop_all = true;
                break;
            }
            if (state_.inner_bad_evals >= cfg_.inner_patience) break;
        }

        if (!inner_best_net.empty()) {
            unflatten_params(net_, inner_best_net);
            proxies_.proxies = inner_best_proxies;
        }

        ProjectionDiagnostics diag;
        diag.projection = state_.projection_index;
        diag.steps = proj_steps;
        const Matrix val_emb = detail::embed_indices(net_, ds_, ds_.val_indices);
        const auto val_labels = detail::gather_labels(ds_, ds_.val_indices);
        diag.val_map_at_r = evaluate(val_emb, val_labels).map_at_r;
        diag.avg_covering_radius = detail::mean_class_covering_radius(val_emb, val_labels);
        diag.min_proxy_distance = detail::min_same_class_proxy_distance(proxies_);
        diag.violation_rate = violation_rate(val_emb, val_labels, cfg_.violation_beta);
        projections_.push_back(diag);
        return stop_all;
    }

    const EmbeddingNetwork& network() const { return net_; }
    const ProxySet& proxies() const { return proxies_; }
    const CCPState& state() const { return state_; }

private:
    struct EvalSnapshot {
        RetrievalReport report;
    };

    double effective_lambda() const {
        return cfg_.mode == TrainMode::BaselineProxy ? 0.0 : cfg_.lambda;
    }

    void validate() const {
        if (cfg_.pool_budget < cfg_.proxies_per_class)
            throw std::invalid_argument("config: pool budget b must be >= proxies per class");
        if (cfg_.proxies_per_class == 0) throw std::invalid_argument("config: P must be >= 1");
        if (cfg_.eval_every == 0) throw std::invalid_argument("config: eval_every must be >= 1");
        if (ds_.train_indices.empty() || ds_.val_indices.empty())
            throw std::invalid_argument("config: dataset must be split before training");
        std::map<int, std::size_t> counts;
        for (std::size_t i : ds_.train_indices) ++counts[ds_.labels[i]];
        for (const auto& [cls, n] : counts)
            if (n < cfg_.pool_budget)
                throw std::invalid_argument("config: class " + std::to_string(cls) +
                                            " has fewer than b train samples");
    }

    // Per class: draw b candidates from the train split, embed them, run
    // seeded greedy k-center, take the first P.
    void select_and_init_proxies() {
        std::map<int, ClassPool> pools;
        for (const auto& [cls, idxs] : train_by_class_) {
            std::vector<std::size_t> pool_ids = idxs;
            for (std::size_t i = 0; i < cfg_.pool_budget; ++i)
                std::swap(pool_ids[i], pool_ids[i + uniform_index(pool_rng_,
                                                                  pool_ids.size() - i)]);
            pool_ids.resize(cfg_.pool_budget);
            ClassPool pool;
            pool.sample_ids = pool_ids;
            pool.embeddings = detail::embed_indices(net_, ds_, pool_ids);
            pools[cls] = std::move(pool);
        }
        std::map<int, Matrix> previous;
        if (proxies_.proxies.rows > 0) {
            std::map<int, std::vector<std::size_t>> rows_by_class;
            for (std::size_t i = 0; i < proxies_.proxies.rows; ++i)
                rows_by_class[proxies_.class_of[i]].push_back(i);
            for (const auto& [cls, rows] : rows_by_class) {
                Matrix m(rows.size(), proxies_.proxies.cols);
                for (std::size_t i = 0; i < rows.size(); ++i)
                    m.set_row(i, proxies_.proxies.row_vec(rows[i]));
                previous[cls] = std::move(m);
            }
        }
        const auto selected = select_proxies(pools, cfg_.proxies_per_class, previous);
        proxies_ = init_proxies(net_, selected, ds_);
    }

    // One Adam step on (theta, rho); returns the objective value.
    double train_step() {
        const auto batch_idx = sampler_->next_batch();
        Matrix inputs(batch_idx.size(), ds_.input_dim());
        for (std::size_t i = 0; i < batch_idx.size(); ++i)
            inputs.set_row(i, ds_.inputs.row_vec(batch_idx[i]));
        const auto labels = detail::gather_labels(ds_, batch_idx);

        if (cfg_.mode == TrainMode::SampleBased) return sample_based_step(inputs, labels);

        ObjectiveResult obj = projection_objective(net_, proxies_, inputs, labels,
                                                   state_.theta_prev, effective_lambda(),
                                                   cfg_.loss);
        if (!std::isfinite(obj.value))
            throw std::runtime_error("training: non-finite loss at step " +
                                     std::to_string(total_steps_));
        Vec params = flatten_params(net_);
        adam_step_flat(params, obj.net_grad, net_adam_);
        unflatten_params(net_, params);

        adam_step_flat(proxies_.proxies.data, obj.proxy_grads.data, proxy_adam_);
        for (std::size_t i = 0; i < proxies_.proxies.rows; ++i)
            proxies_.proxies.set_row(i, norm_clip(proxies_.proxies.row_vec(i)));
        return obj.value;
    }

    // Anchors are live embeddings of the selected samples; their loss
    // gradients flow back into the network instead of a proxy table.
    double sample_based_step(const Matrix& inputs, const std::vector<int>& labels) {
        const std::size_t B = inputs.rows;
        const std::size_t A = proxies_.source_sample.size();
        std::vector<ForwardCache> batch_caches(B), anchor_caches(A);
        PairBatch pb;
        pb.embeddings = Matrix(B, net_.output_dim());
        pb.labels = labels;
        pb.anchor_embeddings = Matrix(A, net_.output_dim());
        pb.anchor_labels = proxies_.class_of;
        for (std::size_t i = 0; i < B; ++i) {
            batch_caches[i] = forward_cached(net_, inputs.row_vec(i));
            pb.embeddings.set_row(i, batch_caches[i].output);
        }
        for (std::size_t a = 0; a < A; ++a) {
            anchor_caches[a] =
                forward_cached(net_, ds_.inputs.row_vec(proxies_.source_sample[a]));
            pb.anchor_embeddings.set_row(a, anchor_caches[a].output);
        }

        BatchLossResult loss = batch_loss_and_grads(cfg_.loss, pb);
        if (!std::isfinite(loss.value))
            throw std::runtime_error("training: non-finite loss at step " +
                                     std::to_string(total_steps_));

        Gradients grads = zero_gradients(net_);
        for (std::size_t i = 0; i < B; ++i)
            backward_accumulate(net_, batch_caches[i], loss.embedding_grads.row_vec(i), grads);
        for (std::size_t a = 0; a < A; ++a)
            backward_accumulate(net_, anchor_caches[a], loss.anchor_grads.row_vec(a), grads);

        Vec flat = flatten_gradients(grads);
        double value = loss.value;
        if (effective_lambda() != 0.0 && !state_.theta_prev.empty()) {
            const Vec theta = flatten_params(net_);
            double sq = 0.0;
            for (std::size_t i = 0; i < theta.size(); ++i) {
                const double d = theta[i] - state_.theta_prev[i];
                sq += d * d;
                flat[i] += effective_lambda() * d;
            }
            value += 0.5 * effective_lambda() * sq;
        }
        Vec params = flatten_params(net_);
        adam_step_flat(params, flat, net_adam_);
        unflatten_params(net_, params);
        // keep the anchor table in sync for diagnostics
        for (std::size_t a = 0; a < A; ++a)
            proxies_.proxies.set_row(a,
                                     forward(net_, ds_.inputs.row_vec(proxies_.source_sample[a])));
        return value;
    }

    EvalSnapshot evaluate_validation(double train_loss) {
        const Matrix val_emb = detail::embed_indices(net_, ds_, ds_.val_indices);
        const auto val_labels = detail::gather_labels(ds_, ds_.val_indices);
        EvalSnapshot snap;
        snap.report = evaluate(val_emb, val_labels);

        TraceRow row;
        row.step = total_steps_;
        row.projection = state_.projection_index;
        row.train_loss = train_loss;
        row.val_p_at_1 = snap.report.p_at_1;
        row.val_p_at_r = snap.report.p_at_r;
        row.val_map_at_r = snap.report.map_at_r;
        row.violation_rate = violation_rate(val_emb, val_labels, cfg_.violation_beta);
        row.avg_covering_radius = detail::mean_class_covering_radius(val_emb, val_labels);
        row.min_proxy_distance = detail::min_same_class_proxy_distance(proxies_);
        trace_.push_back(row);
        return snap;
    }

    TrainConfig cfg_;
    const Dataset& ds_;
    EmbeddingNetwork net_;
    AdamState net_adam_;
    AdamState proxy_adam_;
    std::unique_ptr<MPerClassSampler> sampler_;
    std::mt19937_64 pool_rng_;
    std::map<int, std::vector<std::size_t>> train_by_class_;
    ProxySet proxies_;
    CCPState state_;
    std::vector<TraceRow> trace_;
    std::vector<ProjectionDiagnostics> projections_;
    std::size_t total_steps_ = 0;
};

inline TrainResult run_ccp(const TrainConfig& config, const Dataset& dataset) {
    CCPTrainer trainer(config, dataset);
    return trainer.run();
}

}  // namespace ccp
