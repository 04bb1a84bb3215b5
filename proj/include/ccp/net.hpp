#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccp/linalg.hpp"
#include "ccp/rng.hpp"

namespace ccp {

// Lipschitz-continuous alternative to L2 normalization: identity inside the
// unit ball, radial projection outside.
inline Vec norm_clip(const Vec& v) {
    const double n = norm(v);
    if (n <= 1.0) return v;
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
    return out;
}

inline double dot_raw(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// Feed-forward embedding network: affine layers with ReLU on hidden layers,
// identity on the output layer followed by norm_clip.
struct EmbeddingNetwork {
    std::vector<std::size_t> layer_dims;  // d0, hidden..., D
    std::vector<Matrix> weights;          // weights[l]: dims[l+1] x dims[l]
    std::vector<Vec> biases;              // biases[l]: dims[l+1]

    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t output_dim() const { return layer_dims.back(); }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l)
            n += weights[l].data.size() + biases[l].size();
        return n;
    }
};

inline EmbeddingNetwork make_network(const std::vector<std::size_t>& dims,
                                     std::mt19937_64& rng) {
    if (dims.size() < 2) throw std::invalid_argument("network needs >= 2 dims");
    EmbeddingNetwork net;
    net.layer_dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l + 1], dims[l]);
        const double scale = std::sqrt(2.0 / static_cast<double>(dims[l]));
        for (double& x : w.data) x = scale * normal(rng);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(dims[l + 1], 0.0);
    }
    return net;
}

struct ForwardCache {
    std::vector<Vec> activations;  // activations[0] = input, per layer post-activation
    Vec pre_clip;                  // output-layer affine result before norm_clip
    Vec output;
};

inline ForwardCache forward_cached(const EmbeddingNetwork& net, const Vec& x) {
    if (x.size() != net.input_dim())
        throw std::invalid_argument("forward: input has dim " + std::to_string(x.size()) +
                                    ", expected " + std::to_string(net.input_dim()));
    ForwardCache cache;
    cache.activations.reserve(net.num_layers() + 1);
    cache.activations.push_back(x);
    Vec h = x;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const Matrix& w = net.weights[l];
        Vec z(w.rows);
        for (std::size_t r = 0; r < w.rows; ++r)
            z[r] = dot_raw(w.row(r), h.data(), w.cols) + net.biases[l][r];
        const bool last = (l + 1 == net.num_layers());
        if (!last)
            for (double& v : z) v = std::max(0.0, v);
        h = z;
        if (last)
            cache.pre_clip = h;
        else
            cache.activations.push_back(h);
    }
    cache.output = norm_clip(cache.pre_clip);
    return cache;
}

inline Vec forward(const EmbeddingNetwork& net, const Vec& x) {
    return forward_cached(net, x).output;
}

inline Matrix forward_batch(const EmbeddingNetwork& net, const Matrix& inputs) {
    Matrix out(inputs.rows, net.output_dim());
    for (std::size_t i = 0; i < inputs.rows; ++i)
        out.set_row(i, forward(net, inputs.row_vec(i)));
    return out;
}

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vec> biases;
};

inline Gradients zero_gradients(const EmbeddingNetwork& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        g.weights.emplace_back(net.weights[l].rows, net.weights[l].cols);
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

// Backprop of a single sample's upstream embedding gradient into `grads`
// (accumulating, no batch scaling). norm_clip uses the identity branch at
// norm <= 1 and the projected Jacobian (I - y y^T)/||v|| outside.
inline void backward_accumulate(const EmbeddingNetwork& net, const ForwardCache& cache,
                                const Vec& upstream, Gradients& grads) {
    if (upstream.size() != net.output_dim())
        throw std::invalid_argument("backward: upstream gradient dim mismatch");
    const std::size_t L = net.num_layers();
    Vec delta = upstream;

    const double pre_norm = norm(cache.pre_clip);
    if (pre_norm > 1.0) {
        const Vec& y = cache.output;
        const double gy = dot(upstream, y);
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] = (upstream[i] - gy * y[i]) / pre_norm;
    }

    for (std::size_t l = L; l-- > 0;) {
        const Matrix& w = net.weights[l];
        const Vec& a = cache.activations[l];  // layer input
        Matrix& gw = grads.weights[l];
        Vec& gb = grads.biases[l];
        for (std::size_t r = 0; r < w.rows; ++r) {
            const double d = delta[r];
            if (d != 0.0) {
                double* grow = gw.row(r);
                for (std::size_t c = 0; c < w.cols; ++c) grow[c] += d * a[c];
            }
            gb[r] += d;
        }
        if (l == 0) break;
        Vec prev(w.cols, 0.0);
        for (std::size_t r = 0; r < w.rows; ++r) {
            const double d = delta[r];
            if (d == 0.0) continue;
            const double* wrow = w.row(r);
            for (std::size_t c = 0; c < w.cols; ++c) prev[c] += d * wrow[c];
        }
        // ReLU mask of the layer below (activations store post-ReLU values)
        const Vec& act = cache.activations[l];
        for (std::size_t c = 0; c < w.cols; ++c)
            if (act[c] <= 0.0) prev[c] = 0.0;
        delta = std::move(prev);
    }
}

// Batch backward: gradients of (1/B) sum_i upstream_i . f(x_i).
inline Gradients backward(const EmbeddingNetwork& net, const Matrix& inputs,
                          const Matrix& upstream_grads) {
    if (inputs.rows != upstream_grads.rows)
        throw std::invalid_argument("backward: batch size mismatch");
    Gradients grads = zero_gradients(net);
    for (std::size_t i = 0; i < inputs.rows; ++i) {
        ForwardCache cache = forward_cached(net, inputs.row_vec(i));
        backward_accumulate(net, cache, upstream_grads.row_vec(i), grads);
    }
    const double inv = 1.0 / static_cast<double>(inputs.rows);
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        for (double& x : grads.weights[l].data) x *= inv;
        for (double& x : grads.biases[l]) x *= inv;
    }
    return grads;
}

// Maximum over neurons of the absolute sum of input weights; the network
// (without norm_clip) is omega^L-Lipschitz.
inline double omega(const EmbeddingNetwork& net) {
    double best = 0.0;
    for (const Matrix& w : net.weights) {
        for (std::size_t r = 0; r < w.rows; ++r) {
            double s = 0.0;
            const double* row = w.row(r);
            for (std::size_t c = 0; c < w.cols; ++c) s += std::abs(row[c]);
            best = std::max(best, s);
        }
    }
    return best;
}

// Flat-vector Adam with decoupled weight decay.
struct AdamState {
    Vec first_moment;
    Vec second_moment;
    std::uint64_t step_count = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

inline AdamState make_adam(std::size_t param_count, double lr, double weight_decay,
                           double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8) {
    AdamState s;
    s.first_moment.assign(param_count, 0.0);
    s.second_moment.assign(param_count, 0.0);
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    s.weight_decay = weight_decay;
    return s;
}

// One Adam step over a flat parameter view. Decay is applied to the
// parameters before the moment update (decoupled from the moments).
inline void adam_step_flat(Vec& params, const Vec& grads, AdamState& s) {
    if (params.size() != grads.size() || params.size() != s.first_moment.size())
        throw std::invalid_argument("adam: shape mismatch");
    if (!all_finite(grads)) throw std::runtime_error("adam: non-finite gradient");
    s.step_count += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step_count));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (s.weight_decay != 0.0) params[i] -= s.lr * s.weight_decay * params[i];
        s.first_moment[i] = s.beta1 * s.first_moment[i] + (1.0 - s.beta1) * grads[i];
        s.second_moment[i] = s.beta2 * s.second_moment[i] + (1.0 - s.beta2) * grads[i] * grads[i];
        const double mhat = s.first_moment[i] / bc1;
        const double vhat = s.second_moment[i] / bc2;
        params[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

inline Vec flatten_params(const EmbeddingNetwork& net) {
    Vec flat;
    flat.reserve(net.param_count());
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        flat.insert(flat.end(), net.weights[l].data.begin(), net.weights[l].data.end());
        flat.insert(flat.end(), net.biases[l].begin(), net.biases[l].end());
    }
    return flat;
}

inline void unflatten_params(EmbeddingNetwork& net, const Vec& flat) {
    if (flat.size() != net.param_count())
        throw std::invalid_argument("unflatten: parameter count mismatch");
    std::size_t off = 0;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        std::copy(flat.begin() + off, flat.begin() + off + net.weights[l].data.size(),
                  net.weights[l].data.begin());
        off += net.weights[l].data.size();
        std::copy(flat.begin() + off, flat.begin() + off + net.biases[l].size(),
                  net.biases[l].begin());
        off += net.biases[l].size();
    }
}

inline Vec flatten_gradients(const Gradients& g) {
    Vec flat;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        flat.insert(flat.end(), g.weights[l].data.begin(), g.weights[l].data.end());
        flat.insert(flat.end(), g.biases[l].begin(), g.biases[l].end());
    }
    return flat;
}

inline void adam_step(EmbeddingNetwork& net, const Gradients& grads, AdamState& state) {
    Vec p = flatten_params(net);
    adam_step_flat(p, flatten_gradients(grads), state);
    unflatten_params(net, p);
}

// ---- checkpoint format ----------------------------------------------------
// "CCPNET\0" + u32 version (1) + u32 layer-dim count + u64 dims, then per
// layer the weight matrix (row-major) and bias vector as little-endian f64.

namespace detail {
inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}
inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
inline std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
inline void write_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}
inline double read_f64(std::istream& is) {
    std::uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}
}  // namespace detail

inline void save_checkpoint(const EmbeddingNetwork& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write("CCPNET\0", 7);
    detail::write_u32(os, 1);
    detail::write_u32(os, static_cast<std::uint32_t>(net.layer_dims.size()));
    for (std::size_t d : net.layer_dims) detail::write_u64(os, d);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        for (double x : net.weights[l].data) detail::write_f64(os, x);
        for (double x : net.biases[l]) detail::write_f64(os, x);
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline EmbeddingNetwork load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[7];
    is.read(magic, 7);
    if (!is || std::memcmp(magic, "CCPNET\0", 7) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t ndims = detail::read_u32(is);
    std::vector<std::size_t> dims(ndims);
    for (auto& d : dims) d = static_cast<std::size_t>(detail::read_u64(is));
    EmbeddingNetwork net;
    net.layer_dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l + 1], dims[l]);
        for (double& x : w.data) x = detail::read_f64(is);
        Vec b(dims[l + 1]);
        for (double& x : b) x = detail::read_f64(is);
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    return net;
}

}  // namespace ccp
