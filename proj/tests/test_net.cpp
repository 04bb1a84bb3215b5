#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ccp/net.hpp"
#include "test_helpers.hpp"

using namespace ccp;

namespace {

EmbeddingNetwork identity_net(std::size_t d) {
    EmbeddingNetwork net;
    net.layer_dims = {d, d};
    Matrix w(d, d);
    for (std::size_t i = 0; i < d; ++i) w(i, i) = 1.0;
    net.weights.push_back(w);
    net.biases.emplace_back(d, 0.0);
    return net;
}

// straight-line re-evaluation of the affine/ReLU/clip stack with naive loops
Vec naive_forward(const EmbeddingNetwork& net, const Vec& x) {
    Vec h = x;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        Vec z(net.weights[l].rows, 0.0);
        for (std::size_t r = 0; r < net.weights[l].rows; ++r) {
            for (std::size_t c = 0; c < net.weights[l].cols; ++c)
                z[r] += net.weights[l](r, c) * h[c];
            z[r] += net.biases[l][r];
            if (l + 1 < net.weights.size() && z[r] < 0.0) z[r] = 0.0;
        }
        h = z;
    }
    double n = 0.0;
    for (double v : h) n += v * v;
    n = std::sqrt(n);
    if (n > 1.0)
        for (double& v : h) v /= n;
    return h;
}

}  // namespace

TEST_CASE("norm_clip") {
    CHECK(norm_clip({0.0, 0.0}) == Vec{0.0, 0.0});
    const Vec clipped = norm_clip({3.0, 4.0});
    CHECK(clipped[0] == doctest::Approx(0.6));
    CHECK(clipped[1] == doctest::Approx(0.8));

    auto rng = substream(7, "normclip");
    Vec v = test::random_vec(rng, 5);
    const double n = norm(v);
    for (double& x : v) x /= n;  // unit norm exactly up to rounding
    const Vec u = norm_clip(v);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(u[i] == doctest::Approx(v[i]).epsilon(1e-12));
}

TEST_CASE("forward identity net") {
    const auto net = identity_net(2);
    const Vec small = forward(net, {0.3, 0.4});
    CHECK(small[0] == doctest::Approx(0.3));
    CHECK(small[1] == doctest::Approx(0.4));
    const Vec big = forward(net, {3.0, 4.0});
    CHECK(big[0] == doctest::Approx(0.6));
    CHECK(big[1] == doctest::Approx(0.8));
}

TEST_CASE("forward matches naive re-evaluation") {
    auto rng = substream(11, "fwd");
    for (int trial = 0; trial < 20; ++trial) {
        const auto net = test::random_net(rng, {3, 5, 2});
        const Vec x = test::random_vec(rng, 3);
        const Vec a = forward(net, x);
        const Vec b = naive_forward(net, x);
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
}

TEST_CASE("forward rejects wrong input dim") {
    const auto net = identity_net(2);
    CHECK_THROWS_AS(forward(net, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("forward output norm bounded") {
    auto rng = substream(13, "norm");
    for (int trial = 0; trial < 50; ++trial) {
        const auto net = test::random_net(rng, {4, 8, 3});
        const Vec y = forward(net, test::random_vec(rng, 4, 3.0));
        CHECK(norm(y) <= 1.0 + 1e-12);
    }
}

TEST_CASE("backward zero upstream gives zero grads") {
    auto rng = substream(17, "bwd0");
    const auto net = test::random_net(rng, {3, 4, 2});
    const Matrix inputs = test::random_matrix(rng, 5, 3);
    const Matrix upstream(5, 2);
    const Gradients g = backward(net, inputs, upstream);
    for (const auto& w : g.weights)
        for (double v : w.data) CHECK(v == 0.0);
    for (const auto& b : g.biases)
        for (double v : b) CHECK(v == 0.0);
}

TEST_CASE("backward linear layer closed form") {
    auto rng = substream(19, "bwdlin");
    // single linear layer, scaled small so the output stays inside the ball
    EmbeddingNetwork net;
    net.layer_dims = {3, 2};
    net.weights.push_back(test::random_matrix(rng, 2, 3, 0.1));
    net.biases.emplace_back(2, 0.0);
    Matrix inputs(1, 3);
    inputs.set_row(0, {0.3, -0.2, 0.5});
    REQUIRE(norm(forward(net, inputs.row_vec(0))) < 1.0);
    Matrix upstream(1, 2);
    upstream.set_row(0, {0.7, -1.1});
    const Gradients g = backward(net, inputs, upstream);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(g.weights[0](r, c) == doctest::Approx(upstream(0, r) * inputs(0, c)));
}

TEST_CASE("backward matches finite differences") {
    auto rng = substream(23, "fd");
    for (int trial = 0; trial < 10; ++trial) {
        auto net = test::random_net(rng, {4, 6, 5, 3});
        const std::size_t B = 4;
        Matrix inputs = test::random_matrix(rng, B, 4);
        const Matrix upstream = test::random_matrix(rng, B, 3);
        for (std::size_t i = 0; i < B; ++i)
            while (test::smoothness_margin(net, inputs.row_vec(i)) < 1e-3)
                inputs.set_row(i, test::random_vec(rng, 4));

        const Gradients g = backward(net, inputs, upstream);
        const Vec analytic = flatten_gradients(g);

        auto objective = [&](const Vec& params) {
            EmbeddingNetwork n2 = net;
            unflatten_params(n2, params);
            double total = 0.0;
            for (std::size_t i = 0; i < B; ++i) {
                const Vec y = forward(n2, inputs.row_vec(i));
                for (std::size_t d = 0; d < y.size(); ++d) total += upstream(i, d) * y[d];
            }
            return total / static_cast<double>(B);
        };
        const Vec numeric = test::finite_difference(objective, flatten_params(net));
        CHECK(test::max_rel_error(analytic, numeric) < 1e-4);
    }
}

TEST_CASE("adam zero gradient") {
    auto rng = substream(29, "adam0");
    auto net = test::random_net(rng, {3, 4, 2});
    const Vec before = flatten_params(net);
    auto state = make_adam(net.param_count(), 0.1, 0.0);
    adam_step(net, zero_gradients(net), state);
    CHECK(flatten_params(net) == before);
    CHECK(state.step_count == 1);
}

TEST_CASE("adam first step hand evaluation") {
    Vec p = {0.0};
    Vec g = {1.0};
    auto state = make_adam(1, 0.1, 0.0);
    adam_step_flat(p, g, state);
    // mhat = 1, vhat = 1, delta = lr / (1 + eps)
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam decoupled weight decay only") {
    Vec p = {1.0};
    Vec g = {0.0};
    auto state = make_adam(1, 0.1, 0.1);
    adam_step_flat(p, g, state);
    CHECK(p[0] == doctest::Approx(0.99));
}

TEST_CASE("adam rejects non-finite gradient") {
    Vec p = {1.0};
    Vec g = {std::numeric_limits<double>::quiet_NaN()};
    auto state = make_adam(1, 0.1, 0.0);
    CHECK_THROWS_AS(adam_step_flat(p, g, state), std::runtime_error);
}

TEST_CASE("omega") {
    EmbeddingNetwork net;
    net.layer_dims = {2, 2};
    Matrix w(2, 2);
    w(0, 0) = 1.0;
    w(0, 1) = -2.0;
    w(1, 0) = 0.5;
    w(1, 1) = 0.5;
    net.weights.push_back(w);
    net.biases.emplace_back(2, 0.0);
    CHECK(omega(net) == doctest::Approx(3.0));

    net.weights[0] = Matrix(2, 2);
    CHECK(omega(net) == doctest::Approx(0.0));

    net.weights[0](0, 0) = 1.0;
    net.weights[0](1, 1) = 1.0;
    CHECK(omega(net) == doctest::Approx(1.0));
}

TEST_CASE("norm_clip is 2-Lipschitz") {
    auto rng = substream(31, "lip");
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec u = test::random_vec(rng, 4, 2.0);
        const Vec v = test::random_vec(rng, 4, 2.0);
        const double lhs = euclidean_distance(norm_clip(u), norm_clip(v));
        CHECK(lhs <= 2.0 * euclidean_distance(u, v) + 1e-12);
    }
}

TEST_CASE("checkpoint round trip") {
    auto rng = substream(37, "ckpt");
    const auto net = test::random_net(rng, {3, 5, 2});
    const auto path = std::filesystem::temp_directory_path() / "ccp_test_net.ckpt";
    save_checkpoint(net, path.string());
    const auto loaded = load_checkpoint(path.string());
    CHECK(loaded.layer_dims == net.layer_dims);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        CHECK(loaded.weights[l].data == net.weights[l].data);
        CHECK(loaded.biases[l] == net.biases[l]);
    }
    std::filesystem::remove(path);
}

TEST_CASE("training step determinism") {
    // identical seed and inputs -> bit-identical parameters after N steps
    for (int run = 0; run < 1; ++run) {
        Vec params[2];
        for (int r = 0; r < 2; ++r) {
            auto rng = substream(41, "det");
            auto net = test::random_net(rng, {3, 4, 2});
            auto state = make_adam(net.param_count(), 1e-2, 1e-4);
            for (int step = 0; step < 20; ++step) {
                const Matrix inputs = test::random_matrix(rng, 4, 3);
                const Matrix upstream = test::random_matrix(rng, 4, 2);
                adam_step(net, backward(net, inputs, upstream), state);
            }
            params[r] = flatten_params(net);
        }
        CHECK(params[0] == params[1]);
    }
}
