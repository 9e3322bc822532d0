#include <catch2/catch_amalgamated.hpp>

#include <functional>

#include "seqcls/autograd.hpp"
#include "seqcls/finite_diff.hpp"
#include "seqcls/rng.hpp"

using namespace seqcls;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Reduce any node to 1x1 by a fixed random weighting, so per-op gradient
// checks exercise nontrivial upstream gradients.
Node* scalarize(Graph& g, Node* n, Rng& rng) {
    Node* w = g.constant(random_tensor(rng, n->value.rows(), n->value.cols(), 0.1, 1.0));
    Node* weighted = g.mul(n, w);
    Node* col_means = g.mean_rows(weighted);            // 1 x C
    Node* as_col = g.transpose(col_means);              // C x 1
    return g.mean_rows(as_col);                         // 1 x 1
}

/// Runs one operation under the finite-difference oracle. `build` maps the
/// graph plus the parameter nodes (one per registered parameter) to the op
/// output node.
void check_op_gradient(
    const std::vector<std::pair<std::string, Tensor>>& inits,
    const std::function<Node*(Graph&, std::vector<Node*>&)>& build, std::uint64_t seed,
    double tol = 1e-4) {
    ParameterSet params;
    for (const auto& [name, init] : inits) params.add(name, init);

    const auto loss_of = [&](const ParameterSet&) {
        Graph g;
        std::vector<Node*> leaves;
        for (std::size_t i = 0; i < params.size(); ++i) leaves.push_back(&params.node(i));
        Rng rng(seed);
        return scalarize(g, build(g, leaves), rng)->value[0];
    };

    params.zero_grads();
    {
        Graph g;
        std::vector<Node*> leaves;
        for (std::size_t i = 0; i < params.size(); ++i) leaves.push_back(&params.node(i));
        Rng rng(seed);
        g.backward(scalarize(g, build(g, leaves), rng));
    }
    const auto numeric = finite_diff_gradient(loss_of, params, 1e-5);
    const GradMismatch worst = compare_gradients(params, numeric);
    INFO("worst param " << worst.param << "[" << worst.index << "] analytic=" << worst.analytic
                        << " numeric=" << worst.numeric);
    REQUIRE(worst.max_rel_err < tol);
}

} // namespace

TEST_CASE("backward product rule on scalars") {
    ParameterSet params;
    params.add("x", Tensor::from_rows({{2.0}}));
    params.add("y", Tensor::from_rows({{3.0}}));
    Graph g;
    g.backward(g.mul(&params.node(0), &params.node(1)));
    REQUIRE(params.get("x")->grad[0] == 3.0);
    REQUIRE(params.get("y")->grad[0] == 2.0);
}

TEST_CASE("backward leaves unreachable parameters at zero") {
    ParameterSet params;
    params.add("unused", Tensor::from_rows({{4.0, 5.0}}));
    Graph g;
    Node* c = g.constant(Tensor::from_rows({{1.0}}));
    g.backward(g.scale(c, 2.0));
    REQUIRE(params.get("unused")->grad[0] == 0.0);
    REQUIRE(params.get("unused")->grad[1] == 0.0);
}

TEST_CASE("fan-out sums contributions exactly") {
    ParameterSet params;
    params.add("x", Tensor::from_rows({{1.5}}));
    Graph g;
    Node* x = &params.node(0);
    Node* gx1 = g.scale(x, 3.0);
    Node* gx2 = g.scale(x, 3.0);
    g.backward(g.add(gx1, gx2));
    REQUIRE(params.get("x")->grad[0] == 6.0);

    // Same node reused twice: f = y + y with y = 3x, df/dx = 6 exactly.
    params.zero_grads();
    Graph g2;
    Node* y = g2.scale(&params.node(0), 3.0);
    g2.backward(g2.add(y, y));
    REQUIRE(params.get("x")->grad[0] == 6.0);
}

TEST_CASE("backward requires a scalar output on the same graph") {
    ParameterSet params;
    params.add("x", Tensor::from_rows({{1.0, 2.0}}));
    Graph g;
    Node* wide = g.scale(&params.node(0), 2.0);
    REQUIRE_THROWS_AS(g.backward(wide), ContractError);
    REQUIRE_THROWS_AS(g.backward(&params.node(0)), ContractError);
}

TEST_CASE("gradients accumulate until explicitly reset") {
    ParameterSet params;
    params.add("x", Tensor::from_rows({{2.0}}));
    for (int pass = 0; pass < 2; ++pass) {
        Graph g;
        g.backward(g.scale(&params.node(0), 5.0));
    }
    REQUIRE(params.get("x")->grad[0] == 10.0);
    params.zero_grads();
    REQUIRE(params.get("x")->grad[0] == 0.0);
}

TEST_CASE("finite difference oracle on simple functions") {
    ParameterSet params;
    params.add("x", Tensor::from_rows({{3.0}}));
    const auto square = [&](const ParameterSet& p) {
        const double x = p.get("x")->value[0];
        return x * x;
    };
    const auto grad = finite_diff_gradient(square, params, 1e-5);
    REQUIRE(std::abs(grad[0][0] - 6.0) < 1e-6);
    REQUIRE(params.get("x")->value[0] == 3.0);  // restored bitwise

    ParameterSet sum_params;
    Rng rng(21);
    sum_params.add("v", random_tensor(rng, 2, 3, -2.0, 2.0));
    const auto sum_sq = [&](const ParameterSet& p) {
        double acc = 0.0;
        const Tensor& v = p.get("v")->value;
        for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * v[i];
        return acc;
    };
    const auto grad2 = finite_diff_gradient(sum_sq, sum_params, 1e-5);
    const Tensor& v = sum_params.get("v")->value;
    for (std::size_t i = 0; i < v.size(); ++i) {
        REQUIRE(std::abs(grad2[0][i] - 2.0 * v[i]) < 1e-9);
    }
}

TEST_CASE("per-operation gradients match finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(mix_seed(100, seed));
        const std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8), k = 1 + rng.below(8);

        check_op_gradient({{"a", random_tensor(rng, r, c)}, {"b", random_tensor(rng, r, c)}},
                          [](Graph& g, std::vector<Node*>& p) { return g.add(p[0], p[1]); },
                          seed);
        check_op_gradient({{"a", random_tensor(rng, r, c)}, {"b", random_tensor(rng, r, c)}},
                          [](Graph& g, std::vector<Node*>& p) { return g.mul(p[0], p[1]); },
                          seed);
        check_op_gradient({{"a", random_tensor(rng, r, c)}},
                          [](Graph& g, std::vector<Node*>& p) { return g.scale(p[0], -1.7); },
                          seed);
        // Keep inputs away from the relu kink so central differences are valid.
        {
            Tensor a = random_tensor(rng, r, c);
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (std::abs(a[i]) < 1e-3) a[i] = 0.1;
            }
            check_op_gradient({{"a", a}},
                              [](Graph& g, std::vector<Node*>& p) { return g.relu(p[0]); },
                              seed);
        }
        check_op_gradient({{"a", random_tensor(rng, r, c, -3.0, 3.0)}},
                          [](Graph& g, std::vector<Node*>& p) { return g.sigmoid(p[0]); },
                          seed);
        check_op_gradient({{"a", random_tensor(rng, r, c, -3.0, 3.0)}},
                          [](Graph& g, std::vector<Node*>& p) { return g.tanh(p[0]); }, seed);
        check_op_gradient(
            {{"a", random_tensor(rng, r, c, 0.05, 0.95)}},
            [](Graph& g, std::vector<Node*>& p) { return g.log_clamped(p[0], 1e-12, 1.0 - 1e-12); },
            seed);
        check_op_gradient({{"a", random_tensor(rng, r, k)}, {"b", random_tensor(rng, k, c)}},
                          [](Graph& g, std::vector<Node*>& p) { return g.matmul(p[0], p[1]); },
                          seed);
        check_op_gradient({{"a", random_tensor(rng, r, c)}},
                          [](Graph& g, std::vector<Node*>& p) { return g.transpose(p[0]); },
                          seed);
        check_op_gradient(
            {{"a", random_tensor(rng, r, c, -2.0, 2.0)}},
            [](Graph& g, std::vector<Node*>& p) { return g.softmax_rows(p[0]); }, seed);
        check_op_gradient(
            {{"x", random_tensor(rng, r, c, -4.0, 4.0)},
             {"gain", random_tensor(rng, 1, c, 0.5, 1.5)},
             {"bias", random_tensor(rng, 1, c)}},
            [](Graph& g, std::vector<Node*>& p) { return g.layer_norm(p[0], p[1], p[2]); },
            seed);
        check_op_gradient(
            {{"x", random_tensor(rng, r, c)}, {"b", random_tensor(rng, 1, c)}},
            [](Graph& g, std::vector<Node*>& p) { return g.add_row_vector(p[0], p[1]); }, seed);
        check_op_gradient({{"x", random_tensor(rng, r, c)}},
                          [](Graph& g, std::vector<Node*>& p) { return g.mean_rows(p[0]); },
                          seed);
        check_op_gradient(
            {{"x", random_tensor(rng, r, c)}},
            [r](Graph& g, std::vector<Node*>& p) { return g.row(p[0], r / 2); }, seed);
        check_op_gradient(
            {{"x", random_tensor(rng, r, c)}},
            [c](Graph& g, std::vector<Node*>& p) { return g.columns(p[0], 0, (c + 1) / 2); },
            seed);
        check_op_gradient({{"x", random_tensor(rng, r, c)}, {"y", random_tensor(rng, r, k)}},
                          [](Graph& g, std::vector<Node*>& p) {
                              return g.hconcat({p[0], p[1]});
                          },
                          seed);
        check_op_gradient(
            {{"x", random_tensor(rng, r, c)}},
            [r, c](Graph& g, std::vector<Node*>& p) { return g.pick(p[0], r - 1, c - 1); },
            seed);
        {
            const std::size_t width = rng.below(2) ? 3 : 5;
            const std::size_t cout = 1 + rng.below(4);
            check_op_gradient(
                {{"x", random_tensor(rng, r, c)},
                 {"w", random_tensor(rng, width * c, cout)},
                 {"b", random_tensor(rng, 1, cout)}},
                [width](Graph& g, std::vector<Node*>& p) {
                    return g.conv1d_same(p[0], p[1], p[2], width);
                },
                seed);
        }
    }
}

TEST_CASE("cross-entropy of softmax(Wx) matches finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(mix_seed(200, seed));
        ParameterSet params;
        params.add("w", random_tensor(rng, 4, 3));
        const Tensor x = random_tensor(rng, 1, 4);
        const std::size_t true_class = rng.below(3);

        const auto loss_of = [&](const ParameterSet&) {
            Graph g;
            Node* logits = g.matmul(g.constant(x), params.get("w"));
            Node* probs = g.softmax_rows(logits);
            Node* p_true = g.pick(probs, 0, true_class);
            return g.scale(g.log_clamped(p_true, 1e-12, 1.0 - 1e-12), -1.0)->value[0];
        };
        params.zero_grads();
        {
            Graph g;
            Node* logits = g.matmul(g.constant(x), params.get("w"));
            Node* p_true = g.pick(g.softmax_rows(logits), 0, true_class);
            g.backward(g.scale(g.log_clamped(p_true, 1e-12, 1.0 - 1e-12), -1.0));
        }
        const auto numeric = finite_diff_gradient(loss_of, params, 1e-5);
        REQUIRE(compare_gradients(params, numeric).max_rel_err < 1e-4);
    }
}

TEST_CASE("corrupted backward rule is flagged by the oracle") {
    ParameterSet params;
    Rng rng(77);
    params.add("w", random_tensor(rng, 3, 3, 0.5, 1.5));

    // Doubling node with a deliberately wrong local derivative (3 instead
    // of 2). The finite-difference comparison must name the parameter.
    const auto bad_double = [](Graph& g, Node* a) {
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= 2.0;
        return g.custom(std::move(v), {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += 3.0 * n.grad[i];
        });
    };

    const auto loss_of = [&](const ParameterSet& p) {
        Graph g;
        // Forward value is correct; only the backward rule lies.
        Node* doubled = g.constant(p.get("w")->value);
        Tensor v = doubled->value;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= 2.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) acc += v[i];
        return acc / static_cast<double>(v.size());
    };
    params.zero_grads();
    {
        Graph g;
        Node* doubled = bad_double(g, params.get("w"));
        Node* mean_cols = g.mean_rows(doubled);
        g.backward(g.mean_rows(g.transpose(mean_cols)));
    }
    const auto numeric = finite_diff_gradient(loss_of, params, 1e-5);
    const GradMismatch worst = compare_gradients(params, numeric);
    REQUIRE(worst.max_rel_err > 1e-4);
    REQUIRE(worst.param == "w");
}

TEST_CASE("relu subgradient at the kink is zero") {
    ParameterSet params;
    params.add("x", Tensor::from_rows({{0.0, -1.0, 2.0}}));
    Graph g;
    Node* y = g.relu(&params.node(0));
    g.backward(g.pick(y, 0, 0));
    REQUIRE(params.get("x")->grad[0] == 0.0);

    params.zero_grads();
    Graph g2;
    Node* y2 = g2.relu(&params.node(0));
    g2.backward(g2.pick(y2, 0, 2));
    REQUIRE(params.get("x")->grad[2] == 1.0);
}

TEST_CASE("log_clamped has zero derivative where the clamp is active") {
    ParameterSet params;
    params.add("x", Tensor::from_rows({{2.0}}));
    Graph g;
    g.backward(g.log_clamped(&params.node(0), 1e-12, 1.0 - 1e-12));
    REQUIRE(params.get("x")->grad[0] == 0.0);
}

TEST_CASE("layer_norm normalizes rows") {
    Graph g;
    Rng rng(31);
    // Wide input keeps the raw row variance far above the 1e-5 epsilon, so
    // the output variance lands within 1e-6 of 1.
    Tensor x = random_tensor(rng, 4, 16, -40.0, 40.0);
    Node* gain = g.constant(Tensor(1, 16, 1.0));
    Node* bias = g.constant(Tensor(1, 16));
    Node* y = g.layer_norm(g.constant(x), gain, bias);
    for (std::size_t r = 0; r < 4; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < 16; ++c) mean += y->value(r, c);
        mean /= 16.0;
        for (std::size_t c = 0; c < 16; ++c) {
            const double d = y->value(r, c) - mean;
            var += d * d;
        }
        var /= 16.0;
        REQUIRE(std::abs(mean) < 1e-9);
        REQUIRE(std::abs(var - 1.0) < 1e-6);
    }
}
