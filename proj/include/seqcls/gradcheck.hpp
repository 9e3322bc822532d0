#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "seqcls/finite_diff.hpp"
#include "seqcls/model.hpp"
#include "seqcls/rng.hpp"
#include "seqcls/train.hpp"

namespace seqcls {

/// Outcome of checking one architecture across all seeds: the single worst
/// analytic-vs-numeric disagreement and where it occurred.
struct GradCheckResult {
    Arch arch = Arch::Transformer;
    GradMismatch worst;
    std::size_t seeds_run = 0;
    std::size_t scalars_checked = 0;

    bool passed(double tol) const { return worst.max_rel_err < tol; }
};

struct GradCheckConfig {
    std::uint64_t seed = 7;
    std::size_t n_seeds = 20;
    double h = 1e-5;
    double tolerance = 1e-4;
};

namespace detail {

inline ModelConfig random_toy_config(Rng& rng, Arch arch) {
    ModelConfig c;
    c.seq_len = 3 + rng.below(4);                     // L in [3, 6]
    c.n_vars = 1 + rng.below(3);                      // M in [1, 3]
    const std::size_t dims[] = {4, 6, 8};
    c.d_model = dims[rng.below(3)];
    c.n_heads = arch == Arch::Transformer ? 1 + rng.below(2) : 1;
    c.n_layers = 1 + rng.below(2);
    c.pooling = rng.below(2) ? Pooling::Mean : Pooling::Last;
    c.kernel_width = rng.below(2) ? 3 : 5;
    return c;
}

inline Tensor random_input(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor x(rows, cols);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    return x;
}

/// Smallest |input| over every kinked activation in the graph. Central
/// differences are only a valid oracle where the loss is smooth across the
/// whole +-h neighborhood, so instances whose pre-activations sit closer to
/// a kink than the perturbation can reach must be rejected.
inline double min_kink_distance(const Graph& g) {
    double dist = std::numeric_limits<double>::infinity();
    for (const Node& n : g.nodes()) {
        if (std::string_view(n.op) != "relu") continue;
        const Tensor& pre = n.parents[0]->value;
        for (std::size_t i = 0; i < pre.size(); ++i) {
            dist = std::min(dist, std::abs(pre[i]));
        }
    }
    return dist;
}

} // namespace detail

/// Check one architecture: per seed, build a toy model and input, compute the
/// analytic gradient of the scalar cross-entropy loss, and compare every
/// parameter scalar against central finite differences.
inline GradCheckResult gradcheck_arch(Arch arch, const GradCheckConfig& cfg) {
    GradCheckResult result;
    result.arch = arch;
    for (std::size_t s = 0; s < cfg.n_seeds; ++s) {
        Rng rng(mix_seed(cfg.seed, s));
        const ModelConfig mc = detail::random_toy_config(rng, arch);
        Model model = make_model(arch, mc, mix_seed(cfg.seed, 1000 + s));
        // Check at a generic point in parameter space. Fresh initialization
        // is a special point: zero biases can leave whole activations exactly
        // on a kink (for instance when a sign-unlucky first layer never
        // fires), where a difference quotient measures the one-sided slope.
        for (std::size_t p = 0; p < model.params.size(); ++p) {
            Node& node = model.params.node(p);
            for (std::size_t i = 0; i < node.value.size(); ++i) {
                node.value[i] += rng.uniform(-0.1, 0.1);
            }
        }
        const Label y = rng.below(2) ? Label::Ok : Label::CoreDamage;
        const double eps = 1e-12;

        // Redraw inputs whose forward pass grazes a kink; a perturbation of h
        // moves any pre-activation by at most a few h at these scales.
        Tensor x = detail::random_input(rng, mc.seq_len, mc.n_vars);
        for (int attempt = 0; attempt < 50; ++attempt) {
            Graph probe;
            cross_entropy_node(probe, model, x, y, eps);
            if (detail::min_kink_distance(probe) > 10.0 * cfg.h) break;
            x = detail::random_input(rng, mc.seq_len, mc.n_vars);
        }

        model.params.zero_grads();
        {
            Graph g;
            g.backward(cross_entropy_node(g, model, x, y, eps));
        }
        const auto loss_of = [&](const ParameterSet&) {
            Graph g;
            return cross_entropy_node(g, model, x, y, eps)->value[0];
        };
        const std::vector<Tensor> numeric = finite_diff_gradient(loss_of, model.params, cfg.h);
        const GradMismatch m = compare_gradients(model.params, numeric);
        if (m.max_rel_err > result.worst.max_rel_err) result.worst = m;
        result.scalars_checked += model.params.scalar_count();
        ++result.seeds_run;
    }
    return result;
}

inline std::vector<GradCheckResult> run_gradcheck(const GradCheckConfig& cfg = {}) {
    return {gradcheck_arch(Arch::Transformer, cfg), gradcheck_arch(Arch::Rnn, cfg),
            gradcheck_arch(Arch::Cnn, cfg)};
}

} // namespace seqcls
