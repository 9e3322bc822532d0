#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "seqcls/autograd.hpp"
#include "seqcls/data.hpp"
#include "seqcls/rng.hpp"

namespace seqcls {

enum class Arch { Transformer, Rnn, Cnn };

inline const char* arch_name(Arch a) {
    switch (a) {
        case Arch::Transformer: return "transformer";
        case Arch::Rnn: return "rnn";
        default: return "cnn";
    }
}

inline Arch parse_arch(const std::string& s) {
    if (s == "transformer") return Arch::Transformer;
    if (s == "rnn") return Arch::Rnn;
    if (s == "cnn") return Arch::Cnn;
    throw ConfigError("unknown architecture '" + s + "' (expected transformer|rnn|cnn)");
}

enum class Pooling { Mean, Last };

inline const char* pooling_name(Pooling p) { return p == Pooling::Mean ? "mean" : "last"; }

inline Pooling parse_pooling(const std::string& s) {
    if (s == "mean") return Pooling::Mean;
    if (s == "last") return Pooling::Last;
    throw ConfigError("unknown pooling '" + s + "' (expected mean|last)");
}

/// Architecture hyperparameters shared by all three model families.
/// ffn_dim == 0 means the conventional 4*d_model.
struct ModelConfig {
    std::size_t n_layers = 2;
    std::size_t d_model = 30;
    std::size_t n_heads = 1;
    std::size_t ffn_dim = 0;
    std::size_t seq_len = 200;   // L
    std::size_t n_vars = 14;     // M
    Pooling pooling = Pooling::Mean;
    std::size_t n_classes = 2;
    bool positional_encoding = true;
    std::size_t kernel_width = 11;  // CNN baseline only

    std::size_t resolved_ffn_dim() const { return ffn_dim > 0 ? ffn_dim : 4 * d_model; }

    void validate() const {
        if (n_layers < 1 || d_model < 1 || n_heads < 1 || seq_len < 1 || n_vars < 1 ||
            n_classes < 1) {
            throw ConfigError("model config: all counts must be >= 1");
        }
        if (d_model % n_heads != 0) {
            throw ConfigError("model config: d_model (" + std::to_string(d_model) +
                              ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
        }
        if (kernel_width == 0 || kernel_width % 2 == 0) {
            throw ConfigError("model config: kernel_width must be odd");
        }
    }
};

/// Two-class output distribution. Index 0 is CORE_DAMAGE, 1 is OK.
struct ClassProbabilities {
    double p_core_damage = 0.5;
    double p_ok = 0.5;

    double of(Label l) const { return l == Label::Ok ? p_ok : p_core_damage; }
    /// Argmax with ties broken toward CORE_DAMAGE, the conservative class.
    Label predicted() const { return p_ok > p_core_damage ? Label::Ok : Label::CoreDamage; }
};

/// An architecture choice, its hyperparameters, and the learnable weights.
struct Model {
    Arch arch = Arch::Transformer;
    ModelConfig config;
    ParameterSet params;
};

// ---- initialization ------------------------------------------------------

inline Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(fan_in, fan_out);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = rng.uniform(-limit, limit);
    }
    return t;
}

namespace detail {

inline void add_transformer_params(ParameterSet& p, const ModelConfig& c, Rng& rng) {
    const std::size_t d = c.d_model, f = c.resolved_ffn_dim();
    p.add("input.w", glorot_uniform(c.n_vars, d, rng));
    p.add("input.b", Tensor(1, d));
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const std::string pre = "enc" + std::to_string(l) + ".";
        p.add(pre + "attn.wq", glorot_uniform(d, d, rng));
        p.add(pre + "attn.wk", glorot_uniform(d, d, rng));
        p.add(pre + "attn.wv", glorot_uniform(d, d, rng));
        p.add(pre + "attn.wo", glorot_uniform(d, d, rng));
        p.add(pre + "ln1.gain", Tensor(1, d, 1.0));
        p.add(pre + "ln1.bias", Tensor(1, d));
        p.add(pre + "ffn.w1", glorot_uniform(d, f, rng));
        p.add(pre + "ffn.b1", Tensor(1, f));
        p.add(pre + "ffn.w2", glorot_uniform(f, d, rng));
        p.add(pre + "ffn.b2", Tensor(1, d));
        p.add(pre + "ln2.gain", Tensor(1, d, 1.0));
        p.add(pre + "ln2.bias", Tensor(1, d));
    }
    p.add("head.w", glorot_uniform(d, c.n_classes, rng));
    p.add("head.b", Tensor(1, c.n_classes));
}

inline void add_rnn_params(ParameterSet& p, const ModelConfig& c, Rng& rng) {
    const std::size_t d = c.d_model;
    for (const char* gate : {"i", "f", "g", "o"}) {
        p.add(std::string("lstm.wx_") + gate, glorot_uniform(c.n_vars, d, rng));
        p.add(std::string("lstm.wh_") + gate, glorot_uniform(d, d, rng));
        p.add(std::string("lstm.b_") + gate, Tensor(1, d));
    }
    p.add("head.w", glorot_uniform(d, c.n_classes, rng));
    p.add("head.b", Tensor(1, c.n_classes));
}

inline void add_cnn_params(ParameterSet& p, const ModelConfig& c, Rng& rng) {
    const std::size_t d = c.d_model, k = c.kernel_width;
    p.add("conv1.w", glorot_uniform(k * c.n_vars, d, rng));
    p.add("conv1.b", Tensor(1, d));
    p.add("conv2.w", glorot_uniform(k * d, d, rng));
    p.add("conv2.b", Tensor(1, d));
    p.add("head.w", glorot_uniform(d, c.n_classes, rng));
    p.add("head.b", Tensor(1, c.n_classes));
}

} // namespace detail

/// Build a model with freshly initialized weights. Weight matrices are
/// Glorot-uniform from the given seed; biases start at zero, normalization
/// gains at one.
inline Model make_model(Arch arch, const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.arch = arch;
    m.config = config;
    Rng rng(seed);
    switch (arch) {
        case Arch::Transformer: detail::add_transformer_params(m.params, config, rng); break;
        case Arch::Rnn: detail::add_rnn_params(m.params, config, rng); break;
        case Arch::Cnn: detail::add_cnn_params(m.params, config, rng); break;
    }
    return m;
}

// ---- building blocks -----------------------------------------------------

/// Sinusoidal position table: PE(pos, 2i) = sin(pos / 10000^(2i/d)),
/// PE(pos, 2i+1) = cos(pos / 10000^(2i/d)).
inline Tensor positional_encoding(std::size_t len, std::size_t dim) {
    Tensor pe(len, dim);
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; 2 * i < dim; ++i) {
            const double freq =
                std::pow(10000.0, -(2.0 * static_cast<double>(i)) / static_cast<double>(dim));
            const double angle = static_cast<double>(pos) * freq;
            pe(pos, 2 * i) = std::sin(angle);
            if (2 * i + 1 < dim) pe(pos, 2 * i + 1) = std::cos(angle);
        }
    }
    return pe;
}

/// Scaled dot-product attention: softmax(q k^T / sqrt(dim)) v. Self-attention
/// is the call where q and k derive from the same sequence.
inline Node* attention(Graph& g, Node* q, Node* k, Node* v, std::size_t dim) {
    if (!q->value.same_shape(k->value) || !q->value.same_shape(v->value)) {
        throw DimensionError("attention: q " + q->value.shape_str() + ", k " +
                             k->value.shape_str() + ", v " + v->value.shape_str());
    }
    if (dim == 0) {
        throw ContractError("attention: dim must be positive");
    }
    Node* scores = g.scale(g.matmul(q, g.transpose(k)),
                           1.0 / std::sqrt(static_cast<double>(dim)));
    return g.matmul(g.softmax_rows(scores), v);
}

namespace detail {

inline Node* self_attention(Graph& g, Node* x, Model& m, const std::string& pre) {
    const std::size_t heads = m.config.n_heads;
    const std::size_t dk = m.config.d_model / heads;
    Node* q = g.matmul(x, m.params.get(pre + "attn.wq"));
    Node* k = g.matmul(x, m.params.get(pre + "attn.wk"));
    Node* v = g.matmul(x, m.params.get(pre + "attn.wv"));
    Node* mixed = nullptr;
    if (heads == 1) {
        mixed = attention(g, q, k, v, dk);
    } else {
        std::vector<Node*> parts;
        parts.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dk, c1 = (h + 1) * dk;
            parts.push_back(attention(g, g.columns(q, c0, c1), g.columns(k, c0, c1),
                                      g.columns(v, c0, c1), dk));
        }
        mixed = g.hconcat(parts);
    }
    return g.matmul(mixed, m.params.get(pre + "attn.wo"));
}

inline Node* encoder_layer(Graph& g, Node* x, Model& m, std::size_t layer) {
    const std::string pre = "enc" + std::to_string(layer) + ".";
    Node* y1 = g.layer_norm(g.add(x, self_attention(g, x, m, pre)),
                            m.params.get(pre + "ln1.gain"), m.params.get(pre + "ln1.bias"));
    Node* hidden = g.relu(g.add_row_vector(g.matmul(y1, m.params.get(pre + "ffn.w1")),
                                           m.params.get(pre + "ffn.b1")));
    Node* ffn = g.add_row_vector(g.matmul(hidden, m.params.get(pre + "ffn.w2")),
                                 m.params.get(pre + "ffn.b2"));
    return g.layer_norm(g.add(y1, ffn), m.params.get(pre + "ln2.gain"),
                        m.params.get(pre + "ln2.bias"));
}

inline Node* pool_rows(Graph& g, Node* x, Pooling pooling) {
    return pooling == Pooling::Mean ? g.mean_rows(x) : g.row(x, x->value.rows() - 1);
}

inline Node* transformer_logits(Graph& g, Model& m, Node* input) {
    Node* h = g.add_row_vector(g.matmul(input, m.params.get("input.w")),
                               m.params.get("input.b"));
    if (m.config.positional_encoding) {
        h = g.add(h, g.constant(positional_encoding(h->value.rows(), m.config.d_model)));
    }
    for (std::size_t l = 0; l < m.config.n_layers; ++l) {
        h = encoder_layer(g, h, m, l);
    }
    Node* pooled = pool_rows(g, h, m.config.pooling);
    return g.add_row_vector(g.matmul(pooled, m.params.get("head.w")), m.params.get("head.b"));
}

inline Node* rnn_logits(Graph& g, Model& m, Node* input) {
    const std::size_t len = input->value.rows();
    Node* h = g.constant(Tensor(1, m.config.d_model));
    Node* c = g.constant(Tensor(1, m.config.d_model));
    auto gate = [&](const char* name, Node* x_t, Node* h_prev) {
        Node* lin = g.add(g.matmul(x_t, m.params.get(std::string("lstm.wx_") + name)),
                          g.matmul(h_prev, m.params.get(std::string("lstm.wh_") + name)));
        return g.add_row_vector(lin, m.params.get(std::string("lstm.b_") + name));
    };
    for (std::size_t t = 0; t < len; ++t) {
        Node* x_t = g.row(input, t);
        Node* in_gate = g.sigmoid(gate("i", x_t, h));
        Node* forget_gate = g.sigmoid(gate("f", x_t, h));
        Node* cell_cand = g.tanh(gate("g", x_t, h));
        Node* out_gate = g.sigmoid(gate("o", x_t, h));
        c = g.add(g.mul(forget_gate, c), g.mul(in_gate, cell_cand));
        h = g.mul(out_gate, g.tanh(c));
    }
    return g.add_row_vector(g.matmul(h, m.params.get("head.w")), m.params.get("head.b"));
}

inline Node* cnn_logits(Graph& g, Model& m, Node* input) {
    const std::size_t k = m.config.kernel_width;
    Node* h = g.relu(g.conv1d_same(input, m.params.get("conv1.w"), m.params.get("conv1.b"), k));
    h = g.relu(g.conv1d_same(h, m.params.get("conv2.w"), m.params.get("conv2.b"), k));
    Node* pooled = g.mean_rows(h);
    return g.add_row_vector(g.matmul(pooled, m.params.get("head.w")), m.params.get("head.b"));
}

} // namespace detail

/// Class logits (1 x n_classes) for one normalized scenario matrix, built on
/// the given graph so the result is differentiable back to the parameters.
inline Node* logits_node(Graph& g, Model& m, Node* input) {
    if (input->value.rows() != m.config.seq_len || input->value.cols() != m.config.n_vars) {
        throw DimensionError("model expects " + std::to_string(m.config.seq_len) + "x" +
                             std::to_string(m.config.n_vars) + " input, got " +
                             input->value.shape_str());
    }
    switch (m.arch) {
        case Arch::Transformer: return detail::transformer_logits(g, m, input);
        case Arch::Rnn: return detail::rnn_logits(g, m, input);
        default: return detail::cnn_logits(g, m, input);
    }
}

/// Softmax over the class logits as a graph node (1 x 2).
inline Node* probabilities_node(Graph& g, Model& m, Node* input) {
    return g.softmax_rows(logits_node(g, m, input));
}

/// Forward-only classification of one normalized L x M scenario matrix.
inline ClassProbabilities classify(Model& m, const Tensor& x) {
    Graph g;
    Node* p = probabilities_node(g, m, g.constant(x));
    return ClassProbabilities{p->value[0], p->value[1]};
}

} // namespace seqcls
