#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "seqcls/csv_io.hpp"
#include "seqcls/data.hpp"
#include "seqcls/model.hpp"
#include "seqcls/rng.hpp"

namespace seqcls {

enum class Optimizer { Sgd, Adam };

inline const char* optimizer_name(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

inline Optimizer parse_optimizer(const std::string& s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "adam") return Optimizer::Adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 12;
    std::size_t epochs = 1;
    Optimizer optimizer = Optimizer::Sgd;
    std::uint64_t seed = 0;
    double clip_epsilon = 1e-12;

    void validate() const {
        if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (clip_epsilon <= 0.0 || clip_epsilon >= 0.5) {
            throw ConfigError("train: clip_epsilon must be in (0, 0.5)");
        }
    }
};

// ---- loss ----------------------------------------------------------------

/// Binary cross-entropy with the OK probability as the Bernoulli parameter:
/// -(y log p + (1-y) log(1-p)), p clipped into [eps, 1-eps].
inline double cross_entropy(const ClassProbabilities& p, Label y, double eps = 1e-12) {
    const double p_ok = std::clamp(p.p_ok, eps, 1.0 - eps);
    return y == Label::Ok ? -std::log(p_ok) : -std::log(1.0 - p_ok);
}

/// Differentiable scalar loss for one sample: -log of the clipped probability
/// the model assigns to the true class.
inline Node* cross_entropy_node(Graph& g, Model& m, const Tensor& x, Label y, double eps) {
    Node* probs = probabilities_node(g, m, g.constant(x));
    Node* p_true = g.pick(probs, 0, y == Label::Ok ? 1 : 0);
    return g.scale(g.log_clamped(p_true, eps, 1.0 - eps), -1.0);
}

// ---- optimizers ----------------------------------------------------------

/// theta <- theta - lr * grad, then gradients are reset so the next batch
/// starts clean.
inline void sgd_step(ParameterSet& params, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Node& p = params.node(i);
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            p.value[j] -= lr * p.grad[j];
        }
    }
    params.zero_grads();
}

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(const ParameterSet& params) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const Tensor& val = params.node(i).value;
            m.emplace_back(val.rows(), val.cols());
            v.emplace_back(val.rows(), val.cols());
        }
    }
};

inline void adam_step(ParameterSet& params, AdamState& state, double lr) {
    ++state.t;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Node& p = params.node(i);
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            p.value[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
    params.zero_grads();
}

// ---- dataset preparation -------------------------------------------------

/// Model-ready views of a dataset: every scenario resampled to a common
/// length and min-max normalized, kept alongside its label.
struct PreparedDataset {
    std::vector<Tensor> inputs;
    std::vector<Label> labels;
    std::vector<std::string> var_names;

    std::size_t size() const { return inputs.size(); }
};

inline PreparedDataset prepare_dataset(const LabeledDataset& ds, std::size_t target_len) {
    PreparedDataset out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Scenario& raw = ds.scenarios[i];
        if (out.var_names.empty()) {
            out.var_names = raw.var_names;
        } else if (raw.var_names != out.var_names) {
            throw SchemaError("prepare_dataset: scenario '" + raw.id +
                              "' does not match the schema of the first scenario");
        }
        Scenario fixed = raw.length() == target_len ? raw : resample(raw, target_len);
        auto [normalized, record] = normalize_scenario(fixed);
        out.inputs.push_back(std::move(normalized.values));
        out.labels.push_back(ds.labels[i]);
    }
    return out;
}

// ---- training ------------------------------------------------------------

struct BatchLoss {
    std::size_t batch = 0;
    double loss = 0.0;
};

using LossTrace = std::vector<BatchLoss>;

/// One pass over the given sample indices per epoch: deterministic shuffle,
/// ceil(n/batch_size) batches (final batch may be short), mean cross-entropy
/// per batch, backward, optimizer step. All input shapes are checked before
/// the first update so a bad dataset cannot leave the model half-trained.
inline LossTrace train_one_epoch(Model& model, const PreparedDataset& data,
                                 const std::vector<std::size_t>& sample_indices,
                                 const TrainConfig& cfg) {
    cfg.validate();
    if (sample_indices.empty()) {
        throw ContractError("train_one_epoch: no training samples");
    }
    for (std::size_t i : sample_indices) {
        const Tensor& x = data.inputs.at(i);
        if (x.rows() != model.config.seq_len || x.cols() != model.config.n_vars) {
            throw DimensionError("train_one_epoch: sample " + std::to_string(i) + " is " +
                                 x.shape_str() + ", model expects " +
                                 std::to_string(model.config.seq_len) + "x" +
                                 std::to_string(model.config.n_vars));
        }
    }

    LossTrace trace;
    Rng shuffle_rng(cfg.seed);
    AdamState adam(model.params);
    std::size_t batch_counter = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = sample_indices;
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            Graph g;
            Node* total = nullptr;
            for (std::size_t k = start; k < end; ++k) {
                Node* loss = cross_entropy_node(g, model, data.inputs[order[k]],
                                                data.labels[order[k]], cfg.clip_epsilon);
                total = total ? g.add(total, loss) : loss;
            }
            Node* mean = g.scale(total, 1.0 / static_cast<double>(end - start));
            g.backward(mean);
            if (cfg.optimizer == Optimizer::Sgd) {
                sgd_step(model.params, cfg.learning_rate);
            } else {
                adam_step(model.params, adam, cfg.learning_rate);
            }
            trace.push_back({batch_counter++, mean->value[0]});
        }
    }
    return trace;
}

// ---- evaluation ----------------------------------------------------------

/// Confusion counts treat CORE_DAMAGE as the positive class.
struct Metrics {
    double accuracy = 0.0;
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t n_total = 0;
};

inline Metrics evaluate(Model& model, const PreparedDataset& data,
                        const std::vector<std::size_t>& sample_indices) {
    if (sample_indices.empty()) {
        throw ContractError("evaluate: empty split");
    }
    Metrics m;
    for (std::size_t i : sample_indices) {
        const Label predicted = classify(model, data.inputs.at(i)).predicted();
        const Label actual = data.labels[i];
        if (predicted == Label::CoreDamage) {
            actual == Label::CoreDamage ? ++m.tp : ++m.fp;
        } else {
            actual == Label::Ok ? ++m.tn : ++m.fn;
        }
    }
    m.n_total = sample_indices.size();
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.n_total);
    return m;
}

// ---- persistence ---------------------------------------------------------

inline void write_loss_csv(const std::string& path, const LossTrace& trace) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "batch,loss\n";
    for (const BatchLoss& b : trace) {
        out << b.batch << "," << format_double(b.loss) << "\n";
    }
    if (!out) throw ParseError("write failed: " + path);
}

inline LossTrace read_loss_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || chomp(line) != "batch,loss") {
        throw ParseError(path + ": expected header 'batch,loss'");
    }
    LossTrace trace;
    while (std::getline(in, line)) {
        line = chomp(line);
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2) throw ParseError(path + ": malformed row '" + line + "'");
        BatchLoss b;
        b.batch = static_cast<std::size_t>(parse_double(fields[0], path + " batch index"));
        b.loss = parse_double(fields[1], path + " loss");
        trace.push_back(b);
    }
    return trace;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<std::pair<std::string, Metrics>>& rows) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    out << "split,accuracy,tp,tn,fp,fn,n\n";
    for (const auto& [name, m] : rows) {
        out << name << "," << format_double(m.accuracy) << "," << m.tp << "," << m.tn << ","
            << m.fp << "," << m.fn << "," << m.n_total << "\n";
    }
    if (!out) throw ParseError("write failed: " + path);
}

} // namespace seqcls
