#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqcls/errors.hpp"
#include "seqcls/tensor.hpp"

namespace seqcls {

/// One node of the reverse-differentiable computation graph. `grad` always
/// has the shape of `value` (allocated only when the node participates in
/// differentiation) and accumulates by summation across fan-out.
struct Node {
    static constexpr std::size_t kNotOnTape = static_cast<std::size_t>(-1);

    Tensor value;
    Tensor grad;
    std::vector<Node*> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;
    std::size_t tape_index = kNotOnTape;
    // Set for ops that are not differentiable everywhere, so verification
    // harnesses can detect evaluation points sitting on a kink.
    const char* op = "";

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad = Tensor(value.rows(), value.cols());
        }
    }
    void zero_grad() { grad.fill(0.0); }
};

/// Define-by-run tape. Owns every interior node of one forward pass; leaf
/// parameter nodes live outside (see ParameterSet) and only receive gradient
/// accumulation. Creation order is a topological order by construction, so
/// backward() is a single reverse sweep. A graph is confined to one thread
/// and discarded after use; parameters persist across graphs.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    std::size_t size() const { return tape_.size(); }

    /// Leaf holding a constant (input data, positional table, ...).
    Node* constant(Tensor v) {
        return append(std::move(v), {}, nullptr, false);
    }

    /// Escape hatch: append a node with a caller-supplied backward rule.
    /// The rule receives the node itself and must accumulate into the
    /// parents' grad tensors.
    Node* custom(Tensor value, std::vector<Node*> parents,
                 std::function<void(Node&)> backward) {
        bool rg = any_requires_grad(parents);
        return append(std::move(value), std::move(parents), std::move(backward), rg);
    }

    // ---- elementwise -----------------------------------------------------

    Node* add(Node* a, Node* b) {
        check_same_shape("add", a->value, b->value);
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += b->value[i];
        return append(std::move(v), {a, b}, [](Node& n) {
            accumulate(n.parents[0], n.grad);
            accumulate(n.parents[1], n.grad);
        }, a->requires_grad || b->requires_grad);
    }

    Node* mul(Node* a, Node* b) {
        check_same_shape("mul", a->value, b->value);
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b->value[i];
        return append(std::move(v), {a, b}, [](Node& n) {
            Node* a = n.parents[0];
            Node* b = n.parents[1];
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->value[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->value[i];
            }
        }, a->requires_grad || b->requires_grad);
    }

    Node* scale(Node* a, double c) {
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= c;
        return append(std::move(v), {a}, [c](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += c * n.grad[i];
        }, a->requires_grad);
    }

    Node* relu(Node* a) {
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] > 0.0 ? v[i] : 0.0;
        Node* n = append(std::move(v), {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            a->ensure_grad();
            // subgradient 0 at the kink
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                if (a->value[i] > 0.0) a->grad[i] += n.grad[i];
            }
        }, a->requires_grad);
        n->op = "relu";
        return n;
    }

    Node* sigmoid(Node* a) {
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-v[i]));
        return append(std::move(v), {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                const double s = n.value[i];
                a->grad[i] += n.grad[i] * s * (1.0 - s);
            }
        }, a->requires_grad);
    }

    Node* tanh(Node* a) {
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(v[i]);
        return append(std::move(v), {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                const double t = n.value[i];
                a->grad[i] += n.grad[i] * (1.0 - t * t);
            }
        }, a->requires_grad);
    }

    /// ln(clamp(x, lo, hi)); zero derivative where the clamp is active.
    Node* log_clamped(Node* a, double lo, double hi) {
        Tensor v = a->value;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = std::log(std::clamp(v[i], lo, hi));
        }
        return append(std::move(v), {a}, [lo, hi](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                const double x = a->value[i];
                if (x > lo && x < hi) a->grad[i] += n.grad[i] / x;
            }
        }, a->requires_grad);
    }

    // ---- linear algebra --------------------------------------------------

    Node* matmul(Node* a, Node* b) {
        Tensor v = seqcls::matmul(a->value, b->value);
        return append(std::move(v), {a, b}, [](Node& n) {
            Node* a = n.parents[0];
            Node* b = n.parents[1];
            if (a->requires_grad) {
                a->ensure_grad();
                add_in_place(a->grad, matmul_nt(n.grad, b->value));
            }
            if (b->requires_grad) {
                b->ensure_grad();
                add_in_place(b->grad, matmul_tn(a->value, n.grad));
            }
        }, a->requires_grad || b->requires_grad);
    }

    Node* transpose(Node* a) {
        Tensor v = seqcls::transpose(a->value);
        return append(std::move(v), {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            a->ensure_grad();
            add_in_place(a->grad, seqcls::transpose(n.grad));
        }, a->requires_grad);
    }

    Node* softmax_rows(Node* a) {
        Tensor v = seqcls::softmax_rows(a->value);
        return append(std::move(v), {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            a->ensure_grad();
            const std::size_t cols = n.value.cols();
            for (std::size_t r = 0; r < n.value.rows(); ++r) {
                const double* y = n.value.row_ptr(r);
                const double* g = n.grad.row_ptr(r);
                double* out = a->grad.row_ptr(r);
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += y[j] * g[j];
                for (std::size_t j = 0; j < cols; ++j) out[j] += y[j] * (g[j] - dot);
            }
        }, a->requires_grad);
    }

    /// Row-wise normalization: per row subtract the mean, divide by the
    /// standard deviation (population, eps-stabilized), then apply the
    /// per-feature gain and bias (both 1xC).
    Node* layer_norm(Node* x, Node* gain, Node* bias, double eps = 1e-5) {
        const std::size_t rows = x->value.rows(), cols = x->value.cols();
        if (gain->value.rows() != 1 || gain->value.cols() != cols ||
            bias->value.rows() != 1 || bias->value.cols() != cols) {
            throw DimensionError("layer_norm: gain/bias must be 1x" + std::to_string(cols));
        }
        Tensor norm(rows, cols);      // pre-gain normalized values, reused in backward
        std::vector<double> inv_std(rows);
        Tensor v(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* in = x->value.row_ptr(r);
            double mean = 0.0;
            for (std::size_t j = 0; j < cols; ++j) mean += in[j];
            mean /= static_cast<double>(cols);
            double var = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double d = in[j] - mean;
                var += d * d;
            }
            var /= static_cast<double>(cols);
            const double inv = 1.0 / std::sqrt(var + eps);
            inv_std[r] = inv;
            double* nr = norm.row_ptr(r);
            double* vr = v.row_ptr(r);
            for (std::size_t j = 0; j < cols; ++j) {
                nr[j] = (in[j] - mean) * inv;
                vr[j] = nr[j] * gain->value[j] + bias->value[j];
            }
        }
        auto back = [norm = std::move(norm), inv_std = std::move(inv_std)](Node& n) {
            Node* x = n.parents[0];
            Node* gain = n.parents[1];
            Node* bias = n.parents[2];
            const std::size_t rows = n.value.rows(), cols = n.value.cols();
            if (gain->requires_grad) {
                gain->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* g = n.grad.row_ptr(r);
                    const double* nr = norm.row_ptr(r);
                    for (std::size_t j = 0; j < cols; ++j) gain->grad[j] += g[j] * nr[j];
                }
            }
            if (bias->requires_grad) {
                bias->ensure_grad();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* g = n.grad.row_ptr(r);
                    for (std::size_t j = 0; j < cols; ++j) bias->grad[j] += g[j];
                }
            }
            if (x->requires_grad) {
                x->ensure_grad();
                std::vector<double> h(cols);
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* g = n.grad.row_ptr(r);
                    const double* nr = norm.row_ptr(r);
                    double* out = x->grad.row_ptr(r);
                    double mean_h = 0.0, mean_hn = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        h[j] = g[j] * gain->value[j];
                        mean_h += h[j];
                        mean_hn += h[j] * nr[j];
                    }
                    mean_h /= static_cast<double>(cols);
                    mean_hn /= static_cast<double>(cols);
                    for (std::size_t j = 0; j < cols; ++j) {
                        out[j] += inv_std[r] * (h[j] - mean_h - nr[j] * mean_hn);
                    }
                }
            }
        };
        return append(std::move(v), {x, gain, bias}, std::move(back),
                      x->requires_grad || gain->requires_grad || bias->requires_grad);
    }

    /// x (RxC) + b (1xC) broadcast over rows.
    Node* add_row_vector(Node* x, Node* b) {
        const std::size_t rows = x->value.rows(), cols = x->value.cols();
        if (b->value.rows() != 1 || b->value.cols() != cols) {
            throw DimensionError("add_row_vector: " + x->value.shape_str() + " vs " +
                                 b->value.shape_str());
        }
        Tensor v = x->value;
        for (std::size_t r = 0; r < rows; ++r) {
            double* vr = v.row_ptr(r);
            for (std::size_t j = 0; j < cols; ++j) vr[j] += b->value[j];
        }
        return append(std::move(v), {x, b}, [](Node& n) {
            Node* x = n.parents[0];
            Node* b = n.parents[1];
            accumulate(x, n.grad);
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                    const double* g = n.grad.row_ptr(r);
                    for (std::size_t j = 0; j < n.grad.cols(); ++j) b->grad[j] += g[j];
                }
            }
        }, x->requires_grad || b->requires_grad);
    }

    // ---- shape and selection ---------------------------------------------

    /// Column-wise mean over all rows: RxC -> 1xC.
    Node* mean_rows(Node* x) {
        const std::size_t rows = x->value.rows(), cols = x->value.cols();
        Tensor v(1, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* in = x->value.row_ptr(r);
            for (std::size_t j = 0; j < cols; ++j) v[j] += in[j];
        }
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t j = 0; j < cols; ++j) v[j] *= inv;
        return append(std::move(v), {x}, [inv](Node& n) {
            Node* x = n.parents[0];
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (std::size_t r = 0; r < x->grad.rows(); ++r) {
                double* out = x->grad.row_ptr(r);
                for (std::size_t j = 0; j < n.grad.cols(); ++j) out[j] += inv * n.grad[j];
            }
        }, x->requires_grad);
    }

    Node* row(Node* x, std::size_t r) {
        if (r >= x->value.rows()) {
            throw DimensionError("row: index " + std::to_string(r) + " out of " +
                                 x->value.shape_str());
        }
        Tensor v(1, x->value.cols());
        const double* in = x->value.row_ptr(r);
        for (std::size_t j = 0; j < v.cols(); ++j) v[j] = in[j];
        return append(std::move(v), {x}, [r](Node& n) {
            Node* x = n.parents[0];
            if (!x->requires_grad) return;
            x->ensure_grad();
            double* out = x->grad.row_ptr(r);
            for (std::size_t j = 0; j < n.grad.cols(); ++j) out[j] += n.grad[j];
        }, x->requires_grad);
    }

    /// Columns [c0, c1) of x.
    Node* columns(Node* x, std::size_t c0, std::size_t c1) {
        if (c0 >= c1 || c1 > x->value.cols()) {
            throw DimensionError("columns: [" + std::to_string(c0) + "," + std::to_string(c1) +
                                 ") out of " + x->value.shape_str());
        }
        Tensor v(x->value.rows(), c1 - c0);
        for (std::size_t r = 0; r < v.rows(); ++r) {
            const double* in = x->value.row_ptr(r) + c0;
            double* vr = v.row_ptr(r);
            for (std::size_t j = 0; j < v.cols(); ++j) vr[j] = in[j];
        }
        return append(std::move(v), {x}, [c0](Node& n) {
            Node* x = n.parents[0];
            if (!x->requires_grad) return;
            x->ensure_grad();
            for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                const double* g = n.grad.row_ptr(r);
                double* out = x->grad.row_ptr(r) + c0;
                for (std::size_t j = 0; j < n.grad.cols(); ++j) out[j] += g[j];
            }
        }, x->requires_grad);
    }

    /// Concatenate along columns; every part must have the same row count.
    Node* hconcat(std::vector<Node*> parts) {
        if (parts.empty()) throw ContractError("hconcat: no parts");
        const std::size_t rows = parts[0]->value.rows();
        std::size_t cols = 0;
        for (Node* p : parts) {
            if (p->value.rows() != rows) {
                throw DimensionError("hconcat: row mismatch " + p->value.shape_str());
            }
            cols += p->value.cols();
        }
        Tensor v(rows, cols);
        std::size_t off = 0;
        for (Node* p : parts) {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* in = p->value.row_ptr(r);
                double* vr = v.row_ptr(r) + off;
                for (std::size_t j = 0; j < p->value.cols(); ++j) vr[j] = in[j];
            }
            off += p->value.cols();
        }
        const bool rg = any_requires_grad(parts);
        return append(std::move(v), std::move(parts), [](Node& n) {
            std::size_t off = 0;
            for (Node* p : n.parents) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::size_t r = 0; r < p->grad.rows(); ++r) {
                        const double* g = n.grad.row_ptr(r) + off;
                        double* out = p->grad.row_ptr(r);
                        for (std::size_t j = 0; j < p->grad.cols(); ++j) out[j] += g[j];
                    }
                }
                off += p->value.cols();
            }
        }, rg);
    }

    /// Single element as a 1x1 node.
    Node* pick(Node* x, std::size_t r, std::size_t c) {
        if (r >= x->value.rows() || c >= x->value.cols()) {
            throw DimensionError("pick: (" + std::to_string(r) + "," + std::to_string(c) +
                                 ") out of " + x->value.shape_str());
        }
        Tensor v(1, 1, x->value(r, c));
        return append(std::move(v), {x}, [r, c](Node& n) {
            Node* x = n.parents[0];
            if (!x->requires_grad) return;
            x->ensure_grad();
            x->grad(r, c) += n.grad[0];
        }, x->requires_grad);
    }

    /// 1-D convolution over time with zero same-padding. x is LxCin; the
    /// kernel bank w is (width*Cin)xCout with tap t, channel ci at row
    /// t*Cin+ci; bias is 1xCout. Output is LxCout.
    Node* conv1d_same(Node* x, Node* w, Node* b, std::size_t width) {
        const std::size_t len = x->value.rows(), cin = x->value.cols();
        const std::size_t cout = w->value.cols();
        if (width == 0 || width % 2 == 0) {
            throw ContractError("conv1d_same: kernel width must be odd and positive");
        }
        if (w->value.rows() != width * cin) {
            throw DimensionError("conv1d_same: kernel " + w->value.shape_str() + " needs " +
                                 std::to_string(width * cin) + " rows for input " +
                                 x->value.shape_str());
        }
        if (b->value.rows() != 1 || b->value.cols() != cout) {
            throw DimensionError("conv1d_same: bias " + b->value.shape_str());
        }
        const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(width / 2);
        Tensor v(len, cout);
        for (std::size_t t = 0; t < len; ++t) {
            double* vr = v.row_ptr(t);
            for (std::size_t j = 0; j < cout; ++j) vr[j] = b->value[j];
            for (std::size_t tap = 0; tap < width; ++tap) {
                const std::ptrdiff_t src =
                    static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(tap) - half;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                const double* xr = x->value.row_ptr(static_cast<std::size_t>(src));
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const double xv = xr[ci];
                    const double* wr = w->value.row_ptr(tap * cin + ci);
                    for (std::size_t j = 0; j < cout; ++j) vr[j] += xv * wr[j];
                }
            }
        }
        auto back = [width, half](Node& n) {
            Node* x = n.parents[0];
            Node* w = n.parents[1];
            Node* b = n.parents[2];
            const std::size_t len = x->value.rows(), cin = x->value.cols();
            const std::size_t cout = n.value.cols();
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t t = 0; t < len; ++t) {
                    const double* g = n.grad.row_ptr(t);
                    for (std::size_t j = 0; j < cout; ++j) b->grad[j] += g[j];
                }
            }
            const bool need_x = x->requires_grad;
            const bool need_w = w->requires_grad;
            if (need_x) x->ensure_grad();
            if (need_w) w->ensure_grad();
            if (!need_x && !need_w) return;
            for (std::size_t t = 0; t < len; ++t) {
                const double* g = n.grad.row_ptr(t);
                for (std::size_t tap = 0; tap < width; ++tap) {
                    const std::ptrdiff_t src =
                        static_cast<std::ptrdiff_t>(t) + static_cast<std::ptrdiff_t>(tap) - half;
                    if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                    const std::size_t s = static_cast<std::size_t>(src);
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double* wr = w->value.row_ptr(tap * cin + ci);
                        if (need_x) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < cout; ++j) acc += wr[j] * g[j];
                            x->grad(s, ci) += acc;
                        }
                        if (need_w) {
                            const double xv = x->value(s, ci);
                            double* wg = w->grad.row_ptr(tap * cin + ci);
                            for (std::size_t j = 0; j < cout; ++j) wg[j] += xv * g[j];
                        }
                    }
                }
            }
        };
        return append(std::move(v), {x, w, b}, std::move(back),
                      x->requires_grad || w->requires_grad || b->requires_grad);
    }

    /// Read access to the tape in creation (topological) order.
    const std::deque<Node>& nodes() const { return tape_; }

    // ---- reverse sweep ---------------------------------------------------

    /// Reverse-mode sweep from a scalar output. Seeds d(out)/d(out) = 1 and
    /// walks the tape backwards; leaf parameters accumulate their gradients,
    /// anything not upstream of `output` contributes nothing.
    void backward(Node* output) {
        if (output == nullptr || output->value.rows() != 1 || output->value.cols() != 1) {
            throw ContractError("backward: output must be a 1x1 node");
        }
        if (output->tape_index == Node::kNotOnTape ||
            output->tape_index >= tape_.size() ||
            &tape_[output->tape_index] != output) {
            throw ContractError("backward: output does not belong to this graph");
        }
        output->ensure_grad();
        output->grad[0] = 1.0;
        for (std::size_t i = output->tape_index + 1; i-- > 0;) {
            Node& n = tape_[i];
            if (n.requires_grad && n.backward_fn && n.grad.size() == n.value.size()) {
                n.backward_fn(n);
            }
        }
    }

private:
    Node* append(Tensor value, std::vector<Node*> parents,
                 std::function<void(Node&)> backward, bool requires_grad) {
        tape_.emplace_back();
        Node& n = tape_.back();
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.requires_grad = requires_grad;
        n.tape_index = tape_.size() - 1;
        if (requires_grad) {
            n.backward_fn = std::move(backward);
            n.ensure_grad();
        }
        return &n;
    }

    static void accumulate(Node* p, const Tensor& g) {
        if (!p->requires_grad) return;
        p->ensure_grad();
        add_in_place(p->grad, g);
    }

    static void add_in_place(Tensor& dst, const Tensor& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    static bool any_requires_grad(const std::vector<Node*>& parents) {
        for (Node* p : parents) {
            if (p->requires_grad) return true;
        }
        return false;
    }

    std::deque<Node> tape_;
};

/// Named, insertion-ordered collection of trainable leaf nodes. Iteration
/// order is the registration order, which makes optimizer sweeps and
/// checkpoints deterministic.
class ParameterSet {
public:
    Node* add(const std::string& name, Tensor init) {
        if (index_.count(name)) {
            throw ContractError("ParameterSet: duplicate name '" + name + "'");
        }
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.value = std::move(init);
        n.requires_grad = true;
        n.ensure_grad();
        names_.push_back(name);
        index_[name] = nodes_.size() - 1;
        return &n;
    }

    Node* get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw ContractError("ParameterSet: unknown parameter '" + name + "'");
        }
        return &nodes_[it->second];
    }
    const Node* get(const std::string& name) const {
        return const_cast<ParameterSet*>(this)->get(name);
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return nodes_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Node& node(std::size_t i) { return nodes_[i]; }
    const Node& node(std::size_t i) const { return nodes_[i]; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const Node& p : nodes_) n += p.value.size();
        return n;
    }

    void zero_grads() {
        for (Node& p : nodes_) p.zero_grad();
    }

private:
    std::deque<Node> nodes_;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace seqcls
