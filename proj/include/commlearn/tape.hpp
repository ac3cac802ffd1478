#pragma once

#include <functional>
#include <unordered_map>

#include "tensor.hpp"

namespace commlearn {

// A learnable tensor with its gradient accumulator.
struct Parameter {
    Tensor value;
    Tensor grad;
    std::string name;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : value(std::move(v)), grad(Tensor::zeros(value.shape)), name(std::move(n)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

enum class Op {
    Const,
    Param,
    Add,
    Sub,
    Mul,
    Scale,
    AddBias,
    MatMul,
    ConcatCols,
    SliceCols,
    Sum,
    Mean,
    Sigmoid,
    Tanh,
    Softmax,
    Log,
    Square,
    MaxRows,
    GatherRows,
    GatherCols,
    Custom,
};

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in forward order, so insertion
// order is a topological order; backward walks it in reverse. A Custom
// node carries whatever context its forward captured (noise draws,
// pre-activations) and a vjp that multiplies the upstream gradient by the
// derivative of its backward surrogate.
class Tape {
public:
    using CustomVjp =
        std::function<void(const Tensor& x, const Tensor& ctx, const Tensor& upstream, Tensor& grad_acc)>;

    struct Node {
        Op op = Op::Const;
        std::vector<int> in;
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        bool active = false;
        Parameter* param = nullptr;
        double scalar = 0.0;
        int c0 = 0, c1 = 0;
        std::vector<int> index;
        Tensor ctx;
        CustomVjp custom_vjp;
    };

    Var constant(Tensor v) {
        Node n;
        n.op = Op::Const;
        n.value = std::move(v);
        return push(std::move(n));
    }

    Var param(Parameter& p) {
        auto it = param_cache_.find(&p);
        if (it != param_cache_.end()) return Var{it->second};
        Node n;
        n.op = Op::Param;
        n.value = p.value;
        n.needs_grad = true;
        n.param = &p;
        Var v = push(std::move(n));
        param_cache_[&p] = v.id;
        return v;
    }

    Var add(Var a, Var b) { return binary_same_shape(Op::Add, a, b); }
    Var sub(Var a, Var b) { return binary_same_shape(Op::Sub, a, b); }
    Var mul(Var a, Var b) { return binary_same_shape(Op::Mul, a, b); }

    Var scale(Var a, double k) {
        Node n;
        n.op = Op::Scale;
        n.in = {a.id};
        n.scalar = k;
        n.value = value(a);
        for (auto& e : n.value.data) e *= k;
        return push_unary(std::move(n), a);
    }

    // m [r x c] + bias [c], broadcast over rows
    Var add_bias(Var m, Var bias) {
        const Tensor& mv = value(m);
        const Tensor& bv = value(bias);
        if (mv.rank() != 2 || bv.rank() != 1 || mv.shape[1] != int(bv.numel()))
            shape_error("add_bias", mv, bv);
        Node n;
        n.op = Op::AddBias;
        n.in = {m.id, bias.id};
        n.value = mv;
        for (int r = 0; r < mv.shape[0]; ++r)
            for (int c = 0; c < mv.shape[1]; ++c) n.value(r, c) += bv(c);
        n.needs_grad = node(m.id).needs_grad || node(bias.id).needs_grad;
        return push(std::move(n));
    }

    Var matmul(Var a, Var b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0])
            shape_error("matmul", av, bv);
        Node n;
        n.op = Op::MatMul;
        n.in = {a.id, b.id};
        n.value = Tensor({av.shape[0], bv.shape[1]});
        matmul_nn(av, bv, n.value);
        n.needs_grad = node(a.id).needs_grad || node(b.id).needs_grad;
        return push(std::move(n));
    }

    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat: no inputs");
        int rows = value(parts[0]).shape[0];
        int cols = 0;
        for (Var p : parts) {
            const Tensor& v = value(p);
            if (v.rank() != 2 || v.shape[0] != rows)
                throw std::invalid_argument("concat: row mismatch, expected " + std::to_string(rows) +
                                            " got " + v.shape_str());
            cols += v.shape[1];
        }
        Node n;
        n.op = Op::ConcatCols;
        n.value = Tensor({rows, cols});
        int off = 0;
        for (Var p : parts) {
            const Tensor& v = value(p);
            n.in.push_back(p.id);
            n.needs_grad = n.needs_grad || node(p.id).needs_grad;
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < v.shape[1]; ++c) n.value(r, off + c) = v(r, c);
            off += v.shape[1];
        }
        return push(std::move(n));
    }

    Var slice_cols(Var a, int c0, int c1) {
        const Tensor& av = value(a);
        if (av.rank() != 2 || c0 < 0 || c1 > av.shape[1] || c0 >= c1)
            throw std::invalid_argument("slice: bad range [" + std::to_string(c0) + "," +
                                        std::to_string(c1) + ") for " + av.shape_str());
        Node n;
        n.op = Op::SliceCols;
        n.in = {a.id};
        n.c0 = c0;
        n.c1 = c1;
        n.value = Tensor({av.shape[0], c1 - c0});
        for (int r = 0; r < av.shape[0]; ++r)
            for (int c = c0; c < c1; ++c) n.value(r, c - c0) = av(r, c);
        return push_unary(std::move(n), a);
    }

    Var sum(Var a) {
        Node n;
        n.op = Op::Sum;
        n.in = {a.id};
        double s = 0;
        for (double v : value(a).data) s += v;
        n.value = Tensor::scalar(s);
        return push_unary(std::move(n), a);
    }

    Var mean(Var a) {
        Node n;
        n.op = Op::Mean;
        n.in = {a.id};
        double s = 0;
        for (double v : value(a).data) s += v;
        n.value = Tensor::scalar(s / double(value(a).numel()));
        return push_unary(std::move(n), a);
    }

    Var sigmoid(Var a) { return elementwise(Op::Sigmoid, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }); }
    Var tanh_op(Var a) { return elementwise(Op::Tanh, a, [](double x) { return std::tanh(x); }); }
    Var log_op(Var a) { return elementwise(Op::Log, a, [](double x) { return std::log(x); }); }
    Var square(Var a) { return elementwise(Op::Square, a, [](double x) { return x * x; }); }

    Var softmax_rows(Var a) {
        const Tensor& av = value(a);
        if (av.rank() != 2) shape_error("softmax", av);
        Node n;
        n.op = Op::Softmax;
        n.in = {a.id};
        n.value = Tensor(av.shape);
        for (int r = 0; r < av.shape[0]; ++r) {
            double mx = av(r, 0);
            for (int c = 1; c < av.shape[1]; ++c) mx = std::max(mx, av(r, c));
            double z = 0;
            for (int c = 0; c < av.shape[1]; ++c) z += std::exp(av(r, c) - mx);
            for (int c = 0; c < av.shape[1]; ++c) n.value(r, c) = std::exp(av(r, c) - mx) / z;
        }
        return push_unary(std::move(n), a);
    }

    // rowwise max, ties to the lowest index
    Var max_rows(Var a) {
        const Tensor& av = value(a);
        if (av.rank() != 2) shape_error("max-over-axis", av);
        Node n;
        n.op = Op::MaxRows;
        n.in = {a.id};
        n.value = Tensor({av.shape[0]});
        n.index.resize(size_t(av.shape[0]));
        for (int r = 0; r < av.shape[0]; ++r) {
            int best = 0;
            for (int c = 1; c < av.shape[1]; ++c)
                if (av(r, c) > av(r, best)) best = c;
            n.index[size_t(r)] = best;
            n.value(r) = av(r, best);
        }
        return push_unary(std::move(n), a);
    }

    Var gather_rows(Var a, std::vector<int> idx) {
        const Tensor& av = value(a);
        if (av.rank() != 2) shape_error("gather-index", av);
        Node n;
        n.op = Op::GatherRows;
        n.in = {a.id};
        n.value = Tensor({int(idx.size()), av.shape[1]});
        for (size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] < 0 || idx[r] >= av.shape[0])
                throw std::invalid_argument("gather-index: row " + std::to_string(idx[r]) +
                                            " out of range for " + av.shape_str());
            for (int c = 0; c < av.shape[1]; ++c) n.value(int(r), c) = av(idx[r], c);
        }
        n.index = std::move(idx);
        return push_unary(std::move(n), a);
    }

    // out[r] = a[r, idx[r]]
    Var gather_cols(Var a, std::vector<int> idx) {
        const Tensor& av = value(a);
        if (av.rank() != 2 || int(idx.size()) != av.shape[0])
            throw std::invalid_argument("gather-index: need one column index per row of " + av.shape_str());
        Node n;
        n.op = Op::GatherCols;
        n.in = {a.id};
        n.value = Tensor({av.shape[0]});
        for (int r = 0; r < av.shape[0]; ++r) {
            if (idx[size_t(r)] < 0 || idx[size_t(r)] >= av.shape[1])
                throw std::invalid_argument("gather-index: col " + std::to_string(idx[size_t(r)]) +
                                            " out of range for " + av.shape_str());
            n.value(r) = av(r, idx[size_t(r)]);
        }
        n.index = std::move(idx);
        return push_unary(std::move(n), a);
    }

    // Forward value computed by the caller; backward multiplies upstream by
    // the caller's surrogate derivative. ctx holds the frozen noise draws.
    Var custom(Var x, Tensor value, Tensor ctx, CustomVjp vjp) {
        Node n;
        n.op = Op::Custom;
        n.in = {x.id};
        n.value = std::move(value);
        n.ctx = std::move(ctx);
        n.custom_vjp = std::move(vjp);
        return push_unary(std::move(n), x);
    }

    const Tensor& value(Var v) const { return nodes_[size_t(v.id)].value; }
    const Tensor& grad(Var v) const { return nodes_[size_t(v.id)].grad; }
    const Node& node(int id) const { return nodes_[size_t(id)]; }
    Node& node(int id) { return nodes_[size_t(id)]; }
    int size() const { return int(nodes_.size()); }

    void set_check_finite(bool on) { check_finite_ = on; }

    // Accumulates d(root)/d(param) into every reachable Parameter's grad.
    void backward(Var root) {
        std::vector<int> order = activate(root);
        run_backward(order);
    }

    // Same contraction along a caller-supplied traversal; the order must
    // respect the dependency structure (every consumer before its input).
    void backward(Var root, const std::vector<int>& order) {
        std::vector<int> def = activate(root);
        if (order.size() != def.size())
            throw std::invalid_argument("backward: order must cover the active subgraph exactly");
        std::vector<int> pos(nodes_.size(), -1);
        for (size_t i = 0; i < order.size(); ++i) {
            int id = order[i];
            if (id < 0 || id >= size() || !nodes_[size_t(id)].active || pos[size_t(id)] != -1)
                throw std::invalid_argument("backward: order is not a permutation of the active subgraph");
            pos[size_t(id)] = int(i);
        }
        for (int id : order)
            for (int in_id : nodes_[size_t(id)].in)
                if (nodes_[size_t(in_id)].active && pos[size_t(in_id)] < pos[size_t(id)])
                    throw std::invalid_argument("backward: order violates dependencies");
        run_backward(order);
    }

    void clear() {
        nodes_.clear();
        param_cache_.clear();
    }

private:
    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, int> param_cache_;
    bool check_finite_ = false;

    Var push(Node n) {
        if (check_finite_ && !all_finite(n.value))
            throw std::runtime_error("tape: non-finite forward value in op " + std::to_string(int(n.op)));
        nodes_.push_back(std::move(n));
        return Var{int(nodes_.size()) - 1};
    }

    Var push_unary(Node n, Var a) {
        n.needs_grad = node(a.id).needs_grad;
        return push(std::move(n));
    }

    Var binary_same_shape(Op op, Var a, Var b) {
        const Tensor& av = value(a);
        const Tensor& bv = value(b);
        if (!av.same_shape(bv)) shape_error(op_name(op), av, bv);
        Node n;
        n.op = op;
        n.in = {a.id, b.id};
        n.value = av;
        switch (op) {
            case Op::Add:
                for (long i = 0; i < av.numel(); ++i) n.value.data[size_t(i)] += bv.data[size_t(i)];
                break;
            case Op::Sub:
                for (long i = 0; i < av.numel(); ++i) n.value.data[size_t(i)] -= bv.data[size_t(i)];
                break;
            case Op::Mul:
                for (long i = 0; i < av.numel(); ++i) n.value.data[size_t(i)] *= bv.data[size_t(i)];
                break;
            default:
                throw std::logic_error("binary_same_shape: bad op");
        }
        n.needs_grad = node(a.id).needs_grad || node(b.id).needs_grad;
        return push(std::move(n));
    }

    template <typename F>
    Var elementwise(Op op, Var a, F f) {
        Node n;
        n.op = op;
        n.in = {a.id};
        n.value = value(a);
        for (auto& e : n.value.data) e = f(e);
        return push_unary(std::move(n), a);
    }

    // Marks the needy subgraph reachable from root; returns the default
    // reverse-insertion processing order.
    std::vector<int> activate(Var root) {
        if (!root.valid() || root.id >= size()) throw std::invalid_argument("backward: invalid root");
        if (nodes_[size_t(root.id)].value.numel() != 1)
            throw std::invalid_argument("backward: root must be scalar, got " +
                                        nodes_[size_t(root.id)].value.shape_str());
        for (auto& n : nodes_) {
            n.active = false;
            n.grad = Tensor();
        }
        Node& r = nodes_[size_t(root.id)];
        r.active = r.needs_grad;
        std::vector<int> order;
        for (int i = root.id; i >= 0; --i) {
            Node& n = nodes_[size_t(i)];
            if (!n.active) continue;
            order.push_back(i);
            for (int j : n.in) {
                Node& m = nodes_[size_t(j)];
                if (m.needs_grad) m.active = true;
            }
        }
        if (r.active) {
            r.grad = Tensor(r.value.shape);
            r.grad.data[0] = 1.0;
        }
        return order;
    }

    void ensure_grad(Node& n) {
        if (n.grad.data.empty()) n.grad = Tensor(n.value.shape);
    }

    void run_backward(const std::vector<int>& order) {
        for (int id : order) {
            Node& n = nodes_[size_t(id)];
            if (n.grad.data.empty()) ensure_grad(n); // unreached branch of the active set
            dispatch(n);
        }
    }

    Node& input(Node& n, int k) { return nodes_[size_t(n.in[size_t(k)])]; }

    // Distributes n.grad to n's inputs (and to the bound Parameter for leaves).
    void dispatch(Node& n) {
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Const:
                break;
            case Op::Param:
                for (long i = 0; i < g.numel(); ++i) n.param->grad.data[size_t(i)] += g.data[size_t(i)];
                break;
            case Op::Add:
            case Op::Sub:
                for (int k = 0; k < 2; ++k) {
                    Node& a = input(n, k);
                    if (!a.active) continue;
                    ensure_grad(a);
                    const double sgn = (n.op == Op::Sub && k == 1) ? -1.0 : 1.0;
                    for (long i = 0; i < g.numel(); ++i) a.grad.data[size_t(i)] += sgn * g.data[size_t(i)];
                }
                break;
            case Op::Mul: {
                Node& a = input(n, 0);
                Node& b = input(n, 1);
                if (a.active) {
                    ensure_grad(a);
                    for (long i = 0; i < g.numel(); ++i)
                        a.grad.data[size_t(i)] += g.data[size_t(i)] * b.value.data[size_t(i)];
                }
                if (b.active) {
                    ensure_grad(b);
                    for (long i = 0; i < g.numel(); ++i)
                        b.grad.data[size_t(i)] += g.data[size_t(i)] * a.value.data[size_t(i)];
                }
                break;
            }
            case Op::Scale: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (long i = 0; i < g.numel(); ++i) a.grad.data[size_t(i)] += n.scalar * g.data[size_t(i)];
                break;
            }
            case Op::AddBias: {
                Node& m = input(n, 0);
                Node& b = input(n, 1);
                if (m.active) {
                    ensure_grad(m);
                    for (long i = 0; i < g.numel(); ++i) m.grad.data[size_t(i)] += g.data[size_t(i)];
                }
                if (b.active) {
                    ensure_grad(b);
                    for (int r = 0; r < n.value.shape[0]; ++r)
                        for (int c = 0; c < n.value.shape[1]; ++c) b.grad(c) += g(r, c);
                }
                break;
            }
            case Op::MatMul: {
                Node& a = input(n, 0);
                Node& b = input(n, 1);
                if (a.active) {
                    ensure_grad(a);
                    Tensor tmp({a.value.shape[0], a.value.shape[1]});
                    matmul_nt(g, b.value, tmp);
                    for (long i = 0; i < tmp.numel(); ++i) a.grad.data[size_t(i)] += tmp.data[size_t(i)];
                }
                if (b.active) {
                    ensure_grad(b);
                    matmul_tn_acc(a.value, g, b.grad);
                }
                break;
            }
            case Op::ConcatCols: {
                int off = 0;
                for (size_t k = 0; k < n.in.size(); ++k) {
                    Node& a = input(n, int(k));
                    const int c = a.value.shape[1];
                    if (a.active) {
                        ensure_grad(a);
                        for (int r = 0; r < n.value.shape[0]; ++r)
                            for (int j = 0; j < c; ++j) a.grad(r, j) += g(r, off + j);
                    }
                    off += c;
                }
                break;
            }
            case Op::SliceCols: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (int r = 0; r < n.value.shape[0]; ++r)
                    for (int c = 0; c < n.value.shape[1]; ++c) a.grad(r, n.c0 + c) += g(r, c);
                break;
            }
            case Op::Sum: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (auto& e : a.grad.data) e += g.data[0];
                break;
            }
            case Op::Mean: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                const double k = g.data[0] / double(a.value.numel());
                for (auto& e : a.grad.data) e += k;
                break;
            }
            case Op::Sigmoid: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (long i = 0; i < g.numel(); ++i) {
                    const double s = n.value.data[size_t(i)];
                    a.grad.data[size_t(i)] += g.data[size_t(i)] * s * (1.0 - s);
                }
                break;
            }
            case Op::Tanh: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (long i = 0; i < g.numel(); ++i) {
                    const double t = n.value.data[size_t(i)];
                    a.grad.data[size_t(i)] += g.data[size_t(i)] * (1.0 - t * t);
                }
                break;
            }
            case Op::Softmax: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (int r = 0; r < n.value.shape[0]; ++r) {
                    double dot = 0;
                    for (int c = 0; c < n.value.shape[1]; ++c) dot += g(r, c) * n.value(r, c);
                    for (int c = 0; c < n.value.shape[1]; ++c)
                        a.grad(r, c) += n.value(r, c) * (g(r, c) - dot);
                }
                break;
            }
            case Op::Log: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (long i = 0; i < g.numel(); ++i)
                    a.grad.data[size_t(i)] += g.data[size_t(i)] / a.value.data[size_t(i)];
                break;
            }
            case Op::Square: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (long i = 0; i < g.numel(); ++i)
                    a.grad.data[size_t(i)] += 2.0 * a.value.data[size_t(i)] * g.data[size_t(i)];
                break;
            }
            case Op::MaxRows: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (int r = 0; r < int(n.index.size()); ++r) a.grad(r, n.index[size_t(r)]) += g(r);
                break;
            }
            case Op::GatherRows: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (int r = 0; r < int(n.index.size()); ++r)
                    for (int c = 0; c < n.value.shape[1]; ++c) a.grad(n.index[size_t(r)], c) += g(r, c);
                break;
            }
            case Op::GatherCols: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                for (int r = 0; r < int(n.index.size()); ++r) a.grad(r, n.index[size_t(r)]) += g(r);
                break;
            }
            case Op::Custom: {
                Node& a = input(n, 0);
                if (!a.active) break;
                ensure_grad(a);
                n.custom_vjp(a.value, n.ctx, g, a.grad);
                break;
            }
        }
    }

    static const char* op_name(Op op) {
        switch (op) {
            case Op::Add: return "add";
            case Op::Sub: return "sub";
            case Op::Mul: return "mul";
            default: return "op";
        }
    }

    [[noreturn]] static void shape_error(const std::string& op, const Tensor& a) {
        throw std::invalid_argument(op + ": bad shape " + a.shape_str());
    }

    [[noreturn]] static void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
        throw std::invalid_argument(op + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
};

// Elementwise unit with a surrogate backward: output = fwd(x, noise),
// d(output)/dx taken as surrogate_grad(x, noise). The noise tensor is
// drawn once by the caller and captured, so backward sees the same draw.
inline Var custom_unary(Tape& tape, Var x, const std::function<double(double, double)>& fwd,
                        std::function<double(double, double)> surrogate_grad, Tensor noise) {
    const Tensor& xv = tape.value(x);
    if (noise.numel() > 0 && !noise.same_shape(xv))
        throw std::invalid_argument("custom_unary: noise shape " + noise.shape_str() +
                                    " does not match input " + xv.shape_str());
    Tensor out(xv.shape);
    const bool has_noise = noise.numel() > 0;
    for (long i = 0; i < xv.numel(); ++i)
        out.data[size_t(i)] = fwd(xv.data[size_t(i)], has_noise ? noise.data[size_t(i)] : 0.0);
    auto vjp = [sg = std::move(surrogate_grad), has_noise](const Tensor& xin, const Tensor& ctx,
                                                           const Tensor& up, Tensor& acc) {
        for (long i = 0; i < xin.numel(); ++i)
            acc.data[size_t(i)] +=
                up.data[size_t(i)] * sg(xin.data[size_t(i)], has_noise ? ctx.data[size_t(i)] : 0.0);
    };
    return tape.custom(x, std::move(out), std::move(noise), vjp);
}

} // namespace commlearn
