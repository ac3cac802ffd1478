#pragma once

#include "rng.hpp"
#include "tape.hpp"

namespace commlearn {

enum class Act { Identity, Tanh, Sigmoid };

struct MlpSpec {
    std::vector<int> layer_sizes;
    Act activation = Act::Tanh;
    Act output_activation = Act::Identity;

    void validate() const {
        if (layer_sizes.size() < 2)
            throw std::invalid_argument("mlp: need at least input and output layer");
        for (int w : layer_sizes)
            if (w <= 0) throw std::invalid_argument("mlp: nonpositive layer width");
    }
};

inline double apply_act(Act a, double x) {
    switch (a) {
        case Act::Identity: return x;
        case Act::Tanh: return std::tanh(x);
        case Act::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    return x;
}

// Fully connected net; parameters live in the Mlp and are bound onto a
// tape per forward, so several agents may share one Mlp and their
// gradients accumulate into the same Parameters.
struct Mlp {
    MlpSpec spec;
    std::vector<Parameter> params; // W0, b0, W1, b1, ...
    std::string name;

    Mlp() = default;

    Mlp(std::string name_, MlpSpec spec_, Rng& rng) : spec(std::move(spec_)), name(std::move(name_)) {
        spec.validate();
        for (size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
            const int in = spec.layer_sizes[l], out = spec.layer_sizes[l + 1];
            Tensor w({in, out});
            const double a = std::sqrt(6.0 / double(in + out));
            for (auto& e : w.data) e = (2.0 * rng.uniform() - 1.0) * a;
            params.emplace_back(name + ".W" + std::to_string(l), std::move(w));
            params.emplace_back(name + ".b" + std::to_string(l), Tensor({out}));
        }
    }

    int input_width() const { return spec.layer_sizes.front(); }
    int output_width() const { return spec.layer_sizes.back(); }

    Var forward(Tape& tape, Var x) {
        check_input(tape.value(x));
        Var h = x;
        for (size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
            Var w = tape.param(params[2 * l]);
            Var b = tape.param(params[2 * l + 1]);
            h = tape.add_bias(tape.matmul(h, w), b);
            const Act act = (l + 2 == spec.layer_sizes.size()) ? spec.output_activation : spec.activation;
            if (act == Act::Tanh) h = tape.tanh_op(h);
            else if (act == Act::Sigmoid) h = tape.sigmoid(h);
        }
        return h;
    }

    // Same computation off-tape; used for target networks and evaluation.
    Tensor forward_raw(const Tensor& x) const {
        check_input(x);
        Tensor h = x;
        for (size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
            const Tensor& w = params[2 * l].value;
            const Tensor& b = params[2 * l + 1].value;
            Tensor out({h.shape[0], w.shape[1]});
            matmul_nn(h, w, out);
            const Act act = (l + 2 == spec.layer_sizes.size()) ? spec.output_activation : spec.activation;
            for (int r = 0; r < out.shape[0]; ++r)
                for (int c = 0; c < out.shape[1]; ++c) out(r, c) = apply_act(act, out(r, c) + b(c));
            h = std::move(out);
        }
        return h;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> ps;
        for (auto& p : params) ps.push_back(&p);
        return ps;
    }

    // Value copy used as a target network.
    Mlp clone(const std::string& new_name) const {
        Mlp m;
        m.spec = spec;
        m.name = new_name;
        for (const auto& p : params) m.params.emplace_back(new_name + p.name.substr(name.size()), p.value);
        return m;
    }

private:
    void check_input(const Tensor& x) const {
        if (x.rank() != 2 || x.shape[1] != input_width())
            throw std::invalid_argument("mlp " + name + ": input width mismatch, expected " +
                                        std::to_string(input_width()) + " got " + x.shape_str());
    }
};

// target <- tau * online + (1 - tau) * target
inline void soft_update(const std::vector<Parameter*>& target, const std::vector<Parameter*>& online,
                        double tau) {
    if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("soft_update: tau out of [0,1]");
    if (target.size() != online.size())
        throw std::invalid_argument("soft_update: parameter list size mismatch");
    for (size_t i = 0; i < target.size(); ++i) {
        Tensor& t = target[i]->value;
        const Tensor& o = online[i]->value;
        if (!t.same_shape(o)) throw std::invalid_argument("soft_update: shape mismatch at " + target[i]->name);
        for (long j = 0; j < t.numel(); ++j)
            t.data[size_t(j)] = tau * o.data[size_t(j)] + (1.0 - tau) * t.data[size_t(j)];
    }
}

// Adaptive-moment optimizer with bias correction; moment state persists
// per parameter across steps.
class Adam {
public:
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    Adam() = default;
    explicit Adam(std::vector<Parameter*> params, double lr_ = 5e-4) : lr(lr_), params_(std::move(params)) {
        for (auto* p : params_) {
            m_.emplace_back(Tensor(p->value.shape));
            v_.emplace_back(Tensor(p->value.shape));
        }
    }

    void step() { step_with_lr(lr); }

    void step_with_lr(double lr_now) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, double(t_));
        const double bc2 = 1.0 - std::pow(beta2, double(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Tensor& val = params_[i]->value;
            const Tensor& g = params_[i]->grad;
            for (long j = 0; j < val.numel(); ++j) {
                const double gj = g.data[size_t(j)];
                double& mj = m_[i].data[size_t(j)];
                double& vj = v_[i].data[size_t(j)];
                mj = beta1 * mj + (1.0 - beta1) * gj;
                vj = beta2 * vj + (1.0 - beta2) * gj * gj;
                val.data[size_t(j)] -= lr_now * (mj / bc1) / (std::sqrt(vj / bc2) + eps);
            }
        }
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    const std::vector<Parameter*>& params() const { return params_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

} // namespace commlearn
