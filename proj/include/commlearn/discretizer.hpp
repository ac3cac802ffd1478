#pragma once

#include "rng.hpp"
#include "tape.hpp"

namespace commlearn {

enum class DiscretizerKind { DRU, STE, GS, ST_DRU, ST_GS };
enum class DiscretizerMode { Train, Eval };

inline const char* discretizer_name(DiscretizerKind k) {
    switch (k) {
        case DiscretizerKind::DRU: return "DRU";
        case DiscretizerKind::STE: return "STE";
        case DiscretizerKind::GS: return "GS";
        case DiscretizerKind::ST_DRU: return "ST-DRU";
        case DiscretizerKind::ST_GS: return "ST-GS";
    }
    return "?";
}

struct DiscretizerSpec {
    DiscretizerKind kind = DiscretizerKind::DRU;
    double sigma_g = 2.0;     // Gaussian noise std, DRU family
    double temperature = 1.0; // softmax temperature, GS family
    DiscretizerMode mode = DiscretizerMode::Train;

    void validate() const {
        if (sigma_g < 0.0) throw std::invalid_argument("discretizer: sigma_g must be >= 0");
        if (temperature <= 0.0) throw std::invalid_argument("discretizer: temperature must be > 0");
    }

    DiscretizerSpec with_mode(DiscretizerMode m) const {
        DiscretizerSpec s = *this;
        s.mode = m;
        return s;
    }
};

struct ChannelOutput {
    Tensor message;        // per-bit values in [0,1]
    Tensor pre_activation; // the unit's input, kept for the amplitude metric
};

namespace detail {

// H(0) = 1 by convention.
inline double heaviside(double x) { return x >= 0.0 ? 1.0 : 0.0; }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Sigmoid clamped away from {0,1} before it feeds a log.
constexpr double kProbClamp = 1e-10;

inline double clamp_prob(double p) {
    return p < kProbClamp ? kProbClamp : (p > 1.0 - kProbClamp ? 1.0 - kProbClamp : p);
}

// Relaxed two-class gumbel-softmax, first component.
inline double gs_soft(double x, double g1, double g2, double tau) {
    const double s = sigmoid(x);
    const double a = std::log(clamp_prob(s)) + g1;
    const double b = std::log(clamp_prob(1.0 - s)) + g2;
    return sigmoid((a - b) / tau);
}

inline double gs_soft_grad(double x, double g1, double g2, double tau) {
    const double s = sigmoid(x);
    const double m = gs_soft(x, g1, g2, tau);
    // d log(clamp(s))/dx and d log(clamp(1-s))/dx vanish inside the clamp.
    const double d0 = (s > kProbClamp && s < 1.0 - kProbClamp) ? (1.0 - s) : 0.0;
    const double d1 = (1.0 - s > kProbClamp && 1.0 - s < 1.0 - kProbClamp) ? -s : 0.0;
    return m * (1.0 - m) * (d0 - d1) / tau;
}

// one_hot(argmax_i[g_i + log pi_i])[0] with pi_0 = sigma(x).
inline double gs_hard(double x, double g1, double g2) {
    const double s = sigmoid(x);
    const double a = std::log(clamp_prob(s)) + g1;
    const double b = std::log(clamp_prob(1.0 - s)) + g2;
    return a >= b ? 1.0 : 0.0;
}

} // namespace detail

// Frozen noise for one discretize call: n1 is Gaussian (DRU family) or the
// first Gumbel draw (GS family); n2 is the second Gumbel draw.
struct NoiseDraw {
    Tensor n1, n2;
};

inline bool uses_gaussian_noise(const DiscretizerSpec& s) {
    return (s.kind == DiscretizerKind::DRU || s.kind == DiscretizerKind::ST_DRU) &&
           s.mode == DiscretizerMode::Train;
}

inline bool uses_gumbel_noise(const DiscretizerSpec& s) {
    return s.kind == DiscretizerKind::GS || s.kind == DiscretizerKind::ST_GS;
}

inline NoiseDraw draw_noise(const DiscretizerSpec& spec, const std::vector<int>& shape, Rng& rng) {
    NoiseDraw nd;
    if (uses_gaussian_noise(spec)) {
        nd.n1 = Tensor(shape);
        for (auto& e : nd.n1.data) e = rng.normal(spec.sigma_g);
    } else if (uses_gumbel_noise(spec)) {
        nd.n1 = Tensor(shape);
        nd.n2 = Tensor(shape);
        for (long i = 0; i < nd.n1.numel(); ++i) {
            nd.n1.data[size_t(i)] = rng.gumbel();
            nd.n2.data[size_t(i)] = rng.gumbel();
        }
    }
    return nd;
}

// Elementwise forward pass for the given mode.
inline Tensor discretize_forward(const DiscretizerSpec& spec, const Tensor& x, const NoiseDraw& nd) {
    spec.validate();
    Tensor out(x.shape);
    const bool train = spec.mode == DiscretizerMode::Train;
    for (long i = 0; i < x.numel(); ++i) {
        const double xi = x.data[size_t(i)];
        double v = 0.0;
        switch (spec.kind) {
            case DiscretizerKind::STE:
                v = detail::heaviside(xi);
                break;
            case DiscretizerKind::DRU:
                v = train ? detail::sigmoid(xi + nd.n1.data[size_t(i)]) : detail::heaviside(xi);
                break;
            case DiscretizerKind::ST_DRU:
                v = train ? detail::heaviside(xi + nd.n1.data[size_t(i)]) : detail::heaviside(xi);
                break;
            case DiscretizerKind::GS:
                v = train ? detail::gs_soft(xi, nd.n1.data[size_t(i)], nd.n2.data[size_t(i)], spec.temperature)
                          : detail::gs_hard(xi, nd.n1.data[size_t(i)], nd.n2.data[size_t(i)]);
                break;
            case DiscretizerKind::ST_GS:
                v = detail::gs_hard(xi, nd.n1.data[size_t(i)], nd.n2.data[size_t(i)]);
                break;
        }
        out.data[size_t(i)] = v;
    }
    return out;
}

// The value of the function used for the backward pass, with the same
// frozen noise; finite differences of this match surrogate_gradient.
inline Tensor surrogate_value(const DiscretizerSpec& spec, const Tensor& x, const NoiseDraw& nd) {
    Tensor out(x.shape);
    for (long i = 0; i < x.numel(); ++i) {
        const double xi = x.data[size_t(i)];
        double v = 0.0;
        switch (spec.kind) {
            case DiscretizerKind::STE:
                v = xi;
                break;
            case DiscretizerKind::DRU:
            case DiscretizerKind::ST_DRU:
                v = detail::sigmoid(xi + nd.n1.data[size_t(i)]);
                break;
            case DiscretizerKind::GS:
            case DiscretizerKind::ST_GS:
                v = detail::gs_soft(xi, nd.n1.data[size_t(i)], nd.n2.data[size_t(i)], spec.temperature);
                break;
        }
        out.data[size_t(i)] = v;
    }
    return out;
}

// upstream * d(surrogate)/dx at the frozen noise. Noise is a constant to
// backprop: gradient flows to x only.
inline Tensor surrogate_gradient(const DiscretizerSpec& spec, const Tensor& x, const NoiseDraw& nd,
                                 const Tensor& upstream) {
    if (!upstream.same_shape(x))
        throw std::invalid_argument("discretizer: upstream shape " + upstream.shape_str() +
                                    " does not match input " + x.shape_str());
    Tensor out(x.shape);
    for (long i = 0; i < x.numel(); ++i) {
        const double xi = x.data[size_t(i)];
        double d = 0.0;
        switch (spec.kind) {
            case DiscretizerKind::STE:
                d = 1.0;
                break;
            case DiscretizerKind::DRU:
            case DiscretizerKind::ST_DRU: {
                const double s = detail::sigmoid(xi + nd.n1.data[size_t(i)]);
                d = s * (1.0 - s);
                break;
            }
            case DiscretizerKind::GS:
            case DiscretizerKind::ST_GS:
                d = detail::gs_soft_grad(xi, nd.n1.data[size_t(i)], nd.n2.data[size_t(i)], spec.temperature);
                break;
        }
        out.data[size_t(i)] = upstream.data[size_t(i)] * d;
    }
    return out;
}

inline Tensor backward_contract_check(const DiscretizerSpec& spec, const Tensor& x, const NoiseDraw& nd,
                                      const Tensor& upstream) {
    return surrogate_gradient(spec, x, nd, upstream);
}

// Raw (off-tape) application; draws its own noise from the caller's rng.
inline ChannelOutput discretize(const Tensor& x, const DiscretizerSpec& spec, Rng& rng) {
    if (!all_finite(x)) throw std::invalid_argument("discretizer: non-finite input");
    const NoiseDraw nd = draw_noise(spec, x.shape, rng);
    return ChannelOutput{discretize_forward(spec, x, nd), x};
}

// Train-mode application recorded on the tape. The noise draw is stored in
// the node's saved context, so the backward surrogate sees the same draw.
inline Var discretize(Tape& tape, Var x, const DiscretizerSpec& spec, Rng& rng) {
    if (spec.mode != DiscretizerMode::Train)
        throw std::invalid_argument("discretizer: tape recording is train-mode only");
    spec.validate();
    const Tensor& xv = tape.value(x);
    NoiseDraw nd = draw_noise(spec, xv.shape, rng);
    Tensor fwd = discretize_forward(spec, xv, nd);

    // Pack the draw into the saved context: [n1 | n2].
    const long n = xv.numel();
    Tensor ctx;
    if (nd.n1.numel() > 0) {
        ctx = Tensor({int(n * (nd.n2.numel() > 0 ? 2 : 1))});
        for (long i = 0; i < n; ++i) ctx.data[size_t(i)] = nd.n1.data[size_t(i)];
        if (nd.n2.numel() > 0)
            for (long i = 0; i < n; ++i) ctx.data[size_t(n + i)] = nd.n2.data[size_t(i)];
    }

    auto vjp = [spec](const Tensor& xin, const Tensor& saved, const Tensor& up, Tensor& acc) {
        NoiseDraw d;
        const long m = xin.numel();
        if (saved.numel() >= m) {
            d.n1 = Tensor(xin.shape);
            for (long i = 0; i < m; ++i) d.n1.data[size_t(i)] = saved.data[size_t(i)];
        }
        if (saved.numel() >= 2 * m) {
            d.n2 = Tensor(xin.shape);
            for (long i = 0; i < m; ++i) d.n2.data[size_t(i)] = saved.data[size_t(m + i)];
        }
        Tensor g = surrogate_gradient(spec, xin, d, up);
        for (long i = 0; i < m; ++i) acc.data[size_t(i)] += g.data[size_t(i)];
    };
    return tape.custom(x, std::move(fwd), std::move(ctx), vjp);
}

// Binned output frequencies per input value, for one unit and mode.
struct HistogramRow {
    double x = 0.0;
    std::vector<double> bin_left, bin_right, freq;
};

inline std::vector<HistogramRow> output_histogram(const DiscretizerSpec& spec,
                                                  const std::vector<double>& x_values, int draws,
                                                  Rng& rng, int bins = 20) {
    if (draws < 1) throw std::invalid_argument("output_histogram: draws must be >= 1");
    std::vector<HistogramRow> rows;
    for (double xv : x_values) {
        HistogramRow row;
        row.x = xv;
        std::vector<int> counts(size_t(bins), 0);
        const Tensor x({1}, {xv});
        for (int d = 0; d < draws; ++d) {
            const double m = discretize(x, spec, rng).message(0);
            int b = int(m * bins);
            if (b >= bins) b = bins - 1;
            if (b < 0) b = 0;
            ++counts[size_t(b)];
        }
        for (int b = 0; b < bins; ++b) {
            row.bin_left.push_back(double(b) / bins);
            row.bin_right.push_back(double(b + 1) / bins);
            row.freq.push_back(double(counts[size_t(b)]) / double(draws));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace commlearn
