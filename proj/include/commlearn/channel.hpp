#pragma once

#include "rng.hpp"
#include "tape.hpp"

namespace commlearn {

// Bit-flip noise channel: with probability flip_probability, exactly
// flips_per_message positions (drawn uniformly without replacement) are
// flipped as m -> 1 - m. Values in (0,1) flip the same way so the channel
// also acts on train-mode messages.
struct ChannelConfig {
    double flip_probability = 0.0;
    int flips_per_message = 0;

    bool active() const { return flip_probability > 0.0 && flips_per_message > 0; }
};

namespace detail {

// One message = one row of `bits` entries; flips applied in place.
inline void corrupt_row(double* row, int bits, const ChannelConfig& cfg, Rng& rng) {
    if (cfg.flips_per_message > bits)
        throw std::invalid_argument("channel: flips_per_message " + std::to_string(cfg.flips_per_message) +
                                    " exceeds message bits " + std::to_string(bits));
    if (rng.uniform() >= cfg.flip_probability) return;
    // Partial Fisher-Yates for k distinct positions.
    int idx[64];
    if (bits > 64) throw std::invalid_argument("channel: message wider than 64 bits");
    for (int i = 0; i < bits; ++i) idx[i] = i;
    for (int i = 0; i < cfg.flips_per_message; ++i) {
        const int j = i + rng.uniform_int(bits - i);
        std::swap(idx[i], idx[j]);
        row[idx[i]] = 1.0 - row[idx[i]];
    }
}

} // namespace detail

// message: rank-1 single message, or rank-2 with one message per row.
inline Tensor apply_channel(const Tensor& message, const ChannelConfig& cfg, Rng& rng) {
    Tensor out = message;
    if (!cfg.active()) {
        if (cfg.flips_per_message > message.cols() && message.rank() == 2)
            throw std::invalid_argument("channel: flips_per_message exceeds message bits");
        return out;
    }
    if (out.rank() == 1) {
        detail::corrupt_row(out.data.data(), int(out.numel()), cfg, rng);
    } else {
        const int bits = out.shape[1];
        for (int r = 0; r < out.shape[0]; ++r) detail::corrupt_row(&out(r, 0), bits, cfg, rng);
    }
    return out;
}

// Tape version: flips are applied to the value seen by receivers, but the
// backward pass treats the channel as identity, so the sender's gradient
// path is unaffected.
inline Var apply_channel(Tape& tape, Var message, const ChannelConfig& cfg, Rng& rng) {
    Tensor corrupted = apply_channel(tape.value(message), cfg, rng);
    auto vjp = [](const Tensor&, const Tensor&, const Tensor& up, Tensor& acc) {
        for (long i = 0; i < up.numel(); ++i) acc.data[size_t(i)] += up.data[size_t(i)];
    };
    return tape.custom(message, std::move(corrupted), Tensor(), vjp);
}

} // namespace commlearn
