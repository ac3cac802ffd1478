#pragma once

#include "rollout.hpp"

namespace commlearn {

// Raised when a training iteration produces a non-finite loss; the harness
// turns it into an ABORTED marker next to the partial outputs.
struct TrainAborted : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IterationMetrics {
    double loss = 0.0;
    double comm_amplitude = 0.0;
    double critic_loss = 0.0;
    double actor_lr = 0.0;
    double train_return = 0.0; // mean behavior-policy episode return of the batch
};

// Epsilon-greedy over one row of action values; argmax ties break to the
// lowest index.
inline int select_action(const double* q, int n, double epsilon, Rng& rng) {
    if (n < 1) throw std::invalid_argument("select_action: empty action set");
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("select_action: epsilon outside [0,1]");
    if (rng.uniform() < epsilon) return rng.uniform_int(n);
    int best = 0;
    for (int c = 1; c < n; ++c)
        if (q[c] > q[best]) best = c;
    return best;
}

inline double dqn_td_target(double reward, double gamma, double max_q_next, bool terminal) {
    return terminal ? reward : reward + gamma * max_q_next;
}

inline int sample_index(const double* probs, int n, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (int i = 0; i < n; ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return n - 1;
}

struct MsgEmission {
    Var message;        // delivered value (post channel, post ablation)
    Var pre_activation; // the unit's input x
};

// One speaking group's message pipeline for one step, recorded on the tape:
// C-Net -> discretizer -> channel. Severing the channel re-enters the
// message as a constant so no gradient reaches the sender.
inline MsgEmission emit_messages(Tape& tape, Mlp& c_net, const Tensor& obs,
                                 const DiscretizerSpec& disc, const ChannelConfig& channel,
                                 bool sever_channel, Rng& disc_rng, Rng& chan_rng) {
    Var x = c_net.forward(tape, tape.constant(obs));
    Var m = discretize(tape, x, disc, disc_rng);
    if (channel.active()) m = apply_channel(tape, m, channel, chan_rng);
    if (sever_channel) m = tape.constant(tape.value(m));
    return MsgEmission{m, x};
}

// Tape-side input assembly: observation columns, then per listen slot the
// routed rows of the sender group's message matrix (zeros before first
// delivery or under the zero-message ablation).
inline Var assemble_input_tape(Tape& tape, const Tensor& obs, const std::vector<SlotRouting>& slots,
                               const std::map<int, Var>* delivered, int message_bits) {
    const int rows = obs.shape[0];
    Var obs_var = tape.constant(obs);
    if (slots.empty()) return obs_var;
    std::vector<Var> parts{obs_var};
    if (delivered == nullptr) {
        parts.push_back(tape.constant(Tensor({rows, int(slots.size()) * message_bits})));
    } else {
        for (const auto& slot : slots)
            parts.push_back(tape.gather_rows(delivered->at(slot.sender_group), slot.rows));
    }
    return tape.concat_cols(parts);
}

} // namespace commlearn
