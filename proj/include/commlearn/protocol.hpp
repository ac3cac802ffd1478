#pragma once

#include <functional>

#include "discretizer.hpp"
#include "matrix_env.hpp"

namespace commlearn {

// Empirical distribution over emitted B-bit messages per input number,
// before and after channel noise.
struct ProtocolTable {
    int message_bits = 0;
    int n_inputs = 0;
    std::vector<std::vector<double>> pre;  // [input][code] frequencies
    std::vector<std::vector<double>> post; // [input][code] frequencies

    static int code_of(const std::vector<double>& bits) {
        int code = 0;
        for (size_t j = 0; j < bits.size(); ++j)
            if (bits[j] >= 0.5) code |= 1 << j;
        return code;
    }

    static std::string code_string(int code, int bits) {
        std::string s(size_t(bits), '0');
        for (int j = 0; j < bits; ++j)
            if ((code >> j) & 1) s[size_t(j)] = '1';
        return s;
    }

    // Modal pre-channel code for one input.
    int modal_code(int input) const {
        int best = 0;
        for (size_t c = 1; c < pre[size_t(input)].size(); ++c)
            if (pre[size_t(input)][c] > pre[size_t(input)][size_t(best)]) best = int(c);
        return best;
    }
};

inline int hamming_distance(int a, int b) {
    int d = 0, x = a ^ b;
    while (x) {
        d += x & 1;
        x >>= 1;
    }
    return d;
}

// comm_policy maps a one-hot input observation to message pre-activations.
inline ProtocolTable protocol_table(const std::function<Tensor(const Tensor& obs)>& comm_policy,
                                    int n_inputs, int message_bits, const ChannelConfig& channel,
                                    const DiscretizerSpec& eval_spec, int episodes, Rng& rng) {
    if (episodes < 1) throw std::invalid_argument("protocol_table: episodes must be >= 1");
    ProtocolTable tbl;
    tbl.message_bits = message_bits;
    tbl.n_inputs = n_inputs;
    const int n_codes = 1 << message_bits;
    tbl.pre.assign(size_t(n_inputs), std::vector<double>(size_t(n_codes), 0.0));
    tbl.post.assign(size_t(n_inputs), std::vector<double>(size_t(n_codes), 0.0));
    DiscretizerSpec spec = eval_spec.with_mode(DiscretizerMode::Eval);
    for (int v = 0; v < n_inputs; ++v) {
        Tensor obs({1, n_inputs});
        obs(0, v) = 1.0;
        const Tensor x = comm_policy(obs);
        if (x.numel() != message_bits)
            throw std::invalid_argument("protocol_table: policy output width mismatch");
        for (int e = 0; e < episodes; ++e) {
            const Tensor msg = discretize(x, spec, rng).message;
            tbl.pre[size_t(v)][size_t(ProtocolTable::code_of(msg.data))] += 1.0;
            const Tensor sent = apply_channel(msg, channel, rng);
            tbl.post[size_t(v)][size_t(ProtocolTable::code_of(sent.data))] += 1.0;
        }
        for (auto& f : tbl.pre[size_t(v)]) f /= double(episodes);
        for (auto& f : tbl.post[size_t(v)]) f /= double(episodes);
    }
    return tbl;
}

} // namespace commlearn
