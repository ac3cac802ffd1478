#pragma once

#include "env.hpp"

namespace commlearn {

// N agents each receive a number in [0, M-1], broadcast one message, then
// must all say whether everyone got the same number. Two phases per
// episode: phase 0 emits messages, phase 1 acts on observation plus the
// concatenated messages of the other agents. Team reward is the count of
// agents whose answer matches the ground truth; maximum is N.
struct MatrixEnvConfig {
    int n_agents = 2;
    int n_numbers = 2;
    int message_bits = 1;
    double flip_probability = 0.0;
    int flips_per_message = 0;

    void validate() const {
        if (n_agents < 2) throw std::invalid_argument("matrix: n_agents must be >= 2");
        if (n_numbers < 2) throw std::invalid_argument("matrix: n_numbers must be >= 2");
        if (message_bits < 1) throw std::invalid_argument("matrix: message_bits must be >= 1");
        if (flip_probability < 0.0 || flip_probability > 1.0)
            throw std::invalid_argument("matrix: flip_probability outside [0,1]");
        if (flips_per_message < 0) throw std::invalid_argument("matrix: flips_per_message must be >= 0");
        if (flip_probability > 0.0 && message_bits <= min_code_bits())
            throw std::invalid_argument("matrix: error correction needs message_bits > ceil(log2(n_numbers))");
    }

    int min_code_bits() const {
        int b = 0;
        while ((1 << b) < n_numbers) ++b;
        return b;
    }
};

enum MatrixAction { kSame = 0, kDifferent = 1 };

class MatrixEnv final : public Env {
public:
    explicit MatrixEnv(const MatrixEnvConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        spec_.kind = "matrix";
        spec_.n_agents = cfg.n_agents;
        spec_.message_bits = cfg.message_bits;
        spec_.episode_length = 2;
        spec_.comm_delay = 1;
        spec_.global_state_width = cfg.n_agents * cfg.n_numbers;
        spec_.max_team_return = double(cfg.n_agents);
        spec_.channel = ChannelConfig{cfg.flip_probability, cfg.flips_per_message};
        for (int a = 0; a < cfg.n_agents; ++a) {
            AgentSpec as;
            as.speaks = true;
            as.acts = true;
            as.obs_width = cfg.n_numbers;
            as.n_actions = 2;
            as.identity_group = 0;
            for (int s = 0; s < cfg.n_agents; ++s)
                if (s != a) as.listens_to.push_back(s);
            spec_.agents.push_back(std::move(as));
        }
    }

    const EnvSpec& spec() const override { return spec_; }

    StepResult reset(Rng& rng) override {
        numbers_.assign(size_t(cfg_.n_agents), 0);
        if (rng.uniform() < 0.5) {
            const int v = rng.uniform_int(cfg_.n_numbers);
            for (auto& n : numbers_) n = v;
        } else {
            // i.i.d. uniform, rejecting the all-equal outcome
            bool all_equal = true;
            do {
                for (auto& n : numbers_) n = rng.uniform_int(cfg_.n_numbers);
                all_equal = true;
                for (int n : numbers_)
                    if (n != numbers_[0]) all_equal = false;
            } while (all_equal);
        }
        phase_ = 0;
        return make_result(0.0, false);
    }

    StepResult step(const std::vector<int>& actions, Rng&) override {
        if (phase_ < 0) throw std::logic_error("matrix: step before reset");
        if (phase_ == 0) {
            // communication phase: actions have no effect
            phase_ = 1;
            return make_result(0.0, false);
        }
        if (phase_ != 1) throw std::logic_error("matrix: step after episode end");
        if (int(actions.size()) != cfg_.n_agents)
            throw std::invalid_argument("matrix: need one action per agent");
        const int truth = all_same() ? kSame : kDifferent;
        double reward = 0.0;
        for (int a : actions) {
            if (a != kSame && a != kDifferent) throw std::invalid_argument("matrix: unknown action id");
            if (a == truth) reward += 1.0;
        }
        phase_ = 2;
        return make_result(reward, true);
    }

    bool all_same() const {
        for (int n : numbers_)
            if (n != numbers_[0]) return false;
        return true;
    }

    const std::vector<int>& numbers() const { return numbers_; }

private:
    StepResult make_result(double reward, bool done) const {
        StepResult r;
        r.team_reward = reward;
        r.done = done;
        r.observations.resize(size_t(cfg_.n_agents));
        r.global_state.assign(size_t(spec_.global_state_width), 0.0);
        for (int a = 0; a < cfg_.n_agents; ++a) {
            auto& obs = r.observations[size_t(a)];
            obs.assign(size_t(cfg_.n_numbers), 0.0);
            obs[size_t(numbers_[size_t(a)])] = 1.0;
            r.global_state[size_t(a * cfg_.n_numbers + numbers_[size_t(a)])] = 1.0;
        }
        return r;
    }

    MatrixEnvConfig cfg_;
    EnvSpec spec_;
    std::vector<int> numbers_;
    int phase_ = -1;
};

// --- hand-coded optimal policies, used as environment-correctness oracles ---

// Plain binary code of the number, bit j at position j.
inline std::vector<double> matrix_binary_code(int number, int bits) {
    std::vector<double> code(size_t(bits), 0.0);
    for (int j = 0; j < bits; ++j) code[size_t(j)] = double((number >> j) & 1);
    return code;
}

// Repetition code for M = 2: number 0 -> all zeros, number 1 -> all ones.
inline std::vector<double> matrix_repetition_code(int number, int bits) {
    return std::vector<double>(size_t(bits), double(number));
}

inline int decode_majority(const std::vector<double>& bits) {
    int ones = 0;
    for (double b : bits) ones += b >= 0.5 ? 1 : 0;
    return ones * 2 > int(bits.size()) ? 1 : 0;
}

// Plays one episode with the hand-coded policy: broadcast the received
// number, answer Same iff every decoded incoming number equals your own.
// With use_repetition_code, codes are 0..0/1..1 decoded by majority.
inline double matrix_oracle_episode(MatrixEnv& env, Rng& env_rng, Rng& channel_rng,
                                    bool use_repetition_code) {
    const EnvSpec& spec = env.spec();
    env.reset(env_rng);
    const auto& numbers = env.numbers();
    const int n = spec.n_agents;
    const int bits = spec.message_bits;
    int code_bits = 1;
    while ((1 << code_bits) < spec.agents[0].obs_width) ++code_bits;
    if (use_repetition_code) code_bits = bits;

    std::vector<std::vector<double>> sent(static_cast<size_t>(n));
    for (int a = 0; a < n; ++a) {
        std::vector<double> code = use_repetition_code ? matrix_repetition_code(numbers[size_t(a)], bits)
                                                       : matrix_binary_code(numbers[size_t(a)], bits);
        Tensor msg({bits}, code);
        sent[size_t(a)] = apply_channel(msg, spec.channel, channel_rng).data;
    }
    env.step(std::vector<int>(size_t(n), kSame), env_rng); // communication phase

    std::vector<int> actions(size_t(n), kDifferent);
    for (int a = 0; a < n; ++a) {
        bool all_match = true;
        for (int s = 0; s < n; ++s) {
            if (s == a) continue;
            int decoded;
            if (use_repetition_code) {
                decoded = decode_majority(sent[size_t(s)]);
            } else {
                decoded = 0;
                for (int j = 0; j < code_bits; ++j)
                    if (sent[size_t(s)][size_t(j)] >= 0.5) decoded |= 1 << j;
            }
            if (decoded != numbers[size_t(a)]) all_match = false;
        }
        actions[size_t(a)] = all_match ? kSame : kDifferent;
    }
    return env.step(actions, env_rng).team_reward;
}

} // namespace commlearn
