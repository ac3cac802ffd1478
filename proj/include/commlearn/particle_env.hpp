#pragma once

#include "env.hpp"

namespace commlearn {

enum class ParticleScenario { SpeakerListener, SimpleReference, ParallelSpeakerListener };

inline const char* scenario_name(ParticleScenario s) {
    switch (s) {
        case ParticleScenario::SpeakerListener: return "speaker_listener";
        case ParticleScenario::SimpleReference: return "simple_reference";
        case ParticleScenario::ParallelSpeakerListener: return "parallel_speaker_listener";
    }
    return "?";
}

struct ParticlePhysics {
    double dt = 0.1;
    double damping = 0.25;
    double accel = 5.0;
    double max_speed = 1.3;
};

// Point-mass cooperative navigation scenarios with three landmarks.
// Movers pick one of {noop, +x, -x, +y, -y} each step; the team reward is
// the negated sum of squared mover-to-target distances after the move.
struct ParticleEnvConfig {
    ParticleScenario scenario = ParticleScenario::SpeakerListener;
    int n_listeners = 1; // ParallelSpeakerListener only
    int n_landmarks = 3;
    int episode_length = 25;
    int message_bits = 2;
    ParticlePhysics physics;

    void validate() const {
        if (episode_length < 1) throw std::invalid_argument("particle: episode_length must be >= 1");
        if (n_landmarks != 3) throw std::invalid_argument("particle: landmark count is fixed at 3");
        if (message_bits < 1) throw std::invalid_argument("particle: message_bits must be >= 1");
        if (scenario == ParticleScenario::ParallelSpeakerListener && n_listeners < 1)
            throw std::invalid_argument("particle: n_listeners must be >= 1");
    }
};

class ParticleEnv final : public Env {
public:
    explicit ParticleEnv(const ParticleEnvConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        spec_.kind = scenario_name(cfg.scenario);
        spec_.message_bits = cfg.message_bits;
        spec_.episode_length = cfg.episode_length;
        spec_.comm_delay = 0;
        spec_.max_team_return = 0.0;

        const int listener_obs = 2 + 2 * cfg.n_landmarks; // own velocity + relative landmarks
        switch (cfg.scenario) {
            case ParticleScenario::SpeakerListener: {
                n_movers_ = 1;
                n_targets_ = 1;
                AgentSpec speaker;
                speaker.speaks = true;
                speaker.obs_width = cfg.n_landmarks;
                speaker.identity_group = 0;
                AgentSpec listener;
                listener.acts = true;
                listener.obs_width = listener_obs;
                listener.n_actions = 5;
                listener.identity_group = 1;
                listener.listens_to = {0};
                spec_.agents = {speaker, listener};
                mover_agent_ = {1};
                break;
            }
            case ParticleScenario::SimpleReference: {
                n_movers_ = 2;
                n_targets_ = 2;
                for (int a = 0; a < 2; ++a) {
                    AgentSpec ag;
                    ag.speaks = true;
                    ag.acts = true;
                    ag.obs_width = listener_obs + cfg.n_landmarks; // + other agent's target
                    ag.n_actions = 5;
                    ag.identity_group = 0;
                    ag.listens_to = {1 - a};
                    spec_.agents.push_back(ag);
                }
                mover_agent_ = {0, 1};
                break;
            }
            case ParticleScenario::ParallelSpeakerListener: {
                n_movers_ = cfg.n_listeners;
                n_targets_ = 1;
                AgentSpec speaker;
                speaker.speaks = true;
                speaker.obs_width = cfg.n_landmarks;
                speaker.identity_group = 0;
                spec_.agents = {speaker};
                mover_agent_.clear();
                for (int l = 0; l < cfg.n_listeners; ++l) {
                    AgentSpec listener;
                    listener.acts = true;
                    listener.obs_width = listener_obs;
                    listener.n_actions = 5;
                    listener.identity_group = 1;
                    listener.listens_to = {0};
                    spec_.agents.push_back(listener);
                    mover_agent_.push_back(1 + l);
                }
                break;
            }
        }
        spec_.n_agents = int(spec_.agents.size());
        // movers' pos+vel, landmark positions, target one-hots
        spec_.global_state_width = 4 * n_movers_ + 2 * cfg.n_landmarks + cfg.n_landmarks * n_targets_;
    }

    const EnvSpec& spec() const override { return spec_; }

    StepResult reset(Rng& rng) override {
        landmarks_.assign(size_t(cfg_.n_landmarks) * 2, 0.0);
        for (auto& c : landmarks_) c = 2.0 * rng.uniform() - 1.0;
        pos_.assign(size_t(n_movers_) * 2, 0.0);
        for (auto& c : pos_) c = 2.0 * rng.uniform() - 1.0;
        vel_.assign(size_t(n_movers_) * 2, 0.0);
        targets_.assign(size_t(n_targets_), 0);
        for (auto& t : targets_) t = rng.uniform_int(cfg_.n_landmarks);
        step_count_ = 0;
        done_ = false;
        return make_result(0.0);
    }

    StepResult step(const std::vector<int>& actions, Rng&) override {
        if (done_ || step_count_ >= cfg_.episode_length)
            throw std::logic_error("particle: step after episode end");
        if (int(actions.size()) != spec_.n_agents)
            throw std::invalid_argument("particle: need one action entry per agent");
        const ParticlePhysics& ph = cfg_.physics;
        for (int m = 0; m < n_movers_; ++m) {
            const int action = actions[size_t(mover_agent_[size_t(m)])];
            double ax = 0.0, ay = 0.0;
            switch (action) {
                case 0: break;
                case 1: ax = 1.0; break;
                case 2: ax = -1.0; break;
                case 3: ay = 1.0; break;
                case 4: ay = -1.0; break;
                default: throw std::invalid_argument("particle: unknown action id " + std::to_string(action));
            }
            double& vx = vel_[size_t(2 * m)];
            double& vy = vel_[size_t(2 * m + 1)];
            vx = vx * (1.0 - ph.damping) + ph.accel * ax * ph.dt;
            vy = vy * (1.0 - ph.damping) + ph.accel * ay * ph.dt;
            const double speed = std::sqrt(vx * vx + vy * vy);
            if (speed > ph.max_speed) {
                vx *= ph.max_speed / speed;
                vy *= ph.max_speed / speed;
            }
            pos_[size_t(2 * m)] += vx * ph.dt;
            pos_[size_t(2 * m + 1)] += vy * ph.dt;
        }
        double reward = 0.0;
        for (int m = 0; m < n_movers_; ++m) reward -= squared_target_distance(m);
        ++step_count_;
        done_ = step_count_ >= cfg_.episode_length;
        return make_result(reward);
    }

    double squared_target_distance(int mover) const {
        const int target = targets_[size_t(mover < n_targets_ ? mover : 0)];
        const double dx = pos_[size_t(2 * mover)] - landmarks_[size_t(2 * target)];
        const double dy = pos_[size_t(2 * mover + 1)] - landmarks_[size_t(2 * target + 1)];
        return dx * dx + dy * dy;
    }

    // test access
    const std::vector<double>& positions() const { return pos_; }
    const std::vector<double>& velocities() const { return vel_; }
    const std::vector<double>& landmarks() const { return landmarks_; }
    const std::vector<int>& targets() const { return targets_; }

private:
    StepResult make_result(double reward) const {
        StepResult r;
        r.team_reward = reward;
        r.done = done_;
        r.observations.resize(size_t(spec_.n_agents));
        for (int a = 0; a < spec_.n_agents; ++a) r.observations[size_t(a)] = observe(a);
        r.global_state.reserve(size_t(spec_.global_state_width));
        for (int m = 0; m < n_movers_; ++m) {
            r.global_state.push_back(pos_[size_t(2 * m)]);
            r.global_state.push_back(pos_[size_t(2 * m + 1)]);
            r.global_state.push_back(vel_[size_t(2 * m)]);
            r.global_state.push_back(vel_[size_t(2 * m + 1)]);
        }
        for (double c : landmarks_) r.global_state.push_back(c);
        for (int t = 0; t < n_targets_; ++t)
            for (int l = 0; l < cfg_.n_landmarks; ++l)
                r.global_state.push_back(targets_[size_t(t)] == l ? 1.0 : 0.0);
        return r;
    }

    std::vector<double> observe(int agent) const {
        std::vector<double> obs;
        const AgentSpec& as = spec_.agents[size_t(agent)];
        const int mover = mover_index(agent);
        if (mover >= 0) {
            obs.push_back(vel_[size_t(2 * mover)]);
            obs.push_back(vel_[size_t(2 * mover + 1)]);
            for (int l = 0; l < cfg_.n_landmarks; ++l) {
                obs.push_back(landmarks_[size_t(2 * l)] - pos_[size_t(2 * mover)]);
                obs.push_back(landmarks_[size_t(2 * l + 1)] - pos_[size_t(2 * mover + 1)]);
            }
        }
        switch (cfg_.scenario) {
            case ParticleScenario::SpeakerListener:
            case ParticleScenario::ParallelSpeakerListener:
                if (as.speaks)
                    for (int l = 0; l < cfg_.n_landmarks; ++l)
                        obs.push_back(targets_[0] == l ? 1.0 : 0.0);
                break;
            case ParticleScenario::SimpleReference:
                // each agent observes the other agent's target
                for (int l = 0; l < cfg_.n_landmarks; ++l)
                    obs.push_back(targets_[size_t(1 - agent)] == l ? 1.0 : 0.0);
                break;
        }
        if (int(obs.size()) != as.obs_width)
            throw std::logic_error("particle: observation width mismatch");
        return obs;
    }

    int mover_index(int agent) const {
        for (int m = 0; m < int(mover_agent_.size()); ++m)
            if (mover_agent_[size_t(m)] == agent) return m;
        return -1;
    }

    ParticleEnvConfig cfg_;
    EnvSpec spec_;
    int n_movers_ = 0;
    int n_targets_ = 0;
    std::vector<int> mover_agent_;
    std::vector<double> landmarks_, pos_, vel_;
    std::vector<int> targets_;
    int step_count_ = 0;
    bool done_ = false;
};

} // namespace commlearn
