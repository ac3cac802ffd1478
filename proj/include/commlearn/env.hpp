#pragma once

#include <memory>

#include "channel.hpp"
#include "rng.hpp"

namespace commlearn {

struct AgentSpec {
    bool speaks = false;
    bool acts = false;
    int obs_width = 0;
    int n_actions = 0;
    int identity_group = 0;      // agents in the same group are interchangeable
    std::vector<int> listens_to; // sender agent ids, in input order
};

struct EnvSpec {
    std::string kind;
    int n_agents = 0;
    int message_bits = 0;
    int episode_length = 0;
    int comm_delay = 0; // steps between emitting a message and its delivery
    int global_state_width = 0;
    double max_team_return = 0.0; // known upper bound on an episode's return
    ChannelConfig channel;
    std::vector<AgentSpec> agents;
};

struct StepResult {
    std::vector<std::vector<double>> observations; // one per agent
    double team_reward = 0.0;
    bool done = false;
    std::vector<double> global_state;
};

class Env {
public:
    virtual ~Env() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual StepResult reset(Rng& rng) = 0;
    // actions indexed by agent id; entries for non-acting agents are ignored
    virtual StepResult step(const std::vector<int>& actions, Rng& rng) = 0;
};

} // namespace commlearn
