#pragma once

#include <functional>
#include <map>

#include "discretizer.hpp"
#include "env.hpp"
#include "nn.hpp"

namespace commlearn {

// Agents are partitioned into net groups. With parameter sharing, one
// group per identity group (all members drive the same nets and their
// gradients accumulate); without it, one group per agent.
struct NetGroup {
    std::vector<int> agents;
    AgentSpec proto;
};

struct GroupLayout {
    std::vector<NetGroup> groups;
    std::vector<AgentSpec> agent_specs;
    std::vector<int> group_of;
    std::vector<int> index_in_group;

    int n_groups() const { return int(groups.size()); }
    int members(int g) const { return int(groups[size_t(g)].agents.size()); }
    int n_slots(int g) const { return int(groups[size_t(g)].proto.listens_to.size()); }
};

inline GroupLayout build_groups(const EnvSpec& spec, bool param_sharing) {
    GroupLayout layout;
    layout.agent_specs = spec.agents;
    layout.group_of.assign(size_t(spec.n_agents), -1);
    layout.index_in_group.assign(size_t(spec.n_agents), -1);
    std::map<int, int> by_identity;
    for (int a = 0; a < spec.n_agents; ++a) {
        const AgentSpec& as = spec.agents[size_t(a)];
        int g;
        if (param_sharing) {
            auto it = by_identity.find(as.identity_group);
            if (it == by_identity.end()) {
                g = layout.n_groups();
                by_identity[as.identity_group] = g;
                layout.groups.push_back(NetGroup{{}, as});
            } else {
                g = it->second;
                const AgentSpec& p = layout.groups[size_t(g)].proto;
                if (p.speaks != as.speaks || p.acts != as.acts || p.obs_width != as.obs_width ||
                    p.n_actions != as.n_actions || p.listens_to.size() != as.listens_to.size())
                    throw std::logic_error("rollout: identity group members are not interchangeable");
            }
        } else {
            g = layout.n_groups();
            layout.groups.push_back(NetGroup{{}, as});
        }
        layout.group_of[size_t(a)] = g;
        layout.index_in_group[size_t(a)] = layout.members(g);
        layout.groups[size_t(g)].agents.push_back(a);
    }
    return layout;
}

// For receiver group h and listen slot p, every member's slot-p sender must
// live in one sender group; rows[r] is the sender-group row feeding
// receiver row r. Row layout everywhere: r = episode * members + member.
struct SlotRouting {
    int sender_group = -1;
    std::vector<int> rows;
};

inline std::vector<SlotRouting> build_routing(const GroupLayout& L, int h, int episodes) {
    const NetGroup& H = L.groups[size_t(h)];
    const int slots = int(H.proto.listens_to.size());
    std::vector<SlotRouting> out(static_cast<size_t>(slots));
    for (int p = 0; p < slots; ++p) {
        SlotRouting& sr = out[size_t(p)];
        for (size_t mi = 0; mi < H.agents.size(); ++mi) {
            const int sender = L.agent_specs[size_t(H.agents[mi])].listens_to[size_t(p)];
            const int g = L.group_of[size_t(sender)];
            if (sr.sender_group == -1) sr.sender_group = g;
            if (sr.sender_group != g)
                throw std::logic_error("rollout: listen slot maps to multiple sender groups");
        }
        const int sender_members = L.members(sr.sender_group);
        sr.rows.resize(size_t(episodes) * H.agents.size());
        for (int e = 0; e < episodes; ++e)
            for (size_t mi = 0; mi < H.agents.size(); ++mi) {
                const int sender = L.agent_specs[size_t(H.agents[mi])].listens_to[size_t(p)];
                sr.rows[size_t(e) * H.agents.size() + mi] =
                    e * sender_members + L.index_in_group[size_t(sender)];
            }
    }
    return out;
}

// Observation matrix for one group: row (e, member) = that agent's obs.
inline Tensor batch_obs(const std::vector<StepResult>& states, const GroupLayout& L, int g) {
    const NetGroup& G = L.groups[size_t(g)];
    const int E = int(states.size());
    const int w = G.proto.obs_width;
    Tensor out({E * int(G.agents.size()), w});
    for (int e = 0; e < E; ++e)
        for (size_t mi = 0; mi < G.agents.size(); ++mi) {
            const auto& obs = states[size_t(e)].observations[size_t(G.agents[mi])];
            for (int c = 0; c < w; ++c) out(e * int(G.agents.size()) + int(mi), c) = obs[size_t(c)];
        }
    return out;
}

// Scatters a group's per-row actions into per-env action vectors.
inline void scatter_actions(const GroupLayout& L, int g, const std::vector<int>& row_actions,
                            std::vector<std::vector<int>>& per_env) {
    const NetGroup& G = L.groups[size_t(g)];
    const int E = int(per_env.size());
    for (int e = 0; e < E; ++e)
        for (size_t mi = 0; mi < G.agents.size(); ++mi)
            per_env[size_t(e)][size_t(G.agents[mi])] = row_actions[size_t(e) * G.agents.size() + mi];
}

// Ties go to the lowest index.
inline int argmax_row(const Tensor& m, int r) {
    int best = 0;
    for (int c = 1; c < m.shape[1]; ++c)
        if (m(r, c) > m(r, best)) best = c;
    return best;
}

// Off-tape input assembly: obs columns then one block of message bits per
// listen slot (zeros when nothing has been delivered or messages are ablated).
inline Tensor assemble_input_raw(const Tensor& obs, const std::vector<SlotRouting>& slots,
                                 const std::map<int, Tensor>* delivered, int message_bits) {
    const int rows = obs.shape[0];
    const int total = obs.shape[1] + int(slots.size()) * message_bits;
    Tensor out({rows, total});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < obs.shape[1]; ++c) out(r, c) = obs(r, c);
    int off = obs.shape[1];
    for (const auto& slot : slots) {
        if (delivered != nullptr) {
            const Tensor& msg = delivered->at(slot.sender_group);
            for (int r = 0; r < rows; ++r)
                for (int b = 0; b < message_bits; ++b) out(r, off + b) = msg(slot.rows[size_t(r)], b);
        }
        off += message_bits;
    }
    return out;
}

// Per-group nets used by greedy evaluation: `decision` maps the assembled
// input to one score per action (Q-values or actor logits), `c_net` maps
// the observation to message pre-activations.
struct PolicyNets {
    Mlp* decision = nullptr;
    Mlp* c_net = nullptr;
};

// Greedy batched evaluation: no exploration, eval-mode discretizer, no
// tape recording. Returns the mean episode return.
inline double evaluate_policy(const std::function<std::unique_ptr<Env>()>& factory, int n_episodes,
                              const GroupLayout& L, const std::vector<PolicyNets>& nets,
                              DiscretizerSpec disc, bool zero_messages, Rng env_rng, Rng disc_rng,
                              Rng chan_rng) {
    disc = disc.with_mode(DiscretizerMode::Eval);
    std::vector<std::unique_ptr<Env>> envs;
    std::vector<StepResult> states;
    for (int e = 0; e < n_episodes; ++e) {
        envs.push_back(factory());
        states.push_back(envs.back()->reset(env_rng));
    }
    const EnvSpec& spec = envs[0]->spec();
    const int T = spec.episode_length;
    const int B = spec.message_bits;

    std::vector<std::vector<SlotRouting>> routing(size_t(L.n_groups()));
    for (int g = 0; g < L.n_groups(); ++g) routing[size_t(g)] = build_routing(L, g, n_episodes);

    std::vector<double> returns(size_t(n_episodes), 0.0);
    std::map<int, Tensor> prev, emitted;
    for (int t = 0; t < T; ++t) {
        emitted.clear();
        for (int g = 0; g < L.n_groups(); ++g) {
            if (!L.groups[size_t(g)].proto.speaks || t + spec.comm_delay >= T) continue;
            const Tensor obs = batch_obs(states, L, g);
            const Tensor x = nets[size_t(g)].c_net->forward_raw(obs);
            Tensor msg = discretize(x, disc, disc_rng).message;
            if (spec.channel.active()) msg = apply_channel(msg, spec.channel, chan_rng);
            emitted[g] = std::move(msg);
        }
        const std::map<int, Tensor>& source = spec.comm_delay == 0 ? emitted : prev;
        const bool have_msgs = !zero_messages && t >= spec.comm_delay && !source.empty();

        std::vector<std::vector<int>> actions(size_t(n_episodes),
                                              std::vector<int>(size_t(spec.n_agents), 0));
        for (int g = 0; g < L.n_groups(); ++g) {
            if (!L.groups[size_t(g)].proto.acts) continue;
            const Tensor obs = batch_obs(states, L, g);
            const Tensor input =
                assemble_input_raw(obs, routing[size_t(g)], have_msgs ? &source : nullptr, B);
            const Tensor scores = nets[size_t(g)].decision->forward_raw(input);
            std::vector<int> row_actions(size_t(scores.shape[0]));
            for (int r = 0; r < scores.shape[0]; ++r) row_actions[size_t(r)] = argmax_row(scores, r);
            scatter_actions(L, g, row_actions, actions);
        }
        for (int e = 0; e < n_episodes; ++e) {
            states[size_t(e)] = envs[size_t(e)]->step(actions[size_t(e)], env_rng);
            returns[size_t(e)] += states[size_t(e)].team_reward;
        }
        prev = std::move(emitted);
    }
    double sum = 0.0;
    for (double r : returns) sum += r;
    return sum / double(n_episodes);
}

} // namespace commlearn
