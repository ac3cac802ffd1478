#pragma once

#include <optional>

#include "trainer_common.hpp"

namespace commlearn {

struct DialConfig {
    int batch_episodes = 32;
    double gamma = 1.0;
    double epsilon = 0.05;
    double tau = 0.01;
    double lr = 5e-4;
    double c_lr = 5e-4; // C-Net learning rate; slower protocol drift when lower
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::vector<int> a_hidden = {64, 64};
    std::vector<int> c_hidden = {32};
    bool param_sharing = true;
    bool sever_channel = false;
    bool zero_messages = false;
    DiscretizerSpec discretizer;

    void validate() const {
        if (batch_episodes < 1) throw std::invalid_argument("dial: batch_episodes must be >= 1");
        if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("dial: gamma outside [0,1]");
        if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("dial: epsilon outside [0,1]");
        discretizer.validate();
    }
};

// Independent deep Q-learning per agent with communication gradients
// flowing from receivers' TD losses back through the discretizer into the
// senders' C-Nets. On-policy: a fresh batch of episodes per iteration, so
// the message tensors keep their tape connectivity.
class DialTrainer {
public:
    struct GroupNets {
        std::optional<Mlp> a_net;
        std::optional<Mlp> a_target;
        std::optional<Mlp> c_net;
    };

    DialTrainer(std::function<std::unique_ptr<Env>()> factory, DialConfig cfg, uint64_t seed)
        : factory_(std::move(factory)), cfg_(cfg), seed_(seed) {
        cfg_.validate();
        spec_ = factory_()->spec();
        layout_ = build_groups(spec_, cfg_.param_sharing);
        for (int g = 0; g < layout_.n_groups(); ++g)
            routing_.push_back(build_routing(layout_, g, cfg_.batch_episodes));

        Rng param_rng = derive_rng(seed, Stream::ParamInit);
        for (int g = 0; g < layout_.n_groups(); ++g) {
            const AgentSpec& as = layout_.groups[size_t(g)].proto;
            GroupNets nets;
            const std::string prefix = "g" + std::to_string(g);
            if (as.acts) {
                std::vector<int> sizes{as.obs_width + layout_.n_slots(g) * spec_.message_bits};
                sizes.insert(sizes.end(), cfg_.a_hidden.begin(), cfg_.a_hidden.end());
                sizes.push_back(as.n_actions);
                nets.a_net.emplace(prefix + ".a_net", MlpSpec{sizes}, param_rng);
                nets.a_target.emplace(nets.a_net->clone(prefix + ".a_target"));
            }
            if (as.speaks) {
                std::vector<int> sizes{as.obs_width};
                sizes.insert(sizes.end(), cfg_.c_hidden.begin(), cfg_.c_hidden.end());
                sizes.push_back(spec_.message_bits);
                nets.c_net.emplace(prefix + ".c_net", MlpSpec{sizes}, param_rng);
            }
            groups_.push_back(std::move(nets));
        }
        std::vector<Parameter*> a_params, c_params;
        for (auto& g : groups_) {
            if (g.a_net)
                for (auto* p : g.a_net->parameters()) a_params.push_back(p);
            if (g.c_net)
                for (auto* p : g.c_net->parameters()) c_params.push_back(p);
        }
        opt_ = Adam(a_params, cfg_.lr);
        opt_.beta1 = cfg_.beta1;
        opt_.beta2 = cfg_.beta2;
        opt_.eps = cfg_.adam_eps;
        opt_c_ = Adam(c_params, cfg_.c_lr);
        opt_c_.beta1 = cfg_.beta1;
        opt_c_.beta2 = cfg_.beta2;
        opt_c_.eps = cfg_.adam_eps;

        env_rng_ = derive_rng(seed, Stream::Env);
        explore_rng_ = derive_rng(seed, Stream::Explore);
        disc_rng_ = derive_rng(seed, Stream::Discretizer);
        chan_rng_ = derive_rng(seed, Stream::Channel);
        for (int e = 0; e < cfg_.batch_episodes; ++e) train_envs_.push_back(factory_());
    }

    IterationMetrics train_iteration() {
        ++iteration_;
        tape_.clear();
        const int E = cfg_.batch_episodes;
        const int T = spec_.episode_length;
        const int G = layout_.n_groups();
        const DiscretizerSpec train_disc = cfg_.discretizer.with_mode(DiscretizerMode::Train);

        std::vector<StepResult> states(static_cast<size_t>(E));
        for (int e = 0; e < E; ++e) states[size_t(e)] = train_envs_[size_t(e)]->reset(env_rng_);

        struct Rec {
            int group = -1;
            Var q, input;
            std::vector<int> actions;
            std::vector<double> rewards;
            bool terminal = false;
        };
        std::vector<Rec> recs;
        std::vector<std::vector<int>> rec_at(size_t(T), std::vector<int>(size_t(G), -1));

        double amp_sum = 0.0;
        long amp_count = 0;
        last_messages_.clear();
        last_pre_activations_.clear();

        std::map<int, Var> prev_msgs, emitted;
        for (int t = 0; t < T; ++t) {
            emitted.clear();
            for (int g = 0; g < G; ++g) {
                if (!layout_.groups[size_t(g)].proto.speaks || t + spec_.comm_delay >= T) continue;
                MsgEmission em = emit_messages(tape_, *groups_[size_t(g)].c_net, batch_obs(states, layout_, g),
                                               train_disc, spec_.channel, cfg_.sever_channel, disc_rng_,
                                               chan_rng_);
                emitted[g] = em.message;
                const Tensor& x = tape_.value(em.pre_activation);
                for (double v : x.data) amp_sum += std::abs(v);
                amp_count += x.numel();
                for (double v : x.data) last_pre_activations_.push_back(v);
                for (double v : tape_.value(em.message).data) last_messages_.push_back(v);
            }
            const std::map<int, Var>& source = spec_.comm_delay == 0 ? emitted : prev_msgs;
            const bool have_msgs = !cfg_.zero_messages && t >= spec_.comm_delay && !source.empty();

            std::vector<std::vector<int>> actions(size_t(E), std::vector<int>(size_t(spec_.n_agents), 0));
            for (int g = 0; g < G; ++g) {
                if (!layout_.groups[size_t(g)].proto.acts) continue;
                Rec rec;
                rec.group = g;
                rec.input = assemble_input_tape(tape_, batch_obs(states, layout_, g), routing_[size_t(g)],
                                                have_msgs ? &source : nullptr, spec_.message_bits);
                rec.q = groups_[size_t(g)].a_net->forward(tape_, rec.input);
                const Tensor& qv = tape_.value(rec.q);
                rec.actions.resize(size_t(qv.shape[0]));
                for (int r = 0; r < qv.shape[0]; ++r)
                    rec.actions[size_t(r)] =
                        select_action(&qv.data[size_t(r) * qv.shape[1]], qv.shape[1], cfg_.epsilon,
                                      explore_rng_);
                scatter_actions(layout_, g, rec.actions, actions);
                rec_at[size_t(t)][size_t(g)] = int(recs.size());
                recs.push_back(std::move(rec));
            }
            for (int e = 0; e < E; ++e) states[size_t(e)] = train_envs_[size_t(e)]->step(actions[size_t(e)], env_rng_);
            for (int g = 0; g < G; ++g) {
                const int ri = rec_at[size_t(t)][size_t(g)];
                if (ri < 0) continue;
                Rec& rec = recs[size_t(ri)];
                const int members = layout_.members(g);
                rec.rewards.resize(size_t(E) * size_t(members));
                for (int e = 0; e < E; ++e)
                    for (int m = 0; m < members; ++m)
                        rec.rewards[size_t(e * members + m)] = states[size_t(e)].team_reward;
                rec.terminal = states[0].done;
            }
            prev_msgs = std::move(emitted);
        }

        // TD targets: r + gamma * max_a Q_target(next input), detached; the
        // terminal step drops the bootstrap.
        long total_rows = 0;
        Var loss_sum;
        for (int t = 0; t < T; ++t) {
            for (int g = 0; g < G; ++g) {
                const int ri = rec_at[size_t(t)][size_t(g)];
                if (ri < 0) continue;
                Rec& rec = recs[size_t(ri)];
                const int rows = int(rec.actions.size());
                std::vector<double> boot(size_t(rows), 0.0);
                if (!rec.terminal) {
                    const int rn = rec_at[size_t(t + 1)][size_t(g)];
                    if (rn < 0) throw std::logic_error("dial: missing next-step record");
                    const Tensor qt = groups_[size_t(g)].a_target->forward_raw(tape_.value(recs[size_t(rn)].input));
                    for (int r = 0; r < rows; ++r) boot[size_t(r)] = qt(r, argmax_row(qt, r));
                }
                Tensor target({rows});
                for (int r = 0; r < rows; ++r)
                    target(r) = dqn_td_target(rec.rewards[size_t(r)], cfg_.gamma, boot[size_t(r)], rec.terminal);
                Var diff = tape_.sub(tape_.gather_cols(rec.q, rec.actions), tape_.constant(std::move(target)));
                Var sq = tape_.sum(tape_.square(diff));
                loss_sum = loss_sum.valid() ? tape_.add(loss_sum, sq) : sq;
                total_rows += rows;
            }
        }
        Var loss = tape_.scale(loss_sum, 1.0 / double(total_rows));
        const double loss_value = tape_.value(loss).data[0];
        if (!std::isfinite(loss_value))
            throw TrainAborted("dial: non-finite loss at iteration " + std::to_string(iteration_));

        opt_.zero_grad();
        opt_c_.zero_grad();
        tape_.backward(loss);
        opt_.step();
        opt_c_.step();
        for (int g = 0; g < layout_.n_groups(); ++g)
            if (groups_[size_t(g)].a_target)
                soft_update(groups_[size_t(g)].a_target->parameters(), groups_[size_t(g)].a_net->parameters(),
                            cfg_.tau);

        IterationMetrics m;
        m.loss = loss_value;
        m.comm_amplitude = amp_count > 0 ? amp_sum / double(amp_count) : 0.0;
        return m;
    }

    // Greedy evaluation with the eval-mode discretizer; `salt` picks an
    // independent, reproducible evaluation stream.
    double evaluate(int n_episodes, uint64_t salt = 0) {
        std::vector<PolicyNets> nets;
        for (auto& g : groups_)
            nets.push_back(PolicyNets{g.a_net ? &*g.a_net : nullptr, g.c_net ? &*g.c_net : nullptr});
        return evaluate_policy(factory_, n_episodes, layout_, nets, cfg_.discretizer, cfg_.zero_messages,
                               derive_rng(seed_, Stream::EvalEnv, salt),
                               derive_rng(seed_, Stream::EvalDiscretizer, salt),
                               derive_rng(seed_, Stream::EvalChannel, salt));
    }

    std::vector<Parameter*> trained_parameters() {
        std::vector<Parameter*> ps;
        for (auto& g : groups_) {
            if (g.a_net)
                for (auto* p : g.a_net->parameters()) ps.push_back(p);
            if (g.c_net)
                for (auto* p : g.c_net->parameters()) ps.push_back(p);
        }
        return ps;
    }

    std::vector<const Parameter*> checkpoint_parameters() {
        std::vector<const Parameter*> ps;
        for (auto* p : trained_parameters()) ps.push_back(p);
        return ps;
    }

    const EnvSpec& env_spec() const { return spec_; }
    const GroupLayout& layout() const { return layout_; }
    GroupNets& group(int g) { return groups_[size_t(g)]; }
    int iteration() const { return iteration_; }
    const std::vector<double>& last_messages() const { return last_messages_; }
    const std::vector<double>& last_pre_activations() const { return last_pre_activations_; }

private:
    std::function<std::unique_ptr<Env>()> factory_;
    DialConfig cfg_;
    uint64_t seed_;
    EnvSpec spec_;
    GroupLayout layout_;
    std::vector<std::vector<SlotRouting>> routing_;
    std::vector<GroupNets> groups_;
    Adam opt_, opt_c_;
    Tape tape_;
    std::vector<std::unique_ptr<Env>> train_envs_;
    Rng env_rng_, explore_rng_, disc_rng_, chan_rng_;
    int iteration_ = 0;
    std::vector<double> last_messages_, last_pre_activations_;
};

} // namespace commlearn
