#pragma once

#include <optional>

#include "trainer_common.hpp"

namespace commlearn {

// Critic-loss-gated actor learning rate:
// alpha = alpha_max * clamp((eta_max - L) / (eta_max - eta_min), 0, 1).
struct LrGate {
    double eta_min = 0.05;
    double eta_max = 0.5;
    double alpha_max = 5e-4;

    void validate() const {
        if (!(eta_min < eta_max)) throw std::invalid_argument("lr gate: eta_min must be < eta_max");
        if (alpha_max <= 0.0) throw std::invalid_argument("lr gate: alpha_max must be > 0");
    }
};

inline double gated_lr(double critic_loss, const LrGate& gate) {
    gate.validate();
    double ramp = (gate.eta_max - critic_loss) / (gate.eta_max - gate.eta_min);
    if (ramp < 0.0) ramp = 0.0;
    if (ramp > 1.0) ramp = 1.0;
    return gate.alpha_max * ramp;
}

// A = Q(u) - sum_u' Q(u') pi(u'): the counterfactual baseline marginalizes
// this agent's action under its own policy.
inline double counterfactual_advantage(const std::vector<double>& q_row,
                                       const std::vector<double>& policy, int action) {
    if (q_row.size() != policy.size())
        throw std::invalid_argument("advantage: q row and policy width mismatch");
    if (action < 0 || action >= int(q_row.size()))
        throw std::invalid_argument("advantage: action out of range");
    double v = 0.0;
    for (size_t u = 0; u < q_row.size(); ++u) v += q_row[u] * policy[u];
    return q_row[size_t(action)] - v;
}

// (1 - eps) * pi + eps / |U|
inline std::vector<double> behavior_mix(const std::vector<double>& policy, double epsilon) {
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("behavior_mix: epsilon outside [0,1]");
    std::vector<double> out(policy.size());
    for (size_t u = 0; u < policy.size(); ++u)
        out[u] = (1.0 - epsilon) * policy[u] + epsilon / double(policy.size());
    return out;
}

struct ComaConfig {
    int batch_episodes = 32;
    double gamma = 0.95;
    double epsilon = 0.1; // behavior-policy mixing weight
    double tau = 0.01;
    double critic_lr = 5e-4;
    LrGate gate;
    double reg_coeff = 1e-6;
    double reward_scale = 1.0; // critic and advantages see reward * scale
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::vector<int> actor_hidden = {64, 64};
    std::vector<int> c_hidden = {32};
    std::vector<int> critic_hidden = {64, 64};
    bool param_sharing = true;
    bool sever_channel = false;
    bool zero_messages = false;
    DiscretizerSpec discretizer;

    void validate() const {
        if (batch_episodes < 1) throw std::invalid_argument("coma: batch_episodes must be >= 1");
        if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("coma: gamma outside [0,1]");
        if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("coma: epsilon outside [0,1]");
        if (reward_scale <= 0.0) throw std::invalid_argument("coma: reward_scale must be > 0");
        gate.validate();
        discretizer.validate();
    }
};

// Centralized critic with counterfactual advantages for the action
// policies; communication is trained DIAL-style by letting the actor loss
// gradients flow through the channel into the senders' C-Nets. Rollouts
// sample from the epsilon-mixed behavior policy and the actor loss applies
// the off-policy correction ratio pi/pi_b.
class ComaDialTrainer {
public:
    struct GroupNets {
        std::optional<Mlp> actor;
        std::optional<Mlp> c_net;
    };

    ComaDialTrainer(std::function<std::unique_ptr<Env>()> factory, ComaConfig cfg, uint64_t seed)
        : factory_(std::move(factory)), cfg_(cfg), seed_(seed) {
        cfg_.validate();
        spec_ = factory_()->spec();
        layout_ = build_groups(spec_, cfg_.param_sharing);
        for (int g = 0; g < layout_.n_groups(); ++g)
            routing_.push_back(build_routing(layout_, g, cfg_.batch_episodes));

        for (int a = 0; a < spec_.n_agents; ++a)
            if (spec_.agents[size_t(a)].acts) acting_agents_.push_back(a);
        n_actions_ = 0;
        for (int a : acting_agents_) {
            if (n_actions_ == 0) n_actions_ = spec_.agents[size_t(a)].n_actions;
            if (n_actions_ != spec_.agents[size_t(a)].n_actions)
                throw std::logic_error("coma: acting agents must share one action set");
        }
        if (acting_agents_.empty()) throw std::logic_error("coma: no acting agents");

        Rng param_rng = derive_rng(seed, Stream::ParamInit);
        for (int g = 0; g < layout_.n_groups(); ++g) {
            const AgentSpec& as = layout_.groups[size_t(g)].proto;
            GroupNets nets;
            const std::string prefix = "g" + std::to_string(g);
            if (as.acts) {
                std::vector<int> sizes{as.obs_width + layout_.n_slots(g) * spec_.message_bits};
                sizes.insert(sizes.end(), cfg_.actor_hidden.begin(), cfg_.actor_hidden.end());
                sizes.push_back(as.n_actions);
                nets.actor.emplace(prefix + ".actor", MlpSpec{sizes}, param_rng);
            }
            if (as.speaks) {
                std::vector<int> sizes{as.obs_width};
                sizes.insert(sizes.end(), cfg_.c_hidden.begin(), cfg_.c_hidden.end());
                sizes.push_back(spec_.message_bits);
                nets.c_net.emplace(prefix + ".c_net", MlpSpec{sizes}, param_rng);
            }
            groups_.push_back(std::move(nets));
        }

        const int n_acting = int(acting_agents_.size());
        critic_in_width_ = spec_.global_state_width + (n_acting - 1) * n_actions_ + n_acting;
        std::vector<int> csizes{critic_in_width_};
        csizes.insert(csizes.end(), cfg_.critic_hidden.begin(), cfg_.critic_hidden.end());
        csizes.push_back(n_actions_);
        critic_.emplace("critic", MlpSpec{csizes}, param_rng);
        critic_target_.emplace(critic_->clone("critic_target"));

        critic_opt_ = Adam(critic_->parameters(), cfg_.critic_lr);
        critic_opt_.beta1 = cfg_.beta1;
        critic_opt_.beta2 = cfg_.beta2;
        critic_opt_.eps = cfg_.adam_eps;
        actor_opt_ = Adam(actor_parameters(), cfg_.gate.alpha_max);
        actor_opt_.beta1 = cfg_.beta1;
        actor_opt_.beta2 = cfg_.beta2;
        actor_opt_.eps = cfg_.adam_eps;

        env_rng_ = derive_rng(seed, Stream::Env);
        explore_rng_ = derive_rng(seed, Stream::Explore);
        disc_rng_ = derive_rng(seed, Stream::Discretizer);
        chan_rng_ = derive_rng(seed, Stream::Channel);
        for (int e = 0; e < cfg_.batch_episodes; ++e) train_envs_.push_back(factory_());
    }

    IterationMetrics train_iteration() {
        ++iteration_;
        batch_return_ = 0.0;
        tape_.clear();
        const int E = cfg_.batch_episodes;
        const int T = spec_.episode_length;
        const int G = layout_.n_groups();
        const int A = int(acting_agents_.size());
        const int nU = n_actions_;
        const DiscretizerSpec train_disc = cfg_.discretizer.with_mode(DiscretizerMode::Train);

        std::vector<StepResult> states(static_cast<size_t>(E));
        for (int e = 0; e < E; ++e) states[size_t(e)] = train_envs_[size_t(e)]->reset(env_rng_);

        struct ActRec {
            int group = -1;
            Var pi;
            std::vector<int> actions;      // per rollout row
            std::vector<double> pib_taken; // behavior probability of the taken action
        };
        std::vector<std::vector<ActRec>> recs(static_cast<size_t>(T)); // recs[t] in group order
        std::vector<std::vector<double>> global_states(static_cast<size_t>(T));
        std::vector<double> rewards(size_t(T) * size_t(E), 0.0);
        std::vector<int> joint_actions(size_t(T) * size_t(E) * size_t(spec_.n_agents), 0);

        double amp_sum = 0.0;
        long amp_count = 0;

        std::map<int, Var> prev_msgs, emitted;
        for (int t = 0; t < T; ++t) {
            global_states[size_t(t)].reserve(size_t(E) * size_t(spec_.global_state_width));
            for (int e = 0; e < E; ++e)
                global_states[size_t(t)].insert(global_states[size_t(t)].end(),
                                                states[size_t(e)].global_state.begin(),
                                                states[size_t(e)].global_state.end());
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
            }
            const std::map<int, Var>& source = spec_.comm_delay == 0 ? emitted : prev_msgs;
            const bool have_msgs = !cfg_.zero_messages && t >= spec_.comm_delay && !source.empty();

            std::vector<std::vector<int>> actions(size_t(E), std::vector<int>(size_t(spec_.n_agents), 0));
            for (int g = 0; g < G; ++g) {
                if (!layout_.groups[size_t(g)].proto.acts) continue;
                ActRec rec;
                rec.group = g;
                Var input = assemble_input_tape(tape_, batch_obs(states, layout_, g), routing_[size_t(g)],
                                                have_msgs ? &source : nullptr, spec_.message_bits);
                rec.pi = tape_.softmax_rows(groups_[size_t(g)].actor->forward(tape_, input));
                const Tensor& pv = tape_.value(rec.pi);
                rec.actions.resize(size_t(pv.shape[0]));
                rec.pib_taken.resize(size_t(pv.shape[0]));
                for (int r = 0; r < pv.shape[0]; ++r) {
                    std::vector<double> row(&pv.data[size_t(r) * size_t(nU)],
                                            &pv.data[size_t(r) * size_t(nU)] + nU);
                    const std::vector<double> pb = behavior_mix(row, cfg_.epsilon);
                    const int u = sample_index(pb.data(), nU, explore_rng_);
                    rec.actions[size_t(r)] = u;
                    rec.pib_taken[size_t(r)] = pb[size_t(u)];
                    if (rec.pib_taken[size_t(r)] <= 0.0)
                        throw std::runtime_error("coma: behavior probability of taken action is zero");
                }
                scatter_actions(layout_, g, rec.actions, actions);
                recs[size_t(t)].push_back(std::move(rec));
            }
            for (int e = 0; e < E; ++e) {
                states[size_t(e)] = train_envs_[size_t(e)]->step(actions[size_t(e)], env_rng_);
                batch_return_ += states[size_t(e)].team_reward / double(E);
                rewards[size_t(t * E + e)] = states[size_t(e)].team_reward * cfg_.reward_scale;
                for (int a = 0; a < spec_.n_agents; ++a)
                    joint_actions[size_t((t * E + e) * spec_.n_agents + a)] = actions[size_t(e)][size_t(a)];
            }
            prev_msgs = std::move(emitted);
        }

        // --- critic regression on its own tape -------------------------------
        // rows ordered (t, acting agent, episode)
        const long rows = long(T) * A * E;
        Tensor ci({int(rows), critic_in_width_});
        std::vector<int> taken(size_t(rows), 0);
        for (int t = 0; t < T; ++t)
            for (int ai = 0; ai < A; ++ai)
                for (int e = 0; e < E; ++e) {
                    const long r = (long(t) * A + ai) * E + e;
                    int off = 0;
                    for (int c = 0; c < spec_.global_state_width; ++c)
                        ci(int(r), off + c) = global_states[size_t(t)][size_t(e * spec_.global_state_width + c)];
                    off += spec_.global_state_width;
                    for (int aj = 0; aj < A; ++aj) {
                        if (aj == ai) continue;
                        const int u = joint_actions[size_t((t * E + e) * spec_.n_agents +
                                                           acting_agents_[size_t(aj)])];
                        ci(int(r), off + u) = 1.0;
                        off += nU;
                    }
                    ci(int(r), off + ai) = 1.0;
                    taken[size_t(r)] = joint_actions[size_t((t * E + e) * spec_.n_agents +
                                                            acting_agents_[size_t(ai)])];
                }

        // TD target with the actually-taken next joint action, target critic
        const Tensor qt_all = critic_target_->forward_raw(ci);
        std::vector<double> target(size_t(rows), 0.0);
        for (int t = 0; t < T; ++t)
            for (int ai = 0; ai < A; ++ai)
                for (int e = 0; e < E; ++e) {
                    const long r = (long(t) * A + ai) * E + e;
                    double boot = 0.0;
                    if (t + 1 < T) {
                        const long rn = (long(t + 1) * A + ai) * E + e;
                        boot = qt_all(int(rn), taken[size_t(rn)]);
                    }
                    target[size_t(r)] = dqn_td_target(rewards[size_t(t * E + e)], cfg_.gamma, boot, t + 1 == T);
                }

        Tape critic_tape;
        Var q_all = critic_->forward(critic_tape, critic_tape.constant(ci));
        Var q_taken = critic_tape.gather_cols(q_all, taken);
        Var td = critic_tape.sub(q_taken, critic_tape.constant(Tensor({int(rows)}, target)));
        Var critic_loss = critic_tape.mean(critic_tape.square(td));
        const double critic_loss_pre = critic_tape.value(critic_loss).data[0];
        if (!std::isfinite(critic_loss_pre))
            throw TrainAborted("coma: non-finite critic loss at iteration " + std::to_string(iteration_));
        critic_opt_.zero_grad();
        critic_tape.backward(critic_loss);
        critic_opt_.step();

        // Fresh critic loss after the update gates the actor learning rate
        // and provides the counterfactual rows.
        const Tensor qf = critic_->forward_raw(ci);
        double fresh_loss = 0.0;
        for (long r = 0; r < rows; ++r) {
            const double d = qf(int(r), taken[size_t(r)]) - target[size_t(r)];
            fresh_loss += d * d;
        }
        fresh_loss /= double(rows);
        const double alpha = gated_lr(fresh_loss, cfg_.gate);

        // --- actor + C-Net update through the rollout tape --------------------
        // The importance ratio pi/pi_b is the weight recorded at rollout time
        // (a constant to the tape); the gradient reaches the actor and, through
        // pi's message inputs, the sender C-Nets via the log-probability term.
        Var actor_sum;
        long actor_rows = 0;
        for (int t = 0; t < T; ++t) {
            for (ActRec& rec : recs[size_t(t)]) {
                const int g = rec.group;
                const int members = layout_.members(g);
                const int nrows = int(rec.actions.size());
                const Tensor& pv = tape_.value(rec.pi);
                Tensor w({nrows});
                for (int e = 0; e < E; ++e)
                    for (int mi = 0; mi < members; ++mi) {
                        const int r = e * members + mi;
                        const int agent = layout_.groups[size_t(g)].agents[size_t(mi)];
                        const int ai = acting_index(agent);
                        const long cr = (long(t) * A + ai) * E + e;
                        std::vector<double> q_row(static_cast<size_t>(nU));
                        for (int u = 0; u < nU; ++u) q_row[size_t(u)] = qf(int(cr), u);
                        std::vector<double> pi_row(static_cast<size_t>(nU));
                        for (int u = 0; u < nU; ++u) pi_row[size_t(u)] = pv(r, u);
                        const double adv = counterfactual_advantage(q_row, pi_row, rec.actions[size_t(r)]);
                        const double ratio = pv(r, rec.actions[size_t(r)]) / rec.pib_taken[size_t(r)];
                        w(r) = -adv * ratio;
                    }
                Var pi_u = tape_.gather_cols(rec.pi, rec.actions);
                Var term = tape_.mul(tape_.constant(std::move(w)), tape_.log_op(pi_u));
                Var s = tape_.sum(term);
                actor_sum = actor_sum.valid() ? tape_.add(actor_sum, s) : s;
                actor_rows += nrows;
            }
        }
        Var actor_loss = tape_.scale(actor_sum, 1.0 / double(actor_rows));
        // + reg * sum |theta_pi| over the actor parameters
        if (cfg_.reg_coeff > 0.0) {
            Var l1;
            for (auto& gn : groups_) {
                if (!gn.actor) continue;
                for (Parameter* p : gn.actor->parameters()) {
                    Tensor sign(p->value.shape);
                    for (long i = 0; i < sign.numel(); ++i)
                        sign.data[size_t(i)] = p->value.data[size_t(i)] > 0.0
                                                   ? 1.0
                                                   : (p->value.data[size_t(i)] < 0.0 ? -1.0 : 0.0);
                    Var s = tape_.sum(tape_.mul(tape_.param(*p), tape_.constant(std::move(sign))));
                    l1 = l1.valid() ? tape_.add(l1, s) : s;
                }
            }
            actor_loss = tape_.add(actor_loss, tape_.scale(l1, cfg_.reg_coeff));
        }
        const double actor_loss_value = tape_.value(actor_loss).data[0];
        if (!std::isfinite(actor_loss_value))
            throw TrainAborted("coma: non-finite actor loss at iteration " + std::to_string(iteration_));

        actor_opt_.zero_grad();
        tape_.backward(actor_loss);
        actor_opt_.step_with_lr(alpha);
        soft_update(critic_target_->parameters(), critic_->parameters(), cfg_.tau);

        IterationMetrics m;
        m.loss = actor_loss_value;
        m.critic_loss = fresh_loss;
        m.actor_lr = alpha;
        m.comm_amplitude = amp_count > 0 ? amp_sum / double(amp_count) : 0.0;
        m.train_return = batch_return_;
        return m;
    }

    double evaluate(int n_episodes, uint64_t salt = 0) {
        std::vector<PolicyNets> nets;
        for (auto& g : groups_)
            nets.push_back(PolicyNets{g.actor ? &*g.actor : nullptr, g.c_net ? &*g.c_net : nullptr});
        return evaluate_policy(factory_, n_episodes, layout_, nets, cfg_.discretizer, cfg_.zero_messages,
                               derive_rng(seed_, Stream::EvalEnv, salt),
                               derive_rng(seed_, Stream::EvalDiscretizer, salt),
                               derive_rng(seed_, Stream::EvalChannel, salt));
    }

    std::vector<Parameter*> actor_parameters() {
        std::vector<Parameter*> ps;
        for (auto& g : groups_) {
            if (g.actor)
                for (auto* p : g.actor->parameters()) ps.push_back(p);
            if (g.c_net)
                for (auto* p : g.c_net->parameters()) ps.push_back(p);
        }
        return ps;
    }

    std::vector<const Parameter*> checkpoint_parameters() {
        std::vector<const Parameter*> ps;
        for (auto* p : actor_parameters()) ps.push_back(p);
        for (auto* p : critic_->parameters()) ps.push_back(p);
        return ps;
    }

    const EnvSpec& env_spec() const { return spec_; }
    const GroupLayout& layout() const { return layout_; }
    GroupNets& group(int g) { return groups_[size_t(g)]; }
    Mlp& critic() { return *critic_; }
    int iteration() const { return iteration_; }

private:
    int acting_index(int agent) const {
        for (int i = 0; i < int(acting_agents_.size()); ++i)
            if (acting_agents_[size_t(i)] == agent) return i;
        throw std::logic_error("coma: agent is not acting");
    }

    std::function<std::unique_ptr<Env>()> factory_;
    ComaConfig cfg_;
    uint64_t seed_;
    EnvSpec spec_;
    GroupLayout layout_;
    std::vector<std::vector<SlotRouting>> routing_;
    std::vector<GroupNets> groups_;
    std::vector<int> acting_agents_;
    int n_actions_ = 0;
    int critic_in_width_ = 0;
    std::optional<Mlp> critic_, critic_target_;
    Adam critic_opt_, actor_opt_;
    Tape tape_;
    std::vector<std::unique_ptr<Env>> train_envs_;
    Rng env_rng_, explore_rng_, disc_rng_, chan_rng_;
    int iteration_ = 0;
    double batch_return_ = 0.0;
};

} // namespace commlearn
