#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <thread>

#include "checkpoint.hpp"
#include "coma_dial.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "dial.hpp"
#include "matrix_env.hpp"
#include "particle_env.hpp"
#include "protocol.hpp"
#include "stats.hpp"
#include "svg.hpp"

namespace commlearn {

inline const std::vector<std::string>& run_config_keys() {
    static const std::vector<std::string> keys = {
        "trainer", "env.kind", "env.n_agents", "env.n_numbers", "env.message_bits",
        "env.flip_probability", "env.flips_per_message", "env.n_listeners", "env.n_landmarks",
        "env.episode_length", "env.dt", "env.damping", "env.accel", "env.max_speed",
        "discretizer.kind", "discretizer.sigma_g", "discretizer.temperature", "seeds",
        "train_iterations", "eval_every", "eval_episodes", "batch_episodes", "param_sharing",
        "ablation.sever_channel", "ablation.zero_messages", "opt.lr", "opt.c_lr", "opt.beta1", "opt.beta2",
        "opt.eps", "dqn.gamma", "dqn.epsilon", "dqn.tau", "coma.gamma", "coma.epsilon", "coma.tau",
        "coma.critic_lr", "coma.eta_min", "coma.eta_max", "coma.alpha_max", "coma.reg_coeff",
        "coma.reward_scale", "net.a_hidden", "net.c_hidden", "net.critic_hidden",
    };
    return keys;
}

enum class TrainerKind { Dial, ComaDial };

struct RunConfig {
    TrainerKind trainer = TrainerKind::Dial;
    std::string env_kind;
    bool is_matrix = false;
    MatrixEnvConfig matrix;
    ParticleEnvConfig particle;
    DiscretizerSpec discretizer;
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
    int train_iterations = 10000;
    int eval_every = 100;
    int eval_episodes = 100;
    int batch_episodes = 32;
    bool param_sharing = true;
    bool sever_channel = false;
    bool zero_messages = false;
    double lr = 5e-4, c_lr = 5e-4, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double dqn_gamma = 1.0, dqn_epsilon = 0.05, dqn_tau = 0.01;
    double coma_gamma = 0.95, coma_epsilon = 0.1, coma_tau = 0.01, critic_lr = 5e-4;
    LrGate gate;
    double reg_coeff = 1e-3, reward_scale = 1.0;
    std::vector<int> a_hidden{64, 64}, c_hidden{32}, critic_hidden{64, 64};
    std::string raw_text;

    std::string trainer_name() const { return trainer == TrainerKind::Dial ? "dial" : "coma_dial"; }

    std::string env_label() const {
        if (is_matrix)
            return "matrix-" + std::to_string(matrix.n_agents) + "x" + std::to_string(matrix.n_numbers);
        return env_kind;
    }
};

inline DiscretizerKind parse_discretizer_kind(const std::string& s) {
    if (s == "dru" || s == "DRU") return DiscretizerKind::DRU;
    if (s == "ste" || s == "STE") return DiscretizerKind::STE;
    if (s == "gs" || s == "GS") return DiscretizerKind::GS;
    if (s == "st_dru" || s == "st-dru" || s == "ST-DRU") return DiscretizerKind::ST_DRU;
    if (s == "st_gs" || s == "st-gs" || s == "ST-GS") return DiscretizerKind::ST_GS;
    throw std::invalid_argument("config: unknown discretizer.kind '" + s + "'");
}

inline RunConfig run_config_from_kv(const KvConfig& kv) {
    for (const auto& [key, _] : kv.kv) {
        bool known = false;
        for (const auto& k : run_config_keys())
            if (k == key) known = true;
        if (!known) throw std::invalid_argument("config: unknown key '" + key + "'");
    }

    RunConfig rc;
    rc.raw_text = kv.raw;
    const std::string trainer = kv.require_str("trainer");
    if (trainer == "dial") rc.trainer = TrainerKind::Dial;
    else if (trainer == "coma_dial") rc.trainer = TrainerKind::ComaDial;
    else throw std::invalid_argument("config: unknown trainer '" + trainer + "'");

    rc.env_kind = kv.require_str("env.kind");
    rc.is_matrix = rc.env_kind == "matrix";
    double default_reward_scale = 1.0;
    if (rc.is_matrix) {
        rc.matrix.n_agents = kv.get_int("env.n_agents", 3);
        rc.matrix.n_numbers = kv.get_int("env.n_numbers", 4);
        rc.matrix.message_bits = kv.get_int("env.message_bits", std::max(1, rc.matrix.min_code_bits()));
        rc.matrix.flip_probability = kv.get_double("env.flip_probability", 0.0);
        rc.matrix.flips_per_message =
            kv.get_int("env.flips_per_message", rc.matrix.flip_probability > 0.0 ? 1 : 0);
        rc.matrix.validate();
        rc.eval_every = 100;
        rc.eval_episodes = 100;
        rc.dqn_gamma = rc.coma_gamma = 1.0;
        default_reward_scale = 1.0 / double(rc.matrix.n_agents);
    } else {
        if (rc.env_kind == "speaker_listener") rc.particle.scenario = ParticleScenario::SpeakerListener;
        else if (rc.env_kind == "simple_reference") rc.particle.scenario = ParticleScenario::SimpleReference;
        else if (rc.env_kind == "parallel_speaker_listener")
            rc.particle.scenario = ParticleScenario::ParallelSpeakerListener;
        else throw std::invalid_argument("config: unknown env.kind '" + rc.env_kind + "'");
        rc.particle.n_listeners = kv.get_int("env.n_listeners", 2);
        rc.particle.n_landmarks = kv.get_int("env.n_landmarks", 3);
        rc.particle.episode_length = kv.get_int("env.episode_length", 25);
        rc.particle.message_bits = kv.get_int("env.message_bits", 2);
        rc.particle.physics.dt = kv.get_double("env.dt", 0.1);
        rc.particle.physics.damping = kv.get_double("env.damping", 0.25);
        rc.particle.physics.accel = kv.get_double("env.accel", 5.0);
        rc.particle.physics.max_speed = kv.get_double("env.max_speed", 1.3);
        rc.particle.validate();
        rc.eval_every = 50;
        rc.eval_episodes = 10;
        rc.dqn_gamma = rc.coma_gamma = 0.95;
        default_reward_scale = 1.0 / 30.0;
    }

    rc.discretizer.kind = parse_discretizer_kind(kv.require_str("discretizer.kind"));
    rc.discretizer.sigma_g = kv.get_double("discretizer.sigma_g", 2.0);
    rc.discretizer.temperature = kv.get_double("discretizer.temperature", 1.0);
    rc.discretizer.validate();

    rc.seeds = kv.get_u64_list("seeds", rc.seeds);
    if (rc.seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    rc.train_iterations = kv.get_int("train_iterations", rc.train_iterations);
    rc.eval_every = kv.get_int("eval_every", rc.eval_every);
    rc.eval_episodes = kv.get_int("eval_episodes", rc.eval_episodes);
    rc.batch_episodes = kv.get_int("batch_episodes", rc.batch_episodes);
    if (rc.train_iterations < 1) throw std::invalid_argument("config: train_iterations must be >= 1");
    if (rc.eval_every < 1 || rc.train_iterations % rc.eval_every != 0)
        throw std::invalid_argument("config: eval_every must divide train_iterations");
    if (rc.eval_episodes < 1) throw std::invalid_argument("config: eval_episodes must be >= 1");

    rc.param_sharing = kv.get_bool("param_sharing", true);
    rc.sever_channel = kv.get_bool("ablation.sever_channel", false);
    rc.zero_messages = kv.get_bool("ablation.zero_messages", false);

    rc.lr = kv.get_double("opt.lr", 5e-4);
    rc.c_lr = kv.get_double("opt.c_lr", rc.lr);
    rc.beta1 = kv.get_double("opt.beta1", 0.9);
    rc.beta2 = kv.get_double("opt.beta2", 0.999);
    rc.adam_eps = kv.get_double("opt.eps", 1e-8);

    rc.dqn_gamma = kv.get_double("dqn.gamma", rc.dqn_gamma);
    rc.dqn_epsilon = kv.get_double("dqn.epsilon", 0.05);
    rc.dqn_tau = kv.get_double("dqn.tau", 0.01);

    rc.coma_gamma = kv.get_double("coma.gamma", rc.coma_gamma);
    rc.coma_epsilon = kv.get_double("coma.epsilon", 0.1);
    rc.coma_tau = kv.get_double("coma.tau", 0.01);
    rc.critic_lr = kv.get_double("coma.critic_lr", 5e-4);
    rc.gate.eta_min = kv.get_double("coma.eta_min", 0.05);
    rc.gate.eta_max = kv.get_double("coma.eta_max", 0.5);
    rc.gate.alpha_max = kv.get_double("coma.alpha_max", 5e-4);
    rc.reg_coeff = kv.get_double("coma.reg_coeff", 1e-6);
    rc.reward_scale = kv.get_double("coma.reward_scale", default_reward_scale);

    rc.a_hidden = kv.get_int_list("net.a_hidden", rc.a_hidden);
    rc.c_hidden = kv.get_int_list("net.c_hidden", rc.c_hidden);
    rc.critic_hidden = kv.get_int_list("net.critic_hidden", rc.critic_hidden);
    return rc;
}

inline RunConfig load_run_config(const std::string& path, bool env_overrides = true) {
    KvConfig kv = KvConfig::parse_file(path);
    if (env_overrides) apply_env_overrides(kv, run_config_keys());
    return run_config_from_kv(kv);
}

inline std::function<std::unique_ptr<Env>()> make_env_factory(const RunConfig& rc) {
    if (rc.is_matrix) {
        MatrixEnvConfig cfg = rc.matrix;
        return [cfg] { return std::unique_ptr<Env>(new MatrixEnv(cfg)); };
    }
    ParticleEnvConfig cfg = rc.particle;
    return [cfg] { return std::unique_ptr<Env>(new ParticleEnv(cfg)); };
}

inline DialConfig dial_config_of(const RunConfig& rc) {
    DialConfig c;
    c.batch_episodes = rc.batch_episodes;
    c.gamma = rc.dqn_gamma;
    c.epsilon = rc.dqn_epsilon;
    c.tau = rc.dqn_tau;
    c.lr = rc.lr;
    c.c_lr = rc.c_lr;
    c.beta1 = rc.beta1;
    c.beta2 = rc.beta2;
    c.adam_eps = rc.adam_eps;
    c.a_hidden = rc.a_hidden;
    c.c_hidden = rc.c_hidden;
    c.param_sharing = rc.param_sharing;
    c.sever_channel = rc.sever_channel;
    c.zero_messages = rc.zero_messages;
    c.discretizer = rc.discretizer;
    return c;
}

inline ComaConfig coma_config_of(const RunConfig& rc) {
    ComaConfig c;
    c.batch_episodes = rc.batch_episodes;
    c.gamma = rc.coma_gamma;
    c.epsilon = rc.coma_epsilon;
    c.tau = rc.coma_tau;
    c.critic_lr = rc.critic_lr;
    c.gate = rc.gate;
    c.reg_coeff = rc.reg_coeff;
    c.reward_scale = rc.reward_scale;
    c.beta1 = rc.beta1;
    c.beta2 = rc.beta2;
    c.adam_eps = rc.adam_eps;
    c.actor_hidden = rc.a_hidden;
    c.c_hidden = rc.c_hidden;
    c.critic_hidden = rc.critic_hidden;
    c.param_sharing = rc.param_sharing;
    c.sever_channel = rc.sever_channel;
    c.zero_messages = rc.zero_messages;
    c.discretizer = rc.discretizer;
    return c;
}

struct MetricRow {
    uint64_t seed = 0;
    int iteration = 0;
    double eval_reward = 0.0;
    double comm_amplitude = 0.0;
    double loss = 0.0;
    double critic_loss = 0.0;
    double actor_lr = 0.0;
    long wall_ms = 0;
};

struct SeedResult {
    uint64_t seed = 0;
    std::vector<MetricRow> rows;
    bool aborted = false;
    std::string abort_message;
    ProtocolTable protocol; // matrix env only
    bool has_protocol = false;
};

struct RunResult {
    std::string out_dir;
    std::vector<SeedResult> seeds;

    bool aborted() const {
        for (const auto& s : seeds)
            if (s.aborted) return true;
        return false;
    }
};

namespace detail_harness {

template <typename Trainer>
SeedResult run_seed(Trainer& trainer, const RunConfig& rc, uint64_t seed, const std::string& out_dir) {
    SeedResult result;
    result.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        for (int it = 1; it <= rc.train_iterations; ++it) {
            const IterationMetrics m = trainer.train_iteration();
            if (it % rc.eval_every == 0) {
                const double ev = trainer.evaluate(rc.eval_episodes, uint64_t(it));
                if (ev > trainer.env_spec().max_team_return + 1e-9)
                    throw std::logic_error("harness: eval reward exceeds the oracle bound");
                MetricRow row;
                row.seed = seed;
                row.iteration = it;
                row.eval_reward = ev;
                row.comm_amplitude = m.comm_amplitude;
                row.loss = m.loss;
                row.critic_loss = m.critic_loss;
                row.actor_lr = m.actor_lr;
                row.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                result.rows.push_back(row);
            }
        }
    } catch (const TrainAborted& e) {
        result.aborted = true;
        result.abort_message = e.what();
        return result;
    }
    save_checkpoint(out_dir + "/checkpoint_seed" + std::to_string(seed) + ".bin",
                    trainer.checkpoint_parameters());
    return result;
}

inline Mlp* first_c_net_dial(DialTrainer& t) {
    for (int g = 0; g < t.layout().n_groups(); ++g)
        if (t.group(g).c_net) return &*t.group(g).c_net;
    return nullptr;
}

inline Mlp* first_c_net_coma(ComaDialTrainer& t) {
    for (int g = 0; g < t.layout().n_groups(); ++g)
        if (t.group(g).c_net) return &*t.group(g).c_net;
    return nullptr;
}

inline void attach_protocol(SeedResult& result, Mlp* c_net, const RunConfig& rc, uint64_t seed) {
    if (!rc.is_matrix || c_net == nullptr || result.aborted) return;
    auto policy = [c_net](const Tensor& obs) { return c_net->forward_raw(obs); };
    Rng rng = derive_rng(seed, Stream::Protocol);
    result.protocol =
        protocol_table(policy, rc.matrix.n_numbers, rc.matrix.message_bits,
                       ChannelConfig{rc.matrix.flip_probability, rc.matrix.flips_per_message},
                       rc.discretizer, 1000, rng);
    result.has_protocol = true;
}

} // namespace detail_harness

inline SeedResult run_single_seed(const RunConfig& rc, uint64_t seed, const std::string& out_dir) {
    auto factory = make_env_factory(rc);
    SeedResult result;
    if (rc.trainer == TrainerKind::Dial) {
        DialTrainer trainer(factory, dial_config_of(rc), seed);
        result = detail_harness::run_seed(trainer, rc, seed, out_dir);
        detail_harness::attach_protocol(result, detail_harness::first_c_net_dial(trainer), rc, seed);
    } else {
        ComaDialTrainer trainer(factory, coma_config_of(rc), seed);
        result = detail_harness::run_seed(trainer, rc, seed, out_dir);
        detail_harness::attach_protocol(result, detail_harness::first_c_net_coma(trainer), rc, seed);
    }
    return result;
}

inline std::string metric_header(const RunConfig& rc) {
    if (rc.trainer == TrainerKind::ComaDial)
        return "seed,iteration,eval_reward,comm_amplitude,loss,critic_loss,actor_lr,wall_ms\n";
    return "seed,iteration,eval_reward,comm_amplitude,loss,wall_ms\n";
}

inline std::string metric_row_csv(const RunConfig& rc, const MetricRow& r) {
    std::vector<std::string> f{std::to_string(r.seed), std::to_string(r.iteration),
                               format_double(r.eval_reward), format_double(r.comm_amplitude),
                               format_double(r.loss)};
    if (rc.trainer == TrainerKind::ComaDial) {
        f.push_back(format_double(r.critic_loss));
        f.push_back(format_double(r.actor_lr));
    }
    f.push_back(std::to_string(r.wall_ms));
    return csv_row(f);
}

// Trains every seed (independent workers), evaluates on the configured
// cadence, and emits per-seed CSVs, the cross-seed aggregate, SVG plots,
// protocol tables for matrix tasks, and final checkpoints.
inline RunResult run(const RunConfig& rc, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/config.txt", rc.raw_text.empty() ? "# (config built in code)\n" : rc.raw_text);

    RunResult result;
    result.out_dir = out_dir;
    result.seeds.resize(rc.seeds.size());

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const size_t workers = std::min<size_t>(hw, rc.seeds.size());
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < rc.seeds.size(); i = next.fetch_add(1))
                result.seeds[i] = run_single_seed(rc, rc.seeds[i], out_dir);
        });
    for (auto& t : pool) t.join();

    // per-seed CSVs
    for (const auto& sr : result.seeds) {
        std::string csv = metric_header(rc);
        for (const auto& row : sr.rows) csv += metric_row_csv(rc, row);
        write_text_file(out_dir + "/seed_" + std::to_string(sr.seed) + ".csv", csv);
        if (sr.has_protocol) {
            std::string pcsv = "input_number,message_bits_string,pre_channel_freq,post_channel_freq\n";
            for (int v = 0; v < sr.protocol.n_inputs; ++v)
                for (int c = 0; c < (1 << sr.protocol.message_bits); ++c)
                    pcsv += csv_row({std::to_string(v),
                                     ProtocolTable::code_string(c, sr.protocol.message_bits),
                                     format_double(sr.protocol.pre[size_t(v)][size_t(c)]),
                                     format_double(sr.protocol.post[size_t(v)][size_t(c)])});
            write_text_file(out_dir + "/protocol_seed" + std::to_string(sr.seed) + ".csv", pcsv);
        }
    }

    if (result.aborted()) {
        std::string msg;
        for (const auto& sr : result.seeds)
            if (sr.aborted) msg += "seed " + std::to_string(sr.seed) + ": " + sr.abort_message + "\n";
        write_text_file(out_dir + "/ABORTED", msg);
        return result;
    }

    // aggregate across seeds (mean and population std per eval point)
    const size_t n_rows = result.seeds[0].rows.size();
    std::string agg = "iteration,eval_reward_mean,eval_reward_std,comm_amplitude_mean,comm_amplitude_std,"
                      "loss_mean\n";
    for (size_t i = 0; i < n_rows; ++i) {
        std::vector<double> rewards, amps, losses;
        for (const auto& sr : result.seeds) {
            rewards.push_back(sr.rows[i].eval_reward);
            amps.push_back(sr.rows[i].comm_amplitude);
            losses.push_back(sr.rows[i].loss);
        }
        agg += csv_row({std::to_string(result.seeds[0].rows[i].iteration), format_double(mean_of(rewards)),
                        format_double(std_of(rewards)), format_double(mean_of(amps)),
                        format_double(std_of(amps)), format_double(mean_of(losses))});
    }
    write_text_file(out_dir + "/aggregate.csv", agg);

    // plots
    std::vector<PlotSeries> reward_series, amp_series;
    for (size_t s = 0; s < result.seeds.size(); ++s) {
        PlotSeries rs, as;
        rs.label = "seed " + std::to_string(result.seeds[s].seed);
        as.label = rs.label;
        rs.color = plot_color(int(s));
        as.color = rs.color;
        for (const auto& row : result.seeds[s].rows) {
            rs.xs.push_back(double(row.iteration));
            rs.ys.push_back(row.eval_reward);
            as.xs.push_back(double(row.iteration));
            as.ys.push_back(row.comm_amplitude);
        }
        reward_series.push_back(std::move(rs));
        amp_series.push_back(std::move(as));
    }
    write_text_file(out_dir + "/reward.svg",
                    render_line_svg(rc.env_label() + " / " + rc.trainer_name() + " / " +
                                        discretizer_name(rc.discretizer.kind),
                                    "iteration", "eval reward", reward_series));
    write_text_file(out_dir + "/amplitude.svg",
                    render_line_svg(rc.env_label() + " communication amplitude", "iteration",
                                    "mean |x|", amp_series));
    return result;
}

// Pooled mean and std of eval_reward over the last 10% of eval rows across
// all seeds of one report (the statistic quoted per experiment).
struct FinalWindow {
    double mean = 0.0;
    double stdev = 0.0;
    int rows_per_seed = 0;
    int n_seeds = 0;
};

inline FinalWindow final_window_stats(const RunResult& rr) {
    std::vector<double> pooled;
    FinalWindow fw;
    for (const auto& sr : rr.seeds) {
        const int n = int(sr.rows.size());
        const int w = std::max(1, n / 10);
        fw.rows_per_seed = w;
        for (int i = n - w; i < n; ++i) pooled.push_back(sr.rows[size_t(i)].eval_reward);
    }
    fw.n_seeds = int(rr.seeds.size());
    fw.mean = mean_of(pooled);
    fw.stdev = std_of(pooled);
    return fw;
}

struct SummaryRow {
    std::string env, trainer, discretizer;
    double mean = 0.0, stdev = 0.0;
    int n_seeds = 0;
};

// Reads completed report directories back and produces one comparison row
// per (env, trainer, discretizer).
inline std::vector<SummaryRow> summarize(const std::vector<std::string>& dirs) {
    if (dirs.empty()) throw std::invalid_argument("summarize: need at least one report directory");
    std::vector<SummaryRow> rows;
    int cadence = -1, iters = -1;
    for (const auto& dir : dirs) {
        KvConfig kv = KvConfig::parse_text(read_text_file(dir + "/config.txt"));
        RunConfig rc = run_config_from_kv(kv);
        if (cadence == -1) {
            cadence = rc.eval_every;
            iters = rc.train_iterations;
        } else if (cadence != rc.eval_every || iters != rc.train_iterations) {
            throw std::invalid_argument("summarize: mixed evaluation cadences across reports");
        }
        std::vector<double> pooled;
        for (uint64_t seed : rc.seeds) {
            const auto csv = read_csv(dir + "/seed_" + std::to_string(seed) + ".csv");
            if (csv.size() < 2) throw std::runtime_error("summarize: empty metrics in " + dir);
            const int n = int(csv.size()) - 1;
            const int w = std::max(1, n / 10);
            for (int i = 1 + n - w; i <= n; ++i) pooled.push_back(std::stod(csv[size_t(i)][2]));
        }
        SummaryRow row;
        row.env = rc.env_label();
        row.trainer = rc.trainer_name();
        row.discretizer = discretizer_name(rc.discretizer.kind);
        row.mean = mean_of(pooled);
        row.stdev = std_of(pooled);
        row.n_seeds = int(rc.seeds.size());
        rows.push_back(row);
    }
    return rows;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "env,trainer,discretizer,final_mean,final_std,n_seeds\n";
    for (const auto& r : rows)
        out += csv_row({r.env, r.trainer, r.discretizer, format_double(r.mean), format_double(r.stdev),
                        std::to_string(r.n_seeds)});
    return out;
}

inline std::string summary_text(const std::vector<SummaryRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(28) << "env" << std::setw(12) << "trainer" << std::setw(10)
       << "discretizer" << std::right << std::setw(12) << "mean" << std::setw(12) << "std" << std::setw(8)
       << "seeds" << "\n";
    for (const auto& r : rows) {
        std::ostringstream m, s;
        m << std::fixed << std::setprecision(3) << r.mean;
        s << std::fixed << std::setprecision(3) << r.stdev;
        os << std::left << std::setw(28) << r.env << std::setw(12) << r.trainer << std::setw(10)
           << r.discretizer << std::right << std::setw(12) << m.str() << std::setw(12) << s.str()
           << std::setw(8) << r.n_seeds << "\n";
    }
    return os.str();
}

// Histogram figures for every unit and mode over x in [-3, 3].
inline void emit_histograms(const std::string& out_dir, double sigma_g, double temperature, int draws,
                            uint64_t seed = 1) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::vector<double> xs = {-3, -2, -1, 0, 1, 2, 3};
    std::string csv = "unit,mode,x,bin_left,bin_right,frequency\n";
    for (DiscretizerKind kind : {DiscretizerKind::DRU, DiscretizerKind::STE, DiscretizerKind::GS,
                                 DiscretizerKind::ST_DRU, DiscretizerKind::ST_GS}) {
        for (DiscretizerMode mode : {DiscretizerMode::Train, DiscretizerMode::Eval}) {
            DiscretizerSpec spec{kind, sigma_g, temperature, mode};
            Rng rng = derive_rng(seed, Stream::Discretizer,
                                 uint64_t(kind) * 2 + (mode == DiscretizerMode::Eval ? 1 : 0));
            const auto rows = output_histogram(spec, xs, draws, rng);
            std::vector<PlotSeries> series;
            for (size_t i = 0; i < rows.size(); ++i) {
                const auto& row = rows[i];
                PlotSeries ps;
                ps.label = "x=" + format_double(row.x);
                ps.color = plot_color(int(i));
                for (size_t b = 0; b < row.freq.size(); ++b) {
                    csv += csv_row({discretizer_name(kind),
                                    mode == DiscretizerMode::Train ? "train" : "eval",
                                    format_double(row.x), format_double(row.bin_left[b]),
                                    format_double(row.bin_right[b]), format_double(row.freq[b])});
                    ps.xs.push_back(0.5 * (row.bin_left[b] + row.bin_right[b]));
                    ps.ys.push_back(row.freq[b]);
                }
                series.push_back(std::move(ps));
            }
            const std::string mode_name = mode == DiscretizerMode::Train ? "train" : "eval";
            write_text_file(out_dir + "/hist_" + std::string(discretizer_name(kind)) + "_" + mode_name +
                                ".svg",
                            render_line_svg(std::string(discretizer_name(kind)) + " output (" + mode_name +
                                                ")",
                                            "output value", "frequency", series));
        }
    }
    write_text_file(out_dir + "/histograms.csv", csv);
}

// Rebuilds the first speaking group's C-Net from a checkpoint and emits its
// protocol table under the configured channel.
inline void emit_protocol(const std::string& checkpoint_path, const std::string& config_path,
                          const std::string& out_csv, int episodes = 1000, uint64_t seed = 1) {
    RunConfig rc = load_run_config(config_path);
    if (!rc.is_matrix) throw std::invalid_argument("protocol: config must describe a matrix environment");
    const auto records = load_checkpoint(checkpoint_path);

    // locate g<k>.c_net.* with the smallest k
    std::string prefix;
    for (int g = 0; g < 64 && prefix.empty(); ++g) {
        const std::string cand = "g" + std::to_string(g) + ".c_net.";
        for (const auto& [name, _] : records)
            if (name.rfind(cand, 0) == 0) {
                prefix = cand;
                break;
            }
    }
    if (prefix.empty()) throw std::runtime_error("protocol: checkpoint has no C-Net parameters");

    std::vector<Tensor> ws, bs;
    for (int l = 0;; ++l) {
        const std::string wn = prefix + "W" + std::to_string(l), bn = prefix + "b" + std::to_string(l);
        const Tensor *w = nullptr, *b = nullptr;
        for (const auto& [name, t] : records) {
            if (name == wn) w = &t;
            if (name == bn) b = &t;
        }
        if (!w || !b) break;
        ws.push_back(*w);
        bs.push_back(*b);
    }
    if (ws.empty()) throw std::runtime_error("protocol: malformed C-Net parameters in checkpoint");

    Mlp c_net;
    c_net.name = "c_net";
    c_net.spec.layer_sizes.push_back(ws[0].shape[0]);
    for (const auto& w : ws) c_net.spec.layer_sizes.push_back(w.shape[1]);
    for (size_t l = 0; l < ws.size(); ++l) {
        c_net.params.emplace_back("c_net.W" + std::to_string(l), ws[l]);
        c_net.params.emplace_back("c_net.b" + std::to_string(l), bs[l]);
    }

    auto policy = [&c_net](const Tensor& obs) { return c_net.forward_raw(obs); };
    Rng rng = derive_rng(seed, Stream::Protocol);
    const ProtocolTable tbl =
        protocol_table(policy, rc.matrix.n_numbers, rc.matrix.message_bits,
                       ChannelConfig{rc.matrix.flip_probability, rc.matrix.flips_per_message},
                       rc.discretizer, episodes, rng);
    std::string csv = "input_number,message_bits_string,pre_channel_freq,post_channel_freq\n";
    for (int v = 0; v < tbl.n_inputs; ++v)
        for (int c = 0; c < (1 << tbl.message_bits); ++c)
            csv += csv_row({std::to_string(v), ProtocolTable::code_string(c, tbl.message_bits),
                            format_double(tbl.pre[size_t(v)][size_t(c)]),
                            format_double(tbl.post[size_t(v)][size_t(c)])});
    write_text_file(out_csv, csv);
}

} // namespace commlearn
