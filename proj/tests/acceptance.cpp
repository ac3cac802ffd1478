// Acceptance suite: runs the numbered acceptance checks and prints one
// PASS/FAIL line per criterion. Heavy training tiers (3-6) are full
// experiment runs; select a single criterion with --criterion N.
#include <cstring>
#include <iostream>

#include "commlearn/harness.hpp"

using namespace commlearn;

namespace {

struct Criterion {
    bool ok = true;
    std::vector<std::string> notes;

    void require(bool cond, const std::string& what) {
        if (!cond) ok = false;
        notes.push_back(std::string(cond ? "  ok   " : "  FAIL ") + what);
    }

    void note(const std::string& what) { notes.push_back("       " + what); }
};

std::string out_root = "acceptance_out";

void report(int id, const std::string& title, const Criterion& c, bool verbose) {
    std::cout << (c.ok ? "[PASS] " : "[FAIL] ") << "criterion " << id << ": " << title << "\n";
    if (verbose || !c.ok)
        for (const auto& n : c.notes) std::cout << n << "\n";
    std::cout.flush();
}

double empirical_p_one(const DiscretizerSpec& spec, double x, int draws, Rng& rng) {
    int ones = 0;
    const Tensor xt({1}, {x});
    for (int i = 0; i < draws; ++i)
        if (discretize(xt, spec, rng).message(0) >= 0.5) ++ones;
    return double(ones) / draws;
}

// ---------------------------------------------------------------------------
// 1. Discretizer distribution suite vs closed-form oracles
bool criterion1(bool verbose) {
    Criterion c;
    const int draws = 10000;
    const double sigma_g = 2.0;
    Rng rng = derive_rng(2024, Stream::Discretizer);
    char buf[160];
    for (int xi = -3; xi <= 3; ++xi) {
        const double x = xi;
        {
            DiscretizerSpec s{DiscretizerKind::ST_DRU, sigma_g, 1.0, DiscretizerMode::Train};
            const double p = empirical_p_one(s, x, draws, rng);
            const double want = normal_cdf(x / sigma_g);
            std::snprintf(buf, sizeof buf, "ST-DRU train x=%+d: P(1)=%.4f vs Phi(x/sigma)=%.4f", xi, p, want);
            c.require(std::abs(p - want) <= 0.02, buf);
        }
        for (DiscretizerKind k : {DiscretizerKind::GS, DiscretizerKind::ST_GS}) {
            DiscretizerSpec s{k, sigma_g, 1.0, DiscretizerMode::Eval};
            const double p = empirical_p_one(s, x, draws, rng);
            const double want = sigmoid_value(x);
            std::snprintf(buf, sizeof buf, "%s eval x=%+d: P(1)=%.4f vs sigma(x)=%.4f",
                          discretizer_name(k), xi, p, want);
            c.require(std::abs(p - want) <= 0.02, buf);
        }
        {
            DiscretizerSpec s{DiscretizerKind::DRU, sigma_g, 1.0, DiscretizerMode::Train};
            std::vector<double> sample;
            const Tensor xt({1}, {x});
            for (int i = 0; i < draws; ++i) sample.push_back(discretize(xt, s, rng).message(0));
            const double d =
                ks_statistic(sample, [&](double m) { return normal_cdf((logit(m) - x) / sigma_g); });
            const double crit = ks_critical(0.01, size_t(draws));
            std::snprintf(buf, sizeof buf, "DRU train x=%+d: KS=%.4f < %.4f (alpha 0.01)", xi, d, crit);
            c.require(d < crit, buf);
        }
        // hard-threshold units in eval mode are the deterministic point mass H(x)
        for (DiscretizerKind k : {DiscretizerKind::DRU, DiscretizerKind::STE, DiscretizerKind::ST_DRU}) {
            DiscretizerSpec s{k, sigma_g, 1.0, DiscretizerMode::Eval};
            const double p = empirical_p_one(s, x, draws / 10, rng);
            std::snprintf(buf, sizeof buf, "%s eval x=%+d: point mass on H(x)", discretizer_name(k), xi);
            c.require(p == (x >= 0 ? 1.0 : 0.0), buf);
        }
    }
    report(1, "discretizer output distributions match the closed-form oracles", c, verbose);
    return c.ok;
}

// ---------------------------------------------------------------------------
// 2. Surrogate gradients vs central finite differences with frozen noise
bool criterion2(bool verbose) {
    Criterion c;
    const int n = 1000;
    const double h = 1e-4;
    Rng rng = derive_rng(7, Stream::Discretizer);
    for (DiscretizerKind k : {DiscretizerKind::DRU, DiscretizerKind::STE, DiscretizerKind::GS,
                              DiscretizerKind::ST_DRU, DiscretizerKind::ST_GS}) {
        DiscretizerSpec spec{k, 2.0, 1.0, DiscretizerMode::Train};
        Parameter p("x", Tensor({n}));
        for (auto& v : p.value.data) v = 6.0 * rng.uniform() - 3.0;
        Tape tape;
        Var m = discretize(tape, tape.param(p), spec, rng);
        tape.backward(tape.sum(m));

        // recover the frozen draw from the node context and difference the
        // surrogate around it
        const auto& node = tape.node(m.id);
        NoiseDraw nd;
        if (node.ctx.numel() >= n) {
            nd.n1 = Tensor({n});
            for (int i = 0; i < n; ++i) nd.n1.data[size_t(i)] = node.ctx.data[size_t(i)];
        }
        if (node.ctx.numel() >= 2 * n) {
            nd.n2 = Tensor({n});
            for (int i = 0; i < n; ++i) nd.n2.data[size_t(i)] = node.ctx.data[size_t(n + i)];
        }
        Tensor xp = p.value, xm = p.value;
        for (auto& v : xp.data) v += h;
        for (auto& v : xm.data) v -= h;
        const Tensor fp = surrogate_value(spec, xp, nd);
        const Tensor fm = surrogate_value(spec, xm, nd);
        double worst = 0.0;
        for (int i = 0; i < n; ++i) {
            const double fd = (fp.data[size_t(i)] - fm.data[size_t(i)]) / (2 * h);
            const double an = p.grad.data[size_t(i)];
            worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(fd), std::abs(an), 1e-8}));
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "%s: worst relative error %.3g over %d inputs",
                      discretizer_name(k), worst, n);
        c.require(worst < 1e-4, buf);
    }
    report(2, "surrogate backward matches finite differences (rel err < 1e-4)", c, verbose);
    return c.ok;
}

// ---------------------------------------------------------------------------
// helpers for the training tiers

KvConfig experiment_config(const std::string& text, const std::string& unit) {
    KvConfig kv = KvConfig::parse_text(text);
    kv.set("discretizer.kind", unit);
    return kv;
}

const char* kSimpleMatrixConfig = R"(trainer = dial
env.kind = matrix
env.n_agents = 3
env.n_numbers = 4
env.message_bits = 2
discretizer.kind = ste
seeds = 1,2,3,4,5
train_iterations = 10000
opt.c_lr = 2.5e-4
)";

const char* kErrorCorrectionConfig = R"(trainer = dial
env.kind = matrix
env.n_agents = 10
env.n_numbers = 2
env.message_bits = 3
env.flip_probability = 0.5
env.flips_per_message = 1
discretizer.kind = ste
seeds = 1,2,3,4,5
train_iterations = 20000
opt.c_lr = 2.5e-4
)";

const char* kComplexDeskConfig = R"(trainer = dial
env.kind = matrix
env.n_agents = 5
env.n_numbers = 16
env.message_bits = 4
discretizer.kind = ste
seeds = 1
train_iterations = 20000
opt.c_lr = 2.5e-4
)";

const char* kSpeakerListenerComaConfig = R"(trainer = coma_dial
env.kind = speaker_listener
discretizer.kind = dru
seeds = 1,2,3,4,5
train_iterations = 5000
)";

const char* kSpeakerListenerDialConfig = R"(trainer = dial
env.kind = speaker_listener
discretizer.kind = dru
seeds = 1,2,3,4,5
train_iterations = 5000
)";

RunResult run_unit(const std::string& base, const std::string& unit, const std::string& tag) {
    RunConfig rc = run_config_from_kv(experiment_config(base, unit));
    return run(rc, out_root + "/" + tag + "_" + unit);
}

// ---------------------------------------------------------------------------
// 3. Simple matrix suite reproduces the reported ordering
bool criterion3(bool verbose) {
    Criterion c;
    std::map<std::string, double> mean;
    for (const std::string unit : {"ste", "dru", "st_dru", "gs", "st_gs"}) {
        const RunResult rr = run_unit(kSimpleMatrixConfig, unit, "c3");
        if (rr.aborted()) {
            c.require(false, unit + ": run aborted");
            continue;
        }
        const FinalWindow fw = final_window_stats(rr);
        mean[unit] = fw.mean;
        c.note(unit + ": final-window " + format_double(fw.mean) + " +/- " + format_double(fw.stdev));
    }
    c.require(mean["ste"] >= 2.90, "STE >= 2.90 (got " + format_double(mean["ste"]) + ")");
    c.require(mean["dru"] >= 2.80, "DRU >= 2.80 (got " + format_double(mean["dru"]) + ")");
    c.require(mean["st_dru"] >= 2.80, "ST-DRU >= 2.80 (got " + format_double(mean["st_dru"]) + ")");
    const double others =
        std::min(std::min(mean["ste"], mean["dru"]), std::min(mean["st_dru"], mean["st_gs"]));
    c.require(mean["gs"] < others, "GS strictly lowest (GS " + format_double(mean["gs"]) +
                                       " vs next " + format_double(others) + ")");
    report(3, "simple matrix (DIAL, 5 seeds, 10k iterations)", c, verbose);
    return c.ok;
}

// ---------------------------------------------------------------------------
// 4. Error correction: noise-based units succeed, STE fails
bool criterion4(bool verbose) {
    Criterion c;
    std::map<std::string, double> mean;
    std::map<std::string, RunResult> results;
    for (const std::string unit : {"dru", "st_dru", "ste"}) {
        RunResult rr = run_unit(kErrorCorrectionConfig, unit, "c4");
        if (rr.aborted()) {
            c.require(false, unit + ": run aborted");
            continue;
        }
        const FinalWindow fw = final_window_stats(rr);
        mean[unit] = fw.mean;
        c.note(unit + ": final-window " + format_double(fw.mean) + " +/- " + format_double(fw.stdev));
        results[unit] = std::move(rr);
    }
    c.require(mean["dru"] >= 9.3, "DRU >= 9.3 (got " + format_double(mean["dru"]) + ")");
    c.require(mean["st_dru"] >= 9.3, "ST-DRU >= 9.3 (got " + format_double(mean["st_dru"]) + ")");
    c.require(mean["ste"] <= 7.0, "STE fails: <= 7.0 (got " + format_double(mean["ste"]) + ")");
    c.require(mean["st_dru"] - mean["ste"] >= 2.0,
              "ST-DRU beats STE by >= 2.0 (gap " + format_double(mean["st_dru"] - mean["ste"]) + ")");

    // every qualifying DRU/ST-DRU seed must have learned codes at Hamming
    // distance 3, so the post-flip supports cannot overlap
    for (const std::string unit : {"dru", "st_dru"}) {
        if (!results.count(unit)) continue;
        for (const auto& sr : results[unit].seeds) {
            const int n = int(sr.rows.size());
            const int w = std::max(1, n / 10);
            double fwm = 0;
            for (int i = n - w; i < n; ++i) fwm += sr.rows[size_t(i)].eval_reward;
            fwm /= w;
            if (fwm < 9.3 || !sr.has_protocol) continue;
            const int d = hamming_distance(sr.protocol.modal_code(0), sr.protocol.modal_code(1));
            c.require(d == 3, unit + " seed " + std::to_string(sr.seed) + ": codes " +
                                  ProtocolTable::code_string(sr.protocol.modal_code(0), 3) + "/" +
                                  ProtocolTable::code_string(sr.protocol.modal_code(1), 3) +
                                  " at Hamming distance 3");
        }
    }
    report(4, "error correction (DIAL, N=10, p=0.5, 5 seeds, 20k iterations)", c, verbose);
    return c.ok;
}

// ---------------------------------------------------------------------------
// 5. Complex matrix at desk scale: STE trains faster, lower amplitude
bool criterion5(bool verbose) {
    Criterion c;
    std::map<std::string, RunResult> results;
    for (const std::string unit : {"ste", "dru", "st_dru"}) {
        RunResult rr = run_unit(kComplexDeskConfig, unit, "c5");
        if (rr.aborted()) {
            c.require(false, unit + ": run aborted");
            report(5, "complex matrix at desk scale (N=5, M=16)", c, verbose);
            return c.ok;
        }
        results[unit] = std::move(rr);
    }
    auto reach = [&](const std::string& unit) {
        const auto& rows = results[unit].seeds[0].rows;
        for (const auto& row : rows)
            if (row.eval_reward >= 4.7) return row.iteration;
        return std::numeric_limits<int>::max();
    };
    const int r_ste = reach("ste"), r_stdru = reach("st_dru");
    c.note("STE reaches 4.7 at iteration " + std::to_string(r_ste));
    c.note("ST-DRU reaches 4.7 at iteration " +
           (r_stdru == std::numeric_limits<int>::max() ? std::string("never") : std::to_string(r_stdru)));
    c.require(r_ste != std::numeric_limits<int>::max(), "STE reaches 4.7 within the budget");
    c.require(r_stdru != std::numeric_limits<int>::max(), "ST-DRU reaches 4.7 within the budget");
    c.require(2 * r_ste <= r_stdru, "STE needs at most half the iterations of ST-DRU");

    // communication amplitude of the noise-based units exceeds STE's at
    // every evaluation checkpoint
    const auto& ste_rows = results["ste"].seeds[0].rows;
    for (const std::string unit : {"dru", "st_dru"}) {
        const auto& rows = results[unit].seeds[0].rows;
        bool above = true;
        double worst_margin = 1e9;
        for (size_t i = 0; i < rows.size(); ++i) {
            const double margin = rows[i].comm_amplitude - ste_rows[i].comm_amplitude;
            if (margin <= 0.0) above = false;
            worst_margin = std::min(worst_margin, margin);
        }
        c.require(above, unit + " amplitude exceeds STE's at every checkpoint (min margin " +
                             format_double(worst_margin) + ")");
    }
    report(5, "complex matrix at desk scale (N=5, M=16, training-speed and amplitude claims)", c,
           verbose);
    return c.ok;
}

// ---------------------------------------------------------------------------
// 6. Speaker-listener with COMA-DIAL
bool criterion6(bool verbose) {
    Criterion c;
    auto final_mean = [&](const RunResult& rr) { return final_window_stats(rr).mean; };

    const RunResult coma_dru = run_unit(kSpeakerListenerComaConfig, "dru", "c6_coma");
    const RunResult coma_stdru = run_unit(kSpeakerListenerComaConfig, "st_dru", "c6_coma");
    KvConfig ablation = experiment_config(kSpeakerListenerComaConfig, "dru");
    ablation.set("ablation.zero_messages", "true");
    const RunResult no_comm = run(run_config_from_kv(ablation), out_root + "/c6_coma_nocomm");
    const RunResult dial_dru = run_unit(kSpeakerListenerDialConfig, "dru", "c6_dial");

    if (coma_dru.aborted() || coma_stdru.aborted() || no_comm.aborted() || dial_dru.aborted()) {
        c.require(false, "a run aborted");
        report(6, "speaker-listener (COMA-DIAL)", c, verbose);
        return c.ok;
    }
    const double m_dru = final_mean(coma_dru);
    const double m_stdru = final_mean(coma_stdru);
    const double m_nocomm = final_mean(no_comm);
    const double m_dial = final_mean(dial_dru);
    c.note("COMA-DIAL DRU " + format_double(m_dru) + ", ST-DRU " + format_double(m_stdru));
    c.note("zero-message ablation " + format_double(m_nocomm) + ", DIAL DRU " + format_double(m_dial));
    c.require(m_dru >= -18.0, "COMA-DIAL DRU >= -18 (got " + format_double(m_dru) + ")");
    c.require(m_stdru >= -18.0, "COMA-DIAL ST-DRU >= -18 (got " + format_double(m_stdru) + ")");
    c.require(m_dru - m_nocomm >= 10.0,
              "DRU beats the no-communication baseline by >= 10 (gap " +
                  format_double(m_dru - m_nocomm) + ")");
    c.require(m_stdru - m_nocomm >= 10.0,
              "ST-DRU beats the no-communication baseline by >= 10 (gap " +
                  format_double(m_stdru - m_nocomm) + ")");
    c.require(m_dru > m_dial, "COMA-DIAL beats DIAL with the same discretizer (" +
                                  format_double(m_dru) + " vs " + format_double(m_dial) + ")");
    report(6, "speaker-listener (COMA-DIAL vs ablation and DIAL, 5 seeds)", c, verbose);
    return c.ok;
}

// ---------------------------------------------------------------------------
// 7. Environment oracles
bool criterion7(bool verbose) {
    Criterion c;
    {
        MatrixEnv env(MatrixEnvConfig{3, 4, 2});
        Rng env_rng(1), chan_rng(2);
        bool all_max = true;
        for (int i = 0; i < 10000; ++i)
            if (matrix_oracle_episode(env, env_rng, chan_rng, false) != 3.0) all_max = false;
        c.require(all_max, "hand-coded policy earns exactly N=3 on every clean episode");
    }
    {
        MatrixEnv env(MatrixEnvConfig{10, 2, 3, 0.5, 1});
        Rng env_rng(3), chan_rng(4);
        bool all_max = true;
        for (int i = 0; i < 10000; ++i)
            if (matrix_oracle_episode(env, env_rng, chan_rng, true) != 10.0) all_max = false;
        c.require(all_max, "repetition code with majority decoding earns exactly N=10 under p=0.5");
    }
    {
        MatrixEnv env(MatrixEnvConfig{3, 4, 2});
        Rng rng(17);
        int same = 0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            env.reset(rng);
            if (env.all_same()) ++same;
        }
        const double f = double(same) / n;
        c.require(std::abs(f - 0.5) < 0.015,
                  "all-same reset frequency 0.5 +/- 0.015 (got " + format_double(f) + ")");
    }
    report(7, "environment oracles", c, verbose);
    return c.ok;
}

// ---------------------------------------------------------------------------
// 8. COMA identities and gate properties
bool criterion8(bool verbose) {
    Criterion c;
    Rng rng(5);
    double worst_expect = 0, worst_shift = 0;
    for (int rep = 0; rep < 10000; ++rep) {
        const int n = 2 + rng.uniform_int(5);
        std::vector<double> q(static_cast<size_t>(n)), pi(static_cast<size_t>(n));
        double z = 0;
        for (int i = 0; i < n; ++i) {
            q[size_t(i)] = 6.0 * rng.uniform() - 3.0;
            pi[size_t(i)] = rng.uniform() + 1e-3;
            z += pi[size_t(i)];
        }
        for (auto& p : pi) p /= z;
        double expect = 0;
        for (int u = 0; u < n; ++u) expect += pi[size_t(u)] * counterfactual_advantage(q, pi, u);
        worst_expect = std::max(worst_expect, std::abs(expect));
        const double shift = 10.0 * rng.uniform() - 5.0;
        std::vector<double> qs = q;
        for (auto& v : qs) v += shift;
        const int u = rng.uniform_int(n);
        worst_shift = std::max(worst_shift,
                               std::abs(counterfactual_advantage(qs, pi, u) -
                                        counterfactual_advantage(q, pi, u)));
    }
    c.require(worst_expect <= 1e-12,
              "sum_u pi(u) A(u) = 0 over 10k random pairs (worst " + format_double(worst_expect) + ")");
    c.require(worst_shift <= 1e-12,
              "advantage invariant to constant q shifts (worst " + format_double(worst_shift) + ")");

    const LrGate gate{0.05, 0.5, 5e-4};
    bool endpoints = gated_lr(0.5, gate) == 0.0 && gated_lr(0.7, gate) == 0.0 &&
                     gated_lr(0.05, gate) == gate.alpha_max && gated_lr(0.0, gate) == gate.alpha_max;
    bool monotone = true, bounded = true;
    double prev = gate.alpha_max + 1;
    for (int i = 0; i < 1000; ++i) {
        const double a = gated_lr(1.2 * i / 999.0, gate);
        if (a > prev + 1e-15) monotone = false;
        if (a < 0.0 || a > gate.alpha_max) bounded = false;
        prev = a;
    }
    c.require(endpoints, "gated lr endpoints: 0 above eta_max, alpha_max below eta_min");
    c.require(monotone && bounded, "gated lr monotone nonincreasing and within [0, alpha_max]");
    report(8, "COMA identities and learning-rate gate properties", c, verbose);
    return c.ok;
}

// ---------------------------------------------------------------------------
// 9. Determinism: byte-identical CSVs for a repeated (config, seed)
std::string strip_wall_ms(const std::string& csv_text) {
    std::istringstream is(csv_text);
    std::string line, out;
    while (std::getline(is, line)) {
        out += line.substr(0, line.find_last_of(','));
        out += '\n';
    }
    return out;
}

bool criterion9(bool verbose) {
    Criterion c;
    const char* configs[] = {
        "trainer = dial\nenv.kind = matrix\nenv.n_agents = 3\nenv.n_numbers = 4\n"
        "discretizer.kind = dru\nseeds = 1,2\ntrain_iterations = 60\neval_every = 20\n"
        "eval_episodes = 20\nbatch_episodes = 8\n",
        "trainer = coma_dial\nenv.kind = speaker_listener\ndiscretizer.kind = st_gs\n"
        "seeds = 3\ntrain_iterations = 20\neval_every = 10\neval_episodes = 5\n"
        "batch_episodes = 4\nenv.episode_length = 10\n",
    };
    int id = 0;
    for (const char* text : configs) {
        ++id;
        const RunConfig rc = run_config_from_kv(KvConfig::parse_text(text));
        const std::string d1 = out_root + "/c9_" + std::to_string(id) + "a";
        const std::string d2 = out_root + "/c9_" + std::to_string(id) + "b";
        const RunResult r1 = run(rc, d1);
        const RunResult r2 = run(rc, d2);
        if (r1.aborted() || r2.aborted()) {
            c.require(false, "repeat run aborted");
            continue;
        }
        for (uint64_t seed : rc.seeds) {
            const std::string f = "/seed_" + std::to_string(seed) + ".csv";
            const bool same =
                strip_wall_ms(read_text_file(d1 + f)) == strip_wall_ms(read_text_file(d2 + f));
            c.require(same, "config " + std::to_string(id) + " seed " + std::to_string(seed) +
                                ": metric CSVs byte-identical (wall_ms column excluded)");
        }
        c.require(read_text_file(d1 + "/aggregate.csv") == read_text_file(d2 + "/aggregate.csv"),
                  "config " + std::to_string(id) + ": aggregates byte-identical");
    }
    report(9, "determinism of repeated runs", c, verbose);
    return c.ok;
}

} // namespace

int main(int argc, char** argv) {
    int criterion = 0;
    bool verbose = true;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) criterion = std::atoi(argv[++i]);
        else if (std::strcmp(argv[i], "--out") == 0 && i + 1 < argc) out_root = argv[++i];
        else if (std::strcmp(argv[i], "--quiet") == 0) verbose = false;
        else {
            std::cerr << "usage: acceptance [--criterion N] [--out DIR] [--quiet]\n";
            return 2;
        }
    }
    std::filesystem::create_directories(out_root);
    bool ok = true;
    using Fn = bool (*)(bool);
    const Fn fns[] = {criterion1, criterion2, criterion3, criterion4, criterion5,
                      criterion6, criterion7, criterion8, criterion9};
    for (int i = 1; i <= 9; ++i) {
        if (criterion != 0 && criterion != i) continue;
        ok = fns[i - 1](verbose) && ok;
    }
    return ok ? 0 : 1;
}
