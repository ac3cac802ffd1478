#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "commlearn/harness.hpp"

using namespace commlearn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

const char* kTinyMatrixConfig = R"(# tiny matrix run
trainer = dial
env.kind = matrix
env.n_agents = 2
env.n_numbers = 2
env.message_bits = 1
discretizer.kind = ste
seeds = 1,2
train_iterations = 20
eval_every = 10
eval_episodes = 20
batch_episodes = 4
net.a_hidden = 8
net.c_hidden = 4
)";

// strips the trailing wall_ms column, which is the one timing-dependent field
std::string strip_wall_ms(const std::string& csv_text) {
    std::istringstream is(csv_text);
    std::string line, out;
    while (std::getline(is, line)) {
        const size_t comma = line.find_last_of(',');
        out += line.substr(0, comma);
        out += '\n';
    }
    return out;
}

} // namespace

TEST_CASE("config parsing") {
    SUBCASE("well-formed config") {
        const RunConfig rc = run_config_from_kv(KvConfig::parse_text(kTinyMatrixConfig));
        CHECK(rc.trainer == TrainerKind::Dial);
        CHECK(rc.is_matrix);
        CHECK(rc.matrix.n_agents == 2);
        CHECK(rc.discretizer.kind == DiscretizerKind::STE);
        CHECK(rc.seeds == std::vector<uint64_t>{1, 2});
        CHECK(rc.dqn_gamma == 1.0); // matrix default
        CHECK(rc.reward_scale == doctest::Approx(0.5));
        CHECK(rc.a_hidden == std::vector<int>{8});
    }
    SUBCASE("particle defaults") {
        KvConfig kv = KvConfig::parse_text("trainer = coma_dial\nenv.kind = speaker_listener\n"
                                           "discretizer.kind = dru\n");
        const RunConfig rc = run_config_from_kv(kv);
        CHECK(rc.eval_every == 50);
        CHECK(rc.eval_episodes == 10);
        CHECK(rc.coma_gamma == doctest::Approx(0.95));
        CHECK(rc.particle.episode_length == 25);
        CHECK(rc.reward_scale == doctest::Approx(1.0 / 30.0));
    }
    SUBCASE("unknown keys are rejected") {
        KvConfig kv = KvConfig::parse_text("trainer = dial\nenv.kind = matrix\ndiscretizer.kind = ste\n"
                                           "typo_key = 1\n");
        CHECK_THROWS_WITH_AS(run_config_from_kv(kv), doctest::Contains("typo_key"),
                             std::invalid_argument);
    }
    SUBCASE("missing required keys are rejected") {
        CHECK_THROWS_AS(run_config_from_kv(KvConfig::parse_text("env.kind = matrix\n")),
                        std::invalid_argument);
    }
    SUBCASE("cadence must divide the budget") {
        KvConfig kv = KvConfig::parse_text("trainer = dial\nenv.kind = matrix\ndiscretizer.kind = ste\n"
                                           "train_iterations = 105\neval_every = 10\n");
        CHECK_THROWS_AS(run_config_from_kv(kv), std::invalid_argument);
    }
    SUBCASE("malformed values are rejected") {
        CHECK_THROWS_AS(KvConfig::parse_text("key_without_equals\n"), std::invalid_argument);
        KvConfig kv = KvConfig::parse_text("trainer = dial\nenv.kind = matrix\ndiscretizer.kind = ste\n"
                                           "opt.lr = fast\n");
        CHECK_THROWS_AS(run_config_from_kv(kv), std::invalid_argument);
    }
    SUBCASE("environment variable override") {
        setenv("COMMLEARN_env_n_agents", "4", 1);
        KvConfig kv = KvConfig::parse_text(kTinyMatrixConfig);
        apply_env_overrides(kv, run_config_keys());
        unsetenv("COMMLEARN_env_n_agents");
        const RunConfig rc = run_config_from_kv(kv);
        CHECK(rc.matrix.n_agents == 4);
    }
}

TEST_CASE("run emits the full report") {
    TempDir dir("commlearn_run_test");
    RunConfig rc = run_config_from_kv(KvConfig::parse_text(kTinyMatrixConfig));
    const RunResult rr = run(rc, dir.str());
    REQUIRE_FALSE(rr.aborted());
    REQUIRE(rr.seeds.size() == 2);

    SUBCASE("row count follows the cadence") {
        for (const auto& sr : rr.seeds) {
            CHECK(sr.rows.size() == 2); // 20 iterations / eval_every 10
            CHECK(sr.rows[0].iteration == 10);
            CHECK(sr.rows[1].iteration == 20);
        }
    }
    SUBCASE("all artifacts exist") {
        CHECK(fs::exists(dir.path / "config.txt"));
        CHECK(fs::exists(dir.path / "seed_1.csv"));
        CHECK(fs::exists(dir.path / "seed_2.csv"));
        CHECK(fs::exists(dir.path / "aggregate.csv"));
        CHECK(fs::exists(dir.path / "reward.svg"));
        CHECK(fs::exists(dir.path / "amplitude.svg"));
        CHECK(fs::exists(dir.path / "checkpoint_seed1.bin"));
        CHECK(fs::exists(dir.path / "protocol_seed1.csv"));
        CHECK(read_text_file(dir.str() + "/config.txt") == kTinyMatrixConfig);
    }
    SUBCASE("aggregate is recomputable from the per-seed CSVs") {
        const auto agg = read_csv(dir.str() + "/aggregate.csv");
        const auto s1 = read_csv(dir.str() + "/seed_1.csv");
        const auto s2 = read_csv(dir.str() + "/seed_2.csv");
        REQUIRE(agg.size() == 3);
        for (size_t i = 1; i < agg.size(); ++i) {
            const std::vector<double> rewards{std::stod(s1[i][2]), std::stod(s2[i][2])};
            CHECK(std::stod(agg[i][1]) == doctest::Approx(mean_of(rewards)).epsilon(1e-9));
            CHECK(std::stod(agg[i][2]) == doctest::Approx(std_of(rewards)).epsilon(1e-9));
        }
    }
    SUBCASE("repeated runs are byte-identical apart from wall time") {
        TempDir dir2("commlearn_run_test2");
        run(rc, dir2.str());
        for (const char* f : {"seed_1.csv", "seed_2.csv"}) {
            const std::string a = strip_wall_ms(read_text_file(dir.str() + "/" + f));
            const std::string b = strip_wall_ms(read_text_file(dir2.str() + "/" + f));
            CHECK(a == b);
        }
        CHECK(read_text_file(dir.str() + "/aggregate.csv") ==
              read_text_file(dir2.str() + "/aggregate.csv"));
        CHECK(read_text_file(dir.str() + "/protocol_seed1.csv") ==
              read_text_file(dir2.str() + "/protocol_seed1.csv"));
    }
    SUBCASE("protocol rows are normalized distributions") {
        const auto rows = read_csv(dir.str() + "/protocol_seed1.csv");
        REQUIRE(rows.size() == size_t(1 + 2 * 2)); // header + M=2 inputs x 2^B=2 codes
        double sum0 = 0;
        for (size_t i = 1; i < rows.size(); ++i)
            if (rows[i][0] == "0") sum0 += std::stod(rows[i][2]);
        CHECK(sum0 == doctest::Approx(1.0));
    }
    SUBCASE("checkpoint loads and the protocol subcommand reproduces the table") {
        TempDir out("commlearn_proto_test");
        write_text_file(out.str() + "/config.txt", kTinyMatrixConfig);
        emit_protocol(dir.str() + "/checkpoint_seed1.bin", out.str() + "/config.txt",
                      out.str() + "/protocol.csv");
        CHECK(read_text_file(out.str() + "/protocol.csv") ==
              read_text_file(dir.str() + "/protocol_seed1.csv"));
    }
}

TEST_CASE("aborted runs leave partial outputs and a marker") {
    TempDir dir("commlearn_abort_test");
    KvConfig kv = KvConfig::parse_text(kTinyMatrixConfig);
    kv.set("opt.lr", "1e300");
    kv.set("seeds", "1");
    kv.set("train_iterations", "100");
    kv.set("eval_every", "100");
    const RunResult rr = run(run_config_from_kv(kv), dir.str());
    CHECK(rr.aborted());
    CHECK(fs::exists(dir.path / "ABORTED"));
    CHECK(fs::exists(dir.path / "seed_1.csv"));
    CHECK(read_text_file(dir.str() + "/ABORTED").find("seed 1") != std::string::npos);
}

TEST_CASE("summarize") {
    SUBCASE("constant rewards give mean with zero std") {
        TempDir dir("commlearn_sum_test");
        write_text_file(dir.str() + "/config.txt",
                        "trainer = dial\nenv.kind = matrix\nenv.n_agents = 3\nenv.n_numbers = 4\n"
                        "discretizer.kind = ste\nseeds = 1\ntrain_iterations = 100\neval_every = 10\n");
        std::string csv = "seed,iteration,eval_reward,comm_amplitude,loss,wall_ms\n";
        for (int i = 1; i <= 10; ++i)
            csv += csv_row({"1", std::to_string(10 * i), "3", "0.5", "0.1", "7"});
        write_text_file(dir.str() + "/seed_1.csv", csv);
        const auto rows = summarize({dir.str()});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].mean == doctest::Approx(3.0));
        CHECK(rows[0].stdev == doctest::Approx(0.0));
        CHECK(rows[0].env == "matrix-3x4");
        const std::string text = summary_text(rows);
        CHECK(text.find("3.000") != std::string::npos);
        CHECK(text.find("0.000") != std::string::npos);
    }
    SUBCASE("two seeds at 2 and 4 give mean 3 with population std 1") {
        TempDir dir("commlearn_sum_test2");
        write_text_file(dir.str() + "/config.txt",
                        "trainer = dial\nenv.kind = matrix\nenv.n_agents = 3\nenv.n_numbers = 4\n"
                        "discretizer.kind = dru\nseeds = 1,2\ntrain_iterations = 100\neval_every = 10\n");
        for (int s = 1; s <= 2; ++s) {
            std::string csv = "seed,iteration,eval_reward,comm_amplitude,loss,wall_ms\n";
            for (int i = 1; i <= 10; ++i)
                csv += csv_row({std::to_string(s), std::to_string(10 * i), s == 1 ? "2" : "4", "0", "0", "1"});
            write_text_file(dir.str() + "/seed_" + std::to_string(s) + ".csv", csv);
        }
        const auto rows = summarize({dir.str()});
        CHECK(rows[0].mean == doctest::Approx(3.0));
        CHECK(rows[0].stdev == doctest::Approx(1.0));
    }
    SUBCASE("final window is the last tenth of eval rows") {
        TempDir dir("commlearn_sum_test3");
        write_text_file(dir.str() + "/config.txt",
                        "trainer = dial\nenv.kind = matrix\ndiscretizer.kind = gs\nseeds = 1\n"
                        "train_iterations = 200\neval_every = 10\n");
        std::string csv = "seed,iteration,eval_reward,comm_amplitude,loss,wall_ms\n";
        for (int i = 1; i <= 20; ++i) // first 18 rows at 0, last 2 rows at 3
            csv += csv_row({"1", std::to_string(10 * i), i <= 18 ? "0" : "3", "0", "0", "1"});
        write_text_file(dir.str() + "/seed_1.csv", csv);
        CHECK(summarize({dir.str()})[0].mean == doctest::Approx(3.0));
    }
    SUBCASE("mixed cadences fail") {
        TempDir a("commlearn_sum_a"), b("commlearn_sum_b");
        for (auto* d : {&a, &b}) {
            const bool first = d == &a;
            write_text_file(d->str() + "/config.txt",
                            std::string("trainer = dial\nenv.kind = matrix\ndiscretizer.kind = ste\n"
                                        "seeds = 1\ntrain_iterations = 100\neval_every = ") +
                                (first ? "10" : "20") + "\n");
            std::string csv = "seed,iteration,eval_reward,comm_amplitude,loss,wall_ms\n";
            const int rows = first ? 10 : 5;
            for (int i = 1; i <= rows; ++i)
                csv += csv_row({"1", std::to_string((first ? 10 : 20) * i), "1", "0", "0", "1"});
            write_text_file(d->str() + "/seed_1.csv", csv);
        }
        CHECK_THROWS_WITH_AS(summarize({a.str(), b.str()}), doctest::Contains("cadence"),
                             std::invalid_argument);
    }
}

TEST_CASE("histogram emission") {
    TempDir dir("commlearn_hist_test");
    emit_histograms(dir.str(), 2.0, 1.0, 2000);
    CHECK(fs::exists(dir.path / "histograms.csv"));
    CHECK(fs::exists(dir.path / "hist_DRU_train.svg"));
    CHECK(fs::exists(dir.path / "hist_ST-GS_eval.svg"));
    const auto rows = read_csv(dir.str() + "/histograms.csv");
    REQUIRE(rows.size() == size_t(1 + 5 * 2 * 7 * 20)); // units x modes x inputs x bins
    // frequencies per (unit, mode, x) sum to one; spot check one group
    double sum = 0;
    for (size_t i = 1; i < rows.size(); ++i)
        if (rows[i][0] == "STE" && rows[i][1] == "train" && rows[i][2] == "-3") sum += std::stod(rows[i][5]);
    CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("coma metric rows carry the extra columns") {
    TempDir dir("commlearn_coma_cols");
    KvConfig kv = KvConfig::parse_text("trainer = coma_dial\nenv.kind = speaker_listener\n"
                                       "discretizer.kind = dru\nseeds = 1\ntrain_iterations = 4\n"
                                       "eval_every = 2\neval_episodes = 4\nbatch_episodes = 2\n"
                                       "env.episode_length = 5\nnet.a_hidden = 8\nnet.c_hidden = 4\n"
                                       "net.critic_hidden = 8\n");
    const RunResult rr = run(run_config_from_kv(kv), dir.str());
    REQUIRE_FALSE(rr.aborted());
    const auto rows = read_csv(dir.str() + "/seed_1.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"seed", "iteration", "eval_reward", "comm_amplitude",
                                              "loss", "critic_loss", "actor_lr", "wall_ms"});
}
