#include <CLI11.hpp>
#include <iostream>

#include "commlearn/harness.hpp"

using namespace commlearn;

int main(int argc, char** argv) {
    CLI::App app{"commlearn: discrete communication learning for multi-agent RL"};
    app.require_subcommand(1);

    // run
    std::string run_config_path, run_out = "report";
    std::vector<std::string> run_sets;
    auto* run_cmd = app.add_subcommand("run", "train and evaluate one experiment configuration");
    run_cmd->add_option("config", run_config_path, "configuration file")->required();
    run_cmd->add_option("--out", run_out, "report directory");
    run_cmd->add_option("--set", run_sets, "override a config key, key=value");

    // summarize
    std::vector<std::string> sum_dirs;
    std::string sum_out;
    auto* sum_cmd = app.add_subcommand("summarize", "final-window comparison table across reports");
    sum_cmd->add_option("dirs", sum_dirs, "report directories")->required();
    sum_cmd->add_option("--out", sum_out, "also write the table as CSV");

    // histograms
    std::string hist_out = "histograms";
    double hist_sigma = 2.0, hist_tau = 1.0;
    int hist_draws = 10000;
    auto* hist_cmd = app.add_subcommand("histograms", "discretizer output histograms per unit and mode");
    hist_cmd->add_option("--out", hist_out, "output directory");
    hist_cmd->add_option("--sigma-g", hist_sigma, "Gaussian noise std");
    hist_cmd->add_option("--temperature", hist_tau, "softmax temperature");
    hist_cmd->add_option("--draws", hist_draws, "draws per input value");

    // protocol
    std::string proto_ckpt, proto_config, proto_out = "protocol.csv";
    int proto_episodes = 1000;
    auto* proto_cmd = app.add_subcommand("protocol", "message distribution table from a trained checkpoint");
    proto_cmd->add_option("checkpoint", proto_ckpt, "checkpoint file")->required();
    proto_cmd->add_option("config", proto_config, "run configuration file")->required();
    proto_cmd->add_option("--out", proto_out, "output CSV");
    proto_cmd->add_option("--episodes", proto_episodes, "draws per input number");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            KvConfig kv = KvConfig::parse_file(run_config_path);
            apply_env_overrides(kv, run_config_keys());
            for (const auto& s : run_sets) {
                const size_t eq = s.find('=');
                if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + s);
                kv.set(s.substr(0, eq), s.substr(eq + 1));
            }
            RunConfig rc = run_config_from_kv(kv);
            const RunResult rr = run(rc, run_out);
            if (rr.aborted()) {
                std::cerr << "run aborted; see " << run_out << "/ABORTED\n";
                return 2;
            }
            const FinalWindow fw = final_window_stats(rr);
            std::cout << rc.env_label() << " " << rc.trainer_name() << " "
                      << discretizer_name(rc.discretizer.kind) << ": final " << fw.mean << " +/- "
                      << fw.stdev << " over " << fw.n_seeds << " seeds\n";
            std::cout << "report written to " << run_out << "\n";
        } else if (sum_cmd->parsed()) {
            const auto rows = summarize(sum_dirs);
            std::cout << summary_text(rows);
            if (!sum_out.empty()) write_text_file(sum_out, summary_csv(rows));
        } else if (hist_cmd->parsed()) {
            emit_histograms(hist_out, hist_sigma, hist_tau, hist_draws);
            std::cout << "histograms written to " << hist_out << "\n";
        } else if (proto_cmd->parsed()) {
            emit_protocol(proto_ckpt, proto_config, proto_out, proto_episodes);
            std::cout << "protocol table written to " << proto_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
