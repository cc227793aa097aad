// Command-line front end: run experiments from a JSON config, dump oracle
// samples, and compute exact W1 distances between sample files.

#include <array>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mfill/io.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mfill: output-space-filling design of computer experiments"};
    app.require_subcommand(1);

    // run
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed_override;
    int threads = 1;
    auto* run_cmd = app.add_subcommand("run", "run an experiment from a JSON config");
    run_cmd->add_option("--config", config_path, "path to the JSON config")->required();
    run_cmd->add_option("--out", out_dir, "output directory")->required();
    std::uint64_t seed_value = 0;
    auto* seed_opt = run_cmd->add_option("--seed", seed_value, "override the config seed");
    run_cmd->add_option("--threads", threads, "worker threads (results are thread-count invariant)");

    // oracle
    std::string oracle_model, oracle_out;
    std::size_t oracle_count = 1000;
    std::uint64_t oracle_seed = 0;
    double big_r = 1.0, small_r = 0.9;
    std::array<double, 3> times{1.0, 2.0, 4.0};
    int oracle_threads = 1;
    auto* oracle_cmd = app.add_subcommand("oracle", "dump exact target samples to CSV");
    oracle_cmd->add_option("--model", oracle_model, "torus_uniform | torus_nonuniform | expo")
        ->required();
    oracle_cmd->add_option("--count", oracle_count, "number of samples");
    oracle_cmd->add_option("--seed", oracle_seed, "RNG seed");
    oracle_cmd->add_option("--out", oracle_out, "output CSV path")->required();
    oracle_cmd->add_option("--R", big_r, "torus major radius");
    oracle_cmd->add_option("--r", small_r, "torus minor radius");
    oracle_cmd->add_option("--t", times, "exponential model times t1 t2 t3");
    oracle_cmd->add_option("--threads", oracle_threads, "worker threads");

    // w1
    std::string file_a, file_b, metric_name = "l1";
    int w1_threads = 1;
    auto* w1_cmd = app.add_subcommand("w1", "exact W1 between the y-columns of two CSV files");
    w1_cmd->add_option("file_a", file_a, "first CSV file")->required();
    w1_cmd->add_option("file_b", file_b, "second CSV file")->required();
    w1_cmd->add_option("--metric", metric_name, "l1 | euclidean (default l1)");
    w1_cmd->add_option("--threads", w1_threads, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            if (*seed_opt) seed_override = seed_value;
            return mfill::cmd_run(config_path, out_dir, seed_override, threads);
        }
        if (*oracle_cmd)
            return mfill::cmd_oracle(oracle_model, oracle_count, oracle_seed, oracle_out, big_r,
                                     small_r, times, oracle_threads);
        if (*w1_cmd) {
            mfill::GroundMetric metric;
            if (metric_name == "l1")
                metric = mfill::GroundMetric::l1;
            else if (metric_name == "euclidean")
                metric = mfill::GroundMetric::euclidean;
            else
                throw mfill::ConfigError("w1: metric must be 'l1' or 'euclidean'");
            return mfill::cmd_w1(file_a, file_b, metric, std::cout, w1_threads);
        }
    } catch (const mfill::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
