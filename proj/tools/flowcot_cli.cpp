// Command-line front end: reproducible world generation, training, policy
// evaluation, answer ranking, and oracle verification over JSON/CSV
// artifacts.
//
// Exit codes: 0 success, 2 usage, 3 data error, 4 numeric error.

#include <cstdint>
#include <functional>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "flowcot/errors.hpp"
#include "flowcot/experiment.hpp"

namespace {

using namespace flowcot;

int dispatch(CLI::App& app, int argc, char** argv, const std::function<int()>& run) {
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    try {
        return run();
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const EnumerationCapError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"amortized rationale sampler over enumerable toy worlds"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    // make-world
    std::string spec_path, world_out;
    std::uint64_t seed = 0;
    auto* make_cmd = app.add_subcommand("make-world", "generate a seeded world file");
    make_cmd->add_option("--spec", spec_path, "world spec JSON")->required();
    make_cmd->add_option("--out", world_out, "output world JSON path")->required();
    make_cmd->add_option("--seed", seed, "world seed");

    // train
    std::string world_path, config_path, out_dir, manifest_path;
    bool no_filter = false;
    auto* train_cmd = app.add_subcommand("train", "run the exploration-filter-update loop");
    train_cmd->add_option("--world", world_path, "world JSON");
    train_cmd->add_option("--config", config_path, "train config JSON");
    train_cmd->add_option("--manifest", manifest_path, "rerun from a manifest instead");
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_flag("--no-filter", no_filter,
                        "disable reference filtering (ablation arm)");

    // eval
    std::string checkpoint_path;
    int instance_id = 0, max_rationale_len = 4;
    auto* eval_cmd = app.add_subcommand("eval", "distance between policy and exact posterior");
    eval_cmd->add_option("--world", world_path, "world JSON")->required();
    eval_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint JSON")->required();
    eval_cmd->add_option("--instance", instance_id, "instance id");
    eval_cmd->add_option("--max-rationale-len", max_rationale_len, "enumeration length bound");

    // rank
    int n_rationales = 64, answer_max_len = 4;
    double temperature = 1.0;
    std::uint64_t rank_seed = 0;
    std::string mode = "bin";
    auto* rank_cmd = app.add_subcommand("rank", "select an answer by BiN or BoN");
    rank_cmd->add_option("--world", world_path, "world JSON")->required();
    rank_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint JSON")->required();
    rank_cmd->add_option("--instance", instance_id, "instance id");
    rank_cmd->add_option("-N,--n-rationales", n_rationales, "number of sampled rationales");
    rank_cmd->add_option("-T,--temperature", temperature, "rationale sampling temperature");
    rank_cmd->add_option("--max-rationale-len", max_rationale_len, "rationale length bound");
    rank_cmd->add_option("--answer-max-len", answer_max_len, "answer length bound");
    rank_cmd->add_option("--seed", rank_seed, "sampling seed");
    rank_cmd->add_option("--mode", mode, "bin | bon")
        ->check(CLI::IsMember({"bin", "bon"}));

    // oracle
    std::uint64_t oracle_seed = 0;
    auto* oracle_cmd = app.add_subcommand("oracle", "emit a JSON verification report");
    oracle_cmd->add_option("--world", world_path, "world JSON")->required();
    oracle_cmd->add_option("--checkpoint", checkpoint_path, "optional policy checkpoint");
    oracle_cmd->add_option("--instance", instance_id, "instance id");
    oracle_cmd->add_option("--max-rationale-len", max_rationale_len, "enumeration length bound");
    oracle_cmd->add_option("--seed", oracle_seed, "oracle sampling seed");

    return dispatch(app, argc, argv, [&]() -> int {
        if (make_cmd->parsed()) {
            run_make_world(spec_path, world_out, seed);
            return 0;
        }
        if (train_cmd->parsed()) {
            if (!manifest_path.empty()) {
                if (!world_path.empty() || !config_path.empty() || no_filter) {
                    std::cerr << "train: --manifest excludes --world/--config/--no-filter\n";
                    return 2;
                }
                run_train_from_manifest(manifest_path, out_dir);
                return 0;
            }
            if (world_path.empty() || config_path.empty()) {
                std::cerr << "train: need --world and --config (or --manifest)\n";
                return 2;
            }
            TrainConfig cfg = train_config_from_json(load_json_file(config_path));
            if (no_filter) cfg.filter_enabled = false;
            run_train(world_path, cfg, out_dir);
            return 0;
        }
        if (eval_cmd->parsed()) {
            std::cout << run_eval(world_path, checkpoint_path, instance_id, max_rationale_len)
                             .dump(2)
                      << '\n';
            return 0;
        }
        if (rank_cmd->parsed()) {
            InferenceConfig cfg;
            cfg.n_rationales = n_rationales;
            cfg.temperature = temperature;
            cfg.rationale_max_len = max_rationale_len;
            cfg.answer_max_len = answer_max_len;
            cfg.rng_seed = rank_seed;
            std::cout << run_rank(world_path, checkpoint_path, instance_id, cfg, mode).dump(2)
                      << '\n';
            return 0;
        }
        if (oracle_cmd->parsed()) {
            const auto report = run_oracle(world_path, checkpoint_path, instance_id,
                                           max_rationale_len, oracle_seed);
            std::cout << report.dump(2) << '\n';
            return report.at("all_pass").get<bool>() ? 0 : 4;
        }
        return 2;
    });
}
