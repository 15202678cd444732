#include "flowcot/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "flowcot/errors.hpp"
#include "flowcot/reward.hpp"
#include "flowcot/verify.hpp"

namespace flowcot {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
    for (const auto& [key, value] : j.items())
        if (!known.contains(key))
            throw DataError(std::string(what) + ": unknown field '" + key + "'");
}

template <typename T>
void read_field(const json& j, const char* name, T& into) {
    if (j.contains(name)) into = j.at(name).get<T>();
}

void check_version(const json& j, const char* what) {
    if (j.contains("version") && j.at("version").get<int>() != 1)
        throw DataError(std::string(what) + ": unsupported version");
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
    check_version(j, "train config");
    reject_unknown(j,
                   {"version", "m", "lambda", "lr", "weight_decay", "steps", "tau_max", "tau_min",
                    "delta_horizon", "sample_temp_max", "sample_temp_min", "reward_temp_start",
                    "reward_temp_end", "reward_temp_horizon", "min_rationale_len",
                    "max_rationale_len", "rng_seed", "fallback_on_empty", "filter_enabled",
                    "pair_weight_gamma", "checkpoint_interval"},
                   "train config");
    TrainConfig cfg;
    read_field(j, "m", cfg.m);
    read_field(j, "lambda", cfg.lambda);
    read_field(j, "lr", cfg.lr);
    read_field(j, "weight_decay", cfg.weight_decay);
    read_field(j, "steps", cfg.steps);
    read_field(j, "tau_max", cfg.tau_max);
    read_field(j, "tau_min", cfg.tau_min);
    read_field(j, "delta_horizon", cfg.delta_horizon);
    read_field(j, "sample_temp_max", cfg.sample_temp_max);
    read_field(j, "sample_temp_min", cfg.sample_temp_min);
    read_field(j, "reward_temp_start", cfg.reward_temp_start);
    read_field(j, "reward_temp_end", cfg.reward_temp_end);
    read_field(j, "reward_temp_horizon", cfg.reward_temp_horizon);
    read_field(j, "min_rationale_len", cfg.min_rationale_len);
    read_field(j, "max_rationale_len", cfg.max_rationale_len);
    read_field(j, "rng_seed", cfg.rng_seed);
    read_field(j, "fallback_on_empty", cfg.fallback_on_empty);
    read_field(j, "filter_enabled", cfg.filter_enabled);
    read_field(j, "pair_weight_gamma", cfg.pair_weight_gamma);
    read_field(j, "checkpoint_interval", cfg.checkpoint_interval);
    cfg.validate();
    return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
    return json{{"version", 1},
                {"m", cfg.m},
                {"lambda", cfg.lambda},
                {"lr", cfg.lr},
                {"weight_decay", cfg.weight_decay},
                {"steps", cfg.steps},
                {"tau_max", cfg.tau_max},
                {"tau_min", cfg.tau_min},
                {"delta_horizon", cfg.delta_horizon},
                {"sample_temp_max", cfg.sample_temp_max},
                {"sample_temp_min", cfg.sample_temp_min},
                {"reward_temp_start", cfg.reward_temp_start},
                {"reward_temp_end", cfg.reward_temp_end},
                {"reward_temp_horizon", cfg.reward_temp_horizon},
                {"min_rationale_len", cfg.min_rationale_len},
                {"max_rationale_len", cfg.max_rationale_len},
                {"rng_seed", cfg.rng_seed},
                {"fallback_on_empty", cfg.fallback_on_empty},
                {"filter_enabled", cfg.filter_enabled},
                {"pair_weight_gamma", cfg.pair_weight_gamma},
                {"checkpoint_interval", cfg.checkpoint_interval}};
}

WorldSpec world_spec_from_json(const json& j) {
    check_version(j, "world spec");
    reject_unknown(j,
                   {"version", "vocab_size", "order", "concentration", "uniform_rows",
                    "num_instances", "x_len_min", "x_len_max", "y_len_min", "y_len_max",
                    "min_rationale_len", "max_rationale_len"},
                   "world spec");
    WorldSpec spec;
    read_field(j, "vocab_size", spec.vocab_size);
    read_field(j, "order", spec.order);
    read_field(j, "concentration", spec.concentration);
    read_field(j, "uniform_rows", spec.uniform_rows);
    read_field(j, "num_instances", spec.num_instances);
    read_field(j, "x_len_min", spec.x_len_min);
    read_field(j, "x_len_max", spec.x_len_max);
    read_field(j, "y_len_min", spec.y_len_min);
    read_field(j, "y_len_max", spec.y_len_max);
    read_field(j, "min_rationale_len", spec.min_rationale_len);
    read_field(j, "max_rationale_len", spec.max_rationale_len);
    spec.validate();
    return spec;
}

json world_spec_to_json(const WorldSpec& spec) {
    return json{{"version", 1},
                {"vocab_size", spec.vocab_size},
                {"order", spec.order},
                {"concentration", spec.concentration},
                {"uniform_rows", spec.uniform_rows},
                {"num_instances", spec.num_instances},
                {"x_len_min", spec.x_len_min},
                {"x_len_max", spec.x_len_max},
                {"y_len_min", spec.y_len_min},
                {"y_len_max", spec.y_len_max},
                {"min_rationale_len", spec.min_rationale_len},
                {"max_rationale_len", spec.max_rationale_len}};
}

InferenceConfig inference_config_from_json(const json& j) {
    check_version(j, "inference config");
    reject_unknown(
        j, {"version", "n_rationales", "temperature", "rationale_max_len", "answer_max_len",
            "rng_seed"},
        "inference config");
    InferenceConfig cfg;
    read_field(j, "n_rationales", cfg.n_rationales);
    read_field(j, "temperature", cfg.temperature);
    read_field(j, "rationale_max_len", cfg.rationale_max_len);
    read_field(j, "answer_max_len", cfg.answer_max_len);
    read_field(j, "rng_seed", cfg.rng_seed);
    cfg.validate();
    return cfg;
}

json inference_config_to_json(const InferenceConfig& cfg) {
    return json{{"version", 1},
                {"n_rationales", cfg.n_rationales},
                {"temperature", cfg.temperature},
                {"rationale_max_len", cfg.rationale_max_len},
                {"answer_max_len", cfg.answer_max_len},
                {"rng_seed", cfg.rng_seed}};
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("invalid JSON in '" + path + "': " + e.what());
    }
    return j;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("file_hash_hex: cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void run_make_world(const std::string& spec_path, const std::string& out_path,
                    std::uint64_t seed) {
    const WorldSpec spec = world_spec_from_json(load_json_file(spec_path));
    const World world = make_world(spec, seed);
    save_world(world, out_path);
}

namespace {

void write_json_file(const json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << doc.dump(2) << '\n';
}

}  // namespace

TrainOutputs run_train(const std::string& world_path, const TrainConfig& cfg,
                       const std::string& out_dir) {
    const World world = load_world(world_path);
    fs::create_directories(out_dir);

    TrainOutputs paths;
    paths.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
    paths.checkpoint_path = (fs::path(out_dir) / "checkpoint.json").string();
    paths.manifest_path = (fs::path(out_dir) / "manifest.json").string();

    const StepCallback periodic = [&](int step, const PolicyParams& params,
                                      const MetricsRecord&) {
        if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0) {
            const auto path =
                (fs::path(out_dir) / ("checkpoint_step_" + std::to_string(step + 1) + ".json"))
                    .string();
            save_checkpoint(params, step + 1, path);
        }
        return true;
    };

    const TrainResult result = train(world, cfg, periodic);
    write_metrics_csv(result.metrics, paths.metrics_path);
    save_checkpoint(result.params, cfg.steps, paths.checkpoint_path);

    const json manifest{{"version", 1},
                        {"tool_version", kToolVersion},
                        {"seed", cfg.rng_seed},
                        {"world_path", world_path},
                        {"world_hash", file_hash_hex(world_path)},
                        {"config", train_config_to_json(cfg)},
                        {"artifacts",
                         json{{"metrics", "metrics.csv"}, {"checkpoint", "checkpoint.json"}}}};
    write_json_file(manifest, paths.manifest_path);
    return paths;
}

TrainOutputs run_train_from_manifest(const std::string& manifest_path,
                                     const std::string& out_dir) {
    const json manifest = load_json_file(manifest_path);
    if (!manifest.contains("version") || manifest.at("version").get<int>() != 1)
        throw DataError("run_train_from_manifest: unsupported manifest version");
    const std::string world_path = manifest.at("world_path").get<std::string>();
    const std::string expected_hash = manifest.at("world_hash").get<std::string>();
    if (file_hash_hex(world_path) != expected_hash)
        throw DataError("run_train_from_manifest: world file hash mismatch for '" + world_path +
                        "'");
    const TrainConfig cfg = train_config_from_json(manifest.at("config"));
    return run_train(world_path, cfg, out_dir);
}

namespace {

const Instance& instance_at(const World& world, int instance_id) {
    if (instance_id < 0 || instance_id >= static_cast<int>(world.instances.size()))
        throw DataError("instance id " + std::to_string(instance_id) + " out of range");
    return world.instances[instance_id];
}

json distance_to_json(const DistanceReport& report) {
    json j{{"tv", report.tv},
           {"support_size", report.support_size},
           {"sample_count", report.sample_count}};
    if (std::isfinite(report.kl))
        j["kl"] = report.kl;
    else
        j["kl"] = "inf";
    return j;
}

}  // namespace

json run_eval(const std::string& world_path, const std::string& checkpoint_path, int instance_id,
              int max_rationale_len) {
    const World world = load_world(world_path);
    const Instance& inst = instance_at(world, instance_id);
    auto [params, step] = load_checkpoint(checkpoint_path);

    const auto target = exact_posterior(world.model, inst.x, inst.y, max_rationale_len);
    const auto learned = policy_distribution_exact(params, instance_id, max_rationale_len);
    const DistanceReport report = distance(target, learned);

    return json{{"version", 1},
                {"instance", instance_id},
                {"checkpoint_step", step},
                {"max_rationale_len", max_rationale_len},
                {"distance", distance_to_json(report)}};
}

namespace {

json ranked_answer_to_json(const RankedAnswer& ra) {
    json support = json::array();
    for (const auto& s : ra.support)
        support.push_back(json{{"rationale", s.rationale},
                               {"log_joint", s.log_joint},
                               {"combined_len", s.combined_len}});
    return json{{"answer", ra.answer}, {"score", ra.score}, {"support", support}};
}

}  // namespace

json run_rank(const std::string& world_path, const std::string& checkpoint_path, int instance_id,
              const InferenceConfig& cfg, const std::string& mode) {
    if (mode != "bin" && mode != "bon") throw DataError("run_rank: mode must be 'bin' or 'bon'");
    const World world = load_world(world_path);
    const Instance& inst = instance_at(world, instance_id);
    auto [params, step] = load_checkpoint(checkpoint_path);

    const RankResult result = mode == "bin"
                                  ? bin_rank(params, world.model, instance_id, inst.x, cfg)
                                  : bon_rank(params, world.model, instance_id, inst.x, cfg);

    json all = json::array();
    for (const auto& ra : result.all) all.push_back(ranked_answer_to_json(ra));
    return json{{"version", 1},
                {"mode", mode},
                {"instance", instance_id},
                {"checkpoint_step", step},
                {"config", inference_config_to_json(cfg)},
                {"selected", ranked_answer_to_json(result.selected)},
                {"answers", all}};
}

json run_oracle(const std::string& world_path, const std::string& checkpoint_path,
                int instance_id, int max_rationale_len, std::uint64_t seed) {
    const World world = load_world(world_path);
    const Instance& inst = instance_at(world, instance_id);

    json checks = json::array();
    bool all_pass = true;
    const auto add_check = [&](const std::string& name, double value, double bound, bool pass) {
        checks.push_back(json{{"name", name}, {"value", value}, {"bound", bound}, {"pass", pass}});
        all_pass = all_pass && pass;
    };

    world.model.validate_rows();

    const auto posterior = exact_posterior(world.model, inst.x, inst.y, max_rationale_len);
    double mass = 0.0;
    for (const auto& [z, p] : posterior) mass += p;
    add_check("posterior_normalization", std::abs(mass - 1.0), 1e-9, std::abs(mass - 1.0) <= 1e-9);

    // flow consistency at the optimum: posterior-factorized policy, exact rewards
    const auto opt_params =
        posterior_factorized_params(posterior, instance_id, world.model.vocab().size);
    double max_residual = 0.0;
    {
        Rng rng(stream_seed(seed, "oracle-flow"));
        for (int trial = 0; trial < 20; ++trial) {
            const Trajectory traj =
                sample_rationale(opt_params, instance_id, 1.0, 0, max_rationale_len, rng);
            const auto exact = exact_prefix_logrewards(
                world.model, inst.x, inst.y, make_sequence(traj.tokens, Role::Rationale));
            max_residual =
                std::max(max_residual, flow_residual_report(opt_params, traj, exact));
        }
    }
    add_check("flow_residual_at_optimum", max_residual, 1e-6, max_residual <= 1e-6);

    // interpolation error bound on model-typical rationales
    {
        Rng rng(stream_seed(seed, "oracle-interp-bound"));
        bool bound_ok = true;
        double worst = 0.0;
        double bound = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<int> ctx = inst.x.tokens;
            const auto z_tokens = world.model.sample_continuation(ctx, max_rationale_len, rng);
            if (z_tokens.size() < 2) continue;
            const auto report = interp_bound_check(world.model, inst.x, inst.y,
                                            make_sequence(z_tokens, Role::Rationale), 8);
            // the global M*lambda^2/8 bound holds for arbitrary rationales;
            // the tighter per-index variant needs curvature sign cancellation
            bound_ok = bound_ok && report.max_abs_error <= report.global_bound + 1e-12;
            worst = std::max(worst, report.max_abs_error);
            bound = std::max(bound, report.global_bound);
        }
        add_check("interp_global_bound", worst, bound, bound_ok);
    }

    // analytic gradient vs central differences
    {
        Rng rng(stream_seed(seed, "oracle-grad"));
        PolicyParams params(world.model.vocab().size);
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            Trajectory traj = sample_rationale(params, instance_id, 1.0, 1, max_rationale_len, rng);
            const auto trace = compute_trace(world.model, inst.x, inst.y,
                                             make_sequence(traj.tokens, Role::Rationale), 2, 1.0);
            worst = std::max(worst, gradcheck(params, traj, trace, 1e-6));
        }
        add_check("gradient_finite_difference", worst, 1e-5, worst <= 1e-5);
    }

    json doc{{"version", 1},
             {"instance", instance_id},
             {"max_rationale_len", max_rationale_len},
             {"seed", seed},
             {"checks", checks}};
    if (!checkpoint_path.empty()) {
        auto [params, step] = load_checkpoint(checkpoint_path);
        const auto learned = policy_distribution_exact(params, instance_id, max_rationale_len);
        doc["checkpoint_step"] = step;
        doc["distance"] = distance_to_json(distance(posterior, learned));
    }
    doc["all_pass"] = all_pass;
    return doc;
}

}  // namespace flowcot
