#include <benchmark/benchmark.h>

#include "flowcot/objective.hpp"
#include "flowcot/reward.hpp"
#include "flowcot/trainer.hpp"
#include "flowcot/toyworld.hpp"

using namespace flowcot;

namespace {

World bench_world(int max_rationale_len = 4) {
    WorldSpec spec;
    spec.vocab_size = 3;
    spec.order = 1;
    spec.concentration = 0.5;
    spec.num_instances = 1;
    spec.max_rationale_len = max_rationale_len;
    return make_world(spec, 7);
}

void bm_compute_trace(benchmark::State& state) {
    const World world = bench_world(12);
    const Instance& inst = world.instances[0];
    Rng rng(1);
    const Sequence z =
        make_sequence(world.model.sample_tokens(inst.x.tokens, 12, rng), Role::Rationale);
    for (auto _ : state)
        benchmark::DoNotOptimize(compute_trace(world.model, inst.x, inst.y, z,
                                               static_cast<int>(state.range(0)), 0.85));
}
BENCHMARK(bm_compute_trace)->Arg(1)->Arg(8);

void bm_isubtb_loss(benchmark::State& state) {
    const World world = bench_world(static_cast<int>(state.range(0)));
    const Instance& inst = world.instances[0];
    PolicyParams params(3);
    Rng rng(2);
    const Trajectory traj =
        sample_rationale(params, 0, 1.0, 1, static_cast<int>(state.range(0)), rng);
    const auto trace = compute_trace(world.model, inst.x, inst.y,
                                     make_sequence(traj.tokens, Role::Rationale), 8, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(isubtb_loss(params, traj, trace));
}
BENCHMARK(bm_isubtb_loss)->Arg(4)->Arg(12);

void bm_exact_posterior(benchmark::State& state) {
    const World world = bench_world();
    const Instance& inst = world.instances[0];
    for (auto _ : state)
        benchmark::DoNotOptimize(exact_posterior(world.model, inst.x, inst.y,
                                                 static_cast<int>(state.range(0))));
}
BENCHMARK(bm_exact_posterior)->Arg(4)->Arg(6);

void bm_train_step(benchmark::State& state) {
    const World world = bench_world();
    TrainConfig cfg;
    cfg.steps = 1;
    for (auto _ : state) benchmark::DoNotOptimize(train(world, cfg));
}
BENCHMARK(bm_train_step);

}  // namespace

BENCHMARK_MAIN();
