#include <cmath>
#include <limits>

#include <doctest.h>

#include "flowcot/verify.hpp"
#include "test_util.hpp"

using namespace flowcot;
using namespace flowcot::testutil;

TEST_CASE("fresh params: exact distribution is the geometric-termination closed form") {
    const PolicyParams params(2);
    const int max_len = 3;
    const auto dist = policy_distribution_exact(params, 0, max_len);

    double total = 0.0;
    for (const auto& [z, p] : dist) {
        const auto len = static_cast<int>(z.size());
        const double expect = len < max_len ? std::pow(1.0 / 3.0, len + 1)
                                            : std::pow(1.0 / 3.0, len);  // forced mass
        CHECK(p == doctest::Approx(expect).epsilon(1e-12));
        total += p;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(dist.size() == 15);
}

TEST_CASE("exact distribution normalizes for arbitrary params") {
    PolicyParams params(3);
    params.touch("0|").logits = {1.2, -0.7, 0.4, 2.0};
    params.touch("0|2").logits = {0.0, 3.0, -1.0, 0.5};
    const auto dist = policy_distribution_exact(params, 0, 4);
    double total = 0.0;
    for (const auto& [z, p] : dist) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("enumeration cap is enforced") {
    const PolicyParams params(3);
    CHECK_THROWS_AS(policy_distribution_exact(params, 0, 20, /*cap=*/10'000),
                    EnumerationCapError);
}

TEST_CASE("sampled distribution approaches the exact one") {
    PolicyParams params(2);
    params.touch("0|").logits = {0.8, -0.5, 0.3};
    const auto exact = policy_distribution_exact(params, 0, 3);
    const auto sampled = policy_distribution_sampled(params, 0, 3, 100'000, 17);
    CHECK(distance(exact, sampled, 100'000).tv <= 0.02);
}

TEST_CASE("distance: identical, disjoint, and hand-computed pairs") {
    const std::map<std::vector<int>, double> p = {{{0}, 0.5}, {{1}, 0.5}};
    const auto self = distance(p, p);
    CHECK(self.tv == 0.0);
    CHECK(self.kl == 0.0);
    CHECK(self.support_size == 2);

    const std::map<std::vector<int>, double> q_disjoint = {{{0, 0}, 1.0}};
    const auto far = distance({{{1}, 1.0}}, q_disjoint);
    CHECK(far.tv == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isinf(far.kl));

    const std::map<std::vector<int>, double> q = {{{0}, 0.75}, {{1}, 0.25}};
    const auto hand = distance(p, q);
    CHECK(hand.tv == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(hand.kl ==
          doctest::Approx(0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25))
              .epsilon(1e-12));
}

TEST_CASE("flow residual report: optimum near zero, perturbation strictly increases it") {
    const World world = small_world(121, 0.8);
    const Instance& inst = world.instances[0];
    const auto posterior = exact_posterior(world.model, inst.x, inst.y, 3);
    PolicyParams params = posterior_factorized_params(posterior, 0, 2);

    Trajectory traj;
    traj.instance_id = 0;
    traj.tokens = {1, 0, 1};
    traj.per_step_logprob.assign(4, 0.0);
    const auto rewards = exact_prefix_logrewards(
        world.model, inst.x, inst.y, make_sequence(traj.tokens, Role::Rationale), 1.0);

    const double at_opt = flow_residual_report(params, traj, rewards);
    CHECK(at_opt <= 1e-6);

    params.touch("0|1").logits[0] += 0.05;
    CHECK(flow_residual_report(params, traj, rewards) > at_opt + 1e-4);
}

TEST_CASE("flow residual report equals the max over recomputed residuals") {
    PolicyParams params(2);
    params.touch("0|").logits = {0.4, -0.1, 0.9};
    Trajectory traj;
    traj.tokens = {0, 1};
    traj.per_step_logprob.assign(3, 0.0);
    const std::vector<double> rewards = {-1.0, -2.2, -3.1};

    double expect = 0.0;
    for (const auto& r : subtb_residuals(params, traj, rewards))
        expect = std::max(expect, std::abs(r.residual));
    CHECK(flow_residual_report(params, traj, rewards) == expect);
    CHECK(expect > 0.0);
}

TEST_CASE("interpolation bound: lambda=1 has zero interpolation error") {
    const World world = small_world(122, 0.8);
    const Instance& inst = world.instances[0];
    const Sequence z = make_sequence({0, 1, 1, 0, 1}, Role::Rationale);
    const auto report = interp_bound_check(world.model, inst.x, inst.y, z, 1);
    CHECK(report.max_abs_error == 0.0);
    CHECK(report.all_pass);
}

TEST_CASE("interpolation bound: affine-reward world has zero error at every lambda") {
    const JointModel model = uniform_model(2, 1);
    const Sequence x = make_sequence({0}, Role::Question);
    const Sequence y = make_sequence({1}, Role::Answer);
    const Sequence z = make_sequence({0, 1, 0, 0, 1, 1}, Role::Rationale);
    for (int lambda : {2, 3, 8}) {
        const auto report = interp_bound_check(model, x, y, z, lambda);
        CHECK(report.max_abs_error <= 1e-12);
        CHECK(report.all_pass);
        CHECK(report.global_bound <= 1e-10);
    }
}

TEST_CASE("interpolation bound: sampled rationales at lambda=8 satisfy the per-index bound") {
    // length 9 keeps the final segment an exact anchor pair; short partial
    // segments concentrate curvature and routinely exceed the /8 constant
    const World world = small_world(101, 0.9);
    const Instance& inst = world.instances[0];
    for (std::uint64_t i = 0; i < 20; ++i) {
        Rng rng(stream_seed(7, "interp-unit", i));
        const auto z_tokens = world.model.sample_tokens(inst.x.tokens, 9, rng);
        const auto report = interp_bound_check(world.model, inst.x, inst.y,
                                        make_sequence(z_tokens, Role::Rationale), 8);
        CHECK(report.all_pass);
        CHECK(report.max_abs_error <= report.global_bound + 1e-12);
    }
}

TEST_CASE("gradcheck: zero-loss configuration gives ~0 analytically and numerically") {
    const World world = small_world(124, 0.8);
    const Instance& inst = world.instances[0];
    const auto posterior = exact_posterior(world.model, inst.x, inst.y, 3);
    const PolicyParams params = posterior_factorized_params(posterior, 0, 2);

    Trajectory traj;
    traj.instance_id = 0;
    traj.tokens = {0, 1};
    traj.per_step_logprob.assign(3, 0.0);
    const auto trace = compute_trace(world.model, inst.x, inst.y,
                                     make_sequence(traj.tokens, Role::Rationale), 1, 1.0);
    const auto loss = isubtb_loss(params, traj, trace);
    CHECK(loss.loss <= 1e-10);
    for (const auto& [key, grad] : loss.gradient)
        for (double g : grad) CHECK(std::abs(g) <= 1e-8);
}

TEST_CASE("gradcheck: random draws agree with finite differences at 1e-5") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const World world = small_world(stream_seed(seed, "gradcheck-world"), 0.9);
        const Instance& inst = world.instances[0];
        PolicyParams params(2);
        Rng rng(stream_seed(seed, "gradcheck-traj"));
        const auto traj = sample_rationale(params, 0, 1.0, 1, 4, rng);
        const auto trace = compute_trace(world.model, inst.x, inst.y,
                                         make_sequence(traj.tokens, Role::Rationale), 8, 1.0);
        CHECK(gradcheck(params, traj, trace, 1e-6) <= 1e-5);
    }
}

TEST_CASE("gradcheck truncation error shrinks like eps^2") {
    const World world = small_world(125, 0.9);
    const Instance& inst = world.instances[0];
    PolicyParams params(2);
    params.touch("0|").logits = {0.6, -0.4, 0.2};
    Rng rng(9);
    const auto traj = sample_rationale(params, 0, 1.0, 2, 4, rng);
    const auto trace = compute_trace(world.model, inst.x, inst.y,
                                     make_sequence(traj.tokens, Role::Rationale), 8, 1.0);
    const double coarse = gradcheck(params, traj, trace, 2e-3);
    const double fine = gradcheck(params, traj, trace, 1e-3);
    REQUIRE(fine > 0.0);
    // central differences are second order: halving eps cuts the error ~4x
    const double ratio = coarse / fine;
    CHECK(ratio > 2.0);
    CHECK(ratio < 8.0);
}

TEST_CASE("posterior_factorized_params realizes the target distribution exactly") {
    const World world = small_world(126, 0.7);
    const Instance& inst = world.instances[0];
    const auto posterior = exact_posterior(world.model, inst.x, inst.y, 3);
    const auto params = posterior_factorized_params(posterior, 0, 2);
    const auto realized = policy_distribution_exact(params, 0, 3);
    CHECK(distance(posterior, realized).tv <= 1e-9);
}
