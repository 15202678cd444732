#include <cmath>

#include <doctest.h>

#include "flowcot/objective.hpp"
#include "flowcot/verify.hpp"
#include "test_util.hpp"

using namespace flowcot;
using namespace flowcot::testutil;

namespace {

Trajectory make_traj(std::vector<int> tokens, int instance_id = 0) {
    Trajectory traj;
    traj.instance_id = instance_id;
    traj.tokens = std::move(tokens);
    traj.per_step_logprob.assign(traj.tokens.size() + 1, 0.0);
    return traj;
}

}  // namespace

TEST_CASE("posterior-factorized policy with exact rewards has zero residuals") {
    const World world = small_world(61, 0.8);
    const Instance& inst = world.instances[0];
    const auto posterior = exact_posterior(world.model, inst.x, inst.y, 3);
    const PolicyParams params = posterior_factorized_params(posterior, 0, 2);

    for (const auto& tokens :
         {std::vector<int>{0, 1, 1}, std::vector<int>{1, 0, 0}, std::vector<int>{0, 0}}) {
        const auto traj = make_traj(tokens);
        const auto rewards = exact_prefix_logrewards(
            world.model, inst.x, inst.y, make_sequence(tokens, Role::Rationale), 1.0);
        for (const auto& r : subtb_residuals(params, traj, rewards))
            CHECK(std::abs(r.residual) < 1e-9);
    }
}

TEST_CASE("n=1 residual matches the five-term formula evaluated by hand") {
    PolicyParams params(2);
    params.touch("0|").logits = {0.3, -0.8, 0.5};
    params.touch("0|1").logits = {-0.1, 0.2, 0.7};
    const auto traj = make_traj({1});
    const std::vector<double> log_reward = {-2.5, -3.1};

    const auto residuals = subtb_residuals(params, traj, log_reward);
    REQUIRE(residuals.size() == 1);
    CHECK(residuals[0].i == 0);
    CHECK(residuals[0].j == 1);

    const auto lp0 = params.action_logprobs(0, {}, 1.0);
    const std::vector<int> p1 = {1};
    const auto lp1 = params.action_logprobs(0, p1, 1.0);
    const double expect = log_reward[0] + lp0[1] + lp1[2] - log_reward[1] - lp0[2];
    CHECK(residuals[0].residual == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("residuals are invariant to a constant shift of all log-rewards") {
    PolicyParams params(2);
    params.touch("0|").logits = {1.0, -0.3, 0.2};
    const auto traj = make_traj({0, 1, 0});
    const std::vector<double> base = {-1.0, -2.5, -2.0, -4.0};
    std::vector<double> shifted = base;
    for (double& r : shifted) r += 7.25;

    const auto a = subtb_residuals(params, traj, base);
    const auto b = subtb_residuals(params, traj, shifted);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k)
        CHECK(a[k].residual == doctest::Approx(b[k].residual).epsilon(1e-12));
}

TEST_CASE("residual count is n(n+1)/2") {
    const PolicyParams params(2);
    for (int n = 0; n <= 5; ++n) {
        std::vector<int> tokens(static_cast<std::size_t>(n), 0);
        const std::vector<double> rewards(static_cast<std::size_t>(n) + 1, -1.0);
        CHECK(subtb_residuals(params, make_traj(tokens), rewards).size() ==
              static_cast<std::size_t>(n) * (n + 1) / 2);
    }
}

TEST_CASE("reward length mismatch is a hard error") {
    const PolicyParams params(2);
    const std::vector<double> short_rewards = {-1.0, -2.0};
    CHECK_THROWS_AS(subtb_residuals(params, make_traj({0, 1}), short_rewards), DataError);
    CHECK_THROWS_AS(subtb_loss(params, make_traj({0, 1}), short_rewards), DataError);
}

TEST_CASE("subtb_loss equals the sum of squared residuals") {
    PolicyParams params(2);
    params.touch("0|").logits = {0.4, 0.1, -0.6};
    params.touch("0|0").logits = {-0.2, 0.9, 0.3};
    const auto traj = make_traj({0, 1});
    const std::vector<double> rewards = {-1.5, -2.25, -3.5};

    double expect = 0.0;
    for (const auto& r : subtb_residuals(params, traj, rewards)) expect += r.residual * r.residual;
    CHECK(subtb_loss(params, traj, rewards).loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("zero-residual construction: loss ~0 and vanishing gradient") {
    const World world = small_world(62, 0.7);
    const Instance& inst = world.instances[0];
    const auto posterior = exact_posterior(world.model, inst.x, inst.y, 3);
    const PolicyParams params = posterior_factorized_params(posterior, 0, 2);

    const auto traj = make_traj({1, 0, 1});
    const auto trace = compute_trace(world.model, inst.x, inst.y,
                                     make_sequence(traj.tokens, Role::Rationale), 1, 1.0);
    const auto result = isubtb_loss(params, traj, trace);
    CHECK(result.loss <= 1e-10);
    for (const auto& [key, grad] : result.gradient)
        for (double g : grad) CHECK(std::abs(g) < 1e-8);
}

TEST_CASE("lambda=1 ISubTB equals exact-reward SubTB") {
    const World world = small_world(63, 1.1);
    const Instance& inst = world.instances[0];
    PolicyParams params(2);
    params.touch("0|").logits = {0.5, -0.2, 0.1};

    const auto traj = make_traj({0, 1, 1, 0});
    const Sequence z = make_sequence(traj.tokens, Role::Rationale);
    const auto trace = compute_trace(world.model, inst.x, inst.y, z, 1, 1.0);
    const auto exact = exact_prefix_logrewards(world.model, inst.x, inst.y, z, 1.0);

    const auto via_trace = isubtb_loss(params, traj, trace);
    const auto via_exact = subtb_loss(params, traj, exact);
    CHECK(via_trace.loss == doctest::Approx(via_exact.loss).epsilon(1e-9));
    CHECK(via_trace.gradient == via_exact.gradient);
}

TEST_CASE("isubtb gradient matches central finite differences") {
    const World world = small_world(64, 0.9);
    const Instance& inst = world.instances[0];
    PolicyParams params(2);
    Rng rng(11);
    const auto traj = sample_rationale(params, 0, 1.0, 1, 4, rng);
    const auto trace = compute_trace(world.model, inst.x, inst.y,
                                     make_sequence(traj.tokens, Role::Rationale), 8, 1.0);

    const auto analytic = isubtb_loss(params, traj, trace);
    const double eps = 1e-6;
    for (const auto& [key, grad] : analytic.gradient) {
        for (std::size_t a = 0; a < grad.size(); ++a) {
            PolicyParams perturbed = params;
            perturbed.touch(key).logits[a] += eps;
            const double up = isubtb_loss(perturbed, traj, trace).loss;
            perturbed.touch(key).logits[a] -= 2.0 * eps;
            const double down = isubtb_loss(perturbed, traj, trace).loss;
            const double numeric = (up - down) / (2.0 * eps);
            const double diff = std::abs(grad[a] - numeric);
            const double scale = std::max(std::abs(grad[a]), std::abs(numeric));
            // relative error where the gradient is meaningful, absolute where it
            // vanishes and the central difference is pure cancellation noise
            CHECK((scale > 1e-6 ? diff / scale : diff) <= 1e-5);
        }
    }
}

TEST_CASE("geometric pair weighting reweights the squared residuals") {
    PolicyParams params(2);
    params.touch("0|").logits = {0.2, -0.4, 0.6};
    const auto traj = make_traj({1, 0, 1});
    const std::vector<double> rewards = {-1.0, -2.0, -2.5, -4.5};

    const double gamma = 0.5;
    double expect = 0.0;
    for (const auto& r : subtb_residuals(params, traj, rewards))
        expect += std::pow(gamma, r.j - r.i - 1) * r.residual * r.residual;
    CHECK(subtb_loss(params, traj, rewards, gamma).loss ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK(subtb_loss(params, traj, rewards, 1.0).loss ==
          subtb_loss(params, traj, rewards).loss);
}

TEST_CASE("delta schedule hits 1.5 / 1.25 / 1.0 at steps 0 / 25 / >= 50") {
    CHECK(delta_schedule(0, 1.5, 1.0, 50) == 1.5);
    CHECK(delta_schedule(25, 1.5, 1.0, 50) == 1.25);
    CHECK(delta_schedule(50, 1.5, 1.0, 50) == 1.0);
    CHECK(delta_schedule(5000, 1.5, 1.0, 50) == 1.0);
    CHECK_THROWS_AS(delta_schedule(-1, 1.5, 1.0, 50), DataError);
    CHECK_THROWS_AS(delta_schedule(0, 1.0, 1.5, 50), DataError);
}

TEST_CASE("filter: worked thresholds at s=0 with reference -10") {
    const std::vector<double> rewards = {-12.0, -16.0};
    const auto decisions = filter_candidates(rewards, -10.0, 0, 1.5, 1.0, 50);
    REQUIRE(decisions.size() == 2);
    CHECK(decisions[0].delta == 1.5);
    CHECK(decisions[0].accepted);        // -12 > -15
    CHECK_FALSE(decisions[1].accepted);  // -16 < -15
}

TEST_CASE("filter: equality rejects under the strict inequality") {
    const std::vector<double> rewards = {-10.0};
    const auto decisions = filter_candidates(rewards, -10.0, 50, 1.5, 1.0, 50);
    CHECK(decisions[0].delta == 1.0);
    CHECK_FALSE(decisions[0].accepted);
}

TEST_CASE("filter: candidates beating the reference are accepted at every step") {
    const std::vector<double> rewards = {-9.5};
    for (int s : {0, 10, 25, 50, 500})
        CHECK(filter_candidates(rewards, -10.0, s, 1.5, 1.0, 50)[0].accepted);
}

TEST_CASE("filter accept set is invariant under positive log-reward scaling") {
    const std::vector<double> rewards = {-12.0, -14.9, -15.1, -16.0, -3.0};
    for (double c : {0.25, 2.0, 13.7}) {
        std::vector<double> scaled = rewards;
        for (double& r : scaled) r *= c;
        const auto base = filter_candidates(rewards, -10.0, 0, 1.5, 1.0, 50);
        const auto alt = filter_candidates(scaled, -10.0 * c, 0, 1.5, 1.0, 50);
        for (std::size_t i = 0; i < base.size(); ++i)
            CHECK(base[i].accepted == alt[i].accepted);
    }
}

TEST_CASE("filter rejects a non-negative reference log-reward") {
    const std::vector<double> rewards = {-1.0};
    CHECK_THROWS_AS(filter_candidates(rewards, 0.0, 0, 1.5, 1.0, 50), DataError);
    CHECK_THROWS_AS(filter_candidates(rewards, 2.0, 0, 1.5, 1.0, 50), DataError);
}

namespace {

std::vector<Candidate> sample_candidates_for_test(const World& world, int count,
                                                  std::uint64_t seed) {
    const Instance& inst = world.instances[0];
    PolicyParams params(2);
    std::vector<Candidate> out;
    for (int i = 0; i < count; ++i) {
        Rng rng(stream_seed(seed, "objective-test", static_cast<std::uint64_t>(i)));
        Candidate c;
        c.trajectory = sample_rationale(params, 0, 1.0, 1, 4, rng);
        c.trace = compute_trace(world.model, inst.x, inst.y,
                                make_sequence(c.trajectory.tokens, Role::Rationale), 8, 1.0);
        c.final_logreward = c.trace.interp_logreward.back();
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

TEST_CASE("rgfn: all rejected gives zero loss, empty gradient, zero count") {
    const World world = small_world(65, 0.8);
    const auto candidates = sample_candidates_for_test(world, 3, 1);
    std::vector<FilterDecision> decisions(candidates.size());
    const PolicyParams params(2);
    const auto result = rgfn_step_loss(params, candidates, decisions);
    CHECK(result.loss == 0.0);
    CHECK(result.gradient.empty());
    CHECK(result.accept_count == 0);
}

TEST_CASE("rgfn: a single accepted candidate reproduces its own isubtb loss") {
    const World world = small_world(66, 0.8);
    const auto candidates = sample_candidates_for_test(world, 3, 2);
    std::vector<FilterDecision> decisions(candidates.size());
    decisions[1].accepted = true;
    const PolicyParams params(2);

    const auto result = rgfn_step_loss(params, candidates, decisions);
    const auto single = isubtb_loss(params, candidates[1].trajectory, candidates[1].trace);
    CHECK(result.accept_count == 1);
    CHECK(result.loss == single.loss);
    CHECK(result.gradient == single.gradient);
}

TEST_CASE("rgfn: two accepted of three sum their losses; rejected leave no trace") {
    const World world = small_world(67, 0.8);
    const auto candidates = sample_candidates_for_test(world, 3, 3);
    std::vector<FilterDecision> decisions(candidates.size());
    decisions[0].accepted = true;
    decisions[2].accepted = true;
    const PolicyParams params(2);

    const auto result = rgfn_step_loss(params, candidates, decisions);
    const auto a = isubtb_loss(params, candidates[0].trajectory, candidates[0].trace);
    const auto b = isubtb_loss(params, candidates[2].trajectory, candidates[2].trace);
    CHECK(result.accept_count == 2);
    CHECK(result.loss == doctest::Approx(a.loss + b.loss).epsilon(1e-12));

    // deleting the rejected candidate gives a bit-identical gradient
    const std::vector<Candidate> kept = {candidates[0], candidates[2]};
    std::vector<FilterDecision> kept_decisions(2);
    kept_decisions[0].accepted = true;
    kept_decisions[1].accepted = true;
    const auto recomputed = rgfn_step_loss(params, kept, kept_decisions);
    CHECK(result.loss == recomputed.loss);
    CHECK(result.gradient == recomputed.gradient);
}

TEST_CASE("gradient merging is order-independent") {
    const World world = small_world(68, 0.8);
    const auto candidates = sample_candidates_for_test(world, 2, 4);
    const PolicyParams params(2);
    const auto a = isubtb_loss(params, candidates[0].trajectory, candidates[0].trace);
    const auto b = isubtb_loss(params, candidates[1].trajectory, candidates[1].trace);

    GradientTable ab, ba;
    merge_gradient(ab, a.gradient);
    merge_gradient(ab, b.gradient);
    merge_gradient(ba, b.gradient);
    merge_gradient(ba, a.gradient);
    CHECK(ab == ba);
}
