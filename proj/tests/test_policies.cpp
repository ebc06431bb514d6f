#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "common.hpp"
#include "vomps/policies.hpp"

using namespace vomps;
namespace tc = two_circle_ids;

namespace {

using testing::random_gaussian;

State cart_state(Rng& rng) { return testing::random_cart_state(rng); }

double normal_pdf(double x, double m, double sd) {
    return std::exp(-0.5 * (x - m) * (x - m) / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

int check_log_prob_grad(Policy policy, const State& s, const Action& a) {
    const testing::FdReport rep = testing::log_prob_fd_check(std::move(policy), s, a);
    CHECK(rep.failed == 0);
    return rep.checked;
}

}  // namespace

TEST_CASE("tabular softmax sampling") {
    const TabularMdp mdp = two_circle();
    SUBCASE("saturated logits always pick the dominant action") {
        TabularSoftmaxPolicy pi(mdp);
        pi.params()[mdp.sa_index(tc::A, 0)] = 50.0;
        pi.params()[mdp.sa_index(tc::A, 1)] = -50.0;
        const Policy p = pi;
        Rng rng(1);
        for (int i = 0; i < 10000; ++i) CHECK(sample_action(p, State{tc::A, {}}, rng).index == 0);
    }
    SUBCASE("uniform logits give binomial frequencies") {
        const Policy p = TabularSoftmaxPolicy(mdp);
        Rng rng(2);
        const int n = 100000;
        int zeros = 0;
        for (int i = 0; i < n; ++i) zeros += sample_action(p, State{tc::A, {}}, rng).index == 0;
        CHECK(std::abs(zeros - n / 2.0) <= 3.0 * std::sqrt(n * 0.25));
        for (int i = 0; i < 100; ++i) CHECK(sample_action(p, State{tc::B, {}}, rng).index == 0);
    }
    SUBCASE("probabilities and matrix agree") {
        TabularSoftmaxPolicy pi(mdp);
        pi.params()[0] = 1.0;
        const Vec probs = pi.probabilities(tc::A);
        CHECK(probs[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)));
        CHECK(pi.matrix()(tc::A, 0) == probs[0]);
        CHECK(greedy_action(Policy(pi), State{tc::A, {}}).index == 0);
    }
    SUBCASE("very large logits stay finite") {
        TabularSoftmaxPolicy pi(mdp);
        pi.params()[0] = 1000.0;
        const Vec probs = pi.probabilities(tc::A);
        CHECK(probs[0] == 1.0);
        CHECK(std::isfinite(log_prob(Policy(pi), State{tc::A, {}}, Action{1, {}})));
    }
}

TEST_CASE("gaussian sampling") {
    Rng init(3);
    const MlpParams net = MlpParams::initialize(MlpShape{4, {64, 64}, 1}, init);
    const Policy p = GaussianMlpPolicy(net, Vec{0.5});
    Rng rng(4);
    const State s{0, {0.01, -0.02, 0.03, 0.04}};
    CHECK(std::get<GaussianMlpPolicy>(p).mean(s.features) == Vec{0.0});
    const int n = 100000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
        const double a = sample_action(p, s, rng).values[0];
        REQUIRE(a >= -1.0);
        REQUIRE(a <= 1.0);
        mean += a / n;
    }
    CHECK(std::abs(mean) <= 3.0 * 0.5 / std::sqrt(n));
    CHECK(greedy_action(p, s).values == Vec{0.0});
}

TEST_CASE("log_prob_grad") {
    SUBCASE("uniform softmax, two actions") {
        const TabularMdp mdp = two_circle();
        const Policy p = TabularSoftmaxPolicy(mdp);
        const Vec g = log_prob_grad(p, State{tc::A, {}}, Action{0, {}});
        CHECK(g[mdp.sa_index(tc::A, 0)] == 0.5);
        CHECK(g[mdp.sa_index(tc::A, 1)] == -0.5);
        for (std::size_t i = 2; i < g.size(); ++i) CHECK(g[i] == 0.0);
        // Single-action states have zero score.
        for (double x : log_prob_grad(p, State{tc::B, {}}, Action{0, {}})) CHECK(x == 0.0);
    }
    SUBCASE("gaussian score vanishes at the mean") {
        Rng rng(5);
        const GaussianMlpPolicy g = random_gaussian(rng, 0.3);
        const State s = cart_state(rng);
        const Vec g0 = log_prob_grad(Policy(g), s, Action{0, g.mean(s.features)});
        CHECK(norm_inf(g0) == 0.0);
    }
    SUBCASE("softmax matches finite differences") {
        Rng rng(6);
        const TabularMdp mdp = two_circle();
        int checked = 0;
        for (int t = 0; t < 50; ++t) {
            TabularSoftmaxPolicy pi(mdp);
            for (double& x : pi.params()) x = rng.uniform(-3.0, 3.0);
            checked += check_log_prob_grad(pi, State{tc::A, {}}, Action{rng.uniform_index(2), {}});
        }
        CHECK(checked == 50 * 5);
    }
    SUBCASE("gaussian matches finite differences") {
        Rng rng(7);
        int checked = 0;
        for (int t = 0; t < 30; ++t) {
            const GaussianMlpPolicy g = random_gaussian(rng, 0.5, rng.uniform(0.2, 1.0));
            checked += check_log_prob_grad(g, cart_state(rng), Action{0, {rng.uniform(-1.0, 1.0)}});
        }
        CHECK(checked > 30 * 300);
    }
    SUBCASE("log_prob is the Gaussian log density of tanh(mlp)") {
        Rng rng(8);
        const GaussianMlpPolicy g = random_gaussian(rng, 0.4, 0.3);
        const State s = cart_state(rng);
        const double m = std::tanh(mlp_forward(g.mean_net(), s.features)[0]);
        CHECK(g.mean(s.features)[0] == m);
        CHECK(std::exp(log_prob(Policy(g), s, Action{0, {0.2}})) == doctest::Approx(normal_pdf(0.2, m, 0.3)));
    }
}

TEST_CASE("importance ratio") {
    const TabularMdp mdp = two_circle();
    const BehaviorPolicy mu = BehaviorPolicy::uniform(mdp);
    SUBCASE("pi = mu") {
        CHECK(importance_ratio(TabularSoftmaxPolicy(mdp), mu, State{tc::A, {}}, Action{1, {}}, 10.0) == 1.0);
    }
    SUBCASE("tabular 0.8 over 0.5") {
        TabularSoftmaxPolicy pi(mdp);
        pi.params()[mdp.sa_index(tc::A, 0)] = std::log(0.8);
        pi.params()[mdp.sa_index(tc::A, 1)] = std::log(0.2);
        CHECK(importance_ratio(pi, mu, State{tc::A, {}}, Action{0, {}}, 10.0) == doctest::Approx(1.6));
    }
    SUBCASE("gaussian over uniform box") {
        Rng rng(9);
        const GaussianMlpPolicy g = random_gaussian(rng, 0.3, 0.5);
        const BehaviorPolicy box(BehaviorPolicy::Box{});
        const State s = cart_state(rng);
        const double m = g.mean(s.features)[0];
        for (double a : {-0.9, -0.1, 0.0, 0.4, 1.0}) {
            const double expected = std::min(normal_pdf(a, m, 0.5) / 0.5, 10.0);
            CHECK(importance_ratio(g, box, s, Action{0, {a}}, 10.0) == doctest::Approx(expected).epsilon(1e-12));
        }
        CHECK(box.density(s, Action{0, {0.3}}) == 0.5);
        CHECK(box.density(s, Action{0, {1.5}}) == 0.0);
    }
    SUBCASE("clipping at rho_max") {
        Rng rng(10);
        const GaussianMlpPolicy g = random_gaussian(rng, 0.0, 0.01);
        const BehaviorPolicy box(BehaviorPolicy::Box{});
        CHECK(importance_ratio(g, box, cart_state(rng), Action{0, {0.0}}, 10.0) == 10.0);
    }
    SUBCASE("zero behavior density is an error") {
        const BehaviorPolicy box(BehaviorPolicy::Box{});
        Rng rng(11);
        CHECK_THROWS(importance_ratio(random_gaussian(rng, 0.1), box, cart_state(rng), Action{0, {2.0}}, 10.0));
    }
    SUBCASE("behavior samples cover the box uniformly") {
        const BehaviorPolicy box(BehaviorPolicy::Box{});
        Rng rng(12);
        double m = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const double a = box.sample(State{}, rng).values[0];
            REQUIRE(std::abs(a) <= 1.0);
            m += a / n;
        }
        CHECK(std::abs(m) <= 3.0 * std::sqrt(1.0 / 3.0 / n));
    }
}

TEST_CASE("softplus helpers") {
    CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(softplus(800.0) == 800.0);
    CHECK(softplus(-800.0) >= 0.0);
    CHECK(sigmoid(0.0) == 0.5);
    for (double y : {1e-3, 0.5, 1.0, 7.0, 50.0}) CHECK(softplus(inverse_softplus(y)) == doctest::Approx(y));
}

TEST_CASE("value and ratio functions") {
    SUBCASE("tables") {
        ValueFn v = ValueFn::table(4, 2.0);
        CHECK(v.value(State{3, {}}) == 2.0);
        const Vec g = v.grad(State{1, {}});
        CHECK(g == Vec{0.0, 1.0, 0.0, 0.0});
        RatioFn c = RatioFn::table(4);
        CHECK(c.value(State{2, {}}) == doctest::Approx(1.0).epsilon(1e-14));
        const Vec gc = c.grad(State{2, {}});
        CHECK(gc[2] == doctest::Approx(sigmoid(inverse_softplus(1.0))));
        CHECK(gc[0] == 0.0);
    }
    SUBCASE("constant ratio has no parameters") {
        const RatioFn c = RatioFn::constant(1.0);
        CHECK(c.is_constant());
        CHECK(c.value(State{0, {1.0}}) == 1.0);
        CHECK(c.grad(State{0, {1.0}}).empty());
        CHECK(c.params().empty());
    }
    SUBCASE("network ratio starts at init and has a finite-difference gradient") {
        Rng rng(13);
        RatioFn c = RatioFn::network(MlpParams::initialize(MlpShape{4, {8}, 1}, rng), 1.0);
        const State s = cart_state(rng);
        CHECK(c.value(s) == doctest::Approx(1.0).epsilon(1e-14));
        for (double& x : c.params()) x += 0.3 * rng.uniform(-1.0, 1.0);
        const Vec g = c.grad(s);
        auto p = c.params();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p[i];
            p[i] = orig + 1e-6;
            const double fp = c.value(s);
            p[i] = orig - 1e-6;
            const double fm = c.value(s);
            p[i] = orig;
            CHECK(std::abs(g[i] - (fp - fm) / 2e-6) <= 1e-4 * std::max(1.0, std::abs(g[i])));
        }
    }
    SUBCASE("network value gradient") {
        Rng rng(14);
        MlpParams net = MlpParams::initialize(MlpShape{4, {8}, 1}, rng);
        for (double& x : net.values()) x += 0.2 * rng.uniform(-1.0, 1.0);
        ValueFn v = ValueFn::network(net);
        const State s = cart_state(rng);
        CHECK(v.value(s) == mlp_forward(net, s.features)[0]);
        CHECK(v.grad(s) == mlp_grad(net, s.features, Vec{1.0}));
    }
}

TEST_CASE("checkpoint round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "vomps_policy_test";
    std::filesystem::create_directories(dir);
    SUBCASE("gaussian") {
        Rng rng(15);
        const GaussianMlpPolicy g = random_gaussian(rng, 0.7, 0.4);
        const auto path = dir / "g.ckpt";
        write_named_arrays(path, policy_snapshot(g));
        const Policy back = policy_from_snapshot(read_named_arrays(path));
        const auto& gb = std::get<GaussianMlpPolicy>(back);
        const auto a = g.params();
        const auto b = gb.params();
        CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
        CHECK(gb.sigma() == g.sigma());
        const State s = cart_state(rng);
        CHECK(log_prob(back, s, Action{0, {0.3}}) == log_prob(g, s, Action{0, {0.3}}));
    }
    SUBCASE("tabular") {
        const TabularMdp mdp = two_circle();
        TabularSoftmaxPolicy pi(mdp);
        pi.params()[0] = 0.123456789012345678;
        const auto path = dir / "t.ckpt";
        write_named_arrays(path, policy_snapshot(pi));
        const Policy back = policy_from_snapshot(read_named_arrays(path));
        const auto& tb = std::get<TabularSoftmaxPolicy>(back);
        CHECK(tb.params()[0] == pi.params()[0]);
        CHECK(tb.offsets() == pi.offsets());
    }
    SUBCASE("corrupt files are rejected") {
        const auto path = dir / "bad.ckpt";
        std::ofstream(path) << "not a checkpoint";
        CHECK_THROWS(read_named_arrays(path));
        CHECK_THROWS(read_named_arrays(dir / "missing.ckpt"));
    }
    std::filesystem::remove_all(dir);
}
