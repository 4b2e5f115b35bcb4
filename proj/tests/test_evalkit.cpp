#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "evalkit/evalkit.hpp"

using namespace wm;

namespace {

// Scripted chunk source: entry j of call c carries value base + c/10 + j/1000,
// so any executed action identifies exactly which chunk index it came from.
class ScriptPolicy final : public RolloutPolicy {
  public:
    ScriptPolicy(int H, int K, double base = 0.0) : H_(H), K_(K), base_(base) {}
    void begin_episode(const WorldState&, uint64_t) override { calls_ = 0; }
    int horizon() const override { return H_; }
    int history_len() const override { return K_; }
    std::vector<double> plan(const WorldState&, const std::vector<double>& hist) override {
        hists_.push_back(hist);
        std::vector<double> chunk(static_cast<size_t>(H_) * wk::kActionDim);
        for (size_t j = 0; j < chunk.size(); ++j)
            chunk[j] = base_ + 0.1 * calls_ + 0.001 * static_cast<double>(j);
        ++calls_;
        return chunk;
    }
    std::vector<std::vector<double>> hists_;

  private:
    int H_, K_, calls_ = 0;
    double base_;
};

class ZeroPolicy final : public RolloutPolicy {
  public:
    explicit ZeroPolicy(int H = 4) : H_(H) {}
    void begin_episode(const WorldState&, uint64_t) override {}
    int horizon() const override { return H_; }
    int history_len() const override { return 1; }
    std::vector<double> plan(const WorldState&, const std::vector<double>&) override {
        return std::vector<double>(static_cast<size_t>(H_) * wk::kActionDim, 0.0);
    }

  private:
    int H_;
};

bool same_trajectory(const RolloutEpisode& a, const RolloutEpisode& b) {
    return a.states == b.states && a.actions == b.actions && a.success == b.success &&
           a.partial == b.partial && a.success_tick == b.success_tick && a.ticks == b.ticks;
}

WbcParams default_params() {
    Rng rng(424242);
    return sample_params(rng);
}

DiffusionPolicy tiny_diffusion(uint64_t seed) {
    TrainConfig c;
    c.seed = seed;
    c.diffusion_steps = 5;
    NormStats norm;
    norm.state_mean.assign(wk::kStateDim, 0.0);
    norm.state_std.assign(wk::kStateDim, 1.0);
    norm.action_mean.assign(wk::kActionDim, 0.0);
    norm.action_std.assign(wk::kActionDim, 1.0);
    std::vector<double> lo(wk::kActionDim, -0.3), hi(wk::kActionDim, 0.3);
    DiffusionPolicy pol = make_policy(c, wk::kStateDim, wk::kActionDim, norm, lo, hi);
    // Shrink the denoiser: rollout smoke tests only need the plumbing.
    Rng rng(seed + 1);
    pol.net = Mlpd({pol.chunk_dim() + pol.hist_dim() + 64, 32, 32, pol.chunk_dim()}, rng);
    return pol;
}

}  // namespace

TEST_CASE("wilson interval reproduces the published anchors") {
    auto ci = wilson_ci(49, 50);
    CHECK(ci.first == 89.5);
    CHECK(ci.second == 99.6);
    ci = wilson_ci(43, 50);
    CHECK(ci.first == 73.8);
    CHECK(ci.second == 93.0);
    ci = wilson_ci(0, 50);
    CHECK(ci.first == 0.0);
    CHECK(ci.second == 7.1);
    ci = wilson_ci(50, 50);
    CHECK(ci.first == 92.9);
    CHECK(ci.second == 100.0);
}

TEST_CASE("wilson interval stays ordered and rejects bad inputs") {
    for (int n : {1, 7, 50, 400})
        for (int s = 0; s <= n; s += std::max(1, n / 7)) {
            auto ci = wilson_ci(s, n);
            double p = 100.0 * s / n;
            CHECK(ci.first >= 0.0);
            CHECK(ci.first <= p + 1e-9);
            CHECK(ci.second >= p - 1e-9);
            CHECK(ci.second <= 100.0);
        }
    CHECK_THROWS_AS(wilson_ci(0, 0), std::invalid_argument);
    CHECK_THROWS_AS(wilson_ci(-1, 10), std::invalid_argument);
    CHECK_THROWS_AS(wilson_ci(11, 10), std::invalid_argument);
}

TEST_CASE("alpha one executes raw actions unmodified") {
    ScriptPolicy pol(4, 2);
    RolloutEpisode ep = rollout_sync(Task::Door, 5, 0.0, pol, 1.0);
    REQUIRE(ep.ticks > 8);
    for (int t = 0; t < 8; ++t) {
        int call = t / 4, idx = t % 4;
        for (int d = 0; d < wk::kActionDim; ++d) {
            double raw = 0.1 * call + 0.001 * (idx * wk::kActionDim + d);
            CHECK(ep.actions[t][d] == raw);
        }
    }
    for (int f : ep.chunk_first_index) CHECK(f == 0);
}

TEST_CASE("ema smoothing halves the first unit action") {
    ScriptPolicy pol(3, 1, 1.0);  // first chunk entry 0 has raw value 1.0
    RolloutEpisode ep = rollout_sync(Task::Door, 5, 0.0, pol, 0.5);
    CHECK(ep.actions[0][0] == 0.5);
    // and keeps folding: a1 = 0.5*raw1 + 0.5*0.5
    double raw1 = 1.0 + 0.001 * wk::kActionDim;
    CHECK(ep.actions[1][0] == doctest::Approx(0.5 * raw1 + 0.25).epsilon(1e-12));
}

TEST_CASE("ema smoothing of in-limit actions stays in limits") {
    WbcParams p = default_params();
    WbcRollout pol(Task::Door, p);
    RolloutEpisode ep = rollout_sync(Task::Door, 11, p.joint_noise_sigma, pol, 0.5);
    for (const auto& a : ep.actions) {
        CHECK(std::abs(a[0]) <= wk::kBaseVel[0] + 1e-12);
        CHECK(std::abs(a[1]) <= wk::kBaseVel[1] + 1e-12);
        CHECK(std::abs(a[2]) <= wk::kBaseVel[2] + 1e-12);
        for (int j = 3; j < 9; ++j) CHECK(std::abs(a[j]) <= wk::kJointVel + 1e-12);
        CHECK(a[9] >= 0.0);
        CHECK(a[9] <= 1.0);
        CHECK(a[10] >= 0.0);
        CHECK(a[10] <= 1.0);
    }
}

TEST_CASE("history windows repeat the first state then slide") {
    ScriptPolicy pol(2, 3);
    RolloutEpisode ep = rollout_sync(Task::Drawer, 9, 0.1, pol, 1.0);
    REQUIRE(pol.hists_.size() >= 3);
    const int sd = wk::kStateDim;
    // First plan: three copies of s0.
    for (int k = 0; k < 3; ++k)
        for (int d = 0; d < sd; ++d) CHECK(pol.hists_[0][k * sd + d] == ep.states[0][d]);
    // Second plan happens at tick 2: window is s0, s1, s2.
    for (int k = 0; k < 3; ++k)
        for (int d = 0; d < sd; ++d) CHECK(pol.hists_[1][k * sd + d] == ep.states[k][d]);
    // Third plan at tick 4: window is s2, s3, s4.
    for (int k = 0; k < 3; ++k)
        for (int d = 0; d < sd; ++d) CHECK(pol.hists_[2][k * sd + d] == ep.states[2 + k][d]);
}

TEST_CASE("wbc policy through the sync rollout equals the direct rollout bitwise") {
    for (uint64_t seed : {1u, 7u, 19u}) {
        for (Task task : {Task::Door, Task::Drawer, Task::Cupboard}) {
            Rng prng(mix_seed(seed, 3000));
            WbcParams p = sample_params(prng);
            Episode direct = rollout_wbc(task, seed, p);
            WbcRollout pol(task, p);
            RolloutEpisode via = rollout_sync(task, seed, p.joint_noise_sigma, pol, 1.0);
            REQUIRE(via.actions.size() == direct.actions.size());
            CHECK(via.actions == direct.actions);
            CHECK(via.states == direct.states);
            CHECK(via.success == direct.success);
            CHECK(via.partial == direct.partial);
            CHECK(via.success_tick == direct.success_tick);
        }
    }
}

TEST_CASE("zero latency async equals sync bitwise") {
    AsyncInferenceConfig cfg;
    cfg.latency = 0;

    SUBCASE("scripted policy") {
        for (double alpha : {1.0, 0.5}) {
            cfg.ema_alpha = alpha;
            ScriptPolicy p1(4, 2), p2(4, 2);
            RolloutEpisode s = rollout_sync(Task::Door, 3, 0.1, p1, alpha);
            RolloutEpisode a = rollout_async(Task::Door, 3, 0.1, p2, cfg);
            CHECK(same_trajectory(s, a));
            CHECK(a.chunk_first_index == s.chunk_first_index);
        }
    }
    SUBCASE("wbc policy") {
        WbcParams p = default_params();
        cfg.ema_alpha = 1.0;
        WbcRollout w1(Task::Drawer, p), w2(Task::Drawer, p);
        RolloutEpisode s = rollout_sync(Task::Drawer, 21, p.joint_noise_sigma, w1, 1.0);
        RolloutEpisode a = rollout_async(Task::Drawer, 21, p.joint_noise_sigma, w2, cfg);
        CHECK(same_trajectory(s, a));
    }
}

TEST_CASE("async inference idles first then switches at the latency index") {
    AsyncInferenceConfig cfg;
    cfg.latency = 3;
    cfg.ema_alpha = 1.0;
    ScriptPolicy pol(6, 1);
    RolloutEpisode ep = rollout_async(Task::Door, 13, 0.0, pol, cfg);
    REQUIRE(ep.chunk_first_index.size() >= 4);
    CHECK(ep.chunk_first_index[0] == 0);
    for (size_t i = 1; i < ep.chunk_first_index.size(); ++i) CHECK(ep.chunk_first_index[i] == 3);

    // Ticks 0..2 idle; tick 3 starts chunk 0 at index 0.
    for (int t = 0; t < 3; ++t)
        for (double v : ep.actions[t]) CHECK(v == 0.0);
    CHECK(ep.actions[3][0] == 0.0);  // call 0, entry 0
    CHECK(ep.actions[3][1] == 0.001);
    // Chunk 0 runs indices 0..5 over ticks 3..8; chunk 1 takes over at tick 9
    // with index 3.
    CHECK(ep.actions[8][0] == 0.001 * (5 * wk::kActionDim));
    CHECK(ep.actions[9][0] == 0.1 + 0.001 * (3 * wk::kActionDim));
    // Steady state never idles when the post-switch budget covers the latency.
    for (int t = 3; t < 30; ++t) {
        double sum = 0;
        for (double v : ep.actions[t]) sum += std::abs(v);
        CHECK(sum > 0.0);
    }
}

TEST_CASE("async rollouts are deterministic and validate latency") {
    WbcParams p = default_params();
    AsyncInferenceConfig cfg;
    cfg.latency = 0;  // horizon 1 policy admits only L=0
    cfg.ema_alpha = 0.5;
    WbcRollout w1(Task::Door, p), w2(Task::Door, p);
    RolloutEpisode a = rollout_async(Task::Door, 2, p.joint_noise_sigma, w1, cfg);
    RolloutEpisode b = rollout_async(Task::Door, 2, p.joint_noise_sigma, w2, cfg);
    CHECK(same_trajectory(a, b));

    ScriptPolicy sp(4, 1);
    AsyncInferenceConfig bad;
    bad.latency = 4;
    CHECK_THROWS_AS(rollout_async(Task::Door, 2, 0.1, sp, bad), std::invalid_argument);
    bad.latency = -1;
    CHECK_THROWS_AS(rollout_async(Task::Door, 2, 0.1, sp, bad), std::invalid_argument);
}

TEST_CASE("diffusion and idql adapters drive rollouts within action bounds") {
    DiffusionPolicy dp = tiny_diffusion(77);
    SUBCASE("diffusion") {
        DiffusionRollout r1(dp), r2(dp);
        RolloutEpisode a = rollout_sync(Task::Door, 31, 0.1, r1, 1.0);
        RolloutEpisode b = rollout_sync(Task::Door, 31, 0.1, r2, 1.0);
        CHECK(same_trajectory(a, b));
        CHECK(a.ticks > 0);
        for (const auto& act : a.actions)
            for (double v : act) CHECK(std::abs(v) <= 0.3 + 1e-12);
    }
    SUBCASE("idql") {
        TrainConfig c;
        c.seed = 11;
        c.K = 5;
        c.H = 16;
        QcNets nets = make_nets(c, dp.hist_dim(), dp.chunk_dim());
        IdqlRollout r1(dp, nets, 2), r2(dp, nets, 2);
        AsyncInferenceConfig cfg;
        cfg.latency = 3;
        RolloutEpisode a = rollout_async(Task::Drawer, 31, 0.1, r1, cfg);
        RolloutEpisode b = rollout_async(Task::Drawer, 31, 0.1, r2, cfg);
        CHECK(same_trajectory(a, b));
        REQUIRE(a.chunk_first_index.size() >= 2);
        CHECK(a.chunk_first_index[0] == 0);
        CHECK(a.chunk_first_index[1] == 3);
    }
}

TEST_CASE("evaluation seeds are namespaced away from data-collection streams") {
    std::set<uint64_t> seen;
    for (int i = 0; i < 200; ++i) seen.insert(eval_seed(1234, i));
    CHECK(seen.size() == 200);
    for (uint64_t k = 0; k < 400; ++k) CHECK(!seen.count(mix_seed(1234, k)));
}

TEST_CASE("evaluate reports the zero-success anchor with no time entry") {
    EvalParams ep;
    ep.n = 50;
    ep.seed_base = 7;
    ep.policy_id = "zero";
    EvalReport r = evaluate([] { return std::make_unique<ZeroPolicy>(); }, Task::Door, ep);
    CHECK(r.n == 50);
    CHECK(r.success_pct == 0.0);
    CHECK(r.partial_pct == 0.0);
    CHECK(r.ci_lo == 0.0);
    CHECK(r.ci_hi == 7.1);
    CHECK(!r.time_to_success_s.has_value());
    CHECK(r.task == "door");
    nlohmann::json j = report_to_json(r);
    CHECK(j["time_to_success_s"].is_null());
    CHECK(j["ci"][1] == 7.1);
    std::string row = report_csv_row(r);
    CHECK(row == "zero,door,50,0.0,0.0,0.0,7.1,,7");
}

TEST_CASE("evaluate cross-checks against manual rollouts and is byte-stable") {
    WbcParams p = default_params();
    EvalParams ep;
    ep.n = 12;
    ep.seed_base = 99;
    ep.init_sigma = p.joint_noise_sigma;
    ep.ema_alpha = 1.0;
    ep.policy_id = "wbc";
    auto factory = [&] { return std::make_unique<WbcRollout>(Task::Door, p); };
    EvalReport r1 = evaluate(factory, Task::Door, ep);
    EvalReport r2 = evaluate(factory, Task::Door, ep);
    CHECK(report_to_json(r1).dump() == report_to_json(r2).dump());
    CHECK(report_csv_row(r1) == report_csv_row(r2));

    int succ = 0, part = 0;
    double tsum = 0;
    for (int i = 0; i < ep.n; ++i) {
        WbcRollout pol(Task::Door, p);
        RolloutEpisode e =
            rollout_sync(Task::Door, eval_seed(ep.seed_base, i), ep.init_sigma, pol, 1.0);
        if (e.success) {
            ++succ;
            tsum += (e.success_tick + 1) * wk::kDt;
        }
        if (e.partial) ++part;
    }
    REQUIRE(succ > 0);
    CHECK(r1.success_pct == std::round(1000.0 * succ / ep.n) / 10.0);
    CHECK(r1.partial_pct == std::round(1000.0 * part / ep.n) / 10.0);
    auto ci = wilson_ci(succ, ep.n);
    CHECK(r1.ci_lo == ci.first);
    CHECK(r1.ci_hi == ci.second);
    REQUIRE(r1.time_to_success_s.has_value());
    CHECK(*r1.time_to_success_s == std::round(tsum / succ * 1000.0) / 1000.0);
    CHECK(report_csv_header() ==
          "policy,task,n,success_pct,partial_pct,ci_lo,ci_hi,time_to_success_s,seed_base");
}

TEST_CASE("evaluate rejects a non-positive episode count") {
    EvalParams ep;
    ep.n = 0;
    CHECK_THROWS_AS(evaluate([] { return std::make_unique<ZeroPolicy>(); }, Task::Door, ep),
                    std::invalid_argument);
}
