#pragma once

// Policy evaluation in the planar world: synchronous and latency-modeled
// asynchronous rollouts with EMA action smoothing, Wilson-interval success
// metrics, and deterministic JSON/CSV report emission.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "momaworld/world.hpp"
#include "qcrl/qcrl.hpp"
#include "wbcgen/wbc.hpp"

namespace wm {

// Wilson score interval for a binomial proportion, as percentages rounded to
// 0.1. Throws std::invalid_argument on n <= 0 or successes outside [0, n].
std::pair<double, double> wilson_ci(int successes, int n, double z = 1.96);

// Uniform action-provider contract. A policy plans a chunk of horizon()
// actions from a history of history_len() raw states (oldest first, ending at
// the current state); the rollout driver owns execution and smoothing.
class RolloutPolicy {
  public:
    virtual ~RolloutPolicy() = default;
    virtual void begin_episode(const WorldState& w, uint64_t episode_seed) = 0;
    virtual int horizon() const = 0;
    virtual int history_len() const = 0;
    virtual std::vector<double> plan(const WorldState& w, const std::vector<double>& hist) = 0;
};

// Scripted-controller adapter: one-action chunks, stage machine advanced at
// every plan call, exactly as the data-collection rollout does.
class WbcRollout final : public RolloutPolicy {
  public:
    WbcRollout(Task task, const WbcParams& p) : task_(task), p_(p), m_(make_machine(task)) {}
    // Resampling mode: draws fresh controller params from the episode seed,
    // mirroring the per-episode randomization used during data collection.
    explicit WbcRollout(Task task) : task_(task), m_(make_machine(task)), resample_(true) {}
    void begin_episode(const WorldState&, uint64_t episode_seed) override {
        if (resample_) {
            Rng r(mix_seed(episode_seed, 0x77626370ULL));
            p_ = sample_params(r);
        }
        m_ = make_machine(task_);
    }
    int horizon() const override { return 1; }
    int history_len() const override { return 1; }
    std::vector<double> plan(const WorldState& w, const std::vector<double>&) override {
        advance_stage(m_, w, p_);
        return wbc_action(w, m_, p_);
    }

  private:
    Task task_;
    WbcParams p_;
    StageMachine m_;
    bool resample_ = false;
};

// Diffusion-policy adapter; holds its own copy so parallel evaluation workers
// never share mutable state. The per-episode RNG is derived from the episode
// seed, so rollouts are reproducible.
class DiffusionRollout final : public RolloutPolicy {
  public:
    explicit DiffusionRollout(const DiffusionPolicy& pol) : pol_(pol), rng_(0) {}
    void begin_episode(const WorldState&, uint64_t episode_seed) override {
        rng_ = Rng(mix_seed(episode_seed, 101));
    }
    int horizon() const override { return pol_.H; }
    int history_len() const override { return pol_.K; }
    std::vector<double> plan(const WorldState&, const std::vector<double>& hist) override {
        return diffusion_sample(pol_, hist, rng_);
    }

  private:
    DiffusionPolicy pol_;
    Rng rng_;
};

// Best-of-N selection against the critic at every chunk boundary.
class IdqlRollout final : public RolloutPolicy {
  public:
    IdqlRollout(const DiffusionPolicy& pol, const QcNets& nets, int n_a)
        : pol_(pol), nets_(nets), n_a_(n_a), rng_(0) {}
    void begin_episode(const WorldState&, uint64_t episode_seed) override {
        rng_ = Rng(mix_seed(episode_seed, 101));
    }
    int horizon() const override { return pol_.H; }
    int history_len() const override { return pol_.K; }
    std::vector<double> plan(const WorldState&, const std::vector<double>& hist) override {
        return idql_select(pol_, nets_, hist, n_a_, rng_);
    }

  private:
    DiffusionPolicy pol_;
    QcNets nets_;
    int n_a_;
    Rng rng_;
};

struct RolloutEpisode {
    std::vector<std::vector<double>> states;   // T+1 raw states
    std::vector<std::vector<double>> actions;  // executed (post-EMA) actions
    std::vector<int> chunk_first_index;        // execution start index per planned chunk
    bool success = false;
    bool partial = false;
    int success_tick = -1;
    int ticks = 0;
};

// Chunk-boundary resampling with EMA smoothing a_exec = alpha * a_raw +
// (1 - alpha) * a_prev_exec at every tick; alpha = 1 executes raw actions
// bit-for-bit. Terminates on success or the task horizon.
RolloutEpisode rollout_sync(Task task, uint64_t seed, double init_sigma, RolloutPolicy& pol,
                            double ema_alpha);

// One in-flight inference: a chunk requested with the history ending at tick
// t arrives at t+L; the executor meanwhile consumes the rest of the previous
// chunk (or idles if it runs dry), and on arrival switches to index
// current_tick - t. The very first chunk blocks, so the robot idles L ticks.
struct AsyncInferenceConfig {
    int latency = 3;         // L, in control ticks; requires 0 <= L < horizon
    double ema_alpha = 0.5;  // smoothing shared with the sync path
};
RolloutEpisode rollout_async(Task task, uint64_t seed, double init_sigma, RolloutPolicy& pol,
                             const AsyncInferenceConfig& cfg);

// Evaluation seeds live behind a fixed namespace tag so they can never reuse
// a data-collection stream (those are drawn directly off the user seed).
uint64_t eval_seed(uint64_t seed_base, int episode);

struct EvalParams {
    int n = 50;
    uint64_t seed_base = 0;
    double init_sigma = 0.1;
    double ema_alpha = 0.5;
    bool async = false;
    int latency = 3;
    std::string policy_id = "policy";
};

struct EvalReport {
    std::string policy;
    std::string task;
    int n = 0;
    double success_pct = 0;
    double partial_pct = 0;
    double ci_lo = 0;
    double ci_hi = 0;
    std::optional<double> time_to_success_s;  // mean over successful episodes
    uint64_t seed_base = 0;
};

// Each worker builds its own policy instance; episodes run on disjoint seeds
// and the report is assembled in seed order, so output is deterministic.
using PolicyFactory = std::function<std::unique_ptr<RolloutPolicy>()>;
EvalReport evaluate(const PolicyFactory& factory, Task task, const EvalParams& ep);

nlohmann::json report_to_json(const EvalReport& r);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);

}  // namespace wm
