#pragma once

// Scripted whole-body-control policies: per-task stage machines that emit
// end-effector/base targets, solved each tick as a two-level hierarchy
// (hard safety boxes, then weighted tracking), plus reward labeling and
// episode rollout.

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "hqp/hqp.hpp"
#include "momaworld/world.hpp"

namespace wm {

struct WbcParams {
    double pregrasp_threshold = 0.10;   // m, [0.01, 0.25]
    double grasp_threshold = 0.05;      // m, [0.01, 0.10]
    double articulation_step = 0.10;    // m of handle path, [0.005, 0.25]
    double ee_weight = 2.5;             // [0.1, 5.0]
    double base_weight = 2.5;           // [0.1, 5.0]
    double posture_weight = 0.5;        // [0.0, 1.0]
    double joint_noise_sigma = 0.1;     // rad, fixed
};

WbcParams sample_params(Rng& rng);
void validate_params(const WbcParams& p);  // throws std::out_of_range

// Stage ids are task-specific but globally monotone within an episode.
// Door: 0 REACH, 1 ARTICULATE, 2 PASS_THROUGH.
// Drawer: 0 PREGRASP_A, 1 PREGRASP_B, 2 GRASP, 3 ARTICULATE.
// Cupboard: 0 PREGRASP, 1 GRASP, 2 ARTICULATE, 3 PLACE.
struct StageMachine {
    Task task = Task::Door;
    int stage = 0;
    int waypoint = 0;       // index into the articulation waypoint ladder
    int n_waypoints = 0;
    double art_start = 0;   // articulation value when the ladder was built
    double art_start2 = 0;  // second joint (drawer)
    int art_ticks = 0;       // ticks spent in the articulate stage
};

StageMachine make_machine(Task t);
const char* stage_name(Task t, int stage);

// Per-tick targets the tracking level servoes toward. Arms with a
// world-frame goal track it with the full Jacobian; the others hold a
// base-relative tucked pose with arm joints only (otherwise the solver
// drags the base to chase a target that moves with the base).
struct WbcTargets {
    Vec2 ee[2];
    bool ee_world[2] = {false, false};
    Vec2 base_xy;
    double base_th = 0;
    // Articulation with a free-standing base stance: hold position instead of
    // tracking base_xy so the stance task cannot fight the handle path.
    bool base_station = false;
    double grip[2] = {0, 0};
};

WbcTargets stage_targets(const StageMachine& m, const WorldState& w, const WbcParams& p);
void advance_stage(StageMachine& m, const WorldState& w, const WbcParams& p);

// Solves the tracking hierarchy and returns an 11-dim world action.
// posture_as_third_level moves the posture task to its own (lowest) level.
std::vector<double> wbc_action(const WorldState& w, const StageMachine& m,
                               const WbcParams& p, bool posture_as_third_level = false);

struct Episode {
    Task task = Task::Door;
    uint64_t seed = 0;
    WbcParams params;
    std::vector<std::vector<double>> states;   // T+1 entries
    std::vector<std::vector<double>> actions;  // T entries
    std::vector<double> rewards;               // T entries
    std::vector<int> stages;                   // T entries
    std::vector<uint8_t> events;               // T entries, bitmask
    int success_tick = -1;                     // tick index where success fired
    bool success = false;
    bool partial = false;
};

namespace ev_bit {
inline constexpr uint8_t kGrasp = 1;
inline constexpr uint8_t kRelease = 2;
inline constexpr uint8_t kReleaseBlocked = 4;
inline constexpr uint8_t kSlipped = 8;
inline constexpr uint8_t kCollision = 16;
inline constexpr uint8_t kSuccess = 32;
}  // namespace ev_bit

// Distances feeding the dense reward terms, all recomputable from a state
// vector alone.
struct ProgressDistances {
    double articulation = 0;  // remaining articulation toward the goal
    double ee = 0;            // manipulating-arm EE to its handle
    double base = 0;          // door only: base to the pass-through goal
};
ProgressDistances progress_distances(Task t, const std::vector<double>& state);

// Fills episode.rewards from its states and success tick: signed progress
// deltas normalized by the initial distances, plus 1.0 once at success.
void label_rewards(Episode& ep);

Episode rollout_wbc(Task task, uint64_t seed, const WbcParams& p,
                    bool posture_as_third_level = false);

struct CollectSummary {
    int n_episodes = 0;
    int n_success = 0;
    int n_partial = 0;
    size_t n_steps = 0;
    double success_rate = 0;
};

// Rolls n episodes with per-episode sampled params and reset noise, parallel
// across workers but bitwise independent of the worker count (each episode
// derives its own rng streams), then writes steps.wmst + manifest.json.
CollectSummary collect_dataset(Task task, int n_episodes, uint64_t seed,
                               const std::string& out_dir);

}  // namespace wm
