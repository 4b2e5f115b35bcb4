#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "chunkstore/chunkstore.hpp"
#include "core/parallel.hpp"
#include "wbcgen/wbc.hpp"

namespace wm {

namespace {

// SOURCE_DATE_EPOCH overrides wall time so manifests can be byte-reproducible.
std::time_t manifest_time() {
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"))
        return static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
    return std::time(nullptr);
}

std::string iso_utc(std::time_t t) {
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

CollectSummary collect_dataset(Task task, int n_episodes, uint64_t seed,
                               const std::string& out_dir) {
    if (n_episodes <= 0) throw std::invalid_argument("collect_dataset: n_episodes must be > 0");
    std::filesystem::create_directories(out_dir);

    // Each episode owns two derived rng streams (params, world reset), so the
    // result is identical for any worker count.
    std::vector<Episode> eps(n_episodes);
    const int workers = worker_count();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int i = 0; i < n_episodes; ++i) {
        Rng prng(mix_seed(seed, 2 * static_cast<uint64_t>(i)));
        WbcParams p = sample_params(prng);
        eps[i] = rollout_wbc(task, mix_seed(seed, 2 * static_cast<uint64_t>(i) + 1), p);
    }

    StepDataset ds;
    ds.task = static_cast<uint32_t>(task);
    ds.state_dim = wk::kStateDim;
    ds.action_dim = wk::kActionDim;
    CollectSummary sum;
    sum.n_episodes = n_episodes;
    for (Episode& ep : eps) {
        sum.n_success += ep.success ? 1 : 0;
        sum.n_partial += ep.partial ? 1 : 0;
        sum.n_steps += ep.actions.size();
        StepEpisode se;
        se.states = std::move(ep.states);
        se.actions = std::move(ep.actions);
        se.rewards = std::move(ep.rewards);
        se.success = ep.success;
        se.success_tick = ep.success_tick;
        ds.episodes.push_back(std::move(se));
    }
    sum.success_rate = static_cast<double>(sum.n_success) / n_episodes;

    save_steps(out_dir + "/steps.wmst", ds);

    nlohmann::json manifest{
        {"task", task_name(task)},
        {"n_episodes", n_episodes},
        {"seed", seed},
        {"wbc_success_rate", sum.success_rate},
        {"param_ranges",
         {{"pregrasp_threshold", {0.01, 0.25}},
          {"grasp_threshold", {0.01, 0.10}},
          {"articulation_step", {0.005, 0.25}},
          {"ee_weight", {0.1, 5.0}},
          {"base_weight", {0.1, 5.0}},
          {"posture_weight", {0.0, 1.0}},
          {"joint_noise_sigma", 0.1}}},
        {"created_at", iso_utc(manifest_time())}};
    std::ofstream mf(out_dir + "/manifest.json");
    if (!mf) throw std::runtime_error("cannot open: " + out_dir + "/manifest.json");
    mf << manifest.dump(2) << '\n';
    return sum;
}

}  // namespace wm
