#pragma once

// Step-wise episode storage, horizon-H chunk relabeling, normalization
// statistics, and the binary dataset formats (WMST steps, WMDS chunks).

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace wm {

// One recorded control tick. `done` marks the last tick of its episode.
struct StepRecord {
    uint32_t episode = 0;
    uint32_t tick = 0;
    uint8_t done = 0;
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0;
};

// An episode keeps its terminal state (states has one more entry than
// actions) so boundary chunks get a real successor history.
struct StepEpisode {
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> actions;
    std::vector<double> rewards;
    bool success = false;
    int success_tick = -1;
};

struct StepDataset {
    uint32_t task = 0;
    uint32_t state_dim = 0;
    uint32_t action_dim = 0;
    std::vector<StepEpisode> episodes;

    size_t n_steps() const;
};

// Flat (s, a, r, done, episode, tick) view; terminal states are implicit.
std::vector<StepRecord> flatten_steps(const StepDataset& ds);

// Chunked transitions stored as contiguous f32 records:
//   [ S_t (K*state_dim) | A (H*action_dim) | R | mask | S_{t+H} (K*state_dim) ]
struct ChunkDataset {
    uint32_t task = 0;
    uint32_t K = 0;
    uint32_t H = 0;
    uint32_t state_dim = 0;
    uint32_t action_dim = 0;
    uint64_t n = 0;
    std::vector<float> data;

    size_t stride() const { return 2 * size_t(K) * state_dim + size_t(H) * action_dim + 2; }
    const float* sample(size_t i) const { return data.data() + i * stride(); }
    size_t hist_off() const { return 0; }
    size_t act_off() const { return size_t(K) * state_dim; }
    size_t ret_off() const { return act_off() + size_t(H) * action_dim; }
    size_t mask_off() const { return ret_off() + 1; }
    size_t next_off() const { return mask_off() + 1; }
};

// Fills one chunk sample straight from an episode: history ending at s_t
// (first state repeated before the start), the action chunk and discounted
// return truncated at the episode end, mask 1 iff the chunk crosses the end,
// and the successor history (terminal state repeated past the end). Both the
// bulk relabeler and training-time batch assembly route through this.
void chunk_sample(const StepEpisode& ep, int t, int H, int K, double gamma, double* S, double* A,
                  double& R, double& mask, double* Sn);

// One sample per start tick (stride 1). Histories pad by repeating the first
// state; chunks crossing the episode end pad with zero actions/rewards and
// carry mask 1; successor histories repeat the terminal state where needed.
ChunkDataset relabel_chunks(const StepDataset& ds, int H, int K, double gamma);

struct NormStats {
    std::vector<double> state_mean, state_std;
    std::vector<double> action_mean, action_std;
};

// Exact two-pass mean/std in 64-bit accumulation; std floored at 1e-6.
NormStats compute_norm_stats(const StepDataset& ds);

std::vector<double> normalize(const std::vector<double>& x, const std::vector<double>& mean,
                              const std::vector<double>& std);
std::vector<double> denormalize(const std::vector<double>& z, const std::vector<double>& mean,
                                const std::vector<double>& std);

nlohmann::json norm_stats_to_json(const NormStats& s);
NormStats norm_stats_from_json(const nlohmann::json& j);

struct DatasetIoError : std::runtime_error {
    enum Kind { BadMagic, BadVersion, Truncated };
    Kind kind;
    DatasetIoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

void save_steps(const std::string& path, const StepDataset& ds);
StepDataset load_steps(const std::string& path);

void save_dataset(const std::string& path, const ChunkDataset& ds);
ChunkDataset load_dataset(const std::string& path);

}  // namespace wm
