#pragma once

// Offline RL core: chunked IQL critic/value learning, diffusion action-chunk
// policy with AWR-weighted regression, BC and IDQL baselines, and the
// two-phase training driver with checkpoint bundles.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "chunkstore/chunkstore.hpp"
#include "core/adam.hpp"
#include "core/mlp.hpp"
#include "core/rng.hpp"

namespace wm {

struct TrainConfig {
    double tau = 0.7;          // expectile, (0.5, 1)
    double beta = 3.0;         // AWR inverse temperature, >= 0
    double w_max = 100.0;      // AWR weight clip, >= 1
    double gamma = 0.99;
    double polyak = 0.005;
    int batch_size = 256;
    double lr_critic = 3e-4;
    double lr_value = 3e-4;
    double lr_policy = 1e-4;
    int critic_steps = 2000;
    int policy_steps = 2000;
    int K = 5;                 // state history length
    int H = 16;                // action chunk horizon
    int diffusion_steps = 20;
    uint64_t seed = 0;
    bool use_q_chunking = true;   // false: single-step TD on the chunk's first action
    bool twin_critic = true;      // false: single critic, no min aggregation
    std::string critic_arch = "mlp";      // "mlp" (256x3) | "wide" (512x3)
    std::string baseline = "whole_moma";  // whole_moma | bc | idql
};

void validate_config(const TrainConfig& c);  // throws std::out_of_range
nlohmann::json config_to_json(const TrainConfig& c);
TrainConfig config_from_json(const nlohmann::json& j);

// |tau - 1(u < 0)| * u^2
double expectile_loss(double u, double tau);

// min(exp(beta * advantage), w_max)
double awr_weight(double advantage, double beta, double w_max);

// Cosine noise schedule: abar[0] = 1, strictly decreasing to ~0 at index T.
// Per-step alpha is floored so the ancestral update never divides by zero.
struct CosineSchedule {
    std::vector<double> abar;  // length T+1
    explicit CosineSchedule(int T);
    int T() const { return static_cast<int>(abar.size()) - 1; }
    double alpha(int k) const;  // abar[k] / abar[k-1], floored at 1e-3
};

// Critic pack. Targets are Polyak copies; `twin` controls min aggregation.
struct QcNets {
    Mlpd q1, q2, tq1, tq2, v;
    bool twin = true;

    double q_min(const std::vector<double>& in) const;        // min over live critics
    double target_q_min(const std::vector<double>& in) const; // min over target critics
};

QcNets make_nets(const TrainConfig& c, int state_hist_dim, int action_in_dim);

// One normalized training batch of chunk transitions.
struct ChunkBatch {
    Matd S;   // B x K*sd
    Matd A;   // B x action-input dim (H*ad, or ad without Q-chunking)
    Matd Sn;  // B x K*sd
    std::vector<double> R;
    std::vector<double> mask;
};

struct CriticLosses {
    double q_loss = 0;
    double v_loss = 0;
};

struct CriticOpt {
    Adam<double> q1, q2, v;
    CriticOpt(const QcNets& n);
};

// One IQL step: V regresses the tau-expectile of the target-critic value,
// Q regresses R + (1-mask) * gamma^H_eff * V(S'); both losses use pre-step
// parameters, then Adam and Polyak updates apply.
CriticLosses critic_update(const ChunkBatch& batch, QcNets& nets, CriticOpt& opt,
                           const TrainConfig& c, int h_eff);

// A = min-twin Q(S, A) - V(S), on normalized inputs.
double chunk_advantage(const std::vector<double>& S, const std::vector<double>& A,
                       const QcNets& nets);

// Conditional denoiser over normalized action chunks. Samples count policy
// queries so training-phase isolation is checkable.
struct DiffusionPolicy {
    Mlpd net;  // [x_k | S_norm | embed(k)] -> predicted noise
    CosineSchedule sched;
    int K = 5, H = 16;
    int state_dim = 0, action_dim = 0;
    NormStats norm;
    std::vector<double> act_lo, act_hi;  // raw action bounds for final clipping
    mutable long sample_calls = 0;

    int chunk_dim() const { return H * action_dim; }
    int hist_dim() const { return K * state_dim; }
    std::vector<double> normalize_hist(const std::vector<double>& S_raw) const;
};

DiffusionPolicy make_policy(const TrainConfig& c, int state_dim, int action_dim,
                            const NormStats& norm, const std::vector<double>& act_lo,
                            const std::vector<double>& act_hi);

// One weighted denoising-regression step on normalized chunks; returns the
// mean weighted noise-prediction error. Weights of zero contribute nothing.
double diffusion_train_step(const Matd& S_norm, const Matd& chunks_norm,
                            const std::vector<double>& weights, DiffusionPolicy& pol,
                            Adam<double>& opt, double lr, Rng& rng);

// T-step ancestral sampling conditioned on the raw state history; returns a
// raw (denormalized) H x action_dim chunk clipped to the action bounds.
std::vector<double> diffusion_sample(const DiffusionPolicy& pol,
                                     const std::vector<double>& S_raw, Rng& rng);

// Draws n_a chunks and returns the one the critic scores highest; ties break
// toward the earliest sample.
std::vector<double> idql_select(const DiffusionPolicy& pol, const QcNets& nets,
                                const std::vector<double>& S_raw, int n_a, Rng& rng);

struct TrainResult {
    double q_loss = 0, v_loss = 0, policy_loss = 0;
    double mean_weight = 1.0;
    long policy_calls_phase1 = 0;
    bool resumed_critic = false;
};

// Two-phase driver: phase 1 fits critic+value (skipped for baseline=bc, or
// when out_dir already holds critic checkpoints); phase 2 computes advantages
// once with the frozen critic and trains the diffusion policy with AWR
// weights (whole_moma), or unit weights (bc, idql). Writes critic.wmnn,
// value.wmnn, policy.wmnn, norm.json, config.json, curves.csv.
TrainResult train(const StepDataset& steps, const TrainConfig& c, const std::string& out_dir);

// Reloads a checkpoint bundle for evaluation.
struct Checkpoint {
    TrainConfig config;
    NormStats norm;
    QcNets nets;
    DiffusionPolicy policy;
};
Checkpoint load_checkpoint(const std::string& dir);

}  // namespace wm
