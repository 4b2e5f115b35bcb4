#include "evalkit/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "core/parallel.hpp"

namespace wm {

namespace {

double round1(double v) {
    double r = std::round(v * 10.0) / 10.0;
    return r == 0.0 ? 0.0 : r;  // canonical zero, never -0.0 in reports
}

// History of K raw states ending at the latest recorded one, the first state
// repeated before the episode start -- the same convention chunk relabeling
// uses, so learned policies see test-time inputs shaped like training rows.
std::vector<double> history_window(const std::vector<std::vector<double>>& states, int K) {
    const int t = static_cast<int>(states.size()) - 1;
    const int sd = static_cast<int>(states[0].size());
    std::vector<double> h(static_cast<size_t>(K) * sd);
    for (int k = 0; k < K; ++k) {
        int idx = std::max(t - K + 1 + k, 0);
        for (int d = 0; d < sd; ++d) h[static_cast<size_t>(k) * sd + d] = states[idx][d];
    }
    return h;
}

void apply_ema(const std::vector<double>& raw, std::vector<double>& prev, double alpha,
               std::vector<double>& out) {
    if (alpha == 1.0) {
        out = raw;
    } else {
        out.resize(raw.size());
        for (size_t d = 0; d < raw.size(); ++d) out[d] = alpha * raw[d] + (1.0 - alpha) * prev[d];
    }
    prev = out;
}

void finish_episode(RolloutEpisode& ep, const WorldState& w) {
    ep.ticks = static_cast<int>(ep.actions.size());
    Status st = check_status(w);
    ep.success = st.success;
    ep.partial = st.partial;
}

}  // namespace

std::pair<double, double> wilson_ci(int successes, int n, double z) {
    if (n <= 0) throw std::invalid_argument("wilson_ci: n must be > 0");
    if (successes < 0 || successes > n)
        throw std::invalid_argument("wilson_ci: successes must be in [0, n]");
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = p + z2 / (2.0 * n);
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    double lo = (center - half) / denom;
    double hi = (center + half) / denom;
    return {round1(100.0 * lo), round1(100.0 * hi)};
}

RolloutEpisode rollout_sync(Task task, uint64_t seed, double init_sigma, RolloutPolicy& pol,
                            double ema_alpha) {
    TaskSpec spec = TaskSpec::make(task);
    WorldState w = reset(spec, seed, init_sigma);
    pol.begin_episode(w, seed);
    const int H = pol.horizon(), K = pol.history_len();
    const int ad = wk::kActionDim;

    RolloutEpisode ep;
    ep.states.push_back(state_vector(w));
    std::vector<double> chunk, a_raw(ad), a_exec, prev(ad, 0.0);
    int next = H;  // actions consumed from the current chunk; H = exhausted
    for (int t = 0; t < spec.horizon; ++t) {
        if (next == H) {
            chunk = pol.plan(w, history_window(ep.states, K));
            next = 0;
            ep.chunk_first_index.push_back(0);
        }
        for (int d = 0; d < ad; ++d) a_raw[d] = chunk[static_cast<size_t>(next) * ad + d];
        ++next;
        apply_ema(a_raw, prev, ema_alpha, a_exec);
        StepEvents ev = step(w, a_exec);
        ep.actions.push_back(a_exec);
        ep.states.push_back(state_vector(w));
        if (ev.success) ep.success_tick = t;
        if (!check_status(w).running) break;
    }
    finish_episode(ep, w);
    return ep;
}

RolloutEpisode rollout_async(Task task, uint64_t seed, double init_sigma, RolloutPolicy& pol,
                             const AsyncInferenceConfig& cfg) {
    TaskSpec spec = TaskSpec::make(task);
    WorldState w = reset(spec, seed, init_sigma);
    pol.begin_episode(w, seed);
    const int H = pol.horizon(), K = pol.history_len();
    const int L = cfg.latency;
    const int ad = wk::kActionDim;
    if (L < 0 || L >= H)
        throw std::invalid_argument("rollout_async: latency must satisfy 0 <= L < horizon");

    RolloutEpisode ep;
    ep.states.push_back(state_vector(w));
    std::vector<double> chunk, pending, a_raw(ad), a_exec, prev(ad, 0.0);
    int next = H;
    bool have_pending = false, first_chunk = true;
    int req_tick = 0, ready_tick = 0;
    for (int t = 0; t < spec.horizon; ++t) {
        // Request as soon as the remaining budget is within the latency
        // window; the first request goes out immediately at tick 0.
        auto request = [&] {
            pending = pol.plan(w, history_window(ep.states, K));
            req_tick = t;
            ready_tick = t + L;
            have_pending = true;
        };
        if (!have_pending && (first_chunk || H - next <= L)) request();
        if (have_pending && t >= ready_tick) {
            int start = first_chunk ? 0 : t - req_tick;
            chunk = pending;
            next = start;
            ep.chunk_first_index.push_back(start);
            have_pending = false;
            first_chunk = false;
            // The worker is free again; if the fresh chunk is already inside
            // the latency window, the next request goes out this same tick.
            if (H - next <= L) request();
        }
        if (next < H) {
            for (int d = 0; d < ad; ++d) a_raw[d] = chunk[static_cast<size_t>(next) * ad + d];
            ++next;
        } else {
            a_raw.assign(ad, 0.0);  // waiting on inference; the robot idles
        }
        apply_ema(a_raw, prev, cfg.ema_alpha, a_exec);
        StepEvents ev = step(w, a_exec);
        ep.actions.push_back(a_exec);
        ep.states.push_back(state_vector(w));
        if (ev.success) ep.success_tick = t;
        if (!check_status(w).running) break;
    }
    finish_episode(ep, w);
    return ep;
}

uint64_t eval_seed(uint64_t seed_base, int episode) {
    constexpr uint64_t kEvalNamespace = 0x6576616cULL;
    return mix_seed(mix_seed(seed_base, kEvalNamespace), static_cast<uint64_t>(episode));
}

EvalReport evaluate(const PolicyFactory& factory, Task task, const EvalParams& ep) {
    if (ep.n < 1) throw std::invalid_argument("evaluate: n must be >= 1");
    if (ep.async) {
        // Validate here: a latency rejection must not fire inside the loop.
        auto probe = factory();
        if (ep.latency < 0 || ep.latency >= probe->horizon())
            throw std::invalid_argument("evaluate: latency must satisfy 0 <= L < H");
    }
    std::vector<RolloutEpisode> eps(ep.n);
    const int workers = worker_count();
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int i = 0; i < ep.n; ++i) {
        auto pol = factory();
        uint64_t ws = eval_seed(ep.seed_base, i);
        eps[i] = ep.async
                     ? rollout_async(task, ws, ep.init_sigma, *pol,
                                     AsyncInferenceConfig{ep.latency, ep.ema_alpha})
                     : rollout_sync(task, ws, ep.init_sigma, *pol, ep.ema_alpha);
    }

    int n_succ = 0, n_part = 0;
    double time_sum = 0;
    for (const auto& e : eps) {
        if (e.success) {
            ++n_succ;
            time_sum += (e.success_tick + 1) * wk::kDt;
        }
        if (e.partial) ++n_part;
    }

    EvalReport r;
    r.policy = ep.policy_id;
    r.task = task_name(task);
    r.n = ep.n;
    r.success_pct = round1(100.0 * n_succ / ep.n);
    r.partial_pct = round1(100.0 * n_part / ep.n);
    auto ci = wilson_ci(n_succ, ep.n);
    r.ci_lo = ci.first;
    r.ci_hi = ci.second;
    if (n_succ > 0) r.time_to_success_s = std::round(time_sum / n_succ * 1000.0) / 1000.0;
    r.seed_base = ep.seed_base;
    return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j{{"policy", r.policy},
                     {"task", r.task},
                     {"n", r.n},
                     {"success_pct", r.success_pct},
                     {"partial_pct", r.partial_pct},
                     {"ci", {r.ci_lo, r.ci_hi}},
                     {"seed_base", r.seed_base}};
    if (r.time_to_success_s)
        j["time_to_success_s"] = *r.time_to_success_s;
    else
        j["time_to_success_s"] = nullptr;
    return j;
}

std::string report_csv_header() {
    return "policy,task,n,success_pct,partial_pct,ci_lo,ci_hi,time_to_success_s,seed_base";
}

std::string report_csv_row(const EvalReport& r) {
    char buf[256];
    std::string time_cell;
    if (r.time_to_success_s) {
        std::snprintf(buf, sizeof buf, "%.3f", *r.time_to_success_s);
        time_cell = buf;
    }
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%.1f,%.1f,%.1f,%.1f,%s,%llu", r.policy.c_str(),
                  r.task.c_str(), r.n, r.success_pct, r.partial_pct, r.ci_lo, r.ci_hi,
                  time_cell.c_str(), static_cast<unsigned long long>(r.seed_base));
    return buf;
}

}  // namespace wm
