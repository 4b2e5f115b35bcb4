#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/netio.hpp"
#include "qcrl/qcrl.hpp"

namespace wm {

namespace {

namespace fs = std::filesystem;

// Assembles normalized chunk rows straight from the step dataset; the chunk
// math is the same chunk_sample kernel the bulk relabeler uses.
struct BatchAssembler {
    const StepDataset& ds;
    const NormStats& norm;
    std::vector<std::pair<int, int>> flat;  // (episode, start tick)
    int K, sd, ad;
    std::vector<double> S, A, Sn;

    BatchAssembler(const StepDataset& d, const NormStats& n, int k)
        : ds(d), norm(n), K(k), sd(d.state_dim), ad(d.action_dim) {
        for (size_t e = 0; e < ds.episodes.size(); ++e)
            for (size_t t = 0; t < ds.episodes[e].actions.size(); ++t)
                flat.push_back({static_cast<int>(e), static_cast<int>(t)});
    }

    void fill_row(size_t idx, int H, double gamma, Matd& Sm, Matd& Am,
                  std::vector<double>* R, std::vector<double>* mask, Matd* Snm, int row) {
        auto [e, t] = flat[idx];
        S.resize(static_cast<size_t>(K) * sd);
        A.resize(static_cast<size_t>(H) * ad);
        Sn.resize(static_cast<size_t>(K) * sd);
        double r, m;
        chunk_sample(ds.episodes[e], t, H, K, gamma, S.data(), A.data(), r, m, Sn.data());
        for (size_t j = 0; j < S.size(); ++j)
            Sm.at(row, j) = (S[j] - norm.state_mean[j % sd]) / norm.state_std[j % sd];
        for (size_t j = 0; j < A.size(); ++j)
            Am.at(row, j) = (A[j] - norm.action_mean[j % ad]) / norm.action_std[j % ad];
        if (R) (*R)[row] = r;
        if (mask) (*mask)[row] = m;
        if (Snm)
            for (size_t j = 0; j < Sn.size(); ++j)
                Snm->at(row, j) = (Sn[j] - norm.state_mean[j % sd]) / norm.state_std[j % sd];
    }
};

void write_curve_row(std::FILE* f, int step, const double* q, const double* v, const double* p,
                     const double* w) {
    auto cell = [&](const double* x) {
        if (!x) return std::string();
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", *x);
        return std::string(buf);
    };
    std::fprintf(f, "%d,%s,%s,%s,%s\n", step, cell(q).c_str(), cell(v).c_str(), cell(p).c_str(),
                 cell(w).c_str());
}

}  // namespace

TrainResult train(const StepDataset& steps, const TrainConfig& c, const std::string& out_dir) {
    validate_config(c);
    if (steps.episodes.empty()) throw std::invalid_argument("train: empty dataset");
    fs::create_directories(out_dir);

    const int sd = steps.state_dim, ad = steps.action_dim;
    const int hist = c.K * sd;
    const int h_eff = c.use_q_chunking ? c.H : 1;
    const int a_in = c.use_q_chunking ? c.H * ad : ad;
    NormStats norm = compute_norm_stats(steps);

    // Raw action bounds for sampler clipping, straight from the data.
    std::vector<double> act_lo(ad, 1e300), act_hi(ad, -1e300);
    for (const auto& ep : steps.episodes)
        for (const auto& a : ep.actions)
            for (int d = 0; d < ad; ++d) {
                act_lo[d] = std::min(act_lo[d], a[d]);
                act_hi[d] = std::max(act_hi[d], a[d]);
            }

    BatchAssembler asmr(steps, norm, c.K);
    const size_t n_flat = asmr.flat.size();
    const int B = c.batch_size;

    TrainResult res;
    DiffusionPolicy pol = make_policy(c, sd, ad, norm, act_lo, act_hi);
    const bool want_critic = c.baseline != "bc";
    QcNets nets;

    std::unique_ptr<std::FILE, decltype(&std::fclose)> curves(
        std::fopen((out_dir + "/curves.csv").c_str(), "w"), &std::fclose);
    if (!curves) throw std::runtime_error("cannot open: " + out_dir + "/curves.csv");
    std::fprintf(curves.get(), "step,q_loss,v_loss,policy_loss,mean_weight\n");

    if (want_critic) {
        nets = make_nets(c, hist, a_in);
        const std::string critic_path = out_dir + "/critic.wmnn";
        const std::string value_path = out_dir + "/value.wmnn";
        if (fs::exists(critic_path) && fs::exists(value_path)) {
            auto qs = load_nets<double>(critic_path);
            auto vs = load_nets<double>(value_path);
            if (qs.size() != 4 || vs.size() != 1)
                throw std::runtime_error("unexpected net count in " + critic_path);
            nets.q1 = net_from_loaded(qs[0]);
            nets.q2 = net_from_loaded(qs[1]);
            nets.tq1 = net_from_loaded(qs[2]);
            nets.tq2 = net_from_loaded(qs[3]);
            nets.v = net_from_loaded(vs[0]);
            res.resumed_critic = true;
        } else {
            CriticOpt opt(nets);
            Rng rng_critic(mix_seed(c.seed, 1));
            ChunkBatch batch;
            batch.S = Matd(B, hist);
            batch.A = Matd(B, a_in);
            batch.Sn = Matd(B, hist);
            batch.R.resize(B);
            batch.mask.resize(B);
            for (int step = 1; step <= c.critic_steps; ++step) {
                for (int b = 0; b < B; ++b)
                    asmr.fill_row(rng_critic.uniform_int(static_cast<int>(n_flat)),
                                  c.use_q_chunking ? c.H : 1, c.gamma, batch.S, batch.A,
                                  &batch.R, &batch.mask, &batch.Sn, b);
                CriticLosses l = critic_update(batch, nets, opt, c, h_eff);
                res.q_loss = l.q_loss;
                res.v_loss = l.v_loss;
                if (step % 50 == 0 || step == c.critic_steps)
                    write_curve_row(curves.get(), step, &l.q_loss, &l.v_loss, nullptr, nullptr);
                if (!std::isfinite(l.q_loss) || !std::isfinite(l.v_loss))
                    throw std::runtime_error("critic training diverged at step " +
                                             std::to_string(step));
            }
            save_nets<double>(critic_path, {&nets.q1, &nets.q2, &nets.tq1, &nets.tq2});
            save_nets<double>(value_path, {&nets.v});
        }
    }
    res.policy_calls_phase1 = pol.sample_calls;

    // Advantages once, against the frozen critic; unit weights otherwise.
    std::vector<double> weights(n_flat, 1.0);
    if (c.baseline == "whole_moma") {
        const int AB = 4096;
        Matd S(AB, hist), A(AB, a_in);
        for (size_t base = 0; base < n_flat; base += AB) {
            int nb = static_cast<int>(std::min<size_t>(AB, n_flat - base));
            if (nb != S.rows) {
                S = Matd(nb, hist);
                A = Matd(nb, a_in);
            }
            for (int b = 0; b < nb; ++b)
                asmr.fill_row(base + b, c.use_q_chunking ? c.H : 1, c.gamma, S, A, nullptr,
                              nullptr, nullptr, b);
            Matd SA(nb, hist + a_in);
            for (int i = 0; i < nb; ++i) {
                for (int j = 0; j < hist; ++j) SA.at(i, j) = S.at(i, j);
                for (int j = 0; j < a_in; ++j) SA.at(i, hist + j) = A.at(i, j);
            }
            Matd Q1 = nets.q1.forward_batch(SA);
            Matd Q2 = nets.twin ? nets.q2.forward_batch(SA) : Q1;
            Matd V = nets.v.forward_batch(S);
            for (int i = 0; i < nb; ++i) {
                double adv = std::min(Q1.at(i, 0), Q2.at(i, 0)) - V.at(i, 0);
                weights[base + i] = awr_weight(adv, c.beta, c.w_max);
            }
        }
        double sum = 0;
        for (double w : weights) sum += w;
        res.mean_weight = sum / static_cast<double>(n_flat);
    }

    {
        Adam<double> opt(pol.net.param_count());
        Rng rng_policy(mix_seed(c.seed, 2));
        Matd S(B, hist), A(B, c.H * ad);
        std::vector<double> w(B);
        for (int step = 1; step <= c.policy_steps; ++step) {
            for (int b = 0; b < B; ++b) {
                size_t idx = rng_policy.uniform_int(static_cast<int>(n_flat));
                asmr.fill_row(idx, c.H, c.gamma, S, A, nullptr, nullptr, nullptr, b);
                w[b] = weights[idx];
            }
            double loss = diffusion_train_step(S, A, w, pol, opt, c.lr_policy, rng_policy);
            res.policy_loss = loss;
            if (step % 50 == 0 || step == c.policy_steps)
                write_curve_row(curves.get(), step, nullptr, nullptr, &loss, &res.mean_weight);
            if (!std::isfinite(loss))
                throw std::runtime_error("policy training diverged at step " +
                                         std::to_string(step));
        }
    }

    save_nets<double>(out_dir + "/policy.wmnn", {&pol.net});
    {
        std::ofstream nf(out_dir + "/norm.json");
        nf << norm_stats_to_json(norm).dump(2) << '\n';
        nlohmann::json j = config_to_json(c);
        j["state_dim"] = sd;
        j["action_dim"] = ad;
        j["act_lo"] = act_lo;
        j["act_hi"] = act_hi;
        std::ofstream cf(out_dir + "/config.json");
        cf << j.dump(2) << '\n';
    }
    return res;
}

Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream cf(dir + "/config.json");
    if (!cf) throw std::runtime_error("cannot open: " + dir + "/config.json");
    nlohmann::json j = nlohmann::json::parse(cf);
    Checkpoint ck{config_from_json(j), NormStats{}, QcNets{},
                  DiffusionPolicy{Mlpd(), CosineSchedule(j.value("diffusion_steps", 20)), 0, 0,
                                  0, 0, {}, {}, {}}};

    std::ifstream nf(dir + "/norm.json");
    if (!nf) throw std::runtime_error("cannot open: " + dir + "/norm.json");
    ck.norm = norm_stats_from_json(nlohmann::json::parse(nf));

    int sd = j.at("state_dim").get<int>();
    int ad = j.at("action_dim").get<int>();
    std::vector<double> lo = j.at("act_lo").get<std::vector<double>>();
    std::vector<double> hi = j.at("act_hi").get<std::vector<double>>();
    ck.policy = make_policy(ck.config, sd, ad, ck.norm, lo, hi);
    auto ps = load_nets<double>(dir + "/policy.wmnn");
    ck.policy.net = net_from_loaded(ps.at(0));

    ck.nets.twin = ck.config.twin_critic;
    if (std::filesystem::exists(dir + "/critic.wmnn")) {
        auto qs = load_nets<double>(dir + "/critic.wmnn");
        auto vs = load_nets<double>(dir + "/value.wmnn");
        ck.nets.q1 = net_from_loaded(qs.at(0));
        ck.nets.q2 = net_from_loaded(qs.at(1));
        ck.nets.tq1 = net_from_loaded(qs.at(2));
        ck.nets.tq2 = net_from_loaded(qs.at(3));
        ck.nets.v = net_from_loaded(vs.at(0));
    }
    return ck;
}

}  // namespace wm
