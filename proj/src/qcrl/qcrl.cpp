#include "qcrl/qcrl.hpp"

#include <cmath>

namespace wm {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw std::out_of_range(msg);
}

std::vector<int> critic_sizes(const TrainConfig& c, int in_dim) {
    int w = c.critic_arch == "wide" ? 512 : 256;
    return {in_dim, w, w, w, 1};
}

}  // namespace

void validate_config(const TrainConfig& c) {
    require(c.tau > 0.5 && c.tau < 1.0, "tau must be in (0.5, 1)");
    require(c.beta >= 0.0, "beta must be >= 0");
    require(c.w_max >= 1.0, "w_max must be >= 1");
    require(c.gamma >= 0.0 && c.gamma < 1.0, "gamma must be in [0, 1)");
    require(c.polyak > 0.0 && c.polyak <= 1.0, "polyak must be in (0, 1]");
    require(c.batch_size >= 1, "batch_size must be >= 1");
    require(c.lr_critic > 0 && c.lr_value > 0 && c.lr_policy > 0, "learning rates must be > 0");
    require(c.critic_steps >= 0 && c.policy_steps >= 0, "step budgets must be >= 0");
    require(c.K >= 1 && c.H >= 1, "K and H must be >= 1");
    require(c.diffusion_steps >= 1, "diffusion_steps must be >= 1");
    require(c.critic_arch == "mlp" || c.critic_arch == "wide",
            "critic_arch must be mlp or wide");
    require(c.baseline == "whole_moma" || c.baseline == "bc" || c.baseline == "idql",
            "baseline must be whole_moma, bc, or idql");
}

nlohmann::json config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"tau", c.tau},
                          {"beta", c.beta},
                          {"w_max", c.w_max},
                          {"gamma", c.gamma},
                          {"polyak", c.polyak},
                          {"batch_size", c.batch_size},
                          {"lr_critic", c.lr_critic},
                          {"lr_value", c.lr_value},
                          {"lr_policy", c.lr_policy},
                          {"critic_steps", c.critic_steps},
                          {"policy_steps", c.policy_steps},
                          {"K", c.K},
                          {"H", c.H},
                          {"diffusion_steps", c.diffusion_steps},
                          {"seed", c.seed},
                          {"use_q_chunking", c.use_q_chunking},
                          {"twin_critic", c.twin_critic},
                          {"critic_arch", c.critic_arch},
                          {"baseline", c.baseline}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.tau = j.value("tau", c.tau);
    c.beta = j.value("beta", c.beta);
    c.w_max = j.value("w_max", c.w_max);
    c.gamma = j.value("gamma", c.gamma);
    c.polyak = j.value("polyak", c.polyak);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_critic = j.value("lr_critic", c.lr_critic);
    c.lr_value = j.value("lr_value", c.lr_value);
    c.lr_policy = j.value("lr_policy", c.lr_policy);
    c.critic_steps = j.value("critic_steps", c.critic_steps);
    c.policy_steps = j.value("policy_steps", c.policy_steps);
    c.K = j.value("K", c.K);
    c.H = j.value("H", c.H);
    c.diffusion_steps = j.value("diffusion_steps", c.diffusion_steps);
    c.seed = j.value("seed", c.seed);
    c.use_q_chunking = j.value("use_q_chunking", c.use_q_chunking);
    c.twin_critic = j.value("twin_critic", c.twin_critic);
    c.critic_arch = j.value("critic_arch", c.critic_arch);
    c.baseline = j.value("baseline", c.baseline);
    return c;
}

double expectile_loss(double u, double tau) {
    double w = std::abs(tau - (u < 0 ? 1.0 : 0.0));
    return w * u * u;
}

double awr_weight(double advantage, double beta, double w_max) {
    return std::min(std::exp(beta * advantage), w_max);
}

CosineSchedule::CosineSchedule(int T) {
    if (T < 1) throw std::invalid_argument("CosineSchedule: T must be >= 1");
    const double s = 0.008;
    auto f = [&](double k) {
        double x = (k / T + s) / (1.0 + s) * (M_PI / 2.0);
        double c = std::cos(x);
        return c * c;
    };
    abar.resize(T + 1);
    for (int k = 0; k <= T; ++k) abar[k] = f(k) / f(0);
}

double CosineSchedule::alpha(int k) const { return std::max(abar[k] / abar[k - 1], 1e-3); }

double QcNets::q_min(const std::vector<double>& in) const {
    double a = q1.forward(in)[0];
    if (!twin) return a;
    return std::min(a, q2.forward(in)[0]);
}

double QcNets::target_q_min(const std::vector<double>& in) const {
    double a = tq1.forward(in)[0];
    if (!twin) return a;
    return std::min(a, tq2.forward(in)[0]);
}

QcNets make_nets(const TrainConfig& c, int state_hist_dim, int action_in_dim) {
    QcNets n;
    n.twin = c.twin_critic;
    Rng r1(mix_seed(c.seed, 10)), r2(mix_seed(c.seed, 11)), rv(mix_seed(c.seed, 12));
    n.q1 = Mlpd(critic_sizes(c, state_hist_dim + action_in_dim), r1);
    n.q2 = Mlpd(critic_sizes(c, state_hist_dim + action_in_dim), r2);
    n.tq1 = n.q1;
    n.tq2 = n.q2;
    n.v = Mlpd(critic_sizes(c, state_hist_dim), rv);
    return n;
}

CriticOpt::CriticOpt(const QcNets& n)
    : q1(n.q1.param_count()), q2(n.q2.param_count()), v(n.v.param_count()) {}

namespace {

Matd hcat(const Matd& A, const Matd& B) {
    Matd C(A.rows, A.cols + B.cols);
    for (int i = 0; i < A.rows; ++i) {
        double* ci = C.row(i);
        const double* ai = A.row(i);
        const double* bi = B.row(i);
        for (int j = 0; j < A.cols; ++j) ci[j] = ai[j];
        for (int j = 0; j < B.cols; ++j) ci[A.cols + j] = bi[j];
    }
    return C;
}

void adam_apply(Mlpd& net, Adam<double>& opt, const std::vector<double>& grad, double lr) {
    std::vector<double> params = net.flatten();
    opt.step(params, grad, lr);
    net.unflatten(params);
}

void polyak_to(Mlpd& target, const Mlpd& live, double rho) {
    std::vector<double> t = target.flatten();
    std::vector<double> l = live.flatten();
    for (size_t i = 0; i < t.size(); ++i) t[i] += rho * (l[i] - t[i]);
    target.unflatten(t);
}

}  // namespace

CriticLosses critic_update(const ChunkBatch& batch, QcNets& nets, CriticOpt& opt,
                           const TrainConfig& c, int h_eff) {
    const int B = batch.S.rows;
    const double gH = std::pow(c.gamma, h_eff);
    Matd SA = hcat(batch.S, batch.A);

    // Everything is evaluated at pre-step parameters before any update lands.
    Mlpd::Cache vcache;
    Matd V = nets.v.forward_batch(batch.S, &vcache);
    Matd Vn = nets.v.forward_batch(batch.Sn);
    Matd T1 = nets.tq1.forward_batch(SA);
    Matd T2 = nets.twin ? nets.tq2.forward_batch(SA) : T1;

    CriticLosses out;
    Matd dV(B, 1);
    for (int i = 0; i < B; ++i) {
        double u = std::min(T1.at(i, 0), T2.at(i, 0)) - V.at(i, 0);
        out.v_loss += expectile_loss(u, c.tau);
        dV.at(i, 0) = -2.0 * std::abs(c.tau - (u < 0 ? 1.0 : 0.0)) * u / B;
    }
    out.v_loss /= B;

    Mlpd::Cache c1, c2;
    Matd Q1 = nets.q1.forward_batch(SA, &c1);
    Matd Q2 = nets.twin ? nets.q2.forward_batch(SA, &c2) : Matd();
    Matd dQ1(B, 1), dQ2(B, 1);
    for (int i = 0; i < B; ++i) {
        double y = batch.R[i] + (1.0 - batch.mask[i]) * gH * Vn.at(i, 0);
        double r1 = Q1.at(i, 0) - y;
        out.q_loss += r1 * r1;
        dQ1.at(i, 0) = 2.0 * r1 / B;
        if (nets.twin) {
            double r2 = Q2.at(i, 0) - y;
            out.q_loss += r2 * r2;
            dQ2.at(i, 0) = 2.0 * r2 / B;
        }
    }
    out.q_loss /= nets.twin ? 2.0 * B : B;

    adam_apply(nets.q1, opt.q1, nets.q1.backward_batch(c1, dQ1), c.lr_critic);
    if (nets.twin) adam_apply(nets.q2, opt.q2, nets.q2.backward_batch(c2, dQ2), c.lr_critic);
    adam_apply(nets.v, opt.v, nets.v.backward_batch(vcache, dV), c.lr_value);
    polyak_to(nets.tq1, nets.q1, c.polyak);
    if (nets.twin) polyak_to(nets.tq2, nets.q2, c.polyak);
    return out;
}

double chunk_advantage(const std::vector<double>& S, const std::vector<double>& A,
                       const QcNets& nets) {
    std::vector<double> in;
    in.reserve(S.size() + A.size());
    in.insert(in.end(), S.begin(), S.end());
    in.insert(in.end(), A.begin(), A.end());
    return nets.q_min(in) - nets.v.forward(S)[0];
}

}  // namespace wm
