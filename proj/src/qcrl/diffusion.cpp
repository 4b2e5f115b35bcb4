#include <algorithm>
#include <cmath>

#include "core/stepembed.hpp"
#include "qcrl/qcrl.hpp"

namespace wm {

namespace {
constexpr int kEmbedDim = 64;
}

std::vector<double> DiffusionPolicy::normalize_hist(const std::vector<double>& S_raw) const {
    std::vector<double> out(S_raw.size());
    for (int k = 0; k < K; ++k)
        for (int d = 0; d < state_dim; ++d)
            out[k * state_dim + d] =
                (S_raw[k * state_dim + d] - norm.state_mean[d]) / norm.state_std[d];
    return out;
}

DiffusionPolicy make_policy(const TrainConfig& c, int state_dim, int action_dim,
                            const NormStats& norm, const std::vector<double>& act_lo,
                            const std::vector<double>& act_hi) {
    DiffusionPolicy p{Mlpd(), CosineSchedule(c.diffusion_steps), 0, 0, 0, 0, {}, {}, {}};
    p.K = c.K;
    p.H = c.H;
    p.state_dim = state_dim;
    p.action_dim = action_dim;
    p.norm = norm;
    p.act_lo = act_lo;
    p.act_hi = act_hi;
    Rng rng(mix_seed(c.seed, 13));
    int in = p.chunk_dim() + p.hist_dim() + kEmbedDim;
    p.net = Mlpd({in, 512, 512, 512, p.chunk_dim()}, rng);
    return p;
}

double diffusion_train_step(const Matd& S_norm, const Matd& chunks_norm,
                            const std::vector<double>& weights, DiffusionPolicy& pol,
                            Adam<double>& opt, double lr, Rng& rng) {
    const int B = S_norm.rows;
    const int D = pol.chunk_dim();
    const int T = pol.sched.T();

    // Per sample: one step index, then D noise draws — a fixed consumption
    // order so runs are reproducible regardless of batch contents.
    Matd X(B, D + pol.hist_dim() + kEmbedDim);
    Matd eps(B, D);
    for (int i = 0; i < B; ++i) {
        int k = 1 + rng.uniform_int(T);
        double sab = std::sqrt(pol.sched.abar[k]);
        double snb = std::sqrt(1.0 - pol.sched.abar[k]);
        double* xi = X.row(i);
        for (int j = 0; j < D; ++j) {
            eps.at(i, j) = rng.normal();
            xi[j] = sab * chunks_norm.at(i, j) + snb * eps.at(i, j);
        }
        const double* si = S_norm.row(i);
        for (int j = 0; j < pol.hist_dim(); ++j) xi[D + j] = si[j];
        std::vector<double> emb = sinusoidal_embed(k, kEmbedDim);
        for (int j = 0; j < kEmbedDim; ++j) xi[D + pol.hist_dim() + j] = emb[j];
    }

    Mlpd::Cache cache;
    Matd Y = pol.net.forward_batch(X, &cache);
    Matd dY(B, D);
    double loss = 0;
    const double scale = 1.0 / (static_cast<double>(B) * D);
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < D; ++j) {
            double r = Y.at(i, j) - eps.at(i, j);
            loss += weights[i] * r * r * scale;
            dY.at(i, j) = 2.0 * weights[i] * r * scale;
        }
    std::vector<double> grad = pol.net.backward_batch(cache, dY);
    std::vector<double> params = pol.net.flatten();
    opt.step(params, grad, lr);
    pol.net.unflatten(params);
    return loss;
}

std::vector<double> diffusion_sample(const DiffusionPolicy& pol,
                                     const std::vector<double>& S_raw, Rng& rng) {
    ++pol.sample_calls;
    const int D = pol.chunk_dim();
    const int T = pol.sched.T();
    std::vector<double> Sn = pol.normalize_hist(S_raw);

    std::vector<double> x(D);
    for (double& v : x) v = rng.normal();

    std::vector<double> in(D + pol.hist_dim() + kEmbedDim);
    for (int k = T; k >= 1; --k) {
        for (int j = 0; j < D; ++j) in[j] = x[j];
        for (int j = 0; j < pol.hist_dim(); ++j) in[D + j] = Sn[j];
        std::vector<double> emb = sinusoidal_embed(k, kEmbedDim);
        for (int j = 0; j < kEmbedDim; ++j) in[D + pol.hist_dim() + j] = emb[j];
        std::vector<double> eps = pol.net.forward(in);

        double a = pol.sched.alpha(k);
        double ab = pol.sched.abar[k];
        double abp = pol.sched.abar[k - 1];
        double coef = (1.0 - a) / std::sqrt(1.0 - ab);
        double inv = 1.0 / std::sqrt(a);
        for (int j = 0; j < D; ++j) x[j] = inv * (x[j] - coef * eps[j]);
        if (k > 1) {
            double sigma = std::sqrt((1.0 - abp) / (1.0 - ab) * (1.0 - a));
            for (int j = 0; j < D; ++j) x[j] += sigma * rng.normal();
        }
    }

    // Denormalize per action dimension and clip to the raw bounds.
    std::vector<double> out(D);
    for (int i = 0; i < pol.H; ++i)
        for (int d = 0; d < pol.action_dim; ++d) {
            double v = x[i * pol.action_dim + d] * pol.norm.action_std[d] +
                       pol.norm.action_mean[d];
            out[i * pol.action_dim + d] = std::clamp(v, pol.act_lo[d], pol.act_hi[d]);
        }
    return out;
}

std::vector<double> idql_select(const DiffusionPolicy& pol, const QcNets& nets,
                                const std::vector<double>& S_raw, int n_a, Rng& rng) {
    if (n_a < 1) throw std::invalid_argument("idql_select: n_a must be >= 1");
    std::vector<double> Sn = pol.normalize_hist(S_raw);
    // Critic input width reveals whether it scores full chunks or first actions.
    const int a_in = nets.q1.input_dim() - pol.hist_dim();

    std::vector<double> best;
    double best_q = 0;
    for (int s = 0; s < n_a; ++s) {
        std::vector<double> chunk = diffusion_sample(pol, S_raw, rng);
        std::vector<double> in = Sn;
        in.reserve(Sn.size() + a_in);
        for (int j = 0; j < a_in; ++j) {
            int d = j % pol.action_dim;
            in.push_back((chunk[j] - pol.norm.action_mean[d]) / pol.norm.action_std[d]);
        }
        double q = nets.q_min(in);
        if (s == 0 || q > best_q) {
            best_q = q;
            best = std::move(chunk);
        }
    }
    return best;
}

}  // namespace wm
