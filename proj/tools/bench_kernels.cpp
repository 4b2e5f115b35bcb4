// Times the OpenMP kernels against their serial references and the two
// pipeline hot paths (controller rollouts, diffusion inference). The parallel
// kernels must agree bitwise with the serial ones, so the residual column has
// to read 0.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "core/mat.hpp"
#include "core/mlp.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "momaworld/world.hpp"
#include "qcrl/qcrl.hpp"
#include "wbcgen/wbc.hpp"

using namespace wm;

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double median_ms(F&& body, int reps = 5) {
    std::vector<double> t;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        body();
        auto t1 = Clock::now();
        t.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

Mat<double> random_mat(int r, int c, Rng& rng) {
    Mat<double> m(r, c);
    for (double& v : m.a) v = rng.uniform(-1.0, 1.0);
    return m;
}

double max_abs_diff(const Mat<double>& a, const Mat<double>& b) {
    double d = 0;
    for (size_t i = 0; i < a.a.size(); ++i) d = std::max(d, std::abs(a.a[i] - b.a[i]));
    return d;
}

void bench_gemm() {
    Rng rng(1);
    const int B = 256, K = 512, N = 512;
    Mat<double> A = random_mat(B, K, rng);
    Mat<double> Wt = random_mat(N, K, rng);   // nt consumes the transposed layout
    Mat<double> Bn = random_mat(K, N, rng);
    Mat<double> G = random_mat(B, N, rng);
    Mat<double> C1(B, N), C2(B, N), D1(B, K), D2(B, K), E1(K, N), E2(K, N);

    double s_nt = median_ms([&] { matmul_nt_serial(A, Wt, C1); });
    double p_nt = median_ms([&] { matmul_nt(A, Wt, C2); });
    double s_nn = median_ms([&] { matmul_nn_serial(G, Wt, D1); });
    double p_nn = median_ms([&] { matmul_nn(G, Wt, D2); });
    double s_tn = median_ms([&] { matmul_tn_serial(A, G, E1); });
    double p_tn = median_ms([&] { matmul_tn(A, G, E2); });

    std::printf("%-28s %10.2f %10.2f %8.2fx %10.3g\n", "gemm_nt 256x512*512x512", s_nt, p_nt,
                s_nt / p_nt, max_abs_diff(C1, C2));
    std::printf("%-28s %10.2f %10.2f %8.2fx %10.3g\n", "gemm_nn 256x512*512x512", s_nn, p_nn,
                s_nn / p_nn, max_abs_diff(D1, D2));
    std::printf("%-28s %10.2f %10.2f %8.2fx %10.3g\n", "gemm_tn 512x256*256x512", s_tn, p_tn,
                s_tn / p_tn, max_abs_diff(E1, E2));
}

void bench_mlp() {
    Rng rng(2);
    Mlpd net({96, 512, 512, 512, 176}, rng);
    Mat<double> X = random_mat(256, 96, rng);
    Mat<double> dY = random_mat(256, 176, rng);
    Mlpd::Cache cache;
    double fwd = median_ms([&] { net.forward_batch(X, &cache); });
    double bwd = median_ms([&] {
        net.forward_batch(X, &cache);
        net.backward_batch(cache, dY);
    });
    std::printf("%-28s %10.2f %10s %8s %10s\n", "mlp_forward b256 512^3", fwd, "-", "-", "-");
    std::printf("%-28s %10.2f %10s %8s %10s\n", "mlp_fwd+bwd b256 512^3", bwd, "-", "-", "-");
}

void bench_rollout() {
    Rng rng(3);
    WbcParams p = sample_params(rng);
    double ms = median_ms([&] { (void)rollout_wbc(Task::Door, 17, p); }, 3);
    std::printf("%-28s %10.2f %10s %8s %10s\n", "wbc_rollout door episode", ms, "-", "-", "-");
}

void bench_inference() {
    TrainConfig c;
    c.seed = 4;
    NormStats norm;
    norm.state_mean.assign(wk::kStateDim, 0.0);
    norm.state_std.assign(wk::kStateDim, 1.0);
    norm.action_mean.assign(wk::kActionDim, 0.0);
    norm.action_std.assign(wk::kActionDim, 1.0);
    std::vector<double> lo(wk::kActionDim, -1.0), hi(wk::kActionDim, 1.0);
    DiffusionPolicy pol = make_policy(c, wk::kStateDim, wk::kActionDim, norm, lo, hi);
    std::vector<double> S(static_cast<size_t>(c.K) * wk::kStateDim, 0.1);
    Rng rng(5);
    double ms = median_ms([&] { (void)diffusion_sample(pol, S, rng); }, 3);
    std::printf("%-28s %10.2f %10s %8s %10s  (%.1f control ticks)\n", "diffusion_sample 20 steps",
                ms, "-", "-", "-", ms / (wk::kDt * 1000.0));
}

}  // namespace

int main() {
    std::printf("workers: %d\n", worker_count());
    std::printf("%-28s %10s %10s %8s %10s\n", "kernel", "serial_ms", "omp_ms", "speedup",
                "max|diff|");
    bench_gemm();
    bench_mlp();
    bench_rollout();
    bench_inference();
    return 0;
}
