#pragma once
#include <vector>

#include "core/mlp.hpp"

// Central finite-difference gradient of J(params) = <upstream, net(x)>.
// Independent oracle for the analytic backprop: it only uses the forward
// pass and parameter flattening.
namespace wmtest {

inline std::vector<double> fd_gradient(wm::Mlp<double>& net, const std::vector<double>& x,
                                       const std::vector<double>& upstream, double h = 1e-5) {
    auto eval = [&](const std::vector<double>& p) {
        net.unflatten(p);
        std::vector<double> y = net.forward(x);
        double j = 0;
        for (size_t i = 0; i < y.size(); ++i) j += upstream[i] * y[i];
        return j;
    };
    std::vector<double> p0 = net.flatten();
    std::vector<double> g(p0.size());
    std::vector<double> p = p0;
    for (size_t i = 0; i < p0.size(); ++i) {
        p[i] = p0[i] + h;
        double jp = eval(p);
        p[i] = p0[i] - h;
        double jm = eval(p);
        p[i] = p0[i];
        g[i] = (jp - jm) / (2.0 * h);
    }
    net.unflatten(p0);
    return g;
}

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
    double worst = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

} // namespace wmtest
