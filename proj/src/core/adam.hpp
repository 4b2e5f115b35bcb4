#pragma once
#include <cmath>
#include <stdexcept>
#include <vector>

namespace wm {

// Adam with bias correction. Moments live with the optimizer; the parameter
// vector is updated in place. Non-finite gradients are a hard error: silently
// skipping them would desynchronize runs that must be reproducible.
template <typename T>
class Adam {
  public:
    Adam(size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(n, T(0)), v_(n, T(0)), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<T>& params, const std::vector<T>& grad, double lr) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw std::runtime_error("adam: size mismatch");
        for (size_t i = 0; i < grad.size(); ++i)
            if (!std::isfinite(static_cast<double>(grad[i])))
                throw std::runtime_error("adam: non-finite gradient");
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        for (size_t i = 0; i < params.size(); ++i) {
            const double g = static_cast<double>(grad[i]);
            const double m = beta1_ * static_cast<double>(m_[i]) + (1.0 - beta1_) * g;
            const double v = beta2_ * static_cast<double>(v_[i]) + (1.0 - beta2_) * g * g;
            m_[i] = static_cast<T>(m);
            v_[i] = static_cast<T>(v);
            const double mhat = m / c1;
            const double vhat = v / c2;
            params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * mhat / (std::sqrt(vhat) + eps_));
        }
    }

    long steps_taken() const { return t_; }

  private:
    std::vector<T> m_, v_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
};

} // namespace wm
