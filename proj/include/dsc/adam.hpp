#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace dsc {

/// Adaptive-moment gradient descent over a fixed list of parameter arrays.
/// The list (count and sizes) must be the same on every step.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    double learning_rate() const { return lr_; }

    void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.size(), 0.0);
                v_.emplace_back(p.size(), 0.0);
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t a = 0; a < params.size(); ++a) {
            auto p = params[a];
            auto g = grads[a];
            auto& m = m_[a];
            auto& v = v_[a];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            }
        }
    }

private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    int t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace dsc
