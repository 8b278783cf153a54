#pragma once

// Adaptive-moment optimizer with decoupled weight decay, plus global-norm
// gradient clipping. Update:
//   m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
//   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + decay * p)

#include <cmath>
#include <cstddef>
#include <vector>

#include "aao/errors.hpp"
#include "aao/tensor.hpp"

namespace aao {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg) : cfg_(cfg), params_(std::move(params)) {
        for (const auto& p : params_) {
            if (!p.requires_grad()) throw contract_error("optimizer: parameter without grad");
            m_.emplace_back(p.numel(), 0.0);
            v_.emplace_back(p.numel(), 0.0);
        }
    }

    std::size_t step_count() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }

    void zero_grad() {
        for (const auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Tensor& p = params_[k];
            const std::vector<double>& g = p.grad();
            for (std::size_t i = 0; i < p.numel(); ++i) {
                m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
                v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mh = m_[k][i] / bc1;
                const double vh = v_[k][i] / bc2;
                p.at(i) -= cfg_.lr * (mh / (std::sqrt(vh) + cfg_.eps) +
                                      cfg_.weight_decay * p.at(i));
            }
        }
    }

private:
    AdamWConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

// Scales all grads so their joint 2-norm is at most max_norm; returns the
// pre-clip norm.
inline double clip_global_norm(const std::vector<Tensor>& params, double max_norm) {
    double norm2 = 0.0;
    for (const auto& p : params)
        for (double g : p.grad()) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (const auto& p : params)
            for (double& g : p.grad()) g *= scale;
    }
    return norm;
}

}  // namespace aao
