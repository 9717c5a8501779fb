#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "gensar/error.hpp"
#include "gensar/mlp.hpp"

namespace gensar {

// Adam. Parameters are registered as (value span, gradient span) pairs; one
// step updates every registered parameter.
template <typename T>
class Adam {
public:
    explicit Adam(T lr = T(1e-3), T beta1 = T(0.9), T beta2 = T(0.999),
                  T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void add(std::span<T> value, std::span<T> grad) {
        if (value.size() != grad.size())
            throw DimensionError("adam: value/grad size mismatch");
        params_.push_back({value, grad, std::vector<T>(value.size(), T(0)),
                           std::vector<T>(value.size(), T(0))});
    }

    void add(Mlp<T>& mlp) {
        for (auto& l : mlp.layers()) {
            add(std::span<T>(l.w.d), std::span<T>(l.gw.d));
            add(std::span<T>(l.b.d), std::span<T>(l.gb.d));
        }
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), t_);
        double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), t_);
        for (auto& p : params_) {
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                T g = p.grad[i];
                p.m[i] = beta1_ * p.m[i] + (T(1) - beta1_) * g;
                p.v[i] = beta2_ * p.v[i] + (T(1) - beta2_) * g * g;
                double mhat = static_cast<double>(p.m[i]) / bc1;
                double vhat = static_cast<double>(p.v[i]) / bc2;
                p.value[i] -= static_cast<T>(static_cast<double>(lr_) * mhat /
                                             (std::sqrt(vhat) + static_cast<double>(eps_)));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_)
            std::fill(p.grad.begin(), p.grad.end(), T(0));
    }

    long step_count() const { return t_; }
    T learning_rate() const { return lr_; }
    void set_learning_rate(T lr) { lr_ = lr; }

private:
    struct Slot {
        std::span<T> value;
        std::span<T> grad;
        std::vector<T> m;
        std::vector<T> v;
    };
    std::vector<Slot> params_;
    T lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

}  // namespace gensar
