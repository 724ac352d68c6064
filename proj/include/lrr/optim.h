// optim.h — named parameter sets, global-norm clipping, AdamW.
#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "lrr/tensor.h"

namespace lrr {

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
void zero_grad(ParamList<T>& params) {
    for (auto& p : params) {
        auto& g = p.tensor.grad();
        std::fill(g.begin(), g.end(), T(0));
    }
}

template <typename T>
int64_t param_count(const ParamList<T>& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.tensor.numel();
    return n;
}

// Scales all grads so their global L2 norm is at most max_norm; returns the
// pre-clip norm. Accumulates in double regardless of T.
template <typename T>
double clip_global_norm(ParamList<T>& params, double max_norm) {
    double sq = 0;
    for (auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        const T factor = static_cast<T>(max_norm / norm);
        for (auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (T& g : p.tensor.grad()) g *= factor;
        }
    }
    return norm;
}

// AdamW with bias correction and decoupled weight decay:
//   p *= 1 - lr*wd;  p -= lr * mhat / (sqrt(vhat) + eps)
template <typename T>
class AdamW {
  public:
    struct Config {
        double lr = 1e-5;
        double beta1 = 0.9;
        double beta2 = 0.95;
        double weight_decay = 0.1;
        double eps = 1e-8;
    };

    explicit AdamW(Config cfg) : cfg_(cfg) {}

    void step(ParamList<T>& params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        const T decay = static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay);
        for (auto& p : params) {
            const size_t n = static_cast<size_t>(p.tensor.numel());
            auto& slot = slots_[p.name];
            if (slot.m.empty()) {
                slot.m.assign(n, T(0));
                slot.v.assign(n, T(0));
            }
            check(slot.m.size() == n, "adamw_step: state shape drift for '", p.name, "': ",
                  slot.m.size(), " vs ", n);
            check(p.tensor.has_grad(), "adamw_step: parameter '", p.name, "' has no grad");
            T* pv = p.tensor.value().data();
            const T* g = p.tensor.grad().data();
            T* m = slot.m.data();
            T* v = slot.v.data();
            const T b1 = static_cast<T>(cfg_.beta1);
            const T b2 = static_cast<T>(cfg_.beta2);
            const T one_b1 = static_cast<T>(1.0 - cfg_.beta1);
            const T one_b2 = static_cast<T>(1.0 - cfg_.beta2);
            const T lr = static_cast<T>(cfg_.lr);
            const T eps = static_cast<T>(cfg_.eps);
            const T inv_bc1 = static_cast<T>(1.0 / bc1);
            const T inv_bc2 = static_cast<T>(1.0 / bc2);
            for (size_t i = 0; i < n; ++i) {
                pv[i] *= decay;
                m[i] = b1 * m[i] + one_b1 * g[i];
                v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                const T mhat = m[i] * inv_bc1;
                const T vhat = v[i] * inv_bc2;
                pv[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

    int64_t t() const { return t_; }
    const Config& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

  private:
    struct Slot {
        std::vector<T> m;
        std::vector<T> v;
    };
    Config cfg_;
    int64_t t_ = 0;
    std::unordered_map<std::string, Slot> slots_;
};

}  // namespace lrr
