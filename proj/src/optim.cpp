#include "sofar/optim.hpp"

#include <cmath>

#include "sofar/error.hpp"

namespace sofar {

void SgdMomentum::step(const std::string& name, Tensor& param, const Tensor& grad, float lr) {
    SOFAR_CHECK_SHAPE(param.same_shape(grad), "sgd: grad shape mismatch for " + name);
    auto it = velocity.find(name);
    if (it == velocity.end())
        it = velocity.emplace(name, Tensor(param.shape(), 0.0f)).first;
    Tensor& v = it->second;
    for (int64_t i = 0; i < param.numel(); ++i) {
        const float g = grad[i] + weight_decay * param[i];
        v[i] = momentum * v[i] + g;
        param[i] -= lr * v[i];
    }
}

void Adam::step(const std::string& name, Tensor& param, const Tensor& grad, float lr) {
    SOFAR_CHECK_SHAPE(param.same_shape(grad), "adam: grad shape mismatch for " + name);
    SOFAR_CHECK(t >= 1, "adam: begin_step() not called");
    auto mit = m.find(name);
    if (mit == m.end()) {
        m.emplace(name, Tensor(param.shape(), 0.0f));
        v.emplace(name, Tensor(param.shape(), 0.0f));
        mit = m.find(name);
    }
    Tensor& m1 = mit->second;
    Tensor& m2 = v.at(name);
    const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(t));
    const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(t));
    for (int64_t i = 0; i < param.numel(); ++i) {
        const float g = grad[i] + weight_decay * param[i];
        m1[i] = beta1 * m1[i] + (1.0f - beta1) * g;
        m2[i] = beta2 * m2[i] + (1.0f - beta2) * g * g;
        const float mhat = m1[i] / bc1;
        const float vhat = m2[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

float lr_at(const Schedule& s, int epoch) {
    SOFAR_CHECK(epoch >= 0 && epoch <= s.epochs, "lr_at: epoch out of range");
    if (s.kind == ScheduleKind::Step) {
        float lr = s.base_lr;
        for (int m : s.milestones)
            if (epoch >= m) lr *= s.factor;
        return lr;
    }
    // cosine annealing to zero
    const double x = static_cast<double>(epoch) / static_cast<double>(s.epochs);
    return static_cast<float>(s.base_lr * (1.0 + std::cos(3.14159265358979323846 * x)) / 2.0);
}

}  // namespace sofar
