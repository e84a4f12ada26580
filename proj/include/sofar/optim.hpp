#pragma once

#include <map>
#include <string>
#include <vector>

#include "sofar/tensor.hpp"

namespace sofar {

// v <- mu*v + g + wd*w;  w <- w - lr*v
struct SgdMomentum {
    float momentum = 0.9f;
    float weight_decay = 0.0f;
    std::map<std::string, Tensor> velocity;

    void step(const std::string& name, Tensor& param, const Tensor& grad, float lr);
};

// bias-corrected Adam; weight decay is added to the gradient
struct Adam {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
    int64_t t = 0;
    std::map<std::string, Tensor> m, v;

    void begin_step() { ++t; }
    void step(const std::string& name, Tensor& param, const Tensor& grad, float lr);
};

enum class ScheduleKind { Step, Cosine };

struct Schedule {
    ScheduleKind kind = ScheduleKind::Step;
    float base_lr = 0.1f;
    std::vector<int> milestones;  // step schedule, strictly increasing
    float factor = 0.1f;
    int epochs = 100;  // cosine horizon
};

// Learning rate at the start of `epoch` in [0, epochs).
float lr_at(const Schedule& s, int epoch);

}  // namespace sofar
