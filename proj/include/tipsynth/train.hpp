#pragma once

#include <functional>

#include "tipsynth/nn.hpp"

namespace tipsynth {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

struct AdamState {
    std::map<std::string, Tensor> m, v;
    int64_t step = 0;
};

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

struct TrainConfig {
    int steps = 100;
    uint64_t seed = 1;
    AdamConfig adam;
    double divergence_limit = 1e6;
};

struct TrainResult {
    std::vector<double> losses;  // one entry per step
};

// Builds the loss graph for one step; the builder owns sample selection and
// must be deterministic given (rng, step).
using LossBuilder = std::function<Val<float>(Tape<float>&, const ParamsView<float>&, RngState&, int)>;

TrainResult train_model(ParamStore& params, const LossBuilder& build_loss, const TrainConfig& cfg);

// Central-difference gradient verification. Both the analytic backward pass
// and the finite differences run in a double-precision shadow of the store.
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    int64_t checked = 0;
};

using LossBuilderD = std::function<Val<double>(Tape<double>&, const ParamsView<double>&)>;

GradCheckReport gradient_check(const ParamStore& params, const LossBuilderD& build_loss,
                               double eps = 1e-3);

}  // namespace tipsynth
