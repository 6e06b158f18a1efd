#include "tipsynth/train.hpp"

#include <cmath>

namespace tipsynth {

void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               const AdamConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.step));
    for (auto& [name, p] : params.all()) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const Tensor& g = git->second;
        if (g.shape != p.shape) throw ShapeError("adam: grad shape mismatch for " + name);
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        for (size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = cfg.beta1 * m.data[i] + (1.0f - cfg.beta1) * g.data[i];
            v.data[i] = cfg.beta2 * v.data[i] + (1.0f - cfg.beta2) * g.data[i] * g.data[i];
            const double mh = m.data[i] / bc1;
            const double vh = v.data[i] / bc2;
            p.data[i] -= static_cast<float>(cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
        }
    }
}

TrainResult train_model(ParamStore& params, const LossBuilder& build_loss, const TrainConfig& cfg) {
    TrainResult result;
    AdamState adam;
    RngState rng(cfg.seed);
    for (int step = 0; step < cfg.steps; ++step) {
        Tape<float> tape;
        ParamsView<float> view = ParamsView<float>::upload(tape, params, true);
        Val<float> loss = build_loss(tape, view, rng, step);
        const double lv = static_cast<double>(loss.v().data[0]);
        if (!std::isfinite(lv) || lv > cfg.divergence_limit) {
            throw ValidationError("training diverged at step " + std::to_string(step) +
                                  ": loss = " + std::to_string(lv));
        }
        result.losses.push_back(lv);
        tape.backward(loss);
        adam_step(params, view.grads(), adam, cfg.adam);
    }
    return result;
}

GradCheckReport gradient_check(const ParamStore& params, const LossBuilderD& build_loss,
                               double eps) {
    // analytic gradients
    std::map<std::string, Tens<double>> analytic;
    {
        Tape<double> tape;
        ParamsView<double> view = ParamsView<double>::upload(tape, params, true);
        Val<double> loss = build_loss(tape, view);
        if (loss.v().numel() != 1) throw ShapeError("gradient_check needs a scalar loss");
        if (!std::isfinite(loss.v().data[0])) throw ValidationError("gradient_check: non-finite loss");
        tape.backward(loss);
        for (const auto& [name, val] : view.vals) {
            auto& node = tape.node(val.idx);
            analytic.emplace(name, node.grad_alloc ? node.grad : Tens<double>::zeros(node.val.shape));
        }
    }

    // double shadow copy for perturbation
    std::map<std::string, Tens<double>> shadow;
    for (const auto& [name, t] : params.all()) shadow.emplace(name, tensor_cast<double>(t));

    auto eval = [&]() -> double {
        Tape<double> tape;
        ParamsView<double> view;
        view.tape = &tape;
        for (const auto& [name, t] : shadow) view.vals.emplace(name, tape.leaf(t, false));
        Val<double> loss = build_loss(tape, view);
        return loss.v().data[0];
    };

    GradCheckReport report;
    for (auto& [name, t] : shadow) {
        const Tens<double>& ga = analytic.at(name);
        for (size_t i = 0; i < t.data.size(); ++i) {
            const double keep = t.data[i];
            t.data[i] = keep + eps;
            const double up = eval();
            t.data[i] = keep - eps;
            const double dn = eval();
            t.data[i] = keep;
            const double fd = (up - dn) / (2.0 * eps);
            const double an = ga.data[i];
            const double mag = std::max(std::abs(fd), std::abs(an));
            // relative error, switching to absolute for near-zero gradients
            const double err = mag < 1e-8 ? std::abs(fd - an) : std::abs(fd - an) / mag;
            ++report.checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = name;
                report.worst_index = static_cast<int64_t>(i);
            }
        }
    }
    return report;
}

}  // namespace tipsynth
