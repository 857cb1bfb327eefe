#include "odi/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace odi {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "cross_entropy") return LossKind::cross_entropy;
    if (s == "logit") return LossKind::logit;
    if (s == "feature_pair_dodge") return LossKind::feature_pair_dodge;
    if (s == "feature_pair_impersonate") return LossKind::feature_pair_impersonate;
    throw std::runtime_error("unknown loss kind: " + s);
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::cross_entropy: return "cross_entropy";
        case LossKind::logit: return "logit";
        case LossKind::feature_pair_dodge: return "feature_pair_dodge";
        case LossKind::feature_pair_impersonate: return "feature_pair_impersonate";
    }
    return "?";
}

std::pair<double, std::vector<double>> loss_logit(const std::vector<double>& logits, int target) {
    if (target < 0 || target >= static_cast<int>(logits.size()))
        throw std::out_of_range("loss_logit: target class out of range");
    std::vector<double> grad(logits.size(), 0.0);
    grad[target] = -1.0;
    return {-logits[target], std::move(grad)};
}

std::pair<double, std::vector<double>> loss_cross_entropy(const std::vector<double>& logits, int target) {
    if (target < 0 || target >= static_cast<int>(logits.size()))
        throw std::out_of_range("loss_cross_entropy: target class out of range");
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    std::vector<double> grad(logits.size());
    for (size_t k = 0; k < logits.size(); ++k) grad[k] = std::exp(logits[k] - mx) / z;
    double loss = -(logits[target] - mx - std::log(z));
    grad[target] -= 1.0;
    return {loss, std::move(grad)};
}

std::pair<double, std::vector<double>> loss_feature_pair(const std::vector<double>& emb_a,
                                                         const std::vector<double>& emb_b,
                                                         bool dodge) {
    if (emb_a.size() != emb_b.size())
        throw std::invalid_argument("loss_feature_pair: dimension mismatch");
    double d = 0.0;
    std::vector<double> grad(emb_a.size());
    double s = dodge ? -1.0 : 1.0;
    for (size_t i = 0; i < emb_a.size(); ++i) {
        double diff = emb_a[i] - emb_b[i];
        d += diff * diff;
        grad[i] = s * 2.0 * diff;
    }
    return {s * d, std::move(grad)};
}

std::pair<double, std::vector<double>> LossSpec::eval(const std::vector<double>& outputs) const {
    switch (kind) {
        case LossKind::logit: return loss_logit(outputs, target_class);
        case LossKind::cross_entropy: return loss_cross_entropy(outputs, target_class);
        case LossKind::feature_pair_dodge: return loss_feature_pair(outputs, ref_embedding, true);
        case LossKind::feature_pair_impersonate: return loss_feature_pair(outputs, ref_embedding, false);
    }
    throw std::logic_error("LossSpec: bad kind");
}

void AttackConfig::validate() const {
    if (eps < 0.0) throw std::invalid_argument("attack: eps must be >= 0");
    if (alpha < 0.0) throw std::invalid_argument("attack: alpha must be >= 0");
    if (iters < 0) throw std::invalid_argument("attack: iters must be >= 0");
    if (ti_kernel_size < 1 || ti_kernel_size % 2 == 0)
        throw std::invalid_argument("attack: ti_kernel_size must be odd and >= 1");
    if (si_copies < 1) throw std::invalid_argument("attack: si_copies must be >= 1");
    if (vt_samples < 0) throw std::invalid_argument("attack: vt_samples must be >= 0");
    if (vt_beta < 0.0) throw std::invalid_argument("attack: vt_beta must be >= 0");
}

AttackState init_attack_state(const Image& x0) {
    AttackState s;
    s.x = x0;
    s.momentum = GradientField(x0.width, x0.height);
    s.variance = GradientField(x0.width, x0.height);
    s.t = 0;
    return s;
}

namespace {

// Gradient of loss(model(transform(u))) w.r.t. u, one fresh transform draw.
GradientEval grad_once(const Image& u, const DifferentiableModel& model, const LossSpec& loss,
                       const AttackConfig& cfg, Rng& rng) {
    TransformResult tr = apply_transform(cfg.transform, u, rng);
    EvalResult ev = model.forward_backward(tr.out, [&](const std::vector<double>& outputs) {
        return loss.eval(outputs);
    });
    GradientEval ge;
    ge.loss = ev.loss;
    ge.grad = transform_backward(tr.rec, ev.grad_input);
    return ge;
}

} // namespace

GradientEval attack_gradient(const Image& x, const DifferentiableModel& model,
                             const LossSpec& loss, const AttackConfig& cfg, Rng& rng) {
    if (cfg.si_copies == 1) return grad_once(x, model, loss, cfg, rng);

    // SI: average the gradients of x / 2^i; the 1/2^i chain factor maps each
    // copy's gradient back to x.
    GradientEval acc;
    acc.grad = GradientField(x.width, x.height);
    double inv_m = 1.0 / static_cast<double>(cfg.si_copies);
    Image scaled = x;
    double scale = 1.0;
    for (int i = 0; i < cfg.si_copies; ++i) {
        if (i > 0) {
            scale *= 0.5;
            for (size_t k = 0; k < x.data.size(); ++k) scaled.data[k] = x.data[k] * scale;
        }
        GradientEval ge = grad_once(scaled, model, loss, cfg, rng);
        for (size_t k = 0; k < acc.grad.data.size(); ++k)
            acc.grad.data[k] += inv_m * scale * ge.grad.data[k];
        acc.loss += inv_m * ge.loss;
    }
    return acc;
}

GradientField vt_update(const Image& x, const GradientEval& base,
                        const DifferentiableModel& model, const LossSpec& loss,
                        const AttackConfig& cfg, Rng& rng) {
    GradientField v(x.width, x.height);
    if (cfg.vt_samples < 1 || cfg.vt_beta == 0.0) return v; // exactly zero, no draws
    double span = cfg.vt_beta * cfg.eps;
    double inv_n = 1.0 / static_cast<double>(cfg.vt_samples);
    Image probe(x.width, x.height);
    for (int i = 0; i < cfg.vt_samples; ++i) {
        for (size_t k = 0; k < x.data.size(); ++k)
            probe.data[k] = x.data[k] + rng.uniform(-span, span);
        GradientEval ge = attack_gradient(probe, model, loss, cfg, rng);
        for (size_t k = 0; k < v.data.size(); ++k)
            v.data[k] += inv_n * (ge.grad.data[k] - base.grad.data[k]);
    }
    return v;
}

StepResult attack_step(AttackState& state, const GradientField& ghat, const Image& x0,
                       const AttackConfig& cfg, const Kernel& ti_kernel) {
    double n = l1_norm(ghat);
    if (n == 0.0) {
        ++state.t;
        return {true};
    }
    GradientField gtilde(state.x.width, state.x.height);
    for (size_t i = 0; i < gtilde.data.size(); ++i)
        gtilde.data[i] = cfg.mu * state.momentum.data[i] + ghat.data[i] / n;
    // the carried gradient g_t is the TI-smoothed accumulator
    state.momentum = ti_kernel.size == 1 ? std::move(gtilde) : conv2d_same(gtilde, ti_kernel);

    Image stepped(state.x.width, state.x.height);
    for (size_t i = 0; i < stepped.data.size(); ++i) {
        double gv = state.momentum.data[i];
        double s = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
        stepped.data[i] = state.x.data[i] - cfg.alpha * s;
    }
    state.x = clip_linf(stepped, x0, cfg.eps);
    ++state.t;
    return {false};
}

Image run_attack(const Image& x, const LossSpec& loss, const DifferentiableModel& model,
                 const AttackConfig& cfg, const std::vector<int>& snapshot_iters,
                 AttackTrace* trace) {
    cfg.validate();
    Rng rng(cfg.seed);
    AttackState state = init_attack_state(x);
    Kernel ti_kernel = cfg.ti_kernel_size > 1
                           ? gaussian_kernel(cfg.ti_kernel_size, ti_sigma(cfg.ti_kernel_size))
                           : Kernel{1, {1.0}};

    bool vt_on = cfg.vt_samples > 0 && cfg.vt_beta > 0.0;
    for (int t = 0; t < cfg.iters; ++t) {
        GradientEval base = attack_gradient(state.x, model, loss, cfg, rng);
        GradientField ghat = base.grad;
        if (vt_on && state.variance_live)
            for (size_t i = 0; i < ghat.data.size(); ++i) ghat.data[i] += state.variance.data[i];

        // the variance term is built from neighbors of the current iterate
        if (vt_on) {
            state.variance = vt_update(state.x, base, model, loss, cfg, rng);
            state.variance_live = true;
        }
        StepResult sr = attack_step(state, ghat, x, cfg, ti_kernel);

        if (trace) {
            trace->loss.push_back(base.loss);
            if (sr.stalled) ++trace->stalled_iters;
            if (std::find(snapshot_iters.begin(), snapshot_iters.end(), t + 1) != snapshot_iters.end())
                trace->snapshots.emplace_back(t + 1, state.x);
        }
    }
    return state.x;
}

Image run_attack(const Image& x, int target_class, const DifferentiableModel& model,
                 const AttackConfig& cfg, const std::vector<int>& snapshot_iters,
                 AttackTrace* trace) {
    LossSpec spec;
    spec.kind = cfg.loss;
    spec.target_class = target_class;
    return run_attack(x, spec, model, cfg, snapshot_iters, trace);
}

} // namespace odi
