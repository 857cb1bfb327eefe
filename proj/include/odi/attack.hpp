#ifndef ODI_ATTACK_HPP
#define ODI_ATTACK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "odi/image.hpp"
#include "odi/model.hpp"
#include "odi/rng.hpp"
#include "odi/transforms.hpp"

namespace odi {

enum class LossKind { cross_entropy, logit, feature_pair_dodge, feature_pair_impersonate };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

// L = -logits[target]; the attack descends, raising the target logit.
std::pair<double, std::vector<double>> loss_logit(const std::vector<double>& logits, int target);

// L = -log softmax(logits)[target].
std::pair<double, std::vector<double>> loss_cross_entropy(const std::vector<double>& logits, int target);

// Squared feature distance d = ||a-b||^2; impersonation descends d, dodging
// descends -d. Gradient is w.r.t. a.
std::pair<double, std::vector<double>> loss_feature_pair(const std::vector<double>& emb_a,
                                                         const std::vector<double>& emb_b,
                                                         bool dodge);

// Objective the attack minimizes: classifier target or reference embedding.
struct LossSpec {
    LossKind kind = LossKind::logit;
    int target_class = 0;
    std::vector<double> ref_embedding; // feature-pair losses only

    std::pair<double, std::vector<double>> eval(const std::vector<double>& outputs) const;
};

struct AttackConfig {
    double eps = 16.0 / 255.0;
    double alpha = 2.0 / 255.0;
    int iters = 300;
    double mu = 1.0;        // momentum decay; 0 disables MI
    int ti_kernel_size = 5; // 1 disables TI smoothing
    LossKind loss = LossKind::logit;
    TransformParams transform;
    int si_copies = 1;   // m; > 1 enables SI with inputs x/2^i
    int vt_samples = 0;  // N; > 0 enables VT
    double vt_beta = 1.5;
    uint64_t seed = 0;

    void validate() const;
};

// TI sigma when only the kernel size is given.
inline double ti_sigma(int kernel_size) { return kernel_size / 3.0; }

struct AttackState {
    Image x;
    GradientField momentum;
    GradientField variance; // VT v_t, zero until the first vt_update
    int t = 0;
    bool variance_live = false; // false means variance is identically zero
};

AttackState init_attack_state(const Image& x0);

struct GradientEval {
    GradientField grad;
    double loss = 0.0;
};

// One gradient estimate: fresh transform draw per inference, SI averaging
// over scaled copies when enabled. Does not include the VT term.
GradientEval attack_gradient(const Image& x, const DifferentiableModel& model,
                             const LossSpec& loss, const AttackConfig& cfg, Rng& rng);

// v_{t+1} = (1/N) sum_i [grad(x + r_i) - grad(x)], r_i uniform in
// [-beta*eps, beta*eps] per component. beta == 0 short-circuits to zero
// without consuming randomness.
GradientField vt_update(const Image& x, const GradientEval& base,
                        const DifferentiableModel& model, const LossSpec& loss,
                        const AttackConfig& cfg, Rng& rng);

// g~ = mu*g + ghat/||ghat||_1, TI smoothing, x' = clip(x - alpha*sign(g)).
// A zero ghat stalls the iteration: x and momentum stay untouched.
struct StepResult {
    bool stalled = false;
};
StepResult attack_step(AttackState& state, const GradientField& ghat, const Image& x0,
                       const AttackConfig& cfg, const Kernel& ti_kernel);

struct AttackTrace {
    std::vector<double> loss;                       // per iteration
    std::vector<std::pair<int, Image>> snapshots;   // after the listed iterations
    int stalled_iters = 0;
};

Image run_attack(const Image& x, const LossSpec& loss, const DifferentiableModel& model,
                 const AttackConfig& cfg, const std::vector<int>& snapshot_iters = {},
                 AttackTrace* trace = nullptr);

// Classifier convenience wrapper.
Image run_attack(const Image& x, int target_class, const DifferentiableModel& model,
                 const AttackConfig& cfg, const std::vector<int>& snapshot_iters = {},
                 AttackTrace* trace = nullptr);

} // namespace odi

#endif
