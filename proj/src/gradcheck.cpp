#include "hadamix/gradcheck.hpp"

#include <cmath>
#include <cstdlib>

#include "hadamix/attention.hpp"
#include "hadamix/rng.hpp"

namespace hadamix {

namespace {

// Two float32 effects bound the achievable accuracy: each loss evaluation
// carries rounding noise (error ~ 1/h, pushing the step up), and curvature
// truncates the difference quotient (error ~ h^2, pushing it down). The
// Richardson stencil below cancels the h^2 term, which decouples the two —
// but the residual h^4 term still explodes once h nears the smallest feature
// scale of the probed system. Module-level checks see O(1) activations and
// take the large step; the full-model loss runs through 0.02-scale embedding
// rows and needs the small one. The scale floor keeps leftover noise from
// registering as relative error on near-zero gradients while still catching
// any absolute error above tolerance * floor.
constexpr double kStepModule = 1.5e-2;
constexpr double kStepModel = 2e-3;
constexpr double kScaleFloor = 3e-2;

void score_entry(double fd, double an, GradCheckResult& res) {
    const double scale = std::max(std::abs(fd), std::abs(an));
    if (scale < kScaleFloor)
        ++res.skipped;  // scored against the floor, not the tiny magnitude
    else
        ++res.checked;
    const double rel = std::abs(fd - an) / std::max(scale, kScaleFloor);
    if (rel > res.max_rel_err) res.max_rel_err = rel;
}

// Richardson-extrapolated central difference on one float slot: combines the
// h and 2h estimates as (4 D(h) - D(2h)) / 3, cancelling the h^2 term. Each
// quotient uses the actually-realized float perturbation as its denominator
// so f32 rounding does not bias it.
template <typename LossFn>
void fd_entry(float& slot, double analytic, double step, LossFn&& loss,
              GradCheckResult& res) {
    const float saved = slot;
    auto central = [&](double h) {
        slot = static_cast<float>(saved + h);
        const double lp = loss();
        const float hi = slot;
        slot = static_cast<float>(saved - h);
        const double lm = loss();
        const float lo = slot;
        slot = saved;
        return (lp - lm) / (static_cast<double>(hi) - static_cast<double>(lo));
    };
    const double fd = (4.0 * central(step) - central(2.0 * step)) / 3.0;
    score_entry(fd, analytic, res);
}

double projected_sum(const Tensor& out, const Tensor& r) {
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i)
        acc += static_cast<double>(out.data()[i]) * static_cast<double>(r.data()[i]);
    return acc;
}

Tensor random_tensor(std::initializer_list<int64_t> shape, Rng& rng, float scale) {
    Tensor t = Tensor::zeros(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = scale * rng.normal();
    return t;
}

}  // namespace

GradCheckResult check_attention_grads(AttentionVariant variant, int64_t d, int n_heads,
                                      int64_t T, uint64_t seed) {
    Rng rng(seed);
    AttentionWeights w = variant == AttentionVariant::hadamard
                             ? AttentionWeights::make_hadamard(d, n_heads, rng)
                             : AttentionWeights::make_dense(d, n_heads, rng);
    Tensor x = random_tensor({T, d}, rng, 1.0f);
    Tensor r = random_tensor({T, d}, rng, 1.0f);

    auto loss = [&]() {
        Tensor out = attention_forward(x, w);
        return projected_sum(out, r);
    };

    for (ParamTensor* p : w.params()) p->zero_grad();
    AttentionActs acts;
    attention_forward(x, w, nullptr, 0, &acts);
    Tensor dx = attention_backward(w, acts, r);

    GradCheckResult res;
    for (ParamTensor* p : w.params()) {
        for (int64_t i = 0; i < p->numel(); ++i)
            fd_entry(p->value.data()[i], p->grad.data()[i], kStepModule, loss, res);
    }
    for (int64_t i = 0; i < x.numel(); ++i)
        fd_entry(x.data()[i], dx.data()[i], kStepModule, loss, res);
    return res;
}

GradCheckResult check_model_grads(const ModelConfig& cfg, int64_t T, uint64_t seed) {
    cfg.validate();
    TransformerModel model = TransformerModel::init(cfg, seed);
    Rng rng(mix_seed(seed));
    std::vector<int32_t> tokens(static_cast<size_t>(T));
    std::vector<int32_t> targets(static_cast<size_t>(T));
    for (auto& t : tokens)
        t = static_cast<int32_t>(rng.uniform_int(0, cfg.vocab_size - 1));
    for (auto& t : targets)
        t = static_cast<int32_t>(rng.uniform_int(0, cfg.vocab_size - 1));

    auto loss = [&]() {
        Tensor logits = model_forward(model, tokens);
        return cross_entropy_loss(logits, targets);
    };

    model.zero_grads();
    ModelActs acts;
    Tensor logits = model_forward(model, tokens, nullptr, 0, &acts);
    Tensor dlogits;
    cross_entropy_loss(logits, targets, &dlogits);
    model_backward(model, acts, dlogits);

    GradCheckResult res;
    for (ParamTensor* p : model.params()) {
        for (int64_t i = 0; i < p->numel(); ++i)
            fd_entry(p->value.data()[i], p->grad.data()[i], kStepModel, loss, res);
    }
    return res;
}

}  // namespace hadamix
