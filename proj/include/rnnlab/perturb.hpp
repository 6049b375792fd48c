#pragma once

// Regularization mechanisms applied during gradient computation: weight noise
// (additive / multiplicative, per time-step or per sequence), DropConnect on
// recurrent weights, feedforward weight noise, and L1/L2 weight penalties.
// Also hosts the single-unit moment analysis of multiplicative weight noise.
//
// Clean-weight rule: a PerturbationPlan never modifies RnnParams. Forward and
// backward passes ask effective_weights() for the perturbed copy at step t and
// pull gradients back onto the clean arrays with pullback().

#include "rnnlab/core.hpp"
#include "rnnlab/params.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rnnlab {

enum class PerturbationKind { none, additive, multiplicative, dropconnect, feedforward_additive };
enum class NoiseScope { per_time_step, per_sequence };

/// Index of a weight matrix inside a plan.
enum class WeightSlot : int { w_ih = 0, w_hh = 1, w_ho = 2 };
inline constexpr std::array<WeightSlot, 3> kWeightSlots{WeightSlot::w_ih, WeightSlot::w_hh, WeightSlot::w_ho};

inline const Matrix& slot_of(const ParamArrays& p, WeightSlot s)
{
    switch (s) {
    case WeightSlot::w_ih: return p.w_ih;
    case WeightSlot::w_hh: return p.w_hh;
    case WeightSlot::w_ho: return p.w_ho;
    }
    throw ContractError("bad weight slot");
}

inline Matrix& slot_of(ParamArrays& p, WeightSlot s)
{
    return const_cast<Matrix&>(slot_of(static_cast<const ParamArrays&>(p), s));
}

struct WeightTargets {
    bool w_ih = false;
    bool w_hh = false;
    bool w_ho = false;

    bool has(WeightSlot s) const
    {
        switch (s) {
        case WeightSlot::w_ih: return w_ih;
        case WeightSlot::w_hh: return w_hh;
        case WeightSlot::w_ho: return w_ho;
        }
        return false;
    }
    bool any() const { return w_ih || w_hh || w_ho; }

    static WeightTargets recurrent() { return {false, true, false}; }
    static WeightTargets feedforward() { return {true, false, true}; }
    static WeightTargets all() { return {true, true, true}; }
};

inline std::string to_string(PerturbationKind k)
{
    switch (k) {
    case PerturbationKind::none: return "none";
    case PerturbationKind::additive: return "additive";
    case PerturbationKind::multiplicative: return "multiplicative";
    case PerturbationKind::dropconnect: return "dropconnect";
    case PerturbationKind::feedforward_additive: return "feedforward_additive";
    }
    return "?";
}

inline std::string to_string(NoiseScope s)
{
    return s == NoiseScope::per_sequence ? "per_sequence" : "per_time_step";
}

inline PerturbationKind parse_perturbation_kind(const std::string& s)
{
    if (s == "none") return PerturbationKind::none;
    if (s == "additive") return PerturbationKind::additive;
    if (s == "multiplicative") return PerturbationKind::multiplicative;
    if (s == "dropconnect") return PerturbationKind::dropconnect;
    if (s == "feedforward_additive") return PerturbationKind::feedforward_additive;
    throw DataError("unknown perturbation kind '" + s + "'");
}

inline NoiseScope parse_noise_scope(const std::string& s)
{
    if (s == "per_time_step") return NoiseScope::per_time_step;
    if (s == "per_sequence") return NoiseScope::per_sequence;
    throw DataError("unknown noise scope '" + s + "'");
}

/// Declarative description of the perturbation applied inside one gradient evaluation.
struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::none;
    NoiseScope scope = NoiseScope::per_time_step;
    double sigma = 0.0;  ///< std-dev of Gaussian weight noise
    double drop_p = 0.0; ///< probability that a weight is zeroed
    WeightTargets targets = WeightTargets::recurrent();

    static PerturbationSpec none() { return {}; }
    static PerturbationSpec additive(double sigma, NoiseScope scope)
    {
        return {PerturbationKind::additive, scope, sigma, 0.0, WeightTargets::recurrent()};
    }
    static PerturbationSpec multiplicative(double sigma, NoiseScope scope)
    {
        return {PerturbationKind::multiplicative, scope, sigma, 0.0, WeightTargets::recurrent()};
    }
    static PerturbationSpec dropconnect(double drop_p, NoiseScope scope)
    {
        return {PerturbationKind::dropconnect, scope, 0.0, drop_p, WeightTargets::recurrent()};
    }
    static PerturbationSpec feedforward(double sigma)
    {
        return {PerturbationKind::feedforward_additive, NoiseScope::per_time_step, sigma, 0.0,
                WeightTargets::feedforward()};
    }

    bool is_noise() const
    {
        return kind == PerturbationKind::additive || kind == PerturbationKind::multiplicative ||
               kind == PerturbationKind::feedforward_additive;
    }

    void validate() const
    {
        if (kind == PerturbationKind::none) return;
        require(targets.any(), "perturbation must target at least one weight matrix");
        if (is_noise()) require(sigma > 0.0 && std::isfinite(sigma), "noise sigma must be > 0");
        if (kind == PerturbationKind::dropconnect)
            require(drop_p >= 0.0 && drop_p <= 1.0, "drop_p must lie in [0, 1]");
        if (kind == PerturbationKind::feedforward_additive) {
            require(!targets.w_hh, "feedforward noise may only target w_ih and w_ho");
            require(scope == NoiseScope::per_time_step, "feedforward noise is per-time-step only");
        }
    }
};

struct ParamShapes {
    int hidden = 0;
    int inputs = kNotes;
    int outputs = kNotes;

    static ParamShapes of(const ParamArrays& p) { return {p.hidden(), p.inputs(), p.outputs()}; }

    Eigen::Index rows(WeightSlot s) const { return s == WeightSlot::w_ho ? outputs : hidden; }
    Eigen::Index cols(WeightSlot s) const
    {
        switch (s) {
        case WeightSlot::w_ih: return inputs;
        case WeightSlot::w_hh: return hidden;
        case WeightSlot::w_ho: return hidden;
        }
        return 0;
    }
};

/// A sampled realization of a PerturbationSpec. Immutable once built.
/// Noise realizations hold Delta; DropConnect realizations hold 0/1 keep masks.
class PerturbationPlan {
public:
    PerturbationPlan() = default;

    const PerturbationSpec& spec() const { return spec_; }
    const ParamShapes& shapes() const { return shapes_; }
    int steps() const { return steps_; }
    std::uint64_t seed() const { return seed_; }
    bool active() const { return spec_.kind != PerturbationKind::none; }
    bool targets(WeightSlot s) const { return active() && spec_.targets.has(s); }

    std::size_t realization_count() const { return realizations_[0].size() + realizations_[1].size() + realizations_[2].size(); }

    /// Realization used at step t (one shared realization for per-sequence plans).
    std::size_t realization_index(int t) const
    {
        require(t >= 0 && t < steps_, "time-step outside the plan");
        return spec_.scope == NoiseScope::per_sequence ? 0 : static_cast<std::size_t>(t);
    }

    /// Delta (noise kinds) or keep-mask (dropconnect) of slot s at step t.
    const Matrix& realization(WeightSlot s, int t) const
    {
        require(targets(s), "slot is not perturbed by this plan");
        return realizations_[static_cast<int>(s)][realization_index(t)];
    }

private:
    friend PerturbationPlan sample_plan(const PerturbationSpec&, const ParamShapes&, int, std::uint64_t);

    PerturbationSpec spec_;
    ParamShapes shapes_;
    int steps_ = 0;
    std::uint64_t seed_ = 0;
    std::array<std::vector<Matrix>, 3> realizations_;
};

/// Draws the noise tensors / masks for one optimisation iteration. A
/// per-time-step plan holds `steps` independent realizations (non-cumulative),
/// a per-sequence plan holds one. Equal seeds yield identical plans.
inline PerturbationPlan sample_plan(const PerturbationSpec& spec, const ParamShapes& shapes, int steps,
                                    std::uint64_t seed)
{
    require(steps >= 1, "plan needs at least one time-step");
    spec.validate();
    PerturbationPlan plan;
    plan.spec_ = spec;
    plan.shapes_ = shapes;
    plan.steps_ = steps;
    plan.seed_ = seed;
    if (spec.kind == PerturbationKind::none) return plan;

    Rng rng = make_rng(seed, streams::perturbation);
    const int count = spec.scope == NoiseScope::per_sequence ? 1 : steps;
    std::normal_distribution<double> noise(0.0, spec.sigma > 0.0 ? spec.sigma : 1.0);
    std::bernoulli_distribution keep(1.0 - spec.drop_p);

    for (auto s : kWeightSlots)
        if (spec.targets.has(s)) plan.realizations_[static_cast<int>(s)].reserve(count);
    for (int r = 0; r < count; ++r) {
        for (auto s : kWeightSlots) {
            if (!spec.targets.has(s)) continue;
            Matrix m(shapes.rows(s), shapes.cols(s));
            if (spec.kind == PerturbationKind::dropconnect) {
                for (Eigen::Index j = 0; j < m.cols(); ++j)
                    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = keep(rng) ? 1.0 : 0.0;
            } else {
                for (Eigen::Index j = 0; j < m.cols(); ++j)
                    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = noise(rng);
            }
            plan.realizations_[static_cast<int>(s)].push_back(std::move(m));
        }
    }
    return plan;
}

inline PerturbationPlan sample_plan(const PerturbationSpec& spec, const ParamArrays& params, int steps,
                                    std::uint64_t seed)
{
    return sample_plan(spec, ParamShapes::of(params), steps, seed);
}

/// Perturbed weights at one time-step. Untargeted matrices alias the clean ones.
class EffectiveWeights {
public:
    explicit EffectiveWeights(const ParamArrays& clean) : clean_(&clean) {}

    const Matrix& get(WeightSlot s) const
    {
        const auto& owned = owned_[static_cast<int>(s)];
        return owned ? *owned : slot_of(*clean_, s);
    }
    const Matrix& w_ih() const { return get(WeightSlot::w_ih); }
    const Matrix& w_hh() const { return get(WeightSlot::w_hh); }
    const Matrix& w_ho() const { return get(WeightSlot::w_ho); }

    void set(WeightSlot s, Matrix m) { owned_[static_cast<int>(s)] = std::move(m); }

private:
    const ParamArrays* clean_;
    std::array<std::optional<Matrix>, 3> owned_;
};

/// additive: W + Delta_t; multiplicative: W o (1 + Delta_t); dropconnect: W o M_t.
inline EffectiveWeights effective_weights(const ParamArrays& params, const PerturbationPlan& plan, int t)
{
    EffectiveWeights eff(params);
    if (!plan.active()) return eff;
    require(ParamShapes::of(params).hidden == plan.shapes().hidden &&
                ParamShapes::of(params).inputs == plan.shapes().inputs &&
                ParamShapes::of(params).outputs == plan.shapes().outputs,
            "plan shapes do not match params");
    for (auto s : kWeightSlots) {
        if (!plan.targets(s)) continue;
        const Matrix& w = slot_of(params, s);
        const Matrix& r = plan.realization(s, t);
        switch (plan.spec().kind) {
        case PerturbationKind::additive:
        case PerturbationKind::feedforward_additive: eff.set(s, w + r); break;
        case PerturbationKind::multiplicative: eff.set(s, w.cwiseProduct((r.array() + 1.0).matrix())); break;
        case PerturbationKind::dropconnect: eff.set(s, w.cwiseProduct(r)); break;
        case PerturbationKind::none: break;
        }
    }
    return eff;
}

/// Adds the gradient w.r.t. the effective copy of slot s at step t onto the
/// clean gradient: factor 1 for additive noise, (1 + Delta_t) for
/// multiplicative noise, the keep-mask for DropConnect.
inline void pullback(const PerturbationPlan* plan, WeightSlot s, int t, const Matrix& d_effective, Matrix& d_clean)
{
    if (plan == nullptr || !plan->targets(s)) {
        d_clean += d_effective;
        return;
    }
    const Matrix& r = plan->realization(s, t);
    switch (plan->spec().kind) {
    case PerturbationKind::multiplicative:
        d_clean += d_effective.cwiseProduct((r.array() + 1.0).matrix());
        break;
    case PerturbationKind::dropconnect: d_clean += d_effective.cwiseProduct(r); break;
    default: d_clean += d_effective; break;
    }
}

// ---------------------------------------------------------------------------
// Norm penalties

enum class PenaltyNorm { L1, L2 };

inline std::string to_string(PenaltyNorm n) { return n == PenaltyNorm::L1 ? "L1" : "L2"; }

inline PenaltyNorm parse_penalty_norm(const std::string& s)
{
    if (s == "L1" || s == "l1") return PenaltyNorm::L1;
    if (s == "L2" || s == "l2") return PenaltyNorm::L2;
    throw DataError("unknown penalty norm '" + s + "'");
}

/// lambda * sum|w| (L1) or lambda * sum w^2 (L2) over w_ih, w_hh, w_ho. Biases excluded.
struct RegPenaltySpec {
    PenaltyNorm norm = PenaltyNorm::L2;
    double lambda = 0.0;

    void validate() const { require(lambda >= 0.0 && std::isfinite(lambda), "penalty lambda must be >= 0"); }
};

struct PenaltyResult {
    double value = 0.0;
    Gradients grads;
};

inline PenaltyResult norm_penalty(const ParamArrays& params, const RegPenaltySpec& spec)
{
    spec.validate();
    PenaltyResult out{0.0, Gradients::zeros_like(params)};
    for (auto s : kWeightSlots) {
        const Matrix& w = slot_of(params, s);
        Matrix& g = slot_of(out.grads, s);
        if (spec.norm == PenaltyNorm::L1) {
            out.value += spec.lambda * w.cwiseAbs().sum();
            g = spec.lambda * w.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
        } else {
            out.value += spec.lambda * w.squaredNorm();
            g = 2.0 * spec.lambda * w;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Moments of a pre-synaptic activation under multiplicative weight noise,
// a = (w + Delta o w)^T x with Delta ~ N(0, sigma^2).

struct NoisyMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Mean w^T x and variance sigma^2 (w^T x)^2, matching the derivation that
/// treats the whole noisy weight vector as a single scaled Gaussian factor.
inline NoisyMoments noisy_moments(const Vector& w, const Vector& x, double sigma)
{
    require(w.size() == x.size(), "noisy_moments: w and x differ in length");
    require(sigma > 0.0, "noisy_moments: sigma must be > 0");
    const double a = w.dot(x);
    return {a, sigma * sigma * a * a};
}

struct SampledActivation {
    double a_hat = 0.0;
    Vector grad_w;   ///< d a_hat / d w
    Vector reg_term; ///< noise-induced part of grad_w
};

inline double sign_of(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

/// a_hat = E[a] + s sqrt(V[a]) = w^T x + s sigma |w^T x|, with its gradient
/// split into the standard term x and the regularizer s sigma sign(w^T x) x.
inline SampledActivation sampled_activation_grad(const Vector& w, const Vector& x, double sigma, double s)
{
    require(w.size() == x.size(), "sampled_activation_grad: w and x differ in length");
    require(std::isfinite(s), "sampled_activation_grad: s must be finite");
    const double a = w.dot(x);
    SampledActivation out;
    out.a_hat = a + s * sigma * std::abs(a);
    out.reg_term = (s * sigma * sign_of(a)) * x;
    out.grad_w = x + out.reg_term;
    return out;
}

/// Regularizer term without the sign(w^T x) factor, as it is usually written.
/// Kept for comparison with sampled_activation_grad; it is only the true
/// derivative when w^T x > 0.
inline Vector unsigned_regularizer_term(const Vector& x, double sigma, double s) { return (s * sigma) * x; }

} // namespace rnnlab
