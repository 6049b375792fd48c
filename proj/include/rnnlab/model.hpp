#pragma once

// Forward pass of the single-hidden-layer RNN and the frame-level
// cross-entropy loss used for next-frame prediction:
//
//   X_t = f(W*_hh X_{t-1} + W*_ih u_t + b_h),   X_{-1} = 0
//   Y_t = sigmoid(W*_ho X_t + b_o)
//
// Y_t is the prediction for frame t+1. Starred weights come from an optional
// PerturbationPlan and equal the clean weights when no plan is given.

#include "rnnlab/core.hpp"
#include "rnnlab/params.hpp"
#include "rnnlab/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace rnnlab {

/// Floor/ceiling applied to probabilities before taking logs.
inline constexpr double kLogClamp = 1e-8;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline Matrix apply_activation(HiddenActivation act, const Matrix& pre)
{
    switch (act) {
    case HiddenActivation::tanh: return pre.array().tanh().matrix();
    case HiddenActivation::sigmoid: return pre.unaryExpr([](double z) { return sigmoid(z); });
    case HiddenActivation::identity: return pre;
    }
    return pre;
}

/// f'(pre) expressed through the activation value.
inline Matrix activation_slope(HiddenActivation act, const Matrix& value)
{
    switch (act) {
    case HiddenActivation::tanh: return (1.0 - value.array().square()).matrix();
    case HiddenActivation::sigmoid: return (value.array() * (1.0 - value.array())).matrix();
    case HiddenActivation::identity: return Matrix::Ones(value.rows(), value.cols());
    }
    return value;
}

/// Activations of one forward pass. Sequences of equal length are processed
/// together as a group; each per-step matrix has one column per group member.
struct ForwardTrace {
    struct Group {
        std::vector<std::size_t> members;
        int steps = 0;
        std::vector<Matrix> inputs;     ///< [t] inputs x B
        std::vector<Matrix> hidden_pre; ///< [t] hidden x B
        std::vector<Matrix> hidden;     ///< [t] hidden x B, the X_t
        std::vector<Matrix> output_pre; ///< [t < steps-1] outputs x B
        std::vector<Matrix> output;     ///< [t < steps-1] outputs x B, the Y_t
    };

    std::vector<Group> groups;
    std::vector<std::pair<std::size_t, Eigen::Index>> location; ///< sequence -> (group, column)
    HiddenActivation activation = HiddenActivation::tanh;

    Vector hidden_at(std::size_t seq, int t) const
    {
        const auto [g, c] = location.at(seq);
        return groups[g].hidden.at(t).col(c);
    }

    Vector output_at(std::size_t seq, int t) const
    {
        const auto [g, c] = location.at(seq);
        return groups[g].output.at(t).col(c);
    }
};

namespace detail {

inline void check_forward_inputs(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan* plan)
{
    params.validate();
    require(params.inputs() == params.outputs(), "next-frame prediction needs inputs == outputs");
    batch.validate(params.inputs());
    if (plan != nullptr && plan->active()) {
        const auto s = ParamShapes::of(params);
        require(s.hidden == plan->shapes().hidden && s.inputs == plan->shapes().inputs &&
                    s.outputs == plan->shapes().outputs,
                "plan shapes do not match params");
        require(plan->spec().scope == NoiseScope::per_sequence || plan->steps() >= batch.max_length(),
                "per-time-step plan is shorter than the batch");
    }
}

/// Groups sequence indices by length, preserving first-appearance order.
inline std::vector<std::vector<std::size_t>> group_by_length(const SequenceBatch& batch)
{
    std::vector<std::vector<std::size_t>> groups;
    std::map<int, std::size_t> slot;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        auto [it, inserted] = slot.try_emplace(batch.length(k), groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(k);
    }
    return groups;
}

/// Memoises effective weights by realization index within one pass.
class EffectiveCache {
public:
    EffectiveCache(const RnnParams& params, const PerturbationPlan* plan) : params_(params), plan_(plan) {}

    const EffectiveWeights& at(int t)
    {
        if (plan_ == nullptr || !plan_->active()) {
            if (!clean_) clean_.emplace(params_);
            return *clean_;
        }
        const std::size_t r = plan_->realization_index(t);
        auto it = cache_.find(r);
        if (it == cache_.end()) it = cache_.emplace(r, effective_weights(params_, *plan_, t)).first;
        return it->second;
    }

private:
    const RnnParams& params_;
    const PerturbationPlan* plan_;
    std::optional<EffectiveWeights> clean_;
    std::map<std::size_t, EffectiveWeights> cache_;
};

inline ForwardTrace forward_impl(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan* plan)
{
    check_forward_inputs(params, batch, plan);
    ForwardTrace trace;
    trace.activation = params.activation;
    trace.location.resize(batch.size());
    EffectiveCache cache(params, plan);

    for (auto& members : group_by_length(batch)) {
        ForwardTrace::Group g;
        g.members = std::move(members);
        g.steps = batch.length(g.members.front());
        const auto B = static_cast<Eigen::Index>(g.members.size());
        for (Eigen::Index c = 0; c < B; ++c) trace.location[g.members[c]] = {trace.groups.size(), c};

        g.inputs.reserve(g.steps);
        g.hidden_pre.reserve(g.steps);
        g.hidden.reserve(g.steps);
        for (int t = 0; t < g.steps; ++t) {
            Matrix u(params.inputs(), B);
            for (Eigen::Index c = 0; c < B; ++c) u.col(c) = batch.frames[g.members[c]].col(t);
            const EffectiveWeights& w = cache.at(t);
            Matrix pre = w.w_ih() * u;
            if (t > 0) pre.noalias() += w.w_hh() * g.hidden.back();
            pre.colwise() += params.b_h;
            g.hidden.push_back(apply_activation(params.activation, pre));
            g.hidden_pre.push_back(std::move(pre));
            g.inputs.push_back(std::move(u));
            if (t + 1 < g.steps) {
                Matrix out_pre = w.w_ho() * g.hidden.back();
                out_pre.colwise() += params.b_o;
                g.output.push_back(out_pre.unaryExpr([](double z) { return sigmoid(z); }));
                g.output_pre.push_back(std::move(out_pre));
            }
        }
        trace.groups.push_back(std::move(g));
    }
    return trace;
}

/// Number of sequences that contribute predictions (length >= 2).
inline std::size_t predicting_sequences(const SequenceBatch& batch)
{
    std::size_t n = 0;
    for (std::size_t k = 0; k < batch.size(); ++k) n += batch.length(k) >= 2 ? 1 : 0;
    return n;
}

/// -[x log c(y) + (1-x) log c(1-y)], with 1-y evaluated as sigmoid(-z).
inline double bernoulli_nll(double target, double z)
{
    const double y = std::clamp(sigmoid(z), kLogClamp, 1.0 - kLogClamp);
    const double q = std::clamp(sigmoid(-z), kLogClamp, 1.0 - kLogClamp);
    return target != 0.0 ? -std::log(y) : -std::log(q);
}

} // namespace detail

inline ForwardTrace forward(const RnnParams& params, const SequenceBatch& batch)
{
    return detail::forward_impl(params, batch, nullptr);
}

inline ForwardTrace forward(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan& plan)
{
    return detail::forward_impl(params, batch, &plan);
}

/// Mean over sequences of the per-sequence mean over predicted frames of the
/// Bernoulli negative log-likelihood summed over notes. Sequences shorter than
/// two frames predict nothing and are left out of the mean.
inline double ce_loss(const ForwardTrace& trace, const SequenceBatch& batch)
{
    require(trace.location.size() == batch.size(), "trace was not produced from this batch");
    const std::size_t n = detail::predicting_sequences(batch);
    if (n == 0) return 0.0;
    double total = 0.0;
    for (const auto& g : trace.groups) {
        if (g.steps < 2) continue;
        double group_sum = 0.0;
        for (int t = 0; t + 1 < g.steps; ++t) {
            const Matrix& z = g.output_pre[t];
            for (Eigen::Index c = 0; c < z.cols(); ++c) {
                const Matrix& frames = batch.frames[g.members[c]];
                for (Eigen::Index i = 0; i < z.rows(); ++i)
                    group_sum += detail::bernoulli_nll(frames(i, t + 1), z(i, c));
            }
        }
        total += group_sum / static_cast<double>(g.steps - 1);
    }
    return total / static_cast<double>(n);
}

/// Clean-weight loss over whole, unchunked sequences. Each sequence is run on
/// its own so memory stays bounded by the longest sequence.
inline double evaluate(const RnnParams& params, const SequenceBatch& test)
{
    if (test.empty()) throw DataError("evaluate: empty test set");
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < test.size(); ++k) {
        if (test.length(k) < 2) continue;
        SequenceBatch one = test.subset({k});
        total += ce_loss(forward(params, one), one);
        ++n;
    }
    if (n == 0) throw DataError("evaluate: no test sequence has two or more frames");
    return total / static_cast<double>(n);
}

} // namespace rnnlab
