#pragma once

// Exact backpropagation through time for the model in model.hpp, plus a
// central-difference oracle used to check it.
//
// With a perturbation plan the loss is a function of the clean weights through
// the per-step effective copies, so the clean gradient is the sum over steps of
// the effective-weight gradients pulled back through the perturbation.

#include "rnnlab/core.hpp"
#include "rnnlab/model.hpp"
#include "rnnlab/params.hpp"
#include "rnnlab/perturb.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>

namespace rnnlab {

struct LossAndGradients {
    double loss = 0.0;
    Gradients grads;
};

namespace detail {

inline LossAndGradients bptt_impl(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan* plan)
{
    const ForwardTrace trace = forward_impl(params, batch, plan);
    LossAndGradients out{ce_loss(trace, batch), Gradients::zeros_like(params)};
    const std::size_t n = predicting_sequences(batch);
    if (n == 0) return out;

    EffectiveCache cache(params, plan);
    Gradients& g = out.grads;
    for (const auto& grp : trace.groups) {
        if (grp.steps < 2) continue;
        const double weight = 1.0 / (static_cast<double>(grp.steps - 1) * static_cast<double>(n));
        const auto B = static_cast<Eigen::Index>(grp.members.size());
        Matrix d_hidden_next = Matrix::Zero(params.hidden(), B);

        for (int t = grp.steps - 1; t >= 0; --t) {
            const EffectiveWeights& w = cache.at(t);
            Matrix d_hidden = std::move(d_hidden_next);

            if (t + 1 < grp.steps) {
                // d loss / d output pre-activation; zero where the log argument was clamped.
                const Matrix& z = grp.output_pre[t];
                Matrix d_out(z.rows(), B);
                for (Eigen::Index c = 0; c < B; ++c) {
                    const Matrix& frames = batch.frames[grp.members[c]];
                    for (Eigen::Index i = 0; i < z.rows(); ++i) {
                        const double y = sigmoid(z(i, c));
                        const double q = sigmoid(-z(i, c));
                        const double x = frames(i, t + 1);
                        const bool y_free = y > kLogClamp && y < 1.0 - kLogClamp;
                        const bool q_free = q > kLogClamp && q < 1.0 - kLogClamp;
                        const double d = (x != 0.0) ? (y_free ? -q : 0.0) : (q_free ? y : 0.0);
                        d_out(i, c) = weight * d;
                    }
                }
                const Matrix d_w_ho = d_out * grp.hidden[t].transpose();
                pullback(plan, WeightSlot::w_ho, t, d_w_ho, g.w_ho);
                g.b_o += d_out.rowwise().sum();
                d_hidden.noalias() += w.w_ho().transpose() * d_out;
            }

            const Matrix d_pre = d_hidden.cwiseProduct(activation_slope(params.activation, grp.hidden[t]));
            const Matrix d_w_ih = d_pre * grp.inputs[t].transpose();
            pullback(plan, WeightSlot::w_ih, t, d_w_ih, g.w_ih);
            g.b_h += d_pre.rowwise().sum();
            if (t > 0) {
                const Matrix d_w_hh = d_pre * grp.hidden[t - 1].transpose();
                pullback(plan, WeightSlot::w_hh, t, d_w_hh, g.w_hh);
                d_hidden_next = w.w_hh().transpose() * d_pre;
            } else {
                d_hidden_next = Matrix::Zero(params.hidden(), B);
            }
        }
    }
    return out;
}

inline double loss_impl(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan* plan)
{
    return ce_loss(forward_impl(params, batch, plan), batch);
}

} // namespace detail

/// Loss and its exact gradient w.r.t. the clean parameters, averaged over the batch.
inline LossAndGradients bptt(const RnnParams& params, const SequenceBatch& batch)
{
    return detail::bptt_impl(params, batch, nullptr);
}

inline LossAndGradients bptt(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan& plan)
{
    return detail::bptt_impl(params, batch, &plan);
}

/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i. The
/// difference is taken in f's own result type, so an extended-precision f
/// keeps its extra digits.
template <class F>
Vector central_difference(F&& f, const Vector& x, double eps)
{
    require(eps > 0.0, "finite difference step must be > 0");
    Vector grad(x.size());
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = probe(i);
        probe(i) = orig + eps;
        const auto up = f(probe);
        probe(i) = orig - eps;
        const auto down = f(probe);
        probe(i) = orig;
        grad(i) = static_cast<double>((up - down) / (2 * static_cast<decltype(up)>(eps)));
    }
    return grad;
}

namespace detail {

/// Straightforward per-sequence loss in scalar type S. The finite-difference
/// oracle runs it in long double: a double-precision loss of ~60 nats carries
/// roundoff near 1e-14, which swamps central differences of components near 1e-6.
template <class S>
S reference_loss(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan* plan)
{
    using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    using V = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    const S one(1), clamp_lo(kLogClamp), clamp_hi = one - S(kLogClamp);
    auto sig = [&](S z) { return one / (one + std::exp(-z)); };

    // effective[slot][r]: weights under realization r (a single entry when unperturbed)
    std::array<std::vector<M>, 3> effective;
    for (auto s : kWeightSlots) {
        const M w = slot_of(params, s).template cast<S>();
        auto& out = effective[static_cast<int>(s)];
        if (plan == nullptr || !plan->targets(s)) {
            out.push_back(w);
            continue;
        }
        const int count = plan->spec().scope == NoiseScope::per_sequence ? 1 : plan->steps();
        for (int r = 0; r < count; ++r) {
            const M d = plan->realization(s, r).template cast<S>();
            switch (plan->spec().kind) {
            case PerturbationKind::additive:
            case PerturbationKind::feedforward_additive: out.push_back(w + d); break;
            case PerturbationKind::multiplicative: out.push_back(w.cwiseProduct((d.array() + one).matrix())); break;
            case PerturbationKind::dropconnect: out.push_back(w.cwiseProduct(d)); break;
            case PerturbationKind::none: out.push_back(w); break;
            }
        }
    }
    auto weight = [&](WeightSlot s, int t) -> const M& {
        const auto& v = effective[static_cast<int>(s)];
        return v.size() == 1 ? v.front() : v[static_cast<std::size_t>(t)];
    };

    const V b_h = params.b_h.template cast<S>();
    const V b_o = params.b_o.template cast<S>();
    V h(params.hidden()), a(params.hidden()), z(params.outputs()), in(params.inputs());
    S total(0);
    std::size_t n = 0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const Matrix& x = batch.frames[k];
        const int steps = static_cast<int>(x.cols());
        if (steps < 2) continue;
        h.setZero();
        S seq(0);
        for (int t = 0; t + 1 < steps; ++t) {
            in = x.col(t).template cast<S>();
            a.noalias() = weight(WeightSlot::w_hh, t) * h;
            a.noalias() += weight(WeightSlot::w_ih, t) * in;
            a += b_h;
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                switch (params.activation) {
                case HiddenActivation::tanh: h(i) = std::tanh(a(i)); break;
                case HiddenActivation::sigmoid: h(i) = sig(a(i)); break;
                case HiddenActivation::identity: h(i) = a(i); break;
                }
            }
            z.noalias() = weight(WeightSlot::w_ho, t) * h;
            z += b_o;
            for (Eigen::Index i = 0; i < z.size(); ++i) {
                const S y = std::clamp(x(i, t + 1) != 0.0 ? sig(z(i)) : sig(-z(i)), clamp_lo, clamp_hi);
                seq -= std::log(y);
            }
        }
        total += seq / S(steps - 1);
        ++n;
    }
    return n == 0 ? S(0) : total / S(static_cast<double>(n));
}

inline Gradients finite_diff_impl(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan* plan,
                                  double eps)
{
    RnnParams probe = params;
    auto loss_at = [&](const Vector& flat) {
        probe.assign_flat(flat);
        return reference_loss<long double>(probe, batch, plan);
    };
    Gradients g = Gradients::zeros_like(params);
    g.assign_flat(central_difference(loss_at, params.flatten(), eps));
    return g;
}

} // namespace detail

/// Central-difference gradient of the loss. A plan, if given, is a fixed
/// realization reused for every probe.
inline Gradients finite_diff(const RnnParams& params, const SequenceBatch& batch, double eps)
{
    return detail::finite_diff_impl(params, batch, nullptr, eps);
}

inline Gradients finite_diff(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan& plan,
                             double eps)
{
    return detail::finite_diff_impl(params, batch, &plan, eps);
}

/// max_i |a_i - b_i| / max(1e-8, |a_i| + |b_i|)
inline double max_relative_error(const Vector& a, const Vector& b)
{
    require(a.size() == b.size(), "max_relative_error: size mismatch");
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double denom = std::max(1e-8, std::abs(a(i)) + std::abs(b(i)));
        worst = std::max(worst, std::abs(a(i) - b(i)) / denom);
    }
    return worst;
}

inline constexpr double kGradCheckEps = 3e-6;

inline double grad_check(const RnnParams& params, const SequenceBatch& batch, double eps = kGradCheckEps)
{
    return max_relative_error(bptt(params, batch).grads.flatten(), finite_diff(params, batch, eps).flatten());
}

inline double grad_check(const RnnParams& params, const SequenceBatch& batch, const PerturbationPlan& plan,
                         double eps = kGradCheckEps)
{
    return max_relative_error(bptt(params, batch, plan).grads.flatten(),
                              finite_diff(params, batch, plan, eps).flatten());
}

/// dX_t / dX_k for one sequence: the product over j = t..k+1 of
/// diag(f'(a_j)) W*_hh(j). Identity when t == k.
inline Matrix state_jacobian(const RnnParams& params, const SequenceBatch& single, int t, int k,
                             const PerturbationPlan* plan = nullptr)
{
    require(single.size() == 1, "state_jacobian expects a single sequence");
    require(0 <= k && k <= t && t < single.length(0), "state_jacobian needs 0 <= k <= t < T");
    const ForwardTrace trace = detail::forward_impl(params, single, plan);
    const auto& grp = trace.groups.front();
    detail::EffectiveCache cache(params, plan);
    Matrix jac = Matrix::Identity(params.hidden(), params.hidden());
    for (int j = k + 1; j <= t; ++j) {
        const Vector slope = activation_slope(params.activation, grp.hidden[j]).col(0);
        jac = slope.asDiagonal() * (cache.at(j).w_hh() * jac);
    }
    return jac;
}

/// Dense random parameters for gradient checks: weights Normal(0, scale /
/// sqrt(fan_in)) so pre-activations stay O(1) at any width, biases Normal(0, scale).
inline RnnParams random_params(int hidden, int inputs, int outputs, double scale, Rng& rng)
{
    RnnParams p = RnnParams::zeros(hidden, inputs, outputs);
    auto fill = [&](auto& m, double sigma) {
        std::normal_distribution<double> normal(0.0, sigma);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
    };
    fill(p.w_ih, scale / std::sqrt(static_cast<double>(inputs)));
    fill(p.w_hh, scale / std::sqrt(static_cast<double>(hidden)));
    fill(p.w_ho, scale / std::sqrt(static_cast<double>(hidden)));
    fill(p.b_h, scale);
    fill(p.b_o, scale);
    return p;
}

/// `count` sequences of `steps` random binary frames, notes on with probability `density`.
inline SequenceBatch random_batch(int count, int notes, int steps, double density, Rng& rng)
{
    std::bernoulli_distribution on(density);
    SequenceBatch b;
    for (int k = 0; k < count; ++k) {
        Matrix m(notes, steps);
        for (int t = 0; t < steps; ++t)
            for (int n = 0; n < notes; ++n) m(n, t) = on(rng) ? 1.0 : 0.0;
        b.push_back(std::move(m), 0);
    }
    return b;
}

} // namespace rnnlab
