#pragma once

// First-order optimizers over a flat parameter vector: classical momentum,
// Nesterov accelerated gradient, and rmsprop combined with momentum.

#include "rnnlab/core.hpp"
#include "rnnlab/params.hpp"

#include <cmath>
#include <functional>
#include <string>

namespace rnnlab {

enum class OptimizerMethod { momentum, nag, rmsprop };

inline std::string to_string(OptimizerMethod m)
{
    switch (m) {
    case OptimizerMethod::momentum: return "momentum";
    case OptimizerMethod::nag: return "nag";
    case OptimizerMethod::rmsprop: return "rmsprop";
    }
    return "?";
}

inline OptimizerMethod parse_optimizer_method(const std::string& s)
{
    if (s == "momentum") return OptimizerMethod::momentum;
    if (s == "nag") return OptimizerMethod::nag;
    if (s == "rmsprop") return OptimizerMethod::rmsprop;
    throw DataError("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
    OptimizerMethod method = OptimizerMethod::rmsprop;
    double mu = 0.9;           ///< momentum coefficient
    double step_rate = 1e-3;
    double decay = 0.9;        ///< rmsprop running-average decay
    double epsilon = 1e-8;     ///< rmsprop floor inside the square root

    void validate() const
    {
        require(mu >= 0.0 && mu < 1.0, "momentum must lie in [0, 1)");
        require(step_rate > 0.0, "step rate must be > 0");
        require(decay > 0.0 && decay < 1.0, "rmsprop decay must lie in (0, 1)");
        require(epsilon >= 0.0, "rmsprop epsilon must be >= 0");
    }
};

struct OptimizerState {
    OptimizerConfig config;
    Vector velocity;
    Vector accumulator; ///< running mean of squared gradients (rmsprop only)

    static OptimizerState start(const OptimizerConfig& config, Eigen::Index n)
    {
        config.validate();
        return {config, Vector::Zero(n), Vector::Zero(n)};
    }
};

using FlatGradFn = std::function<Vector(const Vector&)>;

/// One update of theta in place.
///   momentum: v <- mu v - lr grad(theta)
///   nag:      v <- mu v - lr grad(theta + mu v)
///   rmsprop:  r <- decay r + (1 - decay) g^2,  v <- mu v - lr g / sqrt(r + epsilon)
/// followed by theta <- theta + v. A non-finite gradient or update throws
/// DivergenceError and leaves both state and theta untouched.
inline void step(OptimizerState& state, Vector& theta, const FlatGradFn& grad_fn)
{
    const OptimizerConfig& c = state.config;
    require(state.velocity.size() == theta.size(), "optimizer state does not match parameter size");

    const Vector g = c.method == OptimizerMethod::nag ? grad_fn(theta + c.mu * state.velocity) : grad_fn(theta);
    if (g.size() != theta.size()) throw ContractError("gradient has wrong length");
    if (!g.allFinite()) throw DivergenceError("non-finite gradient");

    Vector r = state.accumulator;
    Vector v;
    if (c.method == OptimizerMethod::rmsprop) {
        r = c.decay * state.accumulator + (1.0 - c.decay) * g.cwiseAbs2();
        v = c.mu * state.velocity - c.step_rate * g.cwiseQuotient((r.array() + c.epsilon).sqrt().matrix());
    } else {
        v = c.mu * state.velocity - c.step_rate * g;
    }
    Vector next = theta + v;
    if (!v.allFinite() || !next.allFinite()) throw DivergenceError("non-finite parameter update");
    state.accumulator = std::move(r);
    state.velocity = std::move(v);
    theta = std::move(next);
}

using RnnGradFn = std::function<Gradients(const RnnParams&)>;

/// Same update applied to RnnParams through their flat view.
inline void step(OptimizerState& state, RnnParams& params, const RnnGradFn& grad_fn)
{
    Vector theta = params.flatten();
    RnnParams probe = params;
    step(state, theta, [&](const Vector& at) {
        probe.assign_flat(at);
        return grad_fn(probe).flatten();
    });
    params.assign_flat(theta);
}

} // namespace rnnlab
