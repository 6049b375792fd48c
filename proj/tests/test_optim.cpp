#include "rnnlab/grad.hpp"
#include "rnnlab/optim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace rnnlab;

namespace {

OptimizerConfig config(OptimizerMethod m, double mu, double lr)
{
    OptimizerConfig c;
    c.method = m;
    c.mu = mu;
    c.step_rate = lr;
    return c;
}

Vector scalar(double v) { return Vector::Constant(1, v); }

} // namespace

TEST(Optim, ZeroMomentumIsPlainSgd)
{
    auto st = OptimizerState::start(config(OptimizerMethod::momentum, 0.0, 0.05), 3);
    Vector theta = (Vector(3) << 1.0, -2.0, 0.5).finished();
    const Vector g = (Vector(3) << 0.3, 0.1, -0.7).finished();
    const Vector expected = theta - 0.05 * g;
    step(st, theta, [&](const Vector&) { return g; });
    EXPECT_EQ(theta, expected);
}

TEST(Optim, ZeroMomentumNagMatchesMomentumOnRnn)
{
    const auto prob = rnnlab::testing::random_problem(4, 10, 6, 3, 1);
    RnnParams a = prob.params, b = prob.params, c = prob.params;
    auto sa = OptimizerState::start(config(OptimizerMethod::momentum, 0.0, 0.01), a.size());
    auto sb = OptimizerState::start(config(OptimizerMethod::nag, 0.0, 0.01), b.size());
    auto grad = [&](const RnnParams& at) { return bptt(at, prob.batch).grads; };
    for (int i = 0; i < 100; ++i) {
        step(sa, a, grad);
        step(sb, b, grad);
        Vector flat = c.flatten();
        flat -= 0.01 * grad(c).flatten();
        c.assign_flat(flat);
    }
    EXPECT_TRUE(a == b);
    EXPECT_TRUE(a == c);
}

TEST(Optim, RmspropScalarExample)
{
    OptimizerConfig c = config(OptimizerMethod::rmsprop, 0.0, 0.01);
    auto st = OptimizerState::start(c, 1);
    Vector theta = scalar(0.0);
    step(st, theta, [](const Vector&) { return scalar(3.0); });
    EXPECT_NEAR(st.accumulator(0), 0.9, 1e-15);
    EXPECT_NEAR(theta(0), -0.01 * 3.0 / std::sqrt(0.9 + 1e-8), 1e-15);
    EXPECT_NEAR(theta(0), -0.031623, 1e-6);
}

TEST(Optim, MomentumOnQuadraticFollowsLinearRecurrence)
{
    // f = theta^2 / 2: (v, theta) evolves by a fixed 2x2 map with eigenvalue modulus sqrt(mu)
    auto st = OptimizerState::start(config(OptimizerMethod::momentum, 0.9, 0.1), 1);
    Vector theta = scalar(1.0);
    Eigen::Matrix2d map;
    map << 0.9, -0.1, 0.9, 0.9; // rows: v' = mu v - lr theta; theta' = theta + v'
    Eigen::Vector2d state(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        step(st, theta, [](const Vector& at) { return at; });
        state = map * state;
        EXPECT_NEAR(theta(0), state(1), 1e-12);
    }
    EXPECT_LT(std::abs(theta(0)), 1e-2);
    EXPECT_NEAR(std::abs(Eigen::EigenSolver<Eigen::Matrix2d>(map).eigenvalues()(0)), std::sqrt(0.9), 1e-12);
    for (int i = 0; i < 100; ++i) step(st, theta, [](const Vector& at) { return at; });
    EXPECT_LT(std::abs(theta(0)), 1e-4);
}

TEST(Optim, NagDiffersFromMomentumWithMomentum)
{
    auto sm = OptimizerState::start(config(OptimizerMethod::momentum, 0.9, 0.1), 1);
    auto sn = OptimizerState::start(config(OptimizerMethod::nag, 0.9, 0.1), 1);
    Vector a = scalar(1.0), b = scalar(1.0);
    auto g = [](const Vector& at) { return at; };
    step(sm, a, g);
    step(sn, b, g);
    EXPECT_EQ(a, b);
    step(sm, a, g);
    step(sn, b, g);
    EXPECT_NE(a(0), b(0));
}

TEST(Optim, RmspropSteadyStateIgnoresGradientScale)
{
    for (double mu : {0.0, 0.9}) {
        auto s1 = OptimizerState::start(config(OptimizerMethod::rmsprop, mu, 1e-3), 1);
        auto s2 = s1;
        Vector a = scalar(0.0), b = scalar(0.0);
        double da = 0.0, db = 0.0;
        for (int i = 0; i < 500; ++i) {
            const double pa = a(0), pb = b(0);
            step(s1, a, [](const Vector&) { return scalar(0.2); });
            step(s2, b, [](const Vector&) { return scalar(2.0); });
            da = std::abs(a(0) - pa);
            db = std::abs(b(0) - pb);
        }
        EXPECT_NEAR(da / db, 1.0, 0.01);
    }
}

TEST(Optim, NonFiniteGradientLeavesStateUntouched)
{
    auto st = OptimizerState::start(config(OptimizerMethod::rmsprop, 0.9, 0.01), 2);
    Vector theta = (Vector(2) << 1.0, 2.0).finished();
    step(st, theta, [](const Vector&) { return (Vector(2) << 0.5, -0.5).finished(); });
    const auto saved = st;
    const Vector saved_theta = theta;
    EXPECT_THROW(step(st, theta,
                      [](const Vector&) {
                          return (Vector(2) << std::numeric_limits<double>::quiet_NaN(), 1.0).finished();
                      }),
                 DivergenceError);
    EXPECT_EQ(theta, saved_theta);
    EXPECT_EQ(st.velocity, saved.velocity);
    EXPECT_EQ(st.accumulator, saved.accumulator);
}

TEST(Optim, ConfigValidation)
{
    EXPECT_THROW(OptimizerState::start(config(OptimizerMethod::nag, 1.0, 0.1), 1), ContractError);
    EXPECT_THROW(OptimizerState::start(config(OptimizerMethod::nag, 0.5, 0.0), 1), ContractError);
    OptimizerConfig c = config(OptimizerMethod::rmsprop, 0.5, 0.1);
    c.decay = 1.0;
    EXPECT_THROW(OptimizerState::start(c, 1), ContractError);
    EXPECT_EQ(parse_optimizer_method("nag"), OptimizerMethod::nag);
    EXPECT_THROW(parse_optimizer_method("adam"), DataError);
}
