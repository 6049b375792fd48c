#include "rnnlab/grad.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rnnlab;
using rnnlab::testing::random_problem;

TEST(Bptt, ZeroParamsClosedForm)
{
    const auto prob = random_problem(3, kNotes, 6, 2, 1);
    const auto lg = bptt(RnnParams::zeros(3), prob.batch);
    EXPECT_EQ(lg.grads.w_ho.cwiseAbs().maxCoeff(), 0.0);
    // d/d b_o: mean over sequences and predicted frames of (0.5 - x)
    Vector expected = Vector::Zero(kNotes);
    for (const auto& f : prob.batch.frames)
        for (int t = 1; t < 6; ++t) expected += (0.5 - f.col(t).array()).matrix() / 5.0;
    expected /= 2.0;
    EXPECT_LT((lg.grads.b_o - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Bptt, SingleFrameGivesZeroLossAndGradients)
{
    const auto prob = random_problem(4, kNotes, 1, 2, 2);
    const auto lg = bptt(prob.params, prob.batch);
    EXPECT_EQ(lg.loss, 0.0);
    EXPECT_EQ(lg.grads.flatten().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Bptt, LossEqualsForwardLossExactly)
{
    const auto prob = random_problem(5, kNotes, 9, 3, 3);
    EXPECT_EQ(bptt(prob.params, prob.batch).loss, ce_loss(forward(prob.params, prob.batch), prob.batch));
    const auto plan = sample_plan(PerturbationSpec::dropconnect(0.3, NoiseScope::per_time_step), prob.params, 9, 4);
    EXPECT_EQ(bptt(prob.params, prob.batch, plan).loss, ce_loss(forward(prob.params, prob.batch, plan), prob.batch));
}

TEST(GradCheck, CleanFullWidth)
{
    const auto prob = random_problem(5, kNotes, 7, 2, 1);
    EXPECT_LT(grad_check(prob.params, prob.batch), 1e-6);
}

TEST(GradCheck, PerturbedPlansFullWidth)
{
    const auto prob = random_problem(5, kNotes, 7, 2, 2);
    for (const auto& spec : {PerturbationSpec::multiplicative(0.1, NoiseScope::per_sequence),
                             PerturbationSpec::additive(0.1, NoiseScope::per_time_step),
                             PerturbationSpec::dropconnect(0.3, NoiseScope::per_sequence)}) {
        const auto plan = sample_plan(spec, prob.params, 7, 5);
        EXPECT_LT(grad_check(prob.params, prob.batch, plan), 1e-6) << to_string(spec.kind);
    }
}

TEST(GradCheck, EveryKindAndScope)
{
    const auto prob = random_problem(4, 10, 8, 2, 3);
    for (auto kind : {PerturbationKind::additive, PerturbationKind::multiplicative, PerturbationKind::dropconnect})
        for (auto scope : {NoiseScope::per_time_step, NoiseScope::per_sequence}) {
            PerturbationSpec spec;
            spec.kind = kind;
            spec.scope = scope;
            spec.sigma = 0.2;
            spec.drop_p = 0.4;
            spec.targets = WeightTargets::all();
            const auto plan = sample_plan(spec, prob.params, 8, 6);
            EXPECT_LT(grad_check(prob.params, prob.batch, plan), 1e-6) << to_string(kind) << " " << to_string(scope);
        }
    const auto ff = sample_plan(PerturbationSpec::feedforward(0.1), prob.params, 8, 7);
    EXPECT_LT(grad_check(prob.params, prob.batch, ff), 1e-6);
}

TEST(GradCheck, OtherActivationsAndPadding)
{
    auto prob = random_problem(4, 10, 6, 2, 4);
    SequenceBatch b;
    Matrix padded = prob.batch.frames[0];
    padded.leftCols(2).setZero();
    b.push_back(padded, 2);
    b.push_back(prob.batch.frames[1].leftCols(4), 0);
    b.push_back(Matrix::Ones(10, 1), 0);
    for (auto act : {HiddenActivation::tanh, HiddenActivation::sigmoid, HiddenActivation::identity}) {
        prob.params.activation = act;
        EXPECT_LT(grad_check(prob.params, b), 1e-6);
    }
}

TEST(Bptt, BatchGradientIsMeanOfSingles)
{
    Rng rng = make_rng(5, 0);
    const RnnParams p = random_params(4, 12, 12, 1.0, rng);
    for (int second_len : {6, 9}) {
        SequenceBatch both;
        both.push_back(random_batch(1, 12, 6, 0.3, rng).frames[0], 0);
        both.push_back(random_batch(1, 12, second_len, 0.3, rng).frames[0], 0);
        const Vector g = bptt(p, both).grads.flatten();
        const Vector g0 = bptt(p, both.subset({0})).grads.flatten();
        const Vector g1 = bptt(p, both.subset({1})).grads.flatten();
        EXPECT_LT((g - 0.5 * (g0 + g1)).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(Bptt, ZeroDropProbabilityMatchesCleanBitwise)
{
    const auto prob = random_problem(4, 12, 7, 3, 6);
    for (auto scope : {NoiseScope::per_time_step, NoiseScope::per_sequence}) {
        const auto plan = sample_plan(PerturbationSpec::dropconnect(0.0, scope), prob.params, 7, 1);
        const auto a = bptt(prob.params, prob.batch, plan);
        const auto b = bptt(prob.params, prob.batch);
        EXPECT_EQ(a.loss, b.loss);
        EXPECT_TRUE(a.grads == b.grads);
    }
}

TEST(FiniteDiff, QuadraticFixture)
{
    // single linear step y = w . x, loss (y - z)^2, gradient 2 (y - z) x
    const Vector x = (Vector(3) << 0.5, -1.5, 2.0).finished();
    const double z = 0.3;
    auto loss = [&](const Vector& w) { return std::pow(w.dot(x) - z, 2); };
    const Vector w = (Vector(3) << 0.1, 0.2, -0.4).finished();
    const Vector analytic = 2.0 * (w.dot(x) - z) * x;
    EXPECT_LT((central_difference(loss, w, 1e-4) - analytic).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FiniteDiff, SecondOrderAccuracy)
{
    auto f = [](const Vector& v) { return std::sin(v(0)) * std::exp(v(1)); };
    const Vector at = (Vector(2) << 0.7, 0.2).finished();
    const Vector exact = (Vector(2) << std::cos(0.7) * std::exp(0.2), std::sin(0.7) * std::exp(0.2)).finished();
    const double e1 = (central_difference(f, at, 1e-2) - exact).norm();
    const double e2 = (central_difference(f, at, 5e-3) - exact).norm();
    EXPECT_NEAR(e1 / e2, 4.0, 0.05);
}

TEST(FiniteDiff, ReferenceLossMatchesModelLoss)
{
    const auto prob = random_problem(5, kNotes, 9, 3, 7);
    const auto plan = sample_plan(PerturbationSpec::multiplicative(0.1, NoiseScope::per_time_step), prob.params, 9, 2);
    const double model = ce_loss(forward(prob.params, prob.batch, plan), prob.batch);
    const auto ref = detail::reference_loss<long double>(prob.params, prob.batch, &plan);
    EXPECT_NEAR(static_cast<double>(ref), model, 1e-11);
}

TEST(FiniteDiff, RelativeErrorDefinition)
{
    const Vector a = (Vector(3) << 1.0, 0.0, 1e-12).finished();
    const Vector b = (Vector(3) << 1.1, 0.0, 3e-12).finished();
    EXPECT_NEAR(max_relative_error(a, b), 0.1 / 2.1, 1e-15);
    EXPECT_EQ(max_relative_error(a, a), 0.0);
}

TEST(Jacobian, IdentityModeDiagonalRecurrence)
{
    // with identity activation dX_t/dX_k = W_hh^(t-k) exactly
    for (double scale : {1.2, 0.8}) {
        RnnParams p = RnnParams::zeros(3, 4, 4);
        p.activation = HiddenActivation::identity;
        p.w_hh = Vector::LinSpaced(3, 0.5 * scale, scale).asDiagonal();
        SequenceBatch b;
        b.push_back(Matrix::Zero(4, 25), 0);
        double previous = 1.0;
        for (int gap = 1; gap <= 20; ++gap) {
            const Matrix jac = state_jacobian(p, b, 22, 22 - gap);
            Matrix power = Matrix::Identity(3, 3);
            for (int i = 0; i < gap; ++i) power *= p.w_hh;
            EXPECT_LT((jac - power).cwiseAbs().maxCoeff(), 1e-14);
            const double norm = jac.operatorNorm();
            EXPECT_NEAR(norm, std::pow(scale, gap), 1e-12 * std::pow(scale, gap));
            if (scale > 1.0) {
                EXPECT_GT(norm, previous);
            } else {
                EXPECT_LT(norm, previous);
            }
            previous = norm;
        }
    }
}

TEST(Jacobian, TanhModeMatchesFiniteDifferences)
{
    const auto prob = random_problem(4, 10, 8, 1, 8);
    const Matrix jac = state_jacobian(prob.params, prob.batch, 6, 3);
    // perturb h_3 by re-running the recursion from step 4 on
    const ForwardTrace tr = forward(prob.params, prob.batch);
    const Matrix& x = prob.batch.frames[0];
    auto run_from = [&](Vector h) {
        for (int t = 4; t <= 6; ++t)
            h = (prob.params.w_hh * h + prob.params.w_ih * x.col(t) + prob.params.b_h).array().tanh().matrix();
        return h;
    };
    const Vector h3 = tr.hidden_at(0, 3);
    for (int j = 0; j < 4; ++j) {
        Vector up = h3, down = h3;
        up(j) += 1e-6;
        down(j) -= 1e-6;
        const Vector col = (run_from(up) - run_from(down)) / 2e-6;
        EXPECT_LT((col - jac.col(j)).cwiseAbs().maxCoeff(), 1e-8);
    }
}
