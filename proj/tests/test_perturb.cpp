#include "rnnlab/grad.hpp"
#include "rnnlab/perturb.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rnnlab;

namespace {

ParamShapes shapes(int h = 6, int n = 10) { return {h, n, n}; }

} // namespace

TEST(SamplePlan, ScopesAgreeAtSingleStep)
{
    for (auto base : {PerturbationSpec::additive(0.1, NoiseScope::per_time_step),
                      PerturbationSpec::dropconnect(0.3, NoiseScope::per_time_step)}) {
        PerturbationSpec seq = base;
        seq.scope = NoiseScope::per_sequence;
        const auto a = sample_plan(base, shapes(), 1, 9);
        const auto b = sample_plan(seq, shapes(), 1, 9);
        EXPECT_EQ(a.realization(WeightSlot::w_hh, 0), b.realization(WeightSlot::w_hh, 0));
    }
}

TEST(SamplePlan, RealizationCounts)
{
    const auto step = sample_plan(PerturbationSpec::additive(0.1, NoiseScope::per_time_step), shapes(), 12, 1);
    const auto seq = sample_plan(PerturbationSpec::additive(0.1, NoiseScope::per_sequence), shapes(), 12, 1);
    EXPECT_EQ(step.realization_count(), 12u);
    EXPECT_EQ(seq.realization_count(), 1u);
    EXPECT_EQ(step.seed(), 1u);
    const auto ff = sample_plan(PerturbationSpec::feedforward(0.1), shapes(), 5, 1);
    EXPECT_EQ(ff.realization_count(), 10u);
    EXPECT_TRUE(ff.targets(WeightSlot::w_ih));
    EXPECT_TRUE(ff.targets(WeightSlot::w_ho));
    EXPECT_FALSE(ff.targets(WeightSlot::w_hh));
}

TEST(SamplePlan, ExtremeDropProbabilities)
{
    const auto keep = sample_plan(PerturbationSpec::dropconnect(0.0, NoiseScope::per_time_step), shapes(), 4, 2);
    const auto drop = sample_plan(PerturbationSpec::dropconnect(1.0, NoiseScope::per_time_step), shapes(), 4, 2);
    for (int t = 0; t < 4; ++t) {
        EXPECT_EQ(keep.realization(WeightSlot::w_hh, t).minCoeff(), 1.0);
        EXPECT_EQ(drop.realization(WeightSlot::w_hh, t).maxCoeff(), 0.0);
    }
}

TEST(SamplePlan, FreshMasksAndDensity)
{
    const double p = 0.35;
    const auto plan = sample_plan(PerturbationSpec::dropconnect(p, NoiseScope::per_time_step), shapes(40), 100, 3);
    EXPECT_NE(plan.realization(WeightSlot::w_hh, 3), plan.realization(WeightSlot::w_hh, 4));
    double kept = 0.0, n = 0.0;
    for (int t = 0; t < 100 && n < 1e5; ++t) {
        const Matrix& m = plan.realization(WeightSlot::w_hh, t);
        kept += m.sum();
        n += static_cast<double>(m.size());
    }
    ASSERT_GE(n, 1e5);
    const double se = std::sqrt(p * (1.0 - p) / n);
    EXPECT_LT(std::abs(kept / n - (1.0 - p)), 3.0 * se);
}

TEST(SamplePlan, NoiseMoments)
{
    const double sigma = 0.07;
    const auto plan = sample_plan(PerturbationSpec::additive(sigma, NoiseScope::per_time_step), shapes(50), 40, 4);
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (int t = 0; t < 40; ++t) {
        const Matrix& d = plan.realization(WeightSlot::w_hh, t);
        sum += d.sum();
        sq += d.squaredNorm();
        n += static_cast<double>(d.size());
    }
    EXPECT_LT(std::abs(sum / n), 3.0 * sigma / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(sq / n), sigma, 3.0 * sigma / std::sqrt(2.0 * n));
}

TEST(SamplePlan, InvalidSpecs)
{
    PerturbationSpec ff = PerturbationSpec::feedforward(0.1);
    ff.scope = NoiseScope::per_sequence;
    EXPECT_THROW(sample_plan(ff, shapes(), 3, 1), ContractError);
    PerturbationSpec ff_hh = PerturbationSpec::feedforward(0.1);
    ff_hh.targets = WeightTargets::all();
    EXPECT_THROW(sample_plan(ff_hh, shapes(), 3, 1), ContractError);
    EXPECT_THROW(sample_plan(PerturbationSpec::additive(0.0, NoiseScope::per_time_step), shapes(), 3, 1),
                 ContractError);
    EXPECT_THROW(sample_plan(PerturbationSpec::dropconnect(1.5, NoiseScope::per_time_step), shapes(), 3, 1),
                 ContractError);
    EXPECT_THROW(sample_plan(PerturbationSpec::additive(0.1, NoiseScope::per_time_step), shapes(), 0, 1),
                 ContractError);
}

TEST(EffectiveWeights, ArithmeticExamples)
{
    RnnParams p = RnnParams::zeros(1, 1, 1);
    p.w_hh(0, 0) = 1.0;
    auto plan = sample_plan(PerturbationSpec::additive(0.05, NoiseScope::per_sequence), p, 1, 1);
    // recover the delta and check W + Delta
    const double delta = plan.realization(WeightSlot::w_hh, 0)(0, 0);
    EXPECT_DOUBLE_EQ(effective_weights(p, plan, 0).w_hh()(0, 0), 1.0 + delta);

    // multiplicative noise never revives a structural zero
    RnnParams q = RnnParams::zeros(3, 2, 2);
    q.w_hh(0, 1) = 2.0;
    const auto mult = sample_plan(PerturbationSpec::multiplicative(0.5, NoiseScope::per_time_step), q, 5, 2);
    for (int t = 0; t < 5; ++t) {
        const Matrix eff = effective_weights(q, mult, t).w_hh();
        EXPECT_EQ((eff.array() != 0.0).count(), 1);
        EXPECT_DOUBLE_EQ(eff(0, 1), 2.0 * (1.0 + mult.realization(WeightSlot::w_hh, t)(0, 1)));
    }
}

TEST(EffectiveWeights, DirectFormulaForEachKind)
{
    const auto prob = rnnlab::testing::random_problem(4, 6, 3, 1, 5);
    const RnnParams& p = prob.params;
    auto check = [&](PerturbationSpec spec, auto formula) {
        spec.targets = WeightTargets::all();
        const auto plan = sample_plan(spec, p, 3, 6);
        for (int t = 0; t < 3; ++t) {
            const EffectiveWeights eff = effective_weights(p, plan, t);
            for (auto s : kWeightSlots)
                EXPECT_EQ(eff.get(s), formula(slot_of(p, s), plan.realization(s, t)));
        }
    };
    check(PerturbationSpec::additive(0.1, NoiseScope::per_time_step),
          [](const Matrix& w, const Matrix& d) -> Matrix { return w + d; });
    check(PerturbationSpec::multiplicative(0.1, NoiseScope::per_time_step),
          [](const Matrix& w, const Matrix& d) -> Matrix { return w.cwiseProduct((d.array() + 1.0).matrix()); });
    check(PerturbationSpec::dropconnect(0.5, NoiseScope::per_time_step),
          [](const Matrix& w, const Matrix& m) -> Matrix { return w.cwiseProduct(m); });
}

TEST(EffectiveWeights, ZeroDeltaAndUntargetedPassThrough)
{
    const auto prob = rnnlab::testing::random_problem(4, 6, 3, 1, 6);
    const auto plan = sample_plan(PerturbationSpec::additive(0.1, NoiseScope::per_time_step), prob.params, 3, 1);
    const EffectiveWeights eff = effective_weights(prob.params, plan, 1);
    EXPECT_EQ(&eff.w_ih(), &prob.params.w_ih);
    EXPECT_EQ(&eff.w_ho(), &prob.params.w_ho);
    EXPECT_EQ(eff.w_ih(), prob.params.w_ih);
    const auto none = sample_plan(PerturbationSpec::none(), prob.params, 3, 1);
    EXPECT_EQ(effective_weights(prob.params, none, 2).w_hh(), prob.params.w_hh);
    const Matrix w = prob.params.w_hh;
    EXPECT_EQ(w + Matrix::Zero(4, 4), w);
    EXPECT_EQ(w.cwiseProduct((Matrix::Zero(4, 4).array() + 1.0).matrix()), w);
}

TEST(EffectiveWeights, PerSequenceIsConstantOverTime)
{
    const auto prob = rnnlab::testing::random_problem(5, 6, 3, 1, 7);
    for (auto spec : {PerturbationSpec::multiplicative(0.1, NoiseScope::per_sequence),
                      PerturbationSpec::dropconnect(0.5, NoiseScope::per_sequence)}) {
        const auto plan = sample_plan(spec, prob.params, 30, 3);
        const Matrix first = effective_weights(prob.params, plan, 0).w_hh();
        for (int t = 1; t < 30; ++t) EXPECT_EQ(effective_weights(prob.params, plan, t).w_hh(), first);
    }
}

TEST(EffectiveWeights, SparsityPatterns)
{
    RnnParams p = RnnParams::zeros(30, 4, 4);
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 5; ++c) p.w_hh(r, (r + 7 * c) % 30) = 0.3;
    const auto mult = sample_plan(PerturbationSpec::multiplicative(0.1, NoiseScope::per_sequence), p, 1, 1);
    const auto add = sample_plan(PerturbationSpec::additive(0.1, NoiseScope::per_sequence), p, 1, 1);
    const Matrix m = effective_weights(p, mult, 0).w_hh();
    const Matrix a = effective_weights(p, add, 0).w_hh();
    EXPECT_TRUE(((m.array() != 0.0) == (p.w_hh.array() != 0.0)).all());
    EXPECT_EQ((a.array() != 0.0).count(), 900);
}

TEST(EffectiveWeights, ExpectationOverPlans)
{
    const auto prob = rnnlab::testing::random_problem(3, 4, 2, 1, 9);
    const Matrix& w = prob.params.w_hh;
    const int draws = 20000;
    for (auto spec : {PerturbationSpec::additive(0.1, NoiseScope::per_sequence),
                      PerturbationSpec::multiplicative(0.1, NoiseScope::per_sequence),
                      PerturbationSpec::dropconnect(0.3, NoiseScope::per_sequence)}) {
        Matrix mean = Matrix::Zero(3, 3);
        for (int d = 0; d < draws; ++d)
            mean += effective_weights(prob.params, sample_plan(spec, prob.params, 1, 1000 + d), 0).w_hh();
        mean /= draws;
        const bool drop = spec.kind == PerturbationKind::dropconnect;
        const Matrix expected = drop ? Matrix(0.7 * w) : w;
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double sd = drop ? std::abs(w.data()[i]) * std::sqrt(0.21)
                                   : 0.1 * (spec.kind == PerturbationKind::additive ? 1.0 : std::abs(w.data()[i]));
            EXPECT_LT(std::abs(mean.data()[i] - expected.data()[i]), 4.0 * sd / std::sqrt(draws) + 1e-15);
        }
    }
}

TEST(Penalty, Examples)
{
    RnnParams p = RnnParams::zeros(1, 2, 2);
    p.w_ho = Matrix::Zero(2, 1);
    p.w_ih << 3.0, -4.0;
    p.b_h(0) = 9.0;
    const auto l2 = norm_penalty(p, {PenaltyNorm::L2, 0.5});
    EXPECT_DOUBLE_EQ(l2.value, 12.5);
    EXPECT_DOUBLE_EQ(l2.grads.w_ih(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(l2.grads.w_ih(0, 1), -4.0);
    EXPECT_EQ(l2.grads.b_h(0), 0.0);
    const auto zero = norm_penalty(p, {PenaltyNorm::L1, 0.0});
    EXPECT_EQ(zero.value, 0.0);
    EXPECT_EQ(zero.grads.flatten().cwiseAbs().maxCoeff(), 0.0);
    const auto l1 = norm_penalty(p, {PenaltyNorm::L1, 0.1});
    EXPECT_DOUBLE_EQ(l1.value, 0.7);
    EXPECT_EQ(l1.grads.w_hh(0, 0), 0.0); // sign(0) = 0
}

TEST(Penalty, FiniteDifferences)
{
    const auto prob = rnnlab::testing::random_problem(4, 6, 2, 1, 10);
    for (auto norm : {PenaltyNorm::L1, PenaltyNorm::L2}) {
        const RegPenaltySpec spec{norm, 0.01};
        RnnParams probe = prob.params;
        auto value = [&](const Vector& flat) {
            probe.assign_flat(flat);
            return norm_penalty(probe, spec).value;
        };
        const Vector fd = central_difference(value, prob.params.flatten(), 1e-6);
        EXPECT_LT(max_relative_error(norm_penalty(prob.params, spec).grads.flatten(), fd), 1e-6);
    }
}

TEST(Moments, Examples)
{
    const Vector w = (Vector(2) << 1.0, 1.0).finished();
    const Vector x = (Vector(2) << 2.0, 3.0).finished();
    const auto m = noisy_moments(w, x, 0.1);
    EXPECT_DOUBLE_EQ(m.mean, 5.0);
    EXPECT_NEAR(m.variance, 0.25, 1e-15);
    const auto o = noisy_moments((Vector(2) << 2.0, 3.0).finished(), (Vector(2) << 3.0, -2.0).finished(), 0.2);
    EXPECT_EQ(o.mean, 0.0);
    EXPECT_EQ(o.variance, 0.0);
}

TEST(Moments, MonteCarloScalarFactor)
{
    // the derivation's noise is one Gaussian factor scaling the weight vector
    Rng rng = make_rng(11, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Vector w = Vector::Random(6), x = Vector::Random(6);
    const double sigma = 0.08;
    const auto m = noisy_moments(w, x, sigma);
    const int n = 100000;
    std::normal_distribution<double> delta(0.0, sigma);
    double sum = 0.0, sq = 0.0;
    std::vector<double> a(n);
    for (int i = 0; i < n; ++i) {
        a[i] = (w + delta(rng) * w).dot(x);
        sum += a[i];
    }
    const double mean = sum / n;
    for (double v : a) sq += (v - mean) * (v - mean);
    const double var = sq / (n - 1);
    EXPECT_LT(std::abs(mean - m.mean), 3.0 * std::sqrt(m.variance / n));
    EXPECT_LT(std::abs(var / m.variance - 1.0), 0.05);
}

TEST(Moments, PerWeightNoiseHasDiagonalVariance)
{
    // independent noise per weight, as used in training, gives sigma^2 sum (w_i x_i)^2 instead
    Rng rng = make_rng(12, 0);
    const Vector w = (Vector(3) << 0.5, -1.0, 2.0).finished(), x = (Vector(3) << 1.0, 1.0, 0.5).finished();
    const double sigma = 0.1;
    std::normal_distribution<double> delta(0.0, sigma);
    const int n = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double a = 0.0;
        for (int j = 0; j < 3; ++j) a += w(j) * (1.0 + delta(rng)) * x(j);
        sum += a;
        sq += a * a;
    }
    const double mean = sum / n, var = sq / n - mean * mean;
    const double diag = sigma * sigma * w.cwiseProduct(x).squaredNorm();
    EXPECT_LT(std::abs(var / diag - 1.0), 0.05);
    EXPECT_GT(std::abs(noisy_moments(w, x, sigma).variance / diag - 1.0), 0.5);
}

TEST(SampledActivation, Examples)
{
    const Vector w = (Vector(1) << 2.0).finished(), x = (Vector(1) << 1.0).finished();
    const auto s1 = sampled_activation_grad(w, x, 0.1, 1.0);
    EXPECT_NEAR(s1.a_hat, 2.2, 1e-15);
    EXPECT_NEAR(s1.grad_w(0), 1.1, 1e-15);
    EXPECT_NEAR(s1.reg_term(0), 0.1, 1e-15);
    const auto s0 = sampled_activation_grad(w, x, 0.1, 0.0);
    EXPECT_EQ(s0.a_hat, 2.0);
    EXPECT_EQ(s0.grad_w(0), 1.0);
    EXPECT_EQ(s0.reg_term(0), 0.0);
}

TEST(SampledActivation, GradientMatchesFiniteDifferences)
{
    Rng rng = make_rng(13, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
        Vector w(5), x(5);
        for (int i = 0; i < 5; ++i) {
            w(i) = normal(rng);
            x(i) = normal(rng);
        }
        if (std::abs(w.dot(x)) < 0.1) continue;
        const double sigma = 0.05, s = normal(rng);
        auto a_hat = [&](const Vector& v) { return sampled_activation_grad(v, x, sigma, s).a_hat; };
        const Vector fd = central_difference(a_hat, w, 1e-5);
        EXPECT_LT(max_relative_error(sampled_activation_grad(w, x, sigma, s).grad_w, fd), 1e-8);
    }
}

TEST(SampledActivation, SignFactorMattersForNegativeActivation)
{
    const Vector w = (Vector(2) << -1.0, 0.5).finished(), x = (Vector(2) << 2.0, 1.0).finished();
    const auto r = sampled_activation_grad(w, x, 0.1, 1.0);
    EXPECT_LT(w.dot(x), 0.0);
    EXPECT_EQ(r.reg_term, -unsigned_regularizer_term(x, 0.1, 1.0));
    const auto zero = sampled_activation_grad((Vector(2) << 1.0, -2.0).finished(), x, 0.1, 1.0);
    EXPECT_EQ(zero.reg_term.cwiseAbs().maxCoeff(), 0.0);
}

TEST(CleanWeights, UntouchedByPerturbedBptt)
{
    const auto prob = rnnlab::testing::random_problem(4, 8, 6, 2, 14);
    const RnnParams before = prob.params;
    for (const auto& spec : {PerturbationSpec::additive(0.1, NoiseScope::per_time_step),
                             PerturbationSpec::multiplicative(0.1, NoiseScope::per_sequence),
                             PerturbationSpec::dropconnect(0.5, NoiseScope::per_time_step),
                             PerturbationSpec::feedforward(0.1)})
        for (int i = 0; i < 20; ++i) bptt(prob.params, prob.batch, sample_plan(spec, prob.params, 6, i));
    EXPECT_TRUE(prob.params == before);
}
