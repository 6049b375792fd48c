#pragma once

// Experiment harness: the training loop with spectral-radius tracking, random
// hyperparameter search, one-axis sweeps, and the single-unit loss surface.

#include "rnnlab/config.hpp"
#include "rnnlab/core.hpp"
#include "rnnlab/data.hpp"
#include "rnnlab/grad.hpp"
#include "rnnlab/init.hpp"
#include "rnnlab/model.hpp"
#include "rnnlab/optim.hpp"
#include "rnnlab/perturb.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace rnnlab {

struct EpochRecord {
    int epoch = 0;
    double train_ce = 0.0;
    double valid_ce = 0.0;
    double spectral_radius = 0.0;
    double seconds = 0.0;
};

struct TrainingTrace {
    std::vector<EpochRecord> epochs; ///< epoch 0 is the initialization
    int best_epoch = 0;
    double best_valid_ce = std::numeric_limits<double>::quiet_NaN();
    double test_ce = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
};

struct TrainResult {
    TrainingTrace trace;
    RnnParams params; ///< parameters of trace.best_epoch
};

struct TrainOptions {
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Clean-weight loss of `params` over equal-length chunks, batched for speed.
inline double batched_ce(const RnnParams& params, const SequenceBatch& data, std::size_t batch = 256)
{
    if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    std::size_t weight = 0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < data.size(); begin += batch) {
        idx.clear();
        for (std::size_t k = begin; k < std::min(data.size(), begin + batch); ++k) idx.push_back(k);
        const SequenceBatch part = data.subset(idx);
        const std::size_t n = detail::predicting_sequences(part);
        if (n == 0) continue;
        total += ce_loss(forward(params, part), part) * static_cast<double>(n);
        weight += n;
    }
    return weight == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(weight);
}

/// Trains one model. Each iteration draws a fresh perturbation plan, adds the
/// norm-penalty gradient to the BPTT gradient and takes one optimizer step.
/// Model selection is by validation loss (train loss if there is no validation
/// split); evaluation always uses clean weights.
inline TrainResult train(const HyperConfig& config, const ChunkedDataset& data, const TrainOptions& options = {})
{
    config.validate();
    if (data.train.empty()) throw DataError("train: empty training split");
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();

    TrainResult result;
    RnnParams params = init_params(config.init, config.hidden_units);
    OptimizerState opt = OptimizerState::start(config.optimizer, params.size());
    Rng shuffle_rng = make_rng(config.seed, streams::shuffle);
    Rng plan_rng = make_rng(config.seed, streams::perturbation);
    const bool perturbed = config.perturbation.kind != PerturbationKind::none;
    const int chunk_steps = data.train.max_length();

    auto selection_ce = [&](const EpochRecord& r) { return data.valid.empty() ? r.train_ce : r.valid_ce; };
    auto record = [&](int epoch) {
        EpochRecord r;
        r.epoch = epoch;
        r.train_ce = batched_ce(params, data.train);
        r.valid_ce = batched_ce(params, data.valid);
        r.spectral_radius = spectral_radius(params.w_hh).value;
        r.seconds = std::chrono::duration<double>(clock::now() - start).count();
        return r;
    };

    EpochRecord first = record(0);
    result.trace.epochs.push_back(first);
    result.trace.best_epoch = 0;
    result.trace.best_valid_ce = selection_ce(first);
    result.params = params;
    if (options.on_epoch) options.on_epoch(first);

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    int since_best = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        try {
            for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(config.batch_size)) {
                const std::vector<std::size_t> idx(
                    order.begin() + static_cast<std::ptrdiff_t>(begin),
                    order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + config.batch_size)));
                const SequenceBatch batch = data.train.subset(idx);
                std::optional<PerturbationPlan> plan;
                if (perturbed) plan = sample_plan(config.perturbation, params, chunk_steps, plan_rng());
                step(opt, params, [&](const RnnParams& at) {
                    LossAndGradients lg = plan ? bptt(at, batch, *plan) : bptt(at, batch);
                    if (!std::isfinite(lg.loss)) throw DivergenceError("non-finite training loss");
                    if (config.penalty) lg.grads += norm_penalty(at, *config.penalty).grads;
                    return lg.grads;
                });
            }
        } catch (const DivergenceError&) {
            result.trace.diverged = true;
            break;
        }
        if (!params.all_finite()) {
            result.trace.diverged = true;
            break;
        }
        EpochRecord r = record(epoch);
        if (!std::isfinite(r.train_ce) || (!data.valid.empty() && !std::isfinite(r.valid_ce))) {
            result.trace.diverged = true;
            break;
        }
        result.trace.epochs.push_back(r);
        if (options.on_epoch) options.on_epoch(r);
        if (selection_ce(r) < result.trace.best_valid_ce) {
            result.trace.best_valid_ce = selection_ce(r);
            result.trace.best_epoch = epoch;
            result.params = params;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    if (!data.test.empty()) result.trace.test_ce = evaluate(result.params, data.test);
    return result;
}

// ---------------------------------------------------------------------------
// Parallel runner

/// Runs fn(0..n-1) on up to `jobs` threads. Results must be written to
/// per-index slots by fn. The first exception is rethrown after joining.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn)
{
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Random search

/// Hyperparameter ranges. Discrete sets are sampled uniformly, lambda
/// log-uniformly, noise sigma and drop_p uniformly.
struct SearchSpace {
    ModelVariant variant = ModelVariant::plain;
    int hidden_units = 200;
    int max_epochs = 1000;
    int patience = 20;
    OptimizerMethod method = OptimizerMethod::rmsprop;
    std::vector<double> sigma_hh{1e-3, 1.0, 1e-4};
    std::vector<double> sigma_ih{1e-1, 1e-2, 1e-3};
    std::vector<int> sparsify{15, 25, 50};
    std::vector<double> rho{0.9, 1.0, 1.1};
    std::vector<PenaltyNorm> norms{PenaltyNorm::L1, PenaltyNorm::L2};
    double lambda_min = 1e-4, lambda_max = 1e-2;
    double drop_p_min = 0.0, drop_p_max = 1.0;
    double noise_min = 0.01, noise_max = 0.1;
    std::vector<double> momentum{0.9, 0.95, 0.99};
    std::vector<double> step_rate{1e-2, 1e-3, 1e-4};
    std::vector<int> batch_size{27, 81};
};

template <class T>
const T& pick_one(const std::vector<T>& choices, Rng& rng)
{
    require(!choices.empty(), "empty choice set in search space");
    std::uniform_int_distribution<std::size_t> d(0, choices.size() - 1);
    return choices[d(rng)];
}

/// Sparsify values above the hidden size are clamped to it.
inline HyperConfig sample_config(const SearchSpace& space, Rng& rng, std::uint64_t trial_seed)
{
    HyperConfig c;
    c.hidden_units = space.hidden_units;
    c.max_epochs = space.max_epochs;
    c.patience = space.patience;
    c.seed = trial_seed;
    c.init.seed = trial_seed;
    c.init.sigma_hh = pick_one(space.sigma_hh, rng);
    c.init.sigma_ih = pick_one(space.sigma_ih, rng);
    c.init.sparsify_k = std::min(pick_one(space.sparsify, rng), space.hidden_units);
    c.init.rho_target = pick_one(space.rho, rng);
    c.optimizer.method = space.method;
    c.optimizer.mu = pick_one(space.momentum, rng);
    c.optimizer.step_rate = pick_one(space.step_rate, rng);
    c.batch_size = pick_one(space.batch_size, rng);
    const PenaltyNorm norm = pick_one(space.norms, rng);
    std::uniform_real_distribution<double> log_lambda(std::log(space.lambda_min), std::log(space.lambda_max));
    const double lambda = std::exp(log_lambda(rng));
    std::uniform_real_distribution<double> drop(space.drop_p_min, space.drop_p_max);
    const double drop_p = drop(rng);
    std::uniform_real_distribution<double> noise(space.noise_min, space.noise_max);
    const double sigma = noise(rng);
    apply_variant(c, space.variant, sigma, drop_p, norm, lambda);
    return c;
}

struct TrialResult {
    std::size_t index = 0;
    HyperConfig config;
    TrainingTrace trace;
};

struct SearchReport {
    ModelVariant variant = ModelVariant::plain;
    std::vector<TrialResult> ranked; ///< by best validation CE; diverged trials last
    std::size_t diverged = 0;

    bool empty_result() const { return ranked.empty() || ranked.front().trace.diverged; }
};

inline bool trial_usable(const TrialResult& t) { return !t.trace.diverged && std::isfinite(t.trace.best_valid_ce); }

inline SearchReport random_search(const SearchSpace& space, int n_trials, const ChunkedDataset& data, int jobs,
                                  std::uint64_t master_seed)
{
    require(n_trials >= 1, "random_search needs at least one trial");
    Rng rng = make_rng(master_seed, streams::search);
    std::vector<TrialResult> trials(static_cast<std::size_t>(n_trials));
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const std::uint64_t trial_seed = rng();
        trials[i].index = i;
        trials[i].config = sample_config(space, rng, trial_seed);
    }
    parallel_for(trials.size(), jobs, [&](std::size_t i) { trials[i].trace = train(trials[i].config, data).trace; });

    SearchReport report;
    report.variant = space.variant;
    std::stable_sort(trials.begin(), trials.end(), [](const TrialResult& a, const TrialResult& b) {
        if (trial_usable(a) != trial_usable(b)) return trial_usable(a);
        if (!trial_usable(a)) return false;
        return a.trace.best_valid_ce < b.trace.best_valid_ce;
    });
    for (const auto& t : trials) report.diverged += trial_usable(t) ? 0 : 1;
    report.ranked = std::move(trials);
    return report;
}

inline nlohmann::json nullable(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

/// Row in the best-configuration table layout.
inline nlohmann::json table_row(const HyperConfig& c)
{
    const bool noise = c.perturbation.is_noise();
    const bool dropconnect = c.perturbation.kind == PerturbationKind::dropconnect;
    return {{"sigma_hh", c.init.sigma_hh},
            {"sigma_ih", c.init.sigma_ih},
            {"sparsify", c.init.sparsify_k},
            {"rho_limit", c.init.rho_target},
            {"regularizer", c.penalty ? nlohmann::json(to_string(c.penalty->norm)) : nlohmann::json(nullptr)},
            {"log_lambda", c.penalty ? nlohmann::json(std::log10(c.penalty->lambda)) : nlohmann::json(nullptr)},
            {"dropout_p", dropconnect ? nlohmann::json(c.perturbation.drop_p) : nlohmann::json(nullptr)},
            {"noise_sigma", noise ? nlohmann::json(c.perturbation.sigma) : nlohmann::json(nullptr)},
            {"momentum", c.optimizer.mu},
            {"step_rate", c.optimizer.step_rate},
            {"batch_size", c.batch_size},
            {"hidden", c.hidden_units}};
}

/// Both the best trial's test loss and the mean over usable trials are
/// reported, since either could be the headline number.
inline nlohmann::json to_json(const SearchReport& r)
{
    nlohmann::json out;
    out["variant"] = to_string(r.variant);
    out["trials"] = r.ranked.size();
    out["diverged"] = r.diverged;
    nlohmann::json ranked = nlohmann::json::array();
    double sum = 0.0;
    std::size_t usable = 0;
    for (const auto& t : r.ranked) {
        ranked.push_back({{"trial", t.index},
                          {"best_valid_ce", nullable(t.trace.best_valid_ce)},
                          {"test_ce", nullable(t.trace.test_ce)},
                          {"diverged", t.trace.diverged},
                          {"epochs", t.trace.epochs.empty() ? 0 : t.trace.epochs.back().epoch},
                          {"table", table_row(t.config)},
                          {"config", to_json(t.config)}});
        if (trial_usable(t) && std::isfinite(t.trace.test_ce)) {
            sum += t.trace.test_ce;
            ++usable;
        }
    }
    out["ranked"] = std::move(ranked);
    if (r.empty_result()) {
        out["best"] = nullptr;
        out["message"] = "all trials diverged";
    } else {
        const auto& best = r.ranked.front();
        out["best"] = {{"trial", best.index},
                       {"best_valid_ce", nullable(best.trace.best_valid_ce)},
                       {"test_ce", nullable(best.trace.test_ce)},
                       {"table", table_row(best.config)}};
    }
    out["mean_test_ce"] = usable == 0 ? nlohmann::json(nullptr) : nlohmann::json(sum / static_cast<double>(usable));
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { lambda, sigma, drop_p };

inline std::string to_string(SweepAxis a)
{
    switch (a) {
    case SweepAxis::lambda: return "lambda";
    case SweepAxis::sigma: return "sigma";
    case SweepAxis::drop_p: return "drop_p";
    }
    return "?";
}

inline SweepAxis parse_sweep_axis(const std::string& s)
{
    if (s == "lambda") return SweepAxis::lambda;
    if (s == "sigma") return SweepAxis::sigma;
    if (s == "drop_p") return SweepAxis::drop_p;
    throw DataError("unknown sweep axis '" + s + "'");
}

/// base with one knob replaced. A sigma sweep on an unperturbed base uses
/// additive per-time-step recurrent noise; a drop_p sweep on a base that is
/// not DropConnect uses per-sequence DropConnect; a lambda sweep without a
/// penalty uses L2.
inline HyperConfig apply_axis(HyperConfig c, SweepAxis axis, double value)
{
    switch (axis) {
    case SweepAxis::lambda:
        c.penalty = RegPenaltySpec{c.penalty ? c.penalty->norm : PenaltyNorm::L2, value};
        break;
    case SweepAxis::sigma:
        if (!c.perturbation.is_noise()) c.perturbation = PerturbationSpec::additive(value, NoiseScope::per_time_step);
        c.perturbation.sigma = value;
        break;
    case SweepAxis::drop_p:
        if (c.perturbation.kind != PerturbationKind::dropconnect)
            c.perturbation = PerturbationSpec::dropconnect(value, NoiseScope::per_sequence);
        c.perturbation.drop_p = value;
        break;
    }
    return c;
}

struct SweepRow {
    double value = 0.0;
    double mean_test_ce = std::numeric_limits<double>::quiet_NaN();
    double stddev = 0.0;
    std::vector<double> test_ce; ///< per seed; NaN for diverged runs
};

struct SweepResult {
    SweepAxis axis = SweepAxis::lambda;
    std::vector<SweepRow> rows;
    double kendall_tau = 0.0; ///< rank correlation of value against mean test CE
};

inline double kendall_tau(const std::vector<double>& x, const std::vector<double>& y)
{
    require(x.size() == y.size(), "kendall_tau: size mismatch");
    long concordant = 0, discordant = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            const double s = (x[i] - x[j]) * (y[i] - y[j]);
            if (s > 0) ++concordant;
            else if (s < 0) ++discordant;
        }
    const long pairs = static_cast<long>(x.size() * (x.size() - 1) / 2);
    return pairs == 0 ? 0.0 : static_cast<double>(concordant - discordant) / static_cast<double>(pairs);
}

/// One training run per (value, seed); seed s uses base.seed + s for both the
/// run and its initialization.
inline SweepResult sweep(SweepAxis axis, const std::vector<double>& values, const HyperConfig& base,
                         const ChunkedDataset& data, int seeds = 3, int jobs = 1)
{
    require(!values.empty(), "sweep needs at least one value");
    require(seeds >= 1, "sweep needs at least one seed");
    SweepResult out;
    out.axis = axis;
    out.rows.resize(values.size());
    for (std::size_t v = 0; v < values.size(); ++v) {
        out.rows[v].value = values[v];
        out.rows[v].test_ce.assign(static_cast<std::size_t>(seeds), std::numeric_limits<double>::quiet_NaN());
    }
    parallel_for(values.size() * static_cast<std::size_t>(seeds), jobs, [&](std::size_t job) {
        const std::size_t v = job / static_cast<std::size_t>(seeds);
        const std::size_t s = job % static_cast<std::size_t>(seeds);
        HyperConfig c = apply_axis(base, axis, values[v]);
        c.seed = base.seed + s;
        c.init.seed = base.init.seed + s;
        const TrainResult r = train(c, data);
        out.rows[v].test_ce[s] = r.trace.diverged && !std::isfinite(r.trace.test_ce) ? std::numeric_limits<double>::quiet_NaN()
                                                                                       : r.trace.test_ce;
    });
    std::vector<double> xs, ys;
    for (auto& row : out.rows) {
        std::vector<double> ok;
        for (double v : row.test_ce)
            if (std::isfinite(v)) ok.push_back(v);
        if (ok.empty()) continue;
        const double mean = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
        double ss = 0.0;
        for (double v : ok) ss += (v - mean) * (v - mean);
        row.mean_test_ce = mean;
        row.stddev = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
        xs.push_back(row.value);
        ys.push_back(mean);
    }
    out.kendall_tau = kendall_tau(xs, ys);
    return out;
}

// ---------------------------------------------------------------------------
// Single-unit loss surface: x_0 = 0, x_t = sigmoid(w x_{t-1} + b),
// L = (x_T - z)^2 (+ optional penalty on w and b).

struct DemoGrid {
    double w_min = 0.0, w_max = 15.0;
    double b_min = -8.0, b_max = 2.0;
    int resolution = 100;
};

struct SurfacePoint {
    double w = 0.0, b = 0.0;
    double loss = 0.0;
    double d_w = 0.0, d_b = 0.0; ///< exact partial derivatives
};

struct DemoSurface {
    int steps = 0;
    double target = 0.0;
    int resolution = 0;
    std::vector<SurfacePoint> points;    ///< row-major: row i has w = w_i, b varies
    std::vector<double> row_max_grad;    ///< max over a row of |(dL/dw, dL/db)|
};

/// Loss and its gradient at one (w, b), by forward-mode differentiation of the recursion.
inline SurfacePoint demo_point(double w, double b, int steps, double target,
                               const std::optional<RegPenaltySpec>& penalty = std::nullopt)
{
    double x = 0.0, dx_dw = 0.0, dx_db = 0.0;
    for (int t = 0; t < steps; ++t) {
        const double s = sigmoid(w * x + b);
        const double slope = s * (1.0 - s);
        dx_dw = slope * (x + w * dx_dw);
        dx_db = slope * (1.0 + w * dx_db);
        x = s;
    }
    SurfacePoint p{w, b, (x - target) * (x - target), 2.0 * (x - target) * dx_dw, 2.0 * (x - target) * dx_db};
    if (penalty && penalty->lambda > 0.0) {
        const double lam = penalty->lambda;
        if (penalty->norm == PenaltyNorm::L2) {
            p.loss += lam * (w * w + b * b);
            p.d_w += 2.0 * lam * w;
            p.d_b += 2.0 * lam * b;
        } else {
            p.loss += lam * (std::abs(w) + std::abs(b));
            p.d_w += lam * sign_of(w);
            p.d_b += lam * sign_of(b);
        }
    }
    return p;
}

inline DemoSurface demo_surface(int steps, double target, const DemoGrid& grid = {},
                                const std::optional<RegPenaltySpec>& penalty = std::nullopt)
{
    require(grid.resolution >= 2, "demo_surface: resolution must be >= 2");
    require(steps >= 1, "demo_surface: steps must be >= 1");
    require(grid.w_max > grid.w_min && grid.b_max > grid.b_min, "demo_surface: empty grid range");
    DemoSurface out;
    out.steps = steps;
    out.target = target;
    out.resolution = grid.resolution;
    out.points.reserve(static_cast<std::size_t>(grid.resolution) * grid.resolution);
    const double dw = (grid.w_max - grid.w_min) / (grid.resolution - 1);
    const double db = (grid.b_max - grid.b_min) / (grid.resolution - 1);
    for (int i = 0; i < grid.resolution; ++i) {
        const double w = grid.w_min + i * dw;
        double row_max = 0.0;
        for (int j = 0; j < grid.resolution; ++j) {
            const double b = grid.b_min + j * db;
            out.points.push_back(demo_point(w, b, steps, target, penalty));
            row_max = std::max(row_max, std::hypot(out.points.back().d_w, out.points.back().d_b));
        }
        out.row_max_grad.push_back(row_max);
    }
    return out;
}

/// max |dL/dw| over grid points with w > w_above.
inline double max_abs_dw(const DemoSurface& s, double w_above = 1.0)
{
    double m = 0.0;
    for (const auto& p : s.points)
        if (p.w > w_above) m = std::max(m, std::abs(p.d_w));
    return m;
}

// ---------------------------------------------------------------------------
// CSV output. Numbers are written with round-trip precision.

inline std::string fmt_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    return out;
}

/// epoch,train_ce,valid_ce,spectral_radius,seconds. With include_timing false
/// the seconds column is written as 0 so files compare byte-for-byte.
inline void write_trace_csv(const TrainingTrace& trace, const std::string& path, bool include_timing = true)
{
    auto out = open_output(path);
    out << "epoch,train_ce,valid_ce,spectral_radius,seconds\n";
    for (const auto& r : trace.epochs)
        out << r.epoch << ',' << fmt_number(r.train_ce) << ',' << fmt_number(r.valid_ce) << ','
            << fmt_number(r.spectral_radius) << ',' << fmt_number(include_timing ? r.seconds : 0.0) << '\n';
}

inline void write_sweep_csv(const SweepResult& s, const std::string& path)
{
    auto out = open_output(path);
    out << "value,mean_test_ce,stddev\n";
    for (const auto& r : s.rows)
        out << fmt_number(r.value) << ',' << fmt_number(r.mean_test_ce) << ',' << fmt_number(r.stddev) << '\n';
}

inline void write_surface_csv(const DemoSurface& s, const std::string& path)
{
    auto out = open_output(path);
    out << "w,b,loss\n";
    for (const auto& p : s.points) out << fmt_number(p.w) << ',' << fmt_number(p.b) << ',' << fmt_number(p.loss) << '\n';
}

inline void write_surface_rows_csv(const DemoSurface& s, const std::string& path)
{
    auto out = open_output(path);
    out << "w,max_grad_norm\n";
    for (int i = 0; i < s.resolution; ++i)
        out << fmt_number(s.points[static_cast<std::size_t>(i) * s.resolution].w) << ','
            << fmt_number(s.row_max_grad[i]) << '\n';
}

// ---------------------------------------------------------------------------
// Parameter files (used by `train` and `eval`).

inline nlohmann::json matrix_to_json(const Matrix& m)
{
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& name)
{
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw DataError("params: '" + name + "' must be a 2-d list");
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != j[0].size()) throw DataError("params: '" + name + "' is ragged");
        for (std::size_t k = 0; k < j[i].size(); ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

inline nlohmann::json params_to_json(const RnnParams& p)
{
    return {{"w_ih", matrix_to_json(p.w_ih)},
            {"w_hh", matrix_to_json(p.w_hh)},
            {"w_ho", matrix_to_json(p.w_ho)},
            {"b_h", std::vector<double>(p.b_h.data(), p.b_h.data() + p.b_h.size())},
            {"b_o", std::vector<double>(p.b_o.data(), p.b_o.data() + p.b_o.size())}};
}

inline RnnParams params_from_json(const nlohmann::json& j)
{
    RnnParams p;
    try {
        p.w_ih = matrix_from_json(j.at("w_ih"), "w_ih");
        p.w_hh = matrix_from_json(j.at("w_hh"), "w_hh");
        p.w_ho = matrix_from_json(j.at("w_ho"), "w_ho");
        const auto bh = j.at("b_h").get<std::vector<double>>();
        const auto bo = j.at("b_o").get<std::vector<double>>();
        p.b_h = Eigen::Map<const Vector>(bh.data(), static_cast<Eigen::Index>(bh.size()));
        p.b_o = Eigen::Map<const Vector>(bo.data(), static_cast<Eigen::Index>(bo.size()));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("params: ") + e.what());
    }
    if (!p.shapes_consistent()) throw DataError("params: inconsistent shapes");
    return p;
}

} // namespace rnnlab
