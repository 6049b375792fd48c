#pragma once

// The rnnlab command line: train, search, sweep, demo-surface, gradcheck,
// eval and synth-data. Numeric flags override values from --config.

#include "rnnlab/config.hpp"
#include "rnnlab/core.hpp"
#include "rnnlab/data.hpp"
#include "rnnlab/grad.hpp"
#include "rnnlab/harness.hpp"
#include "rnnlab/perturb.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace rnnlab::cli {

inline constexpr const char* kOutputDirEnv = "RNNLAB_OUTPUT_DIR";

namespace detail {

/// Hyperparameter flags shared by train, search and sweep. Only flags that
/// were actually given are applied on top of the config file.
struct HyperFlags {
    std::string config_path;
    std::string preset_corpus;
    std::string variant = "plain";
    std::string dataset;
    std::string out_dir;
    int chunk_length = 100;
    int hidden = 0, batch = 0, max_epochs = 0, patience = 0, sparsify = 0;
    std::uint64_t seed = 1;
    double sigma_hh = 0, sigma_ih = 0, rho = 0, step_rate = 0, mu = 0, noise_sigma = 0, drop_p = 0, lambda = 0;
    std::string method, norm, kind, scope;
    CLI::Option *o_preset{}, *o_dataset{}, *o_out{}, *o_chunk{}, *o_hidden{}, *o_batch{}, *o_epochs{}, *o_patience{},
        *o_sparsify{}, *o_seed{}, *o_sigma_hh{}, *o_sigma_ih{}, *o_rho{}, *o_step{}, *o_mu{}, *o_noise{}, *o_drop{},
        *o_lambda{}, *o_method{}, *o_norm{}, *o_kind{}, *o_scope{};

    void attach(CLI::App& app)
    {
        app.add_option("--config", config_path, "JSON config file");
        o_preset = app.add_option("--preset", preset_corpus, "best-config preset: jsb, nottingham, pianomidi, musedata");
        app.add_option("--variant", variant, "preset variant: plain, nbr, n, ns, mn, mns, do, dos, ff");
        o_dataset = app.add_option("--dataset", dataset, "dataset JSON");
        o_out = app.add_option("--out-dir", out_dir, "output directory");
        o_chunk = app.add_option("--chunk-length", chunk_length, "training chunk length");
        o_hidden = app.add_option("--hidden", hidden, "hidden units");
        o_batch = app.add_option("--batch-size", batch, "minibatch size");
        o_epochs = app.add_option("--max-epochs", max_epochs, "epoch limit");
        o_patience = app.add_option("--patience", patience, "early-stopping patience");
        o_seed = app.add_option("--seed", seed, "run seed (also the init seed)");
        o_sparsify = app.add_option("--sparsify", sparsify, "nonzero recurrent weights per unit");
        o_sigma_hh = app.add_option("--sigma-hh", sigma_hh, "recurrent init std");
        o_sigma_ih = app.add_option("--sigma-ih", sigma_ih, "feedforward init std");
        o_rho = app.add_option("--rho", rho, "target spectral radius");
        o_method = app.add_option("--method", method, "optimizer: momentum, nag, rmsprop");
        o_step = app.add_option("--step-rate", step_rate, "learning rate");
        o_mu = app.add_option("--momentum", mu, "momentum coefficient");
        o_kind = app.add_option("--perturbation", kind, "none, additive, multiplicative, dropconnect, feedforward_additive");
        o_scope = app.add_option("--scope", scope, "per_time_step or per_sequence");
        o_noise = app.add_option("--noise-sigma", noise_sigma, "weight-noise std");
        o_drop = app.add_option("--drop-p", drop_p, "DropConnect drop probability");
        o_norm = app.add_option("--norm", norm, "penalty norm: L1 or L2");
        o_lambda = app.add_option("--lambda", lambda, "penalty weight (0 disables)");
    }

    static bool has(const CLI::Option* o) { return o != nullptr && o->count() > 0; }

    CliConfig resolve() const
    {
        CliConfig c;
        if (!config_path.empty()) c = load_cli_config(config_path);
        if (has(o_preset)) {
            c.hyper = preset(preset_corpus, parse_model_variant(variant));
            c.hyper.seed = c.hyper.init.seed = seed;
        }
        HyperConfig& h = c.hyper;
        if (has(o_dataset)) c.dataset = dataset;
        if (has(o_out)) c.output_dir = out_dir;
        if (has(o_chunk)) c.chunk_length = chunk_length;
        if (has(o_hidden)) h.hidden_units = hidden;
        if (has(o_batch)) h.batch_size = batch;
        if (has(o_epochs)) h.max_epochs = max_epochs;
        if (has(o_patience)) h.patience = patience;
        if (has(o_seed)) h.seed = h.init.seed = seed;
        if (has(o_sparsify)) h.init.sparsify_k = sparsify;
        if (has(o_sigma_hh)) h.init.sigma_hh = sigma_hh;
        if (has(o_sigma_ih)) h.init.sigma_ih = sigma_ih;
        if (has(o_rho)) h.init.rho_target = rho;
        if (has(o_method)) h.optimizer.method = parse_optimizer_method(method);
        if (has(o_step)) h.optimizer.step_rate = step_rate;
        if (has(o_mu)) h.optimizer.mu = mu;
        if (has(o_kind)) {
            const auto k = parse_perturbation_kind(kind);
            if (k != h.perturbation.kind) {
                h.perturbation.kind = k;
                h.perturbation.targets =
                    k == PerturbationKind::feedforward_additive ? WeightTargets::feedforward() : WeightTargets::recurrent();
            }
        }
        if (has(o_scope)) h.perturbation.scope = parse_noise_scope(scope);
        if (has(o_noise)) h.perturbation.sigma = noise_sigma;
        if (has(o_drop)) h.perturbation.drop_p = drop_p;
        if (has(o_norm) || has(o_lambda)) {
            RegPenaltySpec p = h.penalty.value_or(RegPenaltySpec{});
            if (has(o_norm)) p.norm = parse_penalty_norm(norm);
            if (has(o_lambda)) p.lambda = lambda;
            if (p.lambda > 0.0) h.penalty = p;
            else h.penalty.reset();
        }
        try {
            h.validate();
            require(c.chunk_length >= 1, "chunk_length must be >= 1");
        } catch (const ContractError& e) {
            throw SchemaError(std::string("invalid configuration: ") + e.what());
        }
        return c;
    }
};

inline std::filesystem::path output_dir(const std::string& configured)
{
    std::filesystem::path dir = configured;
    if (dir.empty()) {
        const char* env = std::getenv(kOutputDirEnv);
        dir = env != nullptr && *env != '\0' ? env : ".";
    }
    std::filesystem::create_directories(dir);
    return dir;
}

inline ChunkedDataset load_chunked(const CliConfig& c, PianoRollDataset* raw = nullptr)
{
    if (c.dataset.empty()) throw DataError("no dataset given (use --dataset or the config 'dataset' key)");
    PianoRollDataset d = load(c.dataset);
    ChunkedDataset out = chunk(d, c.chunk_length);
    if (raw != nullptr) *raw = std::move(d);
    return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    auto out = open_output(path.string());
    out << j.dump(2) << '\n';
}

} // namespace detail

/// Parses and runs one command. Returns the process exit status.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"rnnlab: recurrent networks for polyphonic music"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // train
    detail::HyperFlags train_flags;
    bool no_timing = false;
    auto* train_cmd = app.add_subcommand("train", "train one model and evaluate it on the test split");
    train_flags.attach(*train_cmd);
    train_cmd->add_flag("--no-timing", no_timing, "write 0 in the seconds column for byte-stable traces");

    // search
    detail::HyperFlags search_flags;
    int trials = 50, jobs = 1;
    std::uint64_t master_seed = 1;
    auto* search_cmd = app.add_subcommand("search", "random hyperparameter search");
    search_flags.attach(*search_cmd);
    search_cmd->add_option("--trials", trials, "number of trials")->check(CLI::PositiveNumber);
    search_cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    search_cmd->add_option("--master-seed", master_seed, "seed of the configuration sampler");

    // sweep
    detail::HyperFlags sweep_flags;
    std::string axis = "lambda";
    std::vector<double> values;
    int seeds = 3, sweep_jobs = 1;
    auto* sweep_cmd = app.add_subcommand("sweep", "train across values of one hyperparameter");
    sweep_flags.attach(*sweep_cmd);
    sweep_cmd->add_option("--axis", axis, "lambda, sigma or drop_p")->required();
    sweep_cmd->add_option("--values", values, "values to try")->required()->delimiter(',');
    sweep_cmd->add_option("--seeds", seeds, "seeds per value")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--jobs", sweep_jobs, "worker threads")->check(CLI::PositiveNumber);

    // demo-surface
    int demo_steps = 50;
    double demo_target = 0.7, demo_lambda = 0.0;
    std::string demo_norm = "L2", demo_out = "surface.csv", demo_rows_out;
    DemoGrid grid;
    auto* demo_cmd = app.add_subcommand("demo-surface", "loss surface of a one-unit sigmoid recurrence");
    demo_cmd->add_option("--steps", demo_steps, "recurrence length T")->check(CLI::PositiveNumber);
    demo_cmd->add_option("--target", demo_target, "target value z");
    demo_cmd->add_option("--resolution", grid.resolution, "grid points per axis");
    demo_cmd->add_option("--w-min", grid.w_min);
    demo_cmd->add_option("--w-max", grid.w_max);
    demo_cmd->add_option("--b-min", grid.b_min);
    demo_cmd->add_option("--b-max", grid.b_max);
    demo_cmd->add_option("--lambda", demo_lambda, "penalty weight (0 disables)");
    demo_cmd->add_option("--norm", demo_norm, "penalty norm: L1 or L2");
    demo_cmd->add_option("--out", demo_out, "surface CSV (w,b,loss); relative paths go under the output directory");
    demo_cmd->add_option("--rows-out", demo_rows_out, "optional per-row max gradient norm CSV");

    // gradcheck
    int gc_hidden = 5, gc_steps = 7, gc_batch = 2, gc_notes = kNotes;
    std::uint64_t gc_seed = 1;
    double gc_eps = kGradCheckEps, gc_sigma = 0.1, gc_drop = 0.3;
    std::string gc_kind = "none", gc_scope = "per_time_step";
    auto* gc_cmd = app.add_subcommand("gradcheck", "compare BPTT against central differences on a random net");
    gc_cmd->add_option("--hidden", gc_hidden)->check(CLI::PositiveNumber);
    gc_cmd->add_option("--steps", gc_steps)->check(CLI::PositiveNumber);
    gc_cmd->add_option("--batch", gc_batch)->check(CLI::PositiveNumber);
    gc_cmd->add_option("--notes", gc_notes, "input/output width")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--seed", gc_seed);
    gc_cmd->add_option("--eps", gc_eps, "finite-difference step");
    gc_cmd->add_option("--perturbation", gc_kind, "perturbation kind for a fixed realization");
    gc_cmd->add_option("--scope", gc_scope);
    gc_cmd->add_option("--noise-sigma", gc_sigma);
    gc_cmd->add_option("--drop-p", gc_drop);

    // eval
    std::string eval_params, eval_dataset;
    auto* eval_cmd = app.add_subcommand("eval", "test-split CE of saved parameters");
    eval_cmd->add_option("--params", eval_params, "params.json written by train")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "dataset JSON")->required();

    // synth-data
    std::uint64_t synth_seed = 1;
    int synth_n = 200, synth_steps = 100, synth_gap = 1;
    std::string synth_out = "synth.json";
    SynthConfig synth_cfg;
    auto* synth_cmd = app.add_subcommand("synth-data", "write a synthetic piano-roll dataset");
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("--sequences", synth_n);
    synth_cmd->add_option("--steps", synth_steps);
    synth_cmd->add_option("--motif-gap", synth_gap);
    synth_cmd->add_option("--chord-density", synth_cfg.chord_density);
    synth_cmd->add_option("--noise-rate", synth_cfg.noise_rate);
    synth_cmd->add_option("--out", synth_out, "dataset JSON; relative paths go under the output directory");

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    auto under = [](const std::filesystem::path& dir, const std::string& file) {
        const std::filesystem::path p = file;
        return p.is_absolute() ? p : dir / p;
    };

    try {
        if (*train_cmd) {
            const CliConfig c = train_flags.resolve();
            PianoRollDataset raw;
            const ChunkedDataset data = detail::load_chunked(c, &raw);
            const auto dir = detail::output_dir(c.output_dir);
            detail::write_json(dir / "manifest.json", manifest(raw));
            detail::write_json(dir / "config.json", to_json(c.hyper));
            TrainOptions opts;
            opts.on_epoch = [&](const EpochRecord& r) {
                if (r.epoch % 10 == 0)
                    err << "epoch " << r.epoch << " train " << fmt_number(r.train_ce) << " valid "
                        << fmt_number(r.valid_ce) << " rho " << fmt_number(r.spectral_radius) << '\n';
            };
            const TrainResult r = train(c.hyper, data, opts);
            write_trace_csv(r.trace, (dir / "trace.csv").string(), !no_timing);
            detail::write_json(dir / "params.json", params_to_json(r.params));
            out << "test_ce=" << fmt_number(r.trace.test_ce) << " best_epoch=" << r.trace.best_epoch
                << " best_valid_ce=" << fmt_number(r.trace.best_valid_ce) << " epochs=" << r.trace.epochs.back().epoch
                << (r.trace.diverged ? " diverged" : "") << '\n';
            return r.trace.diverged ? 3 : 0;
        }
        if (*search_cmd) {
            const CliConfig c = search_flags.resolve();
            const ChunkedDataset data = detail::load_chunked(c);
            SearchSpace space;
            space.variant = parse_model_variant(search_flags.variant);
            space.hidden_units = c.hyper.hidden_units;
            space.max_epochs = c.hyper.max_epochs;
            space.patience = c.hyper.patience;
            space.method = c.hyper.optimizer.method;
            const SearchReport report = random_search(space, trials, data, jobs, master_seed);
            const auto dir = detail::output_dir(c.output_dir);
            detail::write_json(dir / "search.json", to_json(report));
            if (report.empty_result()) {
                out << "all " << trials << " trials diverged\n";
                return 3;
            }
            out << "best_valid_ce=" << fmt_number(report.ranked.front().trace.best_valid_ce)
                << " test_ce=" << fmt_number(report.ranked.front().trace.test_ce) << " trials=" << trials
                << " diverged=" << report.diverged << '\n';
            return 0;
        }
        if (*sweep_cmd) {
            const CliConfig c = sweep_flags.resolve();
            const ChunkedDataset data = detail::load_chunked(c);
            const SweepResult s = sweep(parse_sweep_axis(axis), values, c.hyper, data, seeds, sweep_jobs);
            const auto dir = detail::output_dir(c.output_dir);
            write_sweep_csv(s, (dir / "sweep.csv").string());
            out << "rows=" << s.rows.size() << " kendall_tau=" << fmt_number(s.kendall_tau) << '\n';
            return 0;
        }
        if (*demo_cmd) {
            std::optional<RegPenaltySpec> penalty;
            if (demo_lambda > 0.0) penalty = RegPenaltySpec{parse_penalty_norm(demo_norm), demo_lambda};
            const DemoSurface s = demo_surface(demo_steps, demo_target, grid, penalty);
            const auto dir = detail::output_dir("");
            write_surface_csv(s, under(dir, demo_out).string());
            if (!demo_rows_out.empty()) write_surface_rows_csv(s, under(dir, demo_rows_out).string());
            out << "rows=" << s.points.size() << " max_abs_dw(w>1)=" << fmt_number(max_abs_dw(s)) << '\n';
            return 0;
        }
        if (*gc_cmd) {
            Rng rng = make_rng(gc_seed, 0);
            const RnnParams params = random_params(gc_hidden, gc_notes, gc_notes, 1.0, rng);
            const SequenceBatch batch = random_batch(gc_batch, gc_notes, gc_steps, 0.3, rng);
            PerturbationSpec spec;
            spec.kind = parse_perturbation_kind(gc_kind);
            spec.scope = parse_noise_scope(gc_scope);
            spec.sigma = gc_sigma;
            spec.drop_p = gc_drop;
            spec.targets = spec.kind == PerturbationKind::feedforward_additive ? WeightTargets::feedforward()
                                                                                 : WeightTargets::recurrent();
            spec.validate();
            const double e = spec.kind == PerturbationKind::none
                                 ? grad_check(params, batch, gc_eps)
                                 : grad_check(params, batch, sample_plan(spec, params, gc_steps, gc_seed), gc_eps);
            out << "max_relative_error=" << fmt_number(e) << '\n';
            return e < 1e-5 ? 0 : 1;
        }
        if (*eval_cmd) {
            std::ifstream in(eval_params);
            if (!in) throw DataError("cannot open params file '" + eval_params + "'");
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::parse_error& e) {
                throw DataError("params '" + eval_params + "' is not valid JSON: " + e.what());
            }
            const RnnParams params = params_from_json(j);
            const ChunkedDataset data = chunk(load(eval_dataset));
            out << "test_ce=" << fmt_number(evaluate(params, data.test)) << '\n';
            return 0;
        }
        if (*synth_cmd) {
            const PianoRollDataset d = synthesize(synth_seed, synth_n, synth_steps, synth_gap, synth_cfg);
            const auto path = under(detail::output_dir(""), synth_out);
            save(d, path.string());
            out << "sequences=" << synth_n << " train=" << d.train.size() << " valid=" << d.valid.size()
                << " test=" << d.test.size() << " oracle_ce=" << fmt_number(synth_oracle_ce(synth_cfg, synth_steps, synth_gap))
                << '\n';
            return 0;
        }
    } catch (const SchemaError& e) {
        err << "schema error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return 2;
    } catch (const ContractError& e) {
        err << "contract error: " << e.what() << '\n';
        return 2;
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << '\n';
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "file error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

inline int run(int argc, char** argv) { return run(std::vector<std::string>(argv + 1, argv + argc)); }

} // namespace rnnlab::cli
