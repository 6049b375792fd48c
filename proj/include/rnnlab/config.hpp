#pragma once

// Experiment configuration: HyperConfig, its strict JSON schema, and the
// best-configuration presets for the four polyphonic music corpora.

#include "rnnlab/core.hpp"
#include "rnnlab/init.hpp"
#include "rnnlab/optim.hpp"
#include "rnnlab/perturb.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace rnnlab {

/// Raised by the config loader; the message lists every offending key.
class SchemaError : public DataError {
public:
    using DataError::DataError;
};

struct HyperConfig {
    InitSpec init;
    int hidden_units = 200;
    PerturbationSpec perturbation;
    std::optional<RegPenaltySpec> penalty;
    OptimizerConfig optimizer;
    int batch_size = 27;
    int max_epochs = 1000;
    int patience = 20;
    std::uint64_t seed = 1;

    void validate() const
    {
        require(hidden_units >= 1, "hidden_units must be >= 1");
        init.validate(hidden_units);
        perturbation.validate();
        if (penalty) penalty->validate();
        optimizer.validate();
        require(batch_size >= 1, "batch_size must be >= 1");
        require(max_epochs >= 0, "max_epochs must be >= 0");
        require(patience >= 1, "patience must be >= 1");
    }
};

/// What the CLI reads from a config file: a HyperConfig plus run plumbing.
struct CliConfig {
    HyperConfig hyper;
    std::string dataset;
    std::string output_dir;
    int chunk_length = 100;
};

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json targets_to_json(const WeightTargets& t)
{
    nlohmann::json out = nlohmann::json::array();
    if (t.w_ih) out.push_back("w_ih");
    if (t.w_hh) out.push_back("w_hh");
    if (t.w_ho) out.push_back("w_ho");
    return out;
}

inline nlohmann::json to_json(const HyperConfig& c)
{
    nlohmann::json j;
    j["hidden_units"] = c.hidden_units;
    j["batch_size"] = c.batch_size;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["seed"] = c.seed;
    j["init"] = {{"sigma_hh", c.init.sigma_hh},
                 {"sigma_ih", c.init.sigma_ih},
                 {"sparsify_k", c.init.sparsify_k},
                 {"rho_target", c.init.rho_target},
                 {"seed", c.init.seed}};
    j["perturbation"] = {{"kind", to_string(c.perturbation.kind)},
                         {"scope", to_string(c.perturbation.scope)},
                         {"sigma", c.perturbation.sigma},
                         {"drop_p", c.perturbation.drop_p},
                         {"targets", targets_to_json(c.perturbation.targets)}};
    j["penalty"] = c.penalty ? nlohmann::json{{"norm", to_string(c.penalty->norm)}, {"lambda", c.penalty->lambda}}
                             : nlohmann::json(nullptr);
    j["optimizer"] = {{"method", to_string(c.optimizer.method)},
                      {"mu", c.optimizer.mu},
                      {"step_rate", c.optimizer.step_rate},
                      {"decay", c.optimizer.decay},
                      {"epsilon", c.optimizer.epsilon}};
    return j;
}

namespace detail {

/// Collects every schema problem before failing.
class SchemaReader {
public:
    void allow_only(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> keys)
    {
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [key, value] : obj.items()) {
            (void)value;
            if (!allowed.count(key)) problems_.push_back("unknown key '" + where + key + "'");
        }
    }

    template <class T>
    void read(const nlohmann::json& obj, const std::string& where, const char* key, T& out)
    {
        if (!obj.contains(key)) return;
        const auto& v = obj.at(key);
        bool ok = false;
        if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
        else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer() && (std::is_signed_v<T> || v.get<std::int64_t>() >= 0);
        else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
        if (!ok) {
            problems_.push_back("bad type for '" + where + key + "'");
            return;
        }
        out = v.get<T>();
    }

    bool object_at(const nlohmann::json& obj, const std::string& where, const char* key)
    {
        if (!obj.contains(key)) return false;
        if (obj.at(key).is_object()) return true;
        if (!obj.at(key).is_null()) problems_.push_back("'" + where + key + "' must be an object");
        return false;
    }

    void fail(std::string what) { problems_.push_back(std::move(what)); }

    void finish() const
    {
        if (problems_.empty()) return;
        std::string msg = "config schema error:";
        for (const auto& p : problems_) msg += "\n  " + p;
        throw SchemaError(msg);
    }

private:
    std::vector<std::string> problems_;
};

inline WeightTargets parse_targets(const nlohmann::json& list, SchemaReader& r)
{
    WeightTargets t;
    if (!list.is_array()) {
        r.fail("'perturbation.targets' must be a list");
        return t;
    }
    for (const auto& item : list) {
        const std::string name = item.is_string() ? item.get<std::string>() : "";
        if (name == "w_ih") t.w_ih = true;
        else if (name == "w_hh") t.w_hh = true;
        else if (name == "w_ho") t.w_ho = true;
        else r.fail("unknown weight target '" + item.dump() + "' in 'perturbation.targets'");
    }
    return t;
}

} // namespace detail

/// Strict reader: unknown keys and type mismatches are reported together.
inline CliConfig cli_config_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object()) throw SchemaError("config schema error: top level must be an object");
    detail::SchemaReader r;
    CliConfig cfg;
    HyperConfig& h = cfg.hyper;
    r.allow_only(doc, "", {"dataset", "output_dir", "chunk_length", "hidden_units", "batch_size", "max_epochs",
                           "patience", "seed", "init", "perturbation", "penalty", "optimizer"});
    r.read(doc, "", "dataset", cfg.dataset);
    r.read(doc, "", "output_dir", cfg.output_dir);
    r.read(doc, "", "chunk_length", cfg.chunk_length);
    r.read(doc, "", "hidden_units", h.hidden_units);
    r.read(doc, "", "batch_size", h.batch_size);
    r.read(doc, "", "max_epochs", h.max_epochs);
    r.read(doc, "", "patience", h.patience);
    r.read(doc, "", "seed", h.seed);
    h.init.seed = h.seed;

    if (r.object_at(doc, "", "init")) {
        const auto& o = doc.at("init");
        r.allow_only(o, "init.", {"sigma_hh", "sigma_ih", "sparsify_k", "rho_target", "seed"});
        r.read(o, "init.", "sigma_hh", h.init.sigma_hh);
        r.read(o, "init.", "sigma_ih", h.init.sigma_ih);
        r.read(o, "init.", "sparsify_k", h.init.sparsify_k);
        r.read(o, "init.", "rho_target", h.init.rho_target);
        r.read(o, "init.", "seed", h.init.seed);
    }
    if (r.object_at(doc, "", "perturbation")) {
        const auto& o = doc.at("perturbation");
        r.allow_only(o, "perturbation.", {"kind", "scope", "sigma", "drop_p", "targets"});
        std::string kind = "none", scope = "per_time_step";
        r.read(o, "perturbation.", "kind", kind);
        r.read(o, "perturbation.", "scope", scope);
        try {
            h.perturbation.kind = parse_perturbation_kind(kind);
            h.perturbation.scope = parse_noise_scope(scope);
        } catch (const DataError& e) {
            r.fail(e.what());
        }
        h.perturbation.targets = h.perturbation.kind == PerturbationKind::feedforward_additive
                                     ? WeightTargets::feedforward()
                                     : WeightTargets::recurrent();
        r.read(o, "perturbation.", "sigma", h.perturbation.sigma);
        r.read(o, "perturbation.", "drop_p", h.perturbation.drop_p);
        if (o.contains("targets")) h.perturbation.targets = detail::parse_targets(o.at("targets"), r);
    }
    if (r.object_at(doc, "", "penalty")) {
        const auto& o = doc.at("penalty");
        r.allow_only(o, "penalty.", {"norm", "lambda"});
        RegPenaltySpec p;
        std::string norm = "L2";
        r.read(o, "penalty.", "norm", norm);
        r.read(o, "penalty.", "lambda", p.lambda);
        try {
            p.norm = parse_penalty_norm(norm);
        } catch (const DataError& e) {
            r.fail(e.what());
        }
        h.penalty = p;
    }
    if (r.object_at(doc, "", "optimizer")) {
        const auto& o = doc.at("optimizer");
        r.allow_only(o, "optimizer.", {"method", "mu", "step_rate", "decay", "epsilon"});
        std::string method = to_string(h.optimizer.method);
        r.read(o, "optimizer.", "method", method);
        try {
            h.optimizer.method = parse_optimizer_method(method);
        } catch (const DataError& e) {
            r.fail(e.what());
        }
        r.read(o, "optimizer.", "mu", h.optimizer.mu);
        r.read(o, "optimizer.", "step_rate", h.optimizer.step_rate);
        r.read(o, "optimizer.", "decay", h.optimizer.decay);
        r.read(o, "optimizer.", "epsilon", h.optimizer.epsilon);
    }
    r.finish();
    try {
        h.validate();
        require(cfg.chunk_length >= 1, "chunk_length must be >= 1");
    } catch (const ContractError& e) {
        throw SchemaError(std::string("config schema error:\n  ") + e.what());
    }
    return cfg;
}

inline CliConfig load_cli_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return cli_config_from_json(doc);
}

// ---------------------------------------------------------------------------
// Presets: best random-search configurations per corpus and model variant.

enum class ModelVariant { plain, nbr, n, ns, mn, mns, dropout, dropout_seq, ff };

inline constexpr std::array<const char*, 9> kVariantNames{"plain", "nbr", "n", "ns", "mn", "mns", "do", "dos", "ff"};

inline std::string to_string(ModelVariant v) { return kVariantNames[static_cast<int>(v)]; }

inline ModelVariant parse_model_variant(const std::string& s)
{
    for (std::size_t i = 0; i < kVariantNames.size(); ++i)
        if (s == kVariantNames[i]) return static_cast<ModelVariant>(i);
    throw DataError("unknown model variant '" + s + "'");
}

/// Perturbation / penalty structure of a variant with placeholder magnitudes.
inline void apply_variant(HyperConfig& c, ModelVariant v, double noise_sigma, double drop_p, PenaltyNorm norm,
                          double lambda)
{
    c.perturbation = PerturbationSpec::none();
    c.penalty.reset();
    switch (v) {
    case ModelVariant::plain: break;
    case ModelVariant::nbr: c.penalty = RegPenaltySpec{norm, lambda}; break;
    case ModelVariant::n: c.perturbation = PerturbationSpec::additive(noise_sigma, NoiseScope::per_time_step); break;
    case ModelVariant::ns: c.perturbation = PerturbationSpec::additive(noise_sigma, NoiseScope::per_sequence); break;
    case ModelVariant::mn:
        c.perturbation = PerturbationSpec::multiplicative(noise_sigma, NoiseScope::per_time_step);
        break;
    case ModelVariant::mns:
        c.perturbation = PerturbationSpec::multiplicative(noise_sigma, NoiseScope::per_sequence);
        break;
    case ModelVariant::dropout: c.perturbation = PerturbationSpec::dropconnect(drop_p, NoiseScope::per_time_step); break;
    case ModelVariant::dropout_seq:
        c.perturbation = PerturbationSpec::dropconnect(drop_p, NoiseScope::per_sequence);
        break;
    case ModelVariant::ff: c.perturbation = PerturbationSpec::feedforward(noise_sigma); break;
    }
}

namespace detail {

// Columns: nbr, n, ns, mn, mns, do, dos, ff.
struct PresetTable {
    const char* corpus;
    int hidden;
    std::array<double, 8> sigma_hh, sigma_ih;
    std::array<int, 8> sparsify;
    std::array<double, 8> rho;
    PenaltyNorm norm;
    double log10_lambda;
    double drop_p_do, drop_p_dos;
    std::array<double, 8> noise; // 0 where unused
    std::array<double, 8> momentum, step_rate;
    std::array<int, 8> batch;
};

inline const std::array<PresetTable, 4>& preset_tables()
{
    static const std::array<PresetTable, 4> tables{{
        {"jsb", 200,
         {1e-4, 1e-3, 1e-3, 1e-4, 1e-4, 1e-3, 1e-3, 1e-3},
         {0.1, 0.1, 0.001, 0.01, 0.001, 0.01, 0.001, 0.1},
         {15, 50, 50, 50, 25, 25, 50, 15},
         {1.1, 0.9, 1.0, 0.9, 0.9, 1.0, 1.0, 0.9},
         PenaltyNorm::L2, -3.93, 0.92, 0.56,
         {0, 0.01, 0.04, 0.06, 0.01, 0, 0, 0.09},
         {0.9, 0.99, 0.9, 0.95, 0.9, 0.95, 0.95, 0.9},
         {1e-3, 1e-4, 1e-3, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4},
         {81, 27, 27, 81, 27, 81, 81, 81}},
        {"nottingham", 200,
         {1e-4, 1e-4, 1e-3, 1e-4, 1e-4, 1e-3, 1e-3, 1e-4},
         {0.1, 0.1, 0.01, 0.001, 0.001, 0.01, 0.1, 0.001},
         {15, 25, 25, 15, 25, 15, 25, 15},
         {0.9, 1.1, 1.0, 1.0, 1.0, 0.9, 1.1, 1.1},
         PenaltyNorm::L2, -3.77, 0.36, 0.78,
         {0, 0.01, 0.02, 0.02, 0.06, 0, 0, 0.05},
         {0.95, 0.95, 0.95, 0.95, 0.95, 0.9, 0.9, 0.95},
         {1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-3, 1e-3, 1e-4},
         {81, 27, 27, 27, 27, 81, 81, 27}},
        {"pianomidi", 100,
         {1e-4, 1e-3, 1e-3, 1e-4, 1e-4, 1e-3, 1e-4, 1e-4},
         {0.001, 0.1, 0.001, 0.001, 0.1, 0.001, 0.01, 0.1},
         {15, 25, 15, 15, 15, 15, 25, 50},
         {0.9, 1.0, 1.0, 1.0, 0.9, 1.0, 0.9, 0.9},
         PenaltyNorm::L2, -3.52, 0.69, 0.51,
         {0, 0.05, 0.04, 0.04, 0.02, 0, 0, 0.08},
         {0.95, 0.95, 0.99, 0.9, 0.95, 0.9, 0.95, 0.9},
         {1e-4, 1e-4, 1e-4, 1e-3, 1e-4, 1e-4, 1e-4, 1e-4},
         {27, 27, 81, 81, 81, 27, 81, 81}},
        {"musedata", 600,
         {1e-3, 1e-4, 1e-4, 1e-3, 1e-3, 1e-4, 1e-4, 1e-4},
         {0.01, 0.01, 0.1, 0.1, 0.1, 0.001, 0.1, 0.001},
         {25, 50, 15, 50, 50, 50, 25, 15},
         {1.0, 0.9, 1.1, 1.0, 1.0, 1.1, 1.0, 0.9},
         PenaltyNorm::L1, -3.80, 0.93, 0.80,
         {0, 0.02, 0.02, 0.04, 0.09, 0, 0, 0.01},
         {0.9, 0.99, 0.95, 0.95, 0.9, 0.9, 0.9, 0.95},
         {1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4},
         {81, 27, 27, 81, 81, 27, 81, 81}},
    }};
    return tables;
}

} // namespace detail

inline std::vector<std::string> preset_corpora() { return {"jsb", "nottingham", "pianomidi", "musedata"}; }

/// Best configuration for (corpus, variant). `plain` reuses the nbr column
/// without its penalty, since no separate plain column exists.
inline HyperConfig preset(const std::string& corpus, ModelVariant variant)
{
    for (const auto& t : detail::preset_tables()) {
        if (corpus != t.corpus) continue;
        const int col = variant == ModelVariant::plain ? 0 : static_cast<int>(variant) - 1;
        HyperConfig c;
        c.hidden_units = t.hidden;
        c.init.sigma_hh = t.sigma_hh[col];
        c.init.sigma_ih = t.sigma_ih[col];
        c.init.sparsify_k = t.sparsify[col];
        c.init.rho_target = t.rho[col];
        c.optimizer.method = OptimizerMethod::rmsprop;
        c.optimizer.mu = t.momentum[col];
        c.optimizer.step_rate = t.step_rate[col];
        c.batch_size = t.batch[col];
        const double drop_p = variant == ModelVariant::dropout ? t.drop_p_do : t.drop_p_dos;
        apply_variant(c, variant, t.noise[col], drop_p, t.norm, std::pow(10.0, t.log10_lambda));
        return c;
    }
    throw DataError("unknown preset corpus '" + corpus + "'");
}

} // namespace rnnlab
