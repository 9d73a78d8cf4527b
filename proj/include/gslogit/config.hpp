#pragma once
#include "core.hpp"
#include "design.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "posterior.hpp"
#include "verify.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gslogit {

struct RunConfig {
    std::string subcommand;

    // [run]
    std::uint64_t seed = 1;
    std::string output_dir = "gslogit-out";
    Index workers = 1;

    // [data]
    std::string design_path;
    std::string groups_path;
    std::string response_path;
    std::string truth_path;

    // [model]
    Index m = 3;

    // [simulate]
    Index n = 200;
    Index p = 20;
    Index group_size = 2;
    std::string design_kind = "multinomial";
    EntryLaw law = EntryLaw::gaussian;
    Index s0 = 2;
    double signal = 1.0;

    // [prior]
    double a = 1.0;
    std::optional<double> lambda_override;

    // [sampler]; the seed is derived from the master seed
    SamplerConfig sampler;

    // [geometry]
    GeometryOptions geometry;

    // [verify]
    std::string check = "all";
    Index instances = 1000;
    Index n_mc = 100000;
    Index datasets = 20;
    Index replicates = 20;

    // [experiment]
    std::string experiment_kind = "both";
    std::vector<Index> n_grid{100, 200, 400, 800};
    Index exp_s0 = 2;
    double p_factor = 2.0;
    double exp_signal = 1.0;
    double m2 = 4.0;
    std::string exp_design = "multinomial";
    double quantile_level = 0.9;
    bool validate_sampler = true;
    Index exp_search_samples = 2000;
    Index exp_refine_steps = 100;
    Index exp_support_samples = 50;
};

namespace config {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline InputError key_error(const std::string& key, const std::string& what)
{
    return InputError("config key '" + key + "': " + what);
}

inline long long to_integer(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw key_error(key, "expected an integer, got '" + v + "'");
    }
    if (used != v.size()) throw key_error(key, "expected an integer, got '" + v + "'");
    return out;
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& v)
{
    if (v.empty() || v.front() == '-') throw key_error(key, "expected a nonnegative integer, got '" + v + "'");
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        throw key_error(key, "expected a nonnegative integer, got '" + v + "'");
    }
    if (used != v.size()) throw key_error(key, "expected a nonnegative integer, got '" + v + "'");
    return out;
}

inline double to_real(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw key_error(key, "expected a number, got '" + v + "'");
    }
    if (used != v.size() || !std::isfinite(out)) throw key_error(key, "expected a finite number, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw key_error(key, "expected true or false, got '" + v + "'");
}

inline std::vector<Index> to_index_list(const std::string& key, const std::string& v)
{
    std::vector<Index> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(static_cast<Index>(to_integer(key, trim(item))));
    if (out.empty()) throw key_error(key, "expected a comma-separated list of integers");
    return out;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
    std::string doc;
};

template <class Acc>
Field integer_field(const std::string& key, Acc acc, const std::string& doc)
{
    return Field{key,
                 [key, acc](RunConfig& c, const std::string& v) {
                     using T = std::remove_reference_t<decltype(acc(c))>;
                     acc(c) = static_cast<T>(to_integer(key, v));
                 },
                 [acc](const RunConfig& c) { return std::to_string(acc(const_cast<RunConfig&>(c))); }, doc};
}

template <class Acc>
Field real_field(const std::string& key, Acc acc, const std::string& doc)
{
    return Field{key, [key, acc](RunConfig& c, const std::string& v) { acc(c) = to_real(key, v); },
                 [acc](const RunConfig& c) { return io::format_double(acc(const_cast<RunConfig&>(c))); }, doc};
}

template <class Acc>
Field string_field(const std::string& key, Acc acc, const std::string& doc)
{
    return Field{key, [acc](RunConfig& c, const std::string& v) { acc(c) = v; },
                 [acc](const RunConfig& c) { return acc(const_cast<RunConfig&>(c)); }, doc};
}

template <class Acc>
Field bool_field(const std::string& key, Acc acc, const std::string& doc)
{
    return Field{key, [key, acc](RunConfig& c, const std::string& v) { acc(c) = to_bool(key, v); },
                 [acc](const RunConfig& c) { return std::string(acc(const_cast<RunConfig&>(c)) ? "true" : "false"); }, doc};
}

/// Every accepted key, in echo order. The README default table is generated from this list.
inline const std::vector<Field>& fields()
{
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(Field{"run.seed", [](RunConfig& c, const std::string& v) { c.seed = to_unsigned("run.seed", v); },
                          [](const RunConfig& c) { return std::to_string(c.seed); }, "master seed; every random stream derives from it"});
        f.push_back(string_field("run.output_dir", [](RunConfig& c) -> std::string& { return c.output_dir; }, "output directory"));
        f.push_back(integer_field("run.workers", [](RunConfig& c) -> Index& { return c.workers; }, "worker threads (results do not depend on it)"));
        f.push_back(string_field("data.design", [](RunConfig& c) -> std::string& { return c.design_path; }, "design CSV (obs,cat,col_1..)"));
        f.push_back(string_field("data.groups", [](RunConfig& c) -> std::string& { return c.groups_path; }, "group CSV (col,group)"));
        f.push_back(string_field("data.response", [](RunConfig& c) -> std::string& { return c.response_path; }, "response CSV (obs,z)"));
        f.push_back(string_field("data.truth", [](RunConfig& c) -> std::string& { return c.truth_path; }, "true coefficient CSV (col,beta) for diagnose"));
        f.push_back(integer_field("model.m", [](RunConfig& c) -> Index& { return c.m; }, "number of categories"));
        f.push_back(integer_field("simulate.n", [](RunConfig& c) -> Index& { return c.n; }, "observations"));
        f.push_back(integer_field("simulate.p", [](RunConfig& c) -> Index& { return c.p; }, "groups"));
        f.push_back(integer_field("simulate.group_size", [](RunConfig& c) -> Index& { return c.group_size; }, "group size (m-1 for multinomial)"));
        f.push_back(string_field("simulate.design", [](RunConfig& c) -> std::string& { return c.design_kind; }, "multinomial or subgaussian"));
        f.push_back(Field{"simulate.law", [](RunConfig& c, const std::string& v) {
                              try {
                                  c.law = parse_entry_law(v);
                              } catch (const InputError&) {
                                  throw key_error("simulate.law", "expected gaussian, rademacher or uniform, got '" + v + "'");
                              }
                          },
                          [](const RunConfig& c) { return to_string(c.law); }, "entry law: gaussian, rademacher or uniform"});
        f.push_back(integer_field("simulate.s0", [](RunConfig& c) -> Index& { return c.s0; }, "nonzero groups in the true coefficient"));
        f.push_back(real_field("simulate.signal", [](RunConfig& c) -> double& { return c.signal; }, "magnitude of each nonzero true entry"));
        f.push_back(real_field("prior.A", [](RunConfig& c) -> double& { return c.a; }, "exponent of the group-dimension prior"));
        f.push_back(Field{"prior.lambda_override",
                          [](RunConfig& c, const std::string& v) {
                              if (v.empty() || v == "none") c.lambda_override.reset();
                              else c.lambda_override = to_real("prior.lambda_override", v);
                          },
                          [](const RunConfig& c) { return c.lambda_override ? io::format_double(*c.lambda_override) : std::string("none"); },
                          "replaces the default slab scale when set"});
        f.push_back(integer_field("sampler.n_iter", [](RunConfig& c) -> Index& { return c.sampler.n_iter; }, "iterations per chain"));
        f.push_back(integer_field("sampler.burn_in", [](RunConfig& c) -> Index& { return c.sampler.burn_in; }, "burn-in iterations"));
        f.push_back(integer_field("sampler.thin", [](RunConfig& c) -> Index& { return c.sampler.thin; }, "thinning factor"));
        f.push_back(integer_field("sampler.chains", [](RunConfig& c) -> Index& { return c.sampler.chains; }, "independent chains"));
        f.push_back(real_field("sampler.rw_scale", [](RunConfig& c) -> double& { return c.sampler.rw_scale; }, "random-walk scale"));
        f.push_back(real_field("sampler.target_accept", [](RunConfig& c) -> double& { return c.sampler.target_accept; },
                               "burn-in adaptation target"));
        f.push_back(real_field("sampler.move_add", [](RunConfig& c) -> double& { return c.sampler.moves.add; }, "ADD probability"));
        f.push_back(real_field("sampler.move_remove", [](RunConfig& c) -> double& { return c.sampler.moves.remove; }, "REMOVE probability"));
        f.push_back(real_field("sampler.move_swap", [](RunConfig& c) -> double& { return c.sampler.moves.swap; }, "SWAP probability"));
        f.push_back(real_field("sampler.move_within", [](RunConfig& c) -> double& { return c.sampler.moves.within; }, "WITHIN probability"));
        f.push_back(bool_field("sampler.prior_only", [](RunConfig& c) -> bool& { return c.sampler.prior_only; }, "drop the likelihood"));
        f.push_back(real_field("geometry.cone_constant", [](RunConfig& c) -> double& { return c.geometry.cone_constant; }, "cone constant"));
        f.push_back(integer_field("geometry.search_samples", [](RunConfig& c) -> Index& { return c.geometry.search_samples; },
                                  "random cone samples"));
        f.push_back(integer_field("geometry.refine_steps", [](RunConfig& c) -> Index& { return c.geometry.refine_steps; },
                                  "projected-gradient steps per start"));
        f.push_back(real_field("geometry.refine_step", [](RunConfig& c) -> double& { return c.geometry.refine_step; }, "initial step size"));
        f.push_back(integer_field("geometry.refine_starts", [](RunConfig& c) -> Index& { return c.geometry.refine_starts; },
                                  "refined starts per objective"));
        f.push_back(integer_field("geometry.enumeration_cap", [](RunConfig& c) -> Index& { return c.geometry.enumeration_cap; },
                                  "largest support count enumerated exactly"));
        f.push_back(integer_field("geometry.support_samples", [](RunConfig& c) -> Index& { return c.geometry.support_samples; },
                                  "random supports above the cap"));
        f.push_back(integer_field("geometry.swap_trials", [](RunConfig& c) -> Index& { return c.geometry.swap_trials; },
                                  "greedy swap trials above the cap"));
        f.push_back(string_field("verify.check", [](RunConfig& c) -> std::string& { return c.check; }, "check name or all"));
        f.push_back(integer_field("verify.instances", [](RunConfig& c) -> Index& { return c.instances; },
                                  "random instances for the exact inequalities"));
        f.push_back(integer_field("verify.n_mc", [](RunConfig& c) -> Index& { return c.n_mc; }, "Monte Carlo replicates"));
        f.push_back(integer_field("verify.datasets", [](RunConfig& c) -> Index& { return c.datasets; }, "datasets for the evidence check"));
        f.push_back(integer_field("verify.replicates", [](RunConfig& c) -> Index& { return c.replicates; }, "designs per n in the scaling check"));
        f.push_back(string_field("experiment.kind", [](RunConfig& c) -> std::string& { return c.experiment_kind; },
                                 "dimension, contraction or both"));
        f.push_back(Field{"experiment.n_grid",
                          [](RunConfig& c, const std::string& v) { c.n_grid = to_index_list("experiment.n_grid", v); },
                          [](const RunConfig& c) {
                              std::string s;
                              for (std::size_t k = 0; k < c.n_grid.size(); ++k) s += (k ? "," : "") + std::to_string(c.n_grid[k]);
                              return s;
                          },
                          "sample sizes"});
        f.push_back(integer_field("experiment.s0", [](RunConfig& c) -> Index& { return c.exp_s0; }, "nonzero groups"));
        f.push_back(real_field("experiment.p_factor", [](RunConfig& c) -> double& { return c.p_factor; }, "p = p_factor n / gbar"));
        f.push_back(real_field("experiment.signal", [](RunConfig& c) -> double& { return c.exp_signal; }, "true entry magnitude"));
        f.push_back(real_field("experiment.M2", [](RunConfig& c) -> double& { return c.m2; }, "dimension threshold constant, > 3"));
        f.push_back(string_field("experiment.design", [](RunConfig& c) -> std::string& { return c.exp_design; }, "multinomial or subgaussian"));
        f.push_back(real_field("experiment.quantile", [](RunConfig& c) -> double& { return c.quantile_level; }, "posterior quantile level"));
        f.push_back(bool_field("experiment.validate_sampler", [](RunConfig& c) -> bool& { return c.validate_sampler; },
                               "validate the sampler against the exact oracle"));
        f.push_back(integer_field("experiment.search_samples", [](RunConfig& c) -> Index& { return c.exp_search_samples; },
                                  "geometry cone samples per n"));
        f.push_back(integer_field("experiment.refine_steps", [](RunConfig& c) -> Index& { return c.exp_refine_steps; },
                                  "geometry refinement steps per n"));
        f.push_back(integer_field("experiment.support_samples", [](RunConfig& c) -> Index& { return c.exp_support_samples; },
                                  "geometry random supports per n"));
        return f;
    }();
    return table;
}

inline const Field& field(const std::string& key)
{
    for (const Field& f : fields())
        if (f.key == key) return f;
    throw InputError("unknown config key '" + key + "'");
}

inline void set(RunConfig& c, const std::string& key, const std::string& value) { field(key).set(c, trim(value)); }

/// Applies `section.key=value`.
inline void apply_assignment(RunConfig& c, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw InputError("expected key=value, got '" + assignment + "'");
    set(c, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

inline void apply_ini(RunConfig& c, const std::filesystem::path& path)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        if (!std::filesystem::exists(path)) throw IoError("cannot open config '" + path.string() + "'");
        throw InputError("config '" + path.string() + "': " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) throw InputError("config key '" + section + "' must sit inside a [section]");
        for (const auto& [key, value] : body) set(c, section + "." + key, value.get_value<std::string>());
    }
}

inline void check(bool ok, const std::string& key, const std::string& what)
{
    if (!ok) throw key_error(key, what);
}

/// Constraint checks, each naming the offending key.
inline void validate(const RunConfig& c)
{
    check(c.workers >= 1, "run.workers", "must be at least 1");
    check(c.m >= 2, "model.m", "must be at least 2");
    check(c.n >= 1, "simulate.n", "must be positive");
    check(c.p >= 1, "simulate.p", "must be positive");
    check(c.group_size >= 1, "simulate.group_size", "must be positive");
    check(c.design_kind == "multinomial" || c.design_kind == "subgaussian", "simulate.design", "must be multinomial or subgaussian");
    check(c.design_kind != "multinomial" || c.group_size == c.m - 1, "simulate.group_size", "must equal m - 1 for the multinomial design");
    check(c.s0 >= 0 && c.s0 <= c.p, "simulate.s0", "must lie in 0..p");
    check(c.n >= 2 || c.p >= 2, "simulate.n", "n = p = 1 leaves the slab scale undefined");
    check(c.a > 0.0, "prior.A", "must be positive");
    check(!c.lambda_override || *c.lambda_override > 0.0, "prior.lambda_override", "must be positive");
    check(c.sampler.n_iter > c.sampler.burn_in, "sampler.n_iter", "must exceed sampler.burn_in");
    check(c.sampler.burn_in >= 0, "sampler.burn_in", "must be nonnegative");
    check(c.sampler.thin >= 1, "sampler.thin", "must be at least 1");
    check(c.sampler.chains >= 1, "sampler.chains", "must be at least 1");
    check(c.sampler.rw_scale > 0.0, "sampler.rw_scale", "must be positive");
    check(c.sampler.target_accept > 0.0 && c.sampler.target_accept < 1.0, "sampler.target_accept", "must lie in (0, 1)");
    try {
        c.sampler.moves.validate();
    } catch (const InputError& e) {
        throw key_error("sampler.move_add", e.what());
    }
    check(c.geometry.cone_constant > 0.0, "geometry.cone_constant", "must be positive");
    check(c.geometry.search_samples >= 1, "geometry.search_samples", "must be positive");
    check(c.geometry.refine_steps >= 0, "geometry.refine_steps", "must be nonnegative");
    check(c.geometry.refine_step > 0.0, "geometry.refine_step", "must be positive");
    check(c.geometry.refine_starts >= 1, "geometry.refine_starts", "must be positive");
    check(c.geometry.enumeration_cap >= 1, "geometry.enumeration_cap", "must be positive");
    check(c.geometry.support_samples >= 1, "geometry.support_samples", "must be positive");
    check(c.geometry.swap_trials >= 0, "geometry.swap_trials", "must be nonnegative");
    static const std::vector<std::string> checks{"all", "selfconcordance", "likelihood_sandwich", "tail_bound", "mgf_bound",
                                                 "xstar_scaling", "evidence_lower_bound"};
    check(std::find(checks.begin(), checks.end(), c.check) != checks.end(), "verify.check",
          "must be all, selfconcordance, likelihood_sandwich, tail_bound, mgf_bound, xstar_scaling or evidence_lower_bound");
    check(c.instances >= 1, "verify.instances", "must be positive");
    check(c.n_mc >= 10000, "verify.n_mc", "must be at least 10000");
    check(c.datasets >= 1, "verify.datasets", "must be positive");
    check(c.replicates >= 2, "verify.replicates", "must be at least 2");
    check(c.experiment_kind == "dimension" || c.experiment_kind == "contraction" || c.experiment_kind == "both", "experiment.kind",
          "must be dimension, contraction or both");
    check(std::is_sorted(c.n_grid.begin(), c.n_grid.end()) && c.n_grid.front() >= 2 &&
              std::adjacent_find(c.n_grid.begin(), c.n_grid.end()) == c.n_grid.end(),
          "experiment.n_grid", "must be strictly increasing with entries >= 2");
    check(c.exp_s0 >= 1, "experiment.s0", "must be positive");
    check(c.p_factor > 0.0, "experiment.p_factor", "must be positive");
    check(c.m2 > 3.0, "experiment.M2", "must exceed 3");
    check(c.exp_design == "multinomial" || c.exp_design == "subgaussian", "experiment.design", "must be multinomial or subgaussian");
    check(c.quantile_level > 0.0 && c.quantile_level < 1.0, "experiment.quantile", "must lie in (0, 1)");
    check(c.exp_search_samples >= 1, "experiment.search_samples", "must be positive");
    check(c.exp_refine_steps >= 0, "experiment.refine_steps", "must be nonnegative");
    check(c.exp_support_samples >= 1, "experiment.support_samples", "must be positive");
}

/// INI text holding every effective value; reading it back reproduces the configuration.
inline std::string echo(const RunConfig& c)
{
    std::string out;
    std::string section;
    for (const Field& f : fields()) {
        const auto dot = f.key.find('.');
        const std::string sec = f.key.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out += '\n';
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += f.key.substr(dot + 1) + " = " + f.get(c) + "\n";
    }
    return out;
}

/// Markdown table of every key with its default value.
inline std::string default_table()
{
    const RunConfig c;
    std::string out = "| key | default | meaning |\n|---|---|---|\n";
    for (const Field& f : fields()) {
        std::string v = f.get(c);
        out += "| `" + f.key + "` | `" + (v.empty() ? std::string("(unset)") : v) + "` | " + f.doc + " |\n";
    }
    return out;
}

/// Options derived from a validated configuration.
inline SamplerConfig sampler_options(const RunConfig& c)
{
    SamplerConfig s = c.sampler;
    s.seed = derive_seed(c.seed, stream::sampler);
    s.workers = static_cast<std::size_t>(c.workers);
    return s;
}

inline GeometryOptions geometry_options(const RunConfig& c)
{
    GeometryOptions g = c.geometry;
    g.seed = derive_seed(c.seed, stream::geometry);
    g.workers = static_cast<std::size_t>(c.workers);
    return g;
}

inline verify::ExperimentConfig experiment_options(const RunConfig& c)
{
    verify::ExperimentConfig e;
    e.n_grid = c.n_grid;
    e.m = c.m;
    e.s0 = c.exp_s0;
    e.group_size = c.exp_design == "multinomial" ? c.m - 1 : c.group_size;
    e.p_factor = c.p_factor;
    e.signal = c.exp_signal;
    e.a = c.a;
    e.lambda_override = c.lambda_override;
    e.m2 = c.m2;
    e.design = c.exp_design;
    e.law = c.law;
    e.sampler = sampler_options(c);
    e.geometry = geometry_options(c);
    e.geometry.search_samples = c.exp_search_samples;
    e.geometry.refine_steps = c.exp_refine_steps;
    e.geometry.support_samples = c.exp_support_samples;
    e.validate_sampler = c.validate_sampler;
    e.seed = derive_seed(c.seed, 0x657870ULL);
    e.quantile_level = c.quantile_level;
    return e;
}

} // namespace config
} // namespace gslogit
