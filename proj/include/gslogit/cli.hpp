#pragma once
#include "config.hpp"
#include "geometry.hpp"
#include "io.hpp"
#include "posterior.hpp"
#include "prior.hpp"
#include "suite.hpp"
#include "verify.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

namespace gslogit::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum Exit : int { ok = 0, check_failed = 1, usage = 2, io_failure = 3 };

/// FNV-1a 64 of a file's bytes, for the output manifest.
inline std::string file_digest(const fs::path& path)
{
    const std::string bytes = io::read_text(path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Tracks files written under the output directory.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    fs::path path(const std::string& name)
    {
        names_.push_back(name);
        return dir_ / name;
    }

    void write_manifest(const std::string& subcommand) const
    {
        json files = json::array();
        for (const auto& name : names_) {
            const fs::path p = dir_ / name;
            files.push_back({{"path", name}, {"bytes", fs::file_size(p)}, {"fnv1a64", file_digest(p)}});
        }
        io::write_json(dir_ / "manifest.json", json{{"subcommand", subcommand}, {"files", files}});
    }

private:
    fs::path dir_;
    std::vector<std::string> names_;
};

inline void log(const std::string& msg) { std::cerr << "[gslogit] " << msg << '\n'; }

inline GroupedDesign load_design(const RunConfig& c)
{
    if (c.design_path.empty()) throw InputError("config key 'data.design': a design CSV is required");
    if (c.groups_path.empty()) throw InputError("config key 'data.groups': a group CSV is required");
    return io::read_design_csv(c.design_path, c.groups_path, c.m);
}

inline int simulate(const RunConfig& c, Outputs& out)
{
    const std::uint64_t dseed = derive_seed(c.seed, stream::design);
    std::optional<GroupedDesign> design;
    if (c.design_kind == "multinomial") {
        Rng rng = make_rng(dseed);
        design.emplace(build_multinomial_design(random_matrix(c.n, c.p, c.law, rng), c.m));
    } else {
        design.emplace(random_subgaussian_design(c.n, c.m, GroupPartition::uniform(c.p, c.group_size), c.law, dseed));
    }
    Rng trng = make_rng(derive_seed(c.seed, stream::truth));
    std::vector<Index> groups(static_cast<std::size_t>(c.p));
    std::iota(groups.begin(), groups.end(), Index{0});
    std::shuffle(groups.begin(), groups.end(), trng);
    std::bernoulli_distribution coin(0.5);
    Vec beta0 = Vec::Zero(design->d());
    for (Index k = 0; k < c.s0; ++k)
        for (Index col : design->partition().members(groups[static_cast<std::size_t>(k)])) beta0(col) = coin(trng) ? c.signal : -c.signal;
    const TrueModel truth = make_true_model(*design, beta0);
    const ResponseVector y = simulate_responses(truth, derive_seed(c.seed, stream::response));
    io::write_design_csv(out.path("design.csv"), *design);
    io::write_groups_csv(out.path("groups.csv"), design->partition());
    io::write_response_csv(out.path("response.csv"), y);
    io::write_coef_csv(out.path("truth.csv"), beta0);
    log("simulated n = " + std::to_string(c.n) + ", p = " + std::to_string(design->p()) + ", d = " + std::to_string(design->d()));
    return ok;
}

inline std::vector<double> to_std(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline int fit(const RunConfig& c, Outputs& out)
{
    const GroupedDesign design = load_design(c);
    if (c.response_path.empty()) throw InputError("config key 'data.response': fit needs a response CSV");
    const ResponseVector y = io::read_response_csv(c.response_path, c.m);
    require(y.n() == design.n(), "response has " + std::to_string(y.n()) + " observations but the design has " + std::to_string(design.n()));
    const PriorSpec prior = PriorSpec::from_design(design, c.a, c.lambda_override);
    const SamplerConfig sc = config::sampler_options(c);
    const PosteriorSample sample = mcmc_run(y, design, prior, sc);
    io::write_chain_csv(out.path("chain.csv"), sample);

    const Index p = design.p();
    Vec inclusion = Vec::Zero(p), s_law = Vec::Zero(p + 1), mean = Vec::Zero(design.d());
    const double w = 1.0 / static_cast<double>(sample.states.size());
    for (const auto& st : sample.states) {
        const Vec beta = SparseCoef{st.support, st.values}.densify(design.partition());
        mean += w * beta;
        for (Index j : st.support) inclusion(j) += w;
        s_law(static_cast<Index>(st.support.size())) += w;
    }
    json accept = json::object();
    for (std::size_t k = 0; k < 4; ++k) {
        Index prop = 0, acc = 0;
        for (const auto& mc : sample.counts) {
            prop += mc.proposed[k];
            acc += mc.accepted[k];
        }
        accept[move_names[k]] = {{"proposed", prop}, {"accepted", acc}};
    }
    json summary{{"n", design.n()},
                 {"m", design.m()},
                 {"p", p},
                 {"d", design.d()},
                 {"lambda", prior.lambda()},
                 {"A", prior.a()},
                 {"draws", sample.states.size()},
                 {"inclusion", to_std(inclusion)},
                 {"s_law", to_std(s_law)},
                 {"posterior_mean", to_std(mean)},
                 {"moves", accept},
                 {"tau", sample.tau}};
    if (!c.truth_path.empty()) {
        const Vec beta0 = io::read_coef_csv(c.truth_path, design.d());
        const PosteriorSummary ps = summarize(sample, make_true_model(design, beta0), design);
        summary["distance_quantiles"] = {{"l2", {{"0.5", ps.l2_quantile(0.5)}, {"0.9", ps.l2_quantile(0.9)}}},
                                         {"l21", {{"0.5", ps.l21_quantile(0.5)}, {"0.9", ps.l21_quantile(0.9)}}},
                                         {"predictor", {{"0.5", ps.predictor_quantile(0.5)}, {"0.9", ps.predictor_quantile(0.9)}}}};
    }
    io::write_json(out.path("summary.json"), summary);
    log("fit: " + std::to_string(sample.states.size()) + " draws");
    return ok;
}

inline int diagnose(const RunConfig& c, Outputs& out)
{
    const GroupedDesign design = load_design(c);
    if (c.truth_path.empty()) throw InputError("config key 'data.truth': diagnose needs the true coefficient CSV");
    const Vec beta0 = io::read_coef_csv(c.truth_path, design.d());
    const TrueModel truth = make_true_model(design, beta0);
    const PriorSpec prior = PriorSpec::from_design(design, c.a, c.lambda_override);
    const CompatReport rep = gslogit::diagnose(design, truth, prior, config::geometry_options(c));
    json doc = verify::to_json(rep);
    doc["lambda"] = prior.lambda();
    io::write_json(out.path("compat.json"), doc);
    return ok;
}

inline int verify_checks(const RunConfig& c, Outputs& out)
{
    suite::SuiteOptions o;
    o.seed = derive_seed(c.seed, stream::verify);
    o.instances = c.instances;
    o.n_mc = c.n_mc;
    o.datasets = c.datasets;
    o.replicates = c.replicates;
    o.workers = static_cast<std::size_t>(c.workers);
    std::vector<std::string> names = c.check == "all" ? suite::check_names() : std::vector<std::string>{c.check};
    json summary = json::array();
    bool all = true;
    for (const auto& name : names) {
        log("check " + name);
        const verify::CheckReport r = suite::run_check(name, o);
        io::write_json(out.path("check_" + name + ".json"), verify::to_json(r));
        summary.push_back({{"check", name}, {"pass", r.pass}, {"violations", r.violations}});
        std::cout << (r.pass ? "PASS " : "FAIL ") << name << " (instances " << r.instances << ", violations " << r.violations << ")\n";
        all = all && r.pass;
    }
    io::write_json(out.path("verify_summary.json"), json{{"checks", summary}, {"pass", all}});
    return all ? ok : check_failed;
}

inline int experiment(const RunConfig& c, Outputs& out)
{
    const verify::ExperimentConfig ec = config::experiment_options(c);
    const verify::ExperimentRun run = verify::run_experiment_rows(ec);
    std::vector<std::string> kinds = c.experiment_kind == "both" ? std::vector<std::string>{"dimension", "contraction"}
                                                                 : std::vector<std::string>{c.experiment_kind};
    bool all = true;
    for (const auto& kind : kinds) {
        const verify::ExperimentReport rep = verify::assess_experiment(kind, run);
        io::write_json(out.path("experiment_" + kind + ".json"), verify::to_json(rep));
        for (const auto& w : rep.warnings) log("warning: " + w);
        std::cout << (rep.pass ? "PASS " : "FAIL ") << kind << " experiment\n";
        all = all && rep.pass;
    }
    return all ? ok : check_failed;
}

inline int dispatch(const RunConfig& c)
{
    config::validate(c);
    const fs::path dir = c.output_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    Outputs out(dir);
    io::write_text(out.path("config.ini"), config::echo(c));
    int code = ok;
    if (c.subcommand == "simulate") code = simulate(c, out);
    else if (c.subcommand == "fit") code = fit(c, out);
    else if (c.subcommand == "diagnose") code = diagnose(c, out);
    else if (c.subcommand == "verify") code = verify_checks(c, out);
    else if (c.subcommand == "experiment") code = experiment(c, out);
    else throw InputError("unknown subcommand '" + c.subcommand + "'");
    out.write_manifest(c.subcommand);
    return code;
}

/// Parses flags (file values first, then flags) and runs the subcommand. Exit codes: 0 success,
/// 1 a check failed, 2 usage or input error, 3 I/O error.
inline int run(std::vector<std::string> args)
{
    CLI::App app{"Bayesian group-sparse multi-category logit regression"};
    app.require_subcommand(0, 1);
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out_dir, design, groups, response, truth, check, kind;
    bool print_defaults = false;
    app.add_option("--config,-c", config_path, "INI configuration file");
    app.add_option("--set", sets, "override a key: section.key=value (repeatable)");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out,-o", out_dir, "output directory");
    app.add_option("--design", design, "design CSV");
    app.add_option("--groups", groups, "group CSV");
    app.add_option("--response", response, "response CSV");
    app.add_option("--truth", truth, "true coefficient CSV");
    app.add_flag("--print-defaults", print_defaults, "print the default configuration table and exit");
    std::vector<CLI::App*> subs;
    subs.push_back(app.add_subcommand("simulate", "generate a design, true coefficients and responses"));
    subs.push_back(app.add_subcommand("fit", "sample the posterior"));
    subs.push_back(app.add_subcommand("diagnose", "compatibility report at the true coefficient"));
    auto* ver = app.add_subcommand("verify", "numerical checks of the finite-sample inequalities");
    ver->add_option("--check", check, "check name or all");
    subs.push_back(ver);
    auto* exp = app.add_subcommand("experiment", "group-dimension and contraction trend experiments");
    exp->add_option("--kind", kind, "dimension, contraction or both");
    subs.push_back(exp);
    for (auto* s : subs) s->fallthrough();

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : usage;
    }
    if (print_defaults) {
        std::cout << config::default_table();
        return ok;
    }
    RunConfig c;
    for (auto* s : subs)
        if (s->parsed()) c.subcommand = s->get_name();
    if (c.subcommand.empty()) {
        std::cerr << app.help();
        return usage;
    }
    try {
        if (const char* env = std::getenv("GSLOGIT_OUTPUT_DIR"); env && *env) c.output_dir = env;
        if (!config_path.empty()) config::apply_ini(c, config_path);
        for (const auto& s : sets) config::apply_assignment(c, s);
        if (seed) c.seed = *seed;
        if (!out_dir.empty()) c.output_dir = out_dir;
        if (!design.empty()) c.design_path = design;
        if (!groups.empty()) c.groups_path = groups;
        if (!response.empty()) c.response_path = response;
        if (!truth.empty()) c.truth_path = truth;
        if (!check.empty()) c.check = check;
        if (!kind.empty()) c.experiment_kind = kind;
        return dispatch(c);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_failure;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    }
}

inline int run(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(std::move(args));
}

} // namespace gslogit::cli
