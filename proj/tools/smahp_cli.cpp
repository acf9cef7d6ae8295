// smahp command-line front end: analyze, simulate, benchmark.
// Exit codes: 0 ok, 1 usage, 2 data, 3 numerical failure.

#include <smahp/smahp.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace smahp;

namespace {

int exit_code(ErrorCategory c)
{
    switch (c) {
    case ErrorCategory::Usage: return 1;
    case ErrorCategory::Data: return 2;
    case ErrorCategory::Numerical: return 3;
    }
    return 2;
}

struct CommonFlags {
    std::string config;
    std::string method = "smahp";
    std::string mediation_penalty;
    std::string aft_family;
    double q = 0.05;
    double sis_multiplier = 1.0;
    int prescreen_genes = 0;
    int prescreen_proteins = 0;
    std::uint64_t seed = 1;
};

// config file first, then any flag given on the command line
PipelineConfig build_config(const CommonFlags& f, const CLI::App& cmd)
{
    PipelineConfig cfg;
    if (!f.config.empty()) apply_config_file(f.config, cfg);
    auto given = [&](const char* name) { return cmd.count(name) > 0; };
    if (given("--q")) cfg.fdr_q = f.q;
    if (given("--sis-multiplier")) cfg.sis_multiplier = f.sis_multiplier;
    if (given("--seed")) cfg.seed = f.seed;
    if (given("--mediation-penalty")) {
        const auto p = parse_penalty_family(f.mediation_penalty);
        if (!p) throw Error(ErrorCode::InvalidConfig, "unknown mediation penalty '" + f.mediation_penalty + "'");
        cfg.step1_mediation_penalty = *p;
    }
    if (given("--aft-family")) {
        const auto a = parse_aft_family(f.aft_family);
        if (!a) throw Error(ErrorCode::InvalidConfig, "unknown aft family '" + f.aft_family + "'");
        cfg.aft.family = *a;
    }
    if (given("--prescreen-genes") != given("--prescreen-proteins"))
        throw Error(ErrorCode::InvalidConfig, "--prescreen-genes and --prescreen-proteins go together");
    if (given("--prescreen-genes")) cfg.prescreen = std::make_pair(f.prescreen_genes, f.prescreen_proteins);
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool with_method)
{
    cmd->add_option("--config", f.config, "key = value configuration file")->check(CLI::ExistingFile);
    if (with_method) cmd->add_option("--method", f.method, "smahp | sis-sis | naive");
    cmd->add_option("--mediation-penalty", f.mediation_penalty, "mcp | elastic_net | lasso");
    cmd->add_option("--aft-family", f.aft_family, "lognormal | weibull");
    cmd->add_option("--q", f.q, "BH FDR level");
    cmd->add_option("--sis-multiplier", f.sis_multiplier, "pair screening size multiplier of n/ln n");
    cmd->add_option("--prescreen-genes", f.prescreen_genes, "univariate prescreen: exposures kept");
    cmd->add_option("--prescreen-proteins", f.prescreen_proteins, "univariate prescreen: mediators kept");
    cmd->add_option("--seed", f.seed, "random seed");
}

SimScenario scenario_from(const std::string& id, int n, int p, int k, double censoring)
{
    SimScenario s = id.empty() ? SimScenario{} : SimScenario::preset(id);
    if (n > 0) s.n = n;
    if (p > 0) s.p = p;
    if (k > 0) s.k = k;
    s.censor_rate = censoring;
    if (id.empty()) s.name = "n" + std::to_string(s.n) + "_p" + std::to_string(s.p) + "_k" + std::to_string(s.k);
    s.validate();
    return s;
}

std::vector<std::string> split_list(const std::vector<std::string>& in)
{
    std::vector<std::string> out;
    for (const auto& s : in) {
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(item);
    }
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"SMAHP: survival mediation analysis with high-dimensional exposures and mediators"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    // analyze
    CommonFlags af;
    InputBundle bundle;
    std::string out;
    auto* analyze = app.add_subcommand("analyze", "run a mediation analysis on CSV inputs");
    analyze->add_option("--survival", bundle.survival, "CSV with id,time,status")->required()->check(CLI::ExistingFile);
    analyze->add_option("--exposures", bundle.exposures, "CSV with id + exposure columns")
        ->required()
        ->check(CLI::ExistingFile);
    analyze->add_option("--mediators", bundle.mediators, "CSV with id + mediator columns")
        ->required()
        ->check(CLI::ExistingFile);
    analyze->add_option("--covariates", bundle.covariates, "CSV with id + covariate columns")
        ->check(CLI::ExistingFile);
    analyze->add_option("--out", out, "results TSV (metadata goes to .meta, timings to .timing)")->required();
    add_common(analyze, af, true);

    // simulate
    std::string sim_scenario, sim_out;
    int sim_n = 0, sim_p = 0, sim_k = 0, sim_reps = 1;
    double sim_cens = 0.25;
    std::uint64_t sim_seed = 1;
    auto* simulate = app.add_subcommand("simulate", "write simulated datasets with their ground truth");
    simulate->add_option("--scenario", sim_scenario, "I | II | III | IV")
        ->check(CLI::IsMember({"I", "II", "III", "IV"}));
    simulate->add_option("--n", sim_n, "sample size");
    simulate->add_option("--p", sim_p, "exposures");
    simulate->add_option("--k", sim_k, "mediators");
    simulate->add_option("--censoring", sim_cens, "target censoring fraction");
    simulate->add_option("--reps", sim_reps, "replicates")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim_seed, "random seed");
    simulate->add_option("--out", sim_out, "output directory")->required();

    // benchmark
    CommonFlags bf;
    std::vector<std::string> bench_scen{"I"}, bench_methods{"smahp", "sis-sis", "naive"};
    std::string bench_out;
    int bench_n = 200, bench_reps = 10;
    double bench_cens = 0.25;
    unsigned bench_workers = 0;
    auto* bench = app.add_subcommand("benchmark", "power / FDR table over simulated replicates");
    bench->add_option("--scenarios", bench_scen, "comma-separated scenario ids")->delimiter(',');
    bench->add_option("--methods", bench_methods, "comma-separated methods")->delimiter(',');
    bench->add_option("--n", bench_n, "sample size");
    bench->add_option("--censoring", bench_cens, "target censoring fraction");
    bench->add_option("--reps", bench_reps, "replicates")->check(CLI::PositiveNumber);
    bench->add_option("--workers", bench_workers, "worker threads (0 = all cores)");
    bench->add_option("--out", bench_out, "benchmark TSV (timings go to .timing)")->required();
    add_common(bench, bf, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "smahp: usage error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return 1;
    }

    try {
        if (*analyze) {
            const auto cfg = build_config(af, *analyze);
            const auto method = parse_method(af.method);
            if (!method) throw Error(ErrorCode::InvalidConfig, "unknown method '" + af.method + "'");
            std::vector<std::string> notes;
            const auto d = parse_inputs(bundle, &notes);
            auto rep = run_method(*method, d, cfg);
            rep.warnings.insert(rep.warnings.begin(), notes.begin(), notes.end());
            if (rep.records.empty() &&
                std::find(rep.warnings.begin(), rep.warnings.end(), "no mediators selected") == rep.warnings.end())
                rep.warnings.push_back("no mediators selected");
            write_report(rep, out);
            for (const auto& w : rep.warnings) std::cerr << "smahp: note: " << w << '\n';
            std::cerr << "smahp: " << rep.records.size() << " pairs tested, " << rep.significant_pairs().size()
                      << " significant at q = " << cfg.fdr_q << "; wrote " << out << '\n';
        } else if (*simulate) {
            const auto base = scenario_from(sim_scenario, sim_n, sim_p, sim_k, sim_cens);
            fs::create_directories(sim_out);
            std::ostringstream manifest;
            manifest << "rep\tdirectory\tseed\tn\tp\tk\tcensoring_target\tcensored\texp_rate\n";
            for (int r = 1; r <= sim_reps; ++r) {
                SimScenario s = base;
                s.seed = detail::derive_seed({sim_seed, static_cast<std::uint64_t>(r)});
                const auto sim = generate(s);
                char name[32];
                std::snprintf(name, sizeof name, "rep_%03d", r);
                const fs::path dir = fs::path(sim_out) / name;
                write_dataset_csv(sim.data, dir);
                write_truth(sim.truth, sim.data, dir / "truth.tsv");
                const double cens = 1.0 - static_cast<double>(sim.data.n_events()) / static_cast<double>(s.n);
                manifest << r << '\t' << name << '\t' << s.seed << '\t' << s.n << '\t' << s.p << '\t' << s.k << '\t'
                         << detail::fmt6(s.censor_rate) << '\t' << detail::fmt6(cens) << '\t'
                         << detail::fmt6(sim.censoring_rate_param) << '\n';
            }
            detail::write_atomic(fs::path(sim_out) / "manifest.tsv", manifest.str());
            std::cerr << "smahp: wrote " << sim_reps << " replicate(s) to " << sim_out << '\n';
        } else if (*bench) {
            const auto cfg = build_config(bf, *bench);
            std::vector<SimScenario> scenarios;
            for (const auto& id : split_list(bench_scen)) scenarios.push_back(scenario_from(id, bench_n, 0, 0, bench_cens));
            std::vector<Method> methods;
            for (const auto& m : split_list(bench_methods)) {
                const auto pm = parse_method(m);
                if (!pm) throw Error(ErrorCode::InvalidConfig, "unknown method '" + m + "'");
                methods.push_back(*pm);
            }
            BenchmarkOptions opt;
            opt.workers = bench_workers;
            opt.progress = [](std::size_t done, std::size_t total) {
                std::cerr << "\rsmahp: replicate " << done << "/" << total << std::flush;
            };
            const auto rows = run_benchmark(scenarios, methods, bench_reps, bf.seed, cfg, opt);
            std::cerr << '\n';
            write_benchmark(rows, bench_out);
            for (const auto& r : rows)
                std::cerr << "  " << r.scenario << " n=" << r.n << " " << r.method << ": power "
                          << detail::fmt6(r.power) << " fdr " << detail::fmt6(r.fdr) << " ("
                          << detail::fmt6(r.avg_minutes) << " min/rep, " << r.reps_failed << " failed)\n";
        }
    } catch (const Error& e) {
        std::cerr << "smahp: error: " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "smahp: error: IoError: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "smahp: error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
