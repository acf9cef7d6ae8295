#pragma once
// CSV ingestion, TSV report writing and the key = value config grammar.

#include <smahp/core.hpp>
#include <smahp/pipeline.hpp>
#include <smahp/simulation.hpp>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace smahp {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct InputBundle {
    std::string survival;     // id, time > 0, status in {0, 1}
    std::string exposures;    // id + p named columns
    std::string mediators;    // id + k named columns
    std::string covariates;   // optional: id + q named columns
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// comma split with double-quoted fields ("" is an escaped quote)
inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct CsvTable {
    std::string path;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    CsvTable t;
    t.path = path;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (first) {
            t.header = std::move(cells);
            first = false;
            continue;
        }
        if (cells.size() != t.header.size())
            throw Error(ErrorCode::ShapeMismatch, path + ": row " + std::to_string(t.rows.size() + 1) + " has " +
                                                      std::to_string(cells.size()) + " fields, header has " +
                                                      std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw Error(ErrorCode::MissingColumn, path + ": empty file");
    return t;
}

inline double parse_number(const std::string& cell, const std::string& where)
{
    if (cell.empty()) throw Error(ErrorCode::NonFinite, where + ": missing value");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size() || errno == ERANGE || !std::isfinite(v))
        throw Error(ErrorCode::NonFinite, where + ": '" + cell + "' is not a finite number");
    return v;
}

inline std::size_t column_index(const CsvTable& t, const std::string& name)
{
    for (std::size_t c = 0; c < t.header.size(); ++c)
        if (t.header[c] == name) return c;
    throw Error(ErrorCode::MissingColumn, t.path + ": no '" + name + "' column");
}

inline std::unordered_map<std::string, std::size_t> index_ids(const CsvTable& t)
{
    std::unordered_map<std::string, std::size_t> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r)
        if (!out.emplace(t.rows[r][0], r).second)
            throw Error(ErrorCode::DuplicateId, t.path + ": id '" + t.rows[r][0] + "' appears twice");
    return out;
}

inline void check_header_unique(const CsvTable& t)
{
    std::unordered_map<std::string, int> seen;
    for (const auto& h : t.header)
        if (++seen[h] > 1) throw Error(ErrorCode::DuplicateId, t.path + ": column '" + h + "' is repeated");
}

inline Matrix gather(const CsvTable& t, const std::unordered_map<std::string, std::size_t>& idx,
                     const std::vector<std::string>& ids)
{
    const auto cols = static_cast<Eigen::Index>(t.header.size()) - 1;
    Matrix m(static_cast<Eigen::Index>(ids.size()), cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& row = t.rows[idx.at(ids[i])];
        for (Eigen::Index c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(i), c) =
                parse_number(row[static_cast<std::size_t>(c) + 1], t.path + " id '" + ids[i] + "' column '" +
                                                                         t.header[static_cast<std::size_t>(c) + 1] + "'");
    }
    return m;
}

} // namespace detail

/**
 * Reads the CSV bundle, inner-joins on the first (id) column in survival-file order and
 * logs times. Rows dropped by the join are reported through `warnings` with counts.
 */
inline Dataset parse_inputs(const InputBundle& b, std::vector<std::string>* warnings = nullptr)
{
    const auto surv = detail::read_csv(b.survival);
    const auto xt = detail::read_csv(b.exposures);
    const auto mt = detail::read_csv(b.mediators);
    std::optional<detail::CsvTable> zt;
    if (!b.covariates.empty()) zt = detail::read_csv(b.covariates);

    const std::size_t tcol = detail::column_index(surv, "time");
    const std::size_t scol = detail::column_index(surv, "status");
    for (const auto* t : {&surv, &xt, &mt}) detail::check_header_unique(*t);
    if (zt) detail::check_header_unique(*zt);
    const auto sidx = detail::index_ids(surv);
    const auto xidx = detail::index_ids(xt);
    const auto midx = detail::index_ids(mt);
    std::unordered_map<std::string, std::size_t> zidx;
    if (zt) zidx = detail::index_ids(*zt);

    std::vector<std::string> ids;
    std::map<std::string, int> missing_from;
    for (const auto& row : surv.rows) {
        const auto& id = row[0];
        bool keep = true;
        if (!xidx.contains(id)) ++missing_from["exposures"], keep = false;
        if (!midx.contains(id)) ++missing_from["mediators"], keep = false;
        if (zt && !zidx.contains(id)) ++missing_from["covariates"], keep = false;
        if (keep) ids.push_back(id);
    }
    std::map<std::string, int> missing_survival;
    auto count_orphans = [&](const detail::CsvTable& t, const char* what) {
        for (const auto& row : t.rows)
            if (!sidx.contains(row[0])) ++missing_survival[what];
    };
    count_orphans(xt, "exposures");
    count_orphans(mt, "mediators");
    if (zt) count_orphans(*zt, "covariates");

    std::vector<std::string> notes;
    const std::size_t dropped = surv.rows.size() - ids.size();
    if (dropped > 0) {
        std::string s = std::to_string(dropped) + " excluded (survival ids missing from";
        for (const auto& [what, c] : missing_from) s += " " + what + ": " + std::to_string(c);
        notes.push_back(s + ")");
    }
    for (const auto& [what, c] : missing_survival)
        notes.push_back(std::to_string(c) + " " + what + " rows without survival data excluded");
    if (ids.size() < 3) {
        std::string s = "only " + std::to_string(ids.size()) + " ids shared by all input files";
        for (const auto& n : notes) s += "; " + n;
        throw Error(ErrorCode::JoinMismatch, s);
    }
    if (warnings) warnings->insert(warnings->end(), notes.begin(), notes.end());

    Dataset d;
    d.row_ids = ids;
    const auto n = static_cast<Eigen::Index>(ids.size());
    d.log_time.resize(n);
    d.event.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& id = ids[static_cast<std::size_t>(i)];
        const auto& row = surv.rows[sidx.at(id)];
        const double t = detail::parse_number(row[tcol], b.survival + " id '" + id + "' time");
        if (!(t > 0.0)) throw Error(ErrorCode::NonPositiveTime, "id '" + id + "' has time " + row[tcol]);
        d.log_time[i] = std::log(t);
        const auto& st = row[scol];
        if (st == "1" || st == "1.0")
            d.event[i] = 1;
        else if (st == "0" || st == "0.0")
            d.event[i] = 0;
        else
            throw Error(ErrorCode::BadStatusValue, "id '" + id + "' has status '" + st + "'");
    }
    d.exposures = detail::gather(xt, xidx, ids);
    d.mediators = detail::gather(mt, midx, ids);
    d.covariates = zt ? detail::gather(*zt, zidx, ids) : Matrix(n, 0);
    d.exposure_names.assign(xt.header.begin() + 1, xt.header.end());
    d.mediator_names.assign(mt.header.begin() + 1, mt.header.end());
    if (zt) d.covariate_names.assign(zt->header.begin() + 1, zt->header.end());
    validate_dataset(d);
    return d;
}

namespace detail {

inline std::string fmt6(double v)
{
    if (std::isnan(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline std::string fmt_full(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes via a temporary sibling and renames, so a failed run never leaves a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content)
{
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoError, "cannot write '" + tmp + "'");
        out << content;
        out.flush();
        if (!out) throw Error(ErrorCode::IoError, "write to '" + tmp + "' failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::IoError, "cannot rename onto '" + path.string() + "'");
    }
}

inline std::filesystem::path sibling(const std::filesystem::path& p, const char* suffix)
{
    auto out = p;
    out.replace_extension(suffix);
    return out;
}

} // namespace detail

inline constexpr std::string_view kReportHeader =
    "gene\tmediator\talpha\talpha_se\tbeta_m\tbeta_m_se\tp_alpha\tp_beta\tp_max\tp_adj\tnie\tsignificant";

inline std::string format_report_table(const AnalysisReport& rep)
{
    std::ostringstream os;
    os << kReportHeader << '\n';
    for (const auto& r : rep.records) {
        os << r.gene_id << '\t' << r.mediator_id;
        for (double v : {r.alpha_hat, r.alpha_se, r.beta_hat, r.beta_se, r.p_alpha, r.p_beta, r.p_max, r.p_adj, r.nie})
            os << '\t' << detail::fmt6(v);
        os << '\t' << (r.significant ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::string format_report_meta(const AnalysisReport& rep)
{
    std::ostringstream os;
    const auto& s = rep.active_sets;
    os << "tool_version\t" << kToolVersion << '\n';
    os << "method\t" << rep.method << '\n';
    for (const auto& [k, v] : rep.config) os << "config." << k << '\t' << v << '\n';
    os << "size.S1\t" << s.s1.size() << '\n';
    os << "size.T\t" << s.t_set.size() << '\n';
    std::size_t j1 = 0;
    for (const auto& [m, js] : s.j1) j1 += js.size();
    os << "size.J1_pairs\t" << j1 << '\n';
    os << "size.S2\t" << s.r() << '\n';
    os << "size.J2_genes\t" << s.u() << '\n';
    os << "pairs_tested\t" << rep.pairs_tested << '\n';
    os << "significant\t" << rep.significant_pairs().size() << '\n';
    auto name = [](const std::vector<std::string>& names, int i) {
        return i >= 0 && static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                                     : std::to_string(i);
    };
    for (const auto& [j, v] : rep.nde) os << "nde." << name(rep.exposure_names, j) << '\t' << detail::fmt6(v) << '\n';
    for (const auto& [m, v] : rep.global_nie)
        os << "global_nie." << name(rep.mediator_names, m) << '\t' << detail::fmt6(v) << '\n';
    for (const auto& w : rep.warnings) os << "warning\t" << w << '\n';
    return os.str();
}

/**
 * Writes the results table to `path`, metadata to the `.meta` sibling and wall-clock
 * timings to the `.timing` sibling (kept apart so the other two files are reproducible).
 */
inline void write_report(const AnalysisReport& rep, const std::filesystem::path& path)
{
    detail::write_atomic(path, format_report_table(rep));
    detail::write_atomic(detail::sibling(path, ".meta"), format_report_meta(rep));
    std::ostringstream os;
    for (const auto& [step, secs] : rep.timings) os << step << '\t' << detail::fmt6(secs) << '\n';
    detail::write_atomic(detail::sibling(path, ".timing"), os.str());
}

/// Tab-separated file as a header plus rows of strings.
inline std::pair<std::vector<std::string>, std::vector<std::vector<std::string>>> read_tsv(
    const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, '\t')) out.push_back(cell);
        if (!line.empty() && line.back() == '\t') out.emplace_back();
        return out;
    };
    std::string line;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    if (std::getline(in, line)) header = split(line);
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(split(line));
    return {header, rows};
}

/**
 * Applies a `key = value` config file to `cfg`. Keys are the config_echo names;
 * '#' starts a comment. Unknown keys and malformed values are errors.
 */
inline void apply_config_text(const std::string& text, PipelineConfig& cfg, const std::string& origin = "config")
{
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto bad = [&](const std::string& m) {
        return Error(ErrorCode::InvalidConfig, origin + ":" + std::to_string(lineno) + ": " + m);
    };
    auto to_double = [&](const std::string& v) {
        try {
            return detail::parse_number(v, "value");
        } catch (const Error&) {
            throw bad("'" + v + "' is not a number");
        }
    };
    auto to_int = [&](const std::string& v) {
        const double x = to_double(v);
        if (x != std::floor(x) || std::abs(x) > 1e15) throw bad("'" + v + "' is not an integer");
        return static_cast<long long>(x);
    };
    std::optional<int> pg, pp;
    bool prescreen_off = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        if (detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw bad("expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (val.empty()) throw bad("empty value for '" + key + "'");
        if (key == "step1_outcome_penalty") {
            const auto f = parse_penalty_family(val);
            if (!f) throw bad("unknown penalty '" + val + "'");
            cfg.step1_outcome_penalty.family = *f;
        } else if (key == "step1_outcome_gamma") {
            cfg.step1_outcome_penalty.gamma = to_double(val);
        } else if (key == "step1_mediation_penalty") {
            const auto f = parse_penalty_family(val);
            if (!f) throw bad("unknown penalty '" + val + "'");
            cfg.step1_mediation_penalty = *f;
        } else if (key == "mediation_tau") {
            cfg.mediation_tau = to_double(val);
        } else if (key == "mediation_gamma") {
            cfg.mediation_gamma = to_double(val);
        } else if (key == "sis_multiplier") {
            cfg.sis_multiplier = to_double(val);
        } else if (key == "fdr_q") {
            cfg.fdr_q = to_double(val);
        } else if (key == "aft_family") {
            const auto f = parse_aft_family(val);
            if (!f) throw bad("unknown aft family '" + val + "'");
            cfg.aft.family = *f;
        } else if (key == "cv_folds_gehan") {
            cfg.cv_folds_gehan = static_cast<int>(to_int(val));
        } else if (key == "cv_folds_lm") {
            cfg.cv_folds_lm = static_cast<int>(to_int(val));
        } else if (key == "n_lambda") {
            cfg.n_lambda = static_cast<int>(to_int(val));
        } else if (key == "lambda_min_ratio") {
            cfg.lambda_min_ratio = to_double(val);
        } else if (key == "prescreen_genes" || key == "prescreen_proteins") {
            if (val == "off") {
                prescreen_off = true;
                continue;
            }
            (key == "prescreen_genes" ? pg : pp) = static_cast<int>(to_int(val));
        } else if (key == "seed") {
            const long long s = to_int(val);
            if (s < 0) throw bad("seed must be nonnegative");
            cfg.seed = static_cast<std::uint64_t>(s);
        } else {
            throw bad("unknown key '" + key + "'");
        }
    }
    if (pg || pp) {
        if (!pg || !pp) throw Error(ErrorCode::InvalidConfig, origin + ": prescreen_genes and prescreen_proteins go together");
        cfg.prescreen = std::make_pair(*pg, *pp);
    } else if (prescreen_off) {
        cfg.prescreen.reset();
    }
    cfg.validate();
}

inline void apply_config_file(const std::filesystem::path& path, PipelineConfig& cfg)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(ss.str(), cfg, path.string());
}

/// Writes survival.csv, exposures.csv, mediators.csv and covariates.csv into `dir`.
inline void write_dataset_csv(const Dataset& d0, const std::filesystem::path& dir)
{
    Dataset d = d0;
    d.fill_default_names();
    std::filesystem::create_directories(dir);
    std::ostringstream s;
    s << "id,time,status\n";
    for (Eigen::Index i = 0; i < d.n(); ++i)
        s << d.row_ids[static_cast<std::size_t>(i)] << ',' << detail::fmt_full(std::exp(d.log_time[i])) << ','
          << d.event[i] << '\n';
    detail::write_atomic(dir / "survival.csv", s.str());
    auto mat = [&](const Matrix& m, const std::vector<std::string>& names, const char* file) {
        std::ostringstream os;
        os << "id";
        for (const auto& nm : names) os << ',' << nm;
        os << '\n';
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            os << d.row_ids[static_cast<std::size_t>(i)];
            for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << detail::fmt_full(m(i, j));
            os << '\n';
        }
        detail::write_atomic(dir / file, os.str());
    };
    mat(d.exposures, d.exposure_names, "exposures.csv");
    mat(d.mediators, d.mediator_names, "mediators.csv");
    if (d.q() > 0) mat(d.covariates, d.covariate_names, "covariates.csv");
}

/// Ground truth as `gene<TAB>mediator` lines plus the direct genes.
inline void write_truth(const GroundTruth& t, const Dataset& d, const std::filesystem::path& path)
{
    std::ostringstream os;
    os << "kind\tgene\tmediator\n";
    for (const auto& [j, s] : t.true_pairs)
        os << "pair\t" << d.exposure_names[static_cast<std::size_t>(j)] << '\t'
           << d.mediator_names[static_cast<std::size_t>(s)] << '\n';
    for (int j : t.direct_genes) os << "direct\t" << d.exposure_names[static_cast<std::size_t>(j)] << "\t.\n";
    for (int s : t.outcome_mediators) os << "outcome_mediator\t.\t" << d.mediator_names[static_cast<std::size_t>(s)] << '\n';
    detail::write_atomic(path, os.str());
}

/// Benchmark table (without timings) and the `.timing` sibling with average minutes.
inline void write_benchmark(const std::vector<BenchmarkRow>& rows, const std::filesystem::path& path)
{
    std::ostringstream os, ts;
    os << "scenario\tp\tk\tn\tcensoring\tmethod\tpower\tfdr\treps_ok\treps_failed\n";
    ts << "scenario\tn\tcensoring\tmethod\tavg_minutes\n";
    for (const auto& r : rows) {
        os << r.scenario << '\t' << r.p << '\t' << r.k << '\t' << r.n << '\t' << detail::fmt6(r.censor_rate) << '\t'
           << r.method << '\t' << detail::fmt6(r.power) << '\t' << detail::fmt6(r.fdr) << '\t' << r.reps_ok << '\t'
           << r.reps_failed << '\n';
        ts << r.scenario << '\t' << r.n << '\t' << detail::fmt6(r.censor_rate) << '\t' << r.method << '\t'
           << detail::fmt6(r.avg_minutes) << '\n';
    }
    detail::write_atomic(path, os.str());
    detail::write_atomic(detail::sibling(path, ".timing"), ts.str());
}

} // namespace smahp
