// mfgnoise command-line front end: solve, check, toy, diagnose.
//
// Exit codes: 0 success / pass / converged, 1 configuration or runtime error,
// 2 BlowUp or failed check or violated bound, 3 MaxIterations.

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <mfgnoise/mfgnoise.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mfgnoise;

namespace {

struct UsageError : Error {
    using Error::Error;
};

std::vector<double> parse_list(const std::string& s, char sep = ',') {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("not a number: '" + item + "'");
        }
    }
    return out;
}

/// "name" or "name:a,b,c"
json parse_builtin(const std::string& s) {
    const auto colon = s.find(':');
    json j;
    j["builtin"] = s.substr(0, colon);
    j["params"] = colon == std::string::npos ? std::vector<double>{} : parse_list(s.substr(colon + 1));
    return j;
}

/// "diag:a,b", "scalar:a" (a I) or "rows:a,b;c,d".
Eigen::MatrixXd parse_matrix(const std::string& s, std::size_t rows, std::size_t cols) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw UsageError("matrix '" + s + "': expected diag:, scalar: or rows:");
    const std::string kind = s.substr(0, colon), body = s.substr(colon + 1);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (kind == "diag" || kind == "scalar") {
        auto v = parse_list(body);
        if (kind == "scalar" && v.size() == 1) v.assign(std::min(rows, cols), v[0]);
        if (v.size() != std::min(rows, cols)) throw UsageError("matrix '" + s + "': wrong number of diagonal entries");
        for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = v[i];
        return m;
    }
    if (kind == "rows") {
        std::stringstream ss(body);
        std::string row;
        std::size_t i = 0;
        while (std::getline(ss, row, ';')) {
            const auto v = parse_list(row);
            if (i >= rows || v.size() != cols) throw UsageError("matrix '" + s + "': wrong shape");
            for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
            ++i;
        }
        if (i != rows) throw UsageError("matrix '" + s + "': wrong shape");
        return m;
    }
    throw UsageError("matrix '" + s + "': unknown form '" + kind + "'");
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("'" + path + "': " + e.what());
    }
}

/// SHA-1 of "blob <n>\0<content>", as git hashes a file.
std::string git_blob_sha1(const std::string& content) {
    const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

void write_file(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << s;
}

template <class Fn>
void write_csv(const fs::path& p, Fn fn) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    fn(out);
}

json matrix_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Problem selection shared by all commands.

struct ProblemArgs {
    std::string builtin, file;
    std::optional<double> horizon;

    void add(CLI::App* app) {
        app->add_option("--builtin", builtin, "builtin problem, e.g. heat_only:0.5 or linear_toy:4,1,4");
        app->add_option("--problem", file, "problem spec file (JSON)");
        app->add_option("--horizon", horizon, "override the horizon T");
    }

    /// `fallback` is the "problem" entry of a run config, if any.
    json select(const json& fallback) const {
        json j;
        if (!builtin.empty() && !file.empty()) throw UsageError("give either --builtin or --problem, not both");
        if (!builtin.empty()) j = parse_builtin(builtin);
        else if (!file.empty()) j = read_json(file);
        else if (!fallback.is_null()) j = fallback;
        else throw UsageError("no problem given (use --builtin or --problem)");
        return j;
    }

    ProblemSpec load(const json& fallback, json* echo = nullptr) const {
        const json j = select(fallback);
        ProblemSpec s = problem_from_json(j);
        if (horizon) set_horizon(s, *horizon);
        check_well_formed(s);
        if (echo) *echo = problem_to_json(s);
        return s;
    }
};

// ---------------------------------------------------------------------------

struct SolveArgs {
    ProblemArgs problem;
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> n_x, n_p, time_nodes, paths, steps, max_iter, threads;
    std::optional<double> dt, window, min_window, tol, lip_max, damping;
    bool force = false, no_adaptive = false;
};

int cmd_solve(const SolveArgs& a) {
    json cfg = a.config.empty() ? json::object() : read_json(a.config);
    json problem_echo;
    const ProblemSpec spec = a.problem.load(cfg.value("problem", json()), &problem_echo);

    GridConfig gc;
    const json g = cfg.value("grid", json::object());
    gc.n_x = a.n_x.value_or(g.value("n_x", gc.n_x));
    gc.n_p = a.n_p.value_or(g.value("n_p", gc.n_p));
    gc.time_nodes_per_window = a.time_nodes.value_or(g.value("time_nodes_per_window", gc.time_nodes_per_window));

    MonteCarloConfig mc;
    const json m = cfg.value("mc", json::object());
    mc.n_paths = a.paths.value_or(m.value("n_paths", mc.n_paths));
    mc.dt = a.dt.value_or(m.value("dt", mc.dt));
    mc.steps = a.steps.value_or(m.value("steps", mc.steps));
    mc.threads = a.threads.value_or(m.value("threads", std::size_t{1}));
    std::optional<std::uint64_t> seed = a.seed;
    if (!seed && m.contains("seed")) seed = m.at("seed").get<std::uint64_t>();
    if (!seed && spec.stochastic()) throw UsageError("stochastic problem: --seed is required");
    mc.seed = seed.value_or(0);

    ContinuationConfig ctrl;
    const json c = cfg.value("ctrl", json::object());
    ctrl.window = a.window.value_or(c.value("window", ctrl.window));
    ctrl.min_window = a.min_window.value_or(c.value("min_window", ctrl.min_window));
    ctrl.tol = a.tol.value_or(c.value("tol", ctrl.tol));
    ctrl.max_iter = a.max_iter.value_or(c.value("max_iter", ctrl.max_iter));
    ctrl.lip_max = a.lip_max.value_or(c.value("lip_max", ctrl.lip_max));
    ctrl.damping = a.damping.value_or(c.value("damping", ctrl.damping));
    ctrl.force = a.force || c.value("force", false);
    ctrl.adaptive = !a.no_adaptive && c.value("adaptive", true);

    const fs::path out = !a.out.empty() ? fs::path(a.out) : fs::path(cfg.value("output_dir", std::string("out")));

    // config echo: everything that determines the output (threads excluded)
    json echo;
    echo["problem"] = problem_echo;
    echo["grid"] = {{"n_x", gc.n_x}, {"n_p", gc.n_p}, {"time_nodes_per_window", gc.time_nodes_per_window}};
    echo["mc"] = {{"n_paths", mc.n_paths}, {"dt", mc.dt}, {"steps", mc.steps}, {"seed", mc.seed}};
    echo["ctrl"] = {{"window", ctrl.window}, {"min_window", ctrl.min_window}, {"tol", ctrl.tol},
                    {"max_iter", ctrl.max_iter}, {"lip_max", ctrl.lip_max}, {"damping", ctrl.damping},
                    {"force", ctrl.force}, {"adaptive", ctrl.adaptive}};

    const SolveResult r = picard_solve(spec, gc, mc, ctrl);

    fs::create_directories(out);
    r.field.save((out / "field.bin").string());
    write_csv(out / "grad_norms.csv", [&](std::ostream& os) { write_grad_csv(os, r.grad_history); });
    write_csv(out / "residuals.csv", [&](std::ostream& os) { write_residual_csv(os, r.picard_residuals); });

    json man;
    man["version"] = kVersion;
    man["command"] = "solve";
    man["config"] = echo;
    man["seeds"] = {{"mc", mc.seed}};
    man["input_hash"] = git_blob_sha1(echo.dump());
    man["status"] = status_name(r.status);
    man["blowup_time"] = r.blowup_time ? json(*r.blowup_time) : json(nullptr);
    man["windows"] = r.windows;
    man["direct_mode"] = r.direct_mode;
    man["initial_window"] = r.initial_window;
    man["lip_max"] = r.lip_max;
    man["clamp_rate"] = r.clamp_rate;
    man["max_std_err"] = r.max_std_err;
    man["last_residual"] = r.last_residual();
    man["warnings"] = r.warnings;
    man["artifacts"] = {"field.bin", "grad_norms.csv", "residuals.csv"};
    write_file(out / "manifest.json", man.dump(2) + "\n");

    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    std::cerr << "status " << status_name(r.status);
    if (r.blowup_time) std::cerr << " at t=" << fmt_num(*r.blowup_time);
    std::cerr << " (" << r.windows << " windows)\n";
    switch (r.status) {
        case SolveStatus::Converged: return 0;
        case SolveStatus::BlowUp: return 2;
        case SolveStatus::MaxIterations: return 3;
    }
    return 1;
}

// ---------------------------------------------------------------------------

struct CheckArgs {
    ProblemArgs problem;
    std::string hyp, a_matrix, n_matrix, m_matrix, coef = "U0", report = "report.json";
    double alpha = 1.0;
    std::size_t samples = 2000;
    std::uint64_t seed = 1;
    double tolerance = 1e-9;
    bool search_a = false, full_symmetric = false;
};

json tuple_json(const Tuple& t) {
    return {{"x", t.x}, {"y", t.y}, {"p", t.p}, {"q", t.q}, {"u", t.u}, {"v", t.v}};
}

int cmd_check(const CheckArgs& a) {
    const ProblemSpec spec = a.problem.load(json());
    const SamplerConfig sampler = sampler_for(spec, a.samples, a.seed);
    const auto m = spec.m;
    auto need_a = [&]() -> Eigen::MatrixXd {
        if (a.a_matrix.empty()) throw UsageError("--hyp " + a.hyp + " needs --A (or --search-A)");
        return parse_matrix(a.a_matrix, m, m);
    };
    MonotonicityReport rep;
    json extra = json::object();
    if (a.hyp == "alpha") {
        const CoefficientField* f = a.coef == "U0" ? &spec.u0
                                    : a.coef == "F" ? &spec.f_coef
                                    : a.coef == "G" ? &spec.g_coef
                                                    : nullptr;
        if (!f) throw UsageError("--coef must be U0, F or G");
        rep = check_alpha_monotone(*f, a.alpha, sampler, a.tolerance);
        extra["coefficient"] = a.coef;
    } else if (a.hyp == "autonomous") {
        rep = check_hyp_autonomous(spec, a.alpha, sampler, a.tolerance);
    } else if (a.hyp == "coupled" && a.search_a) {
        ASearchConfig sc;
        sc.autonomous_shortcut = false;
        sc.full_symmetric = a.full_symmetric;
        sc.tolerance = a.tolerance;
        const auto found = search_matrix_A(spec, a.alpha, sampler, sc);
        if (!found) {
            // no certificate: report the coupled check at A = 0
            rep = check_hyp_coupled(spec, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m)),
                                    a.alpha, sampler, a.tolerance);
            rep.passed = false;
            extra["search"] = "no certificate found";
        } else {
            rep = check_hyp_coupled(spec, found->a, a.alpha, sampler, a.tolerance);
            extra["search"] = "found";
        }
    } else if (a.hyp == "coupled") {
        rep = check_hyp_coupled(spec, need_a(), a.alpha, sampler, a.tolerance);
    } else if (a.hyp == "weaker") {
        rep = check_weaker_monotonicity(spec, need_a(), a.alpha, sampler, a.tolerance);
    } else if (a.hyp == "g") {
        const Eigen::MatrixXd n = a.n_matrix.empty()
                                      ? Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(spec.d), static_cast<Eigen::Index>(spec.d))
                                      : parse_matrix(a.n_matrix, spec.d, spec.d);
        const Eigen::MatrixXd mm = a.m_matrix.empty()
                                       ? Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.d), static_cast<Eigen::Index>(m))
                                       : parse_matrix(a.m_matrix, spec.d, m);
        rep = check_g_monotonicity(spec, n, mm, a.alpha, sampler, a.tolerance);
        extra["N"] = matrix_json(n);
        extra["M"] = matrix_json(mm);
    } else if (a.hyp == "volatility") {
        rep = check_volatility_condition(spec, need_a(), a.alpha, sampler, a.tolerance);
    } else if (a.hyp == "trade") {
        rep = check_trade_condition(spec, need_a(), a.alpha, sampler, a.tolerance);
    } else {
        throw UsageError("unknown hypothesis '" + a.hyp + "'");
    }

    json j;
    j["version"] = kVersion;
    j["hypothesis"] = rep.hypothesis;
    j["passed"] = rep.passed;
    j["margin"] = rep.margin;
    j["alpha"] = rep.alpha_used;
    j["A"] = rep.a_matrix ? matrix_json(*rep.a_matrix) : json(nullptr);
    j["witness"] = tuple_json(rep.witness);
    j["witness_condition"] = rep.witness_condition;
    json conds = json::array();
    for (const auto& c : rep.conditions) conds.push_back({{"name", c.name}, {"margin", c.margin}, {"witness", tuple_json(c.witness)}});
    j["conditions"] = conds;
    j["n_samples"] = rep.n_samples;
    j["seed"] = rep.seed;
    j["tolerance"] = rep.tolerance;
    j["notes"] = rep.notes;
    j["problem"] = spec.name;
    j["extra"] = extra;
    const fs::path rp(a.report);
    if (rp.has_parent_path()) fs::create_directories(rp.parent_path());
    write_file(rp, j.dump(2) + "\n");
    std::cerr << rep.hypothesis << ": " << (rep.passed ? "PASS" : "FAIL") << " margin=" << fmt_num(rep.margin);
    if (!rep.passed) std::cerr << " (condition " << rep.witness_condition << ")";
    std::cerr << '\n';
    return rep.passed ? 0 : 2;
}

// ---------------------------------------------------------------------------

struct ToyArgs {
    double lambda = 0.0, alpha0 = 0.0, beta0 = 1.0, horizon = 1.0, dt = 1e-3, threshold = 1e6;
    std::string out = "toy.csv";
};

int cmd_toy(const ToyArgs& a) {
    const auto tr = toy_ode_solve(a.lambda, a.alpha0, a.beta0, a.horizon, a.dt, a.threshold);
    const fs::path p(a.out);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_csv(p, [&](std::ostream& os) { write_toy_csv(os, tr); });
    std::cerr << verdict_line(toy_blowup_certificate(a.lambda, a.alpha0, a.beta0)) << '\n';
    if (tr.blown_up) std::cerr << "blown_up at t=" << fmt_num(*tr.blowup_time) << '\n';
    else std::cerr << "no blow-up before T=" << fmt_num(a.horizon) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
    ProblemArgs problem;
    std::string field, a_matrix, out = "diagnose";
    double alpha = 1.0, eps = 0.05, z_eps = 0.02;
    std::size_t z_samples = 100000, threads = 1;
    std::uint64_t z_seed = 1;
    bool assert_bounds = false;
};

int cmd_diagnose(const DiagnoseArgs& a) {
    if (!fs::exists(a.field)) throw UsageError("field file '" + a.field + "' not found");
    const ValueField f = ValueField::load(a.field);
    const ProblemSpec spec = a.problem.load(json());
    if (!(f.grid().d() == spec.d && f.grid().m() == spec.m)) throw UsageError("field does not match the problem's dimensions");
    std::optional<Eigen::MatrixXd> am;
    if (!a.a_matrix.empty()) am = parse_matrix(a.a_matrix, spec.m, spec.m);
    const auto history = grad_norms(f);
    const BoundCurves bc = bound_curves(spec, a.alpha, am, f.times().back(), history);

    ZConfig zc;
    zc.n_samples = a.z_samples;
    zc.seed = a.z_seed;
    zc.autonomous = !am.has_value();
    zc.threads = a.threads;
    const Eigen::MatrixXd za =
        am ? *am : Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(spec.m), static_cast<Eigen::Index>(spec.m));
    const ZReport z = z_monitor(f, za, bc.beta, zc);

    const fs::path out(a.out);
    fs::create_directories(out);
    write_csv(out / "bounds.csv", [&](std::ostream& os) { write_bounds_csv(os, bc); });
    write_csv(out / "z_histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, z.histogram); });
    json j;
    j["version"] = kVersion;
    j["command"] = "diagnose";
    j["alpha"] = a.alpha;
    j["beta0"] = bc.beta.beta0;
    j["lambda_beta"] = bc.beta.lambda_beta;
    j["dx_cap"] = bc.dx_cap;
    j["lambda_a"] = bc.lambda_a;
    j["z_form"] = zc.autonomous ? "autonomous" : "coupled";
    j["z_min"] = z.min.z_value;
    j["z_witness"] = {{"t", z.min.t}, {"x", z.min.x}, {"y", z.min.y}, {"p", z.min.p}, {"q", z.min.q}};
    j["z_samples"] = z.n_samples;
    j["z_seed"] = zc.seed;
    j["field_hash"] = [&] {
        std::ifstream in(a.field, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return git_blob_sha1(ss.str());
    }();
    write_file(out / "summary.json", j.dump(2) + "\n");

    std::cerr << "min Z = " << fmt_num(z.min.z_value) << ", lambda_beta = " << fmt_num(bc.beta.lambda_beta) << '\n';
    if (!a.assert_bounds) return 0;
    bool ok = true;
    for (const auto& v : check_bounds(bc, a.eps)) {
        std::cerr << "violation: " << v.curve << " at t=" << fmt_num(v.t) << ": " << fmt_num(v.value) << " > "
                  << fmt_num(v.bound) << " + " << fmt_num(a.eps) << '\n';
        ok = false;
    }
    if (z.min.z_value < -a.z_eps) {
        std::cerr << "violation: min Z " << fmt_num(z.min.z_value) << " < -" << fmt_num(a.z_eps) << '\n';
        ok = false;
    }
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mfgnoise: Picard/Monte Carlo solver and monotonicity checks"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    SolveArgs sa;
    auto* solve = app.add_subcommand("solve", "run the Picard continuation and write a field");
    sa.problem.add(solve);
    solve->add_option("--config", sa.config, "run config (JSON)");
    solve->add_option("--out", sa.out, "output directory");
    solve->add_option("--seed", sa.seed, "Monte Carlo seed (required for stochastic problems)");
    solve->add_option("--nx", sa.n_x, "x nodes per axis");
    solve->add_option("--np", sa.n_p, "p nodes per axis");
    solve->add_option("--time-nodes", sa.time_nodes, "time nodes per window");
    solve->add_option("--paths", sa.paths, "Monte Carlo paths");
    solve->add_option("--dt", sa.dt, "path step (0: fixed step count)");
    solve->add_option("--steps", sa.steps, "path steps per sub-horizon when dt = 0");
    solve->add_option("--window", sa.window, "initial window length");
    solve->add_option("--min-window", sa.min_window, "smallest window before declaring blow-up");
    solve->add_option("--tol", sa.tol, "Picard tolerance");
    solve->add_option("--max-iter", sa.max_iter, "Picard iterations per window");
    solve->add_option("--lip-max", sa.lip_max, "Lipschitz blow-up threshold");
    solve->add_option("--damping", sa.damping, "Picard damping theta in [0,1)");
    solve->add_option("--threads", sa.threads, "worker threads (results do not depend on it)");
    solve->add_flag("--force", sa.force, "solve even if validation fails");
    solve->add_flag("--no-adaptive", sa.no_adaptive, "keep the window length fixed");

    CheckArgs ca;
    auto* check = app.add_subcommand("check", "sample a monotonicity hypothesis");
    ca.problem.add(check);
    check->add_option("--hyp", ca.hyp, "alpha|autonomous|coupled|weaker|g|volatility|trade")->required();
    check->add_option("--alpha", ca.alpha, "monotonicity level");
    check->add_option("--A", ca.a_matrix, "matrix A: diag:a,b | scalar:a | rows:a,b;c,d");
    check->add_option("--N", ca.n_matrix, "G-monotonicity N (default identity)");
    check->add_option("--M", ca.m_matrix, "G-monotonicity M (default zero)");
    check->add_option("--coef", ca.coef, "coefficient for --hyp alpha: U0|F|G");
    check->add_option("--samples", ca.samples, "random tuples (plus as many lattice tuples)");
    check->add_option("--seed", ca.seed, "sampler seed");
    check->add_option("--tolerance", ca.tolerance, "pass if margin >= -tolerance");
    check->add_option("--report", ca.report, "report file");
    check->add_flag("--search-A", ca.search_a, "search a diagonal A (coupled only)");
    check->add_flag("--full-symmetric", ca.full_symmetric, "also search off-diagonal entries");

    ToyArgs ta;
    auto* toy = app.add_subcommand("toy", "integrate the linear toy Riccati system");
    toy->add_option("--lambda", ta.lambda);
    toy->add_option("--alpha0", ta.alpha0);
    toy->add_option("--beta0", ta.beta0);
    toy->add_option("--T", ta.horizon);
    toy->add_option("--dt", ta.dt);
    toy->add_option("--threshold", ta.threshold, "divergence threshold on |alpha|");
    toy->add_option("--out", ta.out, "CSV file");

    DiagnoseArgs da;
    auto* diag = app.add_subcommand("diagnose", "gradient bounds and Z monitor for a solved field");
    da.problem.add(diag);
    diag->add_option("--field", da.field, "field.bin from solve")->required();
    diag->add_option("--alpha", da.alpha, "monotonicity level");
    diag->add_option("--A", da.a_matrix, "matrix A for the coupled form (omit: autonomous form)");
    diag->add_option("--eps", da.eps, "numerical budget for bound assertions");
    diag->add_option("--z-eps", da.z_eps, "numerical budget for min Z");
    diag->add_option("--z-samples", da.z_samples, "Z tuples");
    diag->add_option("--z-seed", da.z_seed, "Z sampler seed");
    diag->add_option("--threads", da.threads, "worker threads");
    diag->add_option("--out", da.out, "output directory");
    diag->add_flag("--assert", da.assert_bounds, "exit 2 if a bound is violated beyond the budget");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    try {
        if (*solve) return cmd_solve(sa);
        if (*check) return cmd_check(ca);
        if (*toy) return cmd_toy(ta);
        if (*diag) return cmd_diagnose(da);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
