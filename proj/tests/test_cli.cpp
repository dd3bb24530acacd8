#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ferro/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace ferro;
using namespace ferro::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("ferro_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text)
{
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << text;
}

std::string small_config(const fs::path& out, const std::string& extra = "")
{
    return "# small test problem\n"
           "domain.dim = 2\n"
           "domain.L = 1\n"
           "domain.n_horizontal = 8\n"
           "domain.n_z = 8\n"
           "law.kind = linear\n"
           "law.mu = 2\n"
           "physics.b = 1\n"
           "physics.tau = 0.1\n"
           "solver.probes = 6\n"
           "output.directory = " +
           out.string() + "\n" + extra;
}

fs::path write_config(const fs::path& dir, const std::string& text)
{
    const fs::path p = dir / "run.cfg";
    spit(p, text);
    return p;
}

int expect_config_error(const std::string& text, int line, int column)
{
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        CHECK(e.line() == line);
        CHECK(e.column() == column);
        return 1;
    }
    FAIL("no ConfigError for: " << text);
    return 0;
}

} // namespace

TEST_CASE("config parse and format round trip")
{
    RunConfig c;
    c.domain.dim = 3;
    c.domain.L = {1.0, 0.7};
    c.domain.n_horizontal = {4, 6};
    c.domain.n_z = 10;
    c.law.kind = LawKind::langevin;
    c.law.Ms = 3.0;
    c.law.gamma = 0.1;
    c.physics.tau = 1.0 / 3.0;
    c.physics.mu_drive = 0.0;
    c.physics.p0_override = -0.25;
    c.solver.seed = 18446744073709551615ull;
    c.solver.deterministic = true;
    c.output.formats = {"csv", "grid"};
    CHECK(parse_config(format_config(c)) == c);
    CHECK(parse_config(format_config(RunConfig{})) == RunConfig{});
}

TEST_CASE("comments, blank lines and defaults")
{
    const RunConfig c = parse_config("\n   # only a comment\nphysics.b = 2   # trailing\r\n\n");
    CHECK(c.physics.b == 2.0);
    RunConfig d;
    d.physics.b = 2.0;
    CHECK(c == d);
}

TEST_CASE("malformed input reports line and column")
{
    expect_config_error("physics.b = 1\n  domain.nz = 4\n", 2, 3);
    expect_config_error("law.mu =   abc\n", 1, 12);
    expect_config_error("physics.b 1\n", 1, 12);
    expect_config_error("physics.b = 1\nphysics.b = 2\n", 2, 1);
    expect_config_error("phys!cs.b = 1\n", 1, 5);
    expect_config_error("physics.b =\n", 1, 12);
    expect_config_error("domain.n_z = 4.5\n", 1, 14);
    // invariant violations point at the offending key's value
    expect_config_error("# header\nlaw.kind = linear\nlaw.mu = 0.5\n", 3, 10);
    expect_config_error("physics.tau = 0\n", 1, 15);
    expect_config_error("domain.n_horizontal = 1\n", 1, 23);
    expect_config_error("output.formats = csv, vtk\n", 1, 18);
}

TEST_CASE("invariants")
{
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    c.domain.dim = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.law.kind = LawKind::langevin;
    c.law.mu = 0.5; // ignored for Langevin
    CHECK_NOTHROW(c.validate());
    c.law.gamma = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.physics.b = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.physics.mu_drive = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("derived solver inputs")
{
    RunConfig c;
    c.domain.n_horizontal = {5};
    c.domain.n_z = 6;
    CHECK(c.spec() == DomainSpec::make_2d(1.0, 5, 6));
    const PhysicalParams p = c.params();
    CHECK(p.mu_drive == 2.0);
    CHECK(p.p0 == doctest::Approx(1.0).epsilon(1e-15));
    c.physics.p0_override = 3.0;
    CHECK(c.params().p0 == 3.0);
    c.solver.theta = 0.25;
    c.solver.outer_max_iter = 7;
    CHECK(c.saddle_options().theta == 0.25);
    CHECK(c.saddle_options().outer.max_iter == 7);
}

TEST_CASE("report parsing")
{
    const Report r{{"a.b", "1"}, {"config.physics.b", "0.5"}, {"config.law.mu", "3"}};
    const Report back = parse_report("# comment\n" + format_report(r));
    CHECK(back == r);
    CHECK(*report_value(back, "a.b") == "1");
    CHECK(report_value(back, "none") == nullptr);
    RunConfig expect;
    expect.physics.b = 0.5;
    expect.law.mu = 3.0;
    CHECK(config_from_report(back) == expect);
    CHECK(format_number(0.1) == "0.10000000000000001");
    CHECK_THROWS_AS(parse_report("no separator\n"), MissingInput);
}

TEST_CASE("sweep axis parsing")
{
    const SweepAxis a = parse_sweep_axis("physics.b=0.5, 1,2");
    CHECK(a.key == "physics.b");
    CHECK(a.values == std::vector<std::string>{"0.5", "1", "2"});
    CHECK_THROWS_AS(parse_sweep_axis("physics.b="), ConfigError);
    CHECK_THROWS_AS(parse_sweep_axis("physics.b=1,,2"), ConfigError);
    CHECK_THROWS_AS(parse_sweep_axis("physics.c=1"), ConfigError);
    CHECK_THROWS_AS(parse_sweep_axis("physics.b"), ConfigError);
}

TEST_CASE("solve: zero drive exports the flat layer")
{
    const fs::path dir = scratch("zero");
    const fs::path out = dir / "nested" / "out"; // created on demand
    const fs::path cfg = write_config(dir, small_config(out, "physics.mu_drive = 0\noutput.formats = csv,grid\n"));
    Overrides ov;
    ov.deterministic = true;
    REQUIRE(cmd_solve(cfg.string(), ov) == exit_ok);

    const DomainSpec s = DomainSpec::make_2d(1.0, 8, 8);
    const DensityField flat = indicator_from_graph(s, HeightField(s.num_columns(), 0.0));
    CHECK(read_csv((out / "chi.csv").string(), s, FieldLocation::cell) == flat.raw());
    CHECK(read_grid_ascii((out / "chi.grid").string(), s, FieldLocation::cell) == flat.raw());
    for (double v : read_csv((out / "eta.csv").string(), s, FieldLocation::column))
        CHECK(v == 0.0);
    for (double v : read_csv((out / "u.csv").string(), s, FieldLocation::node))
        CHECK(std::abs(v) <= 1e-10);

    const Report r = parse_report(slurp(out / "report.txt"));
    CHECK(*report_value(r, "run.status") == "ok");
    CHECK(*report_value(r, "run.exit_code") == "0");
    CHECK(*report_value(r, "verify.all_pass") == "true");
    CHECK(report_value(r, "run.wallclock") == nullptr);
    CHECK(report_value(r, "verify.duality.J_plus_Etilde.measured") != nullptr);

    // the echoed config re-parses to the effective configuration
    RunConfig effective = load_config(cfg.string());
    effective.solver.deterministic = true;
    CHECK(config_from_report(r) == effective);
}

TEST_CASE("solve: rerun overwrites deterministically")
{
    const fs::path dir = scratch("rerun");
    const fs::path out = dir / "out";
    const fs::path cfg = write_config(dir, small_config(out, "solver.deterministic = true\n"));
    const int first = cmd_solve(cfg.string(), {});
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(out))
        files[e.path().filename().string()] = slurp(e.path());
    spit(out / "u.csv", "garbage");
    CHECK(cmd_solve(cfg.string(), {}) == first);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(out)) {
        ++n;
        CHECK_MESSAGE(files[e.path().filename().string()] == slurp(e.path()), e.path());
    }
    CHECK(n == files.size());
    CHECK(files.count("report.txt"));
    CHECK(files.count("rho.csv"));
}

TEST_CASE("solve: exit codes")
{
    const fs::path dir = scratch("codes");
    const fs::path bad = write_config(dir, "physics.b = 1\ndomain.nz = 4\n");
    CHECK(cmd_solve(bad.string(), {}) == exit_usage);
    CHECK(cmd_solve((dir / "absent.cfg").string(), {}) == exit_missing_input);

    // a single sweep cannot close the gap on a driven problem
    const fs::path capped =
        write_config(dir, small_config(dir / "capped", "solver.saddle.max_sweeps = 1\nsolver.saddle.tol_gap = 0\n"));
    CHECK(cmd_solve(capped.string(), {}) == exit_non_convergence);
    const Report r = parse_report(slurp(dir / "capped" / "report.txt"));
    CHECK(*report_value(r, "run.status") == "not_converged");
    CHECK(*report_value(r, "history.count") == "1");
}

TEST_CASE("verify: zero-drive state passes, corrupted state is missing input")
{
    const fs::path dir = scratch("verify");
    const fs::path out = dir / "state";
    const fs::path cfg = write_config(dir, small_config(out, "physics.mu_drive = 0\n"));
    REQUIRE(cmd_solve(cfg.string(), {}) == exit_ok);
    CHECK(cmd_verify(cfg.string(), out.string(), {}) == exit_ok);
    const Report v = parse_report(slurp(out / "verify.txt"));
    CHECK(*report_value(v, "verify.all_pass") == "true");
    CHECK(report_value(v, "verify.saddle.left.measured") != nullptr);

    CHECK(cmd_verify(cfg.string(), (dir / "nowhere").string(), {}) == exit_missing_input);
    spit(out / "chi.csv", "i,k,value\n0,0,1\n");
    CHECK(cmd_verify(cfg.string(), out.string(), {}) == exit_missing_input);
    fs::remove(out / "chi.csv");
    CHECK(cmd_verify(cfg.string(), out.string(), {}) == exit_missing_input);
}

TEST_CASE("verify: a linear state includes the duality checks")
{
    const fs::path dir = scratch("verify_linear");
    const fs::path out = dir / "state";
    // the binary gap at 8x8 stalls near 2e-3 relative, above the default 1e-3
    const fs::path cfg = write_config(dir, small_config(out, "solver.saddle.tol_gap = 0.01\n"));
    const int solved = cmd_solve(cfg.string(), {});
    CHECK(solved == exit_ok);
    const int verified = cmd_verify(cfg.string(), out.string(), {});
    CHECK(verified == solved);
    const Report v = parse_report(slurp(out / "verify.txt"));
    for (const char* k : {"verify.duality.J_plus_Etilde.pass", "verify.duality.E_equals_Etilde.pass",
                          "verify.duality.Yd_residual.pass", "verify.duality.dual_probes.pass",
                          "verify.energy.u_probes.pass", "verify.energy.chi_probes.pass"})
        CHECK_MESSAGE(report_value(v, k) != nullptr, k);
}

TEST_CASE("sweep: empty lists are usage errors")
{
    const fs::path dir = scratch("sweep_empty");
    const fs::path cfg = write_config(dir, small_config(dir / "out"));
    CHECK(cmd_sweep(cfg.string(), {}, {}) == exit_usage);
    CHECK(cmd_sweep(cfg.string(), {"physics.b="}, {}) == exit_usage);
    CHECK(cmd_sweep(cfg.string(), {"physics.b=-1"}, {}) == exit_usage);
}

TEST_CASE("sweep: a single value reproduces solve")
{
    const fs::path dir = scratch("sweep_single");
    const fs::path cfg = write_config(dir, small_config(dir / "sweep", "physics.mu_drive = 0\n"));
    Overrides ov;
    ov.deterministic = true;
    const int code = cmd_sweep(cfg.string(), {"physics.b=1"}, ov);
    ov.out = (dir / "solo").string();
    CHECK(cmd_solve(cfg.string(), ov) == code);
    for (const char* f : {"u.csv", "u_chi.csv", "rho.csv", "chi.csv", "chi_upper.csv", "eta.csv"})
        CHECK_MESSAGE(slurp(dir / "sweep" / "run_000" / f) == slurp(dir / "solo" / f), f);
    Report a = parse_report(slurp(dir / "sweep" / "run_000" / "report.txt"));
    Report b = parse_report(slurp(dir / "solo" / "report.txt"));
    std::erase_if(a, [](const auto& kv) { return kv.first == "config.output.directory"; });
    std::erase_if(b, [](const auto& kv) { return kv.first == "config.output.directory"; });
    CHECK(a == b);
    const std::string csv = slurp(dir / "sweep" / "sweep.csv");
    CHECK(csv.rfind("run,physics.b,exit_code,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("sweep: thread count does not change the results")
{
    const fs::path dir = scratch("sweep_threads");
    const fs::path cfg = write_config(dir, small_config(dir / "unused"));
    Overrides one;
    one.deterministic = true;
    one.out = (dir / "one").string();
    Overrides three = one;
    three.threads = 3;
    three.out = (dir / "three").string();
    const std::vector<std::string> axes{"physics.b=0.5,2", "physics.tau=0.05,0.2"};
    const int c1 = cmd_sweep(cfg.string(), axes, one);
    CHECK(cmd_sweep(cfg.string(), axes, three) == c1);
    const std::string csv = slurp(dir / "one" / "sweep.csv");
    CHECK(csv == slurp(dir / "three" / "sweep.csv"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    for (int i = 0; i < 4; ++i) {
        const std::string run = "run_00" + std::to_string(i);
        CHECK(slurp(dir / "one" / run / "u.csv") == slurp(dir / "three" / run / "u.csv"));
        CHECK(fs::exists(dir / "three" / run / "report.txt"));
    }
    // last axis varies fastest
    const Report r = parse_report(slurp(dir / "one" / "run_001" / "report.txt"));
    CHECK(*report_value(r, "config.physics.b") == "0.5");
    CHECK(*report_value(r, "config.physics.tau") == "0.20000000000000001");
}

#ifdef FERRO_CLI_PATH
TEST_CASE("command-line front end")
{
    const fs::path dir = scratch("binary");
    const fs::path cfg = write_config(dir, small_config(dir / "out", "physics.mu_drive = 0\n"));
    auto run = [](const std::string& args) {
        const int status = std::system((std::string(FERRO_CLI_PATH) + " " + args + " 2>/dev/null").c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    CHECK(run("solve --config " + cfg.string() + " --deterministic --seed 3") == 0);
    const Report r = parse_report(slurp(dir / "out" / "report.txt"));
    CHECK(*report_value(r, "config.solver.seed") == "3");
    CHECK(*report_value(r, "config.solver.deterministic") == "true");
    CHECK(run("verify --config " + cfg.string() + " --state " + (dir / "out").string()) == 0);
    CHECK(run("solve") == 64);
    CHECK(run("bogus --config x") == 64);
    CHECK(run("solve --config " + cfg.string() + " --threads 0") == 64);
    CHECK(run("solve --config " + (dir / "missing.cfg").string()) == 66);
    CHECK(run("sweep --config " + cfg.string()) == 64);
    CHECK(run("--help > /dev/null") == 0);
}
#endif
