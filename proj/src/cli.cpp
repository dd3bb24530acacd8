#include "ferro/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace ferro::cli {

ConfigError::ConfigError(const std::string& what, int line, int column, std::string key)
    : Error(line > 0 ? "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what : what),
      line_(line), column_(column), key_(std::move(key))
{
}

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        const std::string_view tok = trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start));
        out.emplace_back(tok);
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return out;
}

double to_double(const std::string& s)
{
    double v = 0.0;
    const char* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || s.empty() || !std::isfinite(v))
        throw ConfigError("expected a finite number, got '" + s + "'");
    return v;
}

template <class Int>
Int to_integer(const std::string& s)
{
    Int v{};
    const char* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end || s.empty())
        throw ConfigError("expected an integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& s)
{
    if (s == "true" || s == "1" || s == "yes")
        return true;
    if (s == "false" || s == "0" || s == "no")
        return false;
    throw ConfigError("expected true or false, got '" + s + "'");
}

std::vector<double> to_doubles(const std::string& s)
{
    std::vector<double> out;
    for (const auto& t : split_list(s))
        out.push_back(to_double(t));
    return out;
}

std::vector<int> to_ints(const std::string& s)
{
    std::vector<int> out;
    for (const auto& t : split_list(s))
        out.push_back(to_integer<int>(t));
    return out;
}

template <class T>
std::string join(const std::vector<T>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i)
            out += ",";
        if constexpr (std::is_same_v<T, double>)
            out += format_number(v[i]);
        else if constexpr (std::is_same_v<T, std::string>)
            out += v[i];
        else
            out += std::to_string(v[i]);
    }
    return out;
}

bool valid_key_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

std::string read_file(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw MissingInput("cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << text;
    if (!os)
        throw Error("write failed for " + path.string());
}

void require(bool ok, const char* key, const std::string& what)
{
    if (!ok)
        throw ConfigError(std::string(key) + ": " + what, 0, 0, key);
}

} // namespace

const std::vector<std::string>& config_keys()
{
    static const std::vector<std::string> keys{
        "domain.dim",          "domain.L",           "domain.n_horizontal",    "domain.n_z",
        "law.kind",            "law.mu",             "law.Ms",                 "law.gamma",
        "physics.b",           "physics.tau",        "physics.mu_drive",       "physics.p0_override",
        "solver.inner.tol",    "solver.inner.max_iter", "solver.outer.tol",    "solver.outer.max_iter",
        "solver.saddle.tol_gap", "solver.saddle.max_sweeps", "solver.saddle.theta", "solver.deterministic",
        "solver.seed",         "solver.probes",      "output.directory",       "output.formats",
    };
    return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value)
{
    auto& d = cfg.domain;
    auto& l = cfg.law;
    auto& p = cfg.physics;
    auto& s = cfg.solver;
    if (key == "domain.dim")
        d.dim = to_integer<int>(value);
    else if (key == "domain.L")
        d.L = to_doubles(value);
    else if (key == "domain.n_horizontal")
        d.n_horizontal = to_ints(value);
    else if (key == "domain.n_z")
        d.n_z = to_integer<int>(value);
    else if (key == "law.kind") {
        if (value == "linear")
            l.kind = LawKind::linear;
        else if (value == "langevin")
            l.kind = LawKind::langevin;
        else
            throw ConfigError("expected linear or langevin, got '" + value + "'");
    } else if (key == "law.mu")
        l.mu = to_double(value);
    else if (key == "law.Ms")
        l.Ms = to_double(value);
    else if (key == "law.gamma")
        l.gamma = to_double(value);
    else if (key == "physics.b")
        p.b = to_double(value);
    else if (key == "physics.tau")
        p.tau = to_double(value);
    else if (key == "physics.mu_drive")
        p.mu_drive = to_double(value);
    else if (key == "physics.p0_override")
        p.p0_override = to_double(value);
    else if (key == "solver.inner.tol")
        s.inner_tol = to_double(value);
    else if (key == "solver.inner.max_iter")
        s.inner_max_iter = to_integer<int>(value);
    else if (key == "solver.outer.tol")
        s.outer_tol = to_double(value);
    else if (key == "solver.outer.max_iter")
        s.outer_max_iter = to_integer<int>(value);
    else if (key == "solver.saddle.tol_gap")
        s.tol_gap = to_double(value);
    else if (key == "solver.saddle.max_sweeps")
        s.max_sweeps = to_integer<int>(value);
    else if (key == "solver.saddle.theta")
        s.theta = to_double(value);
    else if (key == "solver.deterministic")
        s.deterministic = to_bool(value);
    else if (key == "solver.seed")
        s.seed = to_integer<std::uint64_t>(value);
    else if (key == "solver.probes")
        s.probes = to_integer<int>(value);
    else if (key == "output.directory") {
        if (value.empty())
            throw ConfigError("empty directory");
        cfg.output.directory = value;
    } else if (key == "output.formats")
        cfg.output.formats = split_list(value);
    else
        throw ConfigError("unknown key '" + key + "'");
}

std::string get_config_value(const RunConfig& cfg, const std::string& key)
{
    const auto& d = cfg.domain;
    const auto& l = cfg.law;
    const auto& p = cfg.physics;
    const auto& s = cfg.solver;
    if (key == "domain.dim")
        return std::to_string(d.dim);
    if (key == "domain.L")
        return join(d.L);
    if (key == "domain.n_horizontal")
        return join(d.n_horizontal);
    if (key == "domain.n_z")
        return std::to_string(d.n_z);
    if (key == "law.kind")
        return l.kind == LawKind::linear ? "linear" : "langevin";
    if (key == "law.mu")
        return format_number(l.mu);
    if (key == "law.Ms")
        return format_number(l.Ms);
    if (key == "law.gamma")
        return format_number(l.gamma);
    if (key == "physics.b")
        return format_number(p.b);
    if (key == "physics.tau")
        return format_number(p.tau);
    if (key == "physics.mu_drive")
        return p.mu_drive ? format_number(*p.mu_drive) : std::string();
    if (key == "physics.p0_override")
        return p.p0_override ? format_number(*p.p0_override) : std::string();
    if (key == "solver.inner.tol")
        return format_number(s.inner_tol);
    if (key == "solver.inner.max_iter")
        return std::to_string(s.inner_max_iter);
    if (key == "solver.outer.tol")
        return format_number(s.outer_tol);
    if (key == "solver.outer.max_iter")
        return std::to_string(s.outer_max_iter);
    if (key == "solver.saddle.tol_gap")
        return format_number(s.tol_gap);
    if (key == "solver.saddle.max_sweeps")
        return std::to_string(s.max_sweeps);
    if (key == "solver.saddle.theta")
        return format_number(s.theta);
    if (key == "solver.deterministic")
        return s.deterministic ? "true" : "false";
    if (key == "solver.seed")
        return std::to_string(s.seed);
    if (key == "solver.probes")
        return std::to_string(s.probes);
    if (key == "output.directory")
        return cfg.output.directory;
    if (key == "output.formats")
        return join(cfg.output.formats);
    throw ConfigError("unknown key '" + key + "'");
}

void RunConfig::validate() const
{
    require(domain.dim == 2 || domain.dim == 3, "domain.dim", "must be 2 or 3");
    const std::size_t nh = static_cast<std::size_t>(domain.dim - 1);
    require(domain.L.size() == nh, "domain.L", "needs one value per horizontal axis");
    require(domain.n_horizontal.size() == nh, "domain.n_horizontal", "needs one value per horizontal axis");
    for (double v : domain.L)
        require(v > 0.0, "domain.L", "extents must be positive");
    for (int n : domain.n_horizontal)
        require(n >= 2, "domain.n_horizontal", "resolution must be >= 2");
    require(domain.n_z >= 2, "domain.n_z", "resolution must be >= 2");
    if (law.kind == LawKind::linear) {
        require(law.mu > 1.0, "law.mu", "linear law needs mu > 1");
    } else {
        require(law.Ms > 0.0, "law.Ms", "must be positive");
        require(law.gamma > 0.0, "law.gamma", "must be positive");
    }
    require(physics.b > 0.0, "physics.b", "must be positive");
    require(physics.tau > 0.0, "physics.tau", "must be positive");
    // zero drive is admitted: it is the analytic flat-layer state
    if (physics.mu_drive)
        require(*physics.mu_drive >= 0.0, "physics.mu_drive", "must be non-negative");
    require(solver.inner_tol > 0.0, "solver.inner.tol", "must be positive");
    require(solver.inner_max_iter >= 1, "solver.inner.max_iter", "must be >= 1");
    require(solver.outer_tol > 0.0, "solver.outer.tol", "must be positive");
    require(solver.outer_max_iter >= 1, "solver.outer.max_iter", "must be >= 1");
    require(solver.tol_gap >= 0.0 && solver.tol_gap < 1.0, "solver.saddle.tol_gap", "must lie in [0, 1)");
    require(solver.max_sweeps >= 1, "solver.saddle.max_sweeps", "must be >= 1");
    require(solver.theta > 0.0, "solver.saddle.theta", "must be positive");
    require(solver.probes >= 0, "solver.probes", "must be >= 0");
    require(!output.directory.empty(), "output.directory", "must not be empty");
    require(!output.formats.empty(), "output.formats", "must not be empty");
    for (const auto& f : output.formats)
        require(f == "csv" || f == "grid", "output.formats", "unknown format '" + f + "'");
}

DomainSpec RunConfig::spec() const
{
    if (domain.dim == 2)
        return DomainSpec::make_2d(domain.L.at(0), domain.n_horizontal.at(0), domain.n_z);
    return DomainSpec::make_3d(domain.L.at(0), domain.L.at(1), domain.n_horizontal.at(0), domain.n_horizontal.at(1),
                               domain.n_z);
}

MagnetizationLaw RunConfig::magnetization_law() const
{
    return law.kind == LawKind::linear ? MagnetizationLaw::linear(law.mu) : MagnetizationLaw::langevin(law.Ms, law.gamma);
}

PhysicalParams RunConfig::params() const
{
    return PhysicalParams::from_law(magnetization_law(), physics.b, physics.tau, physics.mu_drive, physics.p0_override);
}

SaddleOptions RunConfig::saddle_options() const
{
    SaddleOptions o;
    o.inner.tol = solver.inner_tol;
    o.inner.max_iter = solver.inner_max_iter;
    o.outer.tol = solver.outer_tol;
    o.outer.max_iter = solver.outer_max_iter;
    o.tol_gap = solver.tol_gap;
    o.max_sweeps = solver.max_sweeps;
    o.theta = solver.theta;
    return o;
}

RunConfig parse_config(std::string_view text)
{
    RunConfig cfg;
    struct Position {
        int line;
        int column;
    };
    std::map<std::string, Position> seen;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        const std::size_t hash = line.find('#');
        if (hash != std::string_view::npos)
            line = line.substr(0, hash);
        if (trim(line).empty())
            continue;

        const std::size_t key_begin = line.find_first_not_of(" \t");
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("expected 'key = value'", line_no, static_cast<int>(line.size()) + 1);
        const std::string_view raw_key = line.substr(key_begin, eq - key_begin);
        const std::string key(trim(raw_key));
        if (key.empty())
            throw ConfigError("missing key before '='", line_no, static_cast<int>(eq) + 1);
        for (std::size_t i = 0; i < key.size(); ++i)
            if (!valid_key_char(key[i]))
                throw ConfigError("invalid character in key", line_no, static_cast<int>(key_begin + i) + 1, key);
        const int key_col = static_cast<int>(key_begin) + 1;
        if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end())
            throw ConfigError("unknown key '" + key + "'", line_no, key_col, key);
        if (seen.count(key))
            throw ConfigError("duplicate key '" + key + "' (first on line " + std::to_string(seen[key].line) + ")",
                              line_no, key_col, key);

        const std::string_view rest = line.substr(eq + 1);
        const std::size_t off = rest.find_first_not_of(" \t");
        const int value_col = static_cast<int>(eq + 1 + (off == std::string_view::npos ? rest.size() : off)) + 1;
        const std::string value(trim(rest));
        if (value.empty())
            throw ConfigError("missing value for '" + key + "'", line_no, value_col, key);
        try {
            set_config_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(e.what(), line_no, value_col, key);
        }
        seen[key] = Position{line_no, value_col};
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        const auto it = seen.find(e.key());
        if (it != seen.end())
            throw ConfigError(e.what(), it->second.line, it->second.column, e.key());
        throw;
    }
    return cfg;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string format_config(const RunConfig& cfg)
{
    std::string out;
    for (const auto& key : config_keys()) {
        const std::string v = get_config_value(cfg, key);
        if (!v.empty())
            out += key + " = " + v + "\n";
    }
    return out;
}

std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_report(const Report& r)
{
    std::string out;
    for (const auto& [k, v] : r)
        out += k + " = " + v + "\n";
    return out;
}

Report parse_report(std::string_view text)
{
    Report r;
    std::istringstream is{std::string(text)};
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos)
            throw MissingInput("malformed report line '" + line + "'");
        r.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return r;
}

const std::string* report_value(const Report& r, const std::string& key)
{
    for (const auto& [k, v] : r)
        if (k == key)
            return &v;
    return nullptr;
}

RunConfig config_from_report(const Report& r)
{
    std::string text;
    const std::string prefix = "config.";
    for (const auto& [k, v] : r)
        if (k.rfind(prefix, 0) == 0)
            text += k.substr(prefix.size()) + " = " + v + "\n";
    return parse_config(text);
}

namespace {

void add_verify(Report& r, const std::string& prefix, const VerifyReport& v)
{
    for (const auto& it : v.items) {
        r.emplace_back(prefix + it.name + ".measured", format_number(it.measured));
        r.emplace_back(prefix + it.name + ".bound", format_number(it.bound));
        r.emplace_back(prefix + it.name + ".pass", it.pass ? "true" : "false");
        r.emplace_back(prefix + it.name + ".mandatory", it.mandatory ? "true" : "false");
    }
    r.emplace_back(prefix + "all_pass", v.all_pass() ? "true" : "false");
}

void add_config(Report& r, const RunConfig& cfg)
{
    for (const auto& key : config_keys()) {
        const std::string v = get_config_value(cfg, key);
        if (!v.empty())
            r.emplace_back("config." + key, v);
    }
}

struct FieldFile {
    const char* name;
    FieldLocation loc;
};

void export_field(const RunConfig& cfg, const DomainSpec& spec, const fs::path& dir, const FieldFile& f,
                  std::span<const double> values)
{
    for (const auto& fmt : cfg.output.formats) {
        if (fmt == "csv")
            write_csv((dir / (std::string(f.name) + ".csv")).string(), spec, f.loc, values);
        else
            write_grid_ascii((dir / (std::string(f.name) + ".grid")).string(), spec, f.loc, values);
    }
}

std::vector<double> import_field(const DomainSpec& spec, const fs::path& dir, const std::string& name,
                                 FieldLocation loc)
{
    const fs::path csv = dir / (name + ".csv");
    const fs::path grid = dir / (name + ".grid");
    try {
        if (fs::exists(csv))
            return read_csv(csv.string(), spec, loc);
        if (fs::exists(grid))
            return read_grid_ascii(grid.string(), spec, loc);
    } catch (const Error& e) {
        throw MissingInput(e.what());
    }
    throw MissingInput("missing state file " + csv.string());
}

void print_error(const std::exception& e) { std::cerr << "ferro: " << e.what() << "\n"; }

} // namespace

VerifyReport verify_state(const RunConfig& cfg, const PotentialField& u, const DensityField& chi,
                          const PotentialField& u_chi, Report* diagnostics)
{
    const DomainSpec spec = cfg.spec();
    const MagnetizationLaw law = cfg.magnetization_law();
    const PhysicalParams params = cfg.params();
    const SaddleOptions opt = cfg.saddle_options();
    const int probes = cfg.solver.probes;

    // one generator, recorded through its seed, feeds every probe set
    std::mt19937_64 gen(cfg.solver.seed);
    const std::uint64_t seed_saddle = gen();
    const std::uint64_t seed_duality = gen();
    const std::uint64_t seed_energy = gen();

    // a converged gap bounds both saddle violations by tol_gap (1 + |m*|),
    // and |m*| <= |J0| + gap
    const double tol = cfg.solver.tol_gap / (1.0 - cfg.solver.tol_gap) + 1e-12;
    VerifyReport v = check_saddle(spec, law, params, u, chi, probes, seed_saddle, tol);
    v.append(verify_norm_bound(spec, params, u));
    v.append(verify_bottom_distance(spec, law, params, chi));
    v.append(nontriviality_check(spec, law, params, chi));
    if (law.kind() == LawKind::linear) {
        v.append(verify_duality_linear(spec, params, law.mu_const(), chi, opt.inner, probes, seed_duality));
        v.append(verify_energy_minimality(spec, params, law.mu_const(), u_chi, chi, probes, seed_energy));
    }

    if (diagnostics) {
        Report& d = *diagnostics;
        const BubbleCensus bc = bubble_census(spec, chi);
        d.emplace_back("diagnostic.bubbles.fluid_components", std::to_string(bc.fluid_components));
        d.emplace_back("diagnostic.bubbles.air_components", std::to_string(bc.air_components));
        d.emplace_back("diagnostic.bubbles.enclosed_air", std::to_string(bc.enclosed_air));
        try {
            const HeightField eta = graph_from_indicator(spec, chi);
            const FreeSurfaceResidual fs = free_surface_residual(spec, law, params, u_chi, eta);
            d.emplace_back("diagnostic.graph_like", "true");
            d.emplace_back("diagnostic.free_surface.norm", format_number(fs.norm));
            d.emplace_back("diagnostic.free_surface.norm_mean_free", format_number(fs.norm_mean_free));
            d.emplace_back("diagnostic.free_surface.mean", format_number(fs.mean));
            d.emplace_back("diagnostic.free_surface.max_jump", format_number(fs.max_jump));
        } catch (const NotAGraph&) {
            d.emplace_back("diagnostic.graph_like", "false");
        }
    }
    return v;
}

RunOutcome solve_run(const RunConfig& cfg)
{
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const DomainSpec spec = cfg.spec();
    const MagnetizationLaw law = cfg.magnetization_law();
    const PhysicalParams params = cfg.params();

    RunOutcome out;
    try {
        out.state = run_saddle(spec, law, params, cfg.saddle_options());
        out.converged = true;
    } catch (const SaddleNonConvergence& e) {
        out.state = e.state();
    }
    const SaddleState& st = out.state;

    const fs::path dir(cfg.output.directory);
    fs::create_directories(dir);
    export_field(cfg, spec, dir, {"u", FieldLocation::node}, st.u.values());
    export_field(cfg, spec, dir, {"u_chi", FieldLocation::node}, st.u_chi.values());
    export_field(cfg, spec, dir, {"rho", FieldLocation::cell}, st.rho.values());
    export_field(cfg, spec, dir, {"chi", FieldLocation::cell}, st.chi.values());
    export_field(cfg, spec, dir, {"chi_upper", FieldLocation::cell}, st.chi_upper.values());
    const fs::path eta_csv = dir / "eta.csv";
    const fs::path eta_grid = dir / "eta.grid";
    try {
        const HeightField eta = graph_from_indicator(spec, st.chi);
        export_field(cfg, spec, dir, {"eta", FieldLocation::column}, eta.values());
    } catch (const NotAGraph&) {
        // stale height maps from an earlier run would misdescribe this state
        fs::remove(eta_csv);
        fs::remove(eta_grid);
    }

    Report diag;
    out.verify = verify_state(cfg, st.u, st.chi, st.u_chi, &diag);
    out.exit_code = !out.converged ? exit_non_convergence : (out.verify.all_pass() ? exit_ok : exit_verification);

    Report& r = out.report;
    r.emplace_back("run.status", out.converged ? (out.verify.all_pass() ? "ok" : "verification_failed")
                                               : "not_converged");
    r.emplace_back("run.exit_code", std::to_string(out.exit_code));
    r.emplace_back("run.seed", std::to_string(cfg.solver.seed));
    r.emplace_back("run.sweeps", std::to_string(st.sweeps));
    r.emplace_back("summary.converged", out.converged ? "true" : "false");
    r.emplace_back("summary.lower", format_number(st.lower));
    r.emplace_back("summary.upper", format_number(st.upper));
    r.emplace_back("summary.gap", format_number(st.gap));
    r.emplace_back("summary.relative_gap", format_number(st.gap / (1.0 + std::abs(st.upper))));
    r.emplace_back("summary.relaxed_lower", format_number(st.relaxed_lower));
    r.emplace_back("summary.relaxed_upper", format_number(st.relaxed_upper));
    r.emplace_back("summary.relaxed_gap", format_number(st.relaxed_gap));
    r.emplace_back("summary.non_monotone", st.non_monotone ? "true" : "false");
    r.emplace_back("summary.u_norm", format_number(gradient_norm(spec, st.u)));
    r.emplace_back("summary.p0", format_number(params.p0));
    r.emplace_back("summary.mu_drive", format_number(params.mu_drive));
    r.emplace_back("history.count", std::to_string(st.history.size()));
    for (const auto& h : st.history) {
        const std::string p = "history." + std::to_string(h.sweep) + ".";
        r.emplace_back(p + "lower", format_number(h.lower));
        r.emplace_back(p + "upper", format_number(h.upper));
        r.emplace_back(p + "current", format_number(h.current));
        r.emplace_back(p + "relaxed_lower", format_number(h.relaxed_lower));
        r.emplace_back(p + "relaxed_upper", format_number(h.relaxed_upper));
        r.emplace_back(p + "gap", format_number(h.gap));
        r.emplace_back(p + "sweep_gap", format_number(h.sweep_gap));
        r.emplace_back(p + "u_norm", format_number(h.u_norm));
        r.emplace_back(p + "volume", format_number(h.volume));
        r.emplace_back(p + "theta", format_number(h.theta));
    }
    add_verify(r, "verify.", out.verify);
    r.insert(r.end(), diag.begin(), diag.end());
    if (!cfg.solver.deterministic)
        r.emplace_back("run.wallclock",
                       format_number(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()));
    add_config(r, cfg);
    write_file(dir / "report.txt", format_report(r));
    return out;
}

SweepAxis parse_sweep_axis(const std::string& text)
{
    const std::size_t eq = text.find('=');
    if (eq == std::string::npos)
        throw ConfigError("sweep axis '" + text + "' must read key=v1,v2,...");
    SweepAxis a;
    a.key = std::string(trim(std::string_view(text).substr(0, eq)));
    if (std::find(config_keys().begin(), config_keys().end(), a.key) == config_keys().end())
        throw ConfigError("unknown sweep key '" + a.key + "'");
    const std::string_view list = trim(std::string_view(text).substr(eq + 1));
    if (list.empty())
        throw ConfigError("empty value list for '" + a.key + "'");
    a.values = split_list(list);
    for (const auto& v : a.values)
        if (v.empty())
            throw ConfigError("empty value in list for '" + a.key + "'");
    return a;
}

namespace {

RunConfig apply_overrides(RunConfig cfg, const Overrides& ov)
{
    if (ov.out)
        cfg.output.directory = *ov.out;
    if (ov.deterministic)
        cfg.solver.deterministic = true;
    if (ov.seed)
        cfg.solver.seed = *ov.seed;
    return cfg;
}

template <class F>
int guarded(F&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        print_error(e);
        return exit_usage;
    } catch (const MissingInput& e) {
        print_error(e);
        return exit_missing_input;
    } catch (const NonConvergence& e) {
        print_error(e);
        return exit_non_convergence;
    } catch (const IllPosed& e) {
        print_error(e);
        return exit_usage;
    } catch (const std::exception& e) {
        print_error(e);
        return exit_missing_input;
    }
}

} // namespace

int cmd_solve(const std::string& config_path, const Overrides& ov)
{
    return guarded([&] {
        const RunConfig cfg = apply_overrides(load_config(config_path), ov);
        const RunOutcome r = solve_run(cfg);
        std::cerr << "ferro solve: " << *report_value(r.report, "run.status") << ", sweeps " << r.state.sweeps
                  << ", gap " << r.state.gap << "\n";
        return r.exit_code;
    });
}

int cmd_verify(const std::string& config_path, const std::string& state_dir, const Overrides& ov)
{
    return guarded([&] {
        RunConfig cfg = apply_overrides(load_config(config_path), ov);
        const DomainSpec spec = cfg.spec();
        const fs::path dir(state_dir);
        if (!fs::is_directory(dir))
            throw MissingInput("state directory " + state_dir + " not found");
        const PotentialField u(import_field(spec, dir, "u", FieldLocation::node));
        const DensityField chi(import_field(spec, dir, "chi", FieldLocation::cell));
        const PotentialField u_chi(import_field(spec, dir, "u_chi", FieldLocation::node));
        for (double v : chi)
            if (v != 0.0 && v != 1.0)
                throw MissingInput("chi in " + state_dir + " is not an indicator");

        Report r;
        Report diag;
        const VerifyReport v = verify_state(cfg, u, chi, u_chi, &diag);
        const int code = v.all_pass() ? exit_ok : exit_verification;
        r.emplace_back("verify.status", v.all_pass() ? "ok" : "verification_failed");
        r.emplace_back("verify.exit_code", std::to_string(code));
        r.emplace_back("run.seed", std::to_string(cfg.solver.seed));
        add_verify(r, "verify.", v);
        r.insert(r.end(), diag.begin(), diag.end());
        add_config(r, cfg);
        const fs::path out_dir = ov.out ? fs::path(*ov.out) : dir;
        fs::create_directories(out_dir);
        write_file(out_dir / "verify.txt", format_report(r));
        for (const auto& it : v.items)
            if (it.mandatory && !it.pass)
                std::cerr << "ferro verify: " << it.name << " failed, measured " << it.measured << " bound "
                          << it.bound << "\n";
        return code;
    });
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& axis_texts, const Overrides& ov)
{
    return guarded([&]() -> int {
        const RunConfig base = apply_overrides(load_config(config_path), ov);
        if (axis_texts.empty())
            throw ConfigError("sweep needs at least one key=v1,v2,... axis");
        std::vector<SweepAxis> axes;
        for (const auto& t : axis_texts)
            axes.push_back(parse_sweep_axis(t));

        // Cartesian product, last axis fastest
        std::vector<std::vector<std::string>> combos{{}};
        for (const auto& a : axes) {
            std::vector<std::vector<std::string>> next;
            for (const auto& c : combos)
                for (const auto& v : a.values) {
                    auto e = c;
                    e.push_back(v);
                    next.push_back(std::move(e));
                }
            combos = std::move(next);
        }

        const fs::path root(base.output.directory);
        std::vector<RunConfig> configs;
        for (std::size_t i = 0; i < combos.size(); ++i) {
            RunConfig c = base;
            for (std::size_t a = 0; a < axes.size(); ++a)
                set_config_value(c, axes[a].key, combos[i][a]);
            char name[32];
            std::snprintf(name, sizeof name, "run_%03zu", i);
            c.output.directory = (root / name).string();
            c.validate();
            configs.push_back(std::move(c));
        }

        std::vector<RunOutcome> results(configs.size());
        std::vector<std::string> errors(configs.size());
        std::atomic<std::size_t> next{0};
        std::mutex log;
        auto worker = [&] {
            for (std::size_t i = next++; i < configs.size(); i = next++) {
                try {
                    results[i] = solve_run(configs[i]);
                } catch (const std::exception& e) {
                    results[i].exit_code = exit_non_convergence;
                    errors[i] = e.what();
                }
                std::lock_guard<std::mutex> lock(log);
                std::cerr << "ferro sweep: " << configs[i].output.directory << " exit " << results[i].exit_code
                          << (errors[i].empty() ? "" : " (" + errors[i] + ")") << "\n";
            }
        };
        const int n_threads = std::max(1, std::min<int>(ov.threads, static_cast<int>(configs.size())));
        std::vector<std::thread> pool;
        for (int t = 1; t < n_threads; ++t)
            pool.emplace_back(worker);
        worker();
        for (auto& t : pool)
            t.join();

        std::string csv = "run";
        for (const auto& a : axes)
            csv += "," + a.key;
        csv += ",exit_code,converged,sweeps,lower,upper,gap,relative_gap,u_norm,norm_bound,norm_margin,"
               "bottom_distance,bottom_bound,bottom_margin,verify_pass\n";
        bool any_failed = false;
        for (std::size_t i = 0; i < configs.size(); ++i) {
            const RunOutcome& r = results[i];
            any_failed = any_failed || r.exit_code != exit_ok;
            const auto item = [&](const char* name) -> std::pair<std::string, std::string> {
                const VerifyItem* it = r.verify.find(name);
                if (!it)
                    return {"nan", "nan"};
                return {format_number(it->measured), format_number(it->bound)};
            };
            const auto margin = [&](const char* name) {
                const VerifyItem* it = r.verify.find(name);
                return it ? format_number(it->bound - it->measured) : std::string("nan");
            };
            const auto [un, ub] = item("norm_bound");
            const auto [bd, bb] = item("bottom_distance");
            const SaddleState& s = r.state;
            csv += std::to_string(i);
            for (const auto& v : combos[i])
                csv += "," + v;
            csv += "," + std::to_string(r.exit_code) + "," + (r.converged ? "true" : "false") + "," +
                   std::to_string(s.sweeps) + "," + format_number(s.lower) + "," + format_number(s.upper) + "," +
                   format_number(s.gap) + "," + format_number(s.gap / (1.0 + std::abs(s.upper))) + "," + un + "," +
                   ub + "," + margin("norm_bound") + "," + bd + "," + bb + "," + margin("bottom_distance") + "," +
                   (errors[i].empty() && r.verify.all_pass() ? "true" : "false") + "\n";
        }
        fs::create_directories(root);
        write_file(root / "sweep.csv", csv);
        return any_failed ? exit_non_convergence : exit_ok;
    });
}

} // namespace ferro::cli
