#pragma once

#include "ferro/errors.hpp"
#include "ferro/saddle.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ferro::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_non_convergence = 2,
    exit_verification = 3,
    exit_usage = 64,
    exit_missing_input = 66,
};

/// Malformed or inadmissible configuration. line and column are 1-based;
/// zero when the error is not tied to a position in a file.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, int line = 0, int column = 0, std::string key = {});
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }
    const std::string& key() const noexcept { return key_; }

private:
    int line_;
    int column_;
    std::string key_;
};

/// Unreadable config file or missing/corrupt saved state.
class MissingInput : public Error {
public:
    using Error::Error;
};

struct RunConfig {
    struct Domain {
        int dim = 2;
        std::vector<double> L{1.0};         // horizontal extents, dim - 1 values
        std::vector<int> n_horizontal{64};  // cells per horizontal axis
        int n_z = 128;
        friend bool operator==(const Domain&, const Domain&) = default;
    };
    struct Law {
        LawKind kind = LawKind::linear;
        double mu = 2.0;
        double Ms = 1.0;
        double gamma = 1.0;
        friend bool operator==(const Law&, const Law&) = default;
    };
    struct Physics {
        double b = 1.0;
        double tau = 0.1;
        std::optional<double> mu_drive;     // default mu(1)
        std::optional<double> p0_override;  // default from the law
        friend bool operator==(const Physics&, const Physics&) = default;
    };
    struct Solver {
        double inner_tol = 1e-10;
        int inner_max_iter = 20000;
        double outer_tol = 1e-5;
        int outer_max_iter = 5000;
        double tol_gap = 1e-3;
        int max_sweeps = 100;
        double theta = 0.5;
        bool deterministic = false;
        std::uint64_t seed = 1;
        int probes = 20;
        friend bool operator==(const Solver&, const Solver&) = default;
    };
    struct Output {
        std::string directory = "out";
        std::vector<std::string> formats{"csv"};  // csv, grid
        friend bool operator==(const Output&, const Output&) = default;
    };

    Domain domain;
    Law law;
    Physics physics;
    Solver solver;
    Output output;

    /// Throws ConfigError naming the offending key.
    void validate() const;

    DomainSpec spec() const;
    MagnetizationLaw magnetization_law() const;
    PhysicalParams params() const;
    SaddleOptions saddle_options() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Every key accepted by the parser, in the order format_config writes them.
const std::vector<std::string>& config_keys();

/// Flat `key = value` lines with `#` comments. Unknown keys, duplicates and
/// bad values throw ConfigError with the line and column of the offending token.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);
std::string format_config(const RunConfig& cfg);

/// Assigns one key from its textual value; used for sweep overrides.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// Ordered key/value pairs of a run or verify report.
using Report = std::vector<std::pair<std::string, std::string>>;

std::string format_number(double v);
std::string format_report(const Report& r);
Report parse_report(std::string_view text);
const std::string* report_value(const Report& r, const std::string& key);

/// Recovers the RunConfig echoed under the `config.` prefix.
RunConfig config_from_report(const Report& r);

struct RunOutcome {
    int exit_code = exit_ok;
    bool converged = false;
    SaddleState state;
    VerifyReport verify;
    Report report;
};

/// Verification suite of a solved state: saddle probes, norm and bottom
/// bounds, nontriviality, linear duality and energy probes, plus reported
/// diagnostics (bubble census, free-surface residual).
VerifyReport verify_state(const RunConfig& cfg, const PotentialField& u, const DensityField& chi,
                          const PotentialField& u_chi, Report* diagnostics = nullptr);

/// Solves, exports fields to cfg.output.directory and writes report.txt.
RunOutcome solve_run(const RunConfig& cfg);

struct Overrides {
    std::optional<std::string> out;
    bool deterministic = false;
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

struct SweepAxis {
    std::string key;
    std::vector<std::string> values;
};

/// "key=v1,v2,..." ; an empty list throws ConfigError.
SweepAxis parse_sweep_axis(const std::string& text);

int cmd_solve(const std::string& config_path, const Overrides& ov);
int cmd_verify(const std::string& config_path, const std::string& state_dir, const Overrides& ov);
int cmd_sweep(const std::string& config_path, const std::vector<std::string>& axes, const Overrides& ov);

} // namespace ferro::cli
