/**
 * \file pipeline.hpp
 * \brief Experiment orchestration behind the command-line front end:
 *        validation, solves, assembly, differences, fits and the acceptance checks.
 */
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qlab/asymptotics.hpp"
#include "qlab/error.hpp"
#include "qlab/problem.hpp"
#include "qlab/solver.hpp"
#include "report.hpp"

namespace qlab::tools {

/// Process exit codes shared by every subcommand.
enum ExitCode : int { kPass = 0, kConstraintFail = 1, kInputError = 2, kDivergence = 3 };

/// Everything a run depends on; a fixed manifest reproduces every emitted number.
struct RunManifest {
  std::string command;
  std::string spec_path;                 ///< empty: the bundled reference instance
  std::filesystem::path out_dir = "qlab_out";
  unsigned seed = 1;
  std::string subset = "all";            ///< comma-separated stage names or "all"
  double eps_decades = 3.0;
  double grid_density = 1.0;             ///< scales radial oversampling and the m-grid
  int iota = 12;
  double overlap = 0.05;
  std::optional<double> eps;             ///< |eps| of single-point commands; default eps0 / 2
  std::optional<double> eps_top;         ///< top of the eps ladder; default eps0
  std::optional<int> overlap_index;      ///< overlap of diff; default the first root crossing
  std::string covering = "outer";        ///< outer or inner
  std::string data_path;                 ///< input table of the fit command
  std::string model = "q_gevrey";        ///< gevrey, q_gevrey or mixed
  double gevrey_s = 1.0;
  double inverse_power = 0.0;
};

/// Stage names accepted by --subset.
const std::set<std::string>& known_stages();
/// Parses the subset list; throws InputError for unknown names.
std::set<std::string> parse_subset(const std::string& subset);

/// The spec of a manifest and the solver options derived from it.
struct RunContext {
  RunManifest manifest;
  ProblemSpec spec;
  SolverOptions solver;
  std::ostream* log = nullptr;
};

/// Loads the spec (InputError on failure) and scales the solver options.
RunContext make_context(const RunManifest& m, std::ostream* log);

/// The outer (t2 bounded) or inner (t2 = x2 / eps^mu2) covering used by the runs.
SectorCovering run_covering(const RunContext& ctx, CoveringKind kind);
/// Evaluation point of the cocycles for a covering kind.
CocyclePoint run_point(CoveringKind kind);
/// Index of the sector whose closed argument range contains arg.
int sector_containing(const SectorCovering& cov, double arg);

/// Thrown by stages when the fixed-point iteration diverges; carries the failing sector and eps.
class StageDivergence : public Error {
 public:
  StageDivergence(const std::string& what, int h, cplx eps) : Error(what), h_(h), eps_(eps) {}
  int h() const noexcept { return h_; }
  cplx eps() const noexcept { return eps_; }

 private:
  int h_;
  cplx eps_;
};

// ------------------------------------------------------------ checks ----

CheckResult check_theta_functional(unsigned seed);
CheckResult check_theta_lower_bound();
CheckResult check_lambert(unsigned seed);
CheckResult check_borel_laplace();
CheckResult check_operator_identities(const RunContext& ctx, const OmegaField& omega);
CheckResult check_fixed_point(const RunContext& ctx, const SectorCovering& cov);
CheckResult check_full_residual(const RunContext& ctx, const OmegaField& omega);
CheckResult check_contour(const RunContext& ctx, const SectorCovering& cov);
CheckResult check_envelope(const RunContext& ctx);
CheckResult check_outer_law(const RunContext& ctx, const SectorCovering& cov);
CheckResult check_inner_law(const RunContext& ctx, const SectorCovering& cov);
CheckResult check_synthetic_fits();
CheckResult check_u_bounds(const RunContext& ctx, const OmegaField& omega);

// ----------------------------------------------------------- commands ----

int cmd_validate(const RunContext& ctx);
int cmd_solve(const RunContext& ctx);
int cmd_assemble(const RunContext& ctx);
int cmd_diff(const RunContext& ctx);
int cmd_fit(const RunContext& ctx);
int cmd_rs_check(const RunContext& ctx);
int cmd_theta_check(const RunContext& ctx);
int cmd_lambertw_check(const RunContext& ctx);
int cmd_envelope_check(const RunContext& ctx);
/// Runs the enabled stages, writes their tables and summary.json; 0 iff every check passes.
int cmd_pipeline(const RunContext& ctx);

/// Dispatches a manifest to its command with the documented exit codes.
int run_command(const RunManifest& m, std::ostream& log);

}  // namespace qlab::tools
