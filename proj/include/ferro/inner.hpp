#pragma once

#include "ferro/errors.hpp"
#include "ferro/functional.hpp"

#include <vector>

namespace ferro {

struct InnerOptions {
    double tol = 1e-10;
    int max_iter = 20000;  // CG iterations (linear) or total inner CG iterations (Newton)
    int max_newton = 100;
    bool force_newton = false; // use the nonlinear path even for a linear law
};

struct InnerReport {
    int iterations = 0;        // CG iterations
    int newton_steps = 0;      // zero on the linear path
    double residual = 0.0;     // ||grad_u J|| over free nodes
    double tolerance = 0.0;    // tol (1 + ||rhs||)
    double objective = 0.0;
    double wallclock = 0.0;    // seconds
    bool converged = false;
    std::vector<double> objective_history; // accepted Newton iterates
};

struct InnerResult {
    PotentialField u;
    InnerReport report;
};

class InnerNonConvergence : public NonConvergence {
public:
    InnerNonConvergence(const std::string& what, PotentialField best, InnerReport report)
        : NonConvergence(what), best_(std::move(best)), report_(std::move(report)) {}
    const PotentialField& best() const noexcept { return best_; }
    const InnerReport& report() const noexcept { return report_; }

private:
    PotentialField best_;
    InnerReport report_;
};

/// Minimizes J(., rho) over potentials vanishing on the lateral wall.
///
/// Linear law: Jacobi-preconditioned CG on the weak form
/// int (mu rho + 1 - rho) grad u . grad v = int mu_drive v_z.
/// Langevin law: Newton-CG with Armijo backtracking (c = 1e-4, halving).
/// Stops once ||grad_u J|| <= tol (1 + ||rhs||). Throws IllPosed for rho
/// outside [0,1] and InnerNonConvergence at the iteration cap.
InnerResult solve_inner(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                        const DensityField& rho, const InnerOptions& options = {},
                        const PotentialField* warm_start = nullptr);

struct ObjectiveGradient {
    double value = 0.0;
    PotentialField gradient; // zero on lateral nodes
};

ObjectiveGradient objective_and_gradient(const DomainSpec& spec, const MagnetizationLaw& law,
                                         const PhysicalParams& params, const DensityField& rho,
                                         const PotentialField& u);

/// Right-hand side of the weak form: int mu_drive v_z for every free-node hat function v.
PotentialField drive_rhs(const DomainSpec& spec, const PhysicalParams& params);

/// Solves G^T W diag(coeff) G x = rhs over free nodes by Jacobi-PCG, where
/// W is the cell measure. Lateral entries of rhs are ignored and of x are 0.
/// Stops once ||residual|| <= tol (1 + ||rhs||).
InnerResult solve_weighted_poisson(const DomainSpec& spec, const CellField& coeff, const PotentialField& rhs,
                                   double tol, int max_iter, const PotentialField* warm_start = nullptr);

/// A(rho) u with coefficient mu rho + 1 - rho, restricted to free nodes.
PotentialField apply_linear_operator(const DomainSpec& spec, double mu_const, const DensityField& rho,
                                     const PotentialField& u);

} // namespace ferro
