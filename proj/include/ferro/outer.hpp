#pragma once

#include "ferro/errors.hpp"
#include "ferro/grid.hpp"

namespace ferro {

enum class OuterMode { relaxed, binary };

struct OuterOptions {
    double tol = 1e-5;          // certified duality gap, relative to |D|
    int max_iter = 5000;        // primal-dual iterations
    int max_bisection = 100;    // volume bisection for the small-grid seeds
    OuterMode mode = OuterMode::binary;
    bool local_search = true;   // pair-swap polish of the thresholded indicator
};

struct OuterReport {
    int iterations = 0;          // primal-dual iterations, all multipliers
    double relaxed_value = 0.0;  // w <g, rho> - tau TV(rho), relaxed density
    double binary_value = 0.0;   // same, binarized indicator (binary mode)
    double upper_bound = 0.0;    // certified bound on the relaxed maximum
    double volume_error = 0.0;   // |volume - V| of the returned field
    double residual = 0.0;       // primal-dual gap at the final multiplier(s)
    double lambda = 0.0;         // volume multiplier
    int swaps = 0;               // improving swaps in the local search
};

struct OuterResult {
    DensityField rho;      // binary in binary mode, relaxed otherwise
    DensityField relaxed;  // relaxed maximizer
    CellVectorField dual;  // dual field of the perimeter term, |p_c| <= tau
    OuterReport report;
};

class OuterNonConvergence : public NonConvergence {
public:
    OuterNonConvergence(const std::string& what, OuterResult best)
        : NonConvergence(what), best_(std::move(best)) {}
    const OuterResult& best() const noexcept { return best_; }

private:
    OuterResult best_;
};

/// w <g, rho> - tau TV(rho), the rho-dependent part of J(u, rho).
double outer_objective(const DomainSpec& spec, const CellField& g, double tau, const DensityField& rho);

/// Maximizes outer_objective over 0 <= rho <= 1 with volume(rho) = V.
///
/// First-order primal-dual iteration on the perimeter term with exact
/// projection onto the volume-constrained box; the certified bound is the
/// bathtub value of g - D^T p. tau = 0 is solved exactly by bathtub_oracle.
/// Binary mode thresholds several candidates (relaxed maximizer, dual-adjusted
/// gain, plain gain, and on small grids the fixed-multiplier level sets),
/// polishes them by improving pair swaps and keeps the best. `warm` supplies
/// a starting density and dual field.
OuterResult solve_outer(const DomainSpec& spec, const CellField& g, double tau, double V,
                        const OuterOptions& options = {}, const OuterResult* warm = nullptr);

/// Proximal outer step: maximizes outer_objective(rho) - (w / 2 eta) |rho - center|^2
/// over the volume-constrained box, w the cell measure. Strongly concave, so the
/// accelerated primal-dual iteration applies. `report.residual` is the
/// primal-dual gap reached (same units as outer_objective).
OuterResult solve_outer_proximal(const DomainSpec& spec, const CellField& g, double tau, double V,
                                 const DensityField& center, double eta, const OuterOptions& options = {},
                                 const OuterResult* warm = nullptr);

struct FixedMultiplierResult {
    DensityField rho;
    CellVectorField p;  // dual variable, |p_c| <= tau
    double gap = 0.0;   // per-cell-measure units
    int iterations = 0;
};

/// Minimizes tau sum|D rho| - sum (g - lambda) rho over the box (per unit cell measure).
FixedMultiplierResult solve_fixed_multiplier(const DomainSpec& spec, const CellField& g, double tau, double lambda,
                                             double tol, int max_iter, const FixedMultiplierResult* warm = nullptr);

/// Fills the cells with largest g (ties to the lower cell index) up to
/// volume V; the last cell is fractional when V is not a whole number of cells.
DensityField bathtub_oracle(const DomainSpec& spec, const CellField& g, double V);

/// Indicator of the round(V / cell measure) cells with largest rho; ties go
/// to the lowest z layer, then to the lower cell index.
DensityField binarize(const DomainSpec& spec, const DensityField& rho, double V);

/// Improving pair swaps (one filled cell emptied, one empty cell filled) until
/// none gains more than a roundoff threshold. Candidate cells are those on the
/// interface, or all cells when the grid has at most `all_cells_below` cells.
/// Returns the number of accepted swaps.
int swap_local_search(const DomainSpec& spec, const CellField& g, double tau, DensityField& chi,
                      std::size_t all_cells_below = 64);

} // namespace ferro
