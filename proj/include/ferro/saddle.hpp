#pragma once

#include "ferro/errors.hpp"
#include "ferro/functional.hpp"
#include "ferro/inner.hpp"
#include "ferro/outer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ferro {

struct SaddleOptions {
    InnerOptions inner;
    OuterOptions outer;
    double tol_gap = 1e-3;   // stop when m* - l* <= tol_gap (1 + |m*|)
    int max_sweeps = 100;
    double theta = 0.5;      // proximal step, halved while the ascent model overshoots
    double theta_min = 1.0 / 1024.0;
    int monotone_window = 10;
};

struct SaddleRecord {
    int sweep = 0;
    double lower = 0.0;          // l_k = min_u J(u, chi_k)
    double upper = 0.0;          // m_k = best found J(u_k, chi) over binary chi
    double relaxed_upper = 0.0;  // certified bound on max over relaxed rho of J(u_k, rho)
    double relaxed_lower = 0.0;  // J(u_k, rho_k) = min_u J(u, rho_k)
    double gap = 0.0;            // best upper minus best lower so far
    double sweep_gap = 0.0;      // m_k - l_k
    double current = 0.0;        // J(u_k, chi_k)
    double u_norm = 0.0;         // ||u_k||_cyl
    double volume = 0.0;         // volume(chi_k)
    double theta = 0.0;
};

struct SaddleState {
    PotentialField u;        // u_mM: potential of the best upper bound
    DensityField rho;        // relaxed density paired with u
    DensityField chi;        // chi_Mm: indicator of the best lower bound
    PotentialField u_chi;    // u_Mm: minimizer of J(., chi)
    DensityField chi_upper;  // chi_mM: maximizer of J(u, .)
    double lower = 0.0;
    double upper = 0.0;
    double relaxed_upper = 0.0;
    double relaxed_lower = 0.0;
    double gap = 0.0;
    double relaxed_gap = 0.0;  // best relaxed upper minus best relaxed lower
    bool converged = false;
    bool non_monotone = false;
    int sweeps = 0;
    std::vector<SaddleRecord> history;
};

class SaddleNonConvergence : public NonConvergence {
public:
    SaddleNonConvergence(const std::string& what, SaddleState state)
        : NonConvergence(what), state_(std::move(state)) {}
    const SaddleState& state() const noexcept { return state_; }

private:
    SaddleState state_;
};

/// Damped alternation between the outer maximization and the inner
/// minimization. Sweep k solves l_k = min_u J(u, chi_k) at the binarized
/// iterate and m_k = max_chi J(u_k, chi), then takes a proximal ascent step
/// on rho -> min_u J(u, rho) along the gain field and re-solves for u. Stops
/// on the best-so-far gap; throws SaddleNonConvergence with the full state
/// at the sweep cap.
SaddleState run_saddle(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                       const SaddleOptions& options = {});

struct VerifyItem {
    std::string name;
    double measured = 0.0;
    double bound = 0.0;
    bool pass = false;
    bool mandatory = true;
};

struct VerifyReport {
    std::vector<VerifyItem> items;

    void add(std::string name, double measured, double bound, bool pass, bool mandatory = true);
    bool all_pass() const;  // over mandatory items
    const VerifyItem* find(const std::string& name) const;
    void append(const VerifyReport& other);
};

/// Probes both saddle inequalities J(u0, chi) <= J(u0, chi0) <= J(u, chi0).
/// chi probes: random volume-preserving swaps, vertical shifts, and every
/// feasible indicator on grids of at most 16 cells. u probes: random
/// perturbations and scalings alpha u0, including alpha = 1/C_M.
/// Passes when both worst violations are <= tol.
VerifyReport check_saddle(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                          const PotentialField& u0, const DensityField& chi0, int n_probes, std::uint64_t seed,
                          double tol);

/// ||u0||_cyl <= 2 mu_drive sqrt(|D|).
VerifyReport verify_norm_bound(const DomainSpec& spec, const PhysicalParams& params, const PotentialField& u0);

/// Empty bottom layers times h_z <= (mu_drive^2 / b)(1 - 1/C_M).
VerifyReport verify_bottom_distance(const DomainSpec& spec, const MagnetizationLaw& law,
                                    const PhysicalParams& params, const DensityField& chi0);

/// Number of completely empty z-layers at the bottom, times h_z.
double bottom_distance(const DomainSpec& spec, const DensityField& chi0);

/// Linear-law duality at chi: J(u_chi, chi) + E~(p*) = 0, E_chi(grad u_chi) =
/// E~(p*), the weak-divergence residual of p*, and E~(p*) <= E~(q) for dual
/// probes q = p* + (s - grad phi) with phi the weighted projection of a
/// random field s.
VerifyReport verify_duality_linear(const DomainSpec& spec, const PhysicalParams& params, double mu_const,
                                   const DensityField& chi, const InnerOptions& inner, int n_probes,
                                   std::uint64_t seed, double tol = 1e-8);

/// Energy comparisons at a candidate (u0, chi0): E(u0, chi0) <= E(u0 + v, chi0)
/// for v vanishing on the whole boundary, and E(u0, chi0) <= E(u0, chi) for
/// volume-preserving chi probes.
VerifyReport verify_energy_minimality(const DomainSpec& spec, const PhysicalParams& params, double mu_const,
                                      const PotentialField& u0, const DensityField& chi0, int n_probes,
                                      std::uint64_t seed, double tol = 1e-10);

struct FreeSurfaceResidual {
    ColumnField residual;      // per column
    double norm = 0.0;         // discrete L2 norm over Omega
    double norm_mean_free = 0.0; // same after removing the mean (the volume multiplier)
    double mean = 0.0;
    double max_jump = 0.0;     // max |phi - psi| of one-sided traces at the interface
};

/// Free-surface equation residual on a graph-like interface eta, with
/// one-sided gradients from the cells just below (phi) and above (psi) the
/// interface. Columns whose interface touches the top or bottom are skipped
/// (residual 0).
FreeSurfaceResidual free_surface_residual(const DomainSpec& spec, const MagnetizationLaw& law,
                                          const PhysicalParams& params, const PotentialField& u,
                                          const HeightField& eta);

/// Scans J(eps z phi(x,y), chi0) for eps in [1e-3, 1e-1] against J(0, chi0),
/// with phi a sine-squared bump vanishing on the lateral wall.
VerifyReport nontriviality_check(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                                 const DensityField& chi0);

struct BubbleCensus {
    int fluid_components = 0;
    int air_components = 0;
    int enclosed_air = 0;  // air components not touching the top of D
};

/// Face-connected components of the two phases.
BubbleCensus bubble_census(const DomainSpec& spec, const DensityField& chi);

} // namespace ferro
