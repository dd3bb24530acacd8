#pragma once

#include "ferro/grid.hpp"
#include "ferro/maglaw.hpp"

#include <optional>

namespace ferro {

/// Physical constants of the free-boundary functional.
///
/// b (gravity) and p0 (pressure) are strictly positive. tau >= 0 and
/// mu_drive >= 0 so that the perimeter-free and drive-free limits can be
/// evaluated; run configurations require tau > 0.
struct PhysicalParams {
    double b = 1.0;
    double tau = 0.1;
    double mu_drive = 1.0;
    double p0 = 1.0;

    void validate() const;

    /// mu_drive defaults to mu(1) and p0 to p0_from_law(law).
    static PhysicalParams from_law(const MagnetizationLaw& law, double b, double tau,
                                   std::optional<double> mu_drive = std::nullopt,
                                   std::optional<double> p0 = std::nullopt);

    friend bool operator==(const PhysicalParams&, const PhysicalParams&) = default;
};

/// Cell-based vector field p* of the linear-law dual problem.
using DualField = CellVectorField;

/// Discrete integral of u_z over D (equals the trapezoidal top-minus-bottom trace integral).
double drive_integral(const DomainSpec& spec, const PotentialField& u);

/// ||u||_cyl = ||grad u||_{L2(D)}.
double gradient_norm(const DomainSpec& spec, const PotentialField& u);

/// J(u, rho) = J1 - J2 - mu_drive int u_z.
double eval_J(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
              const PotentialField& u, const DensityField& rho);

/// J1 = int rho M(|grad u|) + (1 - rho)/2 |grad u|^2.
double eval_J1(const DomainSpec& spec, const MagnetizationLaw& law, const PotentialField& u,
               const DensityField& rho);

/// J2 = int (b z + p0) rho + tau TV(rho).
double eval_J2(const DomainSpec& spec, const PhysicalParams& params, const DensityField& rho);

/// The coefficient of rho in J: g = M(|grad u|) - |grad u|^2/2 - b z - p0, per cell.
CellField gain_field(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                     const PotentialField& u);

/// Graph-form functional F(u, eta) with the two phase integrals split exactly
/// at height eta inside each column and the area term built from centered
/// differences of eta (one-sided at the walls).
double eval_F_graph(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                    const PotentialField& u, const HeightField& eta);

/// Constant c with J(u, chi_{z<eta}) = F(u, eta) + c in the continuum limit:
/// c = (b/2 - p0) |Omega|.
double graph_identity_offset(const DomainSpec& spec, const PhysicalParams& params);

/// Linear-law energy E_chi(grad u) = int (chi mu/2 + (1-chi)/2) |grad u|^2 + J2(chi).
double eval_E(const DomainSpec& spec, const PhysicalParams& params, double mu_const, const PotentialField& u,
              const DensityField& chi);

/// Dual energy int (chi/(2 mu) + (1-chi)/2) |p* - mu_drive e_z|^2 + J2(chi).
double eval_E_tilde(const DomainSpec& spec, const PhysicalParams& params, double mu_const, const DualField& p_star,
                    const DensityField& chi);

/// Full energy E(u, chi) = E_chi(grad u) - mu_drive int u_z.
double eval_energy(const DomainSpec& spec, const PhysicalParams& params, double mu_const, const PotentialField& u,
                   const DensityField& chi);

/// p* = -chi mu grad u - (1 - chi) grad u + mu_drive e_z.
DualField p_star_from_u(const DomainSpec& spec, const PhysicalParams& params, double mu_const,
                        const PotentialField& u, const DensityField& chi);

/// Weak-divergence residual of p*: max over free-node hat functions v of
/// |int p* . grad v|, divided by ||p*||_{L2}. Zero for p* = 0.
double verify_Yd(const DomainSpec& spec, const DualField& p_star);

} // namespace ferro
