#pragma once

#include <span>
#include <string>

namespace ferro {

enum class LawKind { linear, langevin };

/// Magnetization law: permeability response mu(s) and its primitive
/// M(s) = int_0^s t mu(t) dt. Immutable after construction.
class MagnetizationLaw {
public:
    /// Constant permeability. Requires mu >= 1 (mu == 1 is the degenerate
    /// non-magnetic law, admitted for comparison runs only).
    static MagnetizationLaw linear(double mu);

    /// Langevin law with saturation magnetization ms > 0 and parameter gamma > 0.
    static MagnetizationLaw langevin(double ms, double gamma);

    LawKind kind() const noexcept { return kind_; }
    double mu_const() const noexcept { return mu_; }
    double saturation() const noexcept { return ms_; }
    double gamma() const noexcept { return gamma_; }

    std::string describe() const;

    friend bool operator==(const MagnetizationLaw&, const MagnetizationLaw&) = default;

private:
    MagnetizationLaw(LawKind kind, double mu, double ms, double gamma)
        : kind_(kind), mu_(mu), ms_(ms), gamma_(gamma) {}

    LawKind kind_;
    double mu_ = 1.0;
    double ms_ = 0.0;
    double gamma_ = 0.0;
};

/// Langevin function coth(x) - 1/x, accurate through x = 0.
double langevin_fn(double x);
/// Derivative of the Langevin function, 1/x^2 - 1/sinh(x)^2.
double langevin_fn_prime(double x);

double mu_eval(const MagnetizationLaw& law, double s);
double m_eval(const MagnetizationLaw& law, double s);
/// M'(s) = s mu(s).
double m_prime(const MagnetizationLaw& law, double s);
/// M''(s) = d/ds (s mu(s)); the Hessian of xi -> M(|xi|) has eigenvalues
/// M''(|xi|) along xi and mu(|xi|) across it.
double m_second(const MagnetizationLaw& law, double s);

/// Growth constant C_M with s^2/2 <= M(s) <= C_M s^2/2.
double cm_bound(const MagnetizationLaw& law);

/// Pressure constant M(1) + mu(1) (mu(1)/2 - 1).
double p0_from_law(const MagnetizationLaw& law);

/// Linear-law integrand f_chi(xi) = a/2 |xi|^2 - mu xi_z with a = chi mu + 1 - chi.
/// The last component of xi is the vertical one.
double linear_integrand(int chi, double mu_const, std::span<const double> xi);

/// Convex conjugate f*_chi(p) = (chi/(2mu) + (1-chi)/2) |p + mu e_z|^2.
double fenchel_conjugate_linear(int chi, double mu_const, std::span<const double> p);

} // namespace ferro
