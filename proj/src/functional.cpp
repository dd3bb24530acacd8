#include "ferro/functional.hpp"

#include "ferro/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ferro {

void PhysicalParams::validate() const
{
    if (!(b > 0.0) || !std::isfinite(b))
        throw IllPosed("gravity b must be positive");
    if (!(p0 > 0.0) || !std::isfinite(p0))
        throw IllPosed("pressure constant p0 must be positive");
    if (!(tau >= 0.0) || !std::isfinite(tau))
        throw IllPosed("surface tension tau must be non-negative");
    if (!(mu_drive >= 0.0) || !std::isfinite(mu_drive))
        throw IllPosed("drive mu_drive must be non-negative");
}

PhysicalParams PhysicalParams::from_law(const MagnetizationLaw& law, double b, double tau,
                                        std::optional<double> mu_drive, std::optional<double> p0)
{
    PhysicalParams p;
    p.b = b;
    p.tau = tau;
    p.mu_drive = mu_drive.value_or(mu_eval(law, 1.0));
    p.p0 = p0.value_or(p0_from_law(law));
    p.validate();
    return p;
}

namespace {

double sq_norm(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return s;
}

} // namespace

double drive_integral(const DomainSpec& spec, const PotentialField& u)
{
    const CellVectorField g = gradient(spec, u);
    const int d = spec.dim;
    double s = 0.0;
    for (std::size_t c = 0; c < g.cells(); ++c)
        s += g.data[c * d + d - 1];
    return s * spec.cell_measure();
}

double gradient_norm(const DomainSpec& spec, const PotentialField& u)
{
    const CellVectorField g = gradient(spec, u);
    double s = 0.0;
    for (double v : g.data)
        s += v * v;
    return std::sqrt(s * spec.cell_measure());
}

double eval_J(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
              const PotentialField& u, const DensityField& rho)
{
    check_cells(spec, rho);
    const CellVectorField g = gradient(spec, u);
    const int d = spec.dim;
    double bulk = 0.0;
    for (std::size_t c = 0; c < rho.size(); ++c) {
        const auto gc = g.at(c);
        const double s2 = sq_norm(gc);
        const double r = rho[c];
        bulk += r * m_eval(law, std::sqrt(s2)) + 0.5 * (1.0 - r) * s2 - params.mu_drive * gc[d - 1] -
                (params.b * spec.cell_center_z(c) + params.p0) * r;
    }
    return bulk * spec.cell_measure() - params.tau * total_variation(spec, rho);
}

double eval_J1(const DomainSpec& spec, const MagnetizationLaw& law, const PotentialField& u,
               const DensityField& rho)
{
    check_cells(spec, rho);
    const CellVectorField g = gradient(spec, u);
    double s = 0.0;
    for (std::size_t c = 0; c < rho.size(); ++c) {
        const double s2 = sq_norm(g.at(c));
        s += rho[c] * m_eval(law, std::sqrt(s2)) + 0.5 * (1.0 - rho[c]) * s2;
    }
    return s * spec.cell_measure();
}

double eval_J2(const DomainSpec& spec, const PhysicalParams& params, const DensityField& rho)
{
    check_cells(spec, rho);
    double s = 0.0;
    for (std::size_t c = 0; c < rho.size(); ++c)
        s += (params.b * spec.cell_center_z(c) + params.p0) * rho[c];
    return s * spec.cell_measure() + params.tau * total_variation(spec, rho);
}

CellField gain_field(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                     const PotentialField& u)
{
    const CellVectorField g = gradient(spec, u);
    CellField out(spec.num_cells());
    for (std::size_t c = 0; c < out.size(); ++c) {
        const double s2 = sq_norm(g.at(c));
        out[c] = m_eval(law, std::sqrt(s2)) - 0.5 * s2 - params.b * spec.cell_center_z(c) - params.p0;
    }
    return out;
}

namespace {

// Centered slope of eta along horizontal axis `axis` at column `col`,
// one-sided at the walls.
double column_slope(const DomainSpec& spec, const HeightField& eta, std::size_t col, int axis)
{
    const int n = spec.n_horizontal[axis];
    const std::size_t stride = (spec.dim == 3 && axis == 0) ? static_cast<std::size_t>(spec.n_horizontal[1]) : 1;
    const int i = spec.dim == 3 && axis == 1 ? static_cast<int>(col % spec.n_horizontal[1])
                                             : static_cast<int>(col / stride) % n;
    const double h = spec.spacing(axis);
    if (i == 0)
        return (eta[col + stride] - eta[col]) / h;
    if (i == n - 1)
        return (eta[col] - eta[col - stride]) / h;
    return (eta[col + stride] - eta[col - stride]) / (2.0 * h);
}

} // namespace

double eval_F_graph(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                    const PotentialField& u, const HeightField& eta)
{
    check_columns(spec, eta);
    const CellVectorField g = gradient(spec, u);
    const double hz = spec.h_z();
    const double area = spec.cell_measure() / hz;
    double phases = 0.0;
    double surface = 0.0;
    for (std::size_t col = 0; col < eta.size(); ++col) {
        const double e = eta[col];
        if (!(std::abs(e) < 1.0))
            throw IllPosed("height field must satisfy |eta| < 1");
        for (int k = 0; k < spec.n_z; ++k) {
            const std::size_t c = spec.cell_in_column(col, k);
            const double s2 = sq_norm(g.at(c));
            const double lo = -1.0 + k * hz;
            const double below = std::clamp((e - lo) / hz, 0.0, 1.0);
            phases += (below * m_eval(law, std::sqrt(s2)) + (1.0 - below) * 0.5 * s2) * hz;
        }
        double slope2 = 0.0;
        for (int a = 0; a < spec.dim - 1; ++a) {
            const double s = column_slope(spec, eta, col, a);
            slope2 += s * s;
        }
        surface += 0.5 * params.b * e * e + params.p0 * e + params.tau * std::sqrt(1.0 + slope2);
    }
    return (phases - surface) * area - params.mu_drive * drive_integral(spec, u);
}

double graph_identity_offset(const DomainSpec& spec, const PhysicalParams& params)
{
    return (0.5 * params.b - params.p0) * spec.omega_measure();
}

double eval_E(const DomainSpec& spec, const PhysicalParams& params, double mu_const, const PotentialField& u,
              const DensityField& chi)
{
    check_cells(spec, chi);
    const CellVectorField g = gradient(spec, u);
    double s = 0.0;
    for (std::size_t c = 0; c < chi.size(); ++c)
        s += 0.5 * (chi[c] * mu_const + (1.0 - chi[c])) * sq_norm(g.at(c));
    return s * spec.cell_measure() + eval_J2(spec, params, chi);
}

double eval_E_tilde(const DomainSpec& spec, const PhysicalParams& params, double mu_const, const DualField& p_star,
                    const DensityField& chi)
{
    check_cells(spec, chi);
    if (p_star.cells() != chi.size() || p_star.dim != spec.dim)
        throw DimensionMismatch("dual field does not match grid");
    const int d = spec.dim;
    double s = 0.0;
    for (std::size_t c = 0; c < chi.size(); ++c) {
        const auto p = p_star.at(c);
        double q = 0.0;
        for (int a = 0; a < d - 1; ++a)
            q += p[a] * p[a];
        const double pz = p[d - 1] - params.mu_drive;
        q += pz * pz;
        s += (chi[c] / (2.0 * mu_const) + 0.5 * (1.0 - chi[c])) * q;
    }
    return s * spec.cell_measure() + eval_J2(spec, params, chi);
}

double eval_energy(const DomainSpec& spec, const PhysicalParams& params, double mu_const, const PotentialField& u,
                   const DensityField& chi)
{
    return eval_E(spec, params, mu_const, u, chi) - params.mu_drive * drive_integral(spec, u);
}

DualField p_star_from_u(const DomainSpec& spec, const PhysicalParams& params, double mu_const,
                        const PotentialField& u, const DensityField& chi)
{
    check_cells(spec, chi);
    DualField p = gradient(spec, u);
    const int d = spec.dim;
    for (std::size_t c = 0; c < chi.size(); ++c) {
        const double a = chi[c] * mu_const + (1.0 - chi[c]);
        auto pc = p.at(c);
        for (int k = 0; k < d; ++k)
            pc[k] *= -a;
        pc[d - 1] += params.mu_drive;
    }
    return p;
}

double verify_Yd(const DomainSpec& spec, const DualField& p_star)
{
    if (p_star.cells() != spec.num_cells() || p_star.dim != spec.dim)
        throw DimensionMismatch("dual field does not match grid");
    const double w = spec.cell_measure();
    double norm2 = 0.0;
    for (double v : p_star.data)
        norm2 += v * v;
    const double norm = std::sqrt(norm2 * w);
    if (norm == 0.0)
        return 0.0;
    PotentialField r = zero_potential(spec);
    const std::vector<double> weight(spec.num_cells(), w);
    gradient_adjoint_add(spec, p_star, weight, r);
    double worst = 0.0;
    for (std::size_t n = 0; n < r.size(); ++n)
        if (!spec.is_lateral_node(n))
            worst = std::max(worst, std::abs(r[n]));
    return worst / norm;
}

} // namespace ferro
