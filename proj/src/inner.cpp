#include "ferro/inner.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>

namespace ferro {

namespace {

// Matrix-free stencil: per-cell base node plus the corner table of the
// multilinear interpolant gradient.
class Stencil {
public:
    explicit Stencil(const DomainSpec& spec) : dim_(spec.dim), w_(spec.cell_measure())
    {
        corners_ = 1 << dim_;
        const double scale = 1.0 / static_cast<double>(1 << (dim_ - 1));
        for (int b = 0; b < corners_; ++b) {
            std::size_t off = 0;
            for (int a = 0; a < dim_; ++a) {
                const bool up = (b >> a) & 1;
                if (up)
                    off += spec.node_stride(a);
                coef_[b][a] = (up ? 1.0 : -1.0) * scale / spec.spacing(a);
            }
            offset_[b] = off;
        }
        const std::size_t nc = spec.num_cells();
        base_.resize(nc);
        for (std::size_t c = 0; c < nc; ++c)
            base_[c] = spec.node_index(spec.cell_coords(c));
        free_.resize(spec.num_nodes());
        for (std::size_t n = 0; n < free_.size(); ++n)
            free_[n] = spec.is_lateral_node(n) ? 0.0 : 1.0;
    }

    int dim() const { return dim_; }
    double weight() const { return w_; }
    std::size_t cells() const { return base_.size(); }
    std::size_t nodes() const { return free_.size(); }
    const std::vector<double>& free_mask() const { return free_; }

    void grad(const std::vector<double>& u, std::size_t c, double* out) const
    {
        const std::size_t base = base_[c];
        for (int a = 0; a < dim_; ++a)
            out[a] = 0.0;
        for (int b = 0; b < corners_; ++b) {
            const double v = u[base + offset_[b]];
            for (int a = 0; a < dim_; ++a)
                out[a] += coef_[b][a] * v;
        }
    }

    // out += w G_c^T q
    void scatter(std::size_t c, const double* q, std::vector<double>& out) const
    {
        const std::size_t base = base_[c];
        for (int b = 0; b < corners_; ++b) {
            double s = 0.0;
            for (int a = 0; a < dim_; ++a)
                s += coef_[b][a] * q[a];
            out[base + offset_[b]] += w_ * s;
        }
    }

    void mask(std::vector<double>& v) const
    {
        for (std::size_t n = 0; n < v.size(); ++n)
            v[n] *= free_[n];
    }

    // Diagonal of G^T W diag(k) G, with k_c a scalar per cell.
    std::vector<double> diagonal(const std::vector<double>& k) const
    {
        std::vector<double> d(nodes(), 0.0);
        for (std::size_t c = 0; c < cells(); ++c) {
            for (int b = 0; b < corners_; ++b) {
                double s = 0.0;
                for (int a = 0; a < dim_; ++a)
                    s += coef_[b][a] * coef_[b][a];
                d[base_[c] + offset_[b]] += w_ * k[c] * s;
            }
        }
        for (std::size_t n = 0; n < d.size(); ++n)
            if (free_[n] == 0.0 || d[n] <= 0.0)
                d[n] = 1.0;
        return d;
    }

    // out = G^T W diag(k) G x, masked.
    void apply_scalar(const std::vector<double>& k, const std::vector<double>& x, std::vector<double>& out) const
    {
        std::fill(out.begin(), out.end(), 0.0);
        double g[3];
        for (std::size_t c = 0; c < cells(); ++c) {
            grad(x, c, g);
            for (int a = 0; a < dim_; ++a)
                g[a] *= k[c];
            scatter(c, g, out);
        }
        mask(out);
    }

private:
    int dim_;
    double w_;
    int corners_ = 0;
    std::array<std::size_t, 8> offset_{};
    std::array<std::array<double, 3>, 8> coef_{};
    std::vector<std::size_t> base_;
    std::vector<double> free_;
};

double dot(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> drive_vector(const Stencil& st, double mu_drive)
{
    std::vector<double> b(st.nodes(), 0.0);
    if (mu_drive == 0.0)
        return b;
    double q[3] = {0.0, 0.0, 0.0};
    q[st.dim() - 1] = mu_drive;
    for (std::size_t c = 0; c < st.cells(); ++c)
        st.scatter(c, q, b);
    st.mask(b);
    return b;
}

struct CgOutcome {
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

// Preconditioned CG for a masked SPD operator. x holds the initial guess.
template <class Apply>
CgOutcome pcg(const Apply& apply, const std::vector<double>& inv_diag, const std::vector<double>& rhs,
              std::vector<double>& x, double abs_tol, int max_iter)
{
    const std::size_t n = rhs.size();
    std::vector<double> r(n), z(n), p(n), q(n);
    apply(x, q);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = rhs[i] - q[i];
    CgOutcome out;
    out.residual = norm2(r);
    if (out.residual <= abs_tol) {
        out.converged = true;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i)
        z[i] = inv_diag[i] * r[i];
    p = z;
    double rz = dot(r, z);
    while (out.iterations < max_iter) {
        apply(p, q);
        const double pq = dot(p, q);
        if (!(pq > 0.0))
            break;
        const double alpha = rz / pq;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        ++out.iterations;
        out.residual = norm2(r);
        if (out.residual <= abs_tol) {
            out.converged = true;
            break;
        }
        for (std::size_t i = 0; i < n; ++i)
            z[i] = inv_diag[i] * r[i];
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i)
            p[i] = z[i] + beta * p[i];
    }
    return out;
}

std::vector<double> initial_guess(const DomainSpec& spec, const Stencil& st, const PotentialField* warm)
{
    if (!warm)
        return std::vector<double>(st.nodes(), 0.0);
    check_nodes(spec, *warm);
    std::vector<double> x = warm->raw();
    st.mask(x);
    return x;
}

// u-dependent part of J: sum_c w [rho M(s) + (1-rho) s^2/2 - mu_drive g_z].
double reduced_objective(const Stencil& st, const MagnetizationLaw& law, double mu_drive,
                         const DensityField& rho, const std::vector<double>& u)
{
    const int d = st.dim();
    double g[3];
    double s = 0.0;
    for (std::size_t c = 0; c < st.cells(); ++c) {
        st.grad(u, c, g);
        double s2 = 0.0;
        for (int a = 0; a < d; ++a)
            s2 += g[a] * g[a];
        s += rho[c] * m_eval(law, std::sqrt(s2)) + 0.5 * (1.0 - rho[c]) * s2 - mu_drive * g[d - 1];
    }
    return s * st.weight();
}

// Gradient of the reduced objective, masked.
std::vector<double> reduced_gradient(const Stencil& st, const MagnetizationLaw& law, double mu_drive,
                                     const DensityField& rho, const std::vector<double>& u)
{
    const int d = st.dim();
    std::vector<double> out(st.nodes(), 0.0);
    double g[3];
    for (std::size_t c = 0; c < st.cells(); ++c) {
        st.grad(u, c, g);
        double s2 = 0.0;
        for (int a = 0; a < d; ++a)
            s2 += g[a] * g[a];
        const double k = rho[c] * mu_eval(law, std::sqrt(s2)) + 1.0 - rho[c];
        for (int a = 0; a < d; ++a)
            g[a] *= k;
        g[d - 1] -= mu_drive;
        st.scatter(c, g, out);
    }
    st.mask(out);
    return out;
}

InnerResult solve_linear(const DomainSpec& spec, const Stencil& st, double mu_const, const PhysicalParams& params,
                         const DensityField& rho, const InnerOptions& opt, const PotentialField* warm)
{
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> k(st.cells());
    for (std::size_t c = 0; c < k.size(); ++c)
        k[c] = mu_const * rho[c] + 1.0 - rho[c];
    const std::vector<double> rhs = drive_vector(st, params.mu_drive);
    const double scale = 1.0 + norm2(rhs);

    InnerResult res;
    res.report.tolerance = opt.tol * scale;
    std::vector<double> x = initial_guess(spec, st, warm);
    if (params.mu_drive == 0.0 && !warm)
        std::fill(x.begin(), x.end(), 0.0);

    std::vector<double> inv = st.diagonal(k);
    for (double& v : inv)
        v = 1.0 / v;
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) { st.apply_scalar(k, in, out); };
    const CgOutcome cg = pcg(apply, inv, rhs, x, res.report.tolerance, opt.max_iter);

    // recompute the true residual
    std::vector<double> ax(st.nodes());
    apply(x, ax);
    for (std::size_t i = 0; i < ax.size(); ++i)
        ax[i] -= rhs[i];
    res.report.iterations = cg.iterations;
    res.report.residual = norm2(ax);
    res.report.converged = res.report.residual <= res.report.tolerance;
    res.u = PotentialField(std::move(x));
    res.report.wallclock = seconds_since(t0);
    return res;
}

// Per-cell Hessian data: H_c = alpha I + beta e e^T.
struct HessianCell {
    double alpha;
    double beta;
    std::array<double, 3> e;
};

InnerResult solve_newton(const DomainSpec& spec, const Stencil& st, const MagnetizationLaw& law,
                         const PhysicalParams& params, const DensityField& rho, const InnerOptions& opt,
                         const PotentialField* warm)
{
    const auto t0 = std::chrono::steady_clock::now();
    const int d = st.dim();
    const double scale = 1.0 + norm2(drive_vector(st, params.mu_drive));

    InnerResult res;
    InnerReport& rep = res.report;
    rep.tolerance = opt.tol * scale;
    std::vector<double> u = initial_guess(spec, st, warm);
    double f = reduced_objective(st, law, params.mu_drive, rho, u);
    std::vector<double> grad = reduced_gradient(st, law, params.mu_drive, rho, u);
    double gnorm = norm2(grad);
    rep.objective_history.push_back(f);

    std::vector<HessianCell> hc(st.cells());
    std::vector<double> k_diag(st.cells());
    const double c_armijo = 1e-4;

    while (gnorm > rep.tolerance) {
        if (rep.newton_steps >= opt.max_newton || rep.iterations >= opt.max_iter)
            break;
        double g[3];
        for (std::size_t c = 0; c < st.cells(); ++c) {
            st.grad(u, c, g);
            double s2 = 0.0;
            for (int a = 0; a < d; ++a)
                s2 += g[a] * g[a];
            const double s = std::sqrt(s2);
            const double mu = mu_eval(law, s);
            HessianCell& h = hc[c];
            h.alpha = rho[c] * mu + 1.0 - rho[c];
            h.beta = s > 0.0 ? rho[c] * (m_second(law, s) - mu) : 0.0;
            for (int a = 0; a < 3; ++a)
                h.e[a] = (s > 0.0 && a < d) ? g[a] / s : 0.0;
            k_diag[c] = h.alpha + std::max(h.beta, 0.0);
        }
        auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
            std::fill(out.begin(), out.end(), 0.0);
            double v[3];
            for (std::size_t c = 0; c < st.cells(); ++c) {
                st.grad(in, c, v);
                const HessianCell& h = hc[c];
                double proj = 0.0;
                for (int a = 0; a < d; ++a)
                    proj += h.e[a] * v[a];
                for (int a = 0; a < d; ++a)
                    v[a] = h.alpha * v[a] + h.beta * proj * h.e[a];
                st.scatter(c, v, out);
            }
            st.mask(out);
        };
        std::vector<double> inv = st.diagonal(k_diag);
        for (double& v : inv)
            v = 1.0 / v;

        std::vector<double> neg(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i)
            neg[i] = -grad[i];
        const double forcing = std::min(0.5, std::sqrt(gnorm / scale));
        std::vector<double> step(grad.size(), 0.0);
        const CgOutcome cg =
            pcg(apply, inv, neg, step, std::max(forcing * gnorm, 0.1 * rep.tolerance), opt.max_iter - rep.iterations);
        rep.iterations += cg.iterations;

        double slope = dot(grad, step);
        if (!(slope < 0.0)) {
            step = neg; // steepest descent fallback
            slope = -gnorm * gnorm;
        }

        // Armijo backtracking with halving; a small roundoff allowance lets
        // the full Newton step through once f has converged to machine precision.
        const double slack = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
        double t = 1.0;
        std::vector<double> trial(u.size());
        double f_trial = f;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < u.size(); ++i)
                trial[i] = u[i] + t * step[i];
            f_trial = reduced_objective(st, law, params.mu_drive, rho, trial);
            if (f_trial <= f + c_armijo * t * slope + slack) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted)
            break;
        u.swap(trial);
        f = f_trial;
        grad = reduced_gradient(st, law, params.mu_drive, rho, u);
        gnorm = norm2(grad);
        ++rep.newton_steps;
        rep.objective_history.push_back(f);
    }

    rep.residual = gnorm;
    rep.converged = gnorm <= rep.tolerance;
    res.u = PotentialField(std::move(u));
    rep.wallclock = seconds_since(t0);
    return res;
}

} // namespace

InnerResult solve_weighted_poisson(const DomainSpec& spec, const CellField& coeff, const PotentialField& rhs,
                                   double tol, int max_iter, const PotentialField* warm_start)
{
    spec.validate();
    check_cells(spec, coeff);
    check_nodes(spec, rhs);
    const auto t0 = std::chrono::steady_clock::now();
    const Stencil st(spec);
    std::vector<double> b = rhs.raw();
    st.mask(b);
    const std::vector<double>& k = coeff.raw();
    std::vector<double> inv = st.diagonal(k);
    for (double& v : inv)
        v = 1.0 / v;
    std::vector<double> x = initial_guess(spec, st, warm_start);
    InnerResult res;
    res.report.tolerance = tol * (1.0 + norm2(b));
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) { st.apply_scalar(k, in, out); };
    const CgOutcome cg = pcg(apply, inv, b, x, res.report.tolerance, max_iter);
    res.report.iterations = cg.iterations;
    res.report.residual = cg.residual;
    res.report.converged = cg.converged;
    res.u = PotentialField(std::move(x));
    res.report.wallclock = seconds_since(t0);
    return res;
}

InnerResult solve_inner(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                        const DensityField& rho, const InnerOptions& options, const PotentialField* warm_start)
{
    spec.validate();
    params.validate();
    check_density(spec, rho);
    if (!(options.tol > 0.0))
        throw IllPosed("inner tolerance must be positive");
    const Stencil st(spec);

    InnerResult res = (law.kind() == LawKind::linear && !options.force_newton)
                          ? solve_linear(spec, st, law.mu_const(), params, rho, options, warm_start)
                          : solve_newton(spec, st, law, params, rho, options, warm_start);
    res.report.objective = eval_J(spec, law, params, res.u, rho);
    if (!res.report.converged)
        throw InnerNonConvergence("inner solver stopped at residual " + std::to_string(res.report.residual) +
                                      " above tolerance " + std::to_string(res.report.tolerance),
                                  res.u, res.report);
    return res;
}

ObjectiveGradient objective_and_gradient(const DomainSpec& spec, const MagnetizationLaw& law,
                                         const PhysicalParams& params, const DensityField& rho,
                                         const PotentialField& u)
{
    check_nodes(spec, u);
    check_cells(spec, rho);
    const Stencil st(spec);
    ObjectiveGradient out;
    out.value = eval_J(spec, law, params, u, rho);
    out.gradient = PotentialField(reduced_gradient(st, law, params.mu_drive, rho, u.raw()));
    return out;
}

PotentialField drive_rhs(const DomainSpec& spec, const PhysicalParams& params)
{
    const Stencil st(spec);
    return PotentialField(drive_vector(st, params.mu_drive));
}

PotentialField apply_linear_operator(const DomainSpec& spec, double mu_const, const DensityField& rho,
                                     const PotentialField& u)
{
    check_nodes(spec, u);
    check_cells(spec, rho);
    const Stencil st(spec);
    std::vector<double> k(st.cells());
    for (std::size_t c = 0; c < k.size(); ++c)
        k[c] = mu_const * rho[c] + 1.0 - rho[c];
    std::vector<double> out(st.nodes());
    st.apply_scalar(k, u.raw(), out);
    return PotentialField(std::move(out));
}

} // namespace ferro
