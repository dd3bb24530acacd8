#include "ferro/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>

namespace ferro {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

struct UpperSide {
    CellField gain;
    DensityField chi;
    double value = 0.0;    // J(u, chi)
    double relaxed = 0.0;  // certified bound on the relaxed maximum
    OuterResult outer;     // kept as the next warm start
};

UpperSide upper_side(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                     const PotentialField& u, const OuterOptions& options, const OuterResult* warm = nullptr)
{
    UpperSide out;
    out.gain = gain_field(spec, law, params, u);
    OuterOptions opt = options;
    opt.mode = OuterMode::binary;
    out.outer = solve_outer(spec, out.gain, params.tau, spec.omega_measure(), opt, warm);
    const double base = eval_J(spec, law, params, u, constant_density(spec, 0.0));
    out.value = eval_J(spec, law, params, u, out.outer.rho);
    out.relaxed = base + out.outer.report.upper_bound;
    out.chi = out.outer.rho;
    return out;
}

std::size_t whole_cells(const DomainSpec& spec, double V)
{
    return static_cast<std::size_t>(std::llround(V / spec.cell_measure()));
}

// Random indicator perturbations keeping the volume: k swaps of one filled
// and one empty cell.
DensityField random_swaps(const DensityField& chi, int k, std::mt19937_64& rng)
{
    std::vector<std::size_t> full, empty;
    for (std::size_t c = 0; c < chi.size(); ++c)
        (chi[c] > 0.5 ? full : empty).push_back(c);
    DensityField out = chi;
    if (full.empty() || empty.empty())
        return out;
    std::shuffle(full.begin(), full.end(), rng);
    std::shuffle(empty.begin(), empty.end(), rng);
    const std::size_t m = std::min({static_cast<std::size_t>(k), full.size(), empty.size()});
    for (std::size_t i = 0; i < m; ++i) {
        out[full[i]] = 0.0;
        out[empty[i]] = 1.0;
    }
    return out;
}

// Rigid vertical shift by s layers (s > 0 moves up); empty when cells would leave D.
std::optional<DensityField> shifted(const DomainSpec& spec, const DensityField& chi, int s)
{
    const int nz = spec.n_z;
    DensityField out(chi.size(), 0.0);
    for (std::size_t col = 0; col < spec.num_columns(); ++col) {
        for (int k = 0; k < nz; ++k) {
            const double v = chi[spec.cell_in_column(col, k)];
            if (v == 0.0)
                continue;
            const int t = k + s;
            if (t < 0 || t >= nz)
                return std::nullopt;
            out[spec.cell_in_column(col, t)] = v;
        }
    }
    return out;
}

// Calls f on every indicator with exactly `ones` filled cells.
template <class F>
void for_each_indicator(std::size_t n, std::size_t ones, F&& f)
{
    std::vector<int> mask(n, 0);
    std::fill(mask.end() - static_cast<long>(ones), mask.end(), 1);
    DensityField chi(n);
    do {
        for (std::size_t i = 0; i < n; ++i)
            chi[i] = mask[i];
        f(chi);
    } while (std::next_permutation(mask.begin(), mask.end()));
}

// Random potential, zero on the lateral wall (and on top and bottom when
// `whole_boundary`), scaled to unit gradient norm.
PotentialField random_direction(const DomainSpec& spec, std::mt19937_64& rng, bool whole_boundary)
{
    std::normal_distribution<double> normal;
    PotentialField v(spec.num_nodes());
    const int top = spec.nodes_along(spec.dim - 1) - 1;
    for (std::size_t n = 0; n < v.size(); ++n) {
        const int kz = spec.node_coords(n)[spec.dim - 1];
        const bool pinned = spec.is_lateral_node(n) || (whole_boundary && (kz == 0 || kz == top));
        const double r = normal(rng);
        v[n] = pinned ? 0.0 : r;
    }
    const double norm = gradient_norm(spec, v);
    if (norm > 0.0)
        for (double& x : v)
            x /= norm;
    return v;
}

PotentialField axpy(const PotentialField& u, double a, const PotentialField& v)
{
    PotentialField out = u;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += a * v[i];
    return out;
}

// Every volume-preserving indicator probe used by the left-hand checks.
std::vector<DensityField> chi_probes(const DomainSpec& spec, const DensityField& chi0, int n_probes,
                                     std::mt19937_64& rng)
{
    std::vector<DensityField> out;
    for (int s = -spec.n_z; s <= spec.n_z; ++s) {
        if (s == 0)
            continue;
        if (auto moved = shifted(spec, chi0, s))
            out.push_back(std::move(*moved));
    }
    std::uniform_int_distribution<int> count(1, 4);
    for (int i = 0; i < n_probes; ++i)
        out.push_back(random_swaps(chi0, count(rng), rng));
    return out;
}

bool fits_enumeration(const DomainSpec& spec)
{
    const double cells = spec.omega_measure() / spec.cell_measure();
    return spec.num_cells() <= 16 && std::abs(cells - std::round(cells)) < 1e-9;
}

// Horizontal gradient of eta per column: centered inside, one-sided at walls.
std::array<double, 2> height_gradient(const DomainSpec& spec, const HeightField& eta, std::size_t col)
{
    std::array<double, 2> grad{0.0, 0.0};
    const int nh = spec.dim - 1;
    const int nx = spec.cells_along(0);
    const int ny = nh == 2 ? spec.cells_along(1) : 1;
    const int i = static_cast<int>(col) / ny;
    const int j = static_cast<int>(col) % ny;
    for (int a = 0; a < nh; ++a) {
        const int n = a == 0 ? nx : ny;
        const int p = a == 0 ? i : j;
        const std::size_t stride = a == 0 ? static_cast<std::size_t>(ny) : 1;
        const double h = spec.spacing(a);
        const std::size_t lo = p > 0 ? col - stride : col;
        const std::size_t hi = p + 1 < n ? col + stride : col;
        const double span = static_cast<double>((p + 1 < n) + (p > 0)) * h;
        grad[a] = (eta[hi] - eta[lo]) / span;
    }
    return grad;
}

// div(grad eta / sqrt(1 + |grad eta|^2)) from face fluxes; zero flux at the wall.
double mean_curvature(const DomainSpec& spec, const HeightField& eta, std::size_t col)
{
    const int nh = spec.dim - 1;
    const int nx = spec.cells_along(0);
    const int ny = nh == 2 ? spec.cells_along(1) : 1;
    const int i = static_cast<int>(col) / ny;
    const int j = static_cast<int>(col) % ny;
    double div = 0.0;
    for (int a = 0; a < nh; ++a) {
        const int n = a == 0 ? nx : ny;
        const int p = a == 0 ? i : j;
        const std::size_t stride = a == 0 ? static_cast<std::size_t>(ny) : 1;
        const double h = spec.spacing(a);
        auto flux = [&](std::size_t left, std::size_t right) {
            const double normal = (eta[right] - eta[left]) / h;
            double sq = normal * normal;
            if (nh == 2) {
                const double t = 0.5 * (height_gradient(spec, eta, left)[1 - a] +
                                        height_gradient(spec, eta, right)[1 - a]);
                sq += t * t;
            }
            return normal / std::sqrt(1.0 + sq);
        };
        const double f_hi = p + 1 < n ? flux(col, col + stride) : 0.0;
        const double f_lo = p > 0 ? flux(col - stride, col) : 0.0;
        div += (f_hi - f_lo) / h;
    }
    return div;
}

double cell_average(const DomainSpec& spec, const PotentialField& u, std::size_t c)
{
    const std::size_t base = spec.node_index(spec.cell_coords(c));
    const int corners = 1 << spec.dim;
    double s = 0.0;
    for (int b = 0; b < corners; ++b) {
        std::size_t off = 0;
        for (int a = 0; a < spec.dim; ++a)
            if ((b >> a) & 1)
                off += spec.node_stride(a);
        s += u[base + off];
    }
    return s / corners;
}

} // namespace

// ---------------------------------------------------------------------------

void VerifyReport::add(std::string name, double measured, double bound, bool pass, bool mandatory)
{
    items.push_back(VerifyItem{std::move(name), measured, bound, pass, mandatory});
}

bool VerifyReport::all_pass() const
{
    return std::all_of(items.begin(), items.end(), [](const VerifyItem& i) { return i.pass || !i.mandatory; });
}

const VerifyItem* VerifyReport::find(const std::string& name) const
{
    for (const VerifyItem& i : items)
        if (i.name == name)
            return &i;
    return nullptr;
}

void VerifyReport::append(const VerifyReport& other)
{
    items.insert(items.end(), other.items.begin(), other.items.end());
}

// ---------------------------------------------------------------------------

SaddleState run_saddle(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                       const SaddleOptions& options)
{
    spec.validate();
    params.validate();
    if (!(options.tol_gap >= 0.0) || options.max_sweeps < 1)
        throw IllPosed("saddle tolerance must be non-negative and max_sweeps positive");
    if (!(options.theta > 0.0 && options.theta <= 1.0) || !(options.theta_min > 0.0))
        throw IllPosed("averaging weight must lie in (0, 1]");

    const double V = spec.omega_measure();
    SaddleState st;

    UpperSide up = upper_side(spec, law, params, zero_potential(spec), options.outer);
    DensityField rho = up.chi;
    PotentialField u = solve_inner(spec, law, params, rho, options.inner).u;
    double psi = eval_J(spec, law, params, u, rho);
    PotentialField u_lower = u;

    // every iterate u_k stays a candidate for u_mM; its max estimate rises
    // whenever a better indicator turns up
    struct Candidate {
        PotentialField u;
        DensityField rho;
        DensityField chi_up;
        double m;
    };
    std::vector<Candidate> candidates;
    double best_upper = inf, best_lower = -inf;
    double best_relaxed_upper = inf, best_relaxed_lower = -inf;
    double theta = options.theta;
    OuterResult prox_warm;

    for (int k = 0; k < options.max_sweeps; ++k) {
        const DensityField chi = binarize(spec, rho, V);
        InnerResult lower = solve_inner(spec, law, params, chi, options.inner, &u_lower);
        u_lower = lower.u;
        up = upper_side(spec, law, params, u, options.outer, &up.outer);
        // the heuristic binary maximizer competes with the indicators already
        // visited; any of them is a feasible point of max_chi J(u, chi)
        const double current = eval_J(spec, law, params, u, chi);
        double m = up.value;
        const DensityField* chi_up = &up.chi;
        if (current > m) {
            m = current;
            chi_up = &chi;
        }
        if (st.chi.size() != 0) {
            const double visited = eval_J(spec, law, params, u, st.chi);
            if (visited > m) {
                m = visited;
                chi_up = &st.chi;
            }
        }

        SaddleRecord rec;
        rec.sweep = k;
        rec.lower = lower.report.objective;
        rec.upper = m;
        rec.relaxed_upper = up.relaxed;
        rec.relaxed_lower = psi;
        rec.sweep_gap = m - rec.lower;
        rec.current = current;
        rec.u_norm = gradient_norm(spec, u);
        rec.volume = volume(spec, chi);

        candidates.push_back(Candidate{u, rho, *chi_up, m});
        if (rec.lower > best_lower) {
            best_lower = rec.lower;
            st.chi = chi;
            st.u_chi = lower.u;
            for (auto& c : candidates) {
                const double v = eval_J(spec, law, params, c.u, chi);
                if (v > c.m) {
                    c.m = v;
                    c.chi_up = chi;
                }
            }
        }
        const auto best = std::min_element(candidates.begin(), candidates.end(),
                                           [](const Candidate& a, const Candidate& b) { return a.m < b.m; });
        if (best->m != best_upper || st.u.size() == 0) {
            best_upper = best->m;
            st.u = best->u;
            st.rho = best->rho;
            st.chi_upper = best->chi_up;
        }
        best_relaxed_upper = std::min(best_relaxed_upper, rec.relaxed_upper);
        best_relaxed_lower = std::max(best_relaxed_lower, rec.relaxed_lower);
        rec.gap = best_upper - best_lower;
        st.sweeps = k + 1;

        if (rec.gap <= options.tol_gap * (1.0 + std::abs(best_upper))) {
            rec.theta = 0.0;
            st.history.push_back(rec);
            st.converged = true;
            break;
        }

        // Proximal ascent on rho -> min_u J(u, rho) with step theta. The step
        // is accepted when the smooth part min_u J + tau TV grows at least as
        // its quadratic model predicts; otherwise theta is halved.
        const double w = spec.cell_measure();
        const double smooth = psi + params.tau * total_variation(spec, rho);
        for (;;) {
            OuterResult step =
                solve_outer_proximal(spec, up.gain, params.tau, V, rho, theta, options.outer, &prox_warm);
            PotentialField u_trial = solve_inner(spec, law, params, step.rho, options.inner, &u).u;
            const double psi_trial = eval_J(spec, law, params, u_trial, step.rho);
            double model = 0.0;
            for (std::size_t c = 0; c < rho.size(); ++c) {
                const double delta = step.rho[c] - rho[c];
                model += w * (up.gain[c] * delta - 0.5 / theta * delta * delta);
            }
            const double smooth_trial = psi_trial + params.tau * total_variation(spec, step.rho);
            const double slack = 1e-12 * (1.0 + std::abs(smooth));
            const bool last = 0.5 * theta < options.theta_min;
            if (smooth_trial >= smooth + model - slack || last) {
                rho = step.rho;
                u = std::move(u_trial);
                psi = psi_trial;
                prox_warm = std::move(step);
                break;
            }
            theta *= 0.5;
        }
        rec.theta = theta;
        st.history.push_back(rec);
        theta = std::min(2.0 * theta, options.theta);
    }

    st.lower = best_lower;
    st.upper = best_upper;
    st.gap = best_upper - best_lower;
    st.relaxed_upper = best_relaxed_upper;
    st.relaxed_lower = best_relaxed_lower;
    st.relaxed_gap = best_relaxed_upper - best_relaxed_lower;
    const int w = options.monotone_window;
    for (std::size_t i = static_cast<std::size_t>(std::max(w, 1)); i < st.history.size(); ++i)
        if (st.history[i].sweep_gap > st.history[i - static_cast<std::size_t>(w)].sweep_gap)
            st.non_monotone = true;

    if (!st.converged)
        throw SaddleNonConvergence("saddle gap " + std::to_string(st.gap) + " above tolerance after " +
                                       std::to_string(st.sweeps) + " sweeps",
                                   std::move(st));
    return st;
}

// ---------------------------------------------------------------------------

VerifyReport check_saddle(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                          const PotentialField& u0, const DensityField& chi0, int n_probes, std::uint64_t seed,
                          double tol)
{
    check_nodes(spec, u0);
    check_density(spec, chi0);
    std::mt19937_64 rng(seed);
    const double j0 = eval_J(spec, law, params, u0, chi0);
    const double bound = tol * (1.0 + std::abs(j0));

    // left inequality: J(u0, chi) <= J(u0, chi0)
    double left = -inf;
    auto probe_chi = [&](const DensityField& chi) { left = std::max(left, eval_J(spec, law, params, u0, chi) - j0); };
    for (const DensityField& chi : chi_probes(spec, chi0, n_probes, rng))
        probe_chi(chi);
    probe_chi(upper_side(spec, law, params, u0, OuterOptions{}).chi);
    if (fits_enumeration(spec))
        for_each_indicator(spec.num_cells(), whole_cells(spec, spec.omega_measure()), probe_chi);

    // right inequality: J(u0, chi0) <= J(u, chi0)
    double right = -inf;
    auto probe_u = [&](const PotentialField& u) { right = std::max(right, j0 - eval_J(spec, law, params, u, chi0)); };
    const double scales[] = {1e-4, 1e-2, 1.0};
    for (int i = 0; i < n_probes; ++i) {
        const PotentialField v = random_direction(spec, rng, false);
        const double eps = scales[i % 3];
        probe_u(axpy(u0, eps, v));
        probe_u(axpy(u0, -eps, v));
    }
    for (double alpha : {1.0 / cm_bound(law), 0.0, 0.5, 2.0}) {
        PotentialField u = u0;
        for (double& x : u)
            x *= alpha;
        probe_u(u);
    }
    try {
        probe_u(solve_inner(spec, law, params, chi0, InnerOptions{}, &u0).u);
    } catch (const InnerNonConvergence& e) {
        probe_u(e.best());
    }

    VerifyReport rep;
    rep.add("saddle.left", left, bound, left <= bound);
    rep.add("saddle.right", right, bound, right <= bound);
    return rep;
}

VerifyReport verify_norm_bound(const DomainSpec& spec, const PhysicalParams& params, const PotentialField& u0)
{
    check_nodes(spec, u0);
    const double measured = gradient_norm(spec, u0);
    const double bound = 2.0 * params.mu_drive * std::sqrt(spec.domain_measure());
    VerifyReport rep;
    rep.add("norm_bound", measured, bound, measured <= bound * (1.0 + 1e-12));
    return rep;
}

double bottom_distance(const DomainSpec& spec, const DensityField& chi0)
{
    check_cells(spec, chi0);
    int empty = 0;
    for (int k = 0; k < spec.n_z; ++k) {
        bool any = false;
        for (std::size_t col = 0; col < spec.num_columns() && !any; ++col)
            any = chi0[spec.cell_in_column(col, k)] > 0.5;
        if (any)
            break;
        ++empty;
    }
    return empty * spec.h_z();
}

VerifyReport verify_bottom_distance(const DomainSpec& spec, const MagnetizationLaw& law,
                                    const PhysicalParams& params, const DensityField& chi0)
{
    const double measured = bottom_distance(spec, chi0);
    const double bound = params.mu_drive * params.mu_drive / params.b * (1.0 - 1.0 / cm_bound(law));
    VerifyReport rep;
    rep.add("bottom_distance", measured, bound, measured <= bound + 1e-12);
    return rep;
}

VerifyReport verify_duality_linear(const DomainSpec& spec, const PhysicalParams& params, double mu_const,
                                   const DensityField& chi, const InnerOptions& inner, int n_probes,
                                   std::uint64_t seed, double tol)
{
    const MagnetizationLaw law = MagnetizationLaw::linear(mu_const);
    const InnerResult sol = solve_inner(spec, law, params, chi, inner);
    const PotentialField& u = sol.u;
    const double j = sol.report.objective;
    const DualField p = p_star_from_u(spec, params, mu_const, u, chi);
    const double et = eval_E_tilde(spec, params, mu_const, p, chi);
    const double e = eval_E(spec, params, mu_const, u, chi);

    VerifyReport rep;
    const double sum = std::abs(j + et);
    rep.add("duality.J_plus_Etilde", sum, tol * (1.0 + std::abs(j)), sum <= tol * (1.0 + std::abs(j)));
    const double diff = std::abs(e - et);
    rep.add("duality.E_equals_Etilde", diff, tol * (1.0 + std::abs(e)), diff <= tol * (1.0 + std::abs(e)));
    const double yd = verify_Yd(spec, p);
    rep.add("duality.Yd_residual", yd, 10.0 * inner.tol, yd <= 10.0 * inner.tol);

    // dual probes q = p + (s - grad phi), phi the projection of s onto gradients
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const std::size_t n = spec.num_cells();
    const CellField ones(n, 1.0);
    const std::vector<double> weight(n, spec.cell_measure());
    double worst = inf;
    for (int i = 0; i < n_probes; ++i) {
        CellVectorField s(spec.dim, n);
        for (double& x : s.data)
            x = normal(rng);
        PotentialField rhs(spec.num_nodes());
        gradient_adjoint_add(spec, s, weight, rhs);
        const PotentialField phi = solve_weighted_poisson(spec, ones, rhs, 1e-14, 100000).u;
        const CellVectorField gphi = gradient(spec, phi);
        const double eps = std::pow(10.0, -(i % 4));
        DualField q = p;
        for (std::size_t k = 0; k < q.data.size(); ++k)
            q.data[k] += eps * (s.data[k] - gphi.data[k]);
        worst = std::min(worst, eval_E_tilde(spec, params, mu_const, q, chi) - et);
    }
    if (n_probes > 0) {
        const double b = -tol * (1.0 + std::abs(et));
        rep.add("duality.dual_probes", worst, b, worst >= b);
    }
    return rep;
}

VerifyReport verify_energy_minimality(const DomainSpec& spec, const PhysicalParams& params, double mu_const,
                                      const PotentialField& u0, const DensityField& chi0, int n_probes,
                                      std::uint64_t seed, double tol)
{
    check_nodes(spec, u0);
    check_density(spec, chi0);
    std::mt19937_64 rng(seed);
    const double e0 = eval_energy(spec, params, mu_const, u0, chi0);
    const double b = -tol * (1.0 + std::abs(e0));

    double worst_u = inf;
    const double scales[] = {1e-4, 1e-2, 1.0};
    for (int i = 0; i < n_probes; ++i) {
        const PotentialField v = random_direction(spec, rng, true);
        const double eps = scales[i % 3];
        worst_u = std::min(worst_u, eval_energy(spec, params, mu_const, axpy(u0, eps, v), chi0) - e0);
        worst_u = std::min(worst_u, eval_energy(spec, params, mu_const, axpy(u0, -eps, v), chi0) - e0);
    }
    double worst_chi = inf;
    for (const DensityField& chi : chi_probes(spec, chi0, n_probes, rng))
        worst_chi = std::min(worst_chi, eval_energy(spec, params, mu_const, u0, chi) - e0);

    VerifyReport rep;
    if (n_probes > 0)
        rep.add("energy.u_probes", worst_u, b, worst_u >= b);
    if (worst_chi < inf)
        rep.add("energy.chi_probes", worst_chi, b, worst_chi >= b);
    return rep;
}

// ---------------------------------------------------------------------------

FreeSurfaceResidual free_surface_residual(const DomainSpec& spec, const MagnetizationLaw& law,
                                          const PhysicalParams& params, const PotentialField& u,
                                          const HeightField& eta)
{
    check_nodes(spec, u);
    check_columns(spec, eta);
    const int d = spec.dim;
    const int nz = spec.n_z;
    const double hz = spec.h_z();
    const double area = spec.omega_measure() / static_cast<double>(spec.num_columns());

    FreeSurfaceResidual out;
    out.residual = ColumnField(spec.num_columns(), 0.0);
    std::vector<std::size_t> used;
    double phi[3], psi[3];
    for (std::size_t col = 0; col < spec.num_columns(); ++col) {
        const int k = static_cast<int>(std::lround((eta[col] + 1.0) / hz));
        if (k <= 0 || k >= nz)
            continue;
        const std::size_t below = spec.cell_in_column(col, k - 1);
        const std::size_t above = spec.cell_in_column(col, k);
        cell_gradient(spec, u, below, std::span<double>(phi, d));
        cell_gradient(spec, u, above, std::span<double>(psi, d));

        const std::array<double, 2> ge = height_gradient(spec, eta, col);
        double ge2 = 0.0;
        for (int a = 0; a < d - 1; ++a)
            ge2 += ge[a] * ge[a];
        const double root = std::sqrt(1.0 + ge2);
        double phi_n = phi[d - 1], psi_n = psi[d - 1], s_phi = 0.0, s_psi = 0.0;
        for (int a = 0; a < d - 1; ++a) {
            phi_n -= ge[a] * phi[a];
            psi_n -= ge[a] * psi[a];
        }
        phi_n /= root;
        psi_n /= root;
        for (int a = 0; a < d; ++a) {
            s_phi += phi[a] * phi[a];
            s_psi += psi[a] * psi[a];
        }
        s_phi = std::sqrt(s_phi);
        const double r = m_eval(law, s_phi) - 0.5 * s_psi +
                         root * (psi[d - 1] * psi_n - mu_eval(law, s_phi) * phi[d - 1] * phi_n) +
                         params.tau * mean_curvature(spec, eta, col) - params.b * eta[col] - params.p0;
        out.residual[col] = r;
        used.push_back(col);

        const double trace_phi = cell_average(spec, u, below) + 0.5 * hz * phi[d - 1];
        const double trace_psi = cell_average(spec, u, above) - 0.5 * hz * psi[d - 1];
        out.max_jump = std::max(out.max_jump, std::abs(trace_phi - trace_psi));
    }
    if (used.empty())
        return out;
    double sum = 0.0, sq = 0.0;
    for (std::size_t col : used) {
        sum += out.residual[col];
        sq += out.residual[col] * out.residual[col];
    }
    out.mean = sum / static_cast<double>(used.size());
    out.norm = std::sqrt(sq * area);
    double centered = 0.0;
    for (std::size_t col : used)
        centered += (out.residual[col] - out.mean) * (out.residual[col] - out.mean);
    out.norm_mean_free = std::sqrt(centered * area);
    return out;
}

VerifyReport nontriviality_check(const DomainSpec& spec, const MagnetizationLaw& law, const PhysicalParams& params,
                                 const DensityField& chi0)
{
    check_density(spec, chi0);
    const PotentialField bump = sample_nodes(spec, [&](const std::array<double, 3>& x) {
        double v = x[spec.dim - 1];
        for (int a = 0; a < spec.dim - 1; ++a) {
            const double s = std::sin(std::numbers::pi * x[a] / spec.extent[a]);
            v *= s * s;
        }
        return v;
    });
    const double j0 = eval_J(spec, law, params, zero_potential(spec), chi0);
    double best = inf;
    for (int i = 0; i <= 8; ++i) {
        const double eps = std::pow(10.0, -3.0 + 0.25 * i);
        PotentialField u = bump;
        for (double& x : u)
            x *= eps;
        best = std::min(best, eval_J(spec, law, params, u, chi0) - j0);
    }
    VerifyReport rep;
    if (params.mu_drive == 0.0)
        rep.add("nontriviality.zero_drive", best, 0.0, best >= 0.0, false);
    else
        rep.add("nontriviality", best, 0.0, best < 0.0);
    return rep;
}

BubbleCensus bubble_census(const DomainSpec& spec, const DensityField& chi)
{
    check_cells(spec, chi);
    const std::size_t n = chi.size();
    std::vector<int> label(n, -1);
    BubbleCensus out;
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (label[seed] >= 0)
            continue;
        const bool fluid = chi[seed] > 0.5;
        label[seed] = 1;
        stack.assign(1, seed);
        bool touches_top = false;
        while (!stack.empty()) {
            const std::size_t c = stack.back();
            stack.pop_back();
            const DomainSpec::Index idx = spec.cell_coords(c);
            if (idx[spec.dim - 1] == spec.n_z - 1)
                touches_top = true;
            for (int a = 0; a < spec.dim; ++a) {
                for (int dir : {-1, 1}) {
                    DomainSpec::Index nb = idx;
                    nb[a] += dir;
                    if (nb[a] < 0 || nb[a] >= spec.cells_along(a))
                        continue;
                    const std::size_t m = spec.cell_index(nb);
                    if (label[m] < 0 && (chi[m] > 0.5) == fluid) {
                        label[m] = 1;
                        stack.push_back(m);
                    }
                }
            }
        }
        if (fluid) {
            ++out.fluid_components;
        } else {
            ++out.air_components;
            if (!touches_top)
                ++out.enclosed_air;
        }
    }
    return out;
}

} // namespace ferro
