#include "ferro/outer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ferro {

namespace {

struct Axes {
    int dim;
    std::array<std::size_t, 3> stride{};
    std::array<double, 3> inv_h{};
    std::array<int, 3> n{};
};

Axes axes_of(const DomainSpec& spec)
{
    Axes ax{spec.dim};
    for (int a = 0; a < spec.dim; ++a) {
        ax.stride[a] = spec.cell_stride(a);
        ax.inv_h[a] = 1.0 / spec.spacing(a);
        ax.n[a] = spec.cells_along(a);
    }
    return ax;
}

// |D rho| at cell c (forward differences, zero across the outer boundary).
double local_tv(const DomainSpec& spec, const Axes& ax, const DensityField& rho, std::size_t c)
{
    const auto idx = spec.cell_coords(c);
    double sq = 0.0;
    for (int a = 0; a < ax.dim; ++a) {
        if (idx[a] + 1 < ax.n[a]) {
            const double d = (rho[c + ax.stride[a]] - rho[c]) * ax.inv_h[a];
            sq += d * d;
        }
    }
    return std::sqrt(sq);
}

// Sum of |D rho| over the cells whose forward difference involves cell c.
double tv_around(const DomainSpec& spec, const Axes& ax, const DensityField& rho, std::size_t c)
{
    const auto idx = spec.cell_coords(c);
    double s = local_tv(spec, ax, rho, c);
    for (int a = 0; a < ax.dim; ++a)
        if (idx[a] > 0)
            s += local_tv(spec, ax, rho, c - ax.stride[a]);
    return s;
}

// Change of sum_c (g rho) - tau sum |D rho| (per unit cell measure) when cell c is toggled.
double toggle_gain(const DomainSpec& spec, const Axes& ax, const CellField& g, double tau, DensityField& chi,
                   std::size_t c)
{
    const double before = tv_around(spec, ax, chi, c);
    const double old = chi[c];
    chi[c] = 1.0 - old;
    const double after = tv_around(spec, ax, chi, c);
    chi[c] = old;
    return g[c] * (1.0 - 2.0 * old) - tau * (after - before);
}

std::size_t whole_cells(const DomainSpec& spec, double V)
{
    const double n = V / spec.cell_measure();
    const auto k = static_cast<std::size_t>(std::llround(n));
    return std::min(k, spec.num_cells());
}

void check_volume(const DomainSpec& spec, double V)
{
    if (!(V > 0.0 && V < spec.domain_measure()))
        throw InfeasibleVolume("volume " + std::to_string(V) + " outside (0, |D|)");
}

double max_abs(const CellField& g)
{
    double m = 0.0;
    for (double v : g)
        m = std::max(m, std::abs(v));
    return m;
}

constexpr std::size_t small_grid_cells = 16;

} // namespace

double outer_objective(const DomainSpec& spec, const CellField& g, double tau, const DensityField& rho)
{
    check_cells(spec, g);
    check_cells(spec, rho);
    double s = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c)
        s += g[c] * rho[c];
    return s * spec.cell_measure() - tau * total_variation(spec, rho);
}

DensityField bathtub_oracle(const DomainSpec& spec, const CellField& g, double V)
{
    check_cells(spec, g);
    const std::size_t n = g.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });
    DensityField rho(n, 0.0);
    double remaining = std::clamp(V / spec.cell_measure(), 0.0, static_cast<double>(n));
    // guard against V/w landing a rounding error away from a whole number
    const double nearest = std::round(remaining);
    if (std::abs(remaining - nearest) <= 1e-9 * std::max(1.0, nearest))
        remaining = nearest;
    for (std::size_t i = 0; i < n && remaining > 0.0; ++i) {
        const double f = std::min(1.0, remaining);
        rho[order[i]] = f;
        remaining -= f;
    }
    return rho;
}

DensityField binarize(const DomainSpec& spec, const DensityField& rho, double V)
{
    check_cells(spec, rho);
    const std::size_t n = rho.size();
    const std::size_t k = whole_cells(spec, V);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto nz = static_cast<std::size_t>(spec.n_z);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (rho[a] != rho[b])
            return rho[a] > rho[b];
        return a % nz < b % nz; // lowest z first; stable sort keeps index order
    });
    DensityField chi(n, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        chi[order[i]] = 1.0;
    return chi;
}

int swap_local_search(const DomainSpec& spec, const CellField& g, double tau, DensityField& chi,
                      std::size_t all_cells_below)
{
    check_cells(spec, g);
    check_cells(spec, chi);
    const Axes ax = axes_of(spec);
    const std::size_t n = chi.size();
    const double scale = 1.0 + max_abs(g) + tau * 4.0 * ax.inv_h[0];
    const double threshold = 1e-12 * scale;

    auto on_interface = [&](std::size_t c) {
        const auto idx = spec.cell_coords(c);
        for (int a = 0; a < ax.dim; ++a) {
            if (idx[a] > 0 && chi[c - ax.stride[a]] != chi[c])
                return true;
            if (idx[a] + 1 < ax.n[a] && chi[c + ax.stride[a]] != chi[c])
                return true;
        }
        return false;
    };

    int swaps = 0;
    const int max_passes = 1000;
    for (int pass = 0; pass < max_passes; ++pass) {
        std::vector<std::size_t> filled, empty;
        for (std::size_t c = 0; c < n; ++c) {
            if (n > all_cells_below && !on_interface(c))
                continue;
            (chi[c] == 1.0 ? filled : empty).push_back(c);
        }
        bool improved = false;
        for (std::size_t i : filled) {
            if (chi[i] != 1.0)
                continue;
            const double gi = toggle_gain(spec, ax, g, tau, chi, i);
            chi[i] = 0.0;
            double best = threshold;
            std::size_t best_j = n;
            for (std::size_t j : empty) {
                if (chi[j] != 0.0)
                    continue;
                const double gain = gi + toggle_gain(spec, ax, g, tau, chi, j);
                if (gain > best) {
                    best = gain;
                    best_j = j;
                }
            }
            if (best_j < n) {
                chi[best_j] = 1.0;
                ++swaps;
                improved = true;
            } else {
                chi[i] = 1.0;
            }
        }
        if (!improved)
            break;
    }
    return swaps;
}

namespace {

// Thresholds every seed at the volume-matching level, adds the tau = 0
// bathtub fill, polishes the most promising candidates by pair swaps and
// keeps the best. Ties keep the earliest candidate.
DensityField best_binarization(const DomainSpec& spec, const CellField& g, double tau, double V,
                               const std::vector<DensityField>& seeds, bool local_search, int& swaps)
{
    std::vector<DensityField> cand;
    cand.push_back(binarize(spec, seeds.back(), V));
    for (std::size_t i = 0; i + 1 < seeds.size(); ++i)
        cand.push_back(binarize(spec, seeds[i], V));
    cand.push_back(bathtub_oracle(spec, g, spec.cell_measure() * whole_cells(spec, V)));
    std::vector<DensityField> unique;
    for (auto& c : cand)
        if (std::find(unique.begin(), unique.end(), c) == unique.end())
            unique.push_back(std::move(c));
    std::vector<double> value(unique.size());
    for (std::size_t i = 0; i < unique.size(); ++i)
        value[i] = outer_objective(spec, g, tau, unique[i]);
    std::vector<std::size_t> order(unique.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return value[a] > value[b]; });

    const std::size_t polish = !local_search ? 0 : spec.num_cells() <= small_grid_cells ? order.size() : 3;
    std::size_t best = order.front();
    swaps = 0;
    for (std::size_t r = 0; r < std::min(polish, order.size()); ++r) {
        const std::size_t i = order[r];
        const int s = swap_local_search(spec, g, tau, unique[i], small_grid_cells);
        value[i] = outer_objective(spec, g, tau, unique[i]);
        if (value[i] > value[best] || (value[i] == value[best] && i < best)) {
            best = i;
        }
        if (i == best)
            swaps = s;
    }
    return unique[best];
}

} // namespace

FixedMultiplierResult solve_fixed_multiplier(const DomainSpec& spec, const CellField& g, double tau, double lambda,
                                             double tol, int max_iter, const FixedMultiplierResult* warm)
{
    check_cells(spec, g);
    const Axes ax = axes_of(spec);
    const int d = ax.dim;
    const std::size_t n = g.size();
    FixedMultiplierResult r;
    if (warm) {
        r.rho = warm->rho;
        r.p = warm->p;
    } else {
        r.rho = DensityField(n, 0.5);
        r.p = CellVectorField(d, n);
    }
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i)
        c[i] = g[i] - lambda;

    if (tau == 0.0) {
        for (std::size_t i = 0; i < n; ++i)
            r.rho[i] = c[i] > 0.0 ? 1.0 : (c[i] < 0.0 ? 0.0 : r.rho[i]);
        std::fill(r.p.data.begin(), r.p.data.end(), 0.0);
        r.gap = 0.0;
        return r;
    }

    double L2 = 0.0;
    for (int a = 0; a < d; ++a)
        L2 += 4.0 * ax.inv_h[a] * ax.inv_h[a];
    const double step = 0.99 / std::sqrt(L2);

    DensityField bar = r.rho;
    CellField div(n);
    auto primal_dual_gap = [&](const CellField& dtp) {
        double primal = 0.0, dual = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            primal += tau * local_tv(spec, ax, r.rho, i) - c[i] * r.rho[i];
            dual += std::min(0.0, dtp[i] - c[i]);
        }
        return primal - dual;
    };
    const int check_every = 20;
    for (int it = 0; it < max_iter; ++it) {
        // dual ascent on p with projection onto |p_c| <= tau
        const CellVectorField db = forward_difference(spec, bar);
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0.0;
            for (int a = 0; a < d; ++a) {
                double& pa = r.p.data[i * d + a];
                pa += step * db.data[i * d + a];
                sq += pa * pa;
            }
            const double norm = std::sqrt(sq);
            if (norm > tau)
                for (int a = 0; a < d; ++a)
                    r.p.data[i * d + a] *= tau / norm;
        }
        div = forward_difference_adjoint(spec, r.p);
        for (std::size_t i = 0; i < n; ++i) {
            const double old = r.rho[i];
            const double next = std::clamp(old - step * (div[i] - c[i]), 0.0, 1.0);
            r.rho[i] = next;
            bar[i] = 2.0 * next - old;
        }
        ++r.iterations;
        if (r.iterations % check_every == 0 || it + 1 == max_iter) {
            r.gap = primal_dual_gap(forward_difference_adjoint(spec, r.p));
            if (r.gap <= tol)
                return r;
        }
    }
    return r;
}

namespace {

// Forward-difference operator with per-axis neighbour masks.
class Difference {
public:
    explicit Difference(const DomainSpec& spec) : dim_(spec.dim), n_(spec.num_cells())
    {
        for (int a = 0; a < dim_; ++a) {
            stride_[a] = spec.cell_stride(a);
            inv_h_[a] = 1.0 / spec.spacing(a);
            fwd_[a].assign(n_, 0);
        }
        for (std::size_t c = 0; c < n_; ++c) {
            const auto idx = spec.cell_coords(c);
            for (int a = 0; a < dim_; ++a)
                fwd_[a][c] = idx[a] + 1 < spec.cells_along(a);
        }
    }

    double norm_sq_bound() const
    {
        double s = 0.0;
        for (int a = 0; a < dim_; ++a)
            s += 4.0 * inv_h_[a] * inv_h_[a];
        return s;
    }

    // out[c * dim + a] = (D rho)_a(c)
    void apply(const std::vector<double>& rho, std::vector<double>& out) const
    {
        for (std::size_t c = 0; c < n_; ++c)
            for (int a = 0; a < dim_; ++a)
                out[c * dim_ + a] = fwd_[a][c] ? (rho[c + stride_[a]] - rho[c]) * inv_h_[a] : 0.0;
    }

    // out = D^T p
    void adjoint(const std::vector<double>& p, std::vector<double>& out) const
    {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t c = 0; c < n_; ++c) {
            for (int a = 0; a < dim_; ++a) {
                if (!fwd_[a][c])
                    continue;
                const double q = p[c * dim_ + a] * inv_h_[a];
                out[c] -= q;
                out[c + stride_[a]] += q;
            }
        }
    }

    double tv(const std::vector<double>& rho) const
    {
        double s = 0.0;
        for (std::size_t c = 0; c < n_; ++c) {
            double sq = 0.0;
            for (int a = 0; a < dim_; ++a) {
                if (fwd_[a][c]) {
                    const double d = (rho[c + stride_[a]] - rho[c]) * inv_h_[a];
                    sq += d * d;
                }
            }
            s += std::sqrt(sq);
        }
        return s;
    }

private:
    int dim_;
    std::size_t n_;
    std::array<std::size_t, 3> stride_{};
    std::array<double, 3> inv_h_{};
    std::array<std::vector<unsigned char>, 3> fwd_;
};

// Shift t with sum clamp(y - t, 0, 1) = K; safeguarded Newton from t.
double volume_shift(const std::vector<double>& y, double K, double t)
{
    const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
    double lo = *mn - 1.0, hi = *mx;
    if (!(t > lo && t < hi))
        t = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double f = -K;
        std::size_t free = 0;
        for (double v : y) {
            const double r = v - t;
            if (r >= 1.0)
                f += 1.0;
            else if (r > 0.0) {
                f += r;
                ++free;
            }
        }
        if (std::abs(f) <= 1e-14 * (1.0 + K))
            return t;
        if (f > 0.0)
            lo = t;
        else
            hi = t;
        double next = free > 0 ? t + f / static_cast<double>(free) : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (next == t)
            return t;
        t = next;
    }
    return t;
}

// Largest value of <z, rho> over the volume-constrained box, and the marginal value.
std::pair<double, double> top_volume_sum(std::vector<double> z, double K)
{
    const auto k = static_cast<std::size_t>(std::floor(K));
    const double frac = K - static_cast<double>(k);
    std::nth_element(z.begin(), z.begin() + static_cast<long>(k), z.end(), std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        s += z[i];
    return {s + frac * z[k], z[k]};
}

// Solutions of the fixed-multiplier problems met while bisecting on the
// volume; used as extra thresholding seeds on small grids.
std::vector<DensityField> multiplier_seeds(const DomainSpec& spec, const CellField& g, double tau, double V,
                                           double tol, int max_iter, int max_bisection)
{
    const double w = spec.cell_measure();
    const double tol_pd = tol * spec.domain_measure() / w;
    const double gmax = max_abs(g);
    double lo = -gmax - 1.0, hi = gmax + 1.0;
    FixedMultiplierResult r_lo = solve_fixed_multiplier(spec, g, tau, lo, tol_pd, max_iter);
    FixedMultiplierResult r_hi = solve_fixed_multiplier(spec, g, tau, hi, tol_pd, max_iter);
    double v_lo = volume(spec, r_lo.rho), v_hi = volume(spec, r_hi.rho);
    std::vector<DensityField> seeds;
    for (int b = 0; b < max_bisection && v_lo - v_hi > tol * spec.domain_measure(); ++b) {
        if (hi - lo <= 1e-13 * (1.0 + std::abs(lo) + std::abs(hi)))
            break;
        const double mid = 0.5 * (lo + hi);
        const bool near_lo = (v_lo - V) < (V - v_hi);
        FixedMultiplierResult r_mid =
            solve_fixed_multiplier(spec, g, tau, mid, tol_pd, max_iter, near_lo ? &r_lo : &r_hi);
        seeds.push_back(r_mid.rho);
        const double v_mid = volume(spec, r_mid.rho);
        if (v_mid >= V) {
            lo = mid;
            v_lo = v_mid;
            r_lo = std::move(r_mid);
        } else {
            hi = mid;
            v_hi = v_mid;
            r_hi = std::move(r_mid);
        }
    }
    return seeds;
}

} // namespace

OuterResult solve_outer(const DomainSpec& spec, const CellField& g, double tau, double V,
                        const OuterOptions& options, const OuterResult* warm)
{
    spec.validate();
    check_cells(spec, g);
    check_volume(spec, V);
    if (!(tau >= 0.0))
        throw IllPosed("surface tension must be non-negative");
    const double w = spec.cell_measure();
    const std::size_t n = g.size();
    const int d = spec.dim;

    OuterResult out;
    OuterReport& rep = out.report;
    out.dual = CellVectorField(d, n);

    if (tau == 0.0) {
        out.relaxed = bathtub_oracle(spec, g, V);
        out.rho = options.mode == OuterMode::binary ? bathtub_oracle(spec, g, w * whole_cells(spec, V)) : out.relaxed;
        // lambda: gain of the marginal cell
        std::vector<double> sorted(g.begin(), g.end());
        const std::size_t k = std::min(whole_cells(spec, V), n - 1);
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(k), sorted.end(), std::greater<>());
        rep.lambda = sorted[k];
        double ub = rep.lambda * V;
        for (double v : g)
            ub += w * std::max(0.0, v - rep.lambda);
        rep.upper_bound = ub;
        rep.relaxed_value = outer_objective(spec, g, tau, out.relaxed);
        rep.residual = std::max(0.0, rep.upper_bound - rep.relaxed_value);
    } else {
        const Difference D(spec);
        const double K = V / w;
        const double step = 0.99 / std::sqrt(D.norm_sq_bound());
        const double tol_gap = options.tol * spec.domain_measure() / w;

        std::vector<double> rho(n), p(n * d, 0.0), dtp(n), drho(n * d), y(n), z(n);
        double shift = 0.0;
        if (warm && warm->relaxed.size() == n && warm->dual.data.size() == p.size()) {
            y = warm->relaxed.raw();
            p = warm->dual.data;
            for (double& v : p)
                v = std::clamp(v, -tau, tau);
        } else {
            y = g.raw();
        }
        shift = volume_shift(y, K, shift);
        for (std::size_t i = 0; i < n; ++i)
            rho[i] = std::clamp(y[i] - shift, 0.0, 1.0);
        std::vector<double> bar = rho;

        double gap = std::numeric_limits<double>::infinity();
        double upper = 0.0, primal = 0.0;
        auto certify = [&] {
            D.adjoint(p, dtp);
            for (std::size_t i = 0; i < n; ++i)
                z[i] = g[i] - dtp[i];
            const auto [top, marginal] = top_volume_sum(z, K);
            double lin = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                lin += g[i] * rho[i];
            upper = top;
            primal = lin - tau * D.tv(rho);
            rep.lambda = marginal;
            gap = upper - primal;
        };
        const int check_every = 20;
        for (int it = 0; it < options.max_iter; ++it) {
            D.apply(bar, drho);
            for (std::size_t c = 0; c < n; ++c) {
                double sq = 0.0;
                for (int a = 0; a < d; ++a) {
                    double& pa = p[c * d + a];
                    pa += step * drho[c * d + a];
                    sq += pa * pa;
                }
                if (sq > tau * tau) {
                    const double f = tau / std::sqrt(sq);
                    for (int a = 0; a < d; ++a)
                        p[c * d + a] *= f;
                }
            }
            D.adjoint(p, dtp);
            for (std::size_t i = 0; i < n; ++i)
                y[i] = rho[i] - step * (dtp[i] - g[i]);
            shift = volume_shift(y, K, shift);
            for (std::size_t i = 0; i < n; ++i) {
                const double next = std::clamp(y[i] - shift, 0.0, 1.0);
                bar[i] = 2.0 * next - rho[i];
                rho[i] = next;
            }
            ++rep.iterations;
            if (rep.iterations % check_every == 0) {
                certify();
                if (gap <= tol_gap)
                    break;
            }
        }
        if (rep.iterations % check_every != 0 || rep.iterations == 0)
            certify();

        out.relaxed = DensityField(std::move(rho));
        out.dual.data = std::move(p);
        rep.upper_bound = w * upper;
        rep.relaxed_value = outer_objective(spec, g, tau, out.relaxed);
        rep.residual = std::max(0.0, rep.upper_bound - rep.relaxed_value);
        out.rho = out.relaxed;

        if (options.mode == OuterMode::binary) {
            std::vector<DensityField> seeds;
            if (n <= small_grid_cells)
                seeds = multiplier_seeds(spec, g, tau, V, options.tol, options.max_iter, options.max_bisection);
            seeds.push_back(DensityField(z));
            seeds.push_back(out.relaxed);
            out.rho = best_binarization(spec, g, tau, V, seeds, options.local_search, rep.swaps);
        } else if (rep.residual > options.tol * spec.domain_measure()) {
            rep.binary_value = rep.relaxed_value;
            rep.volume_error = std::abs(volume(spec, out.rho) - V);
            throw OuterNonConvergence("outer duality gap " + std::to_string(rep.residual) +
                                          " above tolerance after " + std::to_string(rep.iterations) +
                                          " iterations",
                                      out);
        }
    }

    rep.binary_value = outer_objective(spec, g, tau, out.rho);
    rep.volume_error = std::abs(volume(spec, out.rho) - V);
    return out;
}

OuterResult solve_outer_proximal(const DomainSpec& spec, const CellField& g, double tau, double V,
                                 const DensityField& center, double eta, const OuterOptions& options,
                                 const OuterResult* warm)
{
    spec.validate();
    check_cells(spec, g);
    check_cells(spec, center);
    check_volume(spec, V);
    if (!(tau >= 0.0) || !(eta > 0.0))
        throw IllPosed("proximal step needs tau >= 0 and eta > 0");
    const double w = spec.cell_measure();
    const std::size_t n = g.size();
    const int d = spec.dim;
    const Difference D(spec);
    const double K = V / w;
    const double tol_gap = options.tol * spec.domain_measure() / w;
    const double gamma = 1.0 / eta;

    std::vector<double> rho = center.raw(), p(n * d, 0.0), dtp(n), drho(n * d), y(n);
    if (warm && warm->dual.data.size() == p.size())
        for (std::size_t i = 0; i < p.size(); ++i)
            p[i] = std::clamp(warm->dual.data[i], -tau, tau);
    double shift = volume_shift(rho, K, 0.0);
    for (double& v : rho)
        v = std::clamp(v - shift, 0.0, 1.0);
    std::vector<double> bar = rho;

    // argmin over the box of <q, rho> + |rho - center|^2 / (2 eta) + |rho - base|^2 / (2 t)
    auto prox = [&](const std::vector<double>& base, double t, const std::vector<double>& q,
                    std::vector<double>& out) {
        const double a = 1.0 / t + gamma;
        for (std::size_t i = 0; i < n; ++i)
            y[i] = (base[i] / t + gamma * center[i] - q[i]) / a;
        shift = volume_shift(y, K, shift);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = std::clamp(y[i] - shift, 0.0, 1.0);
    };

    OuterResult out;
    OuterReport& rep = out.report;
    double gap = std::numeric_limits<double>::infinity();
    std::vector<double> q(n), rho_p(n);
    if (tau == 0.0) {
        // no perimeter: a single projection
        for (std::size_t i = 0; i < n; ++i)
            y[i] = center[i] + eta * g[i];
        shift = volume_shift(y, K, shift);
        for (std::size_t i = 0; i < n; ++i)
            rho[i] = std::clamp(y[i] - shift, 0.0, 1.0);
        gap = 0.0;
        rep.iterations = 1;
    }
    auto certify = [&] {
        double primal = tau * D.tv(rho);
        for (std::size_t i = 0; i < n; ++i)
            primal += -g[i] * rho[i] + 0.5 * gamma * (rho[i] - center[i]) * (rho[i] - center[i]);
        D.adjoint(p, dtp);
        for (std::size_t i = 0; i < n; ++i)
            q[i] = dtp[i] - g[i];
        // dual value: min over the box of <q, rho> + |rho - center|^2 / (2 eta)
        const double a = gamma;
        for (std::size_t i = 0; i < n; ++i)
            y[i] = center[i] - q[i] / a;
        double s = volume_shift(y, K, shift);
        double dual = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            rho_p[i] = std::clamp(y[i] - s, 0.0, 1.0);
            dual += q[i] * rho_p[i] + 0.5 * gamma * (rho_p[i] - center[i]) * (rho_p[i] - center[i]);
        }
        gap = primal - dual;
    };

    const double L = std::sqrt(D.norm_sq_bound());
    double t = 0.99 / L, sigma = 0.99 / L;
    const int check_every = 10;
    std::vector<double> next(n);
    for (int it = 0; it < options.max_iter && tau > 0.0; ++it) {
        D.apply(bar, drho);
        for (std::size_t c = 0; c < n; ++c) {
            double sq = 0.0;
            for (int a = 0; a < d; ++a) {
                double& pa = p[c * d + a];
                pa += sigma * drho[c * d + a];
                sq += pa * pa;
            }
            if (sq > tau * tau) {
                const double f = tau / std::sqrt(sq);
                for (int a = 0; a < d; ++a)
                    p[c * d + a] *= f;
            }
        }
        D.adjoint(p, dtp);
        for (std::size_t i = 0; i < n; ++i)
            q[i] = dtp[i] - g[i];
        prox(rho, t, q, next);
        const double th = 1.0 / std::sqrt(1.0 + 2.0 * gamma * t);
        t *= th;
        sigma /= th;
        for (std::size_t i = 0; i < n; ++i) {
            bar[i] = next[i] + th * (next[i] - rho[i]);
            rho[i] = next[i];
        }
        ++rep.iterations;
        if (rep.iterations % check_every == 0) {
            certify();
            if (gap <= tol_gap)
                break;
        }
    }
    if (tau > 0.0 && (rep.iterations % check_every != 0 || rep.iterations == 0))
        certify();

    out.relaxed = DensityField(std::move(rho));
    out.rho = out.relaxed;
    out.dual = CellVectorField(d, n);
    out.dual.data = std::move(p);
    rep.residual = w * std::max(0.0, gap);
    rep.relaxed_value = outer_objective(spec, g, tau, out.relaxed);
    rep.binary_value = rep.relaxed_value;
    rep.volume_error = std::abs(volume(spec, out.rho) - V);
    return out;
}

} // namespace ferro
