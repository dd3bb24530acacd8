#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ferro/functional.hpp"
#include "ferro/outer.hpp"

#include <bit>
#include <cmath>
#include <random>

using namespace ferro;

namespace {

CellField random_gain(const DomainSpec& s, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> n01;
    CellField g(s.num_cells());
    for (auto& v : g)
        v = scale * n01(rng);
    return g;
}

// Best binary field of the given volume by enumerating every subset.
double brute_force(const DomainSpec& s, const CellField& g, double tau, double V, DensityField* best = nullptr)
{
    const auto n = static_cast<unsigned>(s.num_cells());
    const auto k = static_cast<int>(std::llround(V / s.cell_measure()));
    double top = -1e300;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (std::popcount(mask) != k)
            continue;
        DensityField chi(n);
        for (unsigned c = 0; c < n; ++c)
            chi[c] = (mask >> c) & 1u;
        const double v = outer_objective(s, g, tau, chi);
        if (v > top) {
            top = v;
            if (best)
                *best = chi;
        }
    }
    return top;
}

std::vector<DomainSpec> small_grids()
{
    std::vector<DomainSpec> out;
    for (int nz : {2, 4, 6, 8})
        for (int nx = 2; nx * nz <= 16; ++nx)
            out.push_back(DomainSpec::make_2d(1.0, nx, nz));
    return out;
}

} // namespace

TEST_CASE("bathtub oracle examples")
{
    const auto s = DomainSpec::make_2d(1.0, 3, 4);
    CellField up(s.num_cells()), down(s.num_cells()), flat(s.num_cells(), 0.0);
    for (std::size_t c = 0; c < up.size(); ++c) {
        up[c] = s.cell_center_z(c);
        down[c] = -s.cell_center_z(c);
    }
    const auto top = bathtub_oracle(s, up, 1.0);
    const auto bottom = bathtub_oracle(s, down, 1.0);
    for (std::size_t c = 0; c < top.size(); ++c) {
        CHECK(top[c] == (s.cell_center_z(c) > 0 ? 1.0 : 0.0));
        CHECK(bottom[c] == (s.cell_center_z(c) < 0 ? 1.0 : 0.0));
    }
    const auto tie = bathtub_oracle(s, flat, 1.0);
    for (std::size_t c = 0; c < tie.size(); ++c)
        CHECK(tie[c] == (c < 6 ? 1.0 : 0.0));
    // fractional last cell
    const double w = s.cell_measure();
    const auto frac = bathtub_oracle(s, up, 2.5 * w);
    CHECK(volume(s, frac) == doctest::Approx(2.5 * w));
}

TEST_CASE("binarize examples")
{
    const auto s = DomainSpec::make_2d(1.0, 4, 6);
    const auto layer = indicator_from_graph(s, HeightField(s.num_columns(), 0.0));
    CHECK(binarize(s, layer, 1.0) == layer);
    CHECK(binarize(s, constant_density(s, 0.5), 1.0) == layer);
    DensityField ramp(s.num_cells());
    for (std::size_t c = 0; c < ramp.size(); ++c)
        ramp[c] = (1.0 - s.cell_center_z(c)) / 2.0;
    // one third of the volume: flat layer at the one-third quantile height
    const double h = 2.0 / 6;
    const auto third = binarize(s, ramp, 4 * 2 * 0.25 * h);
    CHECK(third == indicator_from_graph(s, HeightField(s.num_columns(), -1.0 + 2 * h)));
}

TEST_CASE("tau = 0 matches the bathtub oracle exactly")
{
    std::mt19937_64 rng(31);
    const auto s = DomainSpec::make_2d(1.0, 6, 8);
    for (int t = 0; t < 50; ++t) {
        const auto g = random_gain(s, rng);
        for (auto mode : {OuterMode::binary, OuterMode::relaxed}) {
            OuterOptions opt;
            opt.mode = mode;
            const auto r = solve_outer(s, g, 0.0, 1.0, opt);
            REQUIRE(r.rho == bathtub_oracle(s, g, 1.0));
            CHECK(r.report.upper_bound >= r.report.binary_value - 1e-12);
            CHECK(r.report.upper_bound == doctest::Approx(r.report.binary_value).epsilon(1e-12));
        }
    }
}

TEST_CASE("u = 0 gain field gives the flat bottom layer")
{
    const auto s = DomainSpec::make_2d(1.0, 3, 4);
    const PhysicalParams p{1.0, 0.05, 0.0, 0.5};
    const auto g = gain_field(s, MagnetizationLaw::linear(2.0), p, zero_potential(s));
    DensityField best;
    brute_force(s, g, p.tau, 1.0, &best);
    const auto layer = indicator_from_graph(s, HeightField(s.num_columns(), 0.0));
    CHECK(best == layer);
    CHECK(solve_outer(s, g, p.tau, 1.0).rho == layer);
}

TEST_CASE("binary optimum equals exhaustive search on small grids")
{
    std::mt19937_64 rng(32);
    for (const auto& s : small_grids())
        for (double tau : {0.0, 0.05, 0.5})
            for (int t = 0; t < 5; ++t) {
                const auto g = random_gain(s, rng);
                const double V = s.omega_measure();
                const auto r = solve_outer(s, g, tau, V);
                const double bf = brute_force(s, g, tau, V);
                CHECK(std::abs(r.report.binary_value - bf) <= 1e-9);
                CHECK(r.report.volume_error <= 1e-12);
                CHECK(is_binary(r.rho));
                CHECK(r.report.upper_bound >= bf - 1e-7);
            }
}

TEST_CASE("relaxed maximizer beats random feasible probes")
{
    std::mt19937_64 rng(33);
    const auto s = DomainSpec::make_2d(1.0, 8, 8);
    const auto g = random_gain(s, rng);
    const double tau = 0.1, V = 1.0;
    OuterOptions opt;
    opt.mode = OuterMode::relaxed;
    opt.tol = 1e-6;
    opt.max_iter = 100000;
    const auto r = solve_outer(s, g, tau, V, opt);
    CHECK(std::abs(volume(s, r.rho) - V) <= opt.tol * s.domain_measure());
    for (double v : r.rho)
        REQUIRE((v >= 0.0 && v <= 1.0));
    CHECK(r.report.residual <= opt.tol * s.domain_measure() * (1 + 1e-9));
    CHECK(r.report.upper_bound >= r.report.relaxed_value - 1e-12);
    CHECK(r.report.upper_bound - r.report.relaxed_value <= 1e-5);
    std::uniform_real_distribution<double> unif(0, 1);
    for (int t = 0; t < 100; ++t) {
        DensityField probe(s.num_cells());
        for (auto& v : probe)
            v = unif(rng);
        // rescale into the volume slice, staying in the box
        const double vol = volume(s, probe);
        for (auto& v : probe)
            v = std::min(1.0, v * V / vol);
        double deficit = V - volume(s, probe);
        for (auto& v : probe) {
            const double add = std::min(1.0 - v, deficit / s.cell_measure());
            v += add;
            deficit -= add * s.cell_measure();
        }
        CHECK(outer_objective(s, g, tau, probe) <= r.report.relaxed_value + 1e-6);
    }
}

TEST_CASE("volume is monotone in the multiplier")
{
    std::mt19937_64 rng(34);
    const auto s = DomainSpec::make_2d(1.0, 6, 6);
    const auto g = random_gain(s, rng);
    double prev = 1e300;
    FixedMultiplierResult warm;
    const FixedMultiplierResult* wp = nullptr;
    for (double lambda = -3.0; lambda <= 3.0; lambda += 0.25) {
        warm = solve_fixed_multiplier(s, g, 0.2, lambda, 1e-9, 200000, wp);
        wp = &warm;
        const double v = volume(s, warm.rho);
        CHECK(v <= prev + 1e-6);
        prev = v;
    }
}

TEST_CASE("infeasible volume")
{
    const auto s = DomainSpec::make_2d(1.0, 4, 4);
    const CellField g(s.num_cells(), 0.0);
    CHECK_THROWS_AS(solve_outer(s, g, 0.1, 0.0), InfeasibleVolume);
    CHECK_THROWS_AS(solve_outer(s, g, 0.1, 2.0), InfeasibleVolume);
}

TEST_CASE("pair swaps never lower the objective")
{
    std::mt19937_64 rng(35);
    const auto s = DomainSpec::make_2d(1.0, 8, 8);
    const auto g = random_gain(s, rng);
    auto chi = binarize(s, constant_density(s, 0.5), 1.0);
    const double before = outer_objective(s, g, 0.1, chi);
    swap_local_search(s, g, 0.1, chi, 1000);
    CHECK(outer_objective(s, g, 0.1, chi) >= before);
    CHECK(volume(s, chi) == doctest::Approx(1.0));
}

namespace {

// Box-and-volume projection by plain bisection on the shift.
DensityField project_by_bisection(const std::vector<double>& y, double cells)
{
    double lo = -10.0, hi = 10.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double s = 0.0;
        for (double v : y)
            s += std::clamp(v - mid, 0.0, 1.0);
        (s > cells ? lo : hi) = mid;
    }
    DensityField out(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = std::clamp(y[i] - 0.5 * (lo + hi), 0.0, 1.0);
    return out;
}

double prox_value(const DomainSpec& s, const CellField& g, double tau, const DensityField& rho,
                  const DensityField& center, double eta)
{
    double q = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i)
        q += (rho[i] - center[i]) * (rho[i] - center[i]);
    return outer_objective(s, g, tau, rho) - 0.5 * s.cell_measure() / eta * q;
}

} // namespace

TEST_CASE("proximal step without perimeter is a projection")
{
    std::mt19937_64 rng(40);
    const auto s = DomainSpec::make_2d(1.0, 8, 8);
    const auto g = random_gain(s, rng);
    const DensityField center = bathtub_oracle(s, random_gain(s, rng), 1.0);
    const double eta = 0.3;
    std::vector<double> y(g.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = center[i] + eta * g[i];
    const DensityField expect = project_by_bisection(y, 1.0 / s.cell_measure());
    const auto r = solve_outer_proximal(s, g, 0.0, 1.0, center, eta);
    for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(r.rho[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("proximal step beats random feasible probes")
{
    std::mt19937_64 rng(41);
    const auto s = DomainSpec::make_2d(1.0, 8, 8);
    const auto g = random_gain(s, rng);
    const double tau = 0.1, eta = 0.5, V = 1.0;
    const DensityField center = constant_density(s, 0.5);
    OuterOptions opt;
    opt.tol = 1e-9;
    opt.max_iter = 200000;
    const auto r = solve_outer_proximal(s, g, tau, V, center, eta, opt);
    CHECK(r.report.residual <= 1e-9 * s.domain_measure());
    CHECK(std::abs(volume(s, r.rho) - V) <= 1e-12);
    const double best = prox_value(s, g, tau, r.rho, center, eta);
    std::uniform_real_distribution<double> unif(-0.2, 0.2);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> y(r.rho.raw());
        for (double& v : y)
            v += unif(rng);
        const DensityField probe = project_by_bisection(y, V / s.cell_measure());
        CHECK(prox_value(s, g, tau, probe, center, eta) <= best + 1e-8);
    }
}

TEST_CASE("warm start reproduces the relaxed optimum")
{
    std::mt19937_64 rng(42);
    const auto s = DomainSpec::make_2d(1.0, 16, 16);
    const auto g = random_gain(s, rng);
    OuterOptions opt;
    opt.mode = OuterMode::relaxed;
    opt.max_iter = 100000;
    const auto cold = solve_outer(s, g, 0.1, 1.0, opt);
    const auto warm = solve_outer(s, g, 0.1, 1.0, opt, &cold);
    CHECK(warm.report.iterations <= cold.report.iterations);
    CHECK(warm.report.upper_bound >= warm.report.relaxed_value - 1e-12);
    CHECK(std::abs(warm.report.relaxed_value - cold.report.relaxed_value) <= 2.0 * opt.tol * s.domain_measure());
}
