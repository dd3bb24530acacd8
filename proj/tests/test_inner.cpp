#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ferro/inner.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace ferro;

namespace {

struct Dense {
    Eigen::MatrixXd A;
    Eigen::VectorXd rhs;
    std::vector<std::size_t> free_nodes;
};

// Element-by-element assembly of the 2-D weak form with one-point (center)
// quadrature of the bilinear element.
Dense assemble_2d(const DomainSpec& s, double mu, const DensityField& rho, double mu_drive)
{
    const int nx = s.n_horizontal[0], nz = s.n_z;
    const double hx = s.extent[0] / nx, hz = 2.0 / nz, w = hx * hz;
    const std::size_t nn = static_cast<std::size_t>((nx + 1) * (nz + 1));
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nn, nn);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(nn);
    for (int i = 0; i < nx; ++i)
        for (int k = 0; k < nz; ++k) {
            const int di[4] = {0, 1, 0, 1}, dk[4] = {0, 0, 1, 1};
            double gx[4], gz[4];
            std::size_t id[4];
            for (int b = 0; b < 4; ++b) {
                gx[b] = (di[b] ? 1.0 : -1.0) / (2 * hx);
                gz[b] = (dk[b] ? 1.0 : -1.0) / (2 * hz);
                id[b] = static_cast<std::size_t>((i + di[b]) * (nz + 1) + k + dk[b]);
            }
            const double r = rho[static_cast<std::size_t>(i * nz + k)];
            const double a = mu * r + 1.0 - r;
            for (int b = 0; b < 4; ++b) {
                f(id[b]) += w * mu_drive * gz[b];
                for (int e = 0; e < 4; ++e)
                    K(id[b], id[e]) += w * a * (gx[b] * gx[e] + gz[b] * gz[e]);
            }
        }
    Dense d;
    for (std::size_t n = 0; n < nn; ++n) {
        const int i = static_cast<int>(n) / (nz + 1);
        if (i != 0 && i != nx)
            d.free_nodes.push_back(n);
    }
    const auto m = static_cast<Eigen::Index>(d.free_nodes.size());
    d.A.resize(m, m);
    d.rhs.resize(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        d.rhs(a) = f(d.free_nodes[a]);
        for (Eigen::Index b = 0; b < m; ++b)
            d.A(a, b) = K(d.free_nodes[a], d.free_nodes[b]);
    }
    return d;
}

std::vector<DensityField> patterns(const DomainSpec& s, std::mt19937_64& rng)
{
    std::vector<DensityField> out;
    out.push_back(indicator_from_graph(s, HeightField(s.num_columns(), 0.0)));
    DensityField checker(s.num_cells());
    for (std::size_t c = 0; c < checker.size(); ++c) {
        const auto idx = s.cell_coords(c);
        checker[c] = (idx[0] + idx[1]) % 2;
    }
    out.push_back(checker);
    std::uniform_real_distribution<double> unif(0, 1);
    DensityField grey(s.num_cells());
    for (auto& v : grey)
        v = unif(rng);
    out.push_back(grey);
    return out;
}

PotentialField random_potential(const DomainSpec& s, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> n01;
    PotentialField u(s.num_nodes());
    for (auto& v : u)
        v = scale * n01(rng);
    apply_lateral_zero(s, u);
    return u;
}

double max_abs_diff(const PotentialField& a, const PotentialField& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("zero drive gives the zero potential")
{
    const auto s = DomainSpec::make_2d(1.0, 6, 6);
    std::mt19937_64 rng(1);
    for (const auto& law : {MagnetizationLaw::linear(2.0), MagnetizationLaw::langevin(1.0, 1.0)}) {
        const PhysicalParams p{1.0, 0.1, 0.0, 1.0};
        for (const auto& rho : patterns(s, rng)) {
            const auto r = solve_inner(s, law, p, rho);
            for (double v : r.u)
                REQUIRE(v == 0.0);
            CHECK(r.report.converged);
        }
        const auto g = objective_and_gradient(s, law, p, constant_density(s, 0.5), zero_potential(s));
        for (double v : g.gradient)
            CHECK(v == 0.0);
    }
}

TEST_CASE("linear solve matches a dense direct solve")
{
    std::mt19937_64 rng(2);
    const auto law = MagnetizationLaw::linear(2.0);
    const PhysicalParams p{1.0, 0.1, 2.0, 3.0};
    for (int n : {4, 8}) {
        const auto s = DomainSpec::make_2d(1.0, n, n);
        for (const auto& rho : patterns(s, rng)) {
            const Dense d = assemble_2d(s, 2.0, rho, p.mu_drive);
            const Eigen::VectorXd x = d.A.ldlt().solve(d.rhs);
            InnerOptions opt;
            opt.tol = 1e-14;
            const auto r = solve_inner(s, law, p, rho, opt);
            double err = 0.0;
            for (Eigen::Index a = 0; a < x.size(); ++a)
                err = std::max(err, std::abs(r.u[d.free_nodes[a]] - x(a)));
            CHECK(err <= 1e-8);
            for (std::size_t nd = 0; nd < r.u.size(); ++nd)
                if (s.is_lateral_node(nd))
                    REQUIRE(r.u[nd] == 0.0);
        }
    }
}

TEST_CASE("linear-law gradient equals A u - rhs")
{
    std::mt19937_64 rng(3);
    const auto s = DomainSpec::make_2d(1.0, 5, 4);
    const auto law = MagnetizationLaw::linear(3.0);
    const PhysicalParams p{1.0, 0.1, 1.7, 3.0};
    for (const auto& rho : patterns(s, rng)) {
        const Dense d = assemble_2d(s, 3.0, rho, p.mu_drive);
        const auto u = random_potential(s, rng);
        Eigen::VectorXd uf(static_cast<Eigen::Index>(d.free_nodes.size()));
        for (Eigen::Index a = 0; a < uf.size(); ++a)
            uf(a) = u[d.free_nodes[a]];
        const Eigen::VectorXd ref = d.A * uf - d.rhs;
        const auto g = objective_and_gradient(s, law, p, rho, u).gradient;
        const auto au = apply_linear_operator(s, 3.0, rho, u);
        const auto b = drive_rhs(s, p);
        for (Eigen::Index a = 0; a < uf.size(); ++a) {
            CHECK(std::abs(g[d.free_nodes[a]] - ref(a)) <= 1e-12 * (1 + std::abs(ref(a))));
            CHECK(std::abs(au[d.free_nodes[a]] - b[d.free_nodes[a]] - ref(a)) <= 1e-12 * (1 + std::abs(ref(a))));
        }
    }
}

TEST_CASE("gradient matches central differences")
{
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    for (const auto& s : {DomainSpec::make_2d(1.0, 6, 8), DomainSpec::make_3d(1.0, 1.0, 3, 3, 4)})
        for (const auto& law : {MagnetizationLaw::linear(2.0), MagnetizationLaw::langevin(3.0, 2.0)}) {
            const PhysicalParams p{1.0, 0.1, 1.5, 0.5};
            const auto rho = patterns(s, rng)[2];
            const auto u = random_potential(s, rng, 0.5);
            const auto og = objective_and_gradient(s, law, p, rho, u);
            for (int t = 0; t < 20; ++t) {
                const auto v = random_potential(s, rng);
                const double eps = 1e-5;
                PotentialField up = u, um = u;
                for (std::size_t i = 0; i < u.size(); ++i) {
                    up[i] += eps * v[i];
                    um[i] -= eps * v[i];
                }
                const double fd = (eval_J(s, law, p, up, rho) - eval_J(s, law, p, um, rho)) / (2 * eps);
                double an = 0.0;
                for (std::size_t i = 0; i < u.size(); ++i)
                    an += og.gradient[i] * v[i];
                CHECK(std::abs(fd - an) <= 1e-6 * (1 + std::abs(og.value)));
            }
        }
}

TEST_CASE("Newton path: optimality, monotone decrease, linear agreement")
{
    std::mt19937_64 rng(5);
    const auto s = DomainSpec::make_2d(1.0, 8, 8);
    const auto rho = patterns(s, rng)[0];
    const PhysicalParams p{1.0, 0.1, 2.0, 0.5};
    const auto lg = MagnetizationLaw::langevin(3.0, 2.0);
    const auto r = solve_inner(s, lg, p, rho);
    CHECK(r.report.converged);
    CHECK(r.report.residual <= r.report.tolerance);
    CHECK(r.report.newton_steps > 0);
    const auto& h = r.report.objective_history;
    for (std::size_t i = 1; i < h.size(); ++i)
        CHECK(h[i] <= h[i - 1] + 1e-13 * (1 + std::abs(h[i - 1])));

    const auto lin = MagnetizationLaw::linear(2.0);
    InnerOptions newton;
    newton.force_newton = true;
    newton.tol = 1e-12;
    InnerOptions cg;
    cg.tol = 1e-12;
    const auto a = solve_inner(s, lin, p, rho, newton);
    const auto b = solve_inner(s, lin, p, rho, cg);
    CHECK(max_abs_diff(a.u, b.u) <= 1e-9);
}

TEST_CASE("Langevin optimum lies between the linear optima for mu = 1 and mu = C_M")
{
    std::mt19937_64 rng(6);
    const auto s = DomainSpec::make_2d(1.0, 4, 4);
    const auto rho = patterns(s, rng)[0];
    const PhysicalParams p{1.0, 0.1, 2.0, 0.5};
    const auto lg = MagnetizationLaw::langevin(1.0, 1.0);
    const double j = solve_inner(s, lg, p, rho).report.objective;
    const double lo = solve_inner(s, MagnetizationLaw::linear(1.0), p, rho).report.objective;
    const double hi = solve_inner(s, MagnetizationLaw::linear(cm_bound(lg)), p, rho).report.objective;
    CHECK(lo <= j + 1e-12);
    CHECK(j <= hi + 1e-12);
}

TEST_CASE("uniqueness probe from random starts")
{
    std::mt19937_64 rng(7);
    const auto s = DomainSpec::make_2d(1.0, 8, 8);
    const auto rho = patterns(s, rng)[2];
    const PhysicalParams p{1.0, 0.1, 1.0, 0.5};
    InnerOptions opt;
    opt.tol = 1e-10;
    for (const auto& law : {MagnetizationLaw::linear(2.0), MagnetizationLaw::langevin(3.0, 1.0)}) {
        const auto w1 = random_potential(s, rng), w2 = random_potential(s, rng);
        const auto a = solve_inner(s, law, p, rho, opt, &w1);
        const auto b = solve_inner(s, law, p, rho, opt, &w2);
        CHECK(max_abs_diff(a.u, b.u) <= 10 * opt.tol);
    }
}

TEST_CASE("a priori gradient bound at the optimum")
{
    std::mt19937_64 rng(8);
    const auto s = DomainSpec::make_2d(1.0, 8, 8);
    for (double mud : {0.5, 2.0, 4.0})
        for (const auto& law : {MagnetizationLaw::linear(5.0), MagnetizationLaw::langevin(3.0, 2.0)})
            for (const auto& rho : patterns(s, rng)) {
                const PhysicalParams p{1.0, 0.1, mud, 0.5};
                const auto r = solve_inner(s, law, p, rho);
                CHECK(gradient_norm(s, r.u) <= 2 * mud * std::sqrt(s.domain_measure()));
            }
}

TEST_CASE("errors")
{
    const auto s = DomainSpec::make_2d(1.0, 8, 8);
    const PhysicalParams p{1.0, 0.1, 2.0, 0.5};
    const auto law = MagnetizationLaw::linear(2.0);
    CHECK_THROWS_AS(solve_inner(s, law, p, constant_density(s, 1.2)), IllPosed);
    CHECK_THROWS_AS(solve_inner(s, law, p, DensityField(3, 0.5)), DimensionMismatch);
    InnerOptions opt;
    opt.max_iter = 1;
    try {
        solve_inner(s, law, p, constant_density(s, 0.5), opt);
        FAIL("expected InnerNonConvergence");
    } catch (const InnerNonConvergence& e) {
        CHECK(e.best().size() == s.num_nodes());
        CHECK(!e.report().converged);
    }
}

TEST_CASE("weighted Poisson helper")
{
    const auto s = DomainSpec::make_2d(1.0, 6, 6);
    const CellField k(s.num_cells(), 1.0);
    const PhysicalParams p{1.0, 0.1, 2.0, 0.5};
    const auto rhs = drive_rhs(s, p);
    const auto a = solve_weighted_poisson(s, k, rhs, 1e-13, 1000);
    const auto b = solve_inner(s, MagnetizationLaw::linear(1.0), p, constant_density(s, 0.0),
                               InnerOptions{1e-13, 1000});
    CHECK(max_abs_diff(a.u, b.u) <= 1e-11);
}
