#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ferro/errors.hpp"
#include "ferro/maglaw.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace ferro;

namespace {

// Extended-precision closed forms, written independently of the library.
long double mu_ref(long double ms, long double gamma, long double s)
{
    s = std::fabs(s);
    const long double x = gamma * s;
    if (x < 0.01L) {
        // L(x)/x = 1/3 - x^2/45 + 2x^4/945 - x^6/4725
        const long double x2 = x * x;
        return 1.0L + ms * gamma * (1.0L / 3 - x2 / 45 + 2 * x2 * x2 / 945 - x2 * x2 * x2 / 4725);
    }
    return 1.0L + ms * (std::cosh(x) / std::sinh(x) - 1.0L / x) / s;
}

long double m_quad(long double ms, long double gamma, long double s)
{
    auto f = [&](long double t) { return t * mu_ref(ms, gamma, t); };
    return boost::math::quadrature::gauss_kronrod<long double, 61>::integrate(f, 0.0L, s, 15, 1e-16L);
}

} // namespace

TEST_CASE("mu_eval reference values")
{
    const auto lg = MagnetizationLaw::langevin(1.0, 1.0);
    CHECK(mu_eval(lg, 0.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(mu_eval(lg, -2.0) == mu_eval(lg, 2.0));
    CHECK(mu_eval(MagnetizationLaw::linear(2.0), 7.3) == 2.0);
    const double coth1 = static_cast<double>(std::cosh(1.0L) / std::sinh(1.0L));
    CHECK(std::abs(mu_eval(lg, 1.0) - coth1) <= 1e-15);
    CHECK(std::abs(mu_eval(lg, 1.0) - 1.313035) < 1e-6);
}

TEST_CASE("mu_eval is smooth across the series cutoff")
{
    for (double gamma : {0.5, 1.0, 2.0}) {
        const auto law = MagnetizationLaw::langevin(3.0, gamma);
        for (double x : {0.0999999, 0.1, 0.1000001, 0.05, 0.2, 1e-6, 0.0, 1.0, 1.9999, 2.0, 2.0001, 3.0}) {
            const double s = x / gamma;
            const long double ref = mu_ref(3.0L, gamma, s);
            CHECK(std::abs(mu_eval(law, s) - static_cast<double>(ref)) <= 4e-15);
        }
    }
}

TEST_CASE("m_eval values")
{
    CHECK(m_eval(MagnetizationLaw::linear(2.0), 1.0) == 1.0);
    CHECK(m_eval(MagnetizationLaw::linear(2.0), 0.0) == 0.0);
    const auto lg = MagnetizationLaw::langevin(1.0, 1.0);
    CHECK(m_eval(lg, 0.0) == 0.0);
    const double closed = static_cast<double>(0.5L + std::log(std::sinh(1.0L)));
    CHECK(std::abs(m_eval(lg, 1.0) - closed) <= 1e-15);
    CHECK(std::abs(m_eval(lg, 1.0) - 0.661437) < 1e-5);
    CHECK(std::abs(m_eval(lg, 1.0) - static_cast<double>(m_quad(1.0L, 1.0L, 1.0L))) <= 1e-10);
}

TEST_CASE("m_eval agrees with quadrature of t mu(t)")
{
    for (double ms : {1.0, 3.0})
        for (double gamma : {0.5, 1.0, 2.0})
            for (int i = 1; i <= 100; ++i) {
                const double s = 0.1 * i;
                const auto law = MagnetizationLaw::langevin(ms, gamma);
                const long double q = m_quad(ms, gamma, s);
                CHECK(std::abs(m_eval(law, s) - static_cast<double>(q)) <= 1e-10);
            }
}

TEST_CASE("derivatives match central differences")
{
    const auto law = MagnetizationLaw::langevin(3.0, 2.0);
    const double h = 1e-5;
    for (double s : {0.01, 0.04, 0.3, 1.0, 2.5, 7.0}) {
        const double dm = (m_eval(law, s + h) - m_eval(law, s - h)) / (2 * h);
        CHECK(std::abs(dm - m_prime(law, s)) <= 1e-8 * (1 + std::abs(dm)));
        const double d2 = (m_prime(law, s + h) - m_prime(law, s - h)) / (2 * h);
        CHECK(std::abs(d2 - m_second(law, s)) <= 1e-8 * (1 + std::abs(d2)));
    }
    CHECK(m_second(law, 0.0) == doctest::Approx(mu_eval(law, 0.0)).epsilon(1e-15));
    CHECK(m_second(MagnetizationLaw::linear(2.0), 3.0) == 2.0);
}

TEST_CASE("Langevin function and derivative")
{
    for (double x : {-3.0, -0.05, 0.0, 0.01, 0.0999, 0.1001, 0.7, 5.0, 40.0, 400.0}) {
        const long double lx = x;
        const long double ref = x == 0.0 ? 0.0L : std::cosh(lx) / std::sinh(lx) - 1.0L / lx;
        if (std::abs(x) >= 0.01)
            CHECK(std::abs(langevin_fn(x) - static_cast<double>(ref)) <= 2e-16 * (1 + std::abs(x)));
        const long double sh = std::sinh(lx);
        const long double dref = x == 0.0 ? 1.0L / 3 : 1.0L / (lx * lx) - 1.0L / (sh * sh);
        if (std::abs(x) >= 0.01 && std::abs(x) < 350)
            CHECK(std::abs(langevin_fn_prime(x) - static_cast<double>(dref)) <= 1e-15);
    }
    CHECK(langevin_fn(0.0) == 0.0);
    CHECK(langevin_fn(1e-3) == doctest::Approx(1e-3 / 3 - 1e-9 / 45).epsilon(1e-14));
    CHECK(langevin_fn_prime(0.0) == doctest::Approx(1.0 / 3.0));
    CHECK(langevin_fn_prime(1000.0) == doctest::Approx(1e-6));
}

TEST_CASE("growth constants and pressure")
{
    CHECK(cm_bound(MagnetizationLaw::linear(2.5)) == 2.5);
    CHECK(cm_bound(MagnetizationLaw::langevin(3.0, 2.0)) == doctest::Approx(3.0));
    const long double mu1 = mu_ref(1, 1, 1);
    const long double m1 = 0.5L + std::log(std::sinh(1.0L));
    const double p0 = static_cast<double>(m1 + mu1 * (mu1 / 2 - 1));
    CHECK(std::abs(p0_from_law(MagnetizationLaw::langevin(1.0, 1.0)) - p0) <= 1e-15);
    // linear: mu/2 + mu (mu/2 - 1) = mu (mu - 1)/2
    CHECK(p0_from_law(MagnetizationLaw::linear(2.0)) == doctest::Approx(1.0));
    CHECK(p0_from_law(MagnetizationLaw::linear(5.0)) == doctest::Approx(10.0));
}

TEST_CASE("constructors reject bad parameters")
{
    CHECK_THROWS_AS(MagnetizationLaw::linear(0.5), IllPosed);
    CHECK_THROWS_AS(MagnetizationLaw::langevin(0.0, 1.0), IllPosed);
    CHECK_THROWS_AS(MagnetizationLaw::langevin(1.0, -1.0), IllPosed);
    CHECK_NOTHROW(MagnetizationLaw::linear(1.0));
    CHECK(MagnetizationLaw::langevin(1, 2).describe() == "langevin(Ms=1, gamma=2)");
}

TEST_CASE("law bounds on sampled points")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-20.0, 20.0);
    for (double ms : {1.0, 3.0})
        for (double gamma : {0.5, 1.0, 2.0}) {
            const auto law = MagnetizationLaw::langevin(ms, gamma);
            const double cm = cm_bound(law);
            for (int i = 0; i < 2000; ++i) {
                const double s = unif(rng);
                const double mu = mu_eval(law, s);
                REQUIRE(mu == mu_eval(law, -s));
                REQUIRE(mu > 1.0);
                REQUIRE(mu <= cm + 1e-12);
                const double m = m_eval(law, s);
                REQUIRE(m - 0.5 * s * s >= -1e-12);
                REQUIRE(0.5 * cm * s * s - m >= -1e-12);
            }
            // second differences of M on a uniform grid
            const double h = 1e-2;
            for (int i = 1; i < 2000; ++i) {
                const double s = -10.0 + i * h;
                const double d2 = m_eval(law, s + h) - 2 * m_eval(law, s) + m_eval(law, s - h);
                REQUIRE(d2 >= -1e-10);
            }
        }
}

TEST_CASE("Fenchel-Young inequality and equality")
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    for (double mu : {1.5, 2.0, 5.0})
        for (int chi : {0, 1})
            for (int i = 0; i < 200; ++i) {
                std::vector<double> xi{n01(rng), n01(rng)}, p{n01(rng), n01(rng)};
                const double lhs = linear_integrand(chi, mu, xi) + fenchel_conjugate_linear(chi, mu, p);
                CHECK(lhs - (xi[0] * p[0] + xi[1] * p[1]) >= -1e-12);
                // p = grad f(xi) gives equality
                const double a = chi ? mu : 1.0;
                std::vector<double> q{a * xi[0], a * xi[1] - mu};
                const double eq = linear_integrand(chi, mu, xi) + fenchel_conjugate_linear(chi, mu, q) -
                                  (xi[0] * q[0] + xi[1] * q[1]);
                CHECK(std::abs(eq) <= 1e-10);
            }
}
