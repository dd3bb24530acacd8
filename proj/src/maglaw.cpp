#include "ferro/maglaw.hpp"

#include "ferro/errors.hpp"

#include <cmath>
#include <sstream>

namespace ferro {

namespace {

// ln(sinh x / x) uses its power series below this |x|.
constexpr double series_cutoff = 0.1;

// Below this |x| the Langevin function is evaluated through Lambert's
// continued fraction; coth(x) - 1/x loses digits to cancellation there.
constexpr double fraction_cutoff = 2.0;

// L(x)/x = 1/(3 + x^2/(5 + x^2/(7 + ...))), truncated well below roundoff for |x| < 2.
double langevin_over_x(double x)
{
    const double x2 = x * x;
    double t = 43.0;
    for (int k = 20; k >= 1; --k)
        t = (2 * k + 1) + x2 / t;
    return 1.0 / t;
}

// ln(sinh(x)/x) for x >= 0.
double log_sinhc(double x)
{
    if (x < series_cutoff) {
        const double x2 = x * x;
        return x2 * (1.0 / 6.0 + x2 * (-1.0 / 180.0 + x2 * (1.0 / 2835.0 + x2 * (-1.0 / 37800.0))));
    }
    if (x > 20.0)
        return x + std::log1p(-std::exp(-2.0 * x)) - std::log(2.0) - std::log(x);
    return std::log(std::sinh(x) / x);
}

} // namespace

MagnetizationLaw MagnetizationLaw::linear(double mu)
{
    if (!(mu >= 1.0) || !std::isfinite(mu))
        throw IllPosed("linear law requires mu >= 1");
    return {LawKind::linear, mu, 0.0, 0.0};
}

MagnetizationLaw MagnetizationLaw::langevin(double ms, double gamma)
{
    if (!(ms > 0.0) || !(gamma > 0.0) || !std::isfinite(ms) || !std::isfinite(gamma))
        throw IllPosed("Langevin law requires Ms > 0 and gamma > 0");
    return {LawKind::langevin, 1.0, ms, gamma};
}

std::string MagnetizationLaw::describe() const
{
    std::ostringstream os;
    if (kind_ == LawKind::linear)
        os << "linear(mu=" << mu_ << ")";
    else
        os << "langevin(Ms=" << ms_ << ", gamma=" << gamma_ << ")";
    return os.str();
}

double langevin_fn(double x)
{
    if (std::abs(x) < fraction_cutoff)
        return x * langevin_over_x(x);
    return 1.0 / std::tanh(x) - 1.0 / x;
}

double langevin_fn_prime(double x)
{
    const double ax = std::abs(x);
    if (ax < fraction_cutoff) {
        // L' = 1 - L^2 - 2 L/x avoids the 1/x^2 - 1/sinh^2 cancellation
        const double q = langevin_over_x(x);
        return 1.0 - x * x * q * q - 2.0 * q;
    }
    if (ax > 350.0)
        return 1.0 / (x * x);
    const double sh = std::sinh(x);
    return 1.0 / (x * x) - 1.0 / (sh * sh);
}

double mu_eval(const MagnetizationLaw& law, double s)
{
    if (law.kind() == LawKind::linear)
        return law.mu_const();
    const double a = std::abs(s);
    const double g = law.gamma();
    // M_s L(g s)/s = M_s g L(x)/x, finite at s = 0
    const double x = g * a;
    if (x < fraction_cutoff)
        return 1.0 + law.saturation() * g * langevin_over_x(x);
    return 1.0 + law.saturation() * langevin_fn(x) / a;
}

double m_eval(const MagnetizationLaw& law, double s)
{
    const double a = std::abs(s);
    if (law.kind() == LawKind::linear)
        return 0.5 * law.mu_const() * a * a;
    const double g = law.gamma();
    return 0.5 * a * a + law.saturation() * log_sinhc(g * a) / g;
}

double m_prime(const MagnetizationLaw& law, double s)
{
    return s * mu_eval(law, s);
}

double m_second(const MagnetizationLaw& law, double s)
{
    if (law.kind() == LawKind::linear)
        return law.mu_const();
    const double g = law.gamma();
    return 1.0 + law.saturation() * g * langevin_fn_prime(g * std::abs(s));
}

double cm_bound(const MagnetizationLaw& law)
{
    if (law.kind() == LawKind::linear)
        return law.mu_const();
    return 1.0 + law.gamma() * law.saturation() / 3.0;
}

double p0_from_law(const MagnetizationLaw& law)
{
    const double mu1 = mu_eval(law, 1.0);
    return m_eval(law, 1.0) + mu1 * (0.5 * mu1 - 1.0);
}

double linear_integrand(int chi, double mu_const, std::span<const double> xi)
{
    const double a = chi ? mu_const : 1.0;
    double sq = 0.0;
    for (double v : xi)
        sq += v * v;
    return 0.5 * a * sq - mu_const * xi.back();
}

double fenchel_conjugate_linear(int chi, double mu_const, std::span<const double> p)
{
    const double c = chi ? 0.5 / mu_const : 0.5;
    double sq = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
        sq += p[i] * p[i];
    const double pz = p.back() + mu_const;
    sq += pz * pz;
    return c * sq;
}

} // namespace ferro
