// Python bindings. Fields cross the boundary as flat float64 arrays in the
// library's storage order (z fastest).
#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "ferro/cli.hpp"
#include "ferro/errors.hpp"
#include "ferro/functional.hpp"
#include "ferro/grid.hpp"
#include "ferro/inner.hpp"
#include "ferro/maglaw.hpp"
#include "ferro/outer.hpp"
#include "ferro/saddle.hpp"

namespace py = pybind11;
using namespace ferro;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array& a)
{
    if (a.ndim() != 1)
        throw DimensionMismatch("expected a one-dimensional array");
    return {a.data(), a.data() + a.size()};
}

template <class F>
F to_field(const Array& a)
{
    return F(to_vector(a));
}

template <class Tag>
Array to_array(const Field<Tag>& f)
{
    return Array(static_cast<py::ssize_t>(f.size()), f.raw().data());
}

py::dict to_dict(const VerifyReport& r)
{
    py::dict items;
    for (const VerifyItem& it : r.items) {
        py::dict d;
        d["measured"] = it.measured;
        d["bound"] = it.bound;
        d["pass"] = it.pass;
        d["mandatory"] = it.mandatory;
        items[py::str(it.name)] = d;
    }
    return items;
}

py::dict to_dict(const SaddleState& st)
{
    py::dict d;
    d["u"] = to_array(st.u);
    d["rho"] = to_array(st.rho);
    d["chi"] = to_array(st.chi);
    d["u_chi"] = to_array(st.u_chi);
    d["chi_upper"] = to_array(st.chi_upper);
    d["lower"] = st.lower;
    d["upper"] = st.upper;
    d["gap"] = st.gap;
    d["relaxed_gap"] = st.relaxed_gap;
    d["converged"] = st.converged;
    d["sweeps"] = st.sweeps;
    py::list hist;
    for (const SaddleRecord& h : st.history) {
        py::dict r;
        r["sweep"] = h.sweep;
        r["lower"] = h.lower;
        r["upper"] = h.upper;
        r["gap"] = h.gap;
        r["u_norm"] = h.u_norm;
        r["volume"] = h.volume;
        hist.append(r);
    }
    d["history"] = hist;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Ferrofluid saddle-point solver";

    auto base = py::register_exception<Error>(m, "FerroError", PyExc_RuntimeError);
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
    py::register_exception<IllPosed>(m, "IllPosed", base.ptr());
    py::register_exception<InfeasibleVolume>(m, "InfeasibleVolume", base.ptr());
    py::register_exception<NotAGraph>(m, "NotAGraph", base.ptr());
    py::register_exception<NonConvergence>(m, "NonConvergence", base.ptr());

    py::class_<DomainSpec>(m, "DomainSpec")
        .def_static("make_2d", &DomainSpec::make_2d, py::arg("length"), py::arg("nx"), py::arg("nz"))
        .def_static("make_3d", &DomainSpec::make_3d, py::arg("lx"), py::arg("ly"), py::arg("nx"), py::arg("ny"),
                    py::arg("nz"))
        .def_readonly("dim", &DomainSpec::dim)
        .def_readonly("n_z", &DomainSpec::n_z)
        .def_property_readonly("n_horizontal", [](const DomainSpec& s) { return s.n_horizontal; })
        .def_property_readonly("extent", [](const DomainSpec& s) { return s.extent; })
        .def_property_readonly("num_cells", &DomainSpec::num_cells)
        .def_property_readonly("num_nodes", &DomainSpec::num_nodes)
        .def_property_readonly("num_columns", &DomainSpec::num_columns)
        .def_property_readonly("h_z", &DomainSpec::h_z)
        .def_property_readonly("cell_measure", &DomainSpec::cell_measure)
        .def_property_readonly("omega_measure", &DomainSpec::omega_measure)
        .def("__eq__", [](const DomainSpec& a, const DomainSpec& b) { return a == b; });

    py::class_<MagnetizationLaw>(m, "MagnetizationLaw")
        .def_static("linear", &MagnetizationLaw::linear, py::arg("mu"))
        .def_static("langevin", &MagnetizationLaw::langevin, py::arg("ms"), py::arg("gamma"))
        .def_property_readonly("is_linear", [](const MagnetizationLaw& l) { return l.kind() == LawKind::linear; })
        .def_property_readonly("mu_const", &MagnetizationLaw::mu_const)
        .def("mu", [](const MagnetizationLaw& l, double s) { return mu_eval(l, s); })
        .def("M", [](const MagnetizationLaw& l, double s) { return m_eval(l, s); })
        .def_property_readonly("cm_bound", [](const MagnetizationLaw& l) { return cm_bound(l); })
        .def_property_readonly("p0", [](const MagnetizationLaw& l) { return p0_from_law(l); })
        .def("__repr__", &MagnetizationLaw::describe);

    py::class_<PhysicalParams>(m, "PhysicalParams")
        .def_static("from_law", &PhysicalParams::from_law, py::arg("law"), py::arg("b"), py::arg("tau"),
                    py::arg("mu_drive") = std::nullopt, py::arg("p0") = std::nullopt)
        .def_readwrite("b", &PhysicalParams::b)
        .def_readwrite("tau", &PhysicalParams::tau)
        .def_readwrite("mu_drive", &PhysicalParams::mu_drive)
        .def_readwrite("p0", &PhysicalParams::p0);

    m.def(
        "eval_J",
        [](const DomainSpec& s, const MagnetizationLaw& law, const PhysicalParams& p, const Array& u,
           const Array& rho) { return eval_J(s, law, p, to_field<PotentialField>(u), to_field<DensityField>(rho)); },
        py::arg("spec"), py::arg("law"), py::arg("params"), py::arg("u"), py::arg("rho"));
    m.def(
        "gain_field",
        [](const DomainSpec& s, const MagnetizationLaw& law, const PhysicalParams& p, const Array& u) {
            return to_array(gain_field(s, law, p, to_field<PotentialField>(u)));
        },
        py::arg("spec"), py::arg("law"), py::arg("params"), py::arg("u"));
    m.def(
        "total_variation",
        [](const DomainSpec& s, const Array& rho) { return total_variation(s, to_field<CellField>(rho)); },
        py::arg("spec"), py::arg("rho"));
    m.def(
        "indicator_from_graph",
        [](const DomainSpec& s, const Array& eta) {
            return to_array(indicator_from_graph(s, to_field<HeightField>(eta)));
        },
        py::arg("spec"), py::arg("eta"));
    m.def(
        "graph_from_indicator",
        [](const DomainSpec& s, const Array& chi) {
            return to_array(graph_from_indicator(s, to_field<DensityField>(chi)));
        },
        py::arg("spec"), py::arg("chi"));

    m.def(
        "solve_inner",
        [](const DomainSpec& s, const MagnetizationLaw& law, const PhysicalParams& p, const Array& rho, double tol,
           int max_iter) {
            InnerOptions o;
            o.tol = tol;
            o.max_iter = max_iter;
            const InnerResult r = solve_inner(s, law, p, to_field<DensityField>(rho), o);
            return py::make_tuple(to_array(r.u), r.report.objective, r.report.residual);
        },
        py::arg("spec"), py::arg("law"), py::arg("params"), py::arg("rho"), py::arg("tol") = 1e-10,
        py::arg("max_iter") = 20000, "Minimizes J(., rho); returns (u, objective, residual).");

    m.def(
        "solve_outer",
        [](const DomainSpec& s, const Array& g, double tau, double V, bool binary) {
            OuterOptions o;
            o.mode = binary ? OuterMode::binary : OuterMode::relaxed;
            const OuterResult r = solve_outer(s, to_field<CellField>(g), tau, V, o);
            py::dict d;
            d["rho"] = to_array(r.rho);
            d["relaxed"] = to_array(r.relaxed);
            d["relaxed_value"] = r.report.relaxed_value;
            d["binary_value"] = r.report.binary_value;
            d["upper_bound"] = r.report.upper_bound;
            d["volume_error"] = r.report.volume_error;
            return d;
        },
        py::arg("spec"), py::arg("g"), py::arg("tau"), py::arg("volume"), py::arg("binary") = true);
    m.def(
        "bathtub",
        [](const DomainSpec& s, const Array& g, double V) {
            return to_array(bathtub_oracle(s, to_field<CellField>(g), V));
        },
        py::arg("spec"), py::arg("g"), py::arg("volume"));

    m.def(
        "run_saddle",
        [](const DomainSpec& s, const MagnetizationLaw& law, const PhysicalParams& p, double tol_gap,
           int max_sweeps) {
            SaddleOptions o;
            o.tol_gap = tol_gap;
            o.max_sweeps = max_sweeps;
            try {
                return to_dict(run_saddle(s, law, p, o));
            } catch (const SaddleNonConvergence& e) {
                return to_dict(e.state());
            }
        },
        py::arg("spec"), py::arg("law"), py::arg("params"), py::arg("tol_gap") = 1e-3, py::arg("max_sweeps") = 100,
        "Runs the saddle iteration; a capped run returns its last state with converged=False.");

    m.def(
        "check_saddle",
        [](const DomainSpec& s, const MagnetizationLaw& law, const PhysicalParams& p, const Array& u,
           const Array& chi, int n_probes, std::uint64_t seed, double tol) {
            return to_dict(check_saddle(s, law, p, to_field<PotentialField>(u), to_field<DensityField>(chi), n_probes,
                                        seed, tol));
        },
        py::arg("spec"), py::arg("law"), py::arg("params"), py::arg("u"), py::arg("chi"), py::arg("n_probes") = 20,
        py::arg("seed") = 1, py::arg("tol") = 1e-3);
    m.def(
        "verify_norm_bound",
        [](const DomainSpec& s, const PhysicalParams& p, const Array& u) {
            return to_dict(verify_norm_bound(s, p, to_field<PotentialField>(u)));
        },
        py::arg("spec"), py::arg("params"), py::arg("u"));
    m.def(
        "bottom_distance",
        [](const DomainSpec& s, const Array& chi) { return bottom_distance(s, to_field<DensityField>(chi)); },
        py::arg("spec"), py::arg("chi"));
    m.def(
        "bubble_census",
        [](const DomainSpec& s, const Array& chi) {
            const BubbleCensus c = bubble_census(s, to_field<DensityField>(chi));
            return py::make_tuple(c.fluid_components, c.air_components, c.enclosed_air);
        },
        py::arg("spec"), py::arg("chi"), "Returns (fluid_components, air_components, enclosed_air).");
    m.def(
        "free_surface_residual",
        [](const DomainSpec& s, const MagnetizationLaw& law, const PhysicalParams& p, const Array& u,
           const Array& eta) {
            const FreeSurfaceResidual r =
                free_surface_residual(s, law, p, to_field<PotentialField>(u), to_field<HeightField>(eta));
            py::dict d;
            d["residual"] = to_array(r.residual);
            d["norm"] = r.norm;
            d["norm_mean_free"] = r.norm_mean_free;
            d["mean"] = r.mean;
            d["max_jump"] = r.max_jump;
            return d;
        },
        py::arg("spec"), py::arg("law"), py::arg("params"), py::arg("u"), py::arg("eta"));

    m.def(
        "solve_config",
        [](const std::string& path, std::optional<std::string> out, bool deterministic) {
            cli::Overrides ov;
            ov.out = std::move(out);
            ov.deterministic = deterministic;
            py::gil_scoped_release release;
            return cli::cmd_solve(path, ov);
        },
        py::arg("config"), py::arg("out") = std::nullopt, py::arg("deterministic") = false,
        "Runs `ferro solve` on a config file; returns the exit code.");
}
