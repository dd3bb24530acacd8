#include "ferro/grid.hpp"

#include "ferro/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ferro {

DomainSpec DomainSpec::make_2d(double length, int nx, int nz)
{
    DomainSpec s;
    s.dim = 2;
    s.extent = {length, 1.0};
    s.n_horizontal = {nx, 1};
    s.n_z = nz;
    s.validate();
    return s;
}

DomainSpec DomainSpec::make_3d(double lx, double ly, int nx, int ny, int nz)
{
    DomainSpec s;
    s.dim = 3;
    s.extent = {lx, ly};
    s.n_horizontal = {nx, ny};
    s.n_z = nz;
    s.validate();
    return s;
}

void DomainSpec::validate() const
{
    if (dim != 2 && dim != 3)
        throw IllPosed("domain dimension must be 2 or 3");
    for (int a = 0; a < dim - 1; ++a) {
        if (n_horizontal[a] < 2)
            throw IllPosed("horizontal resolution must be >= 2");
        if (!(extent[a] > 0.0) || !std::isfinite(extent[a]))
            throw IllPosed("horizontal extent must be positive");
    }
    if (n_z < 2)
        throw IllPosed("vertical resolution must be >= 2");
}

std::size_t DomainSpec::num_cells() const
{
    std::size_t n = 1;
    for (int a = 0; a < dim; ++a)
        n *= static_cast<std::size_t>(cells_along(a));
    return n;
}

std::size_t DomainSpec::num_nodes() const
{
    std::size_t n = 1;
    for (int a = 0; a < dim; ++a)
        n *= static_cast<std::size_t>(nodes_along(a));
    return n;
}

std::size_t DomainSpec::num_columns() const
{
    return num_cells() / static_cast<std::size_t>(n_z);
}

double DomainSpec::cell_measure() const
{
    double m = 1.0;
    for (int a = 0; a < dim; ++a)
        m *= spacing(a);
    return m;
}

double DomainSpec::omega_measure() const
{
    double m = 1.0;
    for (int a = 0; a < dim - 1; ++a)
        m *= extent[a];
    return m;
}

std::size_t DomainSpec::cell_stride(int axis) const
{
    std::size_t s = 1;
    for (int a = dim - 1; a > axis; --a)
        s *= static_cast<std::size_t>(cells_along(a));
    return s;
}

std::size_t DomainSpec::node_stride(int axis) const
{
    std::size_t s = 1;
    for (int a = dim - 1; a > axis; --a)
        s *= static_cast<std::size_t>(nodes_along(a));
    return s;
}

std::size_t DomainSpec::cell_index(const Index& idx) const
{
    std::size_t c = 0;
    for (int a = 0; a < dim; ++a)
        c = c * static_cast<std::size_t>(cells_along(a)) + static_cast<std::size_t>(idx[a]);
    return c;
}

DomainSpec::Index DomainSpec::cell_coords(std::size_t c) const
{
    Index idx{};
    for (int a = dim - 1; a >= 0; --a) {
        const auto n = static_cast<std::size_t>(cells_along(a));
        idx[a] = static_cast<int>(c % n);
        c /= n;
    }
    return idx;
}

std::size_t DomainSpec::node_index(const Index& idx) const
{
    std::size_t n = 0;
    for (int a = 0; a < dim; ++a)
        n = n * static_cast<std::size_t>(nodes_along(a)) + static_cast<std::size_t>(idx[a]);
    return n;
}

DomainSpec::Index DomainSpec::node_coords(std::size_t n) const
{
    Index idx{};
    for (int a = dim - 1; a >= 0; --a) {
        const auto m = static_cast<std::size_t>(nodes_along(a));
        idx[a] = static_cast<int>(n % m);
        n /= m;
    }
    return idx;
}

double DomainSpec::cell_center(std::size_t c, int axis) const
{
    const Index idx = cell_coords(c);
    const double origin = axis == dim - 1 ? -1.0 : 0.0;
    return origin + (idx[axis] + 0.5) * spacing(axis);
}

double DomainSpec::node_position(std::size_t n, int axis) const
{
    const Index idx = node_coords(n);
    const double origin = axis == dim - 1 ? -1.0 : 0.0;
    return origin + idx[axis] * spacing(axis);
}

bool DomainSpec::is_lateral_node(std::size_t n) const
{
    const Index idx = node_coords(n);
    for (int a = 0; a < dim - 1; ++a)
        if (idx[a] == 0 || idx[a] == n_horizontal[a])
            return true;
    return false;
}

PotentialField zero_potential(const DomainSpec& spec)
{
    return PotentialField(spec.num_nodes(), 0.0);
}

DensityField constant_density(const DomainSpec& spec, double value)
{
    return DensityField(spec.num_cells(), value);
}

void apply_lateral_zero(const DomainSpec& spec, PotentialField& u)
{
    check_nodes(spec, u);
    for (std::size_t n = 0; n < u.size(); ++n)
        if (spec.is_lateral_node(n))
            u[n] = 0.0;
}

void check_nodes(const DomainSpec& spec, const PotentialField& u)
{
    if (u.size() != spec.num_nodes())
        throw DimensionMismatch("node field has " + std::to_string(u.size()) + " values, grid has " +
                                std::to_string(spec.num_nodes()) + " nodes");
}

void check_cells(const DomainSpec& spec, const CellField& f)
{
    if (f.size() != spec.num_cells())
        throw DimensionMismatch("cell field has " + std::to_string(f.size()) + " values, grid has " +
                                std::to_string(spec.num_cells()) + " cells");
}

void check_columns(const DomainSpec& spec, const ColumnField& f)
{
    if (f.size() != spec.num_columns())
        throw DimensionMismatch("height field has " + std::to_string(f.size()) + " values, grid has " +
                                std::to_string(spec.num_columns()) + " columns");
}

void check_density(const DomainSpec& spec, const DensityField& rho)
{
    check_cells(spec, rho);
    for (double v : rho)
        if (!(v >= 0.0 && v <= 1.0))
            throw IllPosed("density outside [0,1]");
}

bool is_binary(const DensityField& rho)
{
    return std::all_of(rho.begin(), rho.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

namespace {

// Node offsets of the 2^dim cell corners; bit a of the corner id selects the
// upper node along axis a.
struct CornerTable {
    int count = 0;
    std::array<std::size_t, 8> offset{};
    std::array<std::array<double, 3>, 8> coef{}; // d(corner basis)/dx_a at the center

    explicit CornerTable(const DomainSpec& spec)
    {
        count = 1 << spec.dim;
        const double scale = 1.0 / static_cast<double>(1 << (spec.dim - 1));
        for (int b = 0; b < count; ++b) {
            std::size_t off = 0;
            for (int a = 0; a < spec.dim; ++a) {
                const bool up = (b >> a) & 1;
                if (up)
                    off += spec.node_stride(a);
                coef[b][a] = (up ? 1.0 : -1.0) * scale / spec.spacing(a);
            }
            offset[b] = off;
        }
    }
};

std::size_t base_node(const DomainSpec& spec, std::size_t c)
{
    return spec.node_index(spec.cell_coords(c));
}

} // namespace

void cell_gradient(const DomainSpec& spec, const PotentialField& u, std::size_t c, std::span<double> out)
{
    const CornerTable t(spec);
    const std::size_t base = base_node(spec, c);
    for (int a = 0; a < spec.dim; ++a)
        out[a] = 0.0;
    for (int b = 0; b < t.count; ++b) {
        const double v = u[base + t.offset[b]];
        for (int a = 0; a < spec.dim; ++a)
            out[a] += t.coef[b][a] * v;
    }
}

CellVectorField gradient(const DomainSpec& spec, const PotentialField& u)
{
    check_nodes(spec, u);
    const CornerTable t(spec);
    const int d = spec.dim;
    CellVectorField g(d, spec.num_cells());
    DomainSpec::Index idx{};
    std::size_t c = 0;
    // walk cells in storage order, tracking the base node incrementally
    const int nx = spec.cells_along(0);
    const int ny = d == 3 ? spec.cells_along(1) : 1;
    const int nz = spec.n_z;
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            for (int k = 0; k < nz; ++k, ++c) {
                if (d == 2)
                    idx = {i, k, 0};
                else
                    idx = {i, j, k};
                const std::size_t base = spec.node_index(idx);
                double* out = g.data.data() + c * d;
                for (int b = 0; b < t.count; ++b) {
                    const double v = u[base + t.offset[b]];
                    for (int a = 0; a < d; ++a)
                        out[a] += t.coef[b][a] * v;
                }
            }
        }
    }
    return g;
}

void gradient_adjoint_add(const DomainSpec& spec, const CellVectorField& q, std::span<const double> weight,
                          PotentialField& out)
{
    check_nodes(spec, out);
    const CornerTable t(spec);
    const int d = spec.dim;
    const int nx = spec.cells_along(0);
    const int ny = d == 3 ? spec.cells_along(1) : 1;
    const int nz = spec.n_z;
    std::size_t c = 0;
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) {
            for (int k = 0; k < nz; ++k, ++c) {
                const DomainSpec::Index idx = d == 2 ? DomainSpec::Index{i, k, 0} : DomainSpec::Index{i, j, k};
                const std::size_t base = spec.node_index(idx);
                const double* qc = q.data.data() + c * d;
                const double w = weight[c];
                for (int b = 0; b < t.count; ++b) {
                    double s = 0.0;
                    for (int a = 0; a < d; ++a)
                        s += t.coef[b][a] * qc[a];
                    out[base + t.offset[b]] += w * s;
                }
            }
        }
    }
}

CellVectorField forward_difference(const DomainSpec& spec, const CellField& rho)
{
    check_cells(spec, rho);
    const int d = spec.dim;
    CellVectorField g(d, spec.num_cells());
    std::array<std::size_t, 3> stride{};
    std::array<double, 3> inv_h{};
    for (int a = 0; a < d; ++a) {
        stride[a] = spec.cell_stride(a);
        inv_h[a] = 1.0 / spec.spacing(a);
    }
    for (std::size_t c = 0; c < rho.size(); ++c) {
        const auto idx = spec.cell_coords(c);
        for (int a = 0; a < d; ++a) {
            if (idx[a] + 1 < spec.cells_along(a))
                g.data[c * d + a] = (rho[c + stride[a]] - rho[c]) * inv_h[a];
        }
    }
    return g;
}

CellField forward_difference_adjoint(const DomainSpec& spec, const CellVectorField& p)
{
    const int d = spec.dim;
    CellField out(spec.num_cells());
    std::array<std::size_t, 3> stride{};
    std::array<double, 3> inv_h{};
    for (int a = 0; a < d; ++a) {
        stride[a] = spec.cell_stride(a);
        inv_h[a] = 1.0 / spec.spacing(a);
    }
    for (std::size_t c = 0; c < out.size(); ++c) {
        const auto idx = spec.cell_coords(c);
        for (int a = 0; a < d; ++a) {
            if (idx[a] + 1 < spec.cells_along(a)) {
                const double v = p.data[c * d + a] * inv_h[a];
                out[c + stride[a]] += v;
                out[c] -= v;
            }
        }
    }
    return out;
}

double total_variation(const DomainSpec& spec, const CellField& rho)
{
    const CellVectorField g = forward_difference(spec, rho);
    const int d = spec.dim;
    double tv = 0.0;
    for (std::size_t c = 0; c < rho.size(); ++c) {
        double sq = 0.0;
        for (int a = 0; a < d; ++a)
            sq += g.data[c * d + a] * g.data[c * d + a];
        tv += std::sqrt(sq);
    }
    return tv * spec.cell_measure();
}

double volume(const DomainSpec& spec, const CellField& rho)
{
    check_cells(spec, rho);
    double s = 0.0;
    for (double v : rho)
        s += v;
    return s * spec.cell_measure();
}

DensityField indicator_from_graph(const DomainSpec& spec, const HeightField& eta)
{
    check_columns(spec, eta);
    DensityField chi(spec.num_cells());
    const double hz = spec.h_z();
    for (std::size_t col = 0; col < eta.size(); ++col) {
        const double e = eta[col];
        if (!(std::abs(e) < 1.0))
            throw IllPosed("height field must satisfy |eta| < 1");
        for (int k = 0; k < spec.n_z; ++k)
            chi[spec.cell_in_column(col, k)] = (-1.0 + (k + 0.5) * hz < e) ? 1.0 : 0.0;
    }
    return chi;
}

HeightField graph_from_indicator(const DomainSpec& spec, const DensityField& chi)
{
    check_cells(spec, chi);
    HeightField eta(spec.num_columns());
    for (std::size_t col = 0; col < eta.size(); ++col) {
        int filled = 0;
        bool seen_empty = false;
        for (int k = 0; k < spec.n_z; ++k) {
            const double v = chi[spec.cell_in_column(col, k)];
            if (v != 0.0 && v != 1.0)
                throw IllPosed("graph_from_indicator requires a binary field");
            if (v == 1.0) {
                if (seen_empty)
                    throw NotAGraph("column " + std::to_string(col) + " is not of the form 1..1 0..0",
                                    static_cast<long>(col));
                ++filled;
            } else {
                seen_empty = true;
            }
        }
        eta[col] = -1.0 + filled * spec.h_z();
    }
    return eta;
}

// Field I/O -----------------------------------------------------------------

namespace {

int index_rank(const DomainSpec& spec, FieldLocation loc)
{
    return loc == FieldLocation::column ? spec.dim - 1 : spec.dim;
}

std::array<int, 3> extents_of(const DomainSpec& spec, FieldLocation loc)
{
    std::array<int, 3> e{1, 1, 1};
    const int r = index_rank(spec, loc);
    for (int a = 0; a < r; ++a)
        e[a] = loc == FieldLocation::node ? spec.nodes_along(a) : spec.cells_along(a);
    return e;
}

std::size_t expected_size(const DomainSpec& spec, FieldLocation loc)
{
    switch (loc) {
    case FieldLocation::node:
        return spec.num_nodes();
    case FieldLocation::cell:
        return spec.num_cells();
    case FieldLocation::column:
        return spec.num_columns();
    }
    return 0;
}

std::array<int, 3> unravel(std::size_t flat, const std::array<int, 3>& ext, int rank)
{
    std::array<int, 3> idx{};
    for (int a = rank - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(flat % static_cast<std::size_t>(ext[a]));
        flat /= static_cast<std::size_t>(ext[a]);
    }
    return idx;
}

std::string fmt_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_csv(const std::string& path, const DomainSpec& spec, FieldLocation loc, std::span<const double> values)
{
    if (values.size() != expected_size(spec, loc))
        throw DimensionMismatch("field size does not match grid for " + path);
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw Error("cannot open " + path + " for writing");
    const int rank = index_rank(spec, loc);
    const auto ext = extents_of(spec, loc);
    static const char* names[] = {"i", "j", "k"};
    for (int a = 0; a < rank; ++a)
        os << names[a] << ',';
    os << "value\n";
    for (std::size_t f = 0; f < values.size(); ++f) {
        const auto idx = unravel(f, ext, rank);
        for (int a = 0; a < rank; ++a)
            os << idx[a] << ',';
        os << fmt_double(values[f]) << '\n';
    }
    if (!os)
        throw Error("write failed for " + path);
}

std::vector<double> read_csv(const std::string& path, const DomainSpec& spec, FieldLocation loc)
{
    std::ifstream is(path);
    if (!is)
        throw Error("cannot open " + path);
    const int rank = index_rank(spec, loc);
    const auto ext = extents_of(spec, loc);
    const std::size_t n = expected_size(spec, loc);
    std::string line;
    if (!std::getline(is, line))
        throw Error(path + ": empty file");
    std::vector<double> values(n);
    std::vector<char> seen(n, 0);
    std::size_t count = 0;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        std::array<long, 3> idx{};
        std::string tok;
        for (int a = 0; a < rank; ++a) {
            if (!std::getline(ls, tok, ','))
                throw Error(path + ": malformed row '" + line + "'");
            idx[a] = std::stol(tok);
            if (idx[a] < 0 || idx[a] >= ext[a])
                throw Error(path + ": index out of range in row '" + line + "'");
        }
        if (!std::getline(ls, tok))
            throw Error(path + ": missing value in row '" + line + "'");
        std::size_t flat = 0;
        for (int a = 0; a < rank; ++a)
            flat = flat * static_cast<std::size_t>(ext[a]) + static_cast<std::size_t>(idx[a]);
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || !std::isfinite(v))
            throw Error(path + ": bad value in row '" + line + "'");
        if (seen[flat])
            throw Error(path + ": duplicate row '" + line + "'");
        seen[flat] = 1;
        values[flat] = v;
        ++count;
    }
    if (count != n)
        throw Error(path + ": expected " + std::to_string(n) + " rows, found " + std::to_string(count));
    return values;
}

void write_grid_ascii(const std::string& path, const DomainSpec& spec, FieldLocation loc,
                      std::span<const double> values)
{
    if (values.size() != expected_size(spec, loc))
        throw DimensionMismatch("field size does not match grid for " + path);
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw Error("cannot open " + path + " for writing");
    const int rank = index_rank(spec, loc);
    const auto ext = extents_of(spec, loc);
    for (int a = 0; a < rank; ++a)
        os << (a ? " " : "") << ext[a];
    os << '\n';
    for (int a = 0; a < rank; ++a)
        os << (a ? " " : "") << fmt_double(spec.spacing(a));
    os << '\n';
    for (int a = 0; a < rank; ++a) {
        const double h = spec.spacing(a);
        double origin = a == spec.dim - 1 ? -1.0 : 0.0;
        if (loc != FieldLocation::node)
            origin += 0.5 * h;
        os << (a ? " " : "") << fmt_double(origin);
    }
    os << '\n';
    const std::size_t per_line = static_cast<std::size_t>(ext[rank - 1]);
    for (std::size_t f = 0; f < values.size(); ++f)
        os << fmt_double(values[f]) << ((f + 1) % per_line == 0 ? '\n' : ' ');
    if (!os)
        throw Error("write failed for " + path);
}

std::vector<double> read_grid_ascii(const std::string& path, const DomainSpec& spec, FieldLocation loc)
{
    std::ifstream is(path);
    if (!is)
        throw Error("cannot open " + path);
    const int rank = index_rank(spec, loc);
    const auto ext = extents_of(spec, loc);
    std::string line;
    if (!std::getline(is, line))
        throw Error(path + ": missing header");
    std::istringstream dims(line);
    for (int a = 0; a < rank; ++a) {
        int e = 0;
        if (!(dims >> e) || e != ext[a])
            throw Error(path + ": grid dimensions do not match");
    }
    for (int skip = 0; skip < 2; ++skip)
        if (!std::getline(is, line))
            throw Error(path + ": missing header");
    std::vector<double> values;
    values.reserve(expected_size(spec, loc));
    std::string tok;
    while (is >> tok) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw Error(path + ": bad value '" + tok + "'");
        values.push_back(v);
    }
    if (values.size() != expected_size(spec, loc))
        throw Error(path + ": value count does not match grid");
    return values;
}

} // namespace ferro
