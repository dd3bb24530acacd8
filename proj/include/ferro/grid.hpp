#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ferro {

/// Uniform Cartesian discretization of the cylinder D = Omega x (-1, 1).
///
/// Axis order is (x, z) in 2-D and (x, y, z) in 3-D; the last axis is always
/// vertical. Cells and nodes are stored row-major with z varying fastest.
/// Potentials live on nodes, densities and gradients on cells.
struct DomainSpec {
    int dim = 2;
    std::array<double, 2> extent{1.0, 1.0}; // horizontal extents of Omega
    std::array<int, 2> n_horizontal{2, 2};  // cells per horizontal axis
    int n_z = 2;

    static DomainSpec make_2d(double length, int nx, int nz);
    static DomainSpec make_3d(double lx, double ly, int nx, int ny, int nz);

    /// Throws IllPosed unless dim is 2 or 3, resolutions >= 2, extents > 0.
    void validate() const;

    int cells_along(int axis) const { return axis == dim - 1 ? n_z : n_horizontal[axis]; }
    int nodes_along(int axis) const { return cells_along(axis) + 1; }
    double spacing(int axis) const
    {
        return axis == dim - 1 ? 2.0 / n_z : extent[axis] / n_horizontal[axis];
    }
    double h_z() const { return 2.0 / n_z; }

    std::size_t num_cells() const;
    std::size_t num_nodes() const;
    std::size_t num_columns() const;

    double cell_measure() const;
    double omega_measure() const;
    double domain_measure() const { return 2.0 * omega_measure(); }

    using Index = std::array<int, 3>;

    std::size_t cell_index(const Index& idx) const;
    Index cell_coords(std::size_t c) const;
    std::size_t node_index(const Index& idx) const;
    Index node_coords(std::size_t n) const;

    /// Linear index of the column holding cell c.
    std::size_t column_of_cell(std::size_t c) const { return c / static_cast<std::size_t>(n_z); }
    std::size_t cell_in_column(std::size_t column, int k) const
    {
        return column * static_cast<std::size_t>(n_z) + static_cast<std::size_t>(k);
    }

    std::size_t cell_stride(int axis) const;
    std::size_t node_stride(int axis) const;

    double cell_center(std::size_t c, int axis) const;
    double cell_center_z(std::size_t c) const
    {
        return -1.0 + (static_cast<double>(c % static_cast<std::size_t>(n_z)) + 0.5) * h_z();
    }
    double node_position(std::size_t n, int axis) const;

    /// True for nodes on the lateral wall, where potentials are pinned to 0.
    bool is_lateral_node(std::size_t n) const;

    friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct NodeTag {};
struct CellTag {};
struct ColumnTag {};

/// Scalar field attached to one family of grid entities.
template <class Tag>
class Field {
public:
    Field() = default;
    explicit Field(std::size_t n, double value = 0.0) : v_(n, value) {}
    explicit Field(std::vector<double> values) : v_(std::move(values)) {}

    std::size_t size() const noexcept { return v_.size(); }
    double& operator[](std::size_t i) { return v_[i]; }
    double operator[](std::size_t i) const { return v_[i]; }

    std::span<double> values() noexcept { return v_; }
    std::span<const double> values() const noexcept { return v_; }
    std::vector<double>& raw() noexcept { return v_; }
    const std::vector<double>& raw() const noexcept { return v_; }

    auto begin() noexcept { return v_.begin(); }
    auto end() noexcept { return v_.end(); }
    auto begin() const noexcept { return v_.begin(); }
    auto end() const noexcept { return v_.end(); }

    friend bool operator==(const Field&, const Field&) = default;

private:
    std::vector<double> v_;
};

using NodeField = Field<NodeTag>;
using CellField = Field<CellTag>;
using ColumnField = Field<ColumnTag>;

/// Magnetic potential u, zero on the lateral wall.
using PotentialField = NodeField;
/// Density rho in [0,1], or indicator chi in {0,1}.
using DensityField = CellField;
/// Interface height eta per horizontal cell.
using HeightField = ColumnField;

/// One dim-vector per cell, interleaved.
struct CellVectorField {
    int dim = 2;
    std::vector<double> data;

    CellVectorField() = default;
    CellVectorField(int d, std::size_t cells, double value = 0.0) : dim(d), data(cells * d, value) {}

    std::size_t cells() const { return data.size() / static_cast<std::size_t>(dim); }
    std::span<double> at(std::size_t c) { return {data.data() + c * dim, static_cast<std::size_t>(dim)}; }
    std::span<const double> at(std::size_t c) const
    {
        return {data.data() + c * dim, static_cast<std::size_t>(dim)};
    }
};

PotentialField zero_potential(const DomainSpec& spec);
DensityField constant_density(const DomainSpec& spec, double value);

/// Pins lateral-wall nodes to zero.
void apply_lateral_zero(const DomainSpec& spec, PotentialField& u);

/// Throws DimensionMismatch when the field size does not match the grid.
void check_nodes(const DomainSpec& spec, const PotentialField& u);
void check_cells(const DomainSpec& spec, const CellField& f);
void check_columns(const DomainSpec& spec, const ColumnField& f);

/// Throws IllPosed unless every value lies in [0,1].
void check_density(const DomainSpec& spec, const DensityField& rho);
bool is_binary(const DensityField& rho);

/// Samples f at every node.
template <class F>
PotentialField sample_nodes(const DomainSpec& spec, F&& f);

/// Gradient of the multilinear interpolant of u at the center of cell c.
void cell_gradient(const DomainSpec& spec, const PotentialField& u, std::size_t c, std::span<double> out);

/// Per-cell gradient of the multilinear interpolant, evaluated at cell centers.
CellVectorField gradient(const DomainSpec& spec, const PotentialField& u);

/// out += G^T (weight * q): the adjoint of `gradient` with per-cell weights.
void gradient_adjoint_add(const DomainSpec& spec, const CellVectorField& q, std::span<const double> weight,
                          PotentialField& out);

/// Forward differences inside D; differences across the outer boundary are 0.
CellVectorField forward_difference(const DomainSpec& spec, const CellField& rho);
/// Adjoint of forward_difference (a negative discrete divergence).
CellField forward_difference_adjoint(const DomainSpec& spec, const CellVectorField& p);

/// Isotropic total variation: sum over cells of |forward difference| times cell measure.
double total_variation(const DomainSpec& spec, const CellField& rho);

double volume(const DomainSpec& spec, const CellField& rho);

/// Indicator of {z < eta}: a cell is filled iff its center lies below eta.
DensityField indicator_from_graph(const DomainSpec& spec, const HeightField& eta);

/// Inverse of indicator_from_graph. Columns must read 1..1 0..0 from the
/// bottom; the cut height is -1 + (filled cells) h_z. Empty or full columns
/// give -1 or 1. Throws NotAGraph naming the first offending column.
HeightField graph_from_indicator(const DomainSpec& spec, const DensityField& chi);

// Field I/O -----------------------------------------------------------------

enum class FieldLocation { node, cell, column };

/// CSV with header `i,j[,k],value` in storage order.
void write_csv(const std::string& path, const DomainSpec& spec, FieldLocation loc, std::span<const double> values);
std::vector<double> read_csv(const std::string& path, const DomainSpec& spec, FieldLocation loc);

/// ASCII structured grid: line 1 the point counts per axis, line 2 the
/// spacings, line 3 the origin, then whitespace-separated values.
void write_grid_ascii(const std::string& path, const DomainSpec& spec, FieldLocation loc,
                      std::span<const double> values);
std::vector<double> read_grid_ascii(const std::string& path, const DomainSpec& spec, FieldLocation loc);

// ---------------------------------------------------------------------------

template <class F>
PotentialField sample_nodes(const DomainSpec& spec, F&& f)
{
    PotentialField u(spec.num_nodes());
    for (std::size_t n = 0; n < u.size(); ++n) {
        std::array<double, 3> x{};
        for (int a = 0; a < spec.dim; ++a)
            x[a] = spec.node_position(n, a);
        u[n] = spec.is_lateral_node(n) ? 0.0 : f(x);
    }
    return u;
}

} // namespace ferro
