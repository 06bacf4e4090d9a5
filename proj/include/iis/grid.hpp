#pragma once

// Steady 2-D groundwater flow and nonreactive advection-dispersion transport
// on a regular cell-centered grid.
//
// Cells are indexed y-fastest: index(i, j) = i * ny + j, with i along x.
// The left (x = 0) and right (x = Lx) sides carry constant heads, the top and
// bottom sides are no-flow. Transport uses hybrid central/upwind advection,
// central-difference dispersion (full tensor) and backward-Euler time steps.

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace iis {

struct FlowGrid {
  int nx = 81;
  int ny = 41;
  double lx = 20.0;
  double ly = 10.0;
  double head_left = 12.0;
  double head_right = 11.0;

  double dx() const { return lx / nx; }
  double dy() const { return ly / ny; }
  int cells() const { return nx * ny; }
  int index(int i, int j) const { return i * ny + j; }
  double x_center(int i) const { return (i + 0.5) * dx(); }
  double y_center(int j) const { return (j + 0.5) * dy(); }
  bool contains(double x, double y) const {
    return x >= 0.0 && x <= lx && y >= 0.0 && y <= ly;
  }
  /// Cell containing (x, y); points on the far edge map to the last cell.
  std::pair<int, int> locate(double x, double y) const;

  /// Throws ConfigError on non-positive sizes or counts.
  void validate() const;

  bool operator==(const FlowGrid&) const = default;
};

enum class FieldOrigin { constant, zonated, kl_synthesized };

std::string to_string(FieldOrigin origin);

/// Per-cell hydraulic conductivity, stored as Y = ln K.
struct ConductivityField {
  Eigen::VectorXd log_k;
  FieldOrigin origin = FieldOrigin::constant;

  double k(int cell) const;
  static ConductivityField constant(const FlowGrid& grid, double log_k);
};

/// Rectangular zone [x0, x1) x [y0, y1) used to build zonated fields.
struct Zone {
  double x0, x1, y0, y1;
  bool contains(double x, double y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

/// Piecewise-constant field: the first zone containing a cell center wins.
/// Every cell must be covered by some zone.
ConductivityField zonated_field(const FlowGrid& grid,
                                const std::vector<Zone>& zones,
                                const std::vector<double>& log_k);

struct HeadField {
  Eigen::VectorXd head;
};

HeadField solve_steady_flow(const FlowGrid& grid, const ConductivityField& k);

/// Seepage velocities. Face arrays hold the normal component on every cell
/// face: face_x is (nx + 1) x ny, face_y is nx x (ny + 1). Cell-centered
/// components are averages of the two bounding faces.
struct VelocityField {
  Eigen::MatrixXd face_x;
  Eigen::MatrixXd face_y;
  Eigen::VectorXd vx;
  Eigen::VectorXd vy;
};

VelocityField darcy_velocity(const FlowGrid& grid, const ConductivityField& k,
                             const HeadField& h, double porosity);

/// Darcy flux (per unit thickness) leaving each cell, summed over its faces,
/// including the boundary faces. Zero up to round-off for a converged solve.
Eigen::VectorXd cell_flux_imbalance(const FlowGrid& grid,
                                    const ConductivityField& k,
                                    const HeadField& h);

/// Total Darcy inflow through the left boundary.
double boundary_throughflow(const FlowGrid& grid, const ConductivityField& k,
                            const HeadField& h);

/// Head on the vertical face between cells (i, j) and (i + 1, j), from flux
/// continuity across the face.
double face_head_x(const FlowGrid& grid, const ConductivityField& k,
                   const HeadField& h, int i, int j);

struct DispersionTensor {
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;
};

DispersionTensor dispersion_tensor(double vx, double vy, double alpha_l,
                                   double alpha_t);

enum class Advection {
  /// First-order upwind on every face.
  upwind,
  /// Central on faces with cell Peclet number <= 2, upwind elsewhere.
  hybrid,
};

struct TransportPhysics {
  double porosity = 0.25;
  double alpha_l = 0.3;
  double alpha_t = 0.03;
  bool cross_dispersion = true;
  Advection advection = Advection::hybrid;

  void validate() const;
  bool operator==(const TransportPhysics&) const = default;
};

/// Point source released at piecewise-constant mass rates; strength k is
/// active on [release_start + k * interval, release_start + (k + 1) * interval).
struct SourceSpec {
  double x = 4.0;
  double y = 5.0;
  std::vector<double> strengths;
  double release_start = 1.0;
  double interval = 1.0;

  double rate_at(double t) const;
  double total_mass(double t_end) const;
};

struct ConcentrationField {
  double time = 0.0;
  Eigen::VectorXd conc;
};

struct MassBalance {
  double time = 0.0;
  double injected = 0.0;
  double stored = 0.0;
  double outflow = 0.0;
  /// |injected - stored - outflow| / injected, zero when nothing was injected.
  double relative_error() const;
};

struct TransportOptions {
  double t_end = 10.0;
  double dt = 0.05;
  /// Snapshot times; each must be a multiple of dt within [0, t_end].
  std::vector<double> output_times{2.0, 4.0, 6.0, 8.0, 10.0};
};

struct TransportResult {
  std::vector<ConcentrationField> snapshots;
  std::vector<MassBalance> balance;
  double min_concentration = 0.0;
};

TransportResult simulate_transport(const FlowGrid& grid,
                                   const VelocityField& velocity,
                                   const TransportPhysics& physics,
                                   const SourceSpec& source,
                                   const TransportOptions& options);

/// Convenience overload solving the flow problem first.
TransportResult simulate_transport(const FlowGrid& grid,
                                   const ConductivityField& k,
                                   const TransportPhysics& physics,
                                   const SourceSpec& source,
                                   const TransportOptions& options);

struct Well {
  std::string name;
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Well&) const = default;
};

enum class Quantity { head, concentration };

struct ObservationInfo {
  Quantity kind = Quantity::head;
  int well = 0;
  double time = 0.0;
};

struct Observations {
  Eigen::VectorXd values;
  std::vector<ObservationInfo> info;
};

/// Bilinear interpolation of a cell-centered field at (x, y); clamps to the
/// outermost cell centers near the boundary.
double interpolate(const FlowGrid& grid, const Eigen::VectorXd& field, double x,
                   double y);

/// All heads first (one per well), then concentrations well-major,
/// time-minor.
Observations observe(const FlowGrid& grid, const HeadField& head,
                     const std::vector<ConcentrationField>& snapshots,
                     const std::vector<Well>& wells,
                     const std::vector<double>& times);

/// Writes x,y,value rows for plotting.
void write_field_csv(const std::string& path, const FlowGrid& grid,
                     const Eigen::VectorXd& values);

}  // namespace iis
