#include "iis/grid.hpp"

#include "iis/error.hpp"
#include "banded_lu.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace iis {

namespace {

using Triplet = Eigen::Triplet<double>;

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

// Conductance (per unit thickness) between two neighbouring cells.
double face_conductance(double k1, double k2, double length, double distance) {
  return harmonic(k1, k2) * length / distance;
}

}  // namespace

std::pair<int, int> FlowGrid::locate(double x, double y) const {
  int i = static_cast<int>(std::floor(x / dx()));
  int j = static_cast<int>(std::floor(y / dy()));
  return {std::clamp(i, 0, nx - 1), std::clamp(j, 0, ny - 1)};
}

void FlowGrid::validate() const {
  if (nx < 2 || ny < 1) throw ConfigError("grid needs nx >= 2 and ny >= 1");
  if (!(lx > 0.0) || !(ly > 0.0))
    throw ConfigError("grid extents must be positive");
}

std::string to_string(FieldOrigin origin) {
  switch (origin) {
    case FieldOrigin::constant:
      return "constant";
    case FieldOrigin::zonated:
      return "zonated";
    case FieldOrigin::kl_synthesized:
      return "kl";
  }
  return "unknown";
}

double ConductivityField::k(int cell) const { return std::exp(log_k[cell]); }

ConductivityField ConductivityField::constant(const FlowGrid& grid,
                                              double log_k) {
  return {Eigen::VectorXd::Constant(grid.cells(), log_k),
          FieldOrigin::constant};
}

ConductivityField zonated_field(const FlowGrid& grid,
                                const std::vector<Zone>& zones,
                                const std::vector<double>& log_k) {
  if (zones.size() != log_k.size())
    throw ConfigError("zonated field: zone count and value count differ");
  ConductivityField field{Eigen::VectorXd(grid.cells()), FieldOrigin::zonated};
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      const double x = grid.x_center(i), y = grid.y_center(j);
      auto it = std::find_if(zones.begin(), zones.end(),
                             [&](const Zone& z) { return z.contains(x, y); });
      if (it == zones.end()) {
        std::ostringstream msg;
        msg << "zonated field: cell (" << i << ", " << j
            << ") is not covered by any zone";
        throw ConfigError(msg.str());
      }
      field.log_k[grid.index(i, j)] = log_k[it - zones.begin()];
    }
  }
  return field;
}

HeadField solve_steady_flow(const FlowGrid& grid, const ConductivityField& k) {
  grid.validate();
  const int n = grid.cells();
  if (k.log_k.size() != n)
    throw ShapeError("conductivity field size does not match the grid");
  const double dx = grid.dx(), dy = grid.dy();

  Eigen::VectorXd kc(n);
  for (int c = 0; c < n; ++c) {
    kc[c] = k.k(c);
    if (!(kc[c] > 0.0) || !std::isfinite(kc[c])) {
      std::ostringstream msg;
      msg << "flow solve failed: non-positive conductivity in cell ("
          << c / grid.ny << ", " << c % grid.ny << ")";
      throw NumericalError(msg.str());
    }
  }

  std::vector<Triplet> entries;
  entries.reserve(5 * n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      const int p = grid.index(i, j);
      double diag = 0.0;
      auto couple = [&](int q, double t) {
        entries.emplace_back(p, q, -t);
        diag += t;
      };
      if (i > 0) couple(grid.index(i - 1, j), face_conductance(kc[p], kc[grid.index(i - 1, j)], dy, dx));
      if (i < grid.nx - 1) couple(grid.index(i + 1, j), face_conductance(kc[p], kc[grid.index(i + 1, j)], dy, dx));
      if (j > 0) couple(grid.index(i, j - 1), face_conductance(kc[p], kc[grid.index(i, j - 1)], dx, dy));
      if (j < grid.ny - 1) couple(grid.index(i, j + 1), face_conductance(kc[p], kc[grid.index(i, j + 1)], dx, dy));
      if (i == 0) {
        const double t = kc[p] * dy / (0.5 * dx);
        diag += t;
        rhs[p] += t * grid.head_left;
      }
      if (i == grid.nx - 1) {
        const double t = kc[p] * dy / (0.5 * dx);
        diag += t;
        rhs[p] += t * grid.head_right;
      }
      if (!(diag > 0.0)) {
        std::ostringstream msg;
        msg << "flow solve failed: singular row at cell (" << i << ", " << j
            << ")";
        throw NumericalError(msg.str());
      }
      entries.emplace_back(p, p, diag);
    }
  }

  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(entries.begin(), entries.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success)
    throw NumericalError("flow solve failed: factorization unsuccessful");
  HeadField h{solver.solve(rhs)};
  const double residual = (a * h.head - rhs).norm() / rhs.norm();
  if (!(residual <= 1e-10)) {
    std::ostringstream msg;
    msg << "flow solve failed: relative residual " << residual;
    throw NumericalError(msg.str());
  }
  return h;
}

VelocityField darcy_velocity(const FlowGrid& grid, const ConductivityField& k,
                             const HeadField& h, double porosity) {
  if (!(porosity > 0.0)) throw ConfigError("porosity must be positive");
  const double dx = grid.dx(), dy = grid.dy();
  VelocityField v;
  v.face_x = Eigen::MatrixXd::Zero(grid.nx + 1, grid.ny);
  v.face_y = Eigen::MatrixXd::Zero(grid.nx, grid.ny + 1);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i <= grid.nx; ++i) {
      double q;
      if (i == 0) {
        const int p = grid.index(0, j);
        q = -k.k(p) * (h.head[p] - grid.head_left) / (0.5 * dx);
      } else if (i == grid.nx) {
        const int p = grid.index(grid.nx - 1, j);
        q = -k.k(p) * (grid.head_right - h.head[p]) / (0.5 * dx);
      } else {
        const int w = grid.index(i - 1, j), e = grid.index(i, j);
        q = -harmonic(k.k(w), k.k(e)) * (h.head[e] - h.head[w]) / dx;
      }
      v.face_x(i, j) = q / porosity;
    }
  }
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 1; j < grid.ny; ++j) {
      const int s = grid.index(i, j - 1), nn = grid.index(i, j);
      v.face_y(i, j) =
          -harmonic(k.k(s), k.k(nn)) * (h.head[nn] - h.head[s]) / dy / porosity;
    }
  }
  v.vx.resize(grid.cells());
  v.vy.resize(grid.cells());
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      const int p = grid.index(i, j);
      v.vx[p] = 0.5 * (v.face_x(i, j) + v.face_x(i + 1, j));
      v.vy[p] = 0.5 * (v.face_y(i, j) + v.face_y(i, j + 1));
    }
  }
  return v;
}

Eigen::VectorXd cell_flux_imbalance(const FlowGrid& grid,
                                    const ConductivityField& k,
                                    const HeadField& h) {
  // Darcy fluxes are the seepage velocities at unit porosity.
  const VelocityField q = darcy_velocity(grid, k, h, 1.0);
  Eigen::VectorXd net(grid.cells());
  for (int i = 0; i < grid.nx; ++i) {
    for (int j = 0; j < grid.ny; ++j) {
      net[grid.index(i, j)] = (q.face_x(i + 1, j) - q.face_x(i, j)) * grid.dy() +
                              (q.face_y(i, j + 1) - q.face_y(i, j)) * grid.dx();
    }
  }
  return net;
}

double boundary_throughflow(const FlowGrid& grid, const ConductivityField& k,
                            const HeadField& h) {
  const VelocityField q = darcy_velocity(grid, k, h, 1.0);
  return q.face_x.row(0).sum() * grid.dy();
}

double face_head_x(const FlowGrid& grid, const ConductivityField& k,
                   const HeadField& h, int i, int j) {
  const int w = grid.index(i, j), e = grid.index(i + 1, j);
  const double kw = k.k(w), ke = k.k(e);
  return (kw * h.head[w] + ke * h.head[e]) / (kw + ke);
}

DispersionTensor dispersion_tensor(double vx, double vy, double alpha_l,
                                   double alpha_t) {
  if (alpha_l < 0.0 || alpha_t < 0.0)
    throw ConfigError("dispersivities must be non-negative");
  const double speed = std::hypot(vx, vy);
  if (speed == 0.0) return {};
  return {(alpha_l * vx * vx + alpha_t * vy * vy) / speed,
          (alpha_t * vx * vx + alpha_l * vy * vy) / speed,
          (alpha_l - alpha_t) * vx * vy / speed};
}

void TransportPhysics::validate() const {
  if (!(porosity > 0.0) || porosity > 1.0)
    throw ConfigError("porosity must lie in (0, 1]");
  if (alpha_l < 0.0 || alpha_t < 0.0)
    throw ConfigError("dispersivities must be non-negative");
}

double SourceSpec::rate_at(double t) const {
  if (t < release_start) return 0.0;
  const auto k = static_cast<std::size_t>(std::floor((t - release_start) / interval));
  return k < strengths.size() ? strengths[k] : 0.0;
}

double SourceSpec::total_mass(double t_end) const {
  double mass = 0.0;
  for (std::size_t k = 0; k < strengths.size(); ++k) {
    const double a = release_start + k * interval;
    const double b = std::min(a + interval, t_end);
    if (b > a) mass += strengths[k] * (b - a);
  }
  return mass;
}

double MassBalance::relative_error() const {
  if (injected == 0.0) return std::abs(stored) + std::abs(outflow);
  return std::abs(injected - stored - outflow) / injected;
}

namespace {

struct Stencil {
  Eigen::SparseMatrix<double> op;  // dC/dt = op * C + source
  Eigen::VectorXd outflow_rate;    // theta * |u| * face area per cell
};

Stencil transport_operator(const FlowGrid& grid, const VelocityField& v,
                           const TransportPhysics& physics) {
  const int nx = grid.nx, ny = grid.ny, n = grid.cells();
  const double dx = grid.dx(), dy = grid.dy(), vol = dx * dy;

  std::vector<DispersionTensor> d(n);
  for (int c = 0; c < n; ++c) {
    d[c] = dispersion_tensor(v.vx[c], v.vy[c], physics.alpha_l, physics.alpha_t);
    if (!physics.cross_dispersion) d[c].xy = 0.0;
  }

  std::vector<Triplet> entries;
  entries.reserve(13 * n);
  Eigen::VectorXd outflow = Eigen::VectorXd::Zero(n);

  // A flux F (mass per time per theta) from cell p into cell q written as a
  // linear combination of concentrations: F = sum_k w_k C_k.
  auto add_flux = [&](int p, int q, int k, double w) {
    entries.emplace_back(p, k, -w / vol);
    entries.emplace_back(q, k, w / vol);
  };

  // Hybrid scheme: central differences while the face Peclet number is at
  // most 2, upwind otherwise.
  auto central = [&](double u, double h, double diff) {
    return physics.advection == Advection::hybrid && std::abs(u) * h <= 2.0 * diff;
  };

  auto yn = [&](int j) { return std::min(j + 1, ny - 1); };
  auto ys = [&](int j) { return std::max(j - 1, 0); };
  auto xe = [&](int i) { return std::min(i + 1, nx - 1); };
  auto xw = [&](int i) { return std::max(i - 1, 0); };

  // Vertical faces.
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const double u = v.face_x(i, j);
      if (i == 0 || i == nx) {
        const int p = grid.index(i == 0 ? 0 : nx - 1, j);
        const bool leaving = (i == 0) ? u < 0.0 : u > 0.0;
        if (leaving) {
          entries.emplace_back(p, p, -std::abs(u) * dy / vol);
          outflow[p] += physics.porosity * std::abs(u) * dy;
        }
        continue;
      }
      const int w = grid.index(i - 1, j), e = grid.index(i, j);
      const double dxx = 0.5 * (d[w].xx + d[e].xx);
      if (central(u, dx, dxx)) {
        add_flux(w, e, w, 0.5 * u * dy);
        add_flux(w, e, e, 0.5 * u * dy);
      } else if (u > 0.0) {
        add_flux(w, e, w, u * dy);
      } else if (u < 0.0) {
        add_flux(w, e, e, u * dy);
      }
      const double dxy = 0.5 * (d[w].xy + d[e].xy);
      add_flux(w, e, w, dxx * dy / dx);
      add_flux(w, e, e, -dxx * dy / dx);
      if (dxy != 0.0) {
        const double c = dxy * dy / (4.0 * dy);
        add_flux(w, e, grid.index(i - 1, ys(j)), c);
        add_flux(w, e, grid.index(i, ys(j)), c);
        add_flux(w, e, grid.index(i - 1, yn(j)), -c);
        add_flux(w, e, grid.index(i, yn(j)), -c);
      }
    }
  }
  // Horizontal faces; top and bottom are closed.
  for (int i = 0; i < nx; ++i) {
    for (int j = 1; j < ny; ++j) {
      const double u = v.face_y(i, j);
      const int s = grid.index(i, j - 1), nn = grid.index(i, j);
      const double dyy = 0.5 * (d[s].yy + d[nn].yy);
      if (central(u, dy, dyy)) {
        add_flux(s, nn, s, 0.5 * u * dx);
        add_flux(s, nn, nn, 0.5 * u * dx);
      } else if (u > 0.0) {
        add_flux(s, nn, s, u * dx);
      } else if (u < 0.0) {
        add_flux(s, nn, nn, u * dx);
      }
      const double dxy = 0.5 * (d[s].xy + d[nn].xy);
      add_flux(s, nn, s, dyy * dx / dy);
      add_flux(s, nn, nn, -dyy * dx / dy);
      if (dxy != 0.0) {
        const double c = dxy * dx / (4.0 * dx);
        add_flux(s, nn, grid.index(xw(i), j - 1), c);
        add_flux(s, nn, grid.index(xw(i), j), c);
        add_flux(s, nn, grid.index(xe(i), j - 1), -c);
        add_flux(s, nn, grid.index(xe(i), j), -c);
      }
    }
  }

  Stencil st;
  st.op.resize(n, n);
  st.op.setFromTriplets(entries.begin(), entries.end());
  st.outflow_rate = std::move(outflow);
  return st;
}

// Bilinear weights of (x, y) on the four surrounding cell centers.
struct Bilinear {
  int cell[4];
  double weight[4];
};

Bilinear bilinear(const FlowGrid& grid, double x, double y) {
  auto axis = [](double pos, double h, int count, int& lo, double& frac) {
    double s = pos / h - 0.5;
    if (count == 1) {
      lo = 0;
      frac = 0.0;
      return;
    }
    s = std::clamp(s, 0.0, static_cast<double>(count - 1));
    lo = std::min(static_cast<int>(std::floor(s)), count - 2);
    frac = s - lo;
  };
  int i0, j0;
  double fx, fy;
  axis(x, grid.dx(), grid.nx, i0, fx);
  axis(y, grid.dy(), grid.ny, j0, fy);
  const int j1 = grid.ny == 1 ? j0 : j0 + 1;
  return {{grid.index(i0, j0), grid.index(i0 + 1, j0), grid.index(i0, j1),
           grid.index(i0 + 1, j1)},
          {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy}};
}

bool is_step_multiple(double t, double dt) {
  const double r = t / dt;
  return std::abs(r - std::round(r)) < 1e-9 * std::max(1.0, r);
}

}  // namespace

TransportResult simulate_transport(const FlowGrid& grid,
                                   const VelocityField& velocity,
                                   const TransportPhysics& physics,
                                   const SourceSpec& source,
                                   const TransportOptions& options) {
  physics.validate();
  if (!grid.contains(source.x, source.y)) {
    std::ostringstream msg;
    msg << "source (" << source.x << ", " << source.y
        << ") lies outside the domain";
    throw ConfigError(msg.str());
  }
  for (double s : source.strengths)
    if (s < 0.0) throw ConfigError("source strengths must be non-negative");
  if (!(options.dt > 0.0) || !std::isfinite(options.dt)) {
    std::ostringstream msg;
    msg << "time step dt = " << options.dt << " is not a positive number";
    throw NumericalError(msg.str());
  }
  if (options.dt > source.interval || !is_step_multiple(source.interval, options.dt) ||
      !is_step_multiple(source.release_start, options.dt)) {
    std::ostringstream msg;
    msg << "time step dt = " << options.dt
        << " does not resolve the source release intervals";
    throw NumericalError(msg.str());
  }
  for (double t : options.output_times) {
    if (t < 0.0 || t > options.t_end + 1e-12 || !is_step_multiple(t, options.dt))
      throw ConfigError("output times must be multiples of dt within [0, t_end]");
  }

  const int n = grid.cells();
  const double vol = grid.dx() * grid.dy();
  const Stencil st = transport_operator(grid, velocity, physics);

  Eigen::SparseMatrix<double> system(n, n);
  system.setIdentity();
  system -= options.dt * st.op;
  system.makeCompressed();
  detail::BandedLU banded;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  const bool use_banded = banded.factor(system);
  if (!use_banded) {
    lu.compute(system);
    if (lu.info() != Eigen::Success)
      throw NumericalError("transport solve failed: factorization unsuccessful");
  }

  const Bilinear splat = bilinear(grid, source.x, source.y);
  const double cell_mass = physics.porosity * vol;

  const int steps = static_cast<int>(std::llround(options.t_end / options.dt));
  std::vector<int> output_steps;
  for (double t : options.output_times)
    output_steps.push_back(static_cast<int>(std::llround(t / options.dt)));

  TransportResult result;
  result.snapshots.resize(options.output_times.size());
  result.balance.resize(options.output_times.size());
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd rhs(n);
  double injected = 0.0, outflow = 0.0, min_c = 0.0;

  auto record = [&](int step) {
    for (std::size_t k = 0; k < output_steps.size(); ++k) {
      if (output_steps[k] != step) continue;
      result.snapshots[k] = {step * options.dt, c};
      result.balance[k] = {step * options.dt, injected,
                           cell_mass * c.sum(), outflow};
    }
  };
  record(0);
  for (int step = 0; step < steps; ++step) {
    const double t_mid = (step + 0.5) * options.dt;
    const double rate = source.rate_at(t_mid);
    rhs = c;
    if (rate != 0.0) {
      for (int k = 0; k < 4; ++k)
        rhs[splat.cell[k]] += options.dt * rate * splat.weight[k] / cell_mass;
    }
    if (use_banded) {
      banded.solve_in_place(rhs);
      c.swap(rhs);
    } else {
      c = lu.solve(rhs);
    }
    injected += options.dt * rate;
    outflow += options.dt * st.outflow_rate.dot(c);
    min_c = std::min(min_c, c.minCoeff());
    record(step + 1);
  }
  result.min_concentration = min_c;
  return result;
}

TransportResult simulate_transport(const FlowGrid& grid,
                                   const ConductivityField& k,
                                   const TransportPhysics& physics,
                                   const SourceSpec& source,
                                   const TransportOptions& options) {
  const HeadField h = solve_steady_flow(grid, k);
  return simulate_transport(grid, darcy_velocity(grid, k, h, physics.porosity),
                            physics, source, options);
}

double interpolate(const FlowGrid& grid, const Eigen::VectorXd& field, double x,
                   double y) {
  const Bilinear b = bilinear(grid, x, y);
  double value = 0.0;
  for (int k = 0; k < 4; ++k) value += b.weight[k] * field[b.cell[k]];
  return value;
}

Observations observe(const FlowGrid& grid, const HeadField& head,
                     const std::vector<ConcentrationField>& snapshots,
                     const std::vector<Well>& wells,
                     const std::vector<double>& times) {
  for (const Well& w : wells) {
    if (!grid.contains(w.x, w.y)) {
      std::ostringstream msg;
      msg << "well '" << w.name << "' at (" << w.x << ", " << w.y
          << ") lies outside the domain";
      throw ConfigError(msg.str());
    }
  }
  std::vector<const ConcentrationField*> at_time;
  for (double t : times) {
    auto it = std::find_if(snapshots.begin(), snapshots.end(),
                           [&](const ConcentrationField& s) {
                             return std::abs(s.time - t) < 1e-9;
                           });
    if (it == snapshots.end()) {
      std::ostringstream msg;
      msg << "no concentration snapshot at t = " << t;
      throw ConfigError(msg.str());
    }
    at_time.push_back(&*it);
  }

  const std::size_t nw = wells.size(), nt = times.size();
  Observations obs;
  obs.values.resize(nw + nw * nt);
  obs.info.reserve(nw + nw * nt);
  for (std::size_t w = 0; w < nw; ++w) {
    obs.values[w] = interpolate(grid, head.head, wells[w].x, wells[w].y);
    obs.info.push_back({Quantity::head, static_cast<int>(w), 0.0});
  }
  for (std::size_t w = 0; w < nw; ++w) {
    for (std::size_t t = 0; t < nt; ++t) {
      obs.values[nw + w * nt + t] =
          interpolate(grid, at_time[t]->conc, wells[w].x, wells[w].y);
      obs.info.push_back(
          {Quantity::concentration, static_cast<int>(w), times[t]});
    }
  }
  return obs;
}

void write_field_csv(const std::string& path, const FlowGrid& grid,
                     const Eigen::VectorXd& values) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << "x,y,value\n" << std::setprecision(10);
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.ny; ++j)
      out << grid.x_center(i) << ',' << grid.y_center(j) << ','
          << values[grid.index(i, j)] << '\n';
}

}  // namespace iis
