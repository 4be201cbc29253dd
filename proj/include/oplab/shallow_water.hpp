#pragma once

#include <cstdint>
#include <vector>

#include "oplab/dataset.hpp"

namespace oplab {

// Cell-centered fields on (0,1)^2; index (ix, iy) -> ix*ny + iy.
struct ShallowWaterState {
    long nx = 0;
    long ny = 0;
    double dx = 0.0;
    double dy = 0.0;
    double g = 1.0;
    double t = 0.0;
    std::vector<double> rho;  // fluid column height, > 0
    std::vector<double> v1;   // x1 velocity
    std::vector<double> v2;   // x2 velocity

    double cell_x(long ix) const { return (static_cast<double>(ix) + 0.5) * dx; }
    double cell_y(long iy) const { return (static_cast<double>(iy) + 0.5) * dy; }
    std::size_t idx(long ix, long iy) const { return static_cast<std::size_t>(ix) * ny + iy; }
};

// Droplet of height h and width w centered at (xi, zeta) on a still bed.
ShallowWaterState sw_initial_state(double h, double w, double xi, double zeta, long nx, long ny,
                                   double g);

// max over cells of sqrt(g*rho) + |v|.
double sw_max_wave_speed(const ShallowWaterState& st);

double sw_total_mass(const ShallowWaterState& st);

// One Lax-Friedrichs step on the conserved variables (rho, rho*v1, rho*v2)
// with reflective walls (ghost cells mirror rho and negate the wall-normal
// momentum). Throws CflError when dt exceeds cfl_limit * min(dx,dy) / maxspeed
// and InstabilityError if the update loses positivity.
ShallowWaterState sw_step_lax_friedrichs(const ShallowWaterState& st, double dt,
                                         double cfl_limit = 1.0);

// March to t_target: dt starts from cfl * min(dx,dy) / maxspeed, is re-checked
// against the current state every step (halved until admissible), and the last
// step is shortened to land on t_target exactly.
void sw_advance_to(ShallowWaterState& st, double t_target, double cfl);

struct ShallowWaterConfig {
    long n = 0;
    std::uint64_t seed = 0;
    long nx = 32;
    long ny = 32;
    double g = 1.0;
    double input_time = 0.002;
    std::vector<double> snapshot_times = {0.11, 0.16, 0.21, 0.26, 0.31};
    long p = 128;           // queries drawn per sample; ignored when full_grid
    bool full_grid = false; // emit every lattice point (test-time evaluation)
    double cfl = 0.5;
    double h_lo = 1.5, h_hi = 2.5;
    double w_lo = 0.002, w_hi = 0.008;
    double xi_lo = 0.4, xi_hi = 0.6;
    double zeta_lo = 0.4, zeta_hi = 0.6;
};

OperatorDataset gen_shallow_water(const ShallowWaterConfig& cfg);

}  // namespace oplab
