#include "oplab/shallow_water.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "oplab/errors.hpp"
#include "oplab/rng.hpp"

namespace oplab {

ShallowWaterState sw_initial_state(double h, double w, double xi, double zeta, long nx, long ny,
                                   double g) {
    if (!(w > 0.0)) throw ConfigError("sw_initial_state: droplet width must be positive");
    if (nx < 3 || ny < 3) throw ConfigError("sw_initial_state: grid must be at least 3x3");
    if (!(g > 0.0)) throw ConfigError("sw_initial_state: gravity must be positive");
    ShallowWaterState st;
    st.nx = nx;
    st.ny = ny;
    st.dx = 1.0 / static_cast<double>(nx);
    st.dy = 1.0 / static_cast<double>(ny);
    st.g = g;
    st.t = 0.0;
    st.rho.assign(static_cast<std::size_t>(nx) * ny, 0.0);
    st.v1.assign(st.rho.size(), 0.0);
    st.v2.assign(st.rho.size(), 0.0);
    for (long ix = 0; ix < nx; ++ix) {
        const double px = st.cell_x(ix) - xi;
        for (long iy = 0; iy < ny; ++iy) {
            const double py = st.cell_y(iy) - zeta;
            st.rho[st.idx(ix, iy)] = 1.0 + h * std::exp(-(px * px + py * py) / w);
        }
    }
    return st;
}

double sw_max_wave_speed(const ShallowWaterState& st) {
    double speed = 0.0;
    for (std::size_t i = 0; i < st.rho.size(); ++i) {
        const double c = std::sqrt(st.g * st.rho[i]) +
                         std::sqrt(st.v1[i] * st.v1[i] + st.v2[i] * st.v2[i]);
        speed = std::max(speed, c);
    }
    return speed;
}

double sw_total_mass(const ShallowWaterState& st) {
    double sum = 0.0;
    for (double r : st.rho) sum += r;
    return sum * st.dx * st.dy;
}

namespace {

// Conserved variables and fluxes of one cell.
struct Cell {
    double u0, u1, u2;  // rho, rho*v1, rho*v2
};

inline Cell conserved(const ShallowWaterState& st, long ix, long iy) {
    const std::size_t i = st.idx(ix, iy);
    const double r = st.rho[i];
    return {r, r * st.v1[i], r * st.v2[i]};
}

// Ghost lookup: mirror rho, negate wall-normal momentum.
inline Cell conserved_ghost(const ShallowWaterState& st, long ix, long iy) {
    bool flip_x = false, flip_y = false;
    if (ix < 0) { ix = 0; flip_x = true; }
    if (ix >= st.nx) { ix = st.nx - 1; flip_x = true; }
    if (iy < 0) { iy = 0; flip_y = true; }
    if (iy >= st.ny) { iy = st.ny - 1; flip_y = true; }
    Cell c = conserved(st, ix, iy);
    if (flip_x) c.u1 = -c.u1;
    if (flip_y) c.u2 = -c.u2;
    return c;
}

inline Cell flux_x(const Cell& c, double g) {
    const double v1 = c.u1 / c.u0;
    return {c.u1, c.u1 * v1 + 0.5 * g * c.u0 * c.u0, c.u2 * v1};
}

inline Cell flux_y(const Cell& c, double g) {
    const double v2 = c.u2 / c.u0;
    return {c.u2, c.u1 * v2, c.u2 * v2 + 0.5 * g * c.u0 * c.u0};
}

}  // namespace

ShallowWaterState sw_step_lax_friedrichs(const ShallowWaterState& st, double dt,
                                         double cfl_limit) {
    if (!(dt > 0.0)) throw CflError("sw_step: dt must be positive");
    const double speed = sw_max_wave_speed(st);
    const double limit = cfl_limit * std::min(st.dx, st.dy) / speed;
    if (dt > limit * (1.0 + 1e-12))
        throw CflError("sw_step: dt " + format_double(dt) + " exceeds CFL limit " +
                       format_double(limit));

    ShallowWaterState out = st;
    const double ax = dt / (2.0 * st.dx);
    const double ay = dt / (2.0 * st.dy);
    for (long ix = 0; ix < st.nx; ++ix) {
        for (long iy = 0; iy < st.ny; ++iy) {
            const Cell w = conserved_ghost(st, ix - 1, iy);
            const Cell e = conserved_ghost(st, ix + 1, iy);
            const Cell s = conserved_ghost(st, ix, iy - 1);
            const Cell n = conserved_ghost(st, ix, iy + 1);
            const Cell fw = flux_x(w, st.g), fe = flux_x(e, st.g);
            const Cell gs = flux_y(s, st.g), gn = flux_y(n, st.g);
            const double r = 0.25 * (w.u0 + e.u0 + s.u0 + n.u0) - ax * (fe.u0 - fw.u0) -
                             ay * (gn.u0 - gs.u0);
            const double m1 = 0.25 * (w.u1 + e.u1 + s.u1 + n.u1) - ax * (fe.u1 - fw.u1) -
                              ay * (gn.u1 - gs.u1);
            const double m2 = 0.25 * (w.u2 + e.u2 + s.u2 + n.u2) - ax * (fe.u2 - fw.u2) -
                              ay * (gn.u2 - gs.u2);
            if (!(r > 0.0) || !std::isfinite(r) || !std::isfinite(m1) || !std::isfinite(m2))
                throw InstabilityError("sw_step: non-positive or non-finite fluid height at cell (" +
                                       std::to_string(ix) + "," + std::to_string(iy) + ")");
            const std::size_t i = st.idx(ix, iy);
            out.rho[i] = r;
            out.v1[i] = m1 / r;
            out.v2[i] = m2 / r;
        }
    }
    out.t = st.t + dt;
    return out;
}

void sw_advance_to(ShallowWaterState& st, double t_target, double cfl) {
    if (t_target < st.t) throw ConfigError("sw_advance_to: target time is in the past");
    const double base_dt = cfl * std::min(st.dx, st.dy) / sw_max_wave_speed(st);
    while (st.t < t_target - 1e-13) {
        double dt = std::min(base_dt, t_target - st.t);
        // Re-check against the current state; halve until admissible.
        double limit = cfl * std::min(st.dx, st.dy) / sw_max_wave_speed(st);
        while (dt > limit * (1.0 + 1e-12)) {
            dt *= 0.5;
            if (dt < 1e-12) throw InstabilityError("sw_advance_to: time step collapsed");
        }
        const bool last = st.t + dt >= t_target - 1e-13;
        st = sw_step_lax_friedrichs(st, dt);
        if (last) st.t = t_target;
    }
    st.t = t_target;
}

OperatorDataset gen_shallow_water(const ShallowWaterConfig& cfg) {
    if (cfg.n < 1) throw ConfigError("gen_shallow_water: need n >= 1 samples");
    if (cfg.snapshot_times.empty()) throw ConfigError("gen_shallow_water: no snapshot times");
    if (cfg.input_time <= 0.0) throw ConfigError("gen_shallow_water: input_time must be positive");
    for (std::size_t k = 0; k + 1 < cfg.snapshot_times.size(); ++k)
        if (cfg.snapshot_times[k + 1] <= cfg.snapshot_times[k])
            throw ConfigError("gen_shallow_water: snapshot times must increase");
    if (cfg.snapshot_times.front() <= cfg.input_time)
        throw ConfigError("gen_shallow_water: snapshots must come after the input time");

    const long m = cfg.nx * cfg.ny;
    const long n_snap = static_cast<long>(cfg.snapshot_times.size());
    const long lattice = m * n_snap;
    const long p = cfg.full_grid ? lattice : cfg.p;
    if (p < 1 || p > lattice)
        throw ConfigError("gen_shallow_water: p must be between 1 and the lattice size");

    OperatorDataset ds;
    ds.benchmark = Benchmark::shallow_water;
    ds.d_u = 3;
    ds.d_s = 3;
    ds.d_y = 3;
    ds.seed = cfg.seed;

    ShallowWaterState proto = sw_initial_state(2.0, 0.005, 0.5, 0.5, cfg.nx, cfg.ny, cfg.g);
    ds.sensor_grid = RealMatrix(m, 2);
    for (long ix = 0; ix < cfg.nx; ++ix)
        for (long iy = 0; iy < cfg.ny; ++iy) {
            const long j = static_cast<long>(proto.idx(ix, iy));
            ds.sensor_grid.at(j, 0) = proto.cell_x(ix);
            ds.sensor_grid.at(j, 1) = proto.cell_y(iy);
        }

    ds.samples.resize(cfg.n);
    long failures = 0;
    for (long i = 0; i < cfg.n; ++i) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt > 10)
                throw InstabilityError("gen_shallow_water: more than 10 consecutive unstable draws");
            Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i) + (attempt << 32)));
            const double h = uniform_in(rng, cfg.h_lo, cfg.h_hi);
            const double w = uniform_in(rng, cfg.w_lo, cfg.w_hi);
            const double xi = uniform_in(rng, cfg.xi_lo, cfg.xi_hi);
            const double zeta = uniform_in(rng, cfg.zeta_lo, cfg.zeta_hi);
            try {
                ShallowWaterState st = sw_initial_state(h, w, xi, zeta, cfg.nx, cfg.ny, cfg.g);
                sw_advance_to(st, cfg.input_time, cfg.cfl);

                OperatorSample& s = ds.samples[i];
                s.u_values = RealMatrix(m, 3);
                for (long j = 0; j < m; ++j) {
                    s.u_values.at(j, 0) = st.rho[j];
                    s.u_values.at(j, 1) = st.v1[j];
                    s.u_values.at(j, 2) = st.v2[j];
                }

                std::vector<std::vector<double>> snap_rho(n_snap), snap_v1(n_snap), snap_v2(n_snap);
                for (long k = 0; k < n_snap; ++k) {
                    sw_advance_to(st, cfg.snapshot_times[k], cfg.cfl);
                    snap_rho[k] = st.rho;
                    snap_v1[k] = st.v1;
                    snap_v2[k] = st.v2;
                }

                // Lattice order: (snapshot, ix, iy).
                std::vector<long> picks(p);
                if (cfg.full_grid) {
                    for (long q = 0; q < p; ++q) picks[q] = q;
                } else {
                    // Partial Fisher-Yates over the lattice, without replacement.
                    std::vector<long> pool(lattice);
                    for (long q = 0; q < lattice; ++q) pool[q] = q;
                    for (long q = 0; q < p; ++q) {
                        const long rest = lattice - q;
                        const long j = q + std::min<long>(rest - 1, static_cast<long>(u01(rng) * rest));
                        std::swap(pool[q], pool[j]);
                        picks[q] = pool[q];
                    }
                }

                s.y_points = RealMatrix(p, 3);
                s.s_values = RealMatrix(p, 3);
                for (long q = 0; q < p; ++q) {
                    const long k = picks[q] / m;
                    const long cell = picks[q] % m;
                    const long ix = cell / cfg.ny;
                    const long iy = cell % cfg.ny;
                    s.y_points.at(q, 0) = proto.cell_x(ix);
                    s.y_points.at(q, 1) = proto.cell_y(iy);
                    s.y_points.at(q, 2) = cfg.snapshot_times[k];
                    s.s_values.at(q, 0) = snap_rho[k][cell];
                    s.s_values.at(q, 1) = snap_v1[k][cell];
                    s.s_values.at(q, 2) = snap_v2[k][cell];
                }
                s.latent_tag = {h, w, xi, zeta};
                break;
            } catch (const CflError& e) {
                ++failures;
                std::fprintf(stderr, "gen_shallow_water: sample %ld attempt %llu unstable: %s\n", i,
                             static_cast<unsigned long long>(attempt), e.what());
            } catch (const InstabilityError& e) {
                ++failures;
                std::fprintf(stderr, "gen_shallow_water: sample %ld attempt %llu unstable: %s\n", i,
                             static_cast<unsigned long long>(attempt), e.what());
            }
        }
    }
    (void)failures;

    ds.set_config("nx", std::to_string(cfg.nx));
    ds.set_config("ny", std::to_string(cfg.ny));
    ds.set_config("n", std::to_string(cfg.n));
    ds.set_config("g", format_double(cfg.g));
    ds.set_config("input_time", format_double(cfg.input_time));
    {
        std::string ts;
        for (std::size_t k = 0; k < cfg.snapshot_times.size(); ++k) {
            if (k) ts += ",";
            ts += format_double(cfg.snapshot_times[k]);
        }
        ds.set_config("snapshot_times", ts);
    }
    ds.set_config("p", std::to_string(p));
    ds.set_config("full_grid", cfg.full_grid ? "1" : "0");
    ds.set_config("cfl", format_double(cfg.cfl));
    const double dxy = (1.0 / cfg.nx) * (1.0 / cfg.ny);
    ds.set_config("cell_weight", format_double(dxy / static_cast<double>(n_snap)));
    return ds;
}

}  // namespace oplab
