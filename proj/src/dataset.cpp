#include "oplab/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "oplab/errors.hpp"
#include "oplab/rng.hpp"

namespace oplab {

std::string benchmark_name(Benchmark b) {
    switch (b) {
        case Benchmark::antiderivative: return "antiderivative";
        case Benchmark::advection: return "advection";
        case Benchmark::shallow_water: return "shallow-water";
    }
    throw ConfigError("unknown benchmark id");
}

Benchmark benchmark_from_name(const std::string& name) {
    if (name == "antiderivative") return Benchmark::antiderivative;
    if (name == "advection") return Benchmark::advection;
    if (name == "shallow-water" || name == "shallow_water") return Benchmark::shallow_water;
    throw ConfigError("unknown benchmark: " + name);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool OperatorDataset::shared_query_grid() const {
    if (samples.size() < 2) return true;
    const RealMatrix& first = samples.front().y_points;
    for (const auto& s : samples) {
        if (!same_shape(s.y_points, first)) return false;
        if (s.y_points.data != first.data) return false;
    }
    return true;
}

double OperatorDataset::query_cell_weight() const {
    if (const std::string* v = find_config("cell_weight")) return std::stod(*v);
    throw ConfigError("dataset has no cell_weight entry");
}

void OperatorDataset::set_config(const std::string& key, const std::string& value) {
    for (auto& kv : config) {
        if (kv.first == key) {
            kv.second = value;
            return;
        }
    }
    config.emplace_back(key, value);
}

const std::string* OperatorDataset::find_config(const std::string& key) const {
    for (const auto& kv : config)
        if (kv.first == key) return &kv.second;
    return nullptr;
}

void OperatorDataset::validate() const {
    if (samples.empty()) throw ConfigError("dataset has no samples");
    if (!sensor_grid.all_finite()) throw ConfigError("sensor grid has non-finite entries");
    const long mm = m(), pp = p(), td = tag_dim();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const OperatorSample& s = samples[i];
        const std::string where = " (sample " + std::to_string(i) + ")";
        if (s.u_values.rows != mm || s.u_values.cols != d_u)
            throw ShapeError("u_values shape inconsistent" + where);
        if (s.y_points.rows != pp || s.y_points.cols != d_y)
            throw ShapeError("y_points shape inconsistent" + where);
        if (s.s_values.rows != pp || s.s_values.cols != d_s)
            throw ShapeError("s_values shape inconsistent" + where);
        if (static_cast<long>(s.latent_tag.size()) != td)
            throw ShapeError("latent_tag length inconsistent" + where);
        if (!s.u_values.all_finite() || !s.y_points.all_finite() || !s.s_values.all_finite() ||
            !finite_array(s.latent_tag.data(), s.latent_tag.size()))
            throw ConfigError("non-finite sample data" + where);
    }
}

std::vector<double> linspace(double a, double b, long n) {
    if (n < 2) throw ConfigError("linspace needs at least 2 points");
    std::vector<double> x(n);
    const double step = (b - a) / static_cast<double>(n - 1);
    for (long i = 0; i < n; ++i) x[i] = a + step * static_cast<double>(i);
    x.back() = b;
    return x;
}

double antiderivative_input(double t, double x) {
    const double w = 2.0 * std::numbers::pi * t;
    return w * std::cos(w * x);
}

double antiderivative_output(double t, double x) {
    return std::sin(2.0 * std::numbers::pi * t * x);
}

OperatorDataset gen_antiderivative(const AntiderivativeConfig& cfg) {
    if (cfg.n < 1) throw ConfigError("gen_antiderivative: need n >= 1 samples");
    if (cfg.m < 2 || cfg.p < 2) throw ConfigError("gen_antiderivative: need m, p >= 2");
    if (!(cfg.t1 > cfg.t0)) throw ConfigError("gen_antiderivative: need t1 > t0");

    OperatorDataset ds;
    ds.benchmark = Benchmark::antiderivative;
    ds.d_u = ds.d_s = ds.d_y = 1;
    ds.seed = cfg.seed;

    const std::vector<double> xg = linspace(0.0, 1.0, cfg.m);
    const std::vector<double> yg = linspace(0.0, 1.0, cfg.p);
    ds.sensor_grid = RealMatrix(cfg.m, 1);
    for (long j = 0; j < cfg.m; ++j) ds.sensor_grid.at(j, 0) = xg[j];

    RealMatrix y_points(cfg.p, 1);
    for (long l = 0; l < cfg.p; ++l) y_points.at(l, 0) = yg[l];

    ds.samples.resize(cfg.n);
    for (long i = 0; i < cfg.n; ++i) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        const double t = uniform_in(rng, cfg.t0, cfg.t1);
        OperatorSample& s = ds.samples[i];
        s.u_values = RealMatrix(cfg.m, 1);
        for (long j = 0; j < cfg.m; ++j) s.u_values.at(j, 0) = antiderivative_input(t, xg[j]);
        s.y_points = y_points;
        s.s_values = RealMatrix(cfg.p, 1);
        for (long l = 0; l < cfg.p; ++l) s.s_values.at(l, 0) = antiderivative_output(t, yg[l]);
        s.latent_tag = {t};
    }

    ds.set_config("t0", format_double(cfg.t0));
    ds.set_config("t1", format_double(cfg.t1));
    ds.set_config("m", std::to_string(cfg.m));
    ds.set_config("p", std::to_string(cfg.p));
    ds.set_config("n", std::to_string(cfg.n));
    ds.set_config("cell_weight", format_double(1.0 / static_cast<double>(cfg.p - 1)));
    return ds;
}

double advection_initial(double x, double mu, double width) {
    const double d = x - mu;
    return 1.0 / std::sqrt(width * std::numbers::pi) * std::exp(-d * d / width);
}

double advection_solution(double x, double t, double mu, double width, double speed) {
    return advection_initial(x - speed * t, mu, width);
}

OperatorDataset gen_advection(const AdvectionConfig& cfg) {
    if (cfg.n < 1) throw ConfigError("gen_advection: need n >= 1 samples");
    if (cfg.nx < 2 || cfg.nt < 2) throw ConfigError("gen_advection: need nx, nt >= 2");
    if (!(cfg.width > 0.0)) throw ConfigError("gen_advection: width must be positive");
    if (!(cfg.mu_hi > cfg.mu_lo)) throw ConfigError("gen_advection: need mu_hi > mu_lo");

    OperatorDataset ds;
    ds.benchmark = Benchmark::advection;
    ds.d_u = ds.d_s = 1;
    ds.d_y = 2;
    ds.seed = cfg.seed;

    const std::vector<double> xg = linspace(0.0, 2.0, cfg.nx);
    const std::vector<double> tg = linspace(0.0, 1.0, cfg.nt);
    ds.sensor_grid = RealMatrix(cfg.nx, 1);
    for (long j = 0; j < cfg.nx; ++j) ds.sensor_grid.at(j, 0) = xg[j];

    const long p = cfg.nx * cfg.nt;
    RealMatrix y_points(p, 2);
    for (long ti = 0; ti < cfg.nt; ++ti) {
        for (long xi = 0; xi < cfg.nx; ++xi) {
            const long l = ti * cfg.nx + xi;
            y_points.at(l, 0) = xg[xi];
            y_points.at(l, 1) = tg[ti];
        }
    }

    ds.samples.resize(cfg.n);
    for (long i = 0; i < cfg.n; ++i) {
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
        const double mu = uniform_in(rng, cfg.mu_lo, cfg.mu_hi);
        OperatorSample& s = ds.samples[i];
        s.u_values = RealMatrix(cfg.nx, 1);
        for (long j = 0; j < cfg.nx; ++j) s.u_values.at(j, 0) = advection_initial(xg[j], mu, cfg.width);
        s.y_points = y_points;
        s.s_values = RealMatrix(p, 1);
        for (long ti = 0; ti < cfg.nt; ++ti)
            for (long xi = 0; xi < cfg.nx; ++xi)
                s.s_values.at(ti * cfg.nx + xi, 0) =
                    advection_solution(xg[xi], tg[ti], mu, cfg.width, cfg.speed);
        s.latent_tag = {mu};
    }

    const double dx = 2.0 / static_cast<double>(cfg.nx - 1);
    const double dt = 1.0 / static_cast<double>(cfg.nt - 1);
    ds.set_config("nx", std::to_string(cfg.nx));
    ds.set_config("nt", std::to_string(cfg.nt));
    ds.set_config("n", std::to_string(cfg.n));
    ds.set_config("speed", format_double(cfg.speed));
    ds.set_config("width", format_double(cfg.width));
    ds.set_config("mu_lo", format_double(cfg.mu_lo));
    ds.set_config("mu_hi", format_double(cfg.mu_hi));
    ds.set_config("cell_weight", format_double(dx * dt));
    return ds;
}

}  // namespace oplab
