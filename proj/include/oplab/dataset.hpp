#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oplab/matrix.hpp"

namespace oplab {

enum class Benchmark { antiderivative, advection, shallow_water };

std::string benchmark_name(Benchmark b);
Benchmark benchmark_from_name(const std::string& name);

// One (input-function measurements, query points, output-function values)
// triple. latent_tag carries the generating parameters for diagnostics.
struct OperatorSample {
    RealMatrix u_values;            // [m x d_u]
    RealMatrix y_points;            // [P x d_y]
    RealMatrix s_values;            // [P x d_s]
    std::vector<double> latent_tag;
};

struct OperatorDataset {
    Benchmark benchmark = Benchmark::antiderivative;
    RealMatrix sensor_grid;  // [m x d_x], shared across samples
    long d_u = 1;
    long d_s = 1;
    long d_y = 1;
    std::uint64_t seed = 0;
    // Ordered echo of the generation parameters; persisted in the file header.
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<OperatorSample> samples;

    long n_samples() const { return static_cast<long>(samples.size()); }
    long m() const { return sensor_grid.rows; }
    long d_x() const { return sensor_grid.cols; }
    long p() const { return samples.empty() ? 0 : samples.front().y_points.rows; }
    long tag_dim() const { return samples.empty() ? 0 : static_cast<long>(samples.front().latent_tag.size()); }

    // True when every sample shares one query grid; the linear decoder trains
    // with a single trunk pass per iteration in that case.
    bool shared_query_grid() const;
    // Uniform L2 quadrature weight for one query point (grid cell measure).
    double query_cell_weight() const;

    void set_config(const std::string& key, const std::string& value);
    const std::string* find_config(const std::string& key) const;
    void validate() const;
};

std::vector<double> linspace(double a, double b, long n);

// u(x) = 2*pi*t*cos(2*pi*t*x) and its antiderivative s(x) = sin(2*pi*t*x).
double antiderivative_input(double t, double x);
double antiderivative_output(double t, double x);

struct AntiderivativeConfig {
    double t0 = 0.0;
    double t1 = 10.0;
    long m = 500;
    long p = 500;
    long n = 0;
    std::uint64_t seed = 0;
};

OperatorDataset gen_antiderivative(const AntiderivativeConfig& cfg);

// Gaussian initial profile of the transport benchmark and its translated
// solution s(x, t) = s0(x - c t).
double advection_initial(double x, double mu, double width);
double advection_solution(double x, double t, double mu, double width, double speed);

struct AdvectionConfig {
    long nx = 256;
    long nt = 100;
    long n = 0;
    std::uint64_t seed = 0;
    double speed = 1.0;
    double mu_lo = 0.05;
    double mu_hi = 1.0;
    double width = 0.0002;
};

OperatorDataset gen_advection(const AdvectionConfig& cfg);

std::string format_double(double v);

}  // namespace oplab
