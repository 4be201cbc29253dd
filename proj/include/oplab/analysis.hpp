#pragma once

#include <vector>

#include "oplab/dataset.hpp"
#include "oplab/matrix.hpp"
#include "oplab/model.hpp"

namespace oplab {

// Eigenvalues of the empirical covariance of an output-function ensemble
// under uniform-grid quadrature: lambda_k = (sigma_k / sqrt(N))^2 * weight
// where sigma_k are singular values of the mean-centered snapshot matrix.
struct PcaSpectrum {
    std::vector<double> eigenvalues;      // descending, clamped at 0
    double quadrature_weight = 1.0;
    std::vector<double> mean_function;
    long n_samples = 0;
    // Coordinates of each (centered) sample on the leading eigenfunctions,
    // present only when requested; [N x n_project].
    RealMatrix projections;
};

PcaSpectrum pca_spectrum(const RealMatrix& outputs, double cell_weight, long n_project = 0);

// Sum of eigenvalues past index n: the best possible mean squared L2 error of
// any n-dimensional affine representation of the ensemble.
double tail_energy(const PcaSpectrum& spec, long n);

// Rows are flattened s_values; feeds pca_spectrum.
RealMatrix stack_outputs(const OperatorDataset& ds);

struct ErrorStats {
    std::vector<double> per_sample_errors;  // relative L2 per included sample
    std::vector<long> sample_indices;       // dataset index of each entry
    double mean = 0.0;
    double stddev = 0.0;
    long worst_case_index = -1;             // dataset index of the largest error
    RealMatrix per_channel;                 // [included x d_s] channel-wise relative L2
    std::vector<double> channel_mean;       // [d_s]
    long excluded_zero_norm = 0;            // targets skipped for having zero norm
};

// Per-sample relative L2 errors sqrt(sum||s_hat - s||^2 / sum||s||^2) of model
// predictions over a dataset, in raw (de-standardized) output space.
ErrorStats relative_l2(const OperatorModel& model, const OperatorDataset& ds);

// Monte Carlo estimate of E ||F(u) - s||^2_{L2} in raw output space.
double mean_squared_l2(const OperatorModel& model, const OperatorDataset& ds, double cell_weight);

}  // namespace oplab
