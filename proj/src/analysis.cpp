#include "oplab/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "oplab/errors.hpp"

extern "C" void dsyev_(const char* jobz, const char* uplo, const int* n, double* a, const int* lda,
                       double* w, double* work, const int* lwork, int* info);

namespace oplab {

namespace {

// Ascending eigenvalues (and optionally eigenvectors in columns) of a dense
// symmetric matrix, via LAPACK.
void symmetric_eig(RealMatrix& a, std::vector<double>& evals, bool want_vectors) {
    if (a.rows != a.cols) throw ShapeError("symmetric_eig: matrix must be square");
    const int n = static_cast<int>(a.rows);
    evals.assign(n, 0.0);
    int info = 0;
    int lwork = -1;
    double wk = 0.0;
    dsyev_(want_vectors ? "V" : "N", "U", &n, a.data.data(), &n, evals.data(), &wk, &lwork, &info);
    if (info != 0) throw Error("dsyev workspace query failed");
    lwork = static_cast<int>(wk);
    std::vector<double> work(static_cast<std::size_t>(lwork));
    dsyev_(want_vectors ? "V" : "N", "U", &n, a.data.data(), &n, evals.data(), work.data(), &lwork,
           &info);
    if (info != 0) throw Error("dsyev failed to converge (info=" + std::to_string(info) + ")");
}

}  // namespace

PcaSpectrum pca_spectrum(const RealMatrix& outputs, double cell_weight, long n_project) {
    const long n = outputs.rows, dim = outputs.cols;
    if (n < 2) throw StatsError("pca_spectrum: need at least 2 samples");
    if (!(cell_weight > 0.0)) throw ConfigError("pca_spectrum: cell weight must be positive");
    if (n_project < 0 || n_project > n) throw ConfigError("pca_spectrum: bad projection count");

    PcaSpectrum spec;
    spec.quadrature_weight = cell_weight;
    spec.n_samples = n;
    spec.mean_function.assign(dim, 0.0);
    for (long i = 0; i < n; ++i) {
        const double* r = outputs.row(i);
        for (long d = 0; d < dim; ++d) spec.mean_function[d] += r[d];
    }
    for (long d = 0; d < dim; ++d) spec.mean_function[d] /= static_cast<double>(n);

    RealMatrix centered(n, dim);
    for (long i = 0; i < n; ++i) {
        const double* src = outputs.row(i);
        double* dst = centered.row(i);
        for (long d = 0; d < dim; ++d) dst[d] = src[d] - spec.mean_function[d];
    }

    // Method of snapshots: the N x N Gram matrix shares nonzero eigenvalues
    // with the covariance, without ever forming the dim x dim operator.
    RealMatrix gram(n, n);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const double* a = centered.row(i);
        for (long j = i; j < n; ++j) {
            const double* b = centered.row(j);
            double acc = 0.0;
            for (long d = 0; d < dim; ++d) acc += a[d] * b[d];
            gram.at(i, j) = acc;
            gram.at(j, i) = acc;
        }
    }

    std::vector<double> evals;
    symmetric_eig(gram, evals, n_project > 0);  // ascending; vectors in rows of gram (col-major cols)

    spec.eigenvalues.assign(n, 0.0);
    for (long k = 0; k < n; ++k) {
        const double ev = evals[n - 1 - k];
        spec.eigenvalues[k] = std::max(0.0, ev / static_cast<double>(n) * cell_weight);
    }

    if (n_project > 0) {
        // LAPACK stores eigenvector j in Fortran column j; in this row-major
        // view its i-th component sits at gram.at(j, i).
        spec.projections = RealMatrix(n, n_project);
        for (long k = 0; k < n_project; ++k) {
            const long col = n - 1 - k;  // descending order
            const double sigma = std::sqrt(std::max(0.0, evals[col]));
            for (long i = 0; i < n; ++i)
                spec.projections.at(i, k) = std::sqrt(cell_weight) * sigma * gram.at(col, i);
        }
    }
    return spec;
}

double tail_energy(const PcaSpectrum& spec, long n) {
    if (n < 0) throw ConfigError("tail_energy: n must be >= 0");
    double sum = 0.0;
    for (std::size_t k = static_cast<std::size_t>(n); k < spec.eigenvalues.size(); ++k)
        sum += spec.eigenvalues[k];
    return sum;
}

RealMatrix stack_outputs(const OperatorDataset& ds) {
    ds.validate();
    const long n = ds.n_samples();
    const long dim = ds.p() * ds.d_s;
    RealMatrix out(n, dim);
    for (long i = 0; i < n; ++i) {
        const RealMatrix& s = ds.samples[i].s_values;
        std::copy(s.data.begin(), s.data.end(), out.row(i));
    }
    return out;
}

ErrorStats relative_l2(const OperatorModel& model, const OperatorDataset& ds) {
    ds.validate();
    const long d_s = ds.d_s;
    ErrorStats stats;
    stats.per_channel = RealMatrix(0, d_s);
    std::vector<double> per_channel_rows;
    std::vector<double> channel_num(d_s), channel_den(d_s);

    for (long i = 0; i < ds.n_samples(); ++i) {
        const OperatorSample& sample = ds.samples[i];
        const RealMatrix pred = predict(sample.u_values, sample.y_points, model);
        std::fill(channel_num.begin(), channel_num.end(), 0.0);
        std::fill(channel_den.begin(), channel_den.end(), 0.0);
        for (long l = 0; l < sample.s_values.rows; ++l) {
            const double* t = sample.s_values.row(l);
            const double* q = pred.row(l);
            for (long c = 0; c < d_s; ++c) {
                const double d = q[c] - t[c];
                channel_num[c] += d * d;
                channel_den[c] += t[c] * t[c];
            }
        }
        double num = 0.0, den = 0.0;
        for (long c = 0; c < d_s; ++c) {
            num += channel_num[c];
            den += channel_den[c];
        }
        if (den == 0.0) {
            stats.excluded_zero_norm += 1;
            continue;
        }
        stats.per_sample_errors.push_back(std::sqrt(num / den));
        stats.sample_indices.push_back(i);
        for (long c = 0; c < d_s; ++c)
            per_channel_rows.push_back(channel_den[c] > 0.0
                                           ? std::sqrt(channel_num[c] / channel_den[c])
                                           : 0.0);
    }
    if (stats.per_sample_errors.empty())
        throw StatsError("relative_l2: every target had zero norm");

    const long included = static_cast<long>(stats.per_sample_errors.size());
    stats.per_channel = RealMatrix(included, d_s);
    std::copy(per_channel_rows.begin(), per_channel_rows.end(), stats.per_channel.data.begin());

    double sum = 0.0;
    for (double e : stats.per_sample_errors) sum += e;
    stats.mean = sum / static_cast<double>(included);
    double var = 0.0;
    for (double e : stats.per_sample_errors) var += (e - stats.mean) * (e - stats.mean);
    stats.stddev = std::sqrt(var / static_cast<double>(included));
    long worst = 0;
    for (long k = 1; k < included; ++k)
        if (stats.per_sample_errors[k] > stats.per_sample_errors[worst]) worst = k;
    stats.worst_case_index = stats.sample_indices[worst];
    stats.channel_mean.assign(d_s, 0.0);
    for (long k = 0; k < included; ++k)
        for (long c = 0; c < d_s; ++c) stats.channel_mean[c] += stats.per_channel.at(k, c);
    for (long c = 0; c < d_s; ++c) stats.channel_mean[c] /= static_cast<double>(included);
    return stats;
}

double mean_squared_l2(const OperatorModel& model, const OperatorDataset& ds, double cell_weight) {
    ds.validate();
    double total = 0.0;
    for (const OperatorSample& sample : ds.samples) {
        const RealMatrix pred = predict(sample.u_values, sample.y_points, model);
        double acc = 0.0;
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const double d = pred.data[k] - sample.s_values.data[k];
            acc += d * d;
        }
        total += cell_weight * acc;
    }
    return total / static_cast<double>(ds.n_samples());
}

}  // namespace oplab
