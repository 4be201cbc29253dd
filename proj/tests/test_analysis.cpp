#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "oplab/analysis.hpp"
#include "oplab/dataset.hpp"
#include "oplab/errors.hpp"
#include "oplab/rng.hpp"
#include "oplab/shallow_water.hpp"
#include "oplab/sweep.hpp"

using namespace oplab;

namespace {

// Test-only oracle: cyclic Jacobi eigenvalues of a dense symmetric matrix.
// Independent of the library path (which goes through the Gram matrix and
// LAPACK); used to cross-check pca_spectrum on explicitly formed covariances.
std::vector<double> jacobi_eigenvalues(RealMatrix a, int sweeps = 50) {
    REQUIRE(a.rows == a.cols);
    const long n = a.rows;
    for (int s = 0; s < sweeps; ++s) {
        double off = 0.0;
        for (long p = 0; p < n; ++p)
            for (long q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
        if (off < 1e-26) break;
        for (long p = 0; p < n; ++p) {
            for (long q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (long k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - sn * akq;
                    a.at(k, q) = sn * akp + c * akq;
                }
                for (long k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - sn * aqk;
                    a.at(q, k) = sn * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (long i = 0; i < n; ++i) ev[i] = a.at(i, i);
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

double centered_mean_sq_norm(const RealMatrix& x, double w) {
    std::vector<double> mean(x.cols, 0.0);
    for (long i = 0; i < x.rows; ++i)
        for (long j = 0; j < x.cols; ++j) mean[j] += x.at(i, j);
    for (double& m : mean) m /= x.rows;
    double acc = 0.0;
    for (long i = 0; i < x.rows; ++i)
        for (long j = 0; j < x.cols; ++j) {
            const double d = x.at(i, j) - mean[j];
            acc += d * d;
        }
    return acc * w / x.rows;
}

}  // namespace

TEST_CASE("pca_spectrum: identical functions give a zero spectrum") {
    RealMatrix x(5, 9);
    for (long i = 0; i < 5; ++i)
        for (long j = 0; j < 9; ++j) x.at(i, j) = std::sin(0.3 * j);
    const PcaSpectrum spec = pca_spectrum(x, 0.1);
    for (double v : spec.eigenvalues) CHECK(v == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("pca_spectrum: two-sample +-f ensemble has lambda_1 = 1") {
    const long dim = 64;
    const double w = 1.0 / dim;
    RealMatrix x(2, dim);
    double norm = 0.0;
    for (long j = 0; j < dim; ++j) {
        const double v = std::cos(0.2 * j) + 0.3;
        norm += v * v * w;
    }
    for (long j = 0; j < dim; ++j) {
        const double v = (std::cos(0.2 * j) + 0.3) / std::sqrt(norm);
        x.at(0, j) = v;
        x.at(1, j) = -v;
    }
    const PcaSpectrum spec = pca_spectrum(x, w);
    CHECK(spec.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(spec.eigenvalues[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pca_spectrum matches a brute-force covariance eigensolve") {
    Rng rng(123);
    RealMatrix x(5, 7);
    for (double& v : x.data) v = uniform_in(rng, -2, 2);
    const double w = 0.37;
    const PcaSpectrum spec = pca_spectrum(x, w);

    // explicit covariance: C = (1/N) Xc^T Xc * w  (7x7), eigensolved by Jacobi
    std::vector<double> mean(7, 0.0);
    for (long i = 0; i < 5; ++i)
        for (long j = 0; j < 7; ++j) mean[j] += x.at(i, j) / 5.0;
    RealMatrix cov(7, 7);
    for (long a = 0; a < 7; ++a)
        for (long b = 0; b < 7; ++b) {
            double acc = 0.0;
            for (long i = 0; i < 5; ++i)
                acc += (x.at(i, a) - mean[a]) * (x.at(i, b) - mean[b]);
            cov.at(a, b) = acc / 5.0 * w;
        }
    const std::vector<double> want = jacobi_eigenvalues(cov);
    for (std::size_t k = 0; k < 5; ++k)
        CHECK(spec.eigenvalues[k] == doctest::Approx(k < want.size() ? std::max(0.0, want[k]) : 0.0)
                                         .epsilon(1e-10)
                                         .scale(1.0));
}

TEST_CASE("pca_spectrum: trace identity") {
    Rng rng(77);
    RealMatrix x(12, 30);
    for (double& v : x.data) v = uniform_in(rng, -1, 3);
    const double w = 0.05;
    const PcaSpectrum spec = pca_spectrum(x, w);
    double total = 0.0;
    for (double v : spec.eigenvalues) total += v;
    CHECK(total == doctest::Approx(centered_mean_sq_norm(x, w)).epsilon(1e-10));
}

TEST_CASE("pca_spectrum on the sin ensemble reproduces the plateau-then-decay shape") {
    // t on a uniform grid in (0, 10], x on a 500-point grid in [0, 1]
    const long n = 1000, dim = 500;
    RealMatrix x(n, dim);
    for (long i = 0; i < n; ++i) {
        const double t = 10.0 * static_cast<double>(i + 1) / static_cast<double>(n);
        for (long j = 0; j < dim; ++j) {
            const double xx = static_cast<double>(j) / static_cast<double>(dim - 1);
            x.at(i, j) = std::sin(2.0 * std::numbers::pi * t * xx);
        }
    }
    const PcaSpectrum spec = pca_spectrum(x, 1.0 / (dim - 1));
    REQUIRE(spec.eigenvalues[0] > 0.0);
    CHECK(spec.eigenvalues[19] / spec.eigenvalues[0] > 1e-2);
    CHECK(spec.eigenvalues[59] / spec.eigenvalues[0] < 1e-4);
}

TEST_CASE("pca_spectrum input validation") {
    CHECK_THROWS_AS(pca_spectrum(RealMatrix(1, 5), 1.0), StatsError);
    CHECK_THROWS_AS(pca_spectrum(RealMatrix(3, 5), 0.0), ConfigError);
}

TEST_CASE("tail_energy basics") {
    PcaSpectrum spec;
    spec.eigenvalues = {4.0, 2.0, 1.0, 0.5};
    CHECK(tail_energy(spec, 0) == doctest::Approx(7.5));
    CHECK(tail_energy(spec, 2) == doctest::Approx(1.5));
    CHECK(tail_energy(spec, 4) == 0.0);
    CHECK(tail_energy(spec, 9) == 0.0);
    for (long n = 0; n < 5; ++n) CHECK(tail_energy(spec, n) >= tail_energy(spec, n + 1));
    CHECK_THROWS_AS(tail_energy(spec, -1), ConfigError);
}

namespace {

OperatorDataset tiny_antiderivative(long n, std::uint64_t seed, long m = 24, long p = 16) {
    AntiderivativeConfig cfg;
    cfg.n = n;
    cfg.seed = seed;
    cfg.m = m;
    cfg.p = p;
    cfg.t1 = 2.0;
    return gen_antiderivative(cfg);
}

}  // namespace

TEST_CASE("relative_l2: exact, zero, and doubled predictions") {
    OperatorDataset ds = tiny_antiderivative(6, 3);
    const ModelSpec spec = default_spec(DecoderKind::nomad, 2, ds.m(), 1, 1, 1, 8, 3);
    OperatorModel model = build_model(spec, 4);
    fit_normalization(model, ds);

    SUBCASE("perfect predictions give zero error") {
        for (auto& s : ds.samples) s.s_values = predict(s.u_values, s.y_points, model);
        const ErrorStats stats = relative_l2(model, ds);
        CHECK(stats.mean == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(stats.excluded_zero_norm == 0);
    }
    SUBCASE("zero predictions on nonzero targets give error 1") {
        OperatorModel zero = model;
        for (auto& l : zero.decoder_net.layers) {
            l.weight.fill(0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
        zero.norm.s_mean = {0.0};
        zero.norm.s_std = {1.0};
        const ErrorStats stats = relative_l2(zero, ds);
        for (double e : stats.per_sample_errors) CHECK(e == doctest::Approx(1.0));
    }
    SUBCASE("predictions 2s give error 1") {
        for (auto& s : ds.samples) s.s_values = predict(s.u_values, s.y_points, model);
        OperatorModel twice = model;
        // doubling the de-standardization doubles every prediction
        twice.norm.s_mean = {2.0 * model.norm.s_mean[0]};
        twice.norm.s_std = {2.0 * model.norm.s_std[0]};
        const ErrorStats stats = relative_l2(twice, ds);
        for (double e : stats.per_sample_errors) CHECK(e == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("relative_l2: zero-norm targets are excluded and counted") {
    OperatorDataset ds = tiny_antiderivative(4, 9);
    ds.samples[2].s_values.fill(0.0);
    const ModelSpec spec = default_spec(DecoderKind::linear, 1, ds.m(), 1, 1, 1, 6, 2);
    OperatorModel model = build_model(spec, 10);
    fit_normalization(model, ds);
    const ErrorStats stats = relative_l2(model, ds);
    CHECK(stats.excluded_zero_norm == 1);
    CHECK(stats.per_sample_errors.size() == 3);
    CHECK(std::find(stats.sample_indices.begin(), stats.sample_indices.end(), 2) ==
          stats.sample_indices.end());
}

TEST_CASE("ErrorStats: mean and std recompute from the raw vector") {
    const OperatorDataset ds = tiny_antiderivative(8, 21);
    const ModelSpec spec = default_spec(DecoderKind::nomad, 1, ds.m(), 1, 1, 1, 6, 2);
    OperatorModel model = build_model(spec, 22);
    fit_normalization(model, ds);
    const ErrorStats stats = relative_l2(model, ds);
    double mean = 0.0;
    for (double e : stats.per_sample_errors) mean += e;
    mean /= stats.per_sample_errors.size();
    double var = 0.0;
    for (double e : stats.per_sample_errors) var += (e - mean) * (e - mean);
    CHECK(stats.mean == mean);
    CHECK(stats.stddev == std::sqrt(var / stats.per_sample_errors.size()));
    for (double e : stats.per_sample_errors) CHECK(e >= 0.0);
    const auto worst = std::max_element(stats.per_sample_errors.begin(),
                                        stats.per_sample_errors.end());
    CHECK(stats.worst_case_index ==
          stats.sample_indices[worst - stats.per_sample_errors.begin()]);
}

TEST_CASE("latent_sweep: single run equals a direct train+eval call") {
    const OperatorDataset train_ds = tiny_antiderivative(12, 31);
    const OperatorDataset test_ds = tiny_antiderivative(6, 32);
    SweepConfig cfg;
    cfg.kinds = {DecoderKind::nomad};
    cfg.latent_dims = {2};
    cfg.seeds = {7};
    cfg.train.iterations = 40;
    cfg.train.batch_size = 4;
    cfg.width = 8;
    cfg.depth = 3;
    const SweepResult result = latent_sweep(train_ds, test_ds, cfg);
    REQUIRE(result.rows.size() == 1);
    CHECK_FALSE(result.rows[0].failed);

    const ModelSpec spec = default_spec(DecoderKind::nomad, 2, train_ds.m(), 1, 1, 1, 8, 3);
    OperatorModel model = build_model(spec, mix_seed(7, 11));
    fit_normalization(model, train_ds);
    TrainConfig tc = cfg.train;
    tc.seed = mix_seed(7, 13);
    train(model, train_ds, tc);
    const ErrorStats stats = relative_l2(model, test_ds);
    CHECK(result.rows[0].mean_rel_l2 == stats.mean);
    CHECK(result.rows[0].std_rel_l2 == stats.stddev);
    CHECK(result.rows[0].params == model.param_count());
}

TEST_CASE("latent_sweep: rerun writes a bit-identical CSV") {
    const OperatorDataset train_ds = tiny_antiderivative(10, 41);
    const OperatorDataset test_ds = tiny_antiderivative(5, 42);
    SweepConfig cfg;
    cfg.kinds = {DecoderKind::linear, DecoderKind::nomad};
    cfg.latent_dims = {1, 2};
    cfg.seeds = {1, 2};
    cfg.train.iterations = 25;
    cfg.train.batch_size = 4;
    cfg.width = 6;
    cfg.depth = 2;
    const auto path1 = std::filesystem::temp_directory_path() / "oplab_sweep1.csv";
    const auto path2 = std::filesystem::temp_directory_path() / "oplab_sweep2.csv";
    write_sweep_csv(latent_sweep(train_ds, test_ds, cfg), path1.string(), false);
    write_sweep_csv(latent_sweep(train_ds, test_ds, cfg), path2.string(), false);
    std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), {});
    const std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
    CHECK(b1.find("nomad") != std::string::npos);
    std::filesystem::remove(path1);
    std::filesystem::remove(path2);
}

TEST_CASE("latent_sweep rejects empty grids") {
    const OperatorDataset ds = tiny_antiderivative(4, 51);
    SweepConfig cfg;
    cfg.kinds = {DecoderKind::linear};
    cfg.seeds = {1};
    CHECK_THROWS_AS(latent_sweep(ds, ds, cfg), ConfigError);
}

TEST_CASE("latent_sweep records a diverging run as failed and continues") {
    const OperatorDataset train_ds = tiny_antiderivative(8, 61);
    const OperatorDataset test_ds = tiny_antiderivative(4, 62);
    SweepConfig cfg;
    cfg.kinds = {DecoderKind::nomad};
    cfg.latent_dims = {2};
    cfg.seeds = {1, 2};
    cfg.train.iterations = 200;
    cfg.train.batch_size = 4;
    cfg.train.lr = LrSchedule{1e200, 0.99, 100};  // overflows the residuals at once
    cfg.width = 8;
    cfg.depth = 3;
    const SweepResult result = latent_sweep(train_ds, test_ds, cfg);
    REQUIRE(result.rows.size() == 2);
    for (const auto& row : result.rows) {
        CHECK(row.failed);
        CHECK(!row.error.empty());
    }
}

TEST_CASE("trained linear model cannot beat the PCA tail-energy bound") {
    AntiderivativeConfig cfg;
    cfg.n = 60;
    cfg.m = 40;
    cfg.p = 32;
    cfg.t1 = 4.0;
    cfg.seed = 71;
    const OperatorDataset train_ds = gen_antiderivative(cfg);
    cfg.seed = 72;
    const OperatorDataset test_ds = gen_antiderivative(cfg);
    const double w = test_ds.query_cell_weight();
    const PcaSpectrum spec = pca_spectrum(stack_outputs(test_ds), w);
    for (long n : {1L, 2L}) {
        const ModelSpec ms = default_spec(DecoderKind::linear, n, 40, 1, 1, 1, 12, 3);
        OperatorModel model = build_model(ms, 73);
        fit_normalization(model, train_ds);
        TrainConfig tc;
        tc.iterations = 400;
        tc.batch_size = 10;
        tc.seed = 5;
        train(model, train_ds, tc);
        CHECK(mean_squared_l2(model, test_ds, w) >= 0.9 * tail_energy(spec, n));
    }
}

TEST_CASE("relative_l2 reports one channel column per output channel") {
    ShallowWaterConfig cfg;
    cfg.n = 3;
    cfg.seed = 81;
    cfg.p = 16;
    cfg.snapshot_times = {0.11, 0.16};
    const OperatorDataset ds = gen_shallow_water(cfg);
    const ModelSpec spec = default_spec(DecoderKind::nomad, 2, ds.m(), 3, 3, 3, 8, 2);
    OperatorModel model = build_model(spec, 82);
    fit_normalization(model, ds);
    const ErrorStats stats = relative_l2(model, ds);
    CHECK(stats.per_channel.cols == 3);
    CHECK(stats.channel_mean.size() == 3);
}
