#include "oplab/sweep.hpp"

#include <chrono>
#include <fstream>

#include "oplab/errors.hpp"
#include "oplab/rng.hpp"

namespace oplab {

SweepResult latent_sweep(const OperatorDataset& train_ds, const OperatorDataset& test_ds,
                         const SweepConfig& cfg, const SweepObserver& observer) {
    if (cfg.kinds.empty()) throw ConfigError("latent_sweep: no decoder kinds requested");
    if (cfg.latent_dims.empty()) throw ConfigError("latent_sweep: no latent dimensions requested");
    if (cfg.seeds.empty()) throw ConfigError("latent_sweep: no seeds requested");
    train_ds.validate();
    test_ds.validate();

    SweepResult result;
    for (DecoderKind kind : cfg.kinds) {
        for (long n : cfg.latent_dims) {
            for (std::uint64_t seed : cfg.seeds) {
                SweepRow row;
                row.benchmark = train_ds.benchmark;
                row.kind = kind;
                row.latent_dim = n;
                row.seed = seed;
                const auto t0 = std::chrono::steady_clock::now();
                try {
                    const ModelSpec spec =
                        default_spec(kind, n, train_ds.m(), train_ds.d_u, train_ds.d_s,
                                     train_ds.d_y, cfg.width, cfg.depth);
                    OperatorModel model = build_model(spec, mix_seed(seed, 11));
                    fit_normalization(model, train_ds);
                    TrainConfig tc = cfg.train;
                    tc.seed = mix_seed(seed, 13);
                    train(model, train_ds, tc);
                    const ErrorStats stats = relative_l2(model, test_ds);
                    row.mean_rel_l2 = stats.mean;
                    row.std_rel_l2 = stats.stddev;
                    row.params = model.param_count();
                    row.train_seconds =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
                    result.rows.push_back(row);
                    if (observer) observer(result.rows.back(), model);
                } catch (const TrainingError& e) {
                    row.failed = true;
                    row.error = e.what();
                    row.train_seconds =
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count();
                    result.rows.push_back(row);
                }
            }
        }
    }
    return result;
}

namespace {

std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: byte-stable newlines
    if (!out) throw Error("cannot open for writing: " + path);
    return out;
}

}  // namespace

void write_sweep_csv(const SweepResult& result, const std::string& path, bool include_timing) {
    std::ofstream out = open_csv(path);
    out << "# mean_rel_l2/std_rel_l2: per-sample relative L2 error sqrt(||s_hat-s||^2/||s||^2), "
           "mean and stddev over test samples\n";
    out << "# train_seconds is 0 unless timing was requested at run time\n";
    out << "benchmark,kind,n,seed,mean_rel_l2,std_rel_l2,params,train_seconds,status\n";
    for (const SweepRow& row : result.rows) {
        out << benchmark_name(row.benchmark) << ',' << decoder_kind_name(row.kind) << ','
            << row.latent_dim << ',' << row.seed << ',' << format_double(row.mean_rel_l2) << ','
            << format_double(row.std_rel_l2) << ',' << row.params << ','
            << format_double(include_timing ? row.train_seconds : 0.0) << ','
            << (row.failed ? ("failed:" + row.error) : "ok") << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

void write_spectrum_csv(const PcaSpectrum& spec, const std::string& path) {
    std::ofstream out = open_csv(path);
    out << "# lambda_k: descending covariance eigenvalues under uniform quadrature weight "
        << format_double(spec.quadrature_weight) << " over " << spec.n_samples << " samples\n";
    out << "# tail_energy_k = sum of lambda_j for j > k\n";
    out << "k,lambda_k,tail_energy_k\n";
    double tail = 0.0;
    for (double v : spec.eigenvalues) tail += v;
    for (std::size_t k = 0; k < spec.eigenvalues.size(); ++k) {
        tail -= spec.eigenvalues[k];
        out << (k + 1) << ',' << format_double(spec.eigenvalues[k]) << ','
            << format_double(tail < 0.0 ? 0.0 : tail) << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

void write_projection_csv(const PcaSpectrum& spec, const std::string& path) {
    std::ofstream out = open_csv(path);
    out << "# coordinates of each centered sample on the leading eigenfunctions\n";
    out << "sample";
    for (long k = 0; k < spec.projections.cols; ++k) out << ",c" << (k + 1);
    out << '\n';
    for (long i = 0; i < spec.projections.rows; ++i) {
        out << i;
        for (long k = 0; k < spec.projections.cols; ++k)
            out << ',' << format_double(spec.projections.at(i, k));
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

void write_error_csv(const ErrorStats& stats, const std::string& path) {
    std::ofstream out = open_csv(path);
    out << "# relative L2 error per sample: sqrt(||s_hat-s||^2 / ||s||^2)\n";
    out << "# mean=" << format_double(stats.mean) << " std=" << format_double(stats.stddev)
        << " worst_case_index=" << stats.worst_case_index
        << " excluded_zero_norm=" << stats.excluded_zero_norm << '\n';
    out << "# channel_mean=";
    for (std::size_t c = 0; c < stats.channel_mean.size(); ++c) {
        if (c) out << ';';
        out << format_double(stats.channel_mean[c]);
    }
    out << '\n';
    out << "sample,rel_l2";
    for (long c = 0; c < stats.per_channel.cols; ++c) out << ",rel_l2_ch" << c;
    out << '\n';
    for (std::size_t k = 0; k < stats.per_sample_errors.size(); ++k) {
        out << stats.sample_indices[k] << ',' << format_double(stats.per_sample_errors[k]);
        for (long c = 0; c < stats.per_channel.cols; ++c)
            out << ',' << format_double(stats.per_channel.at(static_cast<long>(k), c));
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

void write_loss_csv(const std::vector<double>& history, const std::string& path) {
    std::ofstream out = open_csv(path);
    out << "iteration,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i)
        out << i << ',' << format_double(history[i]) << '\n';
    if (!out) throw Error("write failed: " + path);
}

}  // namespace oplab
