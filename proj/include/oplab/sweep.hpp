#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oplab/analysis.hpp"
#include "oplab/dataset.hpp"
#include "oplab/model.hpp"

namespace oplab {

struct SweepRow {
    Benchmark benchmark;
    DecoderKind kind;
    long latent_dim;
    std::uint64_t seed;
    double mean_rel_l2 = 0.0;
    double std_rel_l2 = 0.0;
    std::size_t params = 0;
    double train_seconds = 0.0;
    bool failed = false;
    std::string error;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

struct SweepConfig {
    std::vector<DecoderKind> kinds;
    std::vector<long> latent_dims;
    std::vector<std::uint64_t> seeds;
    TrainConfig train;
    long width = 100;
    long depth = 5;
};

// Called after each run with the finished row and the trained model.
using SweepObserver = std::function<void(const SweepRow&, const OperatorModel&)>;

// Train and evaluate every (kind, n, seed) triple; a diverging run is recorded
// as a failed row and the sweep continues.
SweepResult latent_sweep(const OperatorDataset& train_ds, const OperatorDataset& test_ds,
                         const SweepConfig& cfg, const SweepObserver& observer = nullptr);

// train_seconds is written as 0 unless include_timing is set, keeping default
// outputs byte-reproducible across reruns.
void write_sweep_csv(const SweepResult& result, const std::string& path, bool include_timing);

void write_spectrum_csv(const PcaSpectrum& spec, const std::string& path);

void write_projection_csv(const PcaSpectrum& spec, const std::string& path);

void write_error_csv(const ErrorStats& stats, const std::string& path);

void write_loss_csv(const std::vector<double>& history, const std::string& path);

}  // namespace oplab
