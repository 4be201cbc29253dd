#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oplab/dataset.hpp"
#include "oplab/matrix.hpp"
#include "oplab/mlp.hpp"

namespace oplab {

enum class DecoderKind { linear, nomad };

std::string decoder_kind_name(DecoderKind k);
DecoderKind decoder_kind_from_name(const std::string& name);

struct ModelSpec {
    long latent_dim = 1;
    DecoderKind decoder_kind = DecoderKind::linear;
    std::vector<long> branch_sizes;   // [m*d_u, ..., latent_dim]
    std::vector<long> decoder_sizes;  // linear: [d_y, ..., latent_dim*d_s]; nomad: [latent_dim+d_y, ..., d_s]
    long d_u = 1;
    long d_s = 1;
    long d_y = 1;

    void validate() const;
};

// Appendix-style default: `depth` dense layers of `width` units for both nets.
ModelSpec default_spec(DecoderKind kind, long latent_dim, long m, long d_u, long d_s, long d_y,
                       long width = 100, long depth = 5);

struct Normalization {
    std::vector<double> u_mean, u_std;  // per input channel
    std::vector<double> s_mean, s_std;  // per output channel
};

struct LatentCode {
    std::vector<double> beta;
};

struct OperatorModel {
    ModelSpec spec;
    MlpParams branch;
    MlpParams decoder_net;
    Normalization norm;

    std::size_t param_count() const { return branch.param_count() + decoder_net.param_count(); }
};

// Fresh model with identity normalization; weights seeded deterministically.
OperatorModel build_model(const ModelSpec& spec, std::uint64_t seed);

// Per-channel mean/std of u and s over the training set; stds clamped at 1e-8.
void fit_normalization(OperatorModel& model, const OperatorDataset& ds);

// Standardized, flattened sensor readings (row-major over [m x d_u]).
std::vector<double> encode(const RealMatrix& u_values, const OperatorModel& model);

LatentCode approximate(const std::vector<double>& encoded, const OperatorModel& model);

// Both decoders produce values in the standardized output space.
RealMatrix decode_linear(const LatentCode& beta, const RealMatrix& y, const OperatorModel& model);
RealMatrix decode_nomad(const LatentCode& beta, const RealMatrix& y, const OperatorModel& model);

// De-standardized composition decode(approximate(encode(u)), y).
RealMatrix predict(const RealMatrix& u_values, const RealMatrix& y, const OperatorModel& model);

// Empirical risk of a batch: mean over samples of the per-sample mean squared
// pointwise residual, computed in the standardized output space.
double training_loss(const OperatorModel& model, const OperatorDataset& ds,
                     std::span<const long> batch);

struct ModelGrads {
    MlpGrads branch;
    MlpGrads decoder;
};

ModelGrads loss_gradients(const OperatorModel& model, const OperatorDataset& ds,
                          std::span<const long> batch, double* loss_out = nullptr);

struct TrainConfig {
    long iterations = 0;
    long batch_size = 100;
    LrSchedule lr;
    std::uint64_t seed = 0;
};

struct TrainResult {
    std::vector<double> loss_history;  // training loss at every iteration
};

// Seeded with-replacement minibatch Adam. Throws TrainingError (with the
// iteration index) if the loss or a gradient stops being finite.
TrainResult train(OperatorModel& model, const OperatorDataset& ds, const TrainConfig& cfg);

}  // namespace oplab
