#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "oplab/matrix.hpp"

namespace oplab {

struct DenseLayer {
    RealMatrix weight;         // [out x in]
    std::vector<double> bias;  // [out]
};

// Fully connected net: tanh on hidden layers, identity on the output layer.
struct MlpParams {
    std::vector<DenseLayer> layers;

    long input_size() const { return layers.empty() ? 0 : layers.front().weight.cols; }
    long output_size() const { return layers.empty() ? 0 : layers.back().weight.rows; }
    std::vector<long> layer_sizes() const;
    std::size_t param_count() const;
    bool all_finite() const;
};

using MlpGrads = MlpParams;

// Glorot-uniform weights on +-sqrt(6/(fan_in+fan_out)), zero biases.
MlpParams init_params(const std::vector<long>& sizes, std::uint64_t seed);

MlpGrads zeros_like(const MlpParams& p);

// Activations captured during a forward pass; stage[0] is the input, stage[k]
// the output of layer k (tanh already applied on hidden stages). Buffers are
// reused across calls, so a long training loop allocates only on its first
// iteration.
struct ForwardTrace {
    std::vector<RealMatrix> stage;
    RealMatrix& input() {
        if (stage.empty()) stage.emplace_back();
        return stage.front();
    }
    const RealMatrix& output() const { return stage.back(); }
};

RealMatrix mlp_forward(const MlpParams& p, const RealMatrix& x);
void mlp_forward_trace(const MlpParams& p, const RealMatrix& x, ForwardTrace& trace);
// Variant for callers that built the input directly in trace.input().
void mlp_forward_trace_prefilled(const MlpParams& p, ForwardTrace& trace);

// Gradients of sum(upstream .* forward(x)) with respect to every parameter and
// to x itself; the input gradient is what chains the branch net through the
// decoder.
std::pair<MlpGrads, RealMatrix> mlp_backward(const MlpParams& p, const RealMatrix& x,
                                             const RealMatrix& upstream);

// Accumulating core used by both the public op and the trainer. `g` holds the
// upstream gradient on entry and is clobbered; `scratch` is working storage.
// When input_grad is non-null it is swapped with the final downstream buffer.
void mlp_backward_trace(const MlpParams& p, const ForwardTrace& trace, MlpGrads& grads,
                        RealMatrix* input_grad, RealMatrix& g, RealMatrix& scratch);

struct AdamState {
    MlpParams m;  // first moments, shapes mirror the owning params
    MlpParams v;  // second moments
    long step = 0;
};

AdamState make_adam_state(const MlpParams& p);

// Standard bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8).
void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st, double lr);

struct LrSchedule {
    double initial = 1e-3;
    double decay_rate = 0.99;
    long decay_every = 100;
};

double lr_at(const LrSchedule& s, long iteration);

}  // namespace oplab
