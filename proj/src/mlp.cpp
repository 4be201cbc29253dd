#include "oplab/mlp.hpp"

#include <cmath>

#include "oplab/errors.hpp"
#include "oplab/rng.hpp"

namespace oplab {

std::vector<long> MlpParams::layer_sizes() const {
    std::vector<long> sizes;
    if (layers.empty()) return sizes;
    sizes.push_back(layers.front().weight.cols);
    for (const auto& l : layers) sizes.push_back(l.weight.rows);
    return sizes;
}

std::size_t MlpParams::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

bool MlpParams::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weight.all_finite()) return false;
        if (!finite_array(l.bias.data(), l.bias.size())) return false;
    }
    return true;
}

MlpParams init_params(const std::vector<long>& sizes, std::uint64_t seed) {
    if (sizes.size() < 2) throw ConfigError("init_params: need at least input and output sizes");
    for (long s : sizes)
        if (s < 1) throw ConfigError("init_params: layer sizes must be >= 1");
    Rng rng(seed);
    MlpParams p;
    p.layers.resize(sizes.size() - 1);
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        const long fan_in = sizes[k], fan_out = sizes[k + 1];
        DenseLayer& l = p.layers[k];
        l.weight = RealMatrix(fan_out, fan_in);
        l.bias.assign(fan_out, 0.0);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& w : l.weight.data) w = uniform_in(rng, -limit, limit);
    }
    return p;
}

MlpGrads zeros_like(const MlpParams& p) {
    MlpGrads g;
    g.layers.resize(p.layers.size());
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        g.layers[k].weight = RealMatrix(p.layers[k].weight.rows, p.layers[k].weight.cols);
        g.layers[k].bias.assign(p.layers[k].bias.size(), 0.0);
    }
    return g;
}

namespace {

void transpose_into(const RealMatrix& a, RealMatrix& out) {
    out.resize(a.cols, a.rows);
    for (long i = 0; i < a.rows; ++i)
        for (long j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
}

}  // namespace

void mlp_forward_trace_prefilled(const MlpParams& p, ForwardTrace& trace) {
    if (p.layers.empty()) throw ConfigError("mlp_forward: empty network");
    if (trace.stage.empty()) throw ConfigError("mlp_forward: trace has no input stage");
    trace.stage.resize(p.layers.size() + 1);
    if (trace.stage[0].cols != p.layers.front().weight.cols)
        throw ShapeError("mlp_forward: input width does not match layer");
    static thread_local RealMatrix wt;
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        const DenseLayer& l = p.layers[k];
        const RealMatrix& in = trace.stage[k];
        RealMatrix& out = trace.stage[k + 1];
        if (in.cols != l.weight.cols) throw ShapeError("mlp_forward: layer width mismatch");
        out.resize(in.rows, l.weight.rows);
        for (long i = 0; i < out.rows; ++i) {
            double* r = out.row(i);
            for (long j = 0; j < out.cols; ++j) r[j] = l.bias[j];
        }
        transpose_into(l.weight, wt);
        mm_add(in, wt, out);
        if (k + 1 < p.layers.size()) tanh_inplace(out);
    }
}

void mlp_forward_trace(const MlpParams& p, const RealMatrix& x, ForwardTrace& trace) {
    RealMatrix& in = trace.input();
    in.resize(x.rows, x.cols);
    in.data.assign(x.data.begin(), x.data.end());
    mlp_forward_trace_prefilled(p, trace);
}

RealMatrix mlp_forward(const MlpParams& p, const RealMatrix& x) {
    if (p.layers.empty()) throw ConfigError("mlp_forward: empty network");
    if (x.cols != p.layers.front().weight.cols)
        throw ShapeError("mlp_forward: input width does not match layer");
    RealMatrix h = x;
    RealMatrix wt, z;
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        const DenseLayer& l = p.layers[k];
        z.resize(h.rows, l.weight.rows);
        for (long i = 0; i < z.rows; ++i) {
            double* r = z.row(i);
            for (long j = 0; j < z.cols; ++j) r[j] = l.bias[j];
        }
        transpose_into(l.weight, wt);
        mm_add(h, wt, z);
        if (k + 1 < p.layers.size()) tanh_inplace(z);
        std::swap(h, z);
    }
    return h;
}

void mlp_backward_trace(const MlpParams& p, const ForwardTrace& trace, MlpGrads& grads,
                        RealMatrix* input_grad, RealMatrix& g, RealMatrix& scratch) {
    if (trace.stage.size() != p.layers.size() + 1)
        throw ShapeError("mlp_backward: trace does not match network depth");
    if (!same_shape(g, trace.stage.back()))
        throw ShapeError("mlp_backward: upstream shape does not match output");
    for (std::size_t k = p.layers.size(); k-- > 0;) {
        const RealMatrix& input = trace.stage[k];
        mm_at_b_add(g, input, grads.layers[k].weight);
        col_sums_add(g, grads.layers[k].bias);
        const bool need_down = k > 0 || input_grad != nullptr;
        if (!need_down) break;
        scratch.resize(g.rows, p.layers[k].weight.cols);
        scratch.fill(0.0);
        mm_add(g, p.layers[k].weight, scratch);
        if (k > 0) tanh_backward_inplace(input, scratch);
        std::swap(g, scratch);
    }
    if (input_grad != nullptr) std::swap(*input_grad, g);
}

std::pair<MlpGrads, RealMatrix> mlp_backward(const MlpParams& p, const RealMatrix& x,
                                             const RealMatrix& upstream) {
    ForwardTrace trace;
    mlp_forward_trace(p, x, trace);
    MlpGrads grads = zeros_like(p);
    RealMatrix input_grad, g = upstream, scratch;
    mlp_backward_trace(p, trace, grads, &input_grad, g, scratch);
    return {std::move(grads), std::move(input_grad)};
}

AdamState make_adam_state(const MlpParams& p) {
    AdamState st;
    st.m = zeros_like(p);
    st.v = zeros_like(p);
    st.step = 0;
    return st;
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

void adam_update_array(double* p, const double* g, double* m, double* v, std::size_t n, double lr,
                       double bc1, double bc2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
}

}  // namespace

void adam_step(MlpParams& p, const MlpGrads& g, AdamState& st, double lr) {
    if (g.layers.size() != p.layers.size()) throw ShapeError("adam_step: gradient shape mismatch");
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        if (!same_shape(g.layers[k].weight, p.layers[k].weight) ||
            g.layers[k].bias.size() != p.layers[k].bias.size())
            throw ShapeError("adam_step: gradient shape mismatch");
        if (!g.layers[k].weight.all_finite() ||
            !finite_array(g.layers[k].bias.data(), g.layers[k].bias.size()))
            throw TrainingError("adam_step: non-finite gradient", st.step);
    }
    st.step += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.step));
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        adam_update_array(p.layers[k].weight.data.data(), g.layers[k].weight.data.data(),
                          st.m.layers[k].weight.data.data(), st.v.layers[k].weight.data.data(),
                          p.layers[k].weight.size(), lr, bc1, bc2);
        adam_update_array(p.layers[k].bias.data(), g.layers[k].bias.data(),
                          st.m.layers[k].bias.data(), st.v.layers[k].bias.data(),
                          p.layers[k].bias.size(), lr, bc1, bc2);
    }
}

double lr_at(const LrSchedule& s, long iteration) {
    const long k = iteration / s.decay_every;
    return s.initial * std::pow(s.decay_rate, static_cast<double>(k));
}

}  // namespace oplab
