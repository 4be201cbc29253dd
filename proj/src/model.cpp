#include "oplab/model.hpp"

#include <cmath>

#include "oplab/errors.hpp"
#include "oplab/rng.hpp"

namespace oplab {

std::string decoder_kind_name(DecoderKind k) {
    return k == DecoderKind::linear ? "linear" : "nomad";
}

DecoderKind decoder_kind_from_name(const std::string& name) {
    if (name == "linear") return DecoderKind::linear;
    if (name == "nomad") return DecoderKind::nomad;
    throw ConfigError("unknown decoder kind: " + name);
}

void ModelSpec::validate() const {
    if (latent_dim < 1) throw ConfigError("ModelSpec: latent_dim must be >= 1");
    if (d_u < 1 || d_s < 1 || d_y < 1) throw ConfigError("ModelSpec: channel counts must be >= 1");
    if (branch_sizes.size() < 2 || decoder_sizes.size() < 2)
        throw ConfigError("ModelSpec: networks need at least input and output sizes");
    for (long s : branch_sizes)
        if (s < 1) throw ConfigError("ModelSpec: branch layer sizes must be >= 1");
    for (long s : decoder_sizes)
        if (s < 1) throw ConfigError("ModelSpec: decoder layer sizes must be >= 1");
    if (branch_sizes.back() != latent_dim)
        throw ConfigError("ModelSpec: branch output must equal latent_dim");
    if (decoder_kind == DecoderKind::linear) {
        if (decoder_sizes.front() != d_y)
            throw ConfigError("ModelSpec: linear decoder input must equal d_y");
        if (decoder_sizes.back() != latent_dim * d_s)
            throw ConfigError("ModelSpec: linear decoder output must equal latent_dim*d_s");
    } else {
        if (decoder_sizes.front() != latent_dim + d_y)
            throw ConfigError("ModelSpec: nomad decoder input must equal latent_dim+d_y");
        if (decoder_sizes.back() != d_s)
            throw ConfigError("ModelSpec: nomad decoder output must equal d_s");
    }
}

ModelSpec default_spec(DecoderKind kind, long latent_dim, long m, long d_u, long d_s, long d_y,
                       long width, long depth) {
    if (depth < 1) throw ConfigError("default_spec: depth must be >= 1");
    ModelSpec spec;
    spec.latent_dim = latent_dim;
    spec.decoder_kind = kind;
    spec.d_u = d_u;
    spec.d_s = d_s;
    spec.d_y = d_y;
    auto sizes = [width, depth](long in, long out) {
        std::vector<long> s;
        s.push_back(in);
        for (long k = 0; k < depth - 1; ++k) s.push_back(width);
        s.push_back(out);
        return s;
    };
    spec.branch_sizes = sizes(m * d_u, latent_dim);
    if (kind == DecoderKind::linear)
        spec.decoder_sizes = sizes(d_y, latent_dim * d_s);
    else
        spec.decoder_sizes = sizes(latent_dim + d_y, d_s);
    spec.validate();
    return spec;
}

OperatorModel build_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    OperatorModel model;
    model.spec = spec;
    model.branch = init_params(spec.branch_sizes, mix_seed(seed, 1));
    model.decoder_net = init_params(spec.decoder_sizes, mix_seed(seed, 2));
    model.norm.u_mean.assign(spec.d_u, 0.0);
    model.norm.u_std.assign(spec.d_u, 1.0);
    model.norm.s_mean.assign(spec.d_s, 0.0);
    model.norm.s_std.assign(spec.d_s, 1.0);
    return model;
}

namespace {

void channel_stats(const std::vector<const RealMatrix*>& mats, long channels,
                   std::vector<double>& mean, std::vector<double>& stddev) {
    mean.assign(channels, 0.0);
    stddev.assign(channels, 0.0);
    double count = 0.0;
    for (const RealMatrix* m : mats) {
        for (long i = 0; i < m->rows; ++i) {
            const double* r = m->row(i);
            for (long c = 0; c < channels; ++c) mean[c] += r[c];
        }
        count += static_cast<double>(m->rows);
    }
    for (long c = 0; c < channels; ++c) mean[c] /= count;
    for (const RealMatrix* m : mats) {
        for (long i = 0; i < m->rows; ++i) {
            const double* r = m->row(i);
            for (long c = 0; c < channels; ++c) {
                const double d = r[c] - mean[c];
                stddev[c] += d * d;
            }
        }
    }
    for (long c = 0; c < channels; ++c) stddev[c] = std::max(std::sqrt(stddev[c] / count), 1e-8);
}

}  // namespace

void fit_normalization(OperatorModel& model, const OperatorDataset& ds) {
    if (ds.samples.empty()) throw ConfigError("fit_normalization: empty dataset");
    if (ds.d_u != model.spec.d_u || ds.d_s != model.spec.d_s)
        throw ShapeError("fit_normalization: channel counts do not match the model");
    std::vector<const RealMatrix*> us, ss;
    us.reserve(ds.samples.size());
    ss.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        us.push_back(&s.u_values);
        ss.push_back(&s.s_values);
    }
    channel_stats(us, ds.d_u, model.norm.u_mean, model.norm.u_std);
    channel_stats(ss, ds.d_s, model.norm.s_mean, model.norm.s_std);
}

std::vector<double> encode(const RealMatrix& u_values, const OperatorModel& model) {
    if (u_values.cols != model.spec.d_u)
        throw ShapeError("encode: u channel count does not match the model");
    const long flat = u_values.rows * u_values.cols;
    if (flat != model.branch.input_size())
        throw ShapeError("encode: sensor count does not match the branch input");
    std::vector<double> out(static_cast<std::size_t>(flat));
    std::size_t k = 0;
    for (long j = 0; j < u_values.rows; ++j) {
        const double* r = u_values.row(j);
        for (long c = 0; c < u_values.cols; ++c)
            out[k++] = (r[c] - model.norm.u_mean[c]) / model.norm.u_std[c];
    }
    return out;
}

LatentCode approximate(const std::vector<double>& encoded, const OperatorModel& model) {
    if (static_cast<long>(encoded.size()) != model.branch.input_size())
        throw ShapeError("approximate: encoded length does not match the branch input");
    RealMatrix x(1, static_cast<long>(encoded.size()));
    x.data = encoded;
    const RealMatrix beta = mlp_forward(model.branch, x);
    LatentCode code;
    code.beta.assign(beta.data.begin(), beta.data.end());
    return code;
}

namespace {

void check_latent(const LatentCode& beta, const OperatorModel& model) {
    if (static_cast<long>(beta.beta.size()) != model.spec.latent_dim)
        throw ShapeError("decode: latent code length does not match the model");
}

}  // namespace

RealMatrix decode_linear(const LatentCode& beta, const RealMatrix& y, const OperatorModel& model) {
    if (model.spec.decoder_kind != DecoderKind::linear)
        throw ConfigError("decode_linear: model decoder is not linear");
    check_latent(beta, model);
    if (y.cols != model.spec.d_y) throw ShapeError("decode_linear: query width does not match d_y");
    const long n = model.spec.latent_dim, d_s = model.spec.d_s;
    const RealMatrix basis = mlp_forward(model.decoder_net, y);  // [P x n*d_s]
    RealMatrix out(y.rows, d_s);
    for (long l = 0; l < y.rows; ++l) {
        const double* t = basis.row(l);
        double* o = out.row(l);
        for (long c = 0; c < d_s; ++c) {
            double acc = 0.0;
            for (long k = 0; k < n; ++k) acc += beta.beta[k] * t[c * n + k];
            o[c] = acc;
        }
    }
    return out;
}

RealMatrix decode_nomad(const LatentCode& beta, const RealMatrix& y, const OperatorModel& model) {
    if (model.spec.decoder_kind != DecoderKind::nomad)
        throw ConfigError("decode_nomad: model decoder is not nomad");
    check_latent(beta, model);
    if (y.cols != model.spec.d_y) throw ShapeError("decode_nomad: query width does not match d_y");
    const long n = model.spec.latent_dim;
    RealMatrix z(y.rows, n + y.cols);
    for (long l = 0; l < y.rows; ++l) {
        double* r = z.row(l);
        for (long k = 0; k < n; ++k) r[k] = beta.beta[k];
        const double* yr = y.row(l);
        for (long c = 0; c < y.cols; ++c) r[n + c] = yr[c];
    }
    return mlp_forward(model.decoder_net, z);
}

RealMatrix predict(const RealMatrix& u_values, const RealMatrix& y, const OperatorModel& model) {
    const LatentCode beta = approximate(encode(u_values, model), model);
    RealMatrix out = model.spec.decoder_kind == DecoderKind::linear
                         ? decode_linear(beta, y, model)
                         : decode_nomad(beta, y, model);
    for (long l = 0; l < out.rows; ++l) {
        double* r = out.row(l);
        for (long c = 0; c < out.cols; ++c) r[c] = model.norm.s_mean[c] + model.norm.s_std[c] * r[c];
    }
    return out;
}

namespace {

constexpr long kChunkRows = 8192;

// Shared state for loss/gradient evaluation over one dataset. Standardized
// inputs and targets are materialized once; all batch steps reuse them.
class Engine {
  public:
    Engine(const OperatorModel& model, const OperatorDataset& ds)
        : model_(model), ds_(ds) {
        ds.validate();
        if (ds.d_u != model.spec.d_u || ds.d_s != model.spec.d_s || ds.d_y != model.spec.d_y)
            throw ShapeError("model/dataset channel counts disagree");
        if (ds.m() * ds.d_u != model.branch.input_size())
            throw ShapeError("branch input does not match dataset sensors");
        const long n_samples = ds.n_samples();
        u_norm_ = RealMatrix(n_samples, ds.m() * ds.d_u);
        for (long i = 0; i < n_samples; ++i) {
            const std::vector<double> e = encode(ds.samples[i].u_values, model);
            std::copy(e.begin(), e.end(), u_norm_.row(i));
        }
        s_norm_.resize(n_samples);
        for (long i = 0; i < n_samples; ++i) {
            const RealMatrix& s = ds.samples[i].s_values;
            RealMatrix sn(s.rows, s.cols);
            for (long l = 0; l < s.rows; ++l) {
                const double* src = s.row(l);
                double* dst = sn.row(l);
                for (long c = 0; c < s.cols; ++c)
                    dst[c] = (src[c] - model.norm.s_mean[c]) / model.norm.s_std[c];
            }
            s_norm_[i] = std::move(sn);
        }
        shared_y_ = ds.shared_query_grid();
        if (shared_y_ && model.spec.decoder_kind == DecoderKind::linear) {
            // The query grid never changes, so it stays parked in the trace.
            RealMatrix& yin = trunk_trace_.input();
            const RealMatrix& y = ds.samples.front().y_points;
            yin.resize(y.rows, y.cols);
            yin.data.assign(y.data.begin(), y.data.end());
        }
    }

    // Loss of one batch; accumulates gradients when `grads` is non-null.
    double compute(std::span<const long> batch, ModelGrads* grads) {
        if (batch.empty()) throw ConfigError("training batch is empty");
        for (long i : batch)
            if (i < 0 || i >= ds_.n_samples()) throw ConfigError("batch index out of range");
        const long b_size = static_cast<long>(batch.size());
        const long n = model_.spec.latent_dim;
        const long p = ds_.p();
        const double scale = 1.0 / (static_cast<double>(b_size) * static_cast<double>(p));

        RealMatrix& xb = branch_trace_.input();
        xb.resize(b_size, u_norm_.cols);
        for (long b = 0; b < b_size; ++b)
            std::copy(u_norm_.row(batch[b]), u_norm_.row(batch[b]) + u_norm_.cols, xb.row(b));
        mlp_forward_trace_prefilled(model_.branch, branch_trace_);
        const RealMatrix& beta = branch_trace_.output();  // [B x n]

        if (grads) {
            dbeta_.resize(b_size, n);
            dbeta_.fill(0.0);
        }

        double loss = 0.0;
        const bool linear = model_.spec.decoder_kind == DecoderKind::linear;
        if (linear && shared_y_) {
            loss = shared_linear_pass(batch, beta, scale, grads);
        } else {
            loss = streaming_pass(batch, beta, scale, grads);
        }

        if (grads)
            mlp_backward_trace(model_.branch, branch_trace_, grads->branch, nullptr, dbeta_,
                               scratch_);
        return loss;
    }

  private:
    double shared_linear_pass(std::span<const long> batch, const RealMatrix& beta, double scale,
                              ModelGrads* grads) {
        const long n = model_.spec.latent_dim, d_s = model_.spec.d_s;
        const long p = ds_.p();
        mlp_forward_trace_prefilled(model_.decoder_net, trunk_trace_);
        const RealMatrix& basis = trunk_trace_.output();  // [P x n*d_s]
        if (grads) {
            upstream_.resize(p, n * d_s);
            upstream_.fill(0.0);
        }
        double loss = 0.0;
        for (long b = 0; b < static_cast<long>(batch.size()); ++b) {
            const RealMatrix& sn = s_norm_[batch[b]];
            const double* bv = beta.row(b);
            for (long l = 0; l < p; ++l) {
                const double* t = basis.row(l);
                const double* target = sn.row(l);
                double* up = grads ? upstream_.row(l) : nullptr;
                for (long c = 0; c < d_s; ++c) {
                    double pred = 0.0;
                    for (long k = 0; k < n; ++k) pred += bv[k] * t[c * n + k];
                    const double resid = pred - target[c];
                    loss += scale * resid * resid;
                    if (grads) {
                        const double gv = 2.0 * scale * resid;
                        double* db = dbeta_.row(b);
                        for (long k = 0; k < n; ++k) {
                            db[k] += gv * t[c * n + k];
                            up[c * n + k] += gv * bv[k];
                        }
                    }
                }
            }
        }
        if (grads)
            mlp_backward_trace(model_.decoder_net, trunk_trace_, grads->decoder, nullptr,
                               upstream_, scratch_);
        return loss;
    }

    double streaming_pass(std::span<const long> batch, const RealMatrix& beta, double scale,
                          ModelGrads* grads) {
        const long n = model_.spec.latent_dim, d_s = model_.spec.d_s, d_y = model_.spec.d_y;
        const long p = ds_.p();
        const bool nomad = model_.spec.decoder_kind == DecoderKind::nomad;
        const long in_dim = nomad ? n + d_y : d_y;
        const long out_dim = nomad ? d_s : n * d_s;
        const long total = static_cast<long>(batch.size()) * p;
        double loss = 0.0;
        for (long start = 0; start < total; start += kChunkRows) {
            const long rows = std::min(kChunkRows, total - start);
            RealMatrix& zin = chunk_trace_.input();
            zin.resize(rows, in_dim);
            for (long r = 0; r < rows; ++r) {
                const long b = (start + r) / p;
                const long l = (start + r) % p;
                double* row = zin.row(r);
                if (nomad) {
                    const double* bv = beta.row(b);
                    for (long k = 0; k < n; ++k) row[k] = bv[k];
                }
                const double* yr = ds_.samples[batch[b]].y_points.row(l);
                for (long c = 0; c < d_y; ++c) row[(nomad ? n : 0) + c] = yr[c];
            }
            mlp_forward_trace_prefilled(model_.decoder_net, chunk_trace_);
            const RealMatrix& out = chunk_trace_.output();  // [rows x out_dim]
            if (grads) upstream_.resize(rows, out_dim);
            for (long r = 0; r < rows; ++r) {
                const long b = (start + r) / p;
                const long l = (start + r) % p;
                const double* target = s_norm_[batch[b]].row(l);
                const double* orow = out.row(r);
                if (nomad) {
                    for (long c = 0; c < d_s; ++c) {
                        const double resid = orow[c] - target[c];
                        loss += scale * resid * resid;
                        if (grads) upstream_.row(r)[c] = 2.0 * scale * resid;
                    }
                } else {
                    const double* bv = beta.row(b);
                    for (long c = 0; c < d_s; ++c) {
                        double pred = 0.0;
                        for (long k = 0; k < n; ++k) pred += bv[k] * orow[c * n + k];
                        const double resid = pred - target[c];
                        loss += scale * resid * resid;
                        if (grads) {
                            const double gv = 2.0 * scale * resid;
                            double* db = dbeta_.row(b);
                            double* up = upstream_.row(r);
                            for (long k = 0; k < n; ++k) {
                                db[k] += gv * orow[c * n + k];
                                up[c * n + k] = gv * bv[k];
                            }
                        }
                    }
                }
            }
            if (grads) {
                mlp_backward_trace(model_.decoder_net, chunk_trace_, grads->decoder,
                                   nomad ? &input_grad_ : nullptr, upstream_, scratch_);
                if (nomad) {
                    for (long r = 0; r < rows; ++r) {
                        const long b = (start + r) / p;
                        double* db = dbeta_.row(b);
                        const double* ig = input_grad_.row(r);
                        for (long k = 0; k < n; ++k) db[k] += ig[k];
                    }
                }
            }
        }
        return loss;
    }

    const OperatorModel& model_;
    const OperatorDataset& ds_;
    RealMatrix u_norm_;
    std::vector<RealMatrix> s_norm_;
    bool shared_y_ = false;
    ForwardTrace branch_trace_;
    ForwardTrace trunk_trace_;
    ForwardTrace chunk_trace_;
    RealMatrix dbeta_;
    RealMatrix upstream_;
    RealMatrix input_grad_;
    RealMatrix scratch_;
};

}  // namespace

double training_loss(const OperatorModel& model, const OperatorDataset& ds,
                     std::span<const long> batch) {
    Engine engine(model, ds);
    const double loss = engine.compute(batch, nullptr);
    if (!std::isfinite(loss)) throw TrainingError("training_loss: non-finite prediction", -1);
    return loss;
}

ModelGrads loss_gradients(const OperatorModel& model, const OperatorDataset& ds,
                          std::span<const long> batch, double* loss_out) {
    Engine engine(model, ds);
    ModelGrads grads;
    grads.branch = zeros_like(model.branch);
    grads.decoder = zeros_like(model.decoder_net);
    const double loss = engine.compute(batch, &grads);
    if (!std::isfinite(loss)) throw TrainingError("loss_gradients: non-finite prediction", -1);
    if (loss_out) *loss_out = loss;
    return grads;
}

TrainResult train(OperatorModel& model, const OperatorDataset& ds, const TrainConfig& cfg) {
    if (cfg.iterations < 0) throw ConfigError("train: iterations must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    TrainResult result;
    if (cfg.iterations == 0) return result;

    Engine engine(model, ds);
    ModelGrads grads;
    grads.branch = zeros_like(model.branch);
    grads.decoder = zeros_like(model.decoder_net);
    AdamState branch_state = make_adam_state(model.branch);
    AdamState decoder_state = make_adam_state(model.decoder_net);
    Rng rng(mix_seed(cfg.seed, 0x747261696eULL));
    const long n_samples = ds.n_samples();
    std::vector<long> batch(cfg.batch_size);
    result.loss_history.reserve(cfg.iterations);

    for (long it = 0; it < cfg.iterations; ++it) {
        for (long& idx : batch)
            idx = std::min<long>(n_samples - 1, static_cast<long>(u01(rng) * n_samples));
        for (auto& l : grads.branch.layers) {
            l.weight.fill(0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
        for (auto& l : grads.decoder.layers) {
            l.weight.fill(0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
        const double loss = engine.compute(batch, &grads);
        if (!std::isfinite(loss)) throw TrainingError("train: loss diverged", it);
        result.loss_history.push_back(loss);
        const double lr = lr_at(cfg.lr, it);
        adam_step(model.branch, grads.branch, branch_state, lr);
        adam_step(model.decoder_net, grads.decoder, decoder_state, lr);
    }
    return result;
}

}  // namespace oplab
