#include "oplab/opds.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "oplab/errors.hpp"

namespace oplab {

namespace {

constexpr char kMagicPrefix[] = "OPDSET";
constexpr char kVersion[] = "01";

bool host_little_endian() {
    const std::uint16_t probe = 1;
    char b;
    std::memcpy(&b, &probe, 1);
    return b == 1;
}

class Writer {
  public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw Error("cannot open for writing: " + path);
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out_) throw Error("write failed");
        offset_ += n;
    }

    void u64(std::uint64_t v) {
        if (!host_little_endian()) {
            std::uint8_t b[8];
            for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
            bytes(b, 8);
            return;
        }
        bytes(&v, 8);
    }

    void doubles(const double* p, std::size_t n) {
        if (!host_little_endian()) {
            for (std::size_t i = 0; i < n; ++i) {
                std::uint64_t v;
                std::memcpy(&v, &p[i], 8);
                u64(v);
            }
            return;
        }
        bytes(p, n * 8);
    }

  private:
    std::ofstream out_;
    std::size_t offset_ = 0;
};

class Reader {
  public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw Error("cannot open for reading: " + path);
    }

    std::size_t offset() const { return offset_; }

    void bytes(void* p, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw FormatError(std::string("truncated container while reading ") + what,
                              offset_ + static_cast<std::size_t>(in_.gcount()));
        offset_ += n;
    }

    std::uint64_t u64(const char* what) {
        std::uint8_t b[8];
        bytes(b, 8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }

    void doubles(double* p, std::size_t n, const char* what) {
        const std::size_t start = offset_;
        bytes(p, n * 8, what);
        if (!host_little_endian()) {
            for (std::size_t i = 0; i < n; ++i) {
                std::uint64_t v;
                std::memcpy(&v, &p[i], 8);
                std::uint64_t r = 0;
                for (int k = 0; k < 8; ++k) r = (r << 8) | ((v >> (8 * k)) & 0xff);
                std::memcpy(&p[i], &r, 8);
            }
        }
        (void)start;
    }

  private:
    std::ifstream in_;
    std::size_t offset_ = 0;
};

using HeaderMap = std::vector<std::pair<std::string, std::string>>;

std::string render_header(const HeaderMap& kv) {
    std::string h;
    for (const auto& [k, v] : kv) h += k + "=" + v + "\n";
    return h;
}

HeaderMap parse_header(const std::string& text, std::size_t base_offset) {
    HeaderMap kv;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) throw FormatError("header line without newline", base_offset + pos);
        const std::string line = text.substr(pos, nl - pos);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("header line without '='", base_offset + pos);
        kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
        pos = nl + 1;
    }
    return kv;
}

const std::string& require(const HeaderMap& kv, const std::string& key) {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    throw FormatError("missing header key '" + key + "'", 16);
}

long require_long(const HeaderMap& kv, const std::string& key) {
    return std::stol(require(kv, key));
}

void write_magic_and_header(Writer& w, const HeaderMap& kv) {
    w.bytes(kMagicPrefix, 6);
    w.bytes(kVersion, 2);
    const std::string header = render_header(kv);
    w.u64(header.size());
    w.bytes(header.data(), header.size());
}

HeaderMap read_magic_and_header(Reader& r) {
    char magic[6];
    r.bytes(magic, 6, "magic");
    if (std::memcmp(magic, kMagicPrefix, 6) != 0) throw FormatError("bad magic", 0);
    char version[2];
    r.bytes(version, 2, "version");
    if (std::memcmp(version, kVersion, 2) != 0)
        throw FormatError(std::string("unsupported container version '") + version[0] + version[1] +
                              "'",
                          6);
    const std::uint64_t hlen = r.u64("header length");
    if (hlen > (1ull << 24)) throw FormatError("implausible header length", 8);
    std::string text(hlen, '\0');
    r.bytes(text.data(), hlen, "header");
    return parse_header(text, 16);
}

std::vector<long> parse_sizes(const std::string& s) {
    std::vector<long> sizes;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) sizes.push_back(std::stol(item));
    return sizes;
}

std::string render_sizes(const std::vector<long>& sizes) {
    std::string s;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(sizes[i]);
    }
    return s;
}

}  // namespace

void write_dataset(const OperatorDataset& ds, const std::string& path) {
    ds.validate();
    HeaderMap kv;
    kv.emplace_back("kind", "dataset");
    kv.emplace_back("benchmark", benchmark_name(ds.benchmark));
    kv.emplace_back("n_samples", std::to_string(ds.n_samples()));
    kv.emplace_back("m", std::to_string(ds.m()));
    kv.emplace_back("p", std::to_string(ds.p()));
    kv.emplace_back("d_u", std::to_string(ds.d_u));
    kv.emplace_back("d_s", std::to_string(ds.d_s));
    kv.emplace_back("d_x", std::to_string(ds.d_x()));
    kv.emplace_back("d_y", std::to_string(ds.d_y));
    kv.emplace_back("tag_dim", std::to_string(ds.tag_dim()));
    kv.emplace_back("seed", std::to_string(ds.seed));
    for (const auto& [k, v] : ds.config) kv.emplace_back("cfg." + k, v);

    Writer w(path);
    write_magic_and_header(w, kv);
    w.doubles(ds.sensor_grid.data.data(), ds.sensor_grid.size());
    for (const auto& s : ds.samples) {
        w.doubles(s.u_values.data.data(), s.u_values.size());
        w.doubles(s.y_points.data.data(), s.y_points.size());
        w.doubles(s.s_values.data.data(), s.s_values.size());
        w.doubles(s.latent_tag.data(), s.latent_tag.size());
    }
}

OperatorDataset read_dataset(const std::string& path) {
    Reader r(path);
    const HeaderMap kv = read_magic_and_header(r);
    if (require(kv, "kind") != "dataset") throw FormatError("container is not a dataset", 16);

    OperatorDataset ds;
    ds.benchmark = benchmark_from_name(require(kv, "benchmark"));
    const long n_samples = require_long(kv, "n_samples");
    const long m = require_long(kv, "m");
    const long p = require_long(kv, "p");
    ds.d_u = require_long(kv, "d_u");
    ds.d_s = require_long(kv, "d_s");
    const long d_x = require_long(kv, "d_x");
    ds.d_y = require_long(kv, "d_y");
    const long tag_dim = require_long(kv, "tag_dim");
    ds.seed = std::stoull(require(kv, "seed"));
    for (const auto& [k, v] : kv)
        if (k.starts_with("cfg.")) ds.config.emplace_back(k.substr(4), v);

    if (n_samples < 1 || m < 1 || p < 1 || ds.d_u < 1 || ds.d_s < 1 || d_x < 1 || ds.d_y < 1 ||
        tag_dim < 0)
        throw FormatError("invalid dataset dimensions in header", 16);

    ds.sensor_grid = RealMatrix(m, d_x);
    r.doubles(ds.sensor_grid.data.data(), ds.sensor_grid.size(), "sensor grid");
    ds.samples.resize(n_samples);
    for (long i = 0; i < n_samples; ++i) {
        OperatorSample& s = ds.samples[i];
        s.u_values = RealMatrix(m, ds.d_u);
        r.doubles(s.u_values.data.data(), s.u_values.size(), "u values");
        s.y_points = RealMatrix(p, ds.d_y);
        r.doubles(s.y_points.data.data(), s.y_points.size(), "query points");
        s.s_values = RealMatrix(p, ds.d_s);
        r.doubles(s.s_values.data.data(), s.s_values.size(), "target values");
        s.latent_tag.assign(tag_dim, 0.0);
        r.doubles(s.latent_tag.data(), s.latent_tag.size(), "latent tag");
    }
    ds.validate();
    return ds;
}

void write_checkpoint(const OperatorModel& model, const std::string& path) {
    model.spec.validate();
    HeaderMap kv;
    kv.emplace_back("kind", "checkpoint");
    kv.emplace_back("decoder", decoder_kind_name(model.spec.decoder_kind));
    kv.emplace_back("latent_dim", std::to_string(model.spec.latent_dim));
    kv.emplace_back("d_u", std::to_string(model.spec.d_u));
    kv.emplace_back("d_s", std::to_string(model.spec.d_s));
    kv.emplace_back("d_y", std::to_string(model.spec.d_y));
    kv.emplace_back("branch_sizes", render_sizes(model.spec.branch_sizes));
    kv.emplace_back("decoder_sizes", render_sizes(model.spec.decoder_sizes));

    Writer w(path);
    write_magic_and_header(w, kv);
    w.doubles(model.norm.u_mean.data(), model.norm.u_mean.size());
    w.doubles(model.norm.u_std.data(), model.norm.u_std.size());
    w.doubles(model.norm.s_mean.data(), model.norm.s_mean.size());
    w.doubles(model.norm.s_std.data(), model.norm.s_std.size());
    for (const MlpParams* net : {&model.branch, &model.decoder_net}) {
        for (const DenseLayer& l : net->layers) {
            w.doubles(l.weight.data.data(), l.weight.size());
            w.doubles(l.bias.data(), l.bias.size());
        }
    }
}

OperatorModel read_checkpoint(const std::string& path) {
    Reader r(path);
    const HeaderMap kv = read_magic_and_header(r);
    if (require(kv, "kind") != "checkpoint") throw FormatError("container is not a checkpoint", 16);

    ModelSpec spec;
    spec.decoder_kind = decoder_kind_from_name(require(kv, "decoder"));
    spec.latent_dim = require_long(kv, "latent_dim");
    spec.d_u = require_long(kv, "d_u");
    spec.d_s = require_long(kv, "d_s");
    spec.d_y = require_long(kv, "d_y");
    spec.branch_sizes = parse_sizes(require(kv, "branch_sizes"));
    spec.decoder_sizes = parse_sizes(require(kv, "decoder_sizes"));
    spec.validate();

    OperatorModel model = build_model(spec, 0);
    r.doubles(model.norm.u_mean.data(), model.norm.u_mean.size(), "u mean");
    r.doubles(model.norm.u_std.data(), model.norm.u_std.size(), "u std");
    r.doubles(model.norm.s_mean.data(), model.norm.s_mean.size(), "s mean");
    r.doubles(model.norm.s_std.data(), model.norm.s_std.size(), "s std");
    for (MlpParams* net : {&model.branch, &model.decoder_net}) {
        for (DenseLayer& l : net->layers) {
            r.doubles(l.weight.data.data(), l.weight.size(), "layer weights");
            r.doubles(l.bias.data(), l.bias.size(), "layer biases");
        }
    }
    if (!model.branch.all_finite() || !model.decoder_net.all_finite())
        throw FormatError("checkpoint contains non-finite parameters", 16);
    return model;
}

}  // namespace oplab
