// Command-line front end: dataset generation, training, evaluation, PCA, and
// latent-dimension sweeps with reproducible seeded configs.
//
// Every run writes a `<output>.manifest` key=value file that replays the run:
//   oplab --config <manifest>
// Flags override config-file values, which override the built-in defaults.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oplab/analysis.hpp"
#include "oplab/dataset.hpp"
#include "oplab/errors.hpp"
#include "oplab/model.hpp"
#include "oplab/opds.hpp"
#include "oplab/rng.hpp"
#include "oplab/shallow_water.hpp"
#include "oplab/sweep.hpp"

namespace {

using namespace oplab;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

void write_manifest(CLI::App* cmd, const std::string& out_path, double wall_seconds) {
    CLI::App* root = cmd;
    while (root->get_parent() != nullptr) root = root->get_parent();
    std::ofstream out(out_path + ".manifest", std::ios::binary);
    if (!out) throw Error("cannot write manifest next to " + out_path);
    out << "# replay with: oplab --config <this file>\n";
    out << "# wall_seconds=" << format_double(wall_seconds) << "\n";
    out << root->config_to_str(true, false);
}

std::vector<long> parse_long_list(const std::string& text) {
    std::vector<long> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stol(item));
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

CLI::App* make_subcommand(CLI::App& app, const std::string& name, const std::string& help) {
    CLI::App* cmd = app.add_subcommand(name, help);
    cmd->configurable(true);
    cmd->option_defaults()->always_capture_default(true);
    return cmd;
}

// ---- gen ----

struct GenOptions {
    std::string benchmark;
    std::string out;
    long n = -1;
    std::uint64_t seed = 0;
    std::string preset = "paper";
    // antiderivative
    double t0 = 0.0, t1 = 10.0;
    long m = 500, p = -1;
    // advection
    long nx = 256, nt = 100;
    double speed = 1.0, width = 0.0002, mu_lo = 0.05, mu_hi = 1.0;
    // shallow water
    long grid = 32;
    double g = 1.0, input_time = 0.002, cfl = 0.5;
    std::string snapshots = "0.11,0.16,0.21,0.26,0.31";
    bool full_grid = false;
};

OperatorDataset run_generator(const GenOptions& opt) {
    const Benchmark bench = benchmark_from_name(opt.benchmark);
    long n = opt.n;
    if (n < 0) n = (bench == Benchmark::shallow_water && opt.preset == "desk") ? 200 : 1000;
    switch (bench) {
        case Benchmark::antiderivative: {
            AntiderivativeConfig cfg;
            cfg.t0 = opt.t0;
            cfg.t1 = opt.t1;
            cfg.m = opt.m;
            cfg.p = opt.p < 0 ? 500 : opt.p;
            cfg.n = n;
            cfg.seed = opt.seed;
            return gen_antiderivative(cfg);
        }
        case Benchmark::advection: {
            AdvectionConfig cfg;
            cfg.nx = opt.nx;
            cfg.nt = opt.nt;
            cfg.n = n;
            cfg.seed = opt.seed;
            cfg.speed = opt.speed;
            cfg.width = opt.width;
            cfg.mu_lo = opt.mu_lo;
            cfg.mu_hi = opt.mu_hi;
            return gen_advection(cfg);
        }
        case Benchmark::shallow_water: {
            ShallowWaterConfig cfg;
            cfg.n = n;
            cfg.seed = opt.seed;
            cfg.nx = cfg.ny = opt.grid;
            cfg.g = opt.g;
            cfg.input_time = opt.input_time;
            cfg.snapshot_times = parse_double_list(opt.snapshots);
            cfg.p = opt.p < 0 ? 128 : opt.p;
            cfg.full_grid = opt.full_grid;
            cfg.cfl = opt.cfl;
            return gen_shallow_water(cfg);
        }
    }
    throw ConfigError("unknown benchmark");
}

CLI::App* add_gen(CLI::App& app, GenOptions& opt) {
    CLI::App* cmd = make_subcommand(app, "gen", "Generate a benchmark dataset (OPDS file)");
    cmd->add_option("--benchmark", opt.benchmark, "antiderivative|advection|shallow-water")
        ->required();
    cmd->add_option("--out", opt.out, "output OPDS path")->required();
    cmd->add_option("--n", opt.n, "number of samples (default 1000; desk preset: 200 for shallow-water)");
    cmd->add_option("--seed", opt.seed, "generation seed");
    cmd->add_option("--preset", opt.preset, "paper|desk scale defaults")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--t0", opt.t0, "antiderivative: lower frequency bound");
    cmd->add_option("--t1", opt.t1, "antiderivative: upper frequency bound");
    cmd->add_option("--m", opt.m, "antiderivative: sensor count");
    cmd->add_option("--p", opt.p, "query points per sample (antiderivative/shallow-water)");
    cmd->add_option("--nx", opt.nx, "advection: spatial points");
    cmd->add_option("--nt", opt.nt, "advection: temporal points");
    cmd->add_option("--speed", opt.speed, "advection: transport speed");
    cmd->add_option("--width", opt.width, "advection: bump width");
    cmd->add_option("--mu-lo", opt.mu_lo, "advection: lower center bound");
    cmd->add_option("--mu-hi", opt.mu_hi, "advection: upper center bound");
    cmd->add_option("--grid", opt.grid, "shallow-water: cells per side");
    cmd->add_option("--g", opt.g, "shallow-water: gravity acceleration");
    cmd->add_option("--input-time", opt.input_time, "shallow-water: input snapshot time");
    cmd->add_option("--snapshots", opt.snapshots, "shallow-water: comma list of output times");
    cmd->add_flag("--full-grid", opt.full_grid, "shallow-water: store every lattice point");
    cmd->add_option("--cfl", opt.cfl, "shallow-water: CFL number");
    return cmd;
}

void run_gen(CLI::App* cmd, const GenOptions& opt) {
    Timer timer;
    if (opt.n == 0) throw ConfigError("gen: --n must be >= 1");
    OperatorDataset ds = run_generator(opt);
    write_dataset(ds, opt.out);
    write_manifest(cmd, opt.out, timer.seconds());
    std::printf("wrote %s: benchmark=%s N=%ld m=%ld P=%ld d_u=%ld d_s=%ld d_y=%ld\n",
                opt.out.c_str(), benchmark_name(ds.benchmark).c_str(), ds.n_samples(), ds.m(),
                ds.p(), ds.d_u, ds.d_s, ds.d_y);
}

// ---- train ----

struct TrainOptions {
    std::string data;
    std::string out;
    std::string decoder = "nomad";
    long latent = 1;
    long iterations = -1;
    long batch = 100;
    double lr = 1e-3;
    double decay_rate = 0.99;
    long decay_every = 100;
    std::uint64_t seed = 0;
    long width = 100;
    long depth = 5;
    std::string preset = "paper";
};

long default_iterations(Benchmark bench, const std::string& preset) {
    if (bench == Benchmark::shallow_water) return preset == "desk" ? 20000 : 100000;
    return 20000;
}

CLI::App* add_train(CLI::App& app, TrainOptions& opt) {
    CLI::App* cmd = make_subcommand(app, "train", "Train an operator model on a dataset");
    cmd->add_option("--data", opt.data, "training OPDS file")->required();
    cmd->add_option("--out", opt.out, "output checkpoint path")->required();
    cmd->add_option("--decoder", opt.decoder, "linear|nomad")
        ->check(CLI::IsMember({"linear", "nomad"}));
    cmd->add_option("--latent", opt.latent, "latent dimension n");
    cmd->add_option("--iterations", opt.iterations, "training iterations (default per benchmark)");
    cmd->add_option("--batch", opt.batch, "minibatch size");
    cmd->add_option("--lr", opt.lr, "initial learning rate");
    cmd->add_option("--decay-rate", opt.decay_rate, "learning-rate decay factor");
    cmd->add_option("--decay-every", opt.decay_every, "iterations between decays");
    cmd->add_option("--seed", opt.seed, "initialization + sampling seed");
    cmd->add_option("--width", opt.width, "hidden width of both nets");
    cmd->add_option("--depth", opt.depth, "dense layers per net");
    cmd->add_option("--preset", opt.preset, "paper|desk iteration defaults")
        ->check(CLI::IsMember({"paper", "desk"}));
    return cmd;
}

void run_train(CLI::App* cmd, const TrainOptions& opt) {
    Timer timer;
    const OperatorDataset ds = read_dataset(opt.data);
    long iterations = opt.iterations;
    if (iterations < 0) iterations = default_iterations(ds.benchmark, opt.preset);

    const ModelSpec spec = default_spec(decoder_kind_from_name(opt.decoder), opt.latent, ds.m(),
                                        ds.d_u, ds.d_s, ds.d_y, opt.width, opt.depth);
    OperatorModel model = build_model(spec, mix_seed(opt.seed, 11));
    fit_normalization(model, ds);

    TrainConfig tc;
    tc.iterations = iterations;
    tc.batch_size = opt.batch;
    tc.lr = LrSchedule{opt.lr, opt.decay_rate, opt.decay_every};
    tc.seed = mix_seed(opt.seed, 13);

    std::printf("training %s decoder, n=%ld, %zu parameters, %ld iterations\n", opt.decoder.c_str(),
                opt.latent, model.param_count(), iterations);
    std::fflush(stdout);
    const TrainResult result = train(model, ds, tc);
    write_checkpoint(model, opt.out);
    write_loss_csv(result.loss_history, opt.out + ".loss.csv");
    write_manifest(cmd, opt.out, timer.seconds());
    std::printf("wrote %s (%zu parameters, %.2f minutes)\n", opt.out.c_str(), model.param_count(),
                timer.seconds() / 60.0);
}

// ---- eval ----

struct EvalOptions {
    std::string checkpoint;
    std::string data;
    std::string out;
};

CLI::App* add_eval(CLI::App& app, EvalOptions& opt) {
    CLI::App* cmd = make_subcommand(app, "eval", "Evaluate a checkpoint on a dataset");
    cmd->add_option("--checkpoint", opt.checkpoint, "model checkpoint")->required();
    cmd->add_option("--data", opt.data, "evaluation OPDS file")->required();
    cmd->add_option("--out", opt.out, "output error CSV")->required();
    return cmd;
}

void run_eval(CLI::App* cmd, const EvalOptions& opt) {
    Timer timer;
    const OperatorModel model = read_checkpoint(opt.checkpoint);
    const OperatorDataset ds = read_dataset(opt.data);
    const ErrorStats stats = relative_l2(model, ds);
    write_error_csv(stats, opt.out);
    write_manifest(cmd, opt.out, timer.seconds());
    std::printf("mean_rel_l2=%.6g std=%.6g worst_case_index=%ld excluded=%ld\n", stats.mean,
                stats.stddev, stats.worst_case_index, stats.excluded_zero_norm);
    for (std::size_t c = 0; c < stats.channel_mean.size(); ++c)
        std::printf("channel %zu mean_rel_l2=%.6g\n", c, stats.channel_mean[c]);
}

// ---- pca ----

struct PcaOptions {
    std::string data;
    std::string out;
    std::string project;
};

CLI::App* add_pca(CLI::App& app, PcaOptions& opt) {
    CLI::App* cmd = make_subcommand(app, "pca", "PCA spectrum of a dataset's output functions");
    cmd->add_option("--data", opt.data, "OPDS file")->required();
    cmd->add_option("--out", opt.out, "output spectrum CSV")->required();
    cmd->add_option("--project", opt.project, "also write top-3 projection coordinates CSV");
    return cmd;
}

void run_pca(CLI::App* cmd, const PcaOptions& opt) {
    Timer timer;
    const OperatorDataset ds = read_dataset(opt.data);
    const RealMatrix outputs = stack_outputs(ds);
    const long n_project = opt.project.empty() ? 0 : 3;
    const PcaSpectrum spec = pca_spectrum(outputs, ds.query_cell_weight(), n_project);
    write_spectrum_csv(spec, opt.out);
    if (n_project > 0) write_projection_csv(spec, opt.project);
    write_manifest(cmd, opt.out, timer.seconds());
    std::printf("wrote %s: %zu eigenvalues, lambda_1=%.6g\n", opt.out.c_str(),
                spec.eigenvalues.size(), spec.eigenvalues.empty() ? 0.0 : spec.eigenvalues[0]);
}

// ---- sweep ----

struct SweepOptions {
    std::string benchmark;
    std::string train_data;
    std::string test_data;
    std::string out;
    std::string kinds = "linear,nomad";
    std::string ns = "1,2,4,8,16,32";
    std::string seeds = "0,1,2,3,4,5,6,7,8,9";
    long iterations = -1;
    long batch = 100;
    double lr = 1e-3;
    double decay_rate = 0.99;
    long decay_every = 100;
    long width = 100;
    long depth = 5;
    std::string preset = "paper";
    std::uint64_t gen_seed_train = 1;
    std::uint64_t gen_seed_test = 2;
    long gen_n = -1;
    bool timing = false;
};

CLI::App* add_sweep(CLI::App& app, SweepOptions& opt) {
    CLI::App* cmd = make_subcommand(app, "sweep", "Latent-dimension sweep over kinds and seeds");
    cmd->add_option("--benchmark", opt.benchmark,
                    "benchmark to generate datasets for (when --train-data is not given)");
    cmd->add_option("--train-data", opt.train_data, "reuse an existing training OPDS file");
    cmd->add_option("--test-data", opt.test_data, "reuse an existing test OPDS file");
    cmd->add_option("--out", opt.out, "output sweep CSV")->required();
    cmd->add_option("--kinds", opt.kinds, "comma list of decoder kinds");
    cmd->add_option("--ns", opt.ns, "comma list of latent dimensions");
    cmd->add_option("--seeds", opt.seeds, "comma list of experiment seeds");
    cmd->add_option("--iterations", opt.iterations, "training iterations per run");
    cmd->add_option("--batch", opt.batch, "minibatch size");
    cmd->add_option("--lr", opt.lr, "initial learning rate");
    cmd->add_option("--decay-rate", opt.decay_rate, "learning-rate decay factor");
    cmd->add_option("--decay-every", opt.decay_every, "iterations between decays");
    cmd->add_option("--width", opt.width, "hidden width of both nets");
    cmd->add_option("--depth", opt.depth, "dense layers per net");
    cmd->add_option("--preset", opt.preset, "paper|desk defaults for generated datasets")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--gen-seed-train", opt.gen_seed_train, "seed for generated training data");
    cmd->add_option("--gen-seed-test", opt.gen_seed_test, "seed for generated test data");
    cmd->add_option("--gen-n", opt.gen_n, "samples per generated dataset");
    cmd->add_flag("--timing", opt.timing, "record wall-clock training time in the CSV");
    return cmd;
}

void run_sweep(CLI::App* cmd, const SweepOptions& opt, int& rc) {
    Timer timer;
    if (parse_long_list(opt.ns).empty()) throw ConfigError("sweep: empty latent-dimension list");

    OperatorDataset train_ds, test_ds;
    if (!opt.train_data.empty()) {
        if (opt.test_data.empty())
            throw ConfigError("sweep: --test-data is required with --train-data");
        train_ds = read_dataset(opt.train_data);
        test_ds = read_dataset(opt.test_data);
    } else {
        if (opt.benchmark.empty())
            throw ConfigError("sweep: give either --train-data/--test-data or --benchmark");
        GenOptions gen;
        gen.benchmark = opt.benchmark;
        gen.preset = opt.preset;
        gen.n = opt.gen_n;
        gen.seed = opt.gen_seed_train;
        train_ds = run_generator(gen);
        gen.seed = opt.gen_seed_test;
        if (benchmark_from_name(opt.benchmark) == Benchmark::shallow_water)
            gen.full_grid = true;  // test error on the full-resolution lattice
        test_ds = run_generator(gen);
    }

    SweepConfig cfg;
    {
        std::stringstream ss(opt.kinds);
        std::string item;
        while (std::getline(ss, item, ',')) cfg.kinds.push_back(decoder_kind_from_name(item));
    }
    cfg.latent_dims = parse_long_list(opt.ns);
    for (long s : parse_long_list(opt.seeds)) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    cfg.train.iterations =
        opt.iterations < 0 ? default_iterations(train_ds.benchmark, opt.preset) : opt.iterations;
    cfg.train.batch_size = opt.batch;
    cfg.train.lr = LrSchedule{opt.lr, opt.decay_rate, opt.decay_every};
    cfg.width = opt.width;
    cfg.depth = opt.depth;

    const SweepResult result = latent_sweep(train_ds, test_ds, cfg);
    write_sweep_csv(result, opt.out, opt.timing);
    write_manifest(cmd, opt.out, timer.seconds());
    long failed = 0;
    for (const auto& row : result.rows) failed += row.failed ? 1 : 0;
    std::printf("wrote %s: %zu rows, %ld failed\n", opt.out.c_str(), result.rows.size(), failed);
    if (failed != 0) rc = kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"operator-learning laboratory: linear and nonlinear decoder experiments"};
    app.set_config("--config", "", "key=value manifest to replay");

    GenOptions gen_opt;
    TrainOptions train_opt;
    EvalOptions eval_opt;
    PcaOptions pca_opt;
    SweepOptions sweep_opt;
    CLI::App* gen_cmd = add_gen(app, gen_opt);
    CLI::App* train_cmd = add_train(app, train_opt);
    CLI::App* eval_cmd = add_eval(app, eval_opt);
    CLI::App* pca_cmd = add_pca(app, pca_opt);
    CLI::App* sweep_cmd = add_sweep(app, sweep_opt);

    int rc = kExitOk;
    try {
        app.parse(argc, argv);
        int selected = 0;
        if (gen_cmd->parsed()) {
            run_gen(gen_cmd, gen_opt);
            ++selected;
        }
        if (train_cmd->parsed()) {
            run_train(train_cmd, train_opt);
            ++selected;
        }
        if (eval_cmd->parsed()) {
            run_eval(eval_cmd, eval_opt);
            ++selected;
        }
        if (pca_cmd->parsed()) {
            run_pca(pca_cmd, pca_opt);
            ++selected;
        }
        if (sweep_cmd->parsed()) {
            run_sweep(sweep_cmd, sweep_opt, rc);
            ++selected;
        }
        if (selected == 0) {
            std::fprintf(stderr, "error: no command given (gen|train|eval|pca|sweep)\n");
            return kExitUsage;
        }
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const TrainingError& e) {
        std::fprintf(stderr, "training failed: %s\n", e.what());
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return rc;
}
