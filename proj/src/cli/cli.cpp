#include "nam/cli.hpp"

#include "nam/bench.hpp"
#include "nam/engine.hpp"
#include "nam/errors.hpp"
#include "nam/eval.hpp"
#include "nam/io.hpp"
#include "nam/losses.hpp"
#include "nam/random.hpp"
#include "nam/synth.hpp"
#include "nam/weight_file.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>

namespace fs = std::filesystem;

namespace nam {

namespace {

struct TrainArgs {
    std::string gen, data, out;
    std::uint64_t seed = 0;
    std::size_t epochs = 200, batch = 16, subset = 2000, threads = 1;
    float lr_z = 0.03f, lr_t = 0.001f;
    std::size_t f_width = 8, scales = 3;
    std::optional<std::size_t> latent_dim;
    std::string loss = "l1";
    bool skip = false;
    float lr_decay = 1.0f, lr_decay_t = 1.0f, lr_decay_power_t = 1.0f;
    float latent_bound = 0.0f;
};

struct InferArgs {
    std::string gen, mapper, data, out;
    std::uint64_t seed = 0;
    std::size_t n_inits = 8, steps = 500, threads = 1;
    std::optional<std::size_t> subset;
    float lr_z = 0.03f, latent_bound = 0.0f;
    std::string loss = "l1";
};

struct GenArgs {
    std::string kind = "blob", transform = "identity", out;
    std::size_t n = 500, latent_dim = 8, classes = 0, size = 0;
    std::uint64_t seed = 0;
};

struct PairsArgs {
    std::string gen, data, latents, out;
};

struct BenchArgs {
    std::string task;
    std::optional<std::string> out;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    bool quick = false;
};

struct ReportArgs {
    std::vector<std::string> inputs;
    std::optional<std::string> out;
};

void add_common_config(CLI::App* cmd) {
    // Consumed by run_cli before parsing; registered so --help lists it.
    cmd->add_option("--config", "flat key=value file; explicit flags override it");
}

void check_threads(std::size_t threads) {
    if (threads == 0) throw Error("--threads must be at least 1");
}

std::vector<Tensor> take(const std::vector<Tensor>& images, std::optional<std::size_t> limit) {
    if (!limit || *limit >= images.size()) return images;
    return {images.begin(), images.begin() + static_cast<std::ptrdiff_t>(*limit)};
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    check_threads(a.threads);
    const auto gen_bytes = read_file_bytes(a.gen);
    std::shared_ptr<const Generator> gen = load_generator(decode_weights(gen_bytes));
    if (a.latent_dim && *a.latent_dim != gen->latent_dim()) {
        throw Error("--latent-dim " + std::to_string(*a.latent_dim) + " does not match the generator (" +
                    std::to_string(gen->latent_dim()) + ")");
    }
    const Dataset data = read_dataset(a.data);
    if (data.images.empty()) throw Error("dataset '" + a.data + "' is empty");

    TrainConfig cfg;
    cfg.seed = a.seed;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.subset = a.subset;
    cfg.lr_latent = a.lr_z;
    cfg.lr_mapper = a.lr_t;
    cfg.latent_decay.final_fraction = a.lr_decay;
    cfg.mapper_decay = {a.lr_decay_t, a.lr_decay_power_t};
    cfg.latent_bound = a.latent_bound;
    cfg.loss.mode = parse_loss_mode(a.loss);
    cfg.mapper.base_width = a.f_width;
    cfg.mapper.scales = a.scales;
    cfg.mapper.skip = a.skip;
    cfg.threads = a.threads;

    const TrainState st =
        nam_train(data.images, gen, cfg, [&](const EpochStats& s) { out << format_epoch_line(s, true) << '\n'; });

    fs::create_directories(a.out);
    const fs::path dir(a.out);
    save_weights(dir / "mapper.namw", st.mapper.parameters());
    save_weights(dir / "latents.namw", latent_table(st));
    std::ofstream log(dir / "train_log.tsv", std::ios::binary | std::ios::trunc);
    log << "epoch\tmean_loss\tmean_latent_norm\n";
    for (const auto& s : st.history) log << format_epoch_line(s) << '\n';
    if (!log) throw Error("failed writing " + (dir / "train_log.tsv").string());

    if (read_file_bytes(a.gen) != gen_bytes) throw Error("generator file '" + a.gen + "' changed during training");
    out << "wrote " << (dir / "mapper.namw").string() << ", latents.namw, train_log.tsv\n";
    return kExitOk;
}

int cmd_infer(const InferArgs& a, std::ostream& out) {
    check_threads(a.threads);
    if (a.n_inits == 0) throw Error("--n-inits must be at least 1");
    auto gen = load_generator(a.gen);
    const Mapper mapper = Mapper::from_weights(load_weights(a.mapper));
    const Dataset data = read_dataset(a.data);
    const auto ys = take(data.images, a.subset);
    if (ys.empty()) throw Error("no targets in '" + a.data + "'");

    InferConfig ic;
    ic.steps = a.steps;
    ic.lr = a.lr_z;
    ic.latent_bound = a.latent_bound;
    ic.seed = a.seed;
    ic.loss.mode = parse_loss_mode(a.loss);
    ic.threads = a.threads;
    const auto results = nam_infer_all(ys, *gen, mapper, a.n_inits, ic);

    std::size_t kept = a.n_inits;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].records.empty()) {
            throw NumericError("every initialization diverged for target " + std::to_string(i));
        }
        kept = std::min(kept, results[i].records.size());
    }

    const std::size_t d = gen->latent_dim(), t = results.size();
    std::vector<float> zs, losses, ids;
    Dataset synth;
    std::vector<std::vector<Tensor>> grid;
    fs::create_directories(a.out);
    const fs::path dir(a.out);
    std::ofstream table(dir / "infer.tsv", std::ios::binary | std::ios::trunc);
    table << "target\trank\tinit\tloss\tinitial_loss\n";
    for (std::size_t i = 0; i < t; ++i) {
        std::vector<Tensor> row{ys[i]};
        for (std::size_t k = 0; k < kept; ++k) {
            const auto& r = results[i].records[k];
            zs.insert(zs.end(), r.z.begin(), r.z.end());
            losses.push_back(r.loss);
            ids.push_back(static_cast<float>(r.init_id));
            synth.images.push_back(r.synthesized);
            row.push_back(r.synthesized);
            table << i << '\t' << k << '\t' << r.init_id << '\t' << r.loss << '\t' << r.initial_loss << '\n';
        }
        grid.push_back(std::move(row));
    }
    if (!table) throw Error("failed writing " + (dir / "infer.tsv").string());
    save_weights(dir / "infer.namw", {{"latents", Tensor::from({t, kept, d}, zs)},
                                      {"losses", Tensor::from({t, kept}, losses)},
                                      {"init_ids", Tensor::from({t, kept}, ids)}});
    write_dataset(dir / "synthesized.namd", synth);
    write_grid(dir / "grid.ppm", grid);

    std::vector<double> best;
    std::size_t failed = 0;
    for (const auto& r : results) {
        best.push_back(r.best().loss);
        failed += r.failed;
    }
    out << "targets " << t << ", kept " << kept << " per target, median best loss " << median(best)
        << ", failed runs " << failed << '\n';
    return kExitOk;
}

std::unique_ptr<Generator> make_generator(const GenArgs& a) {
    if (a.kind == "blob" || a.kind == "blob-level") {
        return std::make_unique<BlobGenerator>(BlobConfig{a.size ? a.size : 16, a.kind == "blob-level"});
    }
    if (a.kind == "bar") return std::make_unique<OrientedBarGenerator>(BarConfig{a.size ? a.size : 32});
    if (a.kind == "conv") {
        if (a.size && a.size != 16) throw Error("conv generators produce 16x16 images only");
        return std::make_unique<ConvGenerator>(
            ConvGeneratorConfig{.latent_dim = a.latent_dim, .seed = derive_seed(a.seed, 3)});
    }
    throw Error("unknown generator kind '" + a.kind + "' (expected blob, blob-level, bar or conv)");
}

Dataset to_dataset(std::vector<Tensor> images, const std::vector<std::size_t>& labels) {
    Dataset ds;
    ds.images = std::move(images);
    for (auto l : labels) ds.labels.push_back(static_cast<std::uint32_t>(l));
    return ds;
}

int cmd_gen_domain(const GenArgs& a, std::ostream& out) {
    if (a.n == 0) throw Error("--n must be positive");
    const auto gen = make_generator(a);
    const DomainTransform transform{parse_transform(a.transform)};
    Dataset xs, ys;
    std::vector<std::vector<float>> truth;
    if (a.classes > 0) {
        const auto* blob = dynamic_cast<const BlobGenerator*>(gen.get());
        if (!blob) throw Error("--classes is only available for blob generators");
        const auto ly = sample_blob_classes(*blob, a.n, a.classes, derive_seed(a.seed, 1));
        std::vector<Tensor> images;
        for (const auto& img : render(*gen, ly.latents)) images.push_back(transform.apply(img));
        ys = to_dataset(std::move(images), ly.labels);
        truth = ly.latents;
        const auto lx = sample_blob_classes(*blob, a.n, a.classes, derive_seed(a.seed, 2));
        xs = to_dataset(render(*gen, lx.latents), lx.labels);
    } else {
        auto pair = make_domain_pair(*gen, transform, a.n, derive_seed(a.seed, 1));
        ys.images = std::move(pair.ys);
        truth = std::move(pair.latents);
        Rng rng(derive_seed(a.seed, 2));
        std::vector<std::vector<float>> lx;
        for (std::size_t i = 0; i < a.n; ++i) lx.push_back(rng.normal_vector(gen->latent_dim()));
        xs.images = render(*gen, lx);
    }
    std::vector<float> flat;
    for (const auto& z : truth) flat.insert(flat.end(), z.begin(), z.end());

    fs::create_directories(a.out);
    const fs::path dir(a.out);
    save_weights(dir / "generator.namw", gen->parameters());
    write_dataset(dir / "y.namd", ys);
    write_dataset(dir / "x.namd", xs);
    save_weights(dir / "truth.namw", {{"latents", Tensor::from({a.n, gen->latent_dim()}, flat)}});
    out << "wrote " << a.n << " " << gen->kind() << " samples (" << a.transform << ") to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_export_pairs(const PairsArgs& a, std::ostream& out) {
    auto gen = load_generator(a.gen);
    const Dataset data = read_dataset(a.data);
    const auto table = load_weights(a.latents);
    const Tensor& z = find_tensor(table, "latents");
    const Tensor& index = find_tensor(table, "latents.index");
    if (z.rank() != 2 || z.dim(1) != gen->latent_dim() || index.numel() != z.dim(0)) {
        throw FormatError("latent table '" + a.latents + "' does not fit the generator");
    }
    const std::size_t n = z.dim(0), d = z.dim(1);
    Dataset xs, ys;
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = static_cast<std::size_t>(index.at(i));
        if (src >= data.images.size()) {
            throw FormatError("latent table refers to sample " + std::to_string(src) + " but '" + a.data + "' has " +
                              std::to_string(data.images.size()));
        }
        std::vector<float> zi(z.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                              z.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
        xs.images.push_back(gen->forward(Tensor::from({d}, std::move(zi))).detach());
        ys.images.push_back(data.images[src]);
        if (data.has_labels()) {
            xs.labels.push_back(data.labels[src]);
            ys.labels.push_back(data.labels[src]);
        }
    }
    fs::create_directories(a.out);
    const fs::path dir(a.out);
    write_dataset(dir / "pairs_x.namd", xs);
    write_dataset(dir / "pairs_y.namd", ys);
    out << "wrote " << n << " pairs to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    check_threads(a.threads);
    BenchOptions opts;
    opts.seed = a.seed;
    opts.threads = a.threads;
    opts.quick = a.quick;
    if (a.out) opts.out = fs::path(*a.out);
    const Report r = run_bench(a.task, opts);
    out << "# " << r.task << " seed " << a.seed << '\n';
    write_report(out, r.metrics);
    return kExitOk;
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
    std::vector<fs::path> files;
    for (const auto& in : a.inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p))
                if (e.path().extension() == ".json") found.push_back(e.path());
            std::sort(found.begin(), found.end());
            if (found.empty()) throw Error("no .json results in '" + in + "'");
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.push_back(p);
        }
    }
    std::ofstream sink;
    if (a.out) {
        fs::create_directories(*a.out);
        sink.open(fs::path(*a.out) / "report.tsv", std::ios::binary | std::ios::trunc);
        if (!sink) throw Error("cannot write report into '" + *a.out + "'");
        sink << "task\tmetric\tvalue\tn\tmean\n";
    }
    for (const auto& f : files) {
        const Report r = load_report(f);
        out << "# " << r.task;
        for (const auto& [k, v] : r.notes) out << ' ' << k << '=' << v;
        out << '\n';
        write_report(out, r.metrics);
        if (sink.is_open()) {
            for (const auto& m : r.metrics) sink << r.task << '\t' << m.name << '\t' << m.value << '\t' << m.n << '\t' << m.mean << '\n';
        }
    }
    return kExitOk;
}

// Puts config-file tokens right after the subcommand so later flags win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> rest;
    std::optional<std::string> config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    if (!config || rest.empty()) return rest;
    auto tokens = config_file_tokens(*config);
    std::vector<std::string> out{rest.front()};
    out.insert(out.end(), tokens.begin(), tokens.end());
    out.insert(out.end(), rest.begin() + 1, rest.end());
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> config_file_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file '" + path + "'");
    std::vector<std::string> tokens;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = trim(line.substr(0, eq));
        std::replace(key.begin(), key.end(), '_', '-');
        if (key.empty() || key == "config") throw FormatError(path + ":" + std::to_string(lineno) + ": bad key");
        tokens.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
    }
    return tokens;
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Non-adversarial domain mapping: train, infer and evaluate", "nam"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "fit the mapper and one latent per target image");
    train->add_option("--gen", ta.gen, "generator weight file")->required();
    train->add_option("--data", ta.data, "target images (NAMD)")->required();
    train->add_option("--out", ta.out, "output directory")->required();
    train->add_option("--seed", ta.seed);
    train->add_option("--epochs", ta.epochs)->capture_default_str();
    train->add_option("--batch", ta.batch)->capture_default_str();
    train->add_option("--lr-z", ta.lr_z, "latent learning rate")->capture_default_str();
    train->add_option("--lr-t", ta.lr_t, "mapper learning rate")->capture_default_str();
    train->add_option("--f-width", ta.f_width, "mapper base width F")->capture_default_str();
    train->add_option("--scales", ta.scales, "mapper scale count")->capture_default_str();
    train->add_option("--latent-dim", ta.latent_dim, "checked against the generator");
    train->add_option("--loss", ta.loss)->check(CLI::IsMember({"l1", "perceptual", "gram"}))->capture_default_str();
    train->add_flag("--skip", ta.skip, "residual mapper (input added to the output)");
    train->add_option("--subset", ta.subset, "cap on training images")->capture_default_str();
    train->add_option("--threads", ta.threads)->capture_default_str();
    train->add_option("--lr-decay", ta.lr_decay, "final fraction of the latent learning rate (geometric decay, 1 = constant)")->capture_default_str();
    train->add_option("--lr-decay-t", ta.lr_decay_t, "final fraction of the mapper learning rate")->capture_default_str();
    train->add_option("--lr-decay-power-t", ta.lr_decay_power_t, "exponent of the mapper decay curve")
        ->capture_default_str();
    train->add_option("--latent-bound", ta.latent_bound, "clamp latents to [-b, b]; 0 = off")->capture_default_str();
    add_common_config(train);

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "recover latents for target images with the mapper fixed");
    infer->add_option("--gen", ia.gen)->required();
    infer->add_option("--mapper", ia.mapper)->required();
    infer->add_option("--data", ia.data)->required();
    infer->add_option("--out", ia.out)->required();
    infer->add_option("--seed", ia.seed);
    infer->add_option("--n-inits", ia.n_inits)->capture_default_str();
    infer->add_option("--steps", ia.steps)->capture_default_str();
    infer->add_option("--lr-z", ia.lr_z)->capture_default_str();
    infer->add_option("--loss", ia.loss)->check(CLI::IsMember({"l1", "perceptual", "gram"}))->capture_default_str();
    infer->add_option("--subset", ia.subset, "only the first N targets");
    infer->add_option("--threads", ia.threads)->capture_default_str();
    infer->add_option("--latent-bound", ia.latent_bound)->capture_default_str();
    add_common_config(infer);

    GenArgs ga;
    auto* gen = app.add_subcommand("gen-domain", "render a synthetic domain pair");
    gen->add_option("--kind", ga.kind, "blob, blob-level, bar or conv")->capture_default_str();
    gen->add_option("--transform", ga.transform, "identity, edge, invert, blur or colorize")->capture_default_str();
    gen->add_option("--n", ga.n)->capture_default_str();
    gen->add_option("--latent-dim", ga.latent_dim, "conv generators only")->capture_default_str();
    gen->add_option("--classes", ga.classes, "label blob targets by horizontal band");
    gen->add_option("--size", ga.size, "image side (default 16 for blobs, 32 for bars)");
    gen->add_option("--seed", ga.seed);
    gen->add_option("--out", ga.out)->required();
    add_common_config(gen);

    PairsArgs pa;
    auto* pairs = app.add_subcommand("export-pairs", "write (G(z_y), y) pairs from a training run");
    pairs->add_option("--gen", pa.gen)->required();
    pairs->add_option("--data", pa.data, "the training targets")->required();
    pairs->add_option("--latents", pa.latents, "latents.namw from train")->required();
    pairs->add_option("--out", pa.out)->required();
    add_common_config(pairs);

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "run a fixed-seed evaluation task");
    bench->add_option("task", ba.task)->required()->check(CLI::IsMember(bench_tasks()));
    bench->add_option("--seed", ba.seed);
    bench->add_option("--threads", ba.threads)->capture_default_str();
    bench->add_option("--out", ba.out, "directory for the results file and artifacts");
    bench->add_flag("--quick", ba.quick, "tiny sizes for smoke runs");
    add_common_config(bench);

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "print results files written by bench");
    report->add_option("inputs", ra.inputs, "result files or directories")->required();
    report->add_option("--out", ra.out, "also write report.tsv here");

    std::vector<std::string> args;
    try {
        args = expand_config(raw_args);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    std::vector<const char*> argv{"nam"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train) return cmd_train(ta, out);
        if (*infer) return cmd_infer(ia, out);
        if (*gen) return cmd_gen_domain(ga, out);
        if (*pairs) return cmd_export_pairs(pa, out);
        if (*bench) return cmd_bench(ba, out);
        if (*report) return cmd_report(ra, out);
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace nam
