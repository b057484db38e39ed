#include "nam/bench.hpp"

#include "nam/errors.hpp"
#include "nam/losses.hpp"
#include "nam/matching.hpp"
#include "nam/random.hpp"
#include "nam/synth.hpp"
#include "nam/weight_file.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace nam {

namespace {

// Stream ids so each stage of a task draws from its own seed.
enum : std::uint64_t {
    kDomain = 1,
    kTrain = 2,
    kTest = 3,
    kInfer = 4,
    kPrior = 5,
    kClassifier = 6,
    kMatch = 7,
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

Metric scalar_metric(std::string name, double value, std::size_t n) {
    Metric m;
    m.name = std::move(name);
    m.value = value;
    m.mean = value;
    m.n = n;
    return m;
}

struct TrainOutcome {
    TrainState state;
    std::size_t violations = 0;  // epoch-average increases after the warmup
    std::size_t checked = 0;
    double reconstruction = 0.0;
};

constexpr std::size_t kMonotoneWarmup = 20;

TrainOutcome train_and_measure(const std::vector<Tensor>& ys, std::shared_ptr<const Generator> gen,
                               const TrainConfig& cfg) {
    TrainOutcome out;
    double prev = 0.0;
    out.state = nam_train(ys, std::move(gen), cfg, [&](const EpochStats& s) {
        if (s.epoch > kMonotoneWarmup) {
            ++out.checked;
            if (s.mean_loss > prev) ++out.violations;
        }
        prev = s.mean_loss;
    });
    const auto& st = out.state;
    double total = 0.0;
    for (std::size_t i = 0; i < st.images.size(); ++i) {
        Tensor x = st.generator->forward(st.latents[i].z.detach());
        total += pixel_l1(st.mapper.forward(x), st.images[i]).item();
    }
    out.reconstruction = total / static_cast<double>(st.images.size());
    return out;
}

void write_training_artifacts(const std::filesystem::path& dir, const TrainState& st, const std::string& prefix) {
    std::filesystem::create_directories(dir);
    save_weights(dir / (prefix + "mapper.namw"), st.mapper.parameters());
    save_weights(dir / (prefix + "latents.namw"), latent_table(st));
    std::ofstream log(dir / (prefix + "train_log.tsv"), std::ios::binary | std::ios::trunc);
    log << "epoch\tmean_loss\tmean_latent_norm\n";
    for (const auto& s : st.history) log << format_epoch_line(s) << '\n';
    if (!log) throw Error("failed writing the training log in " + dir.string());
}

std::vector<std::vector<float>> training_truth(const TrainState& st, const DomainPair& pair) {
    std::vector<std::vector<float>> out;
    for (auto i : st.source_indices) out.push_back(pair.latents[i]);
    return out;
}

std::vector<std::vector<float>> training_latents(const TrainState& st) {
    std::vector<std::vector<float>> out;
    for (const auto& l : st.latents) out.emplace_back(l.z.data().begin(), l.z.data().end());
    return out;
}

InferConfig infer_config(const BenchOptions& opts, std::size_t steps, float bound) {
    InferConfig ic;
    ic.steps = opts.quick ? std::min<std::size_t>(steps, 20) : steps;
    ic.latent_bound = bound;
    ic.seed = derive_seed(opts.seed, kInfer);
    ic.threads = opts.threads;
    return ic;
}

double euclid(std::span<const float> a, std::span<const float> b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) d += (static_cast<double>(a[k]) - b[k]) * (static_cast<double>(a[k]) - b[k]);
    return std::sqrt(d);
}

}  // namespace

TrainConfig blob_train_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 200;
    cfg.batch_size = 8;
    cfg.lr_latent = 0.3f;
    cfg.lr_mapper = 0.01f;
    cfg.latent_decay = {0.01f, 1.0f};
    cfg.mapper_decay = {0.0003f, 0.7f};
    cfg.latent_bound = 2.0f;
    cfg.mapper.base_width = 8;
    cfg.mapper.scales = 2;
    return cfg;
}

const Metric& find_metric(const Report& report, const std::string& name) {
    for (const auto& m : report.metrics)
        if (m.name == name) return m;
    throw Error("report '" + report.task + "' has no metric '" + name + "'");
}

std::vector<std::string> bench_tasks() { return {"blob-invert", "blob-edge", "bar-orient", "class-proxy", "match-perm"}; }

Report run_bench(const std::string& task, const BenchOptions& opts) {
    Report r;
    if (task == "blob-invert") {
        r = bench_blob_invert(opts);
    } else if (task == "blob-edge") {
        r = bench_blob_edge(opts);
    } else if (task == "bar-orient") {
        r = bench_bar_orient(opts);
    } else if (task == "class-proxy") {
        r = bench_class_proxy(opts);
    } else if (task == "match-perm") {
        r = bench_match_perm(opts);
    } else {
        std::string known;
        for (const auto& t : bench_tasks()) known += (known.empty() ? "" : ", ") + t;
        throw Error("unknown bench task '" + task + "' (expected one of " + known + ")");
    }
    r.notes["seed"] = std::to_string(opts.seed);
    r.notes["quick"] = opts.quick ? "1" : "0";
    if (opts.out) {
        std::filesystem::create_directories(*opts.out);
        save_report(*opts.out / (task + ".json"), r);
    }
    return r;
}

// ---------------------------------------------------------------------------

Report bench_blob_invert(const BenchOptions& opts) {
    const std::size_t n = opts.quick ? 40 : 500, n_test = opts.quick ? 4 : 50;
    auto gen = std::make_shared<BlobGenerator>(BlobConfig{16});
    const DomainTransform invert{TransformKind::invert};
    const auto pair = make_domain_pair(*gen, invert, n, derive_seed(opts.seed, kDomain));

    TrainConfig cfg = blob_train_config(derive_seed(opts.seed, kTrain));
    cfg.threads = opts.threads;
    if (opts.quick) cfg.epochs = 25;
    auto trained = train_and_measure(pair.ys, gen, cfg);
    if (opts.out) write_training_artifacts(*opts.out, trained.state, "blob-invert.");

    const auto test = make_domain_pair(*gen, invert, n_test, derive_seed(opts.seed, kTest));
    const auto results = nam_infer_all(test.ys, *gen, trained.state.mapper, 8, infer_config(opts, 300, cfg.latent_bound));
    Metric rec = latent_recovery_error(*gen, results, test.latents, {0, 1});
    rec.name = "center_recovery_error";
    Metric prior = random_prior_error(*gen, test.latents, {0, 1}, 1000, derive_seed(opts.seed, kPrior));
    prior.name = "random_prior_center_error";
    Metric train_rec = latent_recovery_error(*gen, training_latents(trained.state), training_truth(trained.state, pair), {0, 1});
    train_rec.name = "train_center_error";

    Report r;
    r.task = "blob-invert";
    const auto& h = trained.state.history;
    r.metrics.push_back(scalar_metric("initial_epoch_loss", h.front().mean_loss, n));
    r.metrics.push_back(scalar_metric("final_epoch_loss", h.back().mean_loss, n));
    r.metrics.push_back(scalar_metric("reconstruction_l1", trained.reconstruction, n));
    r.metrics.push_back(scalar_metric("monotone_violations", static_cast<double>(trained.violations), trained.checked));
    r.metrics.push_back(train_rec);
    r.metrics.push_back(rec);
    r.metrics.push_back(prior);
    r.metrics.push_back(scalar_metric("prior_to_nam_ratio", prior.value / std::max(rec.value, 1e-12), n_test));
    r.notes["epochs"] = std::to_string(cfg.epochs);
    r.notes["n"] = std::to_string(n);
    return r;
}

Report bench_blob_edge(const BenchOptions& opts) {
    const std::size_t n = opts.quick ? 40 : 500, n_test = opts.quick ? 4 : 20, inits = 8;
    auto gen = std::make_shared<BlobGenerator>(BlobConfig{16, true});
    const DomainTransform edge{TransformKind::edge};
    const auto pair = make_domain_pair(*gen, edge, n, derive_seed(opts.seed, kDomain));

    TrainConfig cfg = blob_train_config(derive_seed(opts.seed, kTrain));
    cfg.threads = opts.threads;
    if (opts.quick) cfg.epochs = 25;
    auto trained = train_and_measure(pair.ys, gen, cfg);
    if (opts.out) write_training_artifacts(*opts.out, trained.state, "blob-edge.");

    const auto test = make_domain_pair(*gen, edge, n_test, derive_seed(opts.seed, kTest));
    std::vector<double> pairwise;
    for (std::size_t i = 0; i < test.latents.size(); ++i)
        for (std::size_t j = i + 1; j < test.latents.size(); ++j)
            pairwise.push_back(euclid(test.latents[i], test.latents[j]));
    const double delta = 0.5 * median(pairwise);

    const auto results = nam_infer_all(test.ys, *gen, trained.state.mapper, inits, infer_config(opts, 300, cfg.latent_bound));
    std::vector<double> counts;
    for (const auto& res : results) {
        const auto& best = res.best();
        std::vector<const InferenceRecord*> chosen{&best};
        for (const auto& rec : res.records) {
            if (&rec == &best || rec.loss > 1.1f * best.loss) continue;
            bool far = true;
            for (auto* c : chosen) far = far && euclid(rec.z, c->z) > delta;
            if (far) chosen.push_back(&rec);
        }
        counts.push_back(static_cast<double>(chosen.size()));
    }
    Metric diversity;
    diversity.name = "diversity_count";
    diversity.n = counts.size();
    diversity.value = median(counts);
    diversity.mean = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size());
    diversity.details = counts;
    const double frac =
        static_cast<double>(std::count_if(counts.begin(), counts.end(), [](double c) { return c >= 2.0; })) /
        static_cast<double>(counts.size());
    Metric center = latent_recovery_error(*gen, results, test.latents, {0, 1});
    center.name = "center_recovery_error";

    Report r;
    r.task = "blob-edge";
    r.metrics.push_back(scalar_metric("final_epoch_loss", trained.state.history.back().mean_loss, n));
    r.metrics.push_back(scalar_metric("reconstruction_l1", trained.reconstruction, n));
    r.metrics.push_back(diversity);
    r.metrics.push_back(scalar_metric("diverse_target_fraction", frac, counts.size()));
    r.metrics.push_back(scalar_metric("diversity_delta", delta, pairwise.size()));
    r.metrics.push_back(center);
    r.notes["inits"] = std::to_string(inits);
    return r;
}

Report bench_bar_orient(const BenchOptions& opts) {
    const std::size_t n = opts.quick ? 40 : 500, n_test = opts.quick ? 4 : 40, inits = 8;
    auto gen = std::make_shared<OrientedBarGenerator>(BarConfig{32});
    const DomainTransform blur{TransformKind::blur};
    const auto pair = make_domain_pair(*gen, blur, n, derive_seed(opts.seed, kDomain));

    TrainConfig cfg = blob_train_config(derive_seed(opts.seed, kTrain));
    cfg.threads = opts.threads;
    cfg.mapper.scales = 3;
    cfg.epochs = opts.quick ? 10 : 100;
    auto trained = train_and_measure(pair.ys, gen, cfg);
    if (opts.out) write_training_artifacts(*opts.out, trained.state, "bar-orient.");

    const auto test = make_domain_pair(*gen, blur, n_test, derive_seed(opts.seed, kTest));
    const InferConfig ic = infer_config(opts, 300, cfg.latent_bound);
    Metric nam = orientation_residual(*gen, nam_infer_all(test.ys, *gen, trained.state.mapper, inits, ic), test.latents);
    nam.name = "orientation_residual_deg";

    MapperConfig control_cfg = trained.state.mapper.config();
    Mapper control(control_cfg);
    Metric ctl = orientation_residual(*gen, nam_infer_all(test.ys, *gen, control, inits, ic), test.latents);
    ctl.name = "untrained_orientation_residual_deg";

    Report r;
    r.task = "bar-orient";
    r.metrics.push_back(scalar_metric("final_epoch_loss", trained.state.history.back().mean_loss, n));
    r.metrics.push_back(scalar_metric("reconstruction_l1", trained.reconstruction, n));
    r.metrics.push_back(nam);
    r.metrics.push_back(ctl);
    r.notes["epochs"] = std::to_string(cfg.epochs);
    return r;
}

Report bench_class_proxy(const BenchOptions& opts) {
    const std::size_t classes = 3, n_clean = opts.quick ? 60 : 600, n_gate = opts.quick ? 30 : 300;
    const std::size_t n = opts.quick ? 30 : 300;
    auto gen = std::make_shared<BlobGenerator>(BlobConfig{16});
    const DomainTransform invert{TransformKind::invert};
    Report r;
    r.task = "class-proxy";
    std::size_t wins = 0;
    double nam_sum = 0.0, nn_sum = 0.0;
    constexpr std::size_t kSeeds = 3;
    for (std::size_t s = 0; s < kSeeds; ++s) {
        const std::uint64_t seed = derive_seed(opts.seed, 100 + s);
        const auto clean = sample_blob_classes(*gen, n_clean, classes, derive_seed(seed, kClassifier));
        const auto held = sample_blob_classes(*gen, n_gate, classes, derive_seed(seed, kTest));
        const auto clean_x = render(*gen, clean.latents);
        ClassifierConfig cc;
        cc.classes = classes;
        if (opts.quick) cc.epochs = 2;
        ProxyClassifier clf(gen->output_shape(), cc);
        clf.train(clean_x, clean.labels);
        const double gate = clf.accuracy(render(*gen, held.latents), held.labels);
        if (!opts.quick && gate < kClassifierGate) {
            throw Error("class-proxy: classifier reached only " + fmt(gate) + " clean accuracy (gate " +
                        fmt(kClassifierGate) + ")");
        }

        const auto target = sample_blob_classes(*gen, n, classes, derive_seed(seed, kDomain));
        std::vector<Tensor> ys;
        for (const auto& x : render(*gen, target.latents)) ys.push_back(invert.apply(x));
        TrainConfig cfg = blob_train_config(derive_seed(seed, kTrain));
        cfg.threads = opts.threads;
        cfg.epochs = opts.quick ? 10 : 200;
        const TrainState st = nam_train(ys, gen, cfg);

        std::vector<Tensor> translated;
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < st.latents.size(); ++i) {
            translated.push_back(gen->forward(st.latents[i].z.detach()));
            labels.push_back(target.labels[st.source_indices[i]]);
        }
        Metric nam = proxy_classification_accuracy(translated, labels, clf);

        std::vector<Tensor> neighbours;
        for (auto j : nearest_neighbors(st.images, clean_x)) neighbours.push_back(clean_x[j]);
        Metric nn = proxy_classification_accuracy(neighbours, labels, clf);

        const std::string tag = "_seed" + std::to_string(s);
        r.metrics.push_back(scalar_metric("gate_accuracy" + tag, gate, n_gate));
        r.metrics.push_back(scalar_metric("nam_accuracy" + tag, nam.value, nam.n));
        r.metrics.push_back(scalar_metric("nn_accuracy" + tag, nn.value, nn.n));
        wins += nam.value > nn.value;
        nam_sum += nam.value;
        nn_sum += nn.value;
    }
    r.metrics.push_back(scalar_metric("nam_accuracy", nam_sum / kSeeds, kSeeds));
    r.metrics.push_back(scalar_metric("nn_accuracy", nn_sum / kSeeds, kSeeds));
    r.metrics.push_back(scalar_metric("seeds_nam_beats_nn", static_cast<double>(wins), kSeeds));
    return r;
}

Report bench_match_perm(const BenchOptions& opts) {
    constexpr std::size_t n = 6, kSeeds = 5;
    BlobGenerator gen(BlobConfig{16});
    const DomainTransform invert{TransformKind::invert};
    MatchConfig mc;
    if (opts.quick) mc.steps = 40;

    std::size_t oracle_agree = 0, simplex_violations = 0, steps_seen = 0;
    double inv_correct = 0.0;
    std::optional<MatchMatrix> last;
    for (std::size_t s = 0; s < kSeeds; ++s) {
        const std::uint64_t seed = derive_seed(opts.seed, 200 + s);
        const auto xs_pair = make_domain_pair(gen, DomainTransform{TransformKind::identity}, n, derive_seed(seed, kDomain));
        const auto& xs = xs_pair.ys;
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(derive_seed(seed, kMatch));
        rng.shuffle(perm.begin(), perm.end());

        std::vector<Tensor> ys, ys_inv;
        for (std::size_t i = 0; i < n; ++i) {
            ys.push_back(xs[perm[i]]);
            ys_inv.push_back(invert.apply(xs[perm[i]]));
        }
        auto watch = [&](std::size_t, const MatchMatrix& m) {
            ++steps_seen;
            simplex_violations += !rows_on_simplex(m);
        };

        mc.seed = derive_seed(seed, kMatch + 1);
        const auto ident = relaxed_match(xs, ys, std::nullopt, mc, watch);
        std::vector<double> cost(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = pixel_l1(xs[j], ys[i]).item();
        oracle_agree += assignment(ident.m) == brute_force_assignment(cost, n);

        MatchConfig learn = mc;
        learn.lr_mapper = 0.01f;
        MapperConfig tc;
        tc.base_width = 4;
        tc.scales = 2;
        tc.seed = derive_seed(seed, kMatch + 2);
        const auto fitted = relaxed_match(xs, ys_inv, Mapper(tc), learn, watch);
        const auto pick = assignment(fitted.m);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) hits += pick[i] == perm[i];
        inv_correct += static_cast<double>(hits) / n;
        last = fitted.m;
    }
    if (opts.out && last) {
        std::filesystem::create_directories(*opts.out);
        write_match_csv(*opts.out / "match-perm.M.csv", *last);
    }

    Report r;
    r.task = "match-perm";
    r.metrics.push_back(scalar_metric("identity_oracle_agreement", static_cast<double>(oracle_agree), kSeeds));
    r.metrics.push_back(scalar_metric("inverted_assignment_accuracy", inv_correct / kSeeds, kSeeds));
    r.metrics.push_back(scalar_metric("simplex_violations", static_cast<double>(simplex_violations), steps_seen));
    r.notes["n"] = std::to_string(n);
    return r;
}

}  // namespace nam
