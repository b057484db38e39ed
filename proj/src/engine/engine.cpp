#include "nam/engine.hpp"

#include "nam/errors.hpp"
#include "nam/ops.hpp"
#include "nam/random.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace nam {

std::string format_epoch_line(const EpochStats& s, bool with_time) {
    char buf[160];
    if (with_time) {
        std::snprintf(buf, sizeof buf, "%zu\t%.8g\t%.6g\t%.3f", s.epoch, s.mean_loss, s.mean_latent_norm, s.seconds);
    } else {
        std::snprintf(buf, sizeof buf, "%zu\t%.8g\t%.6g", s.epoch, s.mean_loss, s.mean_latent_norm);
    }
    return buf;
}

std::shared_ptr<const FeatureExtractor> default_features(const Shape& image_shape) {
    FeatureExtractorConfig fc;
    fc.in_channels = image_shape.at(0);
    fc.height = image_shape.at(1);
    fc.width = image_shape.at(2);
    return std::make_shared<FeatureExtractor>(fc);
}

namespace {

double latent_norm(const Tensor& z) {
    double s = 0.0;
    for (float v : z.data()) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

std::shared_ptr<const FeatureExtractor> resolve_features(const LossConfig& loss,
                                                         std::shared_ptr<const FeatureExtractor> given,
                                                         const Shape& target_shape) {
    if (loss.mode == LossMode::pixel_l1) return nullptr;
    auto f = given ? std::move(given) : default_features(target_shape);
    loss.validate(f->blocks());
    return f;
}

// Loss for one sample; graph rooted at z and the mapper weights.
Tensor sample_loss(const Generator& gen, const Mapper& mapper, const LossConfig& loss,
                   const FeatureExtractor* features, const Tensor& z, const Tensor& y) {
    return reconstruction_loss(loss, features, mapper.forward(gen.forward(z)), y);
}

constexpr std::uint64_t kStreamSubset = 1, kStreamLatents = 2, kStreamMapper = 3, kStreamShuffle = 4;

}  // namespace

namespace {

void clamp_latent(Tensor& z, float bound) {
    if (bound <= 0.0f) return;
    for (auto& v : z.mutable_data()) v = std::clamp(v, -bound, bound);
}

}  // namespace

float lr_multiplier(const LrDecay& decay, std::size_t epoch, std::size_t epochs) {
    if (decay.final_fraction == 1.0f || epochs < 2) return 1.0f;
    const double t = static_cast<double>(std::min(epoch, epochs - 1)) / static_cast<double>(epochs - 1);
    return static_cast<float>(
        std::pow(static_cast<double>(decay.final_fraction), std::pow(t, static_cast<double>(decay.power))));
}

TrainState make_train_state(const std::vector<Tensor>& images_y, std::shared_ptr<const Generator> generator,
                            TrainConfig cfg) {
    if (!generator) throw Error("nam_train: generator is required");
    if (images_y.empty()) throw Error("nam_train: training set is empty");
    if (cfg.batch_size == 0 || cfg.subset == 0) throw Error("nam_train: batch size and subset must be positive");
    if (!(cfg.lr_latent > 0.0f) || !(cfg.lr_mapper > 0.0f)) throw Error("nam_train: learning rates must be positive");
    for (const LrDecay* d : {&cfg.latent_decay, &cfg.mapper_decay}) {
        if (!(d->final_fraction > 0.0f && d->final_fraction <= 1.0f)) {
            throw Error("nam_train: lr final fraction must be in (0, 1]");
        }
        if (!(d->power > 0.0f && std::isfinite(d->power))) throw Error("nam_train: lr decay power must be positive");
    }
    if (!(cfg.latent_bound >= 0.0f)) throw Error("nam_train: latent bound must be nonnegative");
    if (!(cfg.latent_beta1 >= 0.0f && cfg.latent_beta1 < 1.0f)) throw Error("nam_train: latent beta1 must be in [0, 1)");

    const Shape gshape = generator->output_shape();
    const Shape yshape = images_y.front().shape();
    if (yshape.size() != 3 || yshape[1] != gshape[1] || yshape[2] != gshape[2]) {
        throw ShapeError("nam_train: target images " + shape_str(yshape) + " do not match generator output " +
                         shape_str(gshape));
    }
    for (std::size_t i = 0; i < images_y.size(); ++i) {
        if (images_y[i].shape() != yshape) {
            throw ShapeError("nam_train: image " + std::to_string(i) + " has shape " +
                             shape_str(images_y[i].shape()) + ", expected " + shape_str(yshape));
        }
    }

    TrainState st;
    st.generator = std::move(generator);
    std::vector<std::size_t> idx(images_y.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > cfg.subset) {
        Rng rng(derive_seed(cfg.seed, kStreamSubset));
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(cfg.subset);
        std::sort(idx.begin(), idx.end());
    }
    st.source_indices = idx;
    for (auto i : idx) st.images.push_back(images_y[i].detach());

    cfg.mapper.in_channels = gshape[0];
    cfg.mapper.out_channels = yshape[0];
    cfg.mapper.height = yshape[1];
    cfg.mapper.width = yshape[2];
    cfg.mapper.seed = derive_seed(cfg.seed, kStreamMapper);
    st.mapper = Mapper(cfg.mapper);
    st.mapper_adam.resize(st.mapper.trainable().size());

    Rng rng(derive_seed(cfg.seed, kStreamLatents));
    const std::size_t d = st.generator->latent_dim();
    for (std::size_t i = 0; i < st.images.size(); ++i) {
        st.latents.push_back({Tensor::from({d}, rng.normal_vector(d), true), {}});
        clamp_latent(st.latents.back().z, cfg.latent_bound);
    }
    st.features = resolve_features(cfg.loss, cfg.features, yshape);
    st.cfg = std::move(cfg);
    return st;
}

float train_step(TrainState& st, std::span<const std::size_t> batch) {
    if (batch.empty()) throw Error("train_step: empty batch");
    for (auto i : batch) {
        if (i >= st.latents.size()) throw Error("train_step: sample index " + std::to_string(i) + " out of range");
    }
    const std::size_t workers = detail::worker_count(batch.size(), st.cfg.threads);
    // Worker 0 accumulates straight into the master mapper; the others into
    // replicas that are summed afterwards in worker order.
    std::vector<Mapper> replicas;
    for (std::size_t w = 1; w < workers; ++w) replicas.push_back(st.mapper.clone());

    auto params = st.mapper.trainable();
    for (auto& p : params) p.zero_grad();
    for (auto i : batch) st.latents[i].z.zero_grad();

    const float inv_b = 1.0f / static_cast<float>(batch.size());
    std::vector<float> losses(batch.size());
    const FeatureExtractor* features = st.features.get();
    detail::parallel_for(batch.size(), workers, [&](std::size_t k, std::size_t w) {
        const std::size_t i = batch[k];
        const Mapper& m = w == 0 ? st.mapper : replicas[w - 1];
        Tensor loss;
        try {
            loss = sample_loss(*st.generator, m, st.cfg.loss, features, st.latents[i].z, st.images[i]);
            losses[k] = loss.item();
            backward(scale(loss, inv_b));
        } catch (const NumericError& e) {
            throw NumericError("non-finite loss or gradient at training sample " +
                               std::to_string(st.source_indices[i]) + ": " + e.what());
        }
    });
    for (auto& r : replicas) {
        auto rp = r.trainable();
        for (std::size_t p = 0; p < params.size(); ++p) {
            auto dst = params[p].mutable_grad();
            auto src = rp[p].grad();
            if (src.empty()) continue;
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
    }

    const float mult = lr_multiplier(st.cfg.latent_decay, st.epochs_done, st.cfg.epochs);
    adam_step(params, AdamConfig{.lr = st.cfg.lr_mapper * lr_multiplier(st.cfg.mapper_decay, st.epochs_done, st.cfg.epochs)},
              st.mapper_adam);
    for (auto i : batch) {
        Tensor z = st.latents[i].z;
        adam_step(std::span<Tensor>(&z, 1), AdamConfig{.lr = st.cfg.lr_latent * mult, .beta1 = st.cfg.latent_beta1},
                  std::span<AdamState>(&st.latents[i].adam, 1));
        clamp_latent(z, st.cfg.latent_bound);
    }
    ++st.steps;
    double total = 0.0;
    for (float l : losses) total += l;
    return static_cast<float>(total / static_cast<double>(batch.size()));
}

EpochStats train_epoch(TrainState& st) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(st.images.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(derive_seed(st.cfg.seed, kStreamShuffle), st.epochs_done));
    rng.shuffle(order.begin(), order.end());

    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += st.cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + st.cfg.batch_size);
        std::span<const std::size_t> batch(order.data() + start, end - start);
        weighted += static_cast<double>(train_step(st, batch)) * static_cast<double>(batch.size());
    }
    EpochStats s;
    s.epoch = ++st.epochs_done;
    s.mean_loss = weighted / static_cast<double>(order.size());
    double norms = 0.0;
    for (const auto& l : st.latents) norms += latent_norm(l.z);
    s.mean_latent_norm = norms / static_cast<double>(st.latents.size());
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    st.history.push_back(s);
    return s;
}

TrainState nam_train(const std::vector<Tensor>& images_y, std::shared_ptr<const Generator> generator,
                     TrainConfig cfg, const EpochCallback& on_epoch) {
    TrainState st = make_train_state(images_y, std::move(generator), std::move(cfg));
    for (std::size_t e = 0; e < st.cfg.epochs; ++e) {
        auto stats = train_epoch(st);
        if (on_epoch) on_epoch(stats);
    }
    return st;
}

NamedTensors latent_table(const TrainState& st) {
    const std::size_t n = st.latents.size(), d = st.generator->latent_dim();
    std::vector<float> z, index;
    z.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        auto v = st.latents[i].z.data();
        z.insert(z.end(), v.begin(), v.end());
        index.push_back(static_cast<float>(st.source_indices[i]));
    }
    return {{"latents", Tensor::from({n, d}, std::move(z))}, {"latents.index", Tensor::from({n}, std::move(index))}};
}

std::vector<std::pair<Tensor, Tensor>> export_pairs(const TrainState& st) {
    std::vector<std::pair<Tensor, Tensor>> pairs;
    pairs.reserve(st.latents.size());
    for (std::size_t i = 0; i < st.latents.size(); ++i) {
        Tensor x = st.generator->forward(st.latents[i].z.detach());
        pairs.emplace_back(x.detach(), st.images[i]);
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Inference

const InferenceRecord& InferenceResult::best() const {
    if (records.empty()) throw NumericError("inference produced no successful runs");
    return records.front();
}

namespace {

struct RunOutcome {
    bool ok = false;
    InferenceRecord record;
};

RunOutcome run_inference(const Tensor& y, const Generator& gen, const Mapper& frozen, const FeatureExtractor* features,
                         const InferConfig& cfg, std::size_t init_id, std::vector<float> z0) {
    RunOutcome out;
    try {
        Tensor z = Tensor::from({gen.latent_dim()}, std::move(z0), true);
        clamp_latent(z, cfg.latent_bound);
        std::vector<AdamState> state(1);
        AdamConfig adam{.lr = cfg.lr};
        float first = 0.0f;
        for (std::size_t step = 0; step < cfg.steps; ++step) {
            z.zero_grad();
            Tensor loss = sample_loss(gen, frozen, cfg.loss, features, z, y);
            if (step == 0) first = loss.item();
            backward(loss);
            adam_step(std::span<Tensor>(&z, 1), adam, state);
            clamp_latent(z, cfg.latent_bound);
        }
        Tensor zf = z.detach();
        Tensor x = gen.forward(zf);
        Tensor mapped = frozen.forward(x);
        Tensor loss = reconstruction_loss(cfg.loss, features, mapped, y);
        out.record.init_id = init_id;
        out.record.z.assign(zf.data().begin(), zf.data().end());
        out.record.synthesized = x;
        out.record.mapped = mapped;
        out.record.loss = loss.item();
        out.record.initial_loss = cfg.steps == 0 ? out.record.loss : first;
        out.ok = std::isfinite(out.record.loss);
    } catch (const NumericError&) {
        out.ok = false;
    }
    return out;
}

InferenceResult infer_one(const Tensor& y, const Generator& gen, const Mapper& frozen, const FeatureExtractor* features,
                          std::size_t n_inits, const InferConfig& cfg, std::uint64_t seed, std::size_t threads) {
    std::vector<RunOutcome> runs(n_inits);
    detail::parallel_for(n_inits, threads, [&](std::size_t t, std::size_t) {
        std::vector<float> z0 = cfg.init_latents.empty()
                                    ? Rng(derive_seed(seed, t)).normal_vector(gen.latent_dim())
                                    : cfg.init_latents[t];
        runs[t] = run_inference(y, gen, frozen, features, cfg, t, std::move(z0));
    });
    InferenceResult result;
    for (auto& r : runs) {
        if (r.ok) {
            result.records.push_back(std::move(r.record));
        } else {
            ++result.failed;
        }
    }
    std::stable_sort(result.records.begin(), result.records.end(),
                     [](const auto& a, const auto& b) { return a.loss < b.loss; });
    return result;
}

void check_inference_inputs(const Tensor& y, const Generator& gen, const Mapper& mapper, std::size_t n_inits,
                            const InferConfig& cfg) {
    if (n_inits == 0) throw Error("nam_infer: at least one initialization required");
    if (!(cfg.lr > 0.0f)) throw Error("nam_infer: learning rate must be positive");
    if (!(cfg.latent_bound >= 0.0f)) throw Error("nam_infer: latent bound must be nonnegative");
    const auto& mc = mapper.config();
    const Shape gshape = gen.output_shape();
    if (gshape != Shape{mc.in_channels, mc.height, mc.width}) {
        throw ShapeError("nam_infer: generator output " + shape_str(gshape) + " does not fit the mapper input");
    }
    if (y.shape() != Shape{mc.out_channels, mc.height, mc.width}) {
        throw ShapeError("nam_infer: target " + shape_str(y.shape()) + " does not fit the mapper output");
    }
    if (!cfg.init_latents.empty()) {
        if (cfg.init_latents.size() != n_inits) throw Error("nam_infer: one explicit start per initialization required");
        for (const auto& z : cfg.init_latents)
            if (z.size() != gen.latent_dim()) throw ShapeError("nam_infer: explicit start has the wrong dimension");
    }
}

}  // namespace

InferenceResult nam_infer(const Tensor& y, const Generator& generator, const Mapper& mapper, std::size_t n_inits,
                          const InferConfig& cfg) {
    check_inference_inputs(y, generator, mapper, n_inits, cfg);
    auto features = resolve_features(cfg.loss, cfg.features, y.shape());
    return infer_one(y.detach(), generator, mapper.frozen(), features.get(), n_inits, cfg, cfg.seed, cfg.threads);
}

std::vector<InferenceResult> nam_infer_all(const std::vector<Tensor>& ys, const Generator& generator,
                                           const Mapper& mapper, std::size_t n_inits, const InferConfig& cfg) {
    if (ys.empty()) return {};
    for (const auto& y : ys) check_inference_inputs(y, generator, mapper, n_inits, cfg);
    auto features = resolve_features(cfg.loss, cfg.features, ys.front().shape());
    const Mapper frozen = mapper.frozen();
    std::vector<InferenceResult> out(ys.size());
    detail::parallel_for(ys.size(), cfg.threads, [&](std::size_t i, std::size_t) {
        out[i] = infer_one(ys[i].detach(), generator, frozen, features.get(), n_inits, cfg,
                           derive_seed(cfg.seed, i), 1);
    });
    return out;
}

}  // namespace nam
