#include "test_support.hpp"

#include "nam/engine.hpp"
#include "nam/errors.hpp"
#include "nam/io.hpp"
#include "nam/ops.hpp"
#include "nam/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

using namespace nam;
using namespace nam::testing;

namespace {

std::shared_ptr<const Generator> small_conv_gen(std::size_t d = 4) {
    return std::make_shared<ConvGenerator>(ConvGeneratorConfig{d, 4, 1, 11});
}

std::vector<Tensor> targets(const Generator& gen, std::size_t n, std::uint64_t seed) {
    return make_domain_pair(gen, DomainTransform{TransformKind::invert}, n, seed).ys;
}

TrainConfig quick_config(std::uint64_t seed = 0) {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = seed;
    cfg.mapper.base_width = 4;
    cfg.mapper.scales = 2;
    return cfg;
}

// Mean per-sample loss at the current latents and mapper.
double mean_sample_loss(const TrainState& st) {
    double total = 0.0;
    for (std::size_t i = 0; i < st.images.size(); ++i) {
        Tensor x = st.generator->forward(st.latents[i].z.detach());
        total += reconstruction_loss(st.cfg.loss, st.features.get(), st.mapper.frozen().forward(x), st.images[i]).item();
    }
    return total / static_cast<double>(st.images.size());
}

}  // namespace

TEST(EngineDefaults, ReferenceSettings) {
    const TrainConfig cfg;
    EXPECT_FLOAT_EQ(cfg.lr_latent, 0.03f);
    EXPECT_FLOAT_EQ(cfg.lr_mapper, 0.001f);
    EXPECT_EQ(cfg.subset, 2000u);
    EXPECT_EQ(cfg.epochs, 200u);
    EXPECT_EQ(cfg.batch_size, 16u);
    EXPECT_EQ(cfg.latent_bound, 0.0f);
    EXPECT_EQ(cfg.loss.mode, LossMode::pixel_l1);
    const InferConfig inf;
    EXPECT_EQ(inf.steps, 500u);
    EXPECT_FLOAT_EQ(inf.lr, 0.03f);
}

TEST(LrMultiplier, ScheduleShape) {
    EXPECT_EQ(lr_multiplier(LrDecay{}, 0, 10), 1.0f);
    EXPECT_EQ(lr_multiplier(LrDecay{}, 9, 10), 1.0f);
    const LrDecay d{0.01f, 1.0f};
    EXPECT_FLOAT_EQ(lr_multiplier(d, 0, 11), 1.0f);
    EXPECT_FLOAT_EQ(lr_multiplier(d, 5, 11), 0.1f);
    EXPECT_FLOAT_EQ(lr_multiplier(d, 10, 11), 0.01f);
    EXPECT_EQ(lr_multiplier(d, 0, 1), 1.0f);
    // power < 1 decays sooner
    EXPECT_LT(lr_multiplier(LrDecay{0.01f, 0.5f}, 3, 11), lr_multiplier(d, 3, 11));
    float prev = 2.0f;
    for (std::size_t e = 0; e < 11; ++e) {
        const float m = lr_multiplier(LrDecay{0.05f, 0.7f}, e, 11);
        EXPECT_LT(m, prev);
        prev = m;
    }
}

TEST(TrainState, SubsetIsSeededAndSorted) {
    auto gen = small_conv_gen();
    auto ys = targets(*gen, 30, 1);
    auto cfg = quick_config(5);
    cfg.subset = 10;
    auto a = make_train_state(ys, gen, cfg);
    auto b = make_train_state(ys, gen, cfg);
    ASSERT_EQ(a.latents.size(), 10u);
    EXPECT_EQ(a.source_indices, b.source_indices);
    EXPECT_TRUE(std::is_sorted(a.source_indices.begin(), a.source_indices.end()));
    EXPECT_EQ(std::set<std::size_t>(a.source_indices.begin(), a.source_indices.end()).size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_TRUE(bitwise_equal(a.images[i], ys[a.source_indices[i]]));
    cfg.seed = 6;
    EXPECT_NE(make_train_state(ys, gen, cfg).source_indices, a.source_indices);
    for (const auto& l : a.latents) {
        ASSERT_EQ(l.z.shape(), (Shape{4}));
        for (float v : l.z.data()) EXPECT_TRUE(std::isfinite(v));
    }
}

TEST(TrainState, SmallSetIsKeptWhole) {
    auto gen = small_conv_gen();
    auto ys = targets(*gen, 7, 1);
    auto st = make_train_state(ys, gen, quick_config());
    ASSERT_EQ(st.latents.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(st.source_indices[i], i);
}

TEST(TrainState, RejectsBadInput) {
    auto gen = small_conv_gen();
    auto ys = targets(*gen, 4, 1);
    EXPECT_THROW(make_train_state({}, gen, quick_config()), Error);
    EXPECT_THROW(make_train_state(ys, nullptr, quick_config()), Error);
    EXPECT_THROW(make_train_state({Tensor::zeros({1, 8, 8})}, gen, quick_config()), ShapeError);
    auto mixed = ys;
    mixed.push_back(Tensor::zeros({1, 16, 8}));
    EXPECT_THROW(make_train_state(mixed, gen, quick_config()), ShapeError);
    auto cfg = quick_config();
    cfg.batch_size = 0;
    EXPECT_THROW(make_train_state(ys, gen, cfg), Error);
    cfg = quick_config();
    cfg.lr_latent = -1.0f;
    EXPECT_THROW(make_train_state(ys, gen, cfg), Error);
    cfg = quick_config();
    cfg.mapper_decay = {0.0f, 1.0f};
    EXPECT_THROW(make_train_state(ys, gen, cfg), Error);
    cfg = quick_config();
    cfg.latent_decay = {0.5f, -1.0f};
    EXPECT_THROW(make_train_state(ys, gen, cfg), Error);
    cfg = quick_config();
    cfg.latent_beta1 = 1.0f;
    EXPECT_THROW(make_train_state(ys, gen, cfg), Error);
    auto st = make_train_state(ys, gen, quick_config());
    const std::vector<std::size_t> bad = {4};
    EXPECT_THROW(train_step(st, bad), Error);
    EXPECT_THROW(train_step(st, std::span<const std::size_t>{}), Error);
}

TEST(TrainStep, GeneratorStaysFrozen) {
    auto gen = small_conv_gen();
    const auto before = weights_checksum(gen->parameters());
    const auto bytes = encode_weights(gen->parameters());
    auto st = nam_train(targets(*gen, 8, 2), gen, quick_config());
    EXPECT_EQ(weights_checksum(gen->parameters()), before);
    EXPECT_EQ(encode_weights(gen->parameters()), bytes);
    EXPECT_EQ(st.steps, 4u);
}

TEST(TrainStep, SameSeedSameRun) {
    auto gen = small_conv_gen();
    auto ys = targets(*gen, 10, 3);
    auto a = nam_train(ys, gen, quick_config(9));
    auto b = nam_train(ys, gen, quick_config(9));
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        EXPECT_EQ(a.history[e].mean_loss, b.history[e].mean_loss);
        EXPECT_EQ(a.history[e].mean_latent_norm, b.history[e].mean_latent_norm);
    }
    EXPECT_EQ(encode_weights(a.mapper.parameters()), encode_weights(b.mapper.parameters()));
    EXPECT_EQ(encode_weights(latent_table(a)), encode_weights(latent_table(b)));
    auto c = nam_train(ys, gen, quick_config(10));
    EXPECT_NE(encode_weights(latent_table(a)), encode_weights(latent_table(c)));
}

TEST(TrainStep, ThreadCountDoesNotChangeTheLossSequence) {
    auto gen = small_conv_gen();
    auto ys = targets(*gen, 10, 3);
    auto cfg = quick_config(4);
    auto a = nam_train(ys, gen, cfg);
    cfg.threads = 3;
    auto b = nam_train(ys, gen, cfg);
    for (std::size_t e = 0; e < a.history.size(); ++e)
        EXPECT_NEAR(a.history[e].mean_loss, b.history[e].mean_loss, 1e-5 * a.history[e].mean_loss);
}

TEST(TrainStep, BatchOfOneTouchesOnlyItsLatent) {
    auto gen = std::make_shared<BlobGenerator>();
    auto st = make_train_state(targets(*gen, 6, 4), gen, quick_config());
    std::vector<Tensor> before;
    for (const auto& l : st.latents) before.push_back(l.z.clone());
    const auto mapper_before = encode_weights(st.mapper.parameters());
    const std::vector<std::size_t> batch = {3};
    const float loss = train_step(st, batch);
    EXPECT_GT(loss, 0.0f);
    for (std::size_t i = 0; i < st.latents.size(); ++i) {
        if (i == 3) {
            EXPECT_FALSE(bitwise_equal(st.latents[i].z, before[i]));
        } else {
            EXPECT_TRUE(bitwise_equal(st.latents[i].z, before[i])) << i;
        }
    }
    EXPECT_NE(encode_weights(st.mapper.parameters()), mapper_before);
}

TEST(TrainStep, LatentBoundClamps) {
    auto gen = small_conv_gen();
    auto cfg = quick_config();
    cfg.latent_bound = 0.25f;
    cfg.lr_latent = 1.0f;
    auto st = nam_train(targets(*gen, 8, 5), gen, cfg);
    for (const auto& l : st.latents)
        for (float v : l.z.data()) EXPECT_LE(std::abs(v), 0.25f);
}

TEST(TrainStep, NonFiniteLossNamesTheSample) {
    auto gen = small_conv_gen();
    auto ys = targets(*gen, 8, 6);
    auto cfg = quick_config();
    cfg.lr_mapper = 1e30f;
    cfg.epochs = 3;
    try {
        nam_train(ys, gen, cfg);
        FAIL() << "expected a numeric failure";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("training sample"), std::string::npos) << e.what();
    }
}

TEST(NamTrain, LogsOneLinePerEpoch) {
    auto gen = small_conv_gen();
    auto cfg = quick_config();
    cfg.epochs = 3;
    std::vector<std::size_t> seen;
    auto st = nam_train(targets(*gen, 8, 7), gen, cfg, [&](const EpochStats& s) { seen.push_back(s.epoch); });
    EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
    ASSERT_EQ(st.history.size(), 3u);
    const auto line = format_epoch_line(st.history[0]);
    EXPECT_EQ(std::count(line.begin(), line.end(), '\t'), 2);
    const auto timed = format_epoch_line(st.history[0], true);
    EXPECT_EQ(std::count(timed.begin(), timed.end(), '\t'), 3);
    EXPECT_EQ(timed.rfind(line, 0), 0u);
}

TEST(NamTrain, RealizableInstanceFitsClosely) {
    // y = invert(G(z*)); the mapper class holds invert exactly and z* is
    // drawn from the prior.
    auto gen = std::make_shared<ConvGenerator>(ConvGeneratorConfig{8, 16, 1, 11});
    Rng rng(8);
    std::vector<Tensor> ys;
    for (int i = 0; i < 16; ++i) ys.push_back(invert_transform(gen->forward(Tensor::from({8}, rng.normal_vector(8)))));

    TrainConfig cfg;
    cfg.epochs = 1000;
    cfg.batch_size = 4;
    cfg.lr_latent = 0.3f;
    cfg.lr_mapper = 0.01f;
    cfg.latent_decay = {0.05f, 1.0f};
    cfg.mapper_decay = {0.01f, 1.0f};
    cfg.mapper.base_width = 8;
    cfg.mapper.scales = 2;
    auto st = make_train_state(ys, gen, cfg);
    const double initial = mean_sample_loss(st);
    for (std::size_t e = 0; e < cfg.epochs; ++e) train_epoch(st);
    const double final_loss = mean_sample_loss(st);
    RecordProperty("initial", std::to_string(initial));
    RecordProperty("final", std::to_string(final_loss));
    EXPECT_LT(final_loss, 0.01 * initial) << initial << " -> " << final_loss;
}

TEST(NamTrain, InferenceOnTrainingImagesMatchesTrainingLoss) {
    auto gen = std::make_shared<BlobGenerator>();
    auto ys = targets(*gen, 12, 9);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch_size = 4;
    cfg.lr_latent = 0.1f;
    cfg.lr_mapper = 0.01f;
    cfg.mapper.base_width = 4;
    cfg.mapper.scales = 2;
    auto st = nam_train(ys, gen, cfg);
    InferConfig icfg;
    icfg.steps = 300;
    icfg.lr = 0.05f;
    double train_loss = 0.0, infer_loss = 0.0;
    for (std::size_t i = 0; i < st.images.size(); ++i) {
        Tensor x = gen->forward(st.latents[i].z.detach());
        train_loss += pixel_l1(st.mapper.forward(x), st.images[i]).item();
        icfg.seed = i;
        infer_loss += nam_infer(st.images[i], *gen, st.mapper, 8, icfg).best().loss;
    }
    EXPECT_LE(infer_loss, 2.0 * train_loss) << infer_loss << " vs " << train_loss;
}

TEST(NamInfer, FixedPointHasZeroLoss) {
    auto gen = small_conv_gen();
    Mapper t(MapperConfig{1, 1, 16, 16, 4, 2, false, 3});
    Rng rng(10);
    for (int k = 0; k < 5; ++k) {
        const auto z = rng.normal_vector(4);
        Tensor y = t.forward(gen->forward(Tensor::from({4}, z))).detach();
        InferConfig cfg;
        cfg.steps = 3;
        cfg.init_latents = {z};
        auto r = nam_infer(y, *gen, t, 1, cfg);
        ASSERT_EQ(r.records.size(), 1u);
        EXPECT_EQ(r.records[0].initial_loss, 0.0f);
    }
}

TEST(NamInfer, MoreInitsNeverHurt) {
    auto gen = small_conv_gen();
    Mapper t(MapperConfig{1, 1, 16, 16, 4, 2, false, 3});
    auto ys = targets(*gen, 20, 11);
    InferConfig cfg;
    cfg.steps = 40;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        cfg.seed = 100 + i;
        const float one = nam_infer(ys[i], *gen, t, 1, cfg).best().loss;
        const float five = nam_infer(ys[i], *gen, t, 5, cfg).best().loss;
        EXPECT_LE(five, one) << "target " << i;
    }
}

TEST(NamInfer, RecordsSortedAndComplete) {
    auto gen = small_conv_gen();
    Mapper t(MapperConfig{1, 1, 16, 16, 4, 2, false, 3});
    auto ys = targets(*gen, 1, 12);
    InferConfig cfg;
    cfg.steps = 20;
    auto r = nam_infer(ys[0], *gen, t, 6, cfg);
    ASSERT_EQ(r.records.size(), 6u);
    EXPECT_EQ(r.failed, 0u);
    std::set<std::size_t> ids;
    for (std::size_t k = 0; k < r.records.size(); ++k) {
        const auto& rec = r.records[k];
        ids.insert(rec.init_id);
        if (k > 0) EXPECT_LE(r.records[k - 1].loss, rec.loss);
        EXPECT_EQ(rec.z.size(), 4u);
        EXPECT_TRUE(bitwise_equal(rec.synthesized, gen->forward(Tensor::from({4}, rec.z))));
        EXPECT_TRUE(bitwise_equal(rec.mapped, t.forward(rec.synthesized)));
        EXPECT_FLOAT_EQ(rec.loss, pixel_l1(rec.mapped, ys[0]).item());
    }
    EXPECT_EQ(ids.size(), 6u);
}

TEST(NamInfer, MapperIsNotModified) {
    auto gen = small_conv_gen();
    Mapper t(MapperConfig{1, 1, 16, 16, 4, 2, false, 3});
    const auto bytes = encode_weights(t.parameters());
    InferConfig cfg;
    cfg.steps = 10;
    nam_infer(targets(*gen, 1, 13)[0], *gen, t, 3, cfg);
    EXPECT_EQ(encode_weights(t.parameters()), bytes);
    for (const auto& w : t.trainable()) EXPECT_TRUE(w.grad().empty() || std::all_of(w.grad().begin(), w.grad().end(), [](float g) { return g == 0.0f; }));
}

TEST(NamInfer, ParallelMatchesSequential) {
    auto gen = small_conv_gen();
    Mapper t(MapperConfig{1, 1, 16, 16, 4, 2, false, 3});
    auto ys = targets(*gen, 4, 14);
    InferConfig cfg;
    cfg.steps = 15;
    auto a = nam_infer_all(ys, *gen, t, 3, cfg);
    cfg.threads = 3;
    auto b = nam_infer_all(ys, *gen, t, 3, cfg);
    for (std::size_t i = 0; i < ys.size(); ++i)
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_EQ(a[i].records[k].z, b[i].records[k].z);
            EXPECT_EQ(a[i].records[k].loss, b[i].records[k].loss);
        }
}

TEST(NamInfer, DivergedRunsAreCountedNotFatal) {
    auto gen = small_conv_gen();
    Mapper t(MapperConfig{1, 1, 16, 16, 4, 2, false, 3});
    InferConfig cfg;
    cfg.steps = 5;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    cfg.init_latents = {{0.1f, 0.2f, -0.3f, 0.4f}, {nan, nan, nan, nan}};
    auto r = nam_infer(targets(*gen, 1, 15)[0], *gen, t, 2, cfg);
    EXPECT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.failed, 1u);
    EXPECT_EQ(r.records[0].init_id, 0u);
    InferenceResult empty;
    EXPECT_THROW(empty.best(), NumericError);
}

TEST(NamInfer, RejectsBadInput) {
    auto gen = small_conv_gen();
    Mapper t(MapperConfig{1, 1, 16, 16, 4, 2, false, 3});
    auto y = targets(*gen, 1, 16)[0];
    InferConfig cfg;
    EXPECT_THROW(nam_infer(y, *gen, t, 0, cfg), Error);
    EXPECT_THROW(nam_infer(Tensor::zeros({1, 8, 8}), *gen, t, 1, cfg), ShapeError);
    cfg.init_latents = {{0.0f, 0.0f}};
    EXPECT_THROW(nam_infer(y, *gen, t, 1, cfg), ShapeError);
    cfg.init_latents = {{0.0f, 0.0f, 0.0f, 0.0f}};
    EXPECT_THROW(nam_infer(y, *gen, t, 2, cfg), Error);
    cfg = InferConfig{};
    cfg.lr = 0.0f;
    EXPECT_THROW(nam_infer(y, *gen, t, 1, cfg), Error);
}

TEST(ExportPairs, AlignedAndLossless) {
    auto gen = small_conv_gen();
    auto ys = targets(*gen, 9, 17);
    auto st = nam_train(ys, gen, quick_config());
    auto pairs = export_pairs(st);
    ASSERT_EQ(pairs.size(), st.latents.size());
    Dataset xs, ds;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        EXPECT_TRUE(bitwise_equal(pairs[i].first, gen->forward(st.latents[i].z.detach())));
        EXPECT_TRUE(bitwise_equal(pairs[i].second, ys[st.source_indices[i]]));
        for (float v : pairs[i].first.data()) {
            EXPECT_GE(v, -1.0f);
            EXPECT_LE(v, 1.0f);
        }
        xs.images.push_back(pairs[i].first);
    }
    auto back = decode_dataset(encode_dataset(xs));
    ASSERT_EQ(back.images.size(), xs.images.size());
    for (std::size_t i = 0; i < xs.images.size(); ++i) EXPECT_TRUE(bitwise_equal(back.images[i], xs.images[i]));
}

TEST(LatentTable, ShapeAndIndex) {
    auto gen = small_conv_gen();
    auto ys = targets(*gen, 12, 18);
    auto cfg = quick_config();
    cfg.subset = 5;
    auto st = make_train_state(ys, gen, cfg);
    auto table = latent_table(st);
    const auto& z = find_tensor(table, "latents");
    const auto& idx = find_tensor(table, "latents.index");
    ASSERT_EQ(z.shape(), (Shape{5, 4}));
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(idx.at(i), static_cast<float>(st.source_indices[i]));
        for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(z.at(i * 4 + k), st.latents[i].z.at(k));
    }
}
