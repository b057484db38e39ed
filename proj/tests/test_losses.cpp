#include "grad_cases.hpp"
#include "reference.hpp"
#include "test_support.hpp"

#include "nam/errors.hpp"
#include "nam/losses.hpp"
#include "nam/synth.hpp"

#include <gtest/gtest.h>

using namespace nam;
using namespace nam::testing;
using nam::cases::features16;

namespace {

Tensor circular_shift(const Tensor& img, std::size_t dy, std::size_t dx) {
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<float> out(img.numel());
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j)
                out[(k * h + (i + dy) % h) * w + (j + dx) % w] = img.at((k * h + i) * w + j);
    return Tensor::from(img.shape(), std::move(out));
}

}  // namespace

TEST(PixelL1, IdentityAndConstantDifference) {
    Rng rng(1);
    auto a = rand_tensor({1, 4, 4}, rng, -1, 1, false);
    EXPECT_EQ(pixel_l1(a, a).item(), 0.0f);
    EXPECT_FLOAT_EQ(pixel_l1(Tensor::zeros({3, 5, 5}), Tensor::full({3, 5, 5}, 1.0f)).item(), 1.0f);
    EXPECT_THROW(pixel_l1(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 4, 2})), ShapeError);
}

TEST(PixelL1, SymmetricOnRandomPairs) {
    Rng rng(2);
    for (int k = 0; k < 20; ++k) {
        auto a = rand_tensor({1, 6, 6}, rng, -1, 1, false), b = rand_tensor({1, 6, 6}, rng, -1, 1, false);
        EXPECT_EQ(pixel_l1(a, b).item(), pixel_l1(b, a).item());
    }
}

TEST(PixelL1, GradientMatchesOracle) {
    for (int s = 0; s < kGradSeeds; ++s) {
        const auto r = ref::check_gradients(cases::pixel_l1_loss(20 + s));
        EXPECT_LT(r.max_rel, kGradTol) << "seed " << s;
    }
}

TEST(Perceptual, ZeroOnIdenticalInputsAndNonnegative) {
    Rng rng(3);
    LossConfig cfg{LossMode::perceptual};
    for (int k = 0; k < 10; ++k) {
        auto a = rand_tensor({1, 16, 16}, rng, -1, 1, false), b = rand_tensor({1, 16, 16}, rng, -1, 1, false);
        EXPECT_EQ(perceptual_loss(features16(), a, a, cfg).item(), 0.0f);
        EXPECT_GT(perceptual_loss(features16(), a, b, cfg).item(), 0.0f);
    }
}

TEST(Perceptual, ZeroBlockWeightsReduceToPixelL1) {
    Rng rng(4);
    LossConfig cfg{LossMode::perceptual, {0.0f, 0.0f, 0.0f}, 1.0f};
    for (int k = 0; k < 20; ++k) {
        auto a = rand_tensor({1, 16, 16}, rng, -1, 1, false), b = rand_tensor({1, 16, 16}, rng, -1, 1, false);
        EXPECT_NEAR(perceptual_loss(features16(), a, b, cfg).item(), pixel_l1(a, b).item(), 1e-7);
    }
}

TEST(Perceptual, GradientMatchesOracle) {
    for (int s = 0; s < kGradSeeds; ++s) {
        const auto r = ref::check_gradients(cases::perceptual(40 + s));
        EXPECT_LT(r.max_rel, kGradTol) << "seed " << s;
        EXPECT_LT(r.forward_rel, 1e-5) << "seed " << s;
    }
}

TEST(Perceptual, ConfigValidation) {
    auto a = Tensor::zeros({1, 16, 16});
    EXPECT_THROW(perceptual_loss(features16(), a, a, LossConfig{LossMode::perceptual, {1.0f}, 1.0f}), Error);
    EXPECT_THROW(perceptual_loss(features16(), a, a, LossConfig{LossMode::perceptual, {1.0f, -1.0f, 1.0f}, 1.0f}),
                 Error);
    EXPECT_THROW(perceptual_loss(features16(), a, a, LossConfig{LossMode::perceptual, {0.0f, 0.0f, 0.0f}, 0.0f}),
                 Error);
    EXPECT_THROW(perceptual_loss(features16(), a, Tensor::zeros({1, 8, 8}), LossConfig{LossMode::perceptual}),
                 ShapeError);
}

TEST(Gram, ZeroOnIdenticalInputs) {
    Rng rng(5);
    auto a = rand_tensor({1, 16, 16}, rng, -1, 1, false);
    EXPECT_EQ(gram_style_loss(features16(), a, a, LossConfig{LossMode::gram_style}).item(), 0.0f);
}

TEST(Gram, MatrixIsSymmetricPositiveSemidefinite) {
    Rng rng(6);
    for (int k = 0; k < 20; ++k) {
        auto f = rand_tensor({4, 3, 5}, rng, -1, 1, false);
        auto g = gram_matrix(f);
        ASSERT_EQ(g.shape(), (Shape{4, 4}));
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) EXPECT_FLOAT_EQ(g.at(i * 4 + j), g.at(j * 4 + i));
        auto v = rand_tensor({4}, rng, -1, 1, false);
        double q = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) q += v.at(i) * g.at(i * 4 + j) * v.at(j);
        EXPECT_GE(q, -1e-6);
    }
}

TEST(Gram, TranslationBarelyChangesStyle) {
    BlobGenerator blobs;
    OrientedBarGenerator bars(BarConfig{16});
    LossConfig cfg{LossMode::gram_style};
    for (auto z : std::vector<std::vector<float>>{{0.2f, -0.3f, 0.0f}, {-0.5f, 0.4f, 0.8f}, {0.0f, 0.0f, -0.7f}}) {
        auto a = blobs.forward(Tensor::from({3}, z));
        auto shifted = circular_shift(a, 3, 2);
        auto unrelated = bars.forward(Tensor::from({2}, {0.7f, 0.5f}));
        const double near = gram_style_loss(features16(), a, shifted, cfg).item();
        const double far = gram_style_loss(features16(), a, unrelated, cfg).item();
        EXPECT_LT(near / far, 0.1) << near << " vs " << far;
    }
}

TEST(Gram, GradientMatchesOracle) {
    for (int s = 0; s < kGradSeeds; ++s) {
        const auto r = ref::check_gradients(cases::gram_style(60 + s));
        EXPECT_LT(r.max_rel, kGradTol) << "seed " << s;
        EXPECT_LT(r.forward_rel, 1e-5) << "seed " << s;
    }
}

TEST(ReconstructionLoss, DispatchesOnMode) {
    Rng rng(7);
    auto a = rand_tensor({1, 16, 16}, rng, -1, 1, false), b = rand_tensor({1, 16, 16}, rng, -1, 1, false);
    EXPECT_EQ(reconstruction_loss(LossConfig{}, nullptr, a, b).item(), pixel_l1(a, b).item());
    LossConfig p{LossMode::perceptual};
    EXPECT_EQ(reconstruction_loss(p, &features16(), a, b).item(), perceptual_loss(features16(), a, b, p).item());
    EXPECT_THROW(reconstruction_loss(p, nullptr, a, b), Error);
    for (auto mode : {LossMode::pixel_l1, LossMode::perceptual, LossMode::gram_style}) {
        LossConfig cfg{mode};
        EXPECT_EQ(reconstruction_loss(cfg, &features16(), a, a).item(), 0.0f);
        EXPECT_GE(reconstruction_loss(cfg, &features16(), a, b).item(), 0.0f);
    }
}

TEST(ReconstructionLoss, ModeNames) {
    EXPECT_EQ(parse_loss_mode("l1"), LossMode::pixel_l1);
    EXPECT_EQ(parse_loss_mode("perceptual"), LossMode::perceptual);
    EXPECT_EQ(parse_loss_mode("gram"), LossMode::gram_style);
    EXPECT_THROW(parse_loss_mode("vgg"), Error);
    for (auto mode : {LossMode::pixel_l1, LossMode::perceptual, LossMode::gram_style})
        EXPECT_EQ(parse_loss_mode(to_string(mode)), mode);
}
