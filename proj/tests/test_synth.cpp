#include "test_support.hpp"

#include "nam/errors.hpp"
#include "nam/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace nam;
using namespace nam::testing;

namespace {

// Hard white disc of radius r on a black canvas, centred between pixels.
Tensor hard_disc(std::size_t n, float r) {
    std::vector<float> v(n * n);
    const float c = (static_cast<float>(n) - 1.0f) / 2.0f;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            v[i * n + j] = std::hypot(static_cast<float>(i) - c, static_cast<float>(j) - c) <= r ? 1.0f : -1.0f;
    return Tensor::from({1, n, n}, std::move(v));
}

const std::vector<TransformKind> kAllKinds = {TransformKind::identity, TransformKind::edge, TransformKind::invert,
                                              TransformKind::blur, TransformKind::colorize};

}  // namespace

TEST(DomainPair, ReproducibleBitwise) {
    BlobGenerator gen;
    const DomainTransform t{TransformKind::edge};
    auto a = make_domain_pair(gen, t, 2000, 7);
    auto b = make_domain_pair(gen, t, 2000, 7);
    ASSERT_EQ(a.ys.size(), 2000u);
    ASSERT_EQ(a.latents.size(), 2000u);
    EXPECT_EQ(a.latents, b.latents);
    for (std::size_t i = 0; i < a.ys.size(); ++i) ASSERT_TRUE(bitwise_equal(a.ys[i], b.ys[i])) << i;
    EXPECT_NE(make_domain_pair(gen, t, 3, 8).latents, make_domain_pair(gen, t, 3, 7).latents);
    EXPECT_THROW(make_domain_pair(gen, t, 0, 7), Error);
}

TEST(DomainPair, IdentityTransformGivesGeneratorOutputs) {
    OrientedBarGenerator gen(BarConfig{16});
    auto p = make_domain_pair(gen, DomainTransform{}, 10, 3);
    for (std::size_t i = 0; i < 10; ++i) {
        ASSERT_EQ(p.latents[i].size(), 2u);
        EXPECT_TRUE(bitwise_equal(p.ys[i], gen.forward(Tensor::from({2}, p.latents[i]))));
    }
}

TEST(Transforms, KeepSpatialSizeAndRange) {
    BlobGenerator gen;
    auto p = make_domain_pair(gen, DomainTransform{}, 10, 4);
    for (auto kind : kAllKinds) {
        const DomainTransform t{kind};
        for (const auto& x : p.ys) {
            auto y = t.apply(x);
            EXPECT_EQ(y.shape(), t.output_shape(x.shape())) << to_string(kind);
            EXPECT_EQ(y.dim(1), x.dim(1));
            EXPECT_EQ(y.dim(2), x.dim(2));
            for (float v : y.data()) {
                EXPECT_GE(v, -1.0f);
                EXPECT_LE(v, 1.0f);
            }
            EXPECT_TRUE(bitwise_equal(t.apply(x), y)) << "not deterministic: " << to_string(kind);
        }
    }
    EXPECT_EQ(DomainTransform{TransformKind::colorize}.output_shape({1, 16, 16}), (Shape{3, 16, 16}));
}

TEST(Transforms, EdgeOfDiscIsARing) {
    const float r = 5.0f;
    auto edge = edge_transform(hard_disc(16, r));
    const float c = 7.5f;
    double ring = 0.0, inner = 0.0;
    std::size_t nr = 0, ni = 0;
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) {
            const float d = std::hypot(static_cast<float>(i) - c, static_cast<float>(j) - c);
            const double v = 0.5 * (edge.at(i * 16 + j) + 1.0);  // back to [0, 1]
            if (std::abs(d - r) < 1.0f) {
                ring += v;
                ++nr;
            } else if (d < r - 2.0f) {
                inner += v;
                ++ni;
            }
        }
    ASSERT_GT(nr, 0u);
    ASSERT_GT(ni, 0u);
    ring /= static_cast<double>(nr);
    inner /= static_cast<double>(ni);
    EXPECT_LT(inner, 0.1 * ring) << inner << " vs " << ring;
    EXPECT_FLOAT_EQ(*std::max_element(edge.data().begin(), edge.data().end()), 1.0f);
}

TEST(Transforms, EdgeIgnoresBackgroundLevel) {
    auto a = hard_disc(16, 4.0f);
    std::vector<float> shifted(a.data().begin(), a.data().end());
    for (auto& v : shifted) v = v < 0.0f ? -0.6f : v;
    auto ea = edge_transform(a), eb = edge_transform(Tensor::from(a.shape(), shifted));
    for (std::size_t k = 0; k < ea.numel(); ++k) EXPECT_NEAR(ea.at(k), eb.at(k), 1e-5f);
}

TEST(Transforms, FlatImages) {
    auto flat = Tensor::full({1, 8, 8}, 0.3f);
    const auto edge = edge_transform(flat), blur = blur_transform(flat);
    for (float v : edge.data()) EXPECT_EQ(v, -1.0f);
    for (float v : blur.data()) EXPECT_NEAR(v, 0.3f, 1e-6f);
}

TEST(Transforms, InvertIsAnInvolution) {
    Rng rng(5);
    auto x = rand_tensor({2, 4, 4}, rng, -1, 1, false);
    EXPECT_TRUE(bitwise_equal(invert_transform(invert_transform(x)), x));
    for (std::size_t k = 0; k < x.numel(); ++k) EXPECT_EQ(invert_transform(x).at(k), -x.at(k));
}

TEST(Transforms, BlurIsBlockConstant) {
    Rng rng(6);
    auto y = blur_transform(rand_tensor({1, 8, 8}, rng, -1, 1, false));
    for (std::size_t i = 0; i < 8; i += 2)
        for (std::size_t j = 0; j < 8; j += 2) {
            const float v = y.at(i * 8 + j);
            EXPECT_EQ(y.at(i * 8 + j + 1), v);
            EXPECT_EQ(y.at((i + 1) * 8 + j), v);
            EXPECT_EQ(y.at((i + 1) * 8 + j + 1), v);
        }
    EXPECT_THROW(blur_transform(Tensor::zeros({1, 5, 4})), ShapeError);
}

TEST(Transforms, ColorizeIsMonotonePerChannel) {
    auto dark = colorize_transform(Tensor::full({1, 2, 2}, -1.0f));
    auto light = colorize_transform(Tensor::full({1, 2, 2}, 1.0f));
    for (std::size_t k = 0; k < dark.numel(); ++k) EXPECT_NE(dark.at(k), light.at(k));
    EXPECT_THROW(colorize_transform(Tensor::zeros({3, 2, 2})), ShapeError);
}

TEST(Transforms, Names) {
    for (auto kind : kAllKinds) EXPECT_EQ(parse_transform(to_string(kind)), kind);
    EXPECT_THROW(parse_transform("sharpen"), Error);
}

TEST(BlobGenerator, CenterEncodingRoundTrips) {
    BlobGenerator gen;
    for (float pos : {4.0f, 6.5f, 7.5f, 9.0f, 11.0f}) {
        const float z = gen.encode_center(pos);
        auto d = gen.decode(std::vector<float>{z, z, 0.0f});
        EXPECT_NEAR(d[0], pos, 1e-4f);
        EXPECT_NEAR(d[1], pos, 1e-4f);
    }
    auto d = gen.decode(std::vector<float>{0.0f, 0.0f, 0.0f});
    ASSERT_EQ(d.size(), 3u);
    EXPECT_GE(d[2], 1.5f);
    EXPECT_LE(d[2], 4.0f);
    BlobGenerator level(BlobConfig{16, true});
    EXPECT_EQ(level.latent_dim(), 4u);
    EXPECT_EQ(level.decoded_names().size(), 4u);
}

TEST(BlobGenerator, BrightestPixelFollowsCenter) {
    BlobGenerator gen;
    Rng rng(9);
    for (int k = 0; k < 20; ++k) {
        auto z = rng.normal_vector(3);
        auto img = gen.forward(Tensor::from({3}, z));
        const auto d = gen.decode(z);
        auto data = img.data();
        const auto peak = static_cast<std::size_t>(std::max_element(data.begin(), data.end()) - data.begin());
        EXPECT_LE(std::abs(static_cast<float>(peak % 16) - d[0]), 0.5f + 1e-4f);
        EXPECT_LE(std::abs(static_cast<float>(peak / 16) - d[1]), 0.5f + 1e-4f);
    }
}

TEST(BarGenerator, AngleStaysInRange) {
    OrientedBarGenerator gen;
    EXPECT_EQ(gen.output_shape(), (Shape{1, 32, 32}));
    for (float z : {-10.0f, -1.0f, 0.0f, 0.5f, 10.0f}) {
        const auto d = gen.decode(std::vector<float>{z, 0.0f});
        EXPECT_LE(std::abs(d[0]), OrientedBarGenerator::kMaxAngleDeg);
        EXPECT_NEAR(d[0], 75.0f * std::tanh(z), 1e-3f);
    }
}

TEST(Generators, RebuiltFromWeights) {
    BlobGenerator blob(BlobConfig{16, true});
    OrientedBarGenerator bar(BarConfig{16});
    Rng rng(10);
    for (const Generator* g : std::vector<const Generator*>{&blob, &bar}) {
        auto back = load_generator(g->parameters());
        EXPECT_EQ(back->kind(), g->kind());
        EXPECT_EQ(back->latent_dim(), g->latent_dim());
        auto z = Tensor::from({g->latent_dim()}, rng.normal_vector(g->latent_dim()));
        EXPECT_TRUE(bitwise_equal(back->forward(z), g->forward(z)));
    }
}

TEST(BlobClasses, LabelsMatchBandsWithMargin) {
    BlobGenerator gen;
    auto s = sample_blob_classes(gen, 300, 3, 11);
    ASSERT_EQ(s.labels.size(), 300u);
    const float lo = gen.center() - gen.center_span();
    const float band = 2.0f * gen.center_span() / 3.0f;
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < 300; ++i) {
        const float cx = gen.decode(s.latents[i])[0];
        const float offset = cx - lo - band * static_cast<float>(s.labels[i]);
        EXPECT_GE(offset, 0.6f - 1e-3f);
        EXPECT_LE(offset, band - 0.6f + 1e-3f);
        seen.insert(s.labels[i]);
    }
    EXPECT_EQ(seen.size(), 3u);
    auto again = sample_blob_classes(gen, 300, 3, 11);
    EXPECT_EQ(again.latents, s.latents);
    EXPECT_EQ(again.labels, s.labels);
    EXPECT_THROW(sample_blob_classes(gen, 10, 1, 11), Error);
    EXPECT_THROW(sample_blob_classes(gen, 10, 3, 11, 5.0f), Error);
}
