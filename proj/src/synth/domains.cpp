#include "nam/errors.hpp"
#include "nam/ops.hpp"
#include "nam/random.hpp"
#include "nam/synth.hpp"

#include <algorithm>
#include <cmath>

namespace nam {

std::string to_string(TransformKind kind) {
    switch (kind) {
        case TransformKind::identity: return "identity";
        case TransformKind::edge: return "edge";
        case TransformKind::invert: return "invert";
        case TransformKind::blur: return "blur";
        case TransformKind::colorize: return "colorize";
    }
    return "?";
}

TransformKind parse_transform(const std::string& name) {
    if (name == "identity") return TransformKind::identity;
    if (name == "edge") return TransformKind::edge;
    if (name == "invert") return TransformKind::invert;
    if (name == "blur") return TransformKind::blur;
    if (name == "colorize") return TransformKind::colorize;
    throw Error("unknown transform '" + name + "' (expected identity, edge, invert, blur or colorize)");
}

namespace {

void require_chw(const Tensor& t, const char* who) {
    if (t.rank() != 3) throw ShapeError(std::string(who) + ": expected [C,H,W], got " + shape_str(t.shape()));
}

// Replicate-padded read.
float at_clamped(std::span<const float> plane, long h, long w, long i, long j) {
    i = std::clamp(i, 0L, h - 1);
    j = std::clamp(j, 0L, w - 1);
    return plane[static_cast<std::size_t>(i * w + j)];
}

}  // namespace

Tensor invert_transform(const Tensor& image) {
    require_chw(image, "invert");
    std::vector<float> out(image.data().begin(), image.data().end());
    for (auto& v : out) v = -v;
    return Tensor::from(image.shape(), std::move(out));
}

Tensor edge_transform(const Tensor& image) {
    require_chw(image, "edge");
    const long C = static_cast<long>(image.dim(0)), H = static_cast<long>(image.dim(1)),
               W = static_cast<long>(image.dim(2));
    auto x = image.data();
    std::vector<float> mag(x.size());
    for (long c = 0; c < C; ++c) {
        auto plane = x.subspan(static_cast<std::size_t>(c * H * W), static_cast<std::size_t>(H * W));
        auto p = [&](long i, long j) { return 0.5f * (at_clamped(plane, H, W, i, j) + 1.0f); };
        for (long i = 0; i < H; ++i) {
            for (long j = 0; j < W; ++j) {
                const float gx = (p(i - 1, j + 1) + 2 * p(i, j + 1) + p(i + 1, j + 1)) -
                                 (p(i - 1, j - 1) + 2 * p(i, j - 1) + p(i + 1, j - 1));
                const float gy = (p(i + 1, j - 1) + 2 * p(i + 1, j) + p(i + 1, j + 1)) -
                                 (p(i - 1, j - 1) + 2 * p(i - 1, j) + p(i - 1, j + 1));
                mag[static_cast<std::size_t>((c * H + i) * W + j)] = std::sqrt(gx * gx + gy * gy);
            }
        }
    }
    const float peak = *std::max_element(mag.begin(), mag.end());
    for (auto& v : mag) v = 2.0f * (peak > 0.0f ? v / peak : 0.0f) - 1.0f;
    return Tensor::from(image.shape(), std::move(mag));
}

Tensor blur_transform(const Tensor& image) {
    require_chw(image, "blur");
    const long C = static_cast<long>(image.dim(0)), H = static_cast<long>(image.dim(1)),
               W = static_cast<long>(image.dim(2));
    if (H % 2 || W % 2) throw ShapeError("blur: spatial size must be even");
    auto x = image.data();
    static constexpr float k[3] = {0.25f, 0.5f, 0.25f};
    std::vector<float> blurred(x.size());
    for (long c = 0; c < C; ++c) {
        auto plane = x.subspan(static_cast<std::size_t>(c * H * W), static_cast<std::size_t>(H * W));
        for (long i = 0; i < H; ++i)
            for (long j = 0; j < W; ++j) {
                float acc = 0.0f;
                for (long a = -1; a <= 1; ++a)
                    for (long b = -1; b <= 1; ++b) acc += k[a + 1] * k[b + 1] * at_clamped(plane, H, W, i + a, j + b);
                blurred[static_cast<std::size_t>((c * H + i) * W + j)] = acc;
            }
    }
    Tensor down = avg_pool2(Tensor::from(image.shape(), std::move(blurred)));
    Tensor up = upsample_nearest(down);
    return Tensor::from(up.shape(), {up.data().begin(), up.data().end()});
}

Tensor colorize_transform(const Tensor& image) {
    require_chw(image, "colorize");
    if (image.dim(0) != 1) throw ShapeError("colorize: expects a single-channel image");
    static constexpr float dark[3] = {0.10f, 0.20f, 0.60f};
    static constexpr float light[3] = {1.00f, 0.80f, 0.20f};
    const std::size_t hw = image.dim(1) * image.dim(2);
    auto x = image.data();
    std::vector<float> out(3 * hw);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
            const float t = 0.5f * (x[i] + 1.0f);
            out[c * hw + i] = 2.0f * (dark[c] + t * (light[c] - dark[c])) - 1.0f;
        }
    return Tensor::from({3, image.dim(1), image.dim(2)}, std::move(out));
}

Tensor DomainTransform::apply(const Tensor& image) const {
    switch (kind) {
        case TransformKind::identity: return image.detach().clone();
        case TransformKind::edge: return edge_transform(image);
        case TransformKind::invert: return invert_transform(image);
        case TransformKind::blur: return blur_transform(image);
        case TransformKind::colorize: return colorize_transform(image);
    }
    throw Error("unreachable transform");
}

Shape DomainTransform::output_shape(const Shape& in) const {
    if (kind == TransformKind::colorize) return {3, in.at(1), in.at(2)};
    return in;
}

std::vector<Tensor> render(const Generator& gen, const std::vector<std::vector<float>>& latents) {
    std::vector<Tensor> out;
    out.reserve(latents.size());
    for (const auto& z : latents) out.push_back(gen.forward(Tensor::from({z.size()}, z)));
    return out;
}

DomainPair make_domain_pair(const Generator& gen, const DomainTransform& transform, std::size_t n,
                            std::uint64_t seed) {
    if (n == 0) throw Error("make_domain_pair: n must be at least 1");
    Rng rng(seed);
    DomainPair pair;
    for (std::size_t i = 0; i < n; ++i) pair.latents.push_back(rng.normal_vector(gen.latent_dim()));
    for (const auto& x : render(gen, pair.latents)) pair.ys.push_back(transform.apply(x));
    return pair;
}

LabeledLatents sample_blob_classes(const BlobGenerator& gen, std::size_t n, std::size_t classes,
                                   std::uint64_t seed, float margin) {
    if (classes < 2) throw Error("sample_blob_classes: need at least two classes");
    Rng rng(seed);
    const float lo = gen.center() - gen.center_span(), hi = gen.center() + gen.center_span();
    const float band = (hi - lo) / static_cast<float>(classes);
    if (2.0f * margin >= band) throw Error("sample_blob_classes: margin leaves no room inside a band");
    LabeledLatents out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t label = rng.index(classes);
        const float a = lo + band * static_cast<float>(label) + margin;
        const float cx = rng.uniform(a, a + band - 2.0f * margin);
        auto z = rng.normal_vector(gen.latent_dim());
        z[0] = gen.encode_center(cx);
        out.latents.push_back(std::move(z));
        out.labels.push_back(label);
    }
    return out;
}

}  // namespace nam
