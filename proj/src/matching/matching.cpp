#include "nam/matching.hpp"

#include "nam/errors.hpp"
#include "nam/losses.hpp"
#include "nam/ops.hpp"
#include "nam/optim.hpp"
#include "nam/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

namespace nam {

void project_to_simplex(std::span<float> v) {
    if (v.empty()) throw Error("project_to_simplex: empty vector");
    std::vector<double> u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        const double t = (cum - 1.0) / static_cast<double>(k + 1);
        if (u[k] - t > 0.0) theta = t;
    }
    for (auto& x : v) x = static_cast<float>(std::max(static_cast<double>(x) - theta, 0.0));
    // Float rounding can leave the sum a few ulps off; fold the residue into
    // the largest entry so rows sum to one as closely as f32 allows.
    double total = 0.0;
    for (float x : v) total += x;
    auto top = std::max_element(v.begin(), v.end());
    *top = static_cast<float>(std::max(0.0, static_cast<double>(*top) + (1.0 - total)));
}

bool rows_on_simplex(const MatchMatrix& m, float tol) {
    if (m.values.size() != m.rows * m.cols) return false;
    for (std::size_t i = 0; i < m.rows; ++i) {
        double total = 0.0;
        for (float x : m.row(i)) {
            if (!(x >= 0.0f)) return false;
            total += x;
        }
        if (std::abs(total - 1.0) > tol) return false;
    }
    return true;
}

std::vector<std::size_t> assignment(const MatchMatrix& m) {
    std::vector<std::size_t> out(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        auto r = m.row(i);
        // max_element returns the first maximum.
        out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

MatchMatrix harden(const MatchMatrix& m) {
    MatchMatrix h{m.rows, m.cols, std::vector<float>(m.rows * m.cols, 0.0f), m.temperature};
    const auto pick = assignment(m);
    for (std::size_t i = 0; i < m.rows; ++i) h.values[i * m.cols + pick[i]] = 1.0f;
    return h;
}

Tensor simplex_synthesize(std::span<const float> weights, const std::vector<Tensor>& xs) {
    if (xs.empty()) throw Error("simplex_synthesize: no images");
    if (weights.size() != xs.size()) {
        throw Error("simplex_synthesize: " + std::to_string(weights.size()) + " weights for " +
                    std::to_string(xs.size()) + " images");
    }
    const Shape shape = xs.front().shape();
    std::vector<float> out(shape_numel(shape), 0.0f);
    for (std::size_t j = 0; j < xs.size(); ++j) {
        if (xs[j].shape() != shape) throw ShapeError("simplex_synthesize: images differ in shape");
        if (weights[j] == 0.0f) continue;
        auto x = xs[j].data();
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += weights[j] * x[k];
    }
    return Tensor::from(shape, std::move(out));
}

namespace {

double row_entropy(std::span<const float> r) {
    double h = 0.0;
    for (float x : r)
        if (x > 0.0f) h -= static_cast<double>(x) * std::log(static_cast<double>(x));
    return h;
}

double mean_entropy(const MatchMatrix& m) {
    double h = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) h += row_entropy(m.row(i));
    return h / static_cast<double>(m.rows);
}

constexpr float kEntropyEps = 1e-6f;

}  // namespace

MatchResult relaxed_match(const std::vector<Tensor>& xs, const std::vector<Tensor>& ys,
                          const std::optional<Mapper>& mapper, const MatchConfig& cfg,
                          const MatchStepCallback& on_step) {
    if (xs.empty() || ys.empty()) throw Error("relaxed_match: both sets must be nonempty");
    if (xs.size() > kMaxMatchCells / ys.size()) {
        throw Error("relaxed_match: " + std::to_string(xs.size()) + " x " + std::to_string(ys.size()) +
                    " exceeds the " + std::to_string(kMaxMatchCells) + "-cell limit");
    }
    if (cfg.steps == 0 || !(cfg.lr > 0.0f) || !(cfg.temperature >= 0.0f)) {
        throw Error("relaxed_match: steps and lr must be positive and temperature nonnegative");
    }
    const Shape xshape = xs.front().shape(), yshape = ys.front().shape();
    for (const auto& x : xs)
        if (x.shape() != xshape) throw ShapeError("relaxed_match: xs differ in shape");
    for (const auto& y : ys)
        if (y.shape() != yshape) throw ShapeError("relaxed_match: ys differ in shape");
    if (!mapper && xshape != yshape) {
        throw ShapeError("relaxed_match: identity T needs equal shapes, got " + shape_str(xshape) + " and " +
                         shape_str(yshape));
    }

    const std::size_t nx = xs.size(), ny = ys.size(), dim = shape_numel(xshape);
    std::vector<float> stacked;
    stacked.reserve(nx * dim);
    for (const auto& x : xs) stacked.insert(stacked.end(), x.data().begin(), x.data().end());
    const Tensor xmat = Tensor::from({nx, dim}, std::move(stacked));

    MatchResult res;
    res.m = MatchMatrix{ny, nx, {}, cfg.temperature};
    Rng rng(cfg.seed);
    std::vector<Tensor> rows;
    for (std::size_t i = 0; i < ny; ++i) {
        std::vector<float> r(nx);
        for (auto& v : r) v = 1.0f / static_cast<float>(nx) + 0.01f * rng.uniform(0.0f, 1.0f);
        project_to_simplex(r);
        rows.push_back(Tensor::from({1, nx}, std::move(r), true));
    }
    auto sync = [&] {
        res.m.values.clear();
        for (const auto& r : rows) res.m.values.insert(res.m.values.end(), r.data().begin(), r.data().end());
    };
    sync();

    std::optional<Adam> mapper_opt;
    if (mapper) {
        res.mapper = mapper->clone();
        mapper_opt.emplace(res.mapper->trainable(), AdamConfig{.lr = cfg.lr_mapper});
    }
    const std::size_t every = std::max<std::size_t>(1, cfg.checkpoint_every);
    res.entropies.push_back(mean_entropy(res.m));

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const float tau = cfg.steps > 1 ? cfg.temperature * (1.0f - static_cast<float>(step) /
                                                                         static_cast<float>(cfg.steps - 1))
                                        : 0.0f;
        for (auto& r : rows) r.zero_grad();
        if (mapper_opt) mapper_opt->zero_grad();

        Tensor recon, barrier;
        for (std::size_t i = 0; i < ny; ++i) {
            Tensor x = reshape(matmul(rows[i], xmat), xshape);
            Tensor out = res.mapper ? res.mapper->forward(x) : x;
            Tensor l = pixel_l1(out, ys[i]);
            recon = recon.defined() ? recon + l : l;
            Tensor h = sum(mul(rows[i], log(add_scalar(rows[i], kEntropyEps))));
            barrier = barrier.defined() ? barrier + h : h;
        }
        const float inv = 1.0f / static_cast<float>(ny);
        res.losses.push_back(static_cast<double>(recon.item()) * inv);
        // barrier holds -sum H, so subtracting adds tau * H.
        Tensor total = scale(recon, inv) - scale(barrier, tau * inv);
        try {
            backward(total);
        } catch (const NumericError& e) {
            throw NumericError(std::string("relaxed_match: non-finite loss at step ") + std::to_string(step) +
                               ": " + e.what());
        }

        // Plain projected gradient step; per-coordinate scaling would wash out
        // the column differences that carry the assignment signal.
        for (auto& r : rows) {
            auto v = r.mutable_data();
            auto g = r.grad();
            for (std::size_t j = 0; j < v.size(); ++j) v[j] -= cfg.lr * g[j];
            project_to_simplex(v);
        }
        if (mapper_opt) mapper_opt->step();

        sync();
        res.m.temperature = tau;
        if (on_step) on_step(step, res.m);
        if ((step + 1) % every == 0 || step + 1 == cfg.steps) res.entropies.push_back(mean_entropy(res.m));
    }
    return res;
}

std::vector<std::size_t> brute_force_assignment(const std::vector<double>& cost, std::size_t n) {
    if (n == 0 || n > 9) throw Error("brute_force_assignment: n must be in [1, 9]");
    if (cost.size() != n * n) throw Error("brute_force_assignment: cost matrix is not n x n");
    std::vector<std::size_t> p(n), best;
    std::iota(p.begin(), p.end(), 0);
    double best_cost = 0.0;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += cost[i * n + p[i]];
        if (best.empty() || c < best_cost) {
            best_cost = c;
            best = p;
        }
    } while (std::next_permutation(p.begin(), p.end()));
    return best;
}

void write_match_csv(const std::filesystem::path& path, const MatchMatrix& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out.precision(9);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) out << ',';
            out << m.at(i, j);
        }
        out << '\n';
    }
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace nam
