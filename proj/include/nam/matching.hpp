#pragma once

#include "nam/nets.hpp"
#include "nam/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace nam {

/// Row-stochastic n_Y x n_X relaxation of an assignment. Row i holds the
/// weights over xs proposed for ys[i].
struct MatchMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;  // row-major
    float temperature = 0.0f;

    float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
    std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

/// Euclidean projection of v onto the probability simplex (sort-based).
void project_to_simplex(std::span<float> v);

/// True when every row is nonnegative and sums to one within tol.
bool rows_on_simplex(const MatchMatrix& m, float tol = 1e-6f);

/// Row-wise argmax one-hot; ties go to the lowest column.
MatchMatrix harden(const MatchMatrix& m);
/// Column chosen for each row by harden().
std::vector<std::size_t> assignment(const MatchMatrix& m);

/// Convex combination sum_j w_j xs[j].
Tensor simplex_synthesize(std::span<const float> weights, const std::vector<Tensor>& xs);

struct MatchConfig {
    std::size_t steps = 400;
    float lr = 0.5f;             // match weights, plain projected descent
    float lr_mapper = 0.001f;    // only used when a mapper is trained
    /// Initial barrier temperature; annealed linearly to 0 at the last step.
    float temperature = 0.02f;
    std::uint64_t seed = 0;
    /// Entropies are recorded every this many steps.
    std::size_t checkpoint_every = 50;
};

struct MatchResult {
    MatchMatrix m;
    /// Trained copy of the input mapper; empty for identity T.
    std::optional<Mapper> mapper;
    std::vector<double> losses;  // reconstruction term per step
    /// Mean row entropy at each checkpoint, the last one taken after the final step.
    std::vector<double> entropies;
};

using MatchStepCallback = std::function<void(std::size_t step, const MatchMatrix&)>;

/// Maximum n_X * n_Y accepted by relaxed_match.
inline constexpr std::size_t kMaxMatchCells = 1'000'000;

/// Jointly fits M (and T when given) to minimize
/// sum_i |T(sum_j M_ij x_j) - y_i|_1 + tau * sum_i H(M_i),
/// projecting every row back onto the simplex after each step. Without a
/// mapper T is the identity.
MatchResult relaxed_match(const std::vector<Tensor>& xs, const std::vector<Tensor>& ys,
                          const std::optional<Mapper>& mapper, const MatchConfig& cfg,
                          const MatchStepCallback& on_step = {});

/// Exhaustive minimum-cost assignment for square cost[i * n + j]: returns p
/// minimizing sum_i cost(i, p[i]). Lexicographically first on ties; n <= 9.
std::vector<std::size_t> brute_force_assignment(const std::vector<double>& cost, std::size_t n);

/// Dense CSV: one line per row, columns comma separated.
void write_match_csv(const std::filesystem::path& path, const MatchMatrix& m);

}  // namespace nam
