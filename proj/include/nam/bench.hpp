#pragma once

#include "nam/engine.hpp"
#include "nam/eval.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nam {

struct BenchOptions {
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    /// Reduced sizes for smoke runs; metrics are not meaningful.
    bool quick = false;
    /// When set, trained weights and other artifacts are written here.
    std::optional<std::filesystem::path> out;
};

/// Task names accepted by run_bench.
std::vector<std::string> bench_tasks();

/// Runs a full generate -> train -> infer -> evaluate pipeline.
Report run_bench(const std::string& task, const BenchOptions& opts);

// Individual tasks.
Report bench_blob_invert(const BenchOptions& opts);
Report bench_blob_edge(const BenchOptions& opts);
Report bench_bar_orient(const BenchOptions& opts);
Report bench_class_proxy(const BenchOptions& opts);
Report bench_match_perm(const BenchOptions& opts);

/// Training configuration the blob tasks use.
TrainConfig blob_train_config(std::uint64_t seed);

/// Looks a metric up by name; throws when absent.
const Metric& find_metric(const Report& report, const std::string& name);

}  // namespace nam
