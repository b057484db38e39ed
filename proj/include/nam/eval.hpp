#pragma once

#include "nam/engine.hpp"
#include "nam/nets.hpp"
#include "nam/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace nam {

struct Metric {
    std::string name;
    double value = 0.0;
    std::size_t n = 0;
    /// Per-sample values the summary was computed from.
    std::vector<double> details;
    /// Diagnostic mean of details (the value itself is usually a median).
    double mean = 0.0;
};

double median(std::vector<double> v);

/// Median Euclidean distance between decoded parameters of recovered and
/// true latents. `params` selects decoded components (empty = all).
Metric latent_recovery_error(const Generator& gen, const std::vector<std::vector<float>>& recovered,
                             const std::vector<std::vector<float>>& truth, const std::vector<std::size_t>& params = {});
/// Same, taking the best record of each inference result.
Metric latent_recovery_error(const Generator& gen, const std::vector<InferenceResult>& results,
                             const std::vector<std::vector<float>>& truth, const std::vector<std::size_t>& params = {});

/// Guessing baseline: `samples` draws from the standard Gaussian prior, draw
/// k compared against truth[k % n].
Metric random_prior_error(const Generator& gen, const std::vector<std::vector<float>>& truth,
                          const std::vector<std::size_t>& params, std::size_t samples, std::uint64_t seed);

/// Root median squared residual (degrees) of recovered vs true angles after
/// the best alignment recovered = a * true + b with a in {+1, -1} and b the
/// median offset. Needs at least 3 samples.
Metric orientation_residual(const std::vector<double>& recovered_deg, const std::vector<double>& true_deg);
/// Angles read from decoded component 0 of the latents.
Metric orientation_residual(const Generator& gen, const std::vector<InferenceResult>& results,
                            const std::vector<std::vector<float>>& truth);

struct ClassifierConfig {
    std::size_t classes = 3;
    std::size_t epochs = 15;
    std::size_t batch_size = 16;
    float lr = 0.003f;
    std::uint64_t seed = 99;
};

/// conv3x3 -> relu -> pool -> conv3x3 -> relu -> pool -> dense.
class ProxyClassifier {
public:
    ProxyClassifier(const Shape& image_shape, ClassifierConfig cfg);

    /// Mean training cross-entropy of the last epoch.
    double train(const std::vector<Tensor>& images, const std::vector<std::size_t>& labels);
    std::size_t predict(const Tensor& image) const;
    double accuracy(const std::vector<Tensor>& images, const std::vector<std::size_t>& labels) const;
    bool trained() const { return trained_; }

private:
    Tensor logits(const Tensor& image) const;
    std::vector<Tensor> params() const;

    Shape shape_;
    ClassifierConfig cfg_;
    Tensor c1w_, c1b_, c2w_, c2b_, dw_, db_;
    bool trained_ = false;
};

/// Clean accuracy required before the classifier may be used as a proxy.
inline constexpr double kClassifierGate = 0.98;

/// Fraction of mapped images the classifier assigns to their label. Throws
/// if the classifier has not been trained.
Metric proxy_classification_accuracy(const std::vector<Tensor>& mapped, const std::vector<std::size_t>& labels,
                                     const ProxyClassifier& classifier);

/// For each query, the pool image closest in mean absolute pixel difference
/// (lowest index on ties).
std::vector<std::size_t> nearest_neighbors(const std::vector<Tensor>& queries, const std::vector<Tensor>& pool);

/// One line per metric: name, value, n, mean.
void write_report(std::ostream& out, const std::vector<Metric>& metrics);

struct Report {
    std::string task;
    std::vector<Metric> metrics;
    /// Free-form string facts (config values, pass/fail flags).
    std::map<std::string, std::string> notes;
};

std::string report_to_json(const Report& report);
Report report_from_json(const std::string& text);
void save_report(const std::filesystem::path& path, const Report& report);
Report load_report(const std::filesystem::path& path);

}  // namespace nam
