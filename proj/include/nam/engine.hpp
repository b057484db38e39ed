#pragma once

#include "nam/losses.hpp"
#include "nam/nets.hpp"
#include "nam/optim.hpp"
#include "nam/tensor.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nam {

/// Learning-rate schedule over epochs: multiplier final_fraction^(t^power),
/// t running from 0 at the first epoch to 1 at the last. power < 1 front-loads
/// the decay. The default keeps the rate constant.
struct LrDecay {
    float final_fraction = 1.0f;
    float power = 1.0f;
};

struct TrainConfig {
    float lr_latent = 0.03f;
    float lr_mapper = 0.001f;
    LrDecay latent_decay;
    LrDecay mapper_decay;
    /// When positive, latent components are clamped to [-b, b] after every
    /// update. 0 leaves them unconstrained.
    float latent_bound = 0.0f;
    /// First-moment decay of the per-latent Adam state. Each latent is only
    /// touched once per epoch, so momentum spans many epochs.
    float latent_beta1 = 0.9f;
    std::size_t epochs = 200;
    std::size_t batch_size = 16;
    /// Training set cap; larger sets are subsampled with the run seed.
    std::size_t subset = 2000;
    std::uint64_t seed = 0;
    LossConfig loss;
    /// Width, scale count and skip flag are taken from here. Channel counts
    /// and spatial size are filled in from the generator and the data.
    MapperConfig mapper;
    /// Perceptual network for perceptual/gram modes. When null a seeded
    /// default pyramid is built.
    std::shared_ptr<const FeatureExtractor> features;
    std::size_t threads = 1;
};

/// Per-sample optimizable latent with its own Adam moments, which persist
/// across epochs.
struct LatentCode {
    Tensor z;
    AdamState adam;
};

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    double mean_latent_norm = 0.0;
    double seconds = 0.0;
};

/// Tab-separated log line: epoch, mean loss, mean |z| and optionally wall
/// time. Log files leave the time out so reruns are byte-identical.
std::string format_epoch_line(const EpochStats& stats, bool with_time = false);

/// Multiplier for a schedule during the given epoch (0-based) of a run.
float lr_multiplier(const LrDecay& decay, std::size_t epoch, std::size_t epochs);

struct TrainState {
    std::shared_ptr<const Generator> generator;
    Mapper mapper{MapperConfig{}};
    std::vector<AdamState> mapper_adam;
    std::vector<Tensor> images;
    /// Position of each training image in the caller's list.
    std::vector<std::size_t> source_indices;
    std::vector<LatentCode> latents;
    std::shared_ptr<const FeatureExtractor> features;
    TrainConfig cfg;
    std::size_t steps = 0;
    std::size_t epochs_done = 0;
    std::vector<EpochStats> history;
};

/// Builds the initial state: subsampled training set, Gaussian latents,
/// freshly initialized mapper. No optimization happens here.
TrainState make_train_state(const std::vector<Tensor>& images_y, std::shared_ptr<const Generator> generator,
                            TrainConfig cfg);

/// One forward/backward over the batch, then an Adam update of the mapper
/// and of the batch's latent codes only. Returns the batch mean loss before
/// the update. Throws NumericError naming the sample on a non-finite loss.
float train_step(TrainState& state, std::span<const std::size_t> batch);

/// One shuffled pass over the training set.
EpochStats train_epoch(TrainState& state);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Jointly fits the mapper and one latent per target image for cfg.epochs.
TrainState nam_train(const std::vector<Tensor>& images_y, std::shared_ptr<const Generator> generator,
                     TrainConfig cfg, const EpochCallback& on_epoch = {});

/// Latent table as a weight-file record set: "latents" [n, d] and
/// "latents.index" [n] (positions in the original dataset).
NamedTensors latent_table(const TrainState& state);

/// (G(z_y), y) for every training image, ready for supervised training.
std::vector<std::pair<Tensor, Tensor>> export_pairs(const TrainState& state);

struct InferConfig {
    std::size_t steps = 500;
    float lr = 0.03f;
    /// Same meaning as TrainConfig::latent_bound.
    float latent_bound = 0.0f;
    std::uint64_t seed = 0;
    LossConfig loss;
    std::shared_ptr<const FeatureExtractor> features;
    /// Explicit starting points; when non-empty there must be one per
    /// initialization and the seed is not used.
    std::vector<std::vector<float>> init_latents;
    std::size_t threads = 1;
};

struct InferenceRecord {
    std::size_t init_id = 0;
    std::vector<float> z;
    Tensor synthesized;  // G(z)
    Tensor mapped;       // T(G(z))
    float loss = 0.0f;
    float initial_loss = 0.0f;
};

struct InferenceResult {
    /// Successful runs, ascending by final loss.
    std::vector<InferenceRecord> records;
    /// Runs dropped because the loss became non-finite.
    std::size_t failed = 0;

    const InferenceRecord& best() const;
};

/// Recovers latents for a single target with T held fixed. Runs n_inits
/// independent descents from seeded Gaussian starts.
InferenceResult nam_infer(const Tensor& y, const Generator& generator, const Mapper& mapper, std::size_t n_inits,
                          const InferConfig& cfg);

/// nam_infer over many targets; target i uses seed derive_seed(cfg.seed, i).
std::vector<InferenceResult> nam_infer_all(const std::vector<Tensor>& ys, const Generator& generator,
                                           const Mapper& mapper, std::size_t n_inits, const InferConfig& cfg);

/// Default perceptual network for images of the given shape. Its weights
/// depend only on the shape, so training and inference agree.
std::shared_ptr<const FeatureExtractor> default_features(const Shape& image_shape);

}  // namespace nam
