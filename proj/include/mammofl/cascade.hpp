#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mammofl/adam.hpp"
#include "mammofl/image.hpp"
#include "mammofl/phantom.hpp"
#include "mammofl/preprocess.hpp"
#include "mammofl/train.hpp"
#include "mammofl/unet.hpp"

namespace mammofl::cascade {

/// The two trained stages plus the probability cutoff.
struct CascadeModel {
    nn::UNetConfig breast_config;
    nn::UNetConfig dense_config;
    nn::ModelWeights breast;
    nn::ModelWeights dense;
    double threshold = 0.5;

    void validate() const;
};

struct PDResult {
    BinaryMask breast_mask;  // at original image size
    BinaryMask dense_mask;   // subset of breast_mask
    std::int64_t breast_area_px = 0;
    std::int64_t dense_area_px = 0;
    std::optional<double> pd_percent;  // empty when the breast mask is empty
};

/// 100 * |dense ∩ breast| / |breast|; empty breast mask -> no value.
std::optional<double> percent_density(const BinaryMask& breast, const BinaryMask& dense);

/// Tag removal, resize to the network input size, min-max normalization.
Image preprocess_input(const Image& raw, int input_size, double tag_threshold);

/// A stage predictor maps a 1x1xHxW input batch to per-pixel probabilities.
/// Tests substitute oracles here; infer() wires in the real networks.
using StagePredictor = std::function<nn::Tensor(const nn::Tensor&)>;

/// Full pipeline: preprocess -> breast net -> threshold -> masked re-normalized
/// input -> dense net -> threshold -> intersect -> resample to original size
/// -> pixel counts -> PD. Pixels with probability >= threshold enter a mask.
PDResult infer(const CascadeModel& model, const Image& raw, double tag_threshold = 0.85);
PDResult infer_with_predictors(int input_size, const StagePredictor& breast_stage,
                               const StagePredictor& dense_stage, double threshold,
                               const Image& raw, double tag_threshold = 0.85);

struct CascadeHyper {
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 16;
    int epochs = 30;
    bool augment = true;
    bool select_best = true;     // keep epoch-best weights by validation loss
    double tag_threshold = 0.85;
    double label_noise = 0.0;    // chance of a 1px dilate/erode on training masks
};

/// One institution's samples, kept together so splits stay subject-level
/// and seed-stable per institution.
struct InstitutionData {
    std::string name;
    std::vector<phantom::PhantomSample> samples;
};

/// Training state shared by the centralized trainer and the federation
/// collaborator: the 4:1 subject-level split, precomputed stage inputs and
/// targets, both networks and their Adam states. Epoch e always draws from
/// the streams (seed, "epoch/breast/e") and (seed, "epoch/dense/e"), so a
/// single-collaborator federation replays centralized training exactly.
class LocalTrainer {
public:
    LocalTrainer(const std::vector<InstitutionData>& datasets, const nn::UNetConfig& config,
                 const CascadeHyper& hyper, std::uint64_t seed);
    ~LocalTrainer();

    void init_weights();
    void set_weights(const nn::ModelWeights& breast, const nn::ModelWeights& dense);
    std::pair<nn::ModelWeights, nn::ModelWeights> weights() const;

    /// Both nets train one epoch concurrently (they share no state).
    /// epoch_index is 1-based and selects the epoch's RNG streams.
    void run_epoch(int epoch_index);

    /// Mean BCE validation losses (breast, dense); empty when no validation
    /// subjects exist.
    std::optional<std::pair<double, double>> validation_loss();

    std::uint64_t train_image_count() const;  // gradient-carrying samples
    std::uint64_t total_image_count() const;  // train + validation pool

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct TrainResult {
    CascadeModel model;        // best-validation selection when enabled
    CascadeModel final_model;  // weights after the last epoch
    int best_breast_epoch = 0;
    int best_dense_epoch = 0;
};

/// Trains both stages for hyper.epochs epochs. Stage one learns
/// (preprocessed image -> breast mask); stage two learns (ground-truth-masked
/// image -> dense mask). epochs = 0 returns the seed-initialized weights.
TrainResult train_cascade(const std::vector<InstitutionData>& datasets,
                          const nn::UNetConfig& config, const CascadeHyper& hyper,
                          std::uint64_t seed);

/// Persistence: <dir>/breast.mflw, <dir>/dense.mflw and a key=value
/// descriptor <dir>/model.txt.
void save_model(const std::string& dir, const CascadeModel& model);
CascadeModel load_model(const std::string& dir);

}  // namespace mammofl::cascade
