#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kinegen/checkpoint.hpp"
#include "kinegen/neural_core.hpp"
#include "kinegen/profile_data.hpp"

namespace kinegen::ae {

using nn::Matrix;

/// Per-timestep embedding; rows are latent components, columns are time steps.
struct LatentSequence {
    Matrix steps;

    std::size_t width() const { return static_cast<std::size_t>(steps.rows()); }
    std::size_t length() const { return static_cast<std::size_t>(steps.cols()); }
    bool operator==(const LatentSequence& o) const { return steps == o.steps; }
};

struct AutoencoderConfig {
    std::size_t seq_len = 64;  // N
    std::size_t latent = 8;    // E
    std::size_t hidden = 32;

    bool operator==(const AutoencoderConfig&) const = default;
};

struct TrainConfig {
    std::size_t epochs = 300;
    std::size_t batch = 32;
    nn::AdamHyper adam{};
};

/// Encoder: LSTM(1 -> hidden) + per-step tanh head (hidden -> E).
/// Decoder: LSTM(E -> hidden) + per-step sigmoid head (hidden -> 1).
class AutoencoderModel {
public:
    AutoencoderModel() = default;
    /// Parameters are declared zero; pass an rng to draw the standard initialization.
    explicit AutoencoderModel(const AutoencoderConfig& cfg, Rng* rng = nullptr);

    const AutoencoderConfig& config() const { return config_; }
    const nn::ParamSet& params() const { return params_; }
    nn::ParamSet& params() { return params_; }
    /// Normalization the model was trained with; needed to map decoder output back to m/s.
    const data::NormStats& normalization() const { return norm_; }
    void set_normalization(const data::NormStats& s) { norm_ = s; }

    nn::LstmLayer encoder_cell() const { return {"enc.lstm", 1, config_.hidden}; }
    nn::DenseLayer encoder_head() const { return {"enc.head", config_.hidden, config_.latent, nn::Activation::Tanh}; }
    nn::LstmLayer decoder_cell() const { return {"dec.lstm", config_.latent, config_.hidden}; }
    nn::DenseLayer decoder_head() const { return {"dec.head", config_.hidden, 1, nn::Activation::Sigmoid}; }

    /// Throws ShapeError naming the first parameter inconsistent with the config.
    void check() const;

private:
    AutoencoderConfig config_{};
    data::NormStats norm_{};
    nn::ParamSet params_;
};

/// inputs: N x B matrix (one normalized profile per column). Returns N latent blocks of E x B.
std::vector<Matrix> encode_batch(const AutoencoderModel& model, const Matrix& inputs);
/// latents: N blocks of E x B. Returns N x B reconstructions in (0, 1).
Matrix decode_batch(const AutoencoderModel& model, const std::vector<Matrix>& latents);

LatentSequence encode(const AutoencoderModel& model, std::span<const double> normalized);
LatentSequence encode(const AutoencoderModel& model, const data::VelocityProfile& normalized);
std::vector<double> decode(const AutoencoderModel& model, const LatentSequence& latent);

/// Converts between per-step blocks (E x B each) and per-sample LatentSequence values.
std::vector<LatentSequence> unstack(const std::vector<Matrix>& blocks);
std::vector<Matrix> stack(std::span<const LatentSequence> latents, std::span<const std::size_t> which);

/// Mean squared reconstruction error of a batch; fills grads (overwritten) when non-null.
double reconstruction_loss(const AutoencoderModel& model, const nn::ParamSet& params, const Matrix& inputs,
                           nn::ParamSet* grads);

struct AeEpoch {
    std::size_t epoch = 0;
    double train_mse = 0.0;
    double heldout_mse = 0.0;
};

struct AeTrainResult {
    AutoencoderModel model;
    std::vector<AeEpoch> history;
    std::size_t best_epoch = 0;
};

/// Minimizes reconstruction MSE on the corpus training split and returns the parameters of the
/// epoch with the lowest held-out MSE (training MSE when the held-out split is empty).
AeTrainResult train_autoencoder(const data::ProfileCorpus& corpus, const AutoencoderConfig& cfg,
                                const TrainConfig& train, std::uint64_t seed);

/// Root mean squared error between normalized profiles (each length N) and their reconstructions.
double reconstruction_error(const AutoencoderModel& model, std::span<const std::vector<double>> profiles);

/// Packs equal-length rows into an N x B matrix.
Matrix to_columns(std::span<const std::vector<double>> rows, std::size_t n);

nn::Checkpoint to_checkpoint(const AutoencoderModel& model);
AutoencoderModel from_checkpoint(const nn::Checkpoint& ckpt);
void save_model(const AutoencoderModel& model, const std::filesystem::path& path);
AutoencoderModel load_model(const std::filesystem::path& path);

void write_training_log(std::span<const AeEpoch> history, const std::filesystem::path& path);

}  // namespace kinegen::ae
