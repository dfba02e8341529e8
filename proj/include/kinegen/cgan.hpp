#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kinegen/autoencoder.hpp"
#include "kinegen/checkpoint.hpp"
#include "kinegen/neural_core.hpp"
#include "kinegen/profile_data.hpp"

namespace kinegen::gan {

using ae::LatentSequence;
using nn::Matrix;
using nn::Vector;

/// Standard-normal noise; rows are noise components, columns are time steps.
struct NoiseSequence {
    Matrix steps;

    std::size_t width() const { return static_cast<std::size_t>(steps.rows()); }
    std::size_t length() const { return static_cast<std::size_t>(steps.cols()); }
};

inline constexpr double kDefaultLambda = 100.0;

struct GanConfig {
    std::size_t seq_len = 64;  // N, must match the autoencoder
    std::size_t noise = 8;     // Z, also the label-embedding width
    std::size_t latent = 8;    // E, must match the autoencoder
    std::size_t gen_hidden = 32;
    std::size_t disc_hidden = 32;
    double lambda = kDefaultLambda;
    /// Sampling interval attached to synthesized profiles, per class code. Set from the mean
    /// duration of each class in the training corpus.
    std::array<double, 2> class_dt{1.0 / 63.0, 1.0 / 63.0};

    void validate() const;
};

struct GanTrainConfig {
    std::size_t epochs = 500;
    std::size_t batch = 32;
    nn::AdamHyper adam{};
};

/// View of a (2, width) label-embedding table.
class LabelEmbedding {
public:
    explicit LabelEmbedding(const nn::ParamArray& table);

    std::size_t width() const { return width_; }
    /// Row for a class code; labels strictly between 0 and 1 interpolate the two rows.
    Vector vector_for(double label) const;
    Vector vector_for(data::CarefulnessClass c) const { return vector_for(static_cast<double>(c)); }

private:
    const nn::ParamArray* table_;
    std::size_t width_;
};

/// Generator: label-embedding (2, Z), LSTM(Z -> gen_hidden), per-step tanh head (gen_hidden -> E).
/// Discriminator: projection (E -> Z), label-embedding (2, Z), LSTM(Z -> disc_hidden),
/// sigmoid head on the final hidden state.
class GanModel {
public:
    GanModel() = default;
    explicit GanModel(const GanConfig& cfg, Rng* rng = nullptr);

    const GanConfig& config() const { return config_; }
    GanConfig& config() { return config_; }
    const nn::ParamSet& generator() const { return generator_; }
    nn::ParamSet& generator() { return generator_; }
    const nn::ParamSet& discriminator() const { return discriminator_; }
    nn::ParamSet& discriminator() { return discriminator_; }

    static constexpr const char* kGenLabel = "gen.label";
    static constexpr const char* kDiscLabel = "disc.label";
    nn::LstmLayer generator_cell() const { return {"gen.lstm", config_.noise, config_.gen_hidden}; }
    nn::DenseLayer generator_head() const
    {
        return {"gen.head", config_.gen_hidden, config_.latent, nn::Activation::Tanh};
    }
    nn::DenseLayer discriminator_projection() const
    {
        return {"disc.proj", config_.latent, config_.noise, nn::Activation::Linear};
    }
    nn::LstmLayer discriminator_cell() const { return {"disc.lstm", config_.noise, config_.disc_hidden}; }
    nn::DenseLayer discriminator_head() const
    {
        return {"disc.head", config_.disc_hidden, 1, nn::Activation::Sigmoid};
    }

    void check() const;

private:
    GanConfig config_{};
    nn::ParamSet generator_;
    nn::ParamSet discriminator_;
};

NoiseSequence sample_noise(std::size_t width, std::size_t length, Rng& rng);

/// Elementwise product of the label vector with every noise step.
NoiseSequence condition_input(const NoiseSequence& z, double label, const LabelEmbedding& emb);
inline NoiseSequence condition_input(const NoiseSequence& z, data::CarefulnessClass y, const LabelEmbedding& emb)
{
    return condition_input(z, static_cast<double>(y), emb);
}

LatentSequence generator_forward(const GanModel& model, const NoiseSequence& z, double label);
double discriminator_forward(const GanModel& model, const LatentSequence& x, double label);

/// Batched forms. Blocks are per time step: noise Z x B, latents E x B. labels has B entries.
std::vector<Matrix> generate_batch(const GanModel& model, const nn::ParamSet& gen_params,
                                   const std::vector<Matrix>& noise, std::span<const double> labels);
Vector discriminate_batch(const GanModel& model, const nn::ParamSet& disc_params, const std::vector<Matrix>& latents,
                          std::span<const double> labels);

/// Mean BCE of real (target 1) plus fake (target 0). Fills disc_grads (overwritten) when non-null.
double discriminator_loss(const GanModel& model, const nn::ParamSet& disc_params, const std::vector<Matrix>& real,
                          std::span<const double> real_labels, const std::vector<Matrix>& fake,
                          std::span<const double> fake_labels, nn::ParamSet* disc_grads);

struct GeneratorLoss {
    double total = 0.0;        // adversarial + lambda * l2
    double adversarial = 0.0;  // mean BCE(D(G(z, y), y), 1)
    double l2 = 0.0;           // mean over the batch of ||G(z, y) - paired real embedding||_2
};

/// `paired` holds, for every generated sample, the real embedding it is compared against.
/// Fills gen_grads (overwritten) when non-null; the discriminator is held fixed.
GeneratorLoss generator_loss(const GanModel& model, const nn::ParamSet& gen_params, const std::vector<Matrix>& noise,
                             std::span<const double> labels, const std::vector<Matrix>& paired,
                             nn::ParamSet* gen_grads);

struct GanLosses {
    double d_loss = 0.0;
    double g_loss = 0.0;
    double l2_term = 0.0;
};

/// For each generated sample draws a uniformly random real sample of the same class from the batch.
/// Throws ArgumentError when a requested class has no real sample in the batch.
std::vector<std::size_t> pair_same_class(std::span<const double> real_labels, std::span<const double> fake_labels,
                                         Rng& rng);

/// Loss values for one batch without updating anything.
GanLosses gan_losses(const GanModel& model, std::span<const LatentSequence> real_latents,
                     std::span<const double> real_labels, std::span<const NoiseSequence> noise,
                     std::span<const double> labels, Rng& pairing_rng);

struct GanEpoch {
    std::size_t epoch = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double l2_term = 0.0;
};

struct GanTrainResult {
    GanModel model;
    std::vector<GanEpoch> history;
};

/// Alternating discriminator/generator Adam updates in the frozen autoencoder's latent space.
GanTrainResult train_gan(const data::ProfileCorpus& corpus, const ae::AutoencoderModel& autoencoder,
                         const GanConfig& cfg, const GanTrainConfig& train, std::uint64_t seed);

/// Draws n conditioned samples, decodes them and maps them back to m/s.
std::vector<data::VelocityProfile> synthesize(const GanModel& gan, const ae::AutoencoderModel& autoencoder,
                                              data::CarefulnessClass label, std::size_t n, std::uint64_t seed,
                                              const data::NormStats& stats);

/// Throws ConfigError when sequence length or latent width disagree, naming both values.
void require_compatible(const GanModel& gan, const ae::AutoencoderModel& autoencoder);

nn::Checkpoint to_checkpoint(const GanModel& model);
GanModel from_checkpoint(const nn::Checkpoint& ckpt);
void save_model(const GanModel& model, const std::filesystem::path& path);
GanModel load_model(const std::filesystem::path& path);

void write_training_log(std::span<const GanEpoch> history, const std::filesystem::path& path);

}  // namespace kinegen::gan
