#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinegen/autoencoder.hpp"
#include "kinegen/cgan.hpp"
#include "kinegen/profile_data.hpp"
#include "kinegen/trajectory.hpp"

namespace kinegen::pipeline {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kIoError = 3, kNumericalError = 4 };

/// Maps an exception to the process exit code.
int exit_code_for(const std::exception& e);

struct Thresholds {
    double label_consistency = 0.85;
    double copy_fraction = 0.05;
};

struct ExecuteSettings {
    std::string preset = "baxter-like";
    std::vector<traj::Plane> planes{traj::Plane::Frontal, traj::Plane::Sagittal, traj::Plane::Oblique};
    std::size_t reps = 10;
    std::size_t per_class = 3;
    std::optional<double> noise_sd;  // overrides the preset
    std::size_t threads = 1;
};

struct SynthesizeSettings {
    std::optional<data::CarefulnessClass> label;  // empty: both classes
    std::size_t n = 100;                          // per class
};

struct RunConfig {
    std::uint64_t seed = 42;
    std::filesystem::path out = "out";
    data::SynthConfig corpus;
    ae::AutoencoderConfig autoencoder;
    ae::TrainConfig autoencoder_train;
    gan::GanConfig gan;
    gan::GanTrainConfig gan_train;
    Thresholds thresholds;
    std::vector<traj::ActuatorPreset> presets = traj::builtin_presets();
    ExecuteSettings execute;
    SynthesizeSettings synthesize;

    /// Throws ConfigError on inconsistent settings or an unknown preset.
    void validate() const;
};

/// Reads a JSON config on top of the defaults. Unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

/// File layout under the output directory.
struct Layout {
    std::filesystem::path root;

    std::filesystem::path corpus() const { return root / "corpus.csv"; }
    std::filesystem::path autoencoder() const { return root / "autoencoder.ckpt.json"; }
    std::filesystem::path gan() const { return root / "cgan.ckpt.json"; }
    std::filesystem::path autoencoder_log() const { return root / "ae_log.csv"; }
    std::filesystem::path gan_log() const { return root / "gan_log.csv"; }
    std::filesystem::path synthetic(const std::optional<data::CarefulnessClass>& label) const;
    std::filesystem::path report() const { return root / "report"; }
    std::filesystem::path execution() const { return root / "execution"; }
};

enum class TrainStage { All, Autoencoder, Gan };

/// Worker count from KINEGEN_THREADS (default 1).
std::size_t threads_from_env();

void cmd_generate(const RunConfig& cfg, std::ostream& log);
void cmd_train(const RunConfig& cfg, TrainStage stage, const std::optional<std::filesystem::path>& corpus,
               std::ostream& log);
void cmd_synthesize(const RunConfig& cfg, std::ostream& log);
void cmd_evaluate(const RunConfig& cfg, const std::optional<std::filesystem::path>& real,
                  const std::optional<std::filesystem::path>& synth, std::ostream& log);
void cmd_execute(const RunConfig& cfg, const std::optional<std::filesystem::path>& profiles, std::ostream& log);
/// generate, train, synthesize (both classes), evaluate, execute on the synthetic profiles.
void cmd_report(const RunConfig& cfg, std::ostream& log);

/// Seeded choice of `per_class` profile indices per class, ascending.
std::vector<std::size_t> select_profiles(const std::vector<data::VelocityProfile>& profiles, std::size_t per_class,
                                         std::uint64_t seed);

}  // namespace kinegen::pipeline
