#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kinegen/rng.hpp"

namespace kinegen::data {

/// Conditioning variable. Numeric codes are part of the file formats and must not change.
enum class CarefulnessClass : int { NotCareful = 0, Careful = 1 };

std::string_view to_string(CarefulnessClass c);
CarefulnessClass class_from_code(int code);
/// Accepts "0"/"1", "NC"/"C" and "NotCareful"/"Careful" (case-insensitive).
CarefulnessClass parse_class(std::string_view text);

inline constexpr double kDefaultSampleRateHz = 22.0;

/// Uniformly sampled tangential speed series (m/s).
struct VelocityProfile {
    std::vector<double> samples;
    double dt = 1.0 / kDefaultSampleRateHz;
    std::optional<CarefulnessClass> label;

    std::size_t size() const { return samples.size(); }
    double duration() const { return samples.empty() ? 0.0 : dt * static_cast<double>(samples.size() - 1); }
    double peak() const;

    /// Throws ArgumentError if any invariant (length >= 2, dt > 0, finite non-negative samples) fails.
    void validate() const;

    bool operator==(const VelocityProfile&) const = default;
};

struct NormStats {
    double min = 0.0;
    double max = 1.0;

    void validate() const;
    bool operator==(const NormStats&) const = default;
};

struct ClassParams {
    double duration_min = 0.0;  // s
    double duration_max = 0.0;
    double peak_min = 0.0;  // m/s
    double peak_max = 0.0;

    bool operator==(const ClassParams&) const = default;
};

/// Surrogate corpus parameters. Defaults give 499 NotCareful and 502 Careful profiles.
struct SynthConfig {
    std::size_t count_not_careful = 499;
    std::size_t count_careful = 502;
    ClassParams not_careful{0.8, 1.4, 0.6, 1.0};
    ClassParams careful{1.6, 2.6, 0.15, 0.40};
    double dt = 1.0 / kDefaultSampleRateHz;
    double noise_fraction = 0.02;        // noise sd as a fraction of the drawn peak
    std::size_t smoothing_window = 3;    // centred moving-average width applied to the noise
    double heldout_fraction = 0.1;

    const ClassParams& params_for(CarefulnessClass c) const
    {
        return c == CarefulnessClass::Careful ? careful : not_careful;
    }
    void validate() const;
    bool operator==(const SynthConfig&) const = default;
};

struct ProfileCorpus {
    std::vector<VelocityProfile> profiles;
    NormStats normalization;
    std::vector<std::size_t> train;
    std::vector<std::size_t> heldout;
    std::optional<std::uint64_t> seed;
    std::optional<SynthConfig> config;

    std::size_t count(CarefulnessClass c) const;
    /// Throws ArgumentError unless train/heldout are disjoint and cover every index.
    void validate_split() const;
    bool operator==(const ProfileCorpus&) const = default;
};

/// Minimum-jerk speed shape 30t^2 - 60t^3 + 30t^4; zero outside [0, 1]. Peak 1.875 at t = 0.5.
double min_jerk_shape(double tau);
inline constexpr double kMinJerkPeak = 1.875;

VelocityProfile synth_profile(CarefulnessClass c, Rng& rng, const SynthConfig& cfg);
ProfileCorpus make_dataset(const SynthConfig& cfg, std::uint64_t seed);

/// Linear interpolation onto n points spanning the same duration.
VelocityProfile resample(const VelocityProfile& profile, std::size_t n);

VelocityProfile normalize(const VelocityProfile& profile, const NormStats& stats);
VelocityProfile denormalize(const VelocityProfile& profile, const NormStats& stats);

/// Min/max over the samples of the selected profiles.
NormStats compute_norm_stats(std::span<const VelocityProfile> profiles, std::span<const std::size_t> indices);

/// resample to n then normalize: the fixed-length representation fed to the networks.
std::vector<double> network_input(const VelocityProfile& profile, std::size_t n, const NormStats& stats);

std::filesystem::path manifest_path_for(const std::filesystem::path& csv_path);

/// Writes the corpus CSV and the sibling manifest JSON.
void save_corpus(const ProfileCorpus& corpus, const std::filesystem::path& path);
/// Reads the CSV and, when present, its manifest. Without a manifest every profile lands in the
/// training split and normalization is computed from the data.
ProfileCorpus load_corpus(const std::filesystem::path& path);

/// CSV only (`profile_id,label,dt,sample_index,speed_mps`).
void write_profiles_csv(std::span<const VelocityProfile> profiles, const std::filesystem::path& path);
std::vector<VelocityProfile> read_profiles_csv(const std::filesystem::path& path);

}  // namespace kinegen::data
