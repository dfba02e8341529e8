#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinegen/profile_data.hpp"

namespace kinegen::eval {

using Series = std::vector<double>;

/// Two leading principal directions of a point cloud.
struct Pca2D {
    std::vector<double> mean;
    std::array<std::vector<double>, 2> directions;
    std::array<double, 2> explained_variance{0.0, 0.0};
    double total_variance = 0.0;
};

struct PowerIterationOptions {
    std::size_t max_iterations = 1000;
    double tolerance = 1e-10;
};

/// Sample covariance, then power iteration with deflation for the top two eigenpairs.
Pca2D pca_fit(std::span<const Series> data, const PowerIterationOptions& opts = {});
std::array<double, 2> pca_project(const Pca2D& pca, std::span<const double> point);

/// For every synthetic sample, Euclidean distance to its closest real sample.
std::vector<double> nearest_neighbor_distances(std::span<const Series> synth, std::span<const Series> real);
/// Leave-one-out variant over a single set: distance from each sample to its closest other sample.
std::vector<double> nearest_neighbor_distances_within(std::span<const Series> samples);

/// Classifier features: peak speed and travelled distance (mean speed times duration).
std::array<double, 2> consistency_features(const data::VelocityProfile& p);

struct LogisticModel {
    std::array<double, 2> feature_mean{0.0, 0.0};
    std::array<double, 2> feature_scale{1.0, 1.0};
    std::array<double, 2> weights{0.0, 0.0};
    double bias = 0.0;

    /// Probability of Careful.
    double probability(const std::array<double, 2>& features) const;
    data::CarefulnessClass predict(const std::array<double, 2>& features) const;
};

struct LogisticOptions {
    std::size_t iterations = 2000;
    double learning_rate = 0.5;
};

/// Full-batch gradient descent on standardized features. Both classes must be present.
LogisticModel fit_logistic(std::span<const data::VelocityProfile> labelled, const LogisticOptions& opts = {});

struct ConsistencyResult {
    double accuracy = 0.0;        // fraction of synthetic samples predicted as their conditioning label
    double train_accuracy = 0.0;  // classifier accuracy on the real profiles it was fitted to
    LogisticModel model;
};

ConsistencyResult label_consistency(std::span<const data::VelocityProfile> real,
                                    std::span<const data::VelocityProfile> synth, const LogisticOptions& opts = {});

/// Throws UndefinedCorrelationError when either series is constant.
double pearson(std::span<const double> a, std::span<const double> b);

struct Summary {
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double sd = 0.0;  // population
    double q1 = 0.0;
    double q3 = 0.0;
};

/// Linear-interpolation quantile (q in [0, 1]) of an unsorted sample.
double quantile(std::vector<double> values, double q);
Summary summarize(std::span<const double> values);

struct ClassStats {
    Summary peak;
    Summary duration;
};

/// Keyed by "NotCareful", "Careful" or "Unlabeled".
std::map<std::string, ClassStats> class_stats(std::span<const data::VelocityProfile> profiles);

struct PcaPoint {
    double x = 0.0;
    double y = 0.0;
    std::string source;  // "real" or "synth"
    std::string label;
};

struct FidelityReport {
    std::map<std::string, ClassStats> real_stats;
    std::map<std::string, ClassStats> synth_stats;
    std::vector<double> nn_distances;             // synthetic -> nearest real
    std::vector<double> nn_quantiles;             // at kReportQuantiles
    double real_nn_p10 = 0.0;                     // 10th percentile of real leave-one-out distances
    double fraction_within_real_p10 = 0.0;        // synthetic samples closer than real_nn_p10
    std::size_t exact_duplicates = 0;
    ConsistencyResult consistency;
    Pca2D pca;
    std::vector<PcaPoint> pca_points;
};

inline constexpr std::array<double, 5> kReportQuantiles{0.05, 0.25, 0.5, 0.75, 0.95};

/// Compares a real and a synthetic set. Distances and PCA use the length-n normalized form.
FidelityReport fidelity_report(std::span<const data::VelocityProfile> real,
                               std::span<const data::VelocityProfile> synth, std::size_t n,
                               const data::NormStats& stats);

nlohmann::json to_json(const FidelityReport& report);
/// Writes fidelity.json, pca_points.csv, nn_distances.csv and class_stats.csv into dir.
void write_report(const FidelityReport& report, const std::filesystem::path& dir);

}  // namespace kinegen::eval
