#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "kinegen/eval_metrics.hpp"
#include "kinegen/profile_data.hpp"

namespace kinegen::traj {

using Vec3 = Eigen::Vector3d;
using data::VelocityProfile;

/// Robot frame: x forward, y lateral, z up.
enum class Plane { Frontal, Sagittal, Oblique };

inline constexpr Plane kAllPlanes[] = {Plane::Frontal, Plane::Sagittal, Plane::Oblique};

std::string_view to_string(Plane p);
Plane parse_plane(std::string_view text);
Vec3 plane_direction(Plane p);

struct CartesianPath {
    Vec3 start = Vec3::Zero();
    Vec3 end = Vec3::UnitX();
    Plane plane = Plane::Sagittal;

    double length() const { return (end - start).norm(); }
    Vec3 direction() const { return (end - start) / length(); }
    Vec3 point_at(double arc) const { return start + arc * direction(); }
    void validate() const;
};

CartesianPath make_path(Plane plane, double length, const Vec3& origin = Vec3::Zero());

/// Trapezoidal integral of the speed samples (m).
double travelled_distance(const VelocityProfile& p);
/// Scales samples so the travelled distance equals path_length. Throws DegenerateProfileError on a
/// zero integral.
VelocityProfile rescale_profile(const VelocityProfile& p, double path_length);

/// Trapezoidal running integral at the sample times.
std::vector<double> cumulative_distance(const VelocityProfile& p);
/// Exact distance at time t for the piecewise-linear speed through the samples (clamped to [0, T]).
double distance_at(const VelocityProfile& p, const std::vector<double>& cumulative, double t);
/// Earliest time at which distance_at reaches `arc` (clamped to [0, total]).
double time_at_distance(const VelocityProfile& p, const std::vector<double>& cumulative, double arc);

struct Waypoint {
    Vec3 position = Vec3::Zero();
    double t = 0.0;
    double arc = 0.0;  // distance from the path start
};

struct TimedWaypointList {
    std::vector<Waypoint> entries;

    double duration() const { return entries.empty() ? 0.0 : entries.back().t; }
    /// Throws ArgumentError unless t starts at 0 and t, arc strictly increase.
    void validate() const;
};

/// Fixed spatial step: waypoints every ds metres, each stamped with the time it is reached.
TimedWaypointList spatial_waypoints(const VelocityProfile& p, const CartesianPath& path, double ds = 0.01);
/// Fixed time step: waypoints every dt_step seconds at the distance covered by then.
TimedWaypointList temporal_waypoints(const VelocityProfile& p, const CartesianPath& path, double dt_step = 0.05);

enum class Regime { Spatial, Temporal };
std::string_view to_string(Regime r);
Regime parse_regime(std::string_view text);

TimedWaypointList make_waypoints(const VelocityProfile& p, const CartesianPath& path, Regime regime, double step);

struct ActuatorModel {
    double v_max = 1.0;
    double a_max = 2.0;
    double tau = 0.08;
    double control_dt = 0.005;

    void validate() const;
};

struct ActuatorPreset {
    std::string name;
    ActuatorModel actuator;
    Regime regime = Regime::Spatial;
    double step = 0.01;  // ds (m) for the spatial regime, dt_step (s) for the temporal one
    std::map<Plane, double> path_length;
    double noise_sd = 0.005;  // m/s on the commanded speed

    double length_for(Plane p) const;
    void validate() const;
};

std::vector<ActuatorPreset> builtin_presets();
/// Throws ConfigError listing the available names.
const ActuatorPreset& find_preset(const std::vector<ActuatorPreset>& presets, std::string_view name);

nlohmann::json to_json(const ActuatorPreset& p);
ActuatorPreset preset_from_json(const nlohmann::json& j);
std::vector<ActuatorPreset> presets_from_json(const nlohmann::json& j);

struct TraceSample {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
    double speed = 0.0;
};

struct TraceMetadata {
    std::size_t profile_id = 0;
    Plane plane = Plane::Sagittal;
    std::size_t repetition = 0;
};

struct ExecutionTrace {
    std::vector<TraceSample> samples;
    TraceMetadata metadata;
};

struct SimulationOptions {
    double noise_sd = 0.0;
    std::uint64_t seed = 0;
    double settle_time = 0.25;  // simulated time after the last waypoint
};

/// Slopes of the monotone cubic Hermite interpolant of arc length against time through the waypoints.
std::vector<double> waypoint_slopes(const TimedWaypointList& waypoints);
/// Derivative of that interpolant at t; zero outside the schedule.
double commanded_speed(const TimedWaypointList& waypoints, const std::vector<double>& slopes, double t);

/// Tracks the commanded speed through a first-order lag with acceleration and speed clamps.
ExecutionTrace simulate_execution(const TimedWaypointList& waypoints, const ActuatorModel& actuator,
                                  const SimulationOptions& opts = {});

/// Central differences of position (one-sided at the ends).
VelocityProfile executed_speed(const ExecutionTrace& trace);

struct ExecutionMetrics {
    double peak_planned = 0.0;
    double peak_executed = 0.0;
    double pearson_r = 0.0;
    double peak_delay = 0.0;
};

/// The planned profile is linearly resampled onto the executed time base (zero past its end).
ExecutionMetrics compare(const VelocityProfile& planned, const VelocityProfile& executed);

struct MetricsSummary {
    eval::Summary peak_planned;
    eval::Summary peak_executed;
    eval::Summary pearson_r;
    eval::Summary peak_delay;
};

struct RepeatResult {
    std::vector<ExecutionMetrics> runs;
    std::vector<ExecutionTrace> traces;
    MetricsSummary summary;
};

/// Runs body(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

/// n noisy repetitions of one (already rescaled) profile. Repetition i uses derive_seed(seed, "exec", i).
RepeatResult repeat_runs(const VelocityProfile& planned, const CartesianPath& path, const ActuatorPreset& preset,
                         std::size_t n, std::uint64_t seed, std::size_t threads = 1);

inline constexpr const char* kMetricsHeader =
    "profile_id,class,plane,repetition,peak_planned,peak_executed,pearson_r,peak_delay_s";

struct MetricsRow {
    std::size_t profile_id = 0;
    std::string label;
    Plane plane = Plane::Sagittal;
    std::size_t repetition = 0;
    ExecutionMetrics metrics;
};

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string trace_csv(const ExecutionTrace& trace);

}  // namespace kinegen::traj
