#include "kinegen/trajectory.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "kinegen/errors.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/text.hpp"

namespace kinegen::traj {

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

// Rescaled profiles must cover the path to this relative tolerance.
constexpr double kCoverageTolerance = 1e-3;

void require_covers(const VelocityProfile& p, const CartesianPath& path)
{
    const double total = travelled_distance(p);
    const double length = path.length();
    if (std::abs(total - length) > kCoverageTolerance * length)
        throw ArgumentError("profile covers " + text::format_double(total) + " m but the path is " +
                            text::format_double(length) + " m; rescale it first");
}

}  // namespace

std::string_view to_string(Plane p)
{
    switch (p) {
    case Plane::Frontal: return "frontal";
    case Plane::Sagittal: return "sagittal";
    case Plane::Oblique: return "oblique";
    }
    return "unknown";
}

Plane parse_plane(std::string_view text)
{
    const auto s = lower(text);
    for (Plane p : kAllPlanes)
        if (s == to_string(p))
            return p;
    throw ArgumentError("unknown plane '" + std::string(text) + "' (expected frontal, sagittal or oblique)");
}

Vec3 plane_direction(Plane p)
{
    switch (p) {
    case Plane::Frontal: return Vec3::UnitY();
    case Plane::Sagittal: return Vec3::UnitX();
    case Plane::Oblique: return Vec3(1.0, 1.0, 0.0).normalized();
    }
    return Vec3::UnitX();
}

void CartesianPath::validate() const
{
    if (!start.allFinite() || !end.allFinite())
        throw ArgumentError("path endpoints must be finite");
    if (!(length() > 0.0))
        throw ArgumentError("path start and end coincide");
}

CartesianPath make_path(Plane plane, double length, const Vec3& origin)
{
    if (!(length > 0.0) || !std::isfinite(length))
        throw ArgumentError("path length must be positive, got " + text::format_double(length));
    return {origin, origin + length * plane_direction(plane), plane};
}

double travelled_distance(const VelocityProfile& p)
{
    double s = 0.0;
    for (std::size_t k = 1; k < p.samples.size(); ++k)
        s += 0.5 * (p.samples[k - 1] + p.samples[k]) * p.dt;
    return s;
}

VelocityProfile rescale_profile(const VelocityProfile& p, double path_length)
{
    p.validate();
    if (!(path_length > 0.0) || !std::isfinite(path_length))
        throw ArgumentError("target path length must be positive, got " + text::format_double(path_length));
    const double integral = travelled_distance(p);
    if (!(integral > 0.0))
        throw DegenerateProfileError("cannot rescale a profile with zero travelled distance");
    VelocityProfile out = p;
    const double factor = path_length / integral;
    for (auto& v : out.samples)
        v *= factor;
    return out;
}

std::vector<double> cumulative_distance(const VelocityProfile& p)
{
    std::vector<double> s(p.samples.size(), 0.0);
    for (std::size_t k = 1; k < p.samples.size(); ++k)
        s[k] = s[k - 1] + 0.5 * (p.samples[k - 1] + p.samples[k]) * p.dt;
    return s;
}

double distance_at(const VelocityProfile& p, const std::vector<double>& cumulative, double t)
{
    const auto n = p.samples.size();
    if (n < 2 || cumulative.size() != n)
        throw ShapeError("cumulative series does not match the profile");
    if (t <= 0.0)
        return 0.0;
    if (t >= p.duration())
        return cumulative.back();
    const auto j = std::min(static_cast<std::size_t>(t / p.dt), n - 2);
    const double tau = t - static_cast<double>(j) * p.dt;
    const double v0 = p.samples[j];
    const double v1 = p.samples[j + 1];
    return cumulative[j] + v0 * tau + 0.5 * (v1 - v0) / p.dt * tau * tau;
}

double time_at_distance(const VelocityProfile& p, const std::vector<double>& cumulative, double arc)
{
    const auto n = p.samples.size();
    if (n < 2 || cumulative.size() != n)
        throw ShapeError("cumulative series does not match the profile");
    if (arc <= 0.0)
        return 0.0;
    arc = std::min(arc, cumulative.back());
    const auto j = static_cast<std::size_t>(std::lower_bound(cumulative.begin(), cumulative.end(), arc) -
                                            cumulative.begin());
    if (j == 0)
        return 0.0;
    const auto i = j - 1;
    // Within the interval the speed is linear, so distance is quadratic in time.
    const double r = arc - cumulative[i];
    const double b = p.samples[i];
    const double a = 0.5 * (p.samples[j] - p.samples[i]) / p.dt;
    const double disc = std::max(0.0, b * b + 4.0 * a * r);
    const double denom = b + std::sqrt(disc);
    const double tau = denom > 0.0 ? std::clamp(2.0 * r / denom, 0.0, p.dt) : p.dt;
    return static_cast<double>(i) * p.dt + tau;
}

void TimedWaypointList::validate() const
{
    if (entries.size() < 2)
        throw ArgumentError("a waypoint list needs at least 2 entries");
    if (entries.front().t != 0.0)
        throw ArgumentError("waypoint timestamps must start at 0");
    for (std::size_t k = 1; k < entries.size(); ++k) {
        if (!(entries[k].t > entries[k - 1].t))
            throw ArgumentError("waypoint timestamps must strictly increase (entry " + std::to_string(k) + ")");
        if (!(entries[k].arc > entries[k - 1].arc))
            throw ArgumentError("waypoint arc lengths must strictly increase (entry " + std::to_string(k) + ")");
    }
}

TimedWaypointList spatial_waypoints(const VelocityProfile& p, const CartesianPath& path, double ds)
{
    p.validate();
    path.validate();
    const double length = path.length();
    if (!(ds > 0.0) || ds > length)
        throw ArgumentError("spatial step must lie in (0, path length], got " + text::format_double(ds));
    require_covers(p, path);

    const auto cum = cumulative_distance(p);
    const auto steps = static_cast<std::size_t>(std::floor(length / ds + 1e-9));
    std::vector<double> arcs;
    arcs.reserve(steps + 2);
    for (std::size_t k = 0; k <= steps; ++k)
        arcs.push_back(std::min(static_cast<double>(k) * ds, length));
    if (length - arcs.back() > 1e-9 * length)
        arcs.push_back(length);

    // Arc targets are in path units; the profile integral may differ from the length by rounding.
    const double to_profile = cum.back() / length;
    TimedWaypointList out;
    out.entries.reserve(arcs.size());
    for (double arc : arcs)
        out.entries.push_back({path.point_at(arc), time_at_distance(p, cum, arc * to_profile), arc});
    out.validate();
    return out;
}

TimedWaypointList temporal_waypoints(const VelocityProfile& p, const CartesianPath& path, double dt_step)
{
    p.validate();
    path.validate();
    const double duration = p.duration();
    if (!(dt_step > 0.0) || dt_step >= duration)
        throw ArgumentError("time step must lie in (0, duration), got " + text::format_double(dt_step));
    require_covers(p, path);

    const auto cum = cumulative_distance(p);
    const double to_path = path.length() / cum.back();
    std::vector<double> times;
    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * dt_step;
        if (t >= duration - 1e-9 * duration)
            break;
        times.push_back(t);
    }
    times.push_back(duration);

    TimedWaypointList out;
    for (double t : times) {
        const double arc = distance_at(p, cum, t) * to_path;
        if (!out.entries.empty() && !(arc > out.entries.back().arc))
            continue;
        out.entries.push_back({path.point_at(arc), t, arc});
    }
    out.validate();
    return out;
}

std::string_view to_string(Regime r)
{
    return r == Regime::Spatial ? "spatial" : "temporal";
}

Regime parse_regime(std::string_view text)
{
    const auto s = lower(text);
    if (s == "spatial")
        return Regime::Spatial;
    if (s == "temporal")
        return Regime::Temporal;
    throw ConfigError("unknown timing regime '" + std::string(text) + "' (expected spatial or temporal)");
}

TimedWaypointList make_waypoints(const VelocityProfile& p, const CartesianPath& path, Regime regime, double step)
{
    return regime == Regime::Spatial ? spatial_waypoints(p, path, step) : temporal_waypoints(p, path, step);
}

void ActuatorModel::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw ConfigError(std::string("actuator ") + name + " must be positive and finite");
    };
    positive(v_max, "v_max");
    positive(a_max, "a_max");
    positive(tau, "tau");
    positive(control_dt, "control_dt");
    if (control_dt > 0.02)
        throw ConfigError("actuator control_dt must not exceed 0.02 s");
}

double ActuatorPreset::length_for(Plane p) const
{
    const auto it = path_length.find(p);
    if (it == path_length.end())
        throw ConfigError("preset '" + name + "' has no path length for plane " + std::string(to_string(p)));
    return it->second;
}

void ActuatorPreset::validate() const
{
    if (name.empty())
        throw ConfigError("preset name must not be empty");
    actuator.validate();
    if (!(step > 0.0))
        throw ConfigError("preset '" + name + "' step must be positive");
    for (Plane p : kAllPlanes)
        if (!(length_for(p) > 0.0))
            throw ConfigError("preset '" + name + "' path lengths must be positive");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
        throw ConfigError("preset '" + name + "' noise_sd must be non-negative");
}

std::vector<ActuatorPreset> builtin_presets()
{
    ActuatorPreset baxter;
    baxter.name = "baxter-like";
    baxter.actuator = {1.0, 2.5, 0.05, 0.005};
    baxter.regime = Regime::Spatial;
    baxter.step = 0.01;
    baxter.path_length = {{Plane::Frontal, 0.6}, {Plane::Sagittal, 0.6}, {Plane::Oblique, 0.6}};
    baxter.noise_sd = 0.005;

    ActuatorPreset icub;
    icub.name = "icub-like";
    icub.actuator = {0.6, 3.0, 0.04, 0.005};
    icub.regime = Regime::Temporal;
    icub.step = 0.05;
    icub.path_length = {{Plane::Frontal, 0.32}, {Plane::Sagittal, 0.26}, {Plane::Oblique, 0.34}};
    icub.noise_sd = 0.005;

    ActuatorPreset ideal;
    ideal.name = "ideal";
    ideal.actuator = {1e3, 1e6, 1e-4, 0.005};
    ideal.regime = Regime::Temporal;
    ideal.step = 1.0 / data::kDefaultSampleRateHz;
    ideal.path_length = {{Plane::Frontal, 0.6}, {Plane::Sagittal, 0.6}, {Plane::Oblique, 0.6}};
    ideal.noise_sd = 0.0;

    return {baxter, icub, ideal};
}

const ActuatorPreset& find_preset(const std::vector<ActuatorPreset>& presets, std::string_view name)
{
    for (const auto& p : presets)
        if (p.name == name)
            return p;
    std::string names;
    for (const auto& p : presets)
        names += (names.empty() ? "" : ", ") + p.name;
    throw ConfigError("unknown preset '" + std::string(name) + "'; available: " + names);
}

nlohmann::json to_json(const ActuatorPreset& p)
{
    nlohmann::json lengths = nlohmann::json::object();
    for (const auto& [plane, len] : p.path_length)
        lengths[std::string(to_string(plane))] = len;
    return {{"name", p.name},
            {"v_max", p.actuator.v_max},
            {"a_max", p.actuator.a_max},
            {"tau", p.actuator.tau},
            {"control_dt", p.actuator.control_dt},
            {"regime", std::string(to_string(p.regime))},
            {"step", p.step},
            {"path_length", lengths},
            {"noise_sd", p.noise_sd}};
}

ActuatorPreset preset_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ConfigError("a preset must be a JSON object");
    auto number = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number())
            throw ConfigError(std::string("preset field '") + key + "' is required and must be a number");
        return j.at(key).get<double>();
    };
    ActuatorPreset p;
    if (!j.contains("name") || !j.at("name").is_string())
        throw ConfigError("preset field 'name' is required");
    p.name = j.at("name").get<std::string>();
    p.actuator = {number("v_max"), number("a_max"), number("tau"), number("control_dt")};
    if (j.contains("regime"))
        p.regime = parse_regime(j.at("regime").get<std::string>());
    p.step = j.contains("step") ? number("step") : (p.regime == Regime::Spatial ? 0.01 : 0.05);
    p.noise_sd = j.contains("noise_sd") ? number("noise_sd") : 0.005;
    if (!j.contains("path_length"))
        throw ConfigError("preset '" + p.name + "' needs path_length");
    const auto& lengths = j.at("path_length");
    if (lengths.is_number()) {
        for (Plane plane : kAllPlanes)
            p.path_length[plane] = lengths.get<double>();
    } else if (lengths.is_object()) {
        for (const auto& [key, value] : lengths.items()) {
            Plane plane;
            try {
                plane = parse_plane(key);
            } catch (const ArgumentError& e) {
                throw ConfigError(e.what());
            }
            if (!value.is_number())
                throw ConfigError("path length for " + key + " must be a number");
            p.path_length[plane] = value.get<double>();
        }
    } else {
        throw ConfigError("preset path_length must be a number or an object keyed by plane");
    }
    p.validate();
    return p;
}

std::vector<ActuatorPreset> presets_from_json(const nlohmann::json& j)
{
    const nlohmann::json& list = j.is_object() && j.contains("presets") ? j.at("presets") : j;
    if (!list.is_array())
        throw ConfigError("presets must be a JSON array");
    std::vector<ActuatorPreset> out;
    for (const auto& item : list)
        out.push_back(preset_from_json(item));
    return out;
}

std::vector<double> waypoint_slopes(const TimedWaypointList& waypoints)
{
    const auto& wp = waypoints.entries;
    const auto n = wp.size();
    if (n < 2)
        throw ArgumentError("a waypoint list needs at least 2 entries");
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        h[j] = wp[j + 1].t - wp[j].t;
        delta[j] = (wp[j + 1].arc - wp[j].arc) / h[j];
    }
    std::vector<double> m(n, delta[0]);
    if (n == 2)
        return m;
    // Fritsch-Butland weighted harmonic mean keeps the interpolant monotone.
    for (std::size_t j = 1; j + 1 < n; ++j) {
        if (delta[j - 1] * delta[j] <= 0.0) {
            m[j] = 0.0;
            continue;
        }
        const double w1 = 2.0 * h[j] + h[j - 1];
        const double w2 = h[j] + 2.0 * h[j - 1];
        m[j] = (w1 + w2) / (w1 / delta[j - 1] + w2 / delta[j]);
    }
    auto end_slope = [](double h0, double h1, double d0, double d1) {
        double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if (s * d0 <= 0.0)
            return 0.0;
        if (d0 * d1 <= 0.0 && std::abs(s) > 3.0 * std::abs(d0))
            return 3.0 * d0;
        return s;
    };
    m[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    m[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    return m;
}

double commanded_speed(const TimedWaypointList& waypoints, const std::vector<double>& slopes, double t)
{
    const auto& wp = waypoints.entries;
    if (slopes.size() != wp.size())
        throw ShapeError("slope count does not match the waypoint list");
    if (t < wp.front().t || t >= wp.back().t)
        return 0.0;
    const auto it = std::upper_bound(wp.begin(), wp.end(), t, [](double v, const Waypoint& w) { return v < w.t; });
    const auto j = static_cast<std::size_t>(it - wp.begin()) - 1;
    const double h = wp[j + 1].t - wp[j].t;
    const double delta = (wp[j + 1].arc - wp[j].arc) / h;
    const double s = (t - wp[j].t) / h;
    const double v = 6.0 * s * (1.0 - s) * delta + (3.0 * s * s - 4.0 * s + 1.0) * slopes[j] +
                     (3.0 * s * s - 2.0 * s) * slopes[j + 1];
    return std::max(0.0, v);
}

ExecutionTrace simulate_execution(const TimedWaypointList& waypoints, const ActuatorModel& actuator,
                                  const SimulationOptions& opts)
{
    waypoints.validate();
    actuator.validate();
    if (!(opts.noise_sd >= 0.0) || !(opts.settle_time >= 0.0))
        throw ArgumentError("noise sd and settle time must be non-negative");

    const auto& wp = waypoints.entries;
    const Vec3 origin = wp.front().position;
    const Vec3 dir = (wp.back().position - origin).normalized();
    const double t_end = wp.back().t;
    const double dt = actuator.control_dt;
    const auto steps = static_cast<std::size_t>(std::ceil((t_end + opts.settle_time) / dt - 1e-9));

    const auto slopes = waypoint_slopes(waypoints);

    Rng rng(opts.seed);
    std::normal_distribution<double> noise(0.0, opts.noise_sd > 0.0 ? opts.noise_sd : 1.0);
    const double alpha = -std::expm1(-dt / actuator.tau);
    const double dv_max = actuator.a_max * dt;

    std::vector<double> v(steps + 1, 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
        // Command sampled at the end of the step, so a vanishing lag tracks it exactly.
        const double t = static_cast<double>(k + 1) * dt;
        double cmd = commanded_speed(waypoints, slopes, t);
        if (t < t_end && opts.noise_sd > 0.0)
            cmd += noise(rng);
        const double dv = std::clamp((cmd - v[k]) * alpha, -dv_max, dv_max);
        v[k + 1] = std::clamp(v[k] + dv, 0.0, actuator.v_max);
    }

    // Explicit midpoint in position, so central differences reproduce the speed record.
    std::vector<double> s(steps + 1, 0.0);
    if (steps >= 1)
        s[1] = 0.5 * dt * (v[0] + v[1]);
    for (std::size_t k = 1; k < steps; ++k)
        s[k + 1] = s[k - 1] + 2.0 * dt * v[k];

    ExecutionTrace trace;
    trace.samples.reserve(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
        trace.samples.push_back({static_cast<double>(k) * dt, origin + s[k] * dir, v[k]});
    return trace;
}

VelocityProfile executed_speed(const ExecutionTrace& trace)
{
    const auto& x = trace.samples;
    const auto n = x.size();
    if (n < 2)
        throw ArgumentError("a trace needs at least 2 samples to differentiate");
    VelocityProfile out;
    out.dt = (x.back().t - x.front().t) / static_cast<double>(n - 1);
    out.samples.resize(n);
    out.samples[0] = (x[1].position - x[0].position).norm() / (x[1].t - x[0].t);
    out.samples[n - 1] = (x[n - 1].position - x[n - 2].position).norm() / (x[n - 1].t - x[n - 2].t);
    for (std::size_t k = 1; k + 1 < n; ++k)
        out.samples[k] = (x[k + 1].position - x[k - 1].position).norm() / (x[k + 1].t - x[k - 1].t);
    return out;
}

namespace {

std::size_t argmax(const std::vector<double>& v)
{
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

ExecutionMetrics compare(const VelocityProfile& planned, const VelocityProfile& executed)
{
    planned.validate();
    executed.validate();
    std::vector<double> resampled(executed.size(), 0.0);
    const double t_planned = planned.duration();
    for (std::size_t k = 0; k < executed.size(); ++k) {
        const double t = static_cast<double>(k) * executed.dt;
        if (t > t_planned)
            continue;
        const double pos = t / planned.dt;
        const auto j = std::min(static_cast<std::size_t>(pos), planned.size() - 2);
        const double w = pos - static_cast<double>(j);
        resampled[k] = (1.0 - w) * planned.samples[j] + w * planned.samples[j + 1];
    }
    ExecutionMetrics m;
    m.pearson_r = eval::pearson(resampled, executed.samples);
    const auto ip = argmax(planned.samples);
    const auto ie = argmax(executed.samples);
    m.peak_planned = planned.samples[ip];
    m.peak_executed = executed.samples[ie];
    m.peak_delay = static_cast<double>(ie) * executed.dt - static_cast<double>(ip) * planned.dt;
    return m;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body)
{
    threads = std::min(std::max<std::size_t>(threads, 1), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

RepeatResult repeat_runs(const VelocityProfile& planned, const CartesianPath& path, const ActuatorPreset& preset,
                         std::size_t n, std::uint64_t seed, std::size_t threads)
{
    if (n < 1)
        throw ArgumentError("repeat_runs needs at least one repetition");
    preset.validate();
    const auto waypoints = make_waypoints(planned, path, preset.regime, preset.step);

    RepeatResult out;
    out.runs.resize(n);
    out.traces.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
        SimulationOptions opts;
        opts.noise_sd = preset.noise_sd;
        opts.seed = derive_seed(seed, "exec", i);
        auto trace = simulate_execution(waypoints, preset.actuator, opts);
        trace.metadata.plane = path.plane;
        trace.metadata.repetition = i;
        out.runs[i] = compare(planned, executed_speed(trace));
        out.traces[i] = std::move(trace);
    });

    auto column = [&](double ExecutionMetrics::*field) {
        std::vector<double> v;
        for (const auto& r : out.runs)
            v.push_back(r.*field);
        return eval::summarize(v);
    };
    out.summary = {column(&ExecutionMetrics::peak_planned), column(&ExecutionMetrics::peak_executed),
                   column(&ExecutionMetrics::pearson_r), column(&ExecutionMetrics::peak_delay)};
    return out;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows)
{
    using text::format_double;
    std::string out = std::string(kMetricsHeader) + "\n";
    for (const auto& r : rows)
        out += std::to_string(r.profile_id) + "," + r.label + "," + std::string(to_string(r.plane)) + "," +
               std::to_string(r.repetition) + "," + format_double(r.metrics.peak_planned) + "," +
               format_double(r.metrics.peak_executed) + "," + format_double(r.metrics.pearson_r) + "," +
               format_double(r.metrics.peak_delay) + "\n";
    return out;
}

std::string trace_csv(const ExecutionTrace& trace)
{
    using text::format_double;
    std::string out = "t,x,y,z,speed_mps\n";
    for (const auto& s : trace.samples)
        out += format_double(s.t) + "," + format_double(s.position.x()) + "," + format_double(s.position.y()) + "," +
               format_double(s.position.z()) + "," + format_double(s.speed) + "\n";
    return out;
}

}  // namespace kinegen::traj
