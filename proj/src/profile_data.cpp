#include "kinegen/profile_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kinegen/errors.hpp"
#include "kinegen/text.hpp"

namespace kinegen::data {

using nlohmann::json;

std::string_view to_string(CarefulnessClass c)
{
    return c == CarefulnessClass::Careful ? "Careful" : "NotCareful";
}

CarefulnessClass class_from_code(int code)
{
    if (code == 0)
        return CarefulnessClass::NotCareful;
    if (code == 1)
        return CarefulnessClass::Careful;
    throw ArgumentError("unknown carefulness class code " + std::to_string(code));
}

CarefulnessClass parse_class(std::string_view text)
{
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == "0" || s == "nc" || s == "notcareful" || s == "not_careful")
        return CarefulnessClass::NotCareful;
    if (s == "1" || s == "c" || s == "careful")
        return CarefulnessClass::Careful;
    throw ArgumentError("unknown carefulness class '" + std::string(text) + "' (expected C or NC)");
}

double VelocityProfile::peak() const
{
    return samples.empty() ? 0.0 : *std::max_element(samples.begin(), samples.end());
}

void VelocityProfile::validate() const
{
    if (samples.size() < 2)
        throw ArgumentError("velocity profile needs at least 2 samples, got " + std::to_string(samples.size()));
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw ArgumentError("velocity profile dt must be positive and finite");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!std::isfinite(samples[i]) || samples[i] < 0.0)
            throw ArgumentError("velocity profile sample " + std::to_string(i) + " is negative or non-finite");
    }
}

void NormStats::validate() const
{
    if (!std::isfinite(min) || !std::isfinite(max) || !(max > min))
        throw ConfigError("normalization stats require max > min (min=" + text::format_double(min) +
                          ", max=" + text::format_double(max) + ")");
}

namespace {

void validate_class_params(const ClassParams& p, std::string_view which)
{
    auto fail = [&](const char* what) {
        throw ConfigError(std::string(which) + ": " + what);
    };
    if (!(p.duration_min > 0.0) || !(p.duration_max >= p.duration_min))
        fail("durations must satisfy 0 < min <= max");
    if (!(p.peak_min > 0.0) || !(p.peak_max >= p.peak_min))
        fail("peak speeds must satisfy 0 < min <= max");
}

}  // namespace

void SynthConfig::validate() const
{
    validate_class_params(not_careful, "not_careful");
    validate_class_params(careful, "careful");
    if (!(dt > 0.0))
        throw ConfigError("sampling interval must be positive");
    if (count_not_careful == 0 && count_careful == 0)
        throw ConfigError("corpus class counts are both zero");
    if (!(noise_fraction >= 0.0))
        throw ConfigError("noise fraction must be non-negative");
    if (smoothing_window == 0)
        throw ConfigError("smoothing window must be at least 1");
    if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0))
        throw ConfigError("held-out fraction must lie in [0, 1)");
}

std::size_t ProfileCorpus::count(CarefulnessClass c) const
{
    return static_cast<std::size_t>(
        std::count_if(profiles.begin(), profiles.end(), [c](const VelocityProfile& p) { return p.label == c; }));
}

void ProfileCorpus::validate_split() const
{
    std::vector<int> seen(profiles.size(), 0);
    for (auto list : {&train, &heldout}) {
        for (auto i : *list) {
            if (i >= profiles.size())
                throw ArgumentError("split index " + std::to_string(i) + " out of range");
            if (seen[i]++)
                throw ArgumentError("split index " + std::to_string(i) + " appears twice");
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw ArgumentError("split does not cover every profile");
}

double min_jerk_shape(double tau)
{
    if (tau <= 0.0 || tau >= 1.0)
        return 0.0;
    const double t2 = tau * tau;
    return 30.0 * t2 - 60.0 * t2 * tau + 30.0 * t2 * t2;
}

VelocityProfile synth_profile(CarefulnessClass c, Rng& rng, const SynthConfig& cfg)
{
    validate_class_params(cfg.params_for(c), to_string(c));
    if (!(cfg.dt > 0.0))
        throw ConfigError("sampling interval must be positive");

    const auto& p = cfg.params_for(c);
    std::uniform_real_distribution<double> dur(p.duration_min, p.duration_max);
    std::uniform_real_distribution<double> pk(p.peak_min, p.peak_max);
    const double duration = dur(rng);
    const double peak = pk(rng);
    const double amplitude = peak / kMinJerkPeak;

    const auto n = static_cast<std::size_t>(std::ceil(duration / cfg.dt - 1e-9)) + 1;
    VelocityProfile out;
    out.dt = cfg.dt;
    out.label = c;
    out.samples.resize(n);
    for (std::size_t k = 0; k < n; ++k)
        out.samples[k] = amplitude * min_jerk_shape(std::min(1.0, static_cast<double>(k) * cfg.dt / duration));

    if (cfg.noise_fraction > 0.0) {
        std::normal_distribution<double> gauss(0.0, cfg.noise_fraction * peak);
        std::vector<double> white(n);
        for (auto& w : white)
            w = gauss(rng);
        const auto half = static_cast<std::ptrdiff_t>(cfg.smoothing_window / 2);
        const auto len = static_cast<std::ptrdiff_t>(n);
        for (std::ptrdiff_t k = 0; k < len; ++k) {
            double acc = 0.0;
            int cnt = 0;
            for (auto j = std::max<std::ptrdiff_t>(0, k - half); j <= std::min(len - 1, k + half); ++j) {
                acc += white[static_cast<std::size_t>(j)];
                ++cnt;
            }
            out.samples[static_cast<std::size_t>(k)] += acc / cnt;
        }
    }
    for (auto& v : out.samples)
        v = std::max(0.0, v);
    out.samples.front() = 0.0;
    out.samples.back() = 0.0;
    return out;
}

ProfileCorpus make_dataset(const SynthConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    if (cfg.count_careful == 0 || cfg.count_not_careful == 0)
        throw ConfigError("both class counts must be positive");

    ProfileCorpus corpus;
    corpus.seed = seed;
    corpus.config = cfg;
    const std::size_t total = cfg.count_not_careful + cfg.count_careful;
    corpus.profiles.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        const auto c = i < cfg.count_not_careful ? CarefulnessClass::NotCareful : CarefulnessClass::Careful;
        auto rng = make_rng(seed, "profile", i);
        corpus.profiles.push_back(synth_profile(c, rng, cfg));
    }

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto split_rng = make_rng(seed, "split");
    std::shuffle(order.begin(), order.end(), split_rng);
    const auto n_heldout = static_cast<std::size_t>(std::llround(cfg.heldout_fraction * static_cast<double>(total)));
    corpus.heldout.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_heldout));
    corpus.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_heldout), order.end());
    std::sort(corpus.heldout.begin(), corpus.heldout.end());
    std::sort(corpus.train.begin(), corpus.train.end());

    corpus.normalization = compute_norm_stats(corpus.profiles, corpus.train);
    return corpus;
}

VelocityProfile resample(const VelocityProfile& profile, std::size_t n)
{
    if (n < 2)
        throw ArgumentError("resample target length must be at least 2");
    if (profile.samples.size() < 2)
        throw ArgumentError("cannot resample a profile with fewer than 2 samples");

    const auto m = profile.samples.size();
    VelocityProfile out;
    out.label = profile.label;
    out.dt = profile.duration() / static_cast<double>(n - 1);
    out.samples.resize(n);
    if (n == m) {
        out.samples = profile.samples;
        return out;
    }
    // Work in source-index units so the endpoints map exactly.
    const double scale = static_cast<double>(m - 1) / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        if (k == n - 1) {
            out.samples[k] = profile.samples.back();
            continue;
        }
        const double pos = static_cast<double>(k) * scale;
        const auto i = std::min(static_cast<std::size_t>(pos), m - 2);
        const double frac = pos - static_cast<double>(i);
        out.samples[k] = profile.samples[i] + frac * (profile.samples[i + 1] - profile.samples[i]);
    }
    return out;
}

VelocityProfile normalize(const VelocityProfile& profile, const NormStats& stats)
{
    stats.validate();
    VelocityProfile out = profile;
    const double span = stats.max - stats.min;
    for (auto& v : out.samples)
        v = (v - stats.min) / span;
    return out;
}

VelocityProfile denormalize(const VelocityProfile& profile, const NormStats& stats)
{
    stats.validate();
    VelocityProfile out = profile;
    const double span = stats.max - stats.min;
    for (auto& v : out.samples)
        v = v * span + stats.min;
    return out;
}

NormStats compute_norm_stats(std::span<const VelocityProfile> profiles, std::span<const std::size_t> indices)
{
    if (indices.empty())
        throw ArgumentError("cannot compute normalization stats from an empty selection");
    NormStats s{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (auto i : indices) {
        for (double v : profiles[i].samples) {
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
        }
    }
    s.validate();
    return s;
}

std::vector<double> network_input(const VelocityProfile& profile, std::size_t n, const NormStats& stats)
{
    return normalize(resample(profile, n), stats).samples;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& csv_path)
{
    auto p = csv_path;
    p.replace_extension(".manifest.json");
    return p;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string profiles_to_csv(std::span<const VelocityProfile> profiles)
{
    std::string out = "profile_id,label,dt,sample_index,speed_mps\n";
    for (std::size_t id = 0; id < profiles.size(); ++id) {
        const auto& p = profiles[id];
        const std::string prefix = std::to_string(id) + "," +
                                   (p.label ? std::to_string(static_cast<int>(*p.label)) : std::string()) + "," +
                                   text::format_double(p.dt) + ",";
        for (std::size_t k = 0; k < p.samples.size(); ++k) {
            out += prefix;
            out += std::to_string(k);
            out += ',';
            out += text::format_double(p.samples[k]);
            out += '\n';
        }
    }
    return out;
}

[[noreturn]] void csv_error(const std::filesystem::path& path, std::size_t line, const std::string& what)
{
    throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<VelocityProfile> parse_profiles_csv(std::string_view body, const std::filesystem::path& path)
{
    std::vector<VelocityProfile> profiles;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    bool header_seen = false;
    while (pos < body.size()) {
        auto eol = body.find('\n', pos);
        std::string_view line = body.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? body.size() : eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        if (!header_seen) {
            if (line != "profile_id,label,dt,sample_index,speed_mps")
                csv_error(path, line_no, "expected header 'profile_id,label,dt,sample_index,speed_mps'");
            header_seen = true;
            continue;
        }
        if (line.empty())
            continue;
        auto f = text::split(line);
        if (f.size() != 5)
            csv_error(path, line_no, "expected 5 fields, got " + std::to_string(f.size()));
        std::size_t id = 0, idx = 0;
        double dt = 0.0, speed = 0.0;
        if (!text::parse_size(f[0], id))
            csv_error(path, line_no, "bad profile_id '" + std::string(f[0]) + "'");
        const std::string rec = "record profile_id=" + std::to_string(id);
        if (!text::parse_double(f[2], dt) || !(dt > 0.0) || !std::isfinite(dt))
            csv_error(path, line_no, rec + ": dt must be a positive number");
        if (!text::parse_size(f[3], idx))
            csv_error(path, line_no, rec + ": bad sample_index '" + std::string(f[3]) + "'");
        if (!text::parse_double(f[4], speed) || !std::isfinite(speed))
            csv_error(path, line_no, rec + ": speed is not a finite number");
        if (speed < 0.0)
            csv_error(path, line_no, rec + " sample " + std::to_string(idx) + ": negative speed " + std::string(f[4]));
        std::optional<CarefulnessClass> label;
        if (!f[1].empty()) {
            std::size_t code = 0;
            if (!text::parse_size(f[1], code) || code > 1)
                csv_error(path, line_no, rec + ": label must be 0, 1 or empty");
            label = class_from_code(static_cast<int>(code));
        }

        if (idx == 0) {
            if (id != profiles.size())
                csv_error(path, line_no, rec + ": profile ids must be consecutive from 0");
            profiles.push_back(VelocityProfile{{}, dt, label});
        } else {
            if (profiles.empty() || id != profiles.size() - 1)
                csv_error(path, line_no, rec + ": sample rows must be grouped by profile");
            auto& p = profiles.back();
            if (idx != p.samples.size())
                csv_error(path, line_no, rec + ": sample_index " + std::to_string(idx) + " out of sequence");
            if (dt != p.dt || label != p.label)
                csv_error(path, line_no, rec + ": dt/label differ from the profile's first row");
        }
        profiles.back().samples.push_back(speed);
    }
    if (!header_seen)
        throw ParseError(path.string() + ": empty corpus file");
    if (profiles.empty())
        throw ParseError(path.string() + ": corpus file has a header but no records");
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        if (profiles[i].samples.size() < 2)
            throw ParseError(path.string() + ": record profile_id=" + std::to_string(i) + " has fewer than 2 samples");
    }
    return profiles;
}

json class_params_json(const ClassParams& p)
{
    return {{"duration_min", p.duration_min},
            {"duration_max", p.duration_max},
            {"peak_min", p.peak_min},
            {"peak_max", p.peak_max}};
}

ClassParams class_params_from(const json& j)
{
    return {j.at("duration_min").get<double>(), j.at("duration_max").get<double>(), j.at("peak_min").get<double>(),
            j.at("peak_max").get<double>()};
}

}  // namespace

void write_profiles_csv(std::span<const VelocityProfile> profiles, const std::filesystem::path& path)
{
    text::write_file(path, profiles_to_csv(profiles));
}

std::vector<VelocityProfile> read_profiles_csv(const std::filesystem::path& path)
{
    return parse_profiles_csv(text::read_file(path), path);
}

void save_corpus(const ProfileCorpus& corpus, const std::filesystem::path& path)
{
    corpus.validate_split();
    json manifest;
    manifest["format_version"] = 1;
    manifest["counts"] = {{"total", corpus.profiles.size()},
                          {"not_careful", corpus.count(CarefulnessClass::NotCareful)},
                          {"careful", corpus.count(CarefulnessClass::Careful)}};
    manifest["seed"] = corpus.seed ? json(*corpus.seed) : json(nullptr);
    if (corpus.config) {
        const auto& c = *corpus.config;
        manifest["config"] = {{"count_not_careful", c.count_not_careful},
                              {"count_careful", c.count_careful},
                              {"not_careful", class_params_json(c.not_careful)},
                              {"careful", class_params_json(c.careful)},
                              {"dt", c.dt},
                              {"noise_fraction", c.noise_fraction},
                              {"smoothing_window", c.smoothing_window},
                              {"heldout_fraction", c.heldout_fraction}};
    } else {
        manifest["config"] = nullptr;
    }
    manifest["normalization"] = {{"min", corpus.normalization.min}, {"max", corpus.normalization.max}};
    manifest["split"] = {{"train", corpus.train}, {"heldout", corpus.heldout}};

    write_profiles_csv(corpus.profiles, path);
    text::write_file(manifest_path_for(path), manifest.dump(2) + "\n");
}

ProfileCorpus load_corpus(const std::filesystem::path& path)
{
    ProfileCorpus corpus;
    corpus.profiles = read_profiles_csv(path);
    const auto mpath = manifest_path_for(path);
    if (!std::filesystem::exists(mpath)) {
        corpus.train.resize(corpus.profiles.size());
        std::iota(corpus.train.begin(), corpus.train.end(), std::size_t{0});
        corpus.normalization = compute_norm_stats(corpus.profiles, corpus.train);
        return corpus;
    }
    try {
        const json m = json::parse(text::read_file(mpath));
        if (m.at("counts").at("total").get<std::size_t>() != corpus.profiles.size())
            throw ParseError(mpath.string() + ": manifest total does not match the CSV record count");
        if (!m.at("seed").is_null())
            corpus.seed = m.at("seed").get<std::uint64_t>();
        if (!m.at("config").is_null()) {
            const auto& c = m.at("config");
            SynthConfig cfg;
            cfg.count_not_careful = c.at("count_not_careful").get<std::size_t>();
            cfg.count_careful = c.at("count_careful").get<std::size_t>();
            cfg.not_careful = class_params_from(c.at("not_careful"));
            cfg.careful = class_params_from(c.at("careful"));
            cfg.dt = c.at("dt").get<double>();
            cfg.noise_fraction = c.at("noise_fraction").get<double>();
            cfg.smoothing_window = c.at("smoothing_window").get<std::size_t>();
            cfg.heldout_fraction = c.at("heldout_fraction").get<double>();
            corpus.config = cfg;
        }
        corpus.normalization = {m.at("normalization").at("min").get<double>(),
                                m.at("normalization").at("max").get<double>()};
        corpus.train = m.at("split").at("train").get<std::vector<std::size_t>>();
        corpus.heldout = m.at("split").at("heldout").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw ParseError(mpath.string() + ": " + e.what());
    }
    try {
        corpus.normalization.validate();
        corpus.validate_split();
    } catch (const Error& e) {
        throw ParseError(mpath.string() + ": " + e.what());
    }
    return corpus;
}

}  // namespace kinegen::data
