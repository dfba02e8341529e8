#include "kinegen/checkpoint.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <numeric>

#include "kinegen/errors.hpp"
#include "kinegen/text.hpp"

namespace kinegen::nn {

using nlohmann::json;

std::string utc_timestamp()
{
    // SOURCE_DATE_EPOCH pins the stamp for reproducible artifacts.
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    if (const char* fixed = std::getenv("SOURCE_DATE_EPOCH")) {
        std::size_t secs = 0;
        if (text::parse_size(fixed, secs))
            now = static_cast<std::time_t>(secs);
    }
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json params_to_json(const ParamSet& params)
{
    json arrays = json::array();
    for (const auto& a : params.arrays())
        arrays.push_back({{"name", a.name}, {"shape", a.shape}, {"data", a.values}});
    return arrays;
}

ParamSet params_from_json(const json& arrays)
{
    if (!arrays.is_array())
        throw ParseError("checkpoint 'arrays' must be a list");
    ParamSet params;
    for (const auto& entry : arrays) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto& data = entry.at("data");
        if (!data.is_array())
            throw ParseError("array '" + name + "': data must be a list");
        const auto expected = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
        if (data.size() != expected)
            throw ParseError("array '" + name + "': shape implies " + std::to_string(expected) + " values, found " +
                             std::to_string(data.size()));
        if (params.contains(name))
            throw ParseError("array '" + name + "' appears twice");
        auto& a = params.add(name, shape);
        for (std::size_t i = 0; i < expected; ++i) {
            if (!data[i].is_number())
                throw ParseError("array '" + name + "': value " + std::to_string(i) + " is not a finite number");
            a.values[i] = data[i].get<double>();
            if (!std::isfinite(a.values[i]))
                throw ParseError("array '" + name + "': value " + std::to_string(i) + " is not finite");
        }
    }
    return params;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
    ckpt.params.require_finite();
    json j;
    j["format_version"] = ckpt.format_version;
    j["created"] = ckpt.created.empty() ? utc_timestamp() : ckpt.created;
    j["model_kind"] = ckpt.model_kind;
    j["config"] = ckpt.config;
    j["arrays"] = params_to_json(ckpt.params);
    text::write_file(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    const auto body = text::read_file(path);
    try {
        const json j = json::parse(body);
        Checkpoint ckpt;
        ckpt.format_version = j.at("format_version").get<int>();
        if (ckpt.format_version != kCheckpointFormatVersion)
            throw ParseError("unsupported checkpoint format_version " + std::to_string(ckpt.format_version));
        ckpt.created = j.value("created", std::string());
        ckpt.model_kind = j.value("model_kind", std::string());
        ckpt.config = j.value("config", json::object());
        ckpt.params = params_from_json(j.at("arrays"));
        return ckpt;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace kinegen::nn
