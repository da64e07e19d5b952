#include "run_config.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <string_view>

#include "thz/error.hpp"
#include "thz/phantom.hpp"

namespace thz::cli {

namespace {

using nlohmann::json;

template <std::size_t N>
void check_keys(const json& j, const std::array<std::string_view, N>& allowed, const std::string& where) {
    require(j.is_object(), ErrorKind::usage, where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        require(std::find(allowed.begin(), allowed.end(), key) != allowed.end(), ErrorKind::usage,
                "unknown key '" + key + "' in " + where);
}

constexpr std::array<std::string_view, 13> kTopKeys{"out",       "seed",   "band",  "floor",          "thickness_mm",
                                                    "phantom",   "reference", "model", "cubes",       "labels",
                                                    "include_labels", "train", "comment"};
constexpr std::array<std::string_view, 2> kBandKeys{"min_thz", "max_thz"};
constexpr std::array<std::string_view, 13> kTrainKeys{
    "batch_size",    "epochs",         "learning_rate", "beta1",         "beta2",   "epsilon",    "clip_max_norm",
    "physics_scale", "ramp_start_epoch", "lambda_max",  "noise_level_db", "physics", "max_traces"};

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        fail(ErrorKind::usage, path.string() + ": " + e.what());
    }
    const std::string where = "config " + path.string();
    check_keys(j, kTopKeys, where);
    const auto base = std::filesystem::absolute(path).parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : (base / fp).lexically_normal();
    };

    RunConfig c;
    try {
        if (j.contains("out")) c.out = resolve(j["out"].get<std::string>());
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("band")) {
            check_keys(j["band"], kBandKeys, where + " 'band'");
            if (j["band"].contains("min_thz")) c.band_min = j["band"]["min_thz"].get<double>();
            if (j["band"].contains("max_thz")) c.band_max = j["band"]["max_thz"].get<double>();
        }
        if (j.contains("floor")) c.floor = j["floor"].get<double>();
        if (j.contains("thickness_mm")) c.thickness_mm = j["thickness_mm"].get<double>();
        if (j.contains("phantom")) {
            const auto name = j["phantom"].get<std::string>();
            const auto presets = preset_names();
            c.phantom = std::find(presets.begin(), presets.end(), name) != presets.end() ? name
                                                                                          : resolve(name).string();
        }
        if (j.contains("reference")) c.reference = resolve(j["reference"].get<std::string>());
        if (j.contains("model")) c.model = resolve(j["model"].get<std::string>());
        if (j.contains("cubes"))
            for (const auto& p : j["cubes"]) c.cubes.push_back(resolve(p.get<std::string>()));
        if (j.contains("labels"))
            for (const auto& p : j["labels"]) c.labels.push_back(resolve(p.get<std::string>()));
        if (j.contains("include_labels")) c.include_labels = j["include_labels"].get<std::vector<int>>();
        if (j.contains("train")) {
            check_keys(j["train"], kTrainKeys, where + " 'train'");
            c.train = j["train"];
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::usage, where + ": " + e.what());
    }
    return c;
}

}  // namespace thz::cli
