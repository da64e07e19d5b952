#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "support.hpp"
#include "thz/digest.hpp"
#include "thz/features.hpp"
#include "thz/optics.hpp"
#include "thz/pcnn.hpp"
#include "thz/phantom.hpp"

using namespace thz;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run thz_run(std::vector<std::string> args) {
    args.insert(args.begin(), "thz");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    Run r;
    r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream is(p);
    return nlohmann::json::parse(is);
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p);
    os << text;
}

double mean_of_csv_map(const fs::path& p) {
    const auto m = read_map_csv(p);
    double s = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
        if (m.valid[i]) s += m.values[i], ++n;
    return s / static_cast<double>(n);
}

/// Synthesizes the preset once per test binary run.
const fs::path& synth_dir(const std::string& preset) {
    static test::TempDir root("cli_shared");
    static std::map<std::string, fs::path> made;
    auto it = made.find(preset);
    if (it != made.end()) return it->second;
    const auto dir = root / preset;
    const auto r = thz_run({"synth", "--preset", preset, "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return made.emplace(preset, dir).first->second;
}

}  // namespace

TEST(Digest, KnownVectors) {
    const std::string abc = "abc";
    EXPECT_EQ(sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size())),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex({}), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Cli, UsageExitCodes) {
    EXPECT_EQ(thz_run({}).code, 2);
    EXPECT_EQ(thz_run({"--help"}).code, 0);
    EXPECT_EQ(thz_run({"frobnicate"}).code, 2);
    EXPECT_EQ(thz_run({"synth", "--preset", "leaf-healthy"}).code, 2);  // no --out
    EXPECT_EQ(thz_run({"render", "--map", "x.csv", "--min", "0", "--out", "o"}).code, 2);
}

TEST(Cli, SynthDeterministicWithManifest) {
    test::TempDir dir("cli");
    const auto a = dir / "a", b = dir / "b";
    ASSERT_EQ(thz_run({"synth", "--preset", "leaf-healthy", "--seed", "7", "--out", a.string()}).code, 0);
    ASSERT_EQ(thz_run({"synth", "--preset", "leaf-healthy", "--seed", "7", "--out", b.string()}).code, 0);
    EXPECT_EQ(test::read_bytes(a / "cube.thzc"), test::read_bytes(b / "cube.thzc"));
    const auto manifest = read_json(a / "manifest.json");
    EXPECT_EQ(manifest.at("command"), "synth");
    std::set<std::string> names;
    for (const auto& f : manifest.at("files")) {
        const auto path = a / f.at("path").get<std::string>();
        names.insert(f.at("path").get<std::string>());
        EXPECT_EQ(f.at("sha256").get<std::string>(), sha256_file(path));
        EXPECT_EQ(f.at("bytes").get<std::uintmax_t>(), fs::file_size(path));
    }
    for (const char* n : {"cube.thzc", "labels.csv", "reference.csv", "truth.json"}) EXPECT_TRUE(names.count(n)) << n;
    EXPECT_EQ(read_cube(a / "cube.thzc"), synthesize([] {
                  auto s = preset("leaf-healthy");
                  s.seed = 7;
                  return s;
              }()).cube);
}

TEST(Cli, SynthRootInfectedTruthHasBand) {
    const auto truth = read_json(synth_dir("root-infected") / "truth.json");
    bool found = false;
    for (const auto& r : truth.at("regions"))
        for (const auto& p : r.at("material").at("points"))
            if (std::abs(p[0].get<double>() - 0.4) < 1e-12) found = true;
    EXPECT_TRUE(found);
}

TEST(Cli, UnwritableOutputLeavesNoManifest) {
    test::TempDir dir("cli");
    write_text(dir / "blocker", "x");
    const auto out = dir / "blocker" / "sub";
    const auto r = thz_run({"synth", "--preset", "leaf-healthy", "--out", out.string()});
    EXPECT_EQ(r.code, 5) << r.err;
    EXPECT_FALSE(fs::exists(out / "manifest.json"));
}

TEST(Cli, ConfigKeysAndPrecedence) {
    test::TempDir dir("cli");
    write_text(dir / "bad.json", R"({"seed": 3, "colour": "blue"})");
    EXPECT_EQ(thz_run({"synth", "--config", (dir / "bad.json").string(), "--preset", "leaf-healthy", "--out",
                       (dir / "x").string()})
                  .code,
              2);
    write_text(dir / "cfg.json", R"({"seed": 3, "out": "from_config"})");
    ASSERT_EQ(thz_run({"synth", "--config", (dir / "cfg.json").string(), "--preset", "leaf-healthy"}).code, 0);
    ASSERT_EQ(thz_run({"synth", "--config", (dir / "cfg.json").string(), "--preset", "leaf-healthy", "--seed", "7",
                       "--out", (dir / "flag").string()})
                  .code,
              0);
    ASSERT_EQ(thz_run({"synth", "--preset", "leaf-healthy", "--seed", "7", "--out", (dir / "plain").string()}).code, 0);
    // relative paths resolve against the config file; the flag seed beats the config seed
    EXPECT_TRUE(fs::exists(dir / "from_config" / "cube.thzc"));
    EXPECT_EQ(test::read_bytes(dir / "flag" / "cube.thzc"), test::read_bytes(dir / "plain" / "cube.thzc"));
    EXPECT_NE(test::read_bytes(dir / "flag" / "cube.thzc"), test::read_bytes(dir / "from_config" / "cube.thzc"));
}

TEST(Cli, ExtractIdentityAndErrors) {
    test::TempDir dir("cli");
    const auto ref = (synth_dir("leaf-healthy") / "reference.csv").string();
    ASSERT_EQ(thz_run({"extract", "--sample", ref, "--reference", ref, "--thickness", "0.3", "--out",
                       (dir / "same").string()})
                  .code,
              0);
    const auto oc = read_constants_csv(dir / "same" / "constants.csv");
    ASSERT_GT(oc.valid_count(), 0u);
    for (std::size_t k = 0; k < oc.size(); ++k)
        if (oc.valid[k]) EXPECT_NEAR(oc.n[k], 1.0, 1e-12);

    const auto geo = thz_run({"extract", "--sample", ref, "--reference", ref, "--thickness", "0", "--out",
                              (dir / "zero").string()});
    EXPECT_EQ(geo.code, 4);
    EXPECT_NE(geo.code, 5);
}

TEST(Cli, ExtractHealthyPixelNearTruth) {
    test::TempDir dir("cli");
    const auto& src = synth_dir("leaf-healthy");
    const auto spec = preset("leaf-healthy");
    const auto layout = region_layout(spec);
    std::size_t p = 0;
    while (layout[p] != RegionKind::blade) ++p;
    const auto px = std::to_string(p % spec.nx) + "," + std::to_string(p / spec.nx);
    ASSERT_EQ(thz_run({"extract", "--sample", (src / "cube.thzc").string(), "--pixel", px, "--thickness", "0.3",
                       "--out", dir.path().string()})
                  .code,
              0);
    const auto oc = read_constants_csv(dir / "constants.csv");
    const auto truth = sample_material(spec.find(RegionKind::blade)->material, oc.frequencies);
    std::size_t checked = 0;
    for (std::size_t k = 0; k < oc.size(); ++k)
        if (oc.valid[k] && oc.frequencies[k] >= 0.3 && oc.frequencies[k] <= 1.5) {
            EXPECT_NEAR(oc.n[k], truth.n[k], 0.02) << oc.frequencies[k];
            ++checked;
        }
    EXPECT_GT(checked, 100u);
}

TEST(Cli, ImageConstantCubeAndGateOrdering) {
    test::TempDir dir("cli");
    PhantomSpec s;
    const auto r = make_reference(s);
    ScanCube c{3, 2, s.nt, 0.5, s.dt_ps, 0.0, {}};
    for (int p = 0; p < 6; ++p) c.data.insert(c.data.end(), r.samples().begin(), r.samples().end());
    write_cube(dir / "flat.thzc", c);
    ASSERT_EQ(thz_run({"image", "--cube", (dir / "flat.thzc").string(), "--modality", "amplitude", "--freq", "0.76",
                       "--out", (dir / "flat").string()})
                  .code,
              0);
    const auto raster = read_pgm16(dir / "flat" / "flat_amplitude.pgm");
    for (auto v : raster.levels) EXPECT_EQ(v, raster.levels[0]);

    const auto h = (synth_dir("leaf-healthy") / "cube.thzc").string();
    const auto i = (synth_dir("leaf-infected") / "cube.thzc").string();
    const auto g = thz_run({"image", "--group", h, i, "--modality", "gate", "--region", "A2", "--out",
                            (dir / "gate").string()});
    ASSERT_EQ(g.code, 0) << g.err;
    // stems collide (cube.thzc twice) and are disambiguated by directory name
    EXPECT_GT(mean_of_csv_map(dir / "gate" / "leaf-healthy_cube_gate.csv"),
              mean_of_csv_map(dir / "gate" / "leaf-infected_cube_gate.csv"));
}

TEST(Cli, TrainFilterEpochsAndLatentGroup) {
    test::TempDir dir("cli");
    const auto h = (synth_dir("leaf-healthy") / "cube.thzc").string();
    const auto i = (synth_dir("leaf-infected") / "cube.thzc").string();

    const auto refused = thz_run({"train", "--cube", i, "--epochs", "1", "--thickness", "0.3", "--out", (dir / "inf").string()});
    EXPECT_EQ(refused.code, 2);
    EXPECT_NE(refused.out.find("--include-labels"), std::string::npos) << refused.out;
    EXPECT_NE(refused.err.find("--include-labels"), std::string::npos) << refused.err;
    EXPECT_FALSE(fs::exists(dir / "inf" / "model.pcnn"));

    const auto t = thz_run({"train", "--cube", h, "--epochs", "1", "--max-traces", "8", "--seed", "3", "--thickness", "0.3", "--out",
                            (dir / "m").string()});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_NE(t.out.find("healthy"), std::string::npos);
    std::ifstream log(dir / "m" / "train_log.csv");
    std::string header, row, extra;
    std::getline(log, header);
    std::getline(log, row);
    EXPECT_EQ(header, "epoch,lambda,loss_data,loss_re,loss_ab,loss_total");
    EXPECT_EQ(row.rfind("1,0,", 0), 0u) << row;
    EXPECT_FALSE(std::getline(log, extra) && !extra.empty());

    const auto model = (dir / "m" / "model.pcnn").string();
    ASSERT_EQ(thz_run({"image", "--group", h, i, "--modality", "latent", "--index", "1", "--model", model, "--out",
                       (dir / "lat").string()})
                  .code,
              0);
    const auto a = read_json(dir / "lat" / "leaf-healthy_cube_latent.json");
    const auto b = read_json(dir / "lat" / "leaf-infected_cube_latent.json");
    EXPECT_EQ(a.at("shared_min"), b.at("shared_min"));
    EXPECT_EQ(a.at("shared_max"), b.at("shared_max"));
    EXPECT_LT(a.at("shared_min").get<double>(), a.at("shared_max").get<double>());

    EXPECT_EQ(thz_run({"image", "--cube", h, "--modality", "latent", "--index", "33", "--model", model, "--out",
                       (dir / "bad").string()})
                  .code,
              3);
    EXPECT_EQ(thz_run({"image", "--cube", h, "--modality", "latent", "--index", "0", "--model", model, "--out",
                       (dir / "bad").string()})
                  .code,
              3);

    ASSERT_EQ(thz_run({"encode", "--model", model, "--cube", h, "--out", (dir / "enc").string()}).code, 0);
    std::ifstream lat(dir / "enc" / "latents.csv");
    std::getline(lat, header);
    EXPECT_EQ(header.rfind("x,y,z0,", 0), 0u);
    std::size_t rows = 0;
    while (std::getline(lat, row))
        if (!row.empty()) ++rows;
    EXPECT_EQ(rows, read_cube(h).pixel_count());
}

TEST(Cli, GradCheck) {
    const auto ok = thz_run({"gradcheck"});
    EXPECT_EQ(ok.code, 0) << ok.err;
    EXPECT_NE(ok.out.find("lambda=1"), std::string::npos);
    EXPECT_EQ(thz_run({"gradcheck", "--corrupt-gradient"}).code, 4);
    const auto single = thz_run({"gradcheck", "--dtype", "single"});
    EXPECT_EQ(single.code, 2);
    EXPECT_NE(single.err.find("double"), std::string::npos);
}

TEST(Cli, RenderSharedScale) {
    test::TempDir dir("cli");
    ScalarMap a = ScalarMap::filled(2, 1, 0.0), b = ScalarMap::filled(2, 1, 2.0);
    a.values[1] = 1.0;
    b.values[0] = 1.0;
    write_map_csv(dir / "a.csv", a);
    write_map_csv(dir / "b.csv", b);
    ASSERT_EQ(thz_run({"render", "--map", (dir / "a.csv").string(), (dir / "b.csv").string(), "--out",
                       (dir / "r").string()})
                  .code,
              0);
    EXPECT_EQ(read_pgm16(dir / "r" / "a.pgm").levels, (std::vector<std::uint16_t>{0, 32768}));
    EXPECT_EQ(read_pgm16(dir / "r" / "b.pgm").levels, (std::vector<std::uint16_t>{32768, 65535}));
}
