#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "artifacts.hpp"
#include "run_config.hpp"
#include "thz/cube.hpp"
#include "thz/error.hpp"
#include "thz/features.hpp"
#include "thz/optics.hpp"
#include "thz/pcnn.hpp"
#include "thz/phantom.hpp"
#include "thz/signal.hpp"

namespace thz::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return 2;
        case ErrorKind::input:
        case ErrorKind::dimension:
        case ErrorKind::index: return 3;
        case ErrorKind::io: return 5;
        default: return 4;
    }
}

// Options shared by most subcommands; flags win over the config file.
struct Common {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    double band_min = 0.2;
    double band_max = 2.0;
    double floor = 1e-3;
    double thickness = 0.0;
    CLI::Option* o_out = nullptr;
    CLI::Option* o_seed = nullptr;
    CLI::Option* o_bmin = nullptr;
    CLI::Option* o_bmax = nullptr;
    CLI::Option* o_floor = nullptr;
    CLI::Option* o_thick = nullptr;
    RunConfig cfg;

    void attach(CLI::App* app, bool optics, bool thickness_opt) {
        app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
        o_out = app->add_option("--out", out, "Output directory");
        o_seed = app->add_option("--seed", seed, "Random seed");
        if (optics) {
            o_bmin = app->add_option("--band-min", band_min, "Lower band edge (THz)");
            o_bmax = app->add_option("--band-max", band_max, "Upper band edge (THz)");
            o_floor = app->add_option("--floor", floor, "Reference dynamic-range floor (fraction of peak)");
        }
        if (thickness_opt) o_thick = app->add_option("--thickness", thickness, "Sample thickness (mm)");
    }

    void load() {
        if (!config.empty()) cfg = load_run_config(config);
    }

    [[nodiscard]] fs::path out_dir() const {
        if (o_out && o_out->count()) return out;
        if (cfg.out) return *cfg.out;
        fail(ErrorKind::usage, "an output directory is required (--out or \"out\" in the config)");
    }

    [[nodiscard]] std::optional<std::uint64_t> seed_value() const {
        if (o_seed && o_seed->count()) return seed;
        return cfg.seed;
    }

    [[nodiscard]] ExtractionOptions optics() const {
        ExtractionOptions o;
        o.band.min_thz = (o_bmin && o_bmin->count()) ? band_min : cfg.band_min.value_or(band_min);
        o.band.max_thz = (o_bmax && o_bmax->count()) ? band_max : cfg.band_max.value_or(band_max);
        o.floor = (o_floor && o_floor->count()) ? floor : cfg.floor.value_or(floor);
        return o;
    }

    [[nodiscard]] std::optional<double> thickness_value() const {
        if (o_thick && o_thick->count()) return thickness;
        return cfg.thickness_mm;
    }

    [[nodiscard]] double require_thickness() const {
        const auto t = thickness_value();
        require(t.has_value(), ErrorKind::usage, "a sample thickness is required (--thickness or \"thickness_mm\")");
        SampleGeometry{*t}.validate();
        return *t;
    }
};

bool is_trace_csv(const fs::path& p) { return p.extension() == ".csv"; }

std::vector<fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

ScalarMap read_thickness_map(const fs::path& p, const ScanCube& cube) {
    auto m = read_map_csv(p);
    require(m.nx == cube.nx && m.ny == cube.ny, ErrorKind::dimension, p.string() + ": thickness map size mismatch");
    for (std::size_t i = 0; i < m.size(); ++i)
        require(m.valid[i], ErrorKind::geometry, p.string() + ": thickness map has invalid pixels");
    return m;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
    Common common;
    std::string preset_name;
    std::string spec_path;
    double noise = 0.0;
    CLI::Option* o_noise = nullptr;
};

void run_synth(SynthOpts& o, std::ostream& out) {
    auto& c = o.common;
    c.load();
    PhantomSpec spec;
    if (!o.preset_name.empty() && !o.spec_path.empty())
        fail(ErrorKind::usage, "--preset and --spec are mutually exclusive");
    if (!o.preset_name.empty()) {
        spec = preset(o.preset_name);
    } else if (!o.spec_path.empty()) {
        spec = read_phantom_spec(o.spec_path);
    } else if (c.cfg.phantom) {
        const auto& ph = *c.cfg.phantom;
        const auto names = preset_names();
        spec = std::find(names.begin(), names.end(), ph) != names.end() ? preset(ph) : read_phantom_spec(ph);
    } else {
        fail(ErrorKind::usage, "synth needs --preset, --spec or \"phantom\" in the config");
    }
    if (const auto s = c.seed_value()) spec.seed = *s;
    if (o.o_noise->count()) spec.noise_std = o.noise;
    spec.validate();

    Outputs dir(c.out_dir(), "synth");
    const auto lc = synthesize(spec);
    write_cube(dir.file("cube.thzc"), lc.cube);
    write_labels_csv(dir.file("labels.csv"), LabelGrid{lc.cube.nx, lc.cube.ny, lc.labels});
    write_trace_csv(dir.file("reference.csv"), lc.reference);
    write_truth_json(dir.file("truth.json"), lc.truth);
    ScalarMap thick = ScalarMap::filled(lc.cube.nx, lc.cube.ny, 0.0);
    thick.values = lc.thickness_mm;
    thick.label = "thickness";
    thick.units = "mm";
    write_map_csv(dir.file("thickness.csv"), thick);
    write_phantom_spec(dir.file("spec.json"), spec);
    dir.finish({{"phantom", spec.name}, {"seed", spec.seed}});
    out << "synthesized " << spec.name << " (" << spec.nx << "x" << spec.ny << "x" << spec.nt << ", seed " << spec.seed
        << ") into " << dir.dir().string() << "\n";
}

// ---------------------------------------------------------------- extract

struct ExtractOpts {
    Common common;
    std::string sample;
    std::string reference;
    std::string thickness_map;
    std::vector<std::size_t> pixel;
};

fs::path reference_path(const std::string& flag, const Common& c, const std::vector<fs::path>& near) {
    if (!flag.empty()) return flag;
    if (c.cfg.reference) return *c.cfg.reference;
    for (const auto& p : near) {
        const auto candidate = fs::absolute(p).parent_path() / "reference.csv";
        if (fs::exists(candidate)) return candidate;
    }
    fail(ErrorKind::usage, "a reference trace is required (--reference)");
}

void run_extract(ExtractOpts& o, std::ostream& out) {
    auto& c = o.common;
    c.load();
    require(!o.sample.empty(), ErrorKind::usage, "--sample is required");
    const auto ref = read_trace_csv(reference_path(o.reference, c, {o.sample}));
    const auto opts = c.optics();

    if (is_trace_csv(o.sample)) {
        const SampleGeometry geom{c.require_thickness()};
        const auto sample = read_trace_csv(o.sample);
        require(sample.size() == ref.size(), ErrorKind::dimension, "sample and reference differ in length");
        Outputs dir(c.out_dir(), "extract");
        const auto oc = extract_constants(forward_transform(sample), forward_transform(ref), geom, opts);
        write_constants_csv(dir.file("constants.csv"), oc);
        dir.finish();
        out << "extracted " << oc.valid_count() << " valid bins into " << dir.file("constants.csv").string() << "\n";
        return;
    }

    const auto cube = read_cube(o.sample);
    require(cube.nt == ref.size(), ErrorKind::dimension, "cube and reference differ in trace length");
    std::vector<double> thickness(cube.pixel_count());
    if (!o.thickness_map.empty()) {
        thickness = read_thickness_map(o.thickness_map, cube).values;
    } else {
        std::fill(thickness.begin(), thickness.end(), c.require_thickness());
    }
    const auto rspec = forward_transform(ref);

    if (!o.pixel.empty()) {
        require(o.pixel.size() == 2, ErrorKind::usage, "--pixel takes x,y");
        require(o.pixel[0] < cube.nx && o.pixel[1] < cube.ny, ErrorKind::index, "pixel outside the cube");
        const std::size_t i = cube.pixel_index(o.pixel[0], o.pixel[1]);
        Outputs dir(c.out_dir(), "extract");
        const auto oc = extract_constants(forward_transform(cube.trace(i)), rspec, SampleGeometry{thickness[i]}, opts);
        write_constants_csv(dir.file("constants.csv"), oc);
        dir.finish({{"pixel", o.pixel}});
        out << "extracted pixel (" << o.pixel[0] << "," << o.pixel[1] << "): " << oc.valid_count() << " valid bins\n";
        return;
    }

    for (double t : thickness) SampleGeometry{t}.validate();
    const auto layout = band_layout(rspec, opts);
    std::vector<OpticalConstants> results(cube.pixel_count());
    std::vector<char> ok(cube.pixel_count(), 1);
    for (std::size_t i = 0; i < cube.pixel_count(); ++i) {
        try {
            results[i] = extract_constants(forward_transform(cube.trace(i)), rspec, SampleGeometry{thickness[i]}, opts);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::no_band) throw;
            ok[i] = 0;
        }
    }
    Outputs dir(c.out_dir(), "extract");
    const auto path = dir.file("constants.csv");
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path.string());
    os << "x,y,freq_thz,n,alpha_cm,valid\n";
    char line[160];
    for (std::size_t y = 0; y < cube.ny; ++y)
        for (std::size_t x = 0; x < cube.nx; ++x) {
            const std::size_t i = cube.pixel_index(x, y);
            for (std::size_t k : layout.bins) {
                const double f = rspec.frequency(k);
                if (ok[i] && results[i].valid[k])
                    std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g,%.17g,1\n", x, y, f, results[i].n[k],
                                  results[i].alpha[k]);
                else
                    std::snprintf(line, sizeof line, "%zu,%zu,%.17g,nan,nan,0\n", x, y, f);
                os << line;
            }
        }
    os.close();
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
    dir.finish();
    out << "extracted " << cube.pixel_count() << " pixels over " << layout.bins.size() << " in-band bins\n";
}

// ---------------------------------------------------------------- image

struct ImageOpts {
    Common common;
    std::string cube;
    std::vector<std::string> group;
    std::string modality;
    std::string region;
    std::string statistic = "peak_to_peak";
    double freq = 0.0;
    CLI::Option* o_freq = nullptr;
    std::size_t index = 1;
    std::string reference;
    std::string thickness_map;
    std::string pca_model;
    std::string model;
    std::string colormap = "grayscale";
};

GateStatistic parse_statistic(const std::string& s) {
    if (s == "peak_to_peak") return GateStatistic::peak_to_peak;
    if (s == "mean_abs") return GateStatistic::mean_abs;
    if (s == "energy") return GateStatistic::energy;
    fail(ErrorKind::usage, "unknown gate statistic '" + s + "' (peak_to_peak, mean_abs, energy)");
}

void run_image(ImageOpts& o, std::ostream& out) {
    auto& c = o.common;
    c.load();
    std::vector<fs::path> inputs;
    if (!o.cube.empty()) inputs.emplace_back(o.cube);
    for (const auto& g : o.group) inputs.emplace_back(g);
    if (inputs.empty()) inputs = c.cfg.cubes;
    require(!inputs.empty(), ErrorKind::usage, "image needs --cube or --group");
    const Colormap cmap = parse_colormap(o.colormap);
    require(o.index >= 1, ErrorKind::index, "--index is 1-based");

    std::vector<ScanCube> cubes;
    for (const auto& p : inputs) cubes.push_back(read_cube(p));
    auto need_freq = [&] {
        require(o.o_freq->count() > 0, ErrorKind::usage, "modality '" + o.modality + "' needs --freq");
        return o.freq;
    };

    std::vector<ScalarMap> maps;
    json meta{{"modality", o.modality}};
    if (o.modality == "gate") {
        static const std::vector<std::string> names{"A1", "A2", "A3", "A4"};
        const auto it = std::find(names.begin(), names.end(), o.region);
        require(it != names.end(), ErrorKind::usage, "gate modality needs --region A1..A4");
        // each scan is segmented on its own mean trace
        const auto k = static_cast<std::size_t>(it - names.begin());
        const auto stat = parse_statistic(o.statistic);
        json intervals = json::array();
        for (const auto& cube : cubes) {
            const auto iv = derive_gates(mean_trace(cube))[k];
            auto m = gate_image(cube, iv, stat);
            m.label = o.region + " " + o.statistic + " [" + std::to_string(iv.begin) + "," + std::to_string(iv.end) + ")";
            maps.push_back(std::move(m));
            intervals.push_back({iv.begin, iv.end});
        }
        meta["region"] = o.region;
        meta["intervals"] = intervals;
        meta["statistic"] = o.statistic;
    } else if (o.modality == "amplitude" || o.modality == "phase") {
        const double f = need_freq();
        SliceOptions so;
        so.unwrap_band = c.optics().band;
        for (const auto& cube : cubes)
            maps.push_back(frequency_slice(cube, f, o.modality == "amplitude" ? SliceKind::amplitude : SliceKind::phase, so));
        meta["freq_thz"] = f;
    } else if (o.modality == "n" || o.modality == "alpha") {
        const double f = need_freq();
        const auto ref = read_trace_csv(reference_path(o.reference, c, inputs));
        const auto opts = c.optics();
        for (const auto& cube : cubes) {
            Thickness th = 0.0;
            if (!o.thickness_map.empty())
                th = read_thickness_map(o.thickness_map, cube).values;
            else
                th = c.require_thickness();
            maps.push_back(constants_map(cube, ref, th, f, o.modality == "n" ? ConstantKind::n : ConstantKind::alpha, opts));
        }
        meta["freq_thz"] = f;
    } else if (o.modality == "pc") {
        PcaModel pca;
        if (!o.pca_model.empty()) {
            pca = read_pca_model(o.pca_model);
        } else {
            TraceMatrix all;
            for (const auto& cube : cubes) {
                const auto tm = TraceMatrix::from_cube(cube);
                require(all.rows == 0 || tm.cols == all.cols, ErrorKind::dimension, "grouped cubes differ in trace length");
                all.cols = tm.cols;
                all.rows += tm.rows;
                all.data.insert(all.data.end(), tm.data.begin(), tm.data.end());
            }
            pca = pca_fit(all, o.index);
        }
        for (const auto& cube : cubes) maps.push_back(pca_score_map(cube, pca, o.index - 1));
        meta["index"] = o.index;
    } else if (o.modality == "latent") {
        const fs::path mp = !o.model.empty() ? fs::path(o.model) : c.cfg.model.value_or(fs::path{});
        require(!mp.empty(), ErrorKind::usage, "latent modality needs --model");
        const auto model = pcnn::read_model(mp);
        std::vector<const ScanCube*> ptrs;
        for (const auto& cube : cubes) ptrs.push_back(&cube);
        maps = pcnn::latent_maps(ptrs, model, o.index - 1);
        meta["index"] = o.index;
    } else {
        fail(ErrorKind::usage, "unknown modality '" + o.modality + "' (gate, amplitude, phase, n, alpha, pc, latent)");
    }

    Outputs dir(c.out_dir(), "image");
    auto stems = unique_stems(inputs);
    for (auto& s : stems) s += "_" + o.modality;
    meta["inputs"] = json::array();
    for (const auto& p : inputs) meta["inputs"].push_back(p.filename().string());
    emit_maps(dir, maps, stems, cmap, std::nullopt, meta);
    dir.finish({{"modality", o.modality}});
    out << "rendered " << maps.size() << " " << o.modality << " map(s) into " << dir.dir().string() << "\n";
}

// ---------------------------------------------------------------- pca

struct PcaOpts {
    Common common;
    std::vector<std::string> cubes;
    std::size_t components = 5;
};

void run_pca(PcaOpts& o, std::ostream& out) {
    auto& c = o.common;
    c.load();
    auto inputs = o.cubes.empty() ? c.cfg.cubes : as_paths(o.cubes);
    require(!inputs.empty(), ErrorKind::usage, "pca needs --cube");
    TraceMatrix all;
    for (const auto& p : inputs) {
        const auto tm = TraceMatrix::from_cube(read_cube(p));
        require(all.rows == 0 || tm.cols == all.cols, ErrorKind::dimension, "cubes differ in trace length");
        all.cols = tm.cols;
        all.rows += tm.rows;
        all.data.insert(all.data.end(), tm.data.begin(), tm.data.end());
    }
    const auto model = pca_fit(all, o.components);
    Outputs dir(c.out_dir(), "pca");
    write_pca_model(dir.file("pca_model.json"), model);
    dir.finish({{"components", model.size()}});
    out << "pca: " << model.size() << " components from " << all.rows << " traces; explained variance";
    for (double v : model.explained_variance) out << " " << fmt(v);
    out << "\n";
}

// ---------------------------------------------------------------- train

struct TrainOpts {
    Common common;
    std::vector<std::string> cubes;
    std::vector<std::string> traces;
    std::vector<std::string> labels;
    std::vector<int> include_labels;
    CLI::Option* o_include = nullptr;
    std::string reference;
    std::size_t epochs = 50;
    CLI::Option* o_epochs = nullptr;
    std::size_t batch_size = 32;
    CLI::Option* o_batch = nullptr;
    double lr = 1e-3;
    CLI::Option* o_lr = nullptr;
    double clip = 5.0;
    CLI::Option* o_clip = nullptr;
    double noise_db = 25.0;
    CLI::Option* o_noise = nullptr;
    bool no_physics = false;
    std::size_t max_traces = 0;
    CLI::Option* o_max = nullptr;
};

pcnn::TrainConfig train_config(const TrainOpts& o) {
    pcnn::TrainConfig t;
    const auto& j = o.common.cfg.train;
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.beta1 = j.value("beta1", t.beta1);
    t.beta2 = j.value("beta2", t.beta2);
    t.epsilon = j.value("epsilon", t.epsilon);
    t.clip_max_norm = j.value("clip_max_norm", t.clip_max_norm);
    t.physics_scale = j.value("physics_scale", t.physics_scale);
    t.ramp_start_epoch = j.value("ramp_start_epoch", t.ramp_start_epoch);
    t.lambda_max = j.value("lambda_max", t.lambda_max);
    t.noise_level_db = j.value("noise_level_db", t.noise_level_db);
    t.physics = j.value("physics", t.physics);
    if (o.o_epochs->count()) t.epochs = o.epochs;
    if (o.o_batch->count()) t.batch_size = o.batch_size;
    if (o.o_lr->count()) t.learning_rate = o.lr;
    if (o.o_clip->count()) t.clip_max_norm = o.clip;
    if (o.o_noise->count()) t.noise_level_db = o.noise_db;
    if (o.no_physics) t.physics = false;
    t.seed = o.common.seed_value().value_or(0);
    t.optics = o.common.optics();
    t.validate();
    return t;
}

void run_train(TrainOpts& o, std::ostream& out) {
    auto& c = o.common;
    c.load();
    std::vector<fs::path> cube_paths = o.cubes.empty() && o.traces.empty() ? c.cfg.cubes : as_paths(o.cubes);
    std::vector<fs::path> label_paths = o.labels.empty() ? c.cfg.labels : as_paths(o.labels);
    require(!cube_paths.empty() || !o.traces.empty(), ErrorKind::usage, "train needs --cube or --trace inputs");
    require(label_paths.empty() || label_paths.size() == cube_paths.size(), ErrorKind::usage,
            "give one --labels file per --cube");
    std::optional<std::vector<int>> include;
    if (o.o_include->count())
        include = o.include_labels;
    else
        include = c.cfg.include_labels;

    std::vector<PulseTrace> dataset;
    for (std::size_t ci = 0; ci < cube_paths.size(); ++ci) {
        const auto cube = read_cube(cube_paths[ci]);
        fs::path lp;
        if (!label_paths.empty()) {
            lp = label_paths[ci];
        } else {
            const auto candidate = fs::absolute(cube_paths[ci]).parent_path() / "labels.csv";
            if (fs::exists(candidate)) lp = candidate;
        }
        if (lp.empty()) {
            out << "no labels for " << cube_paths[ci].string() << ": training on all " << cube.pixel_count()
                << " pixels\n";
            for (std::size_t i = 0; i < cube.pixel_count(); ++i) dataset.push_back(cube.trace(i));
            continue;
        }
        const auto grid = read_labels_csv(lp);
        require(grid.nx == cube.nx && grid.ny == cube.ny, ErrorKind::dimension,
                lp.string() + ": label grid does not match the cube");
        const std::vector<int> keep = include.value_or(std::vector<int>{kLabelHealthy});
        std::string keep_text;
        for (int k : keep) keep_text += (keep_text.empty() ? "" : ",") + std::to_string(k);
        if (!include)
            out << "labels " << lp.string() << ": training on label {" << keep_text
                << "} (healthy) only; infected pixels are excluded unless --include-labels lists them\n";
        else
            out << "labels " << lp.string() << ": training on labels {" << keep_text << "}\n";
        for (std::size_t i = 0; i < cube.pixel_count(); ++i)
            if (std::find(keep.begin(), keep.end(), static_cast<int>(grid.labels[i])) != keep.end())
                dataset.push_back(cube.trace(i));
    }
    for (const auto& t : o.traces) dataset.push_back(read_trace_csv(t));
    require(!dataset.empty(), ErrorKind::usage,
            "the label filter leaves no training traces (infected pixels are only used when --include-labels lists "
            "them)");

    const std::size_t max_traces = o.o_max->count() ? o.max_traces : c.cfg.train.value("max_traces", std::size_t{0});
    if (max_traces > 0 && dataset.size() > max_traces) {
        std::vector<PulseTrace> subset;
        for (std::size_t i = 0; i < max_traces; ++i) subset.push_back(dataset[i * dataset.size() / max_traces]);
        dataset = std::move(subset);
    }

    std::vector<fs::path> near = cube_paths;
    for (const auto& t : o.traces) near.emplace_back(t);
    const auto ref = read_trace_csv(reference_path(o.reference, c, near));
    const SampleGeometry geom{c.require_thickness()};
    const auto cfg = train_config(o);

    out << "training on " << dataset.size() << " traces for " << cfg.epochs << " epochs\n";
    const auto result = pcnn::train(dataset, ref, geom, cfg);
    Outputs dir(c.out_dir(), "train");
    pcnn::write_model(dir.file("model.pcnn"), result.model);
    pcnn::write_train_log(dir.file("train_log.csv"), result.log);
    dir.finish({{"traces", dataset.size()}, {"epochs", cfg.epochs}, {"seed", cfg.seed}});
    const auto& last = result.log.back();
    out << "epoch " << last.epoch << ": lambda " << fmt(last.lambda) << " L_data " << fmt(last.loss_data) << " L_re "
        << fmt(last.loss_re) << " L_ab " << fmt(last.loss_ab) << " L_total " << fmt(last.loss_total) << "\n";
}

// ---------------------------------------------------------------- encode

struct EncodeOpts {
    Common common;
    std::string model;
    std::string cube;
    std::string trace;
    bool reconstruct = false;
};

void run_encode(EncodeOpts& o, std::ostream& out) {
    auto& c = o.common;
    c.load();
    const fs::path mp = !o.model.empty() ? fs::path(o.model) : c.cfg.model.value_or(fs::path{});
    require(!mp.empty(), ErrorKind::usage, "encode needs --model");
    require(o.cube.empty() != o.trace.empty(), ErrorKind::usage, "encode needs exactly one of --cube or --trace");
    const auto model = pcnn::read_model(mp);

    std::vector<std::vector<double>> latents;
    std::uint32_t nx = 1;
    std::optional<ScanCube> cube;
    std::optional<PulseTrace> trace;
    if (!o.cube.empty()) {
        cube = read_cube(o.cube);
        latents = pcnn::encode_cube(model, *cube);
        nx = cube->nx;
    } else {
        trace = read_trace_csv(o.trace);
        latents.push_back(pcnn::encode(model, *trace));
    }

    Outputs dir(c.out_dir(), "encode");
    {
        const auto path = dir.file("latents.csv");
        std::ofstream os(path);
        require(static_cast<bool>(os), ErrorKind::io, "cannot write " + path.string());
        os << "x,y";
        for (std::size_t j = 0; j < model.arch.latent_dim; ++j) os << ",z" << j;
        os << "\n";
        char buf[40];
        for (std::size_t i = 0; i < latents.size(); ++i) {
            os << i % nx << "," << i / nx;
            for (double v : latents[i]) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                os << buf;
            }
            os << "\n";
        }
        require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
    }
    if (o.reconstruct) {
        if (cube) {
            ScanCube rec = *cube;
            for (std::size_t i = 0; i < rec.pixel_count(); ++i) {
                const auto x = pcnn::decode(model, latents[i], rec.nt);
                std::copy(x.begin(), x.end(), rec.pixel(i).begin());
            }
            write_cube(dir.file("reconstruction.thzc"), rec);
        } else {
            write_trace_csv(dir.file("reconstruction.csv"), pcnn::reconstruct(model, *trace));
        }
    }
    dir.finish();
    out << "encoded " << latents.size() << " trace(s) into " << dir.dir().string() << "\n";
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckOpts {
    Common common;
    std::string dtype = "double";
    bool corrupt = false;
    double step = 1e-6;
};

void run_gradcheck(GradcheckOpts& o, std::ostream& out) {
    auto& c = o.common;
    c.load();
    require(o.dtype == "double", ErrorKind::usage,
            "--dtype " + o.dtype + " is unsupported: gradient verification runs in double precision only");
    const auto seed = c.seed_value().value_or(pcnn::kGradCheckSeed);
    const auto fx = pcnn::reduced_fixture(seed);
    pcnn::TrainConfig cfg;
    pcnn::GradCheckOptions gopt;
    gopt.step = o.step;
    gopt.corrupt_analytic = o.corrupt;

    struct Row {
        std::string name;
        pcnn::LossTerm term;
        std::size_t epoch;
        double threshold;  // 0: informational
    };
    const std::vector<Row> rows{{"data", pcnn::LossTerm::data, 1, 0.0},
                                {"re", pcnn::LossTerm::re, cfg.epochs, 0.0},
                                {"ab", pcnn::LossTerm::ab, cfg.epochs, 0.0},
                                {"total(lambda=0)", pcnn::LossTerm::total, 1, 1e-6},
                                {"total(lambda=1)", pcnn::LossTerm::total, cfg.epochs, 1e-4}};
    out << "gradient check: reduced network, " << fx.model.params.size() << " parameters, seed " << seed << ", step "
        << fmt(o.step) << (o.corrupt ? ", analytic gradient corrupted" : "") << "\n";
    out << std::left << std::setw(18) << "term" << std::setw(16) << "max_rel_error" << std::setw(16) << "max_abs_error"
        << "threshold\n";
    bool pass = true;
    json report = json::array();
    for (const auto& r : rows) {
        const auto rep = pcnn::gradient_check(fx.model, fx.batch, cfg, r.epoch, r.term, gopt);
        const bool ok = r.threshold == 0.0 || rep.max_relative_error < r.threshold;
        pass = pass && ok;
        out << std::left << std::setw(18) << r.name << std::setw(16) << fmt(rep.max_relative_error) << std::setw(16)
            << fmt(rep.max_absolute_error)
            << (r.threshold == 0.0 ? std::string("-") : fmt(r.threshold) + (ok ? " ok" : " FAIL")) << "\n";
        report.push_back({{"term", r.name},
                          {"max_relative_error", rep.max_relative_error},
                          {"max_absolute_error", rep.max_absolute_error},
                          {"worst_parameter", rep.worst_parameter},
                          {"threshold", r.threshold}});
    }
    if ((c.o_out && c.o_out->count()) || c.cfg.out) {
        Outputs dir(c.out_dir(), "gradcheck");
        std::ofstream os(dir.file("gradcheck.json"));
        os << json{{"seed", seed}, {"terms", report}, {"pass", pass}}.dump(2) << "\n";
        os.close();
        dir.finish();
    }
    require(pass, ErrorKind::numeric, "gradient check failed");
    out << "gradient check passed\n";
}

// ---------------------------------------------------------------- render

struct RenderOpts {
    Common common;
    std::vector<std::string> maps;
    std::string colormap = "grayscale";
    double lo = 0.0;
    double hi = 0.0;
    CLI::Option* o_lo = nullptr;
    CLI::Option* o_hi = nullptr;
};

void run_render(RenderOpts& o, std::ostream& out) {
    auto& c = o.common;
    c.load();
    require(!o.maps.empty(), ErrorKind::usage, "render needs --map");
    require((o.o_lo->count() > 0) == (o.o_hi->count() > 0), ErrorKind::usage, "--min and --max go together");
    std::vector<ScalarMap> maps;
    for (const auto& p : o.maps) maps.push_back(read_map_csv(p));
    std::optional<std::pair<double, double>> scale;
    if (o.o_lo->count()) scale = std::pair{o.lo, o.hi};
    Outputs dir(c.out_dir(), "render");
    emit_maps(dir, maps, unique_stems(as_paths(o.maps)), parse_colormap(o.colormap), scale, json{{"modality", "map"}});
    dir.finish();
    out << "rendered " << maps.size() << " map(s) into " << dir.dir().string() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"THz-TDS toolkit: optical constants, feature maps and a physics-constrained autoencoder", "thz"};
    app.require_subcommand(1);

    SynthOpts synth;
    auto* s = app.add_subcommand("synth", "Synthesize a labeled phantom cube");
    synth.common.attach(s, false, false);
    s->add_option("--preset", synth.preset_name, "Built-in preset (leaf-healthy, leaf-infected, root-healthy, root-infected)");
    s->add_option("--spec", synth.spec_path, "PhantomSpec JSON file")->check(CLI::ExistingFile);
    synth.o_noise = s->add_option("--noise", synth.noise, "Override the additive noise standard deviation");

    ExtractOpts extract;
    auto* e = app.add_subcommand("extract", "Extract n(f) and alpha(f) from a trace or cube");
    extract.common.attach(e, true, true);
    e->add_option("--sample", extract.sample, "Sample trace CSV or cube file");
    e->add_option("--reference", extract.reference, "Reference trace CSV");
    e->add_option("--thickness-map", extract.thickness_map, "Per-pixel thickness map CSV (mm)");
    e->add_option("--pixel", extract.pixel, "Single cube pixel x,y")->delimiter(',')->expected(2);

    ImageOpts image;
    auto* im = app.add_subcommand("image", "Render a feature map from one or more cubes");
    image.common.attach(im, true, true);
    im->add_option("--cube", image.cube, "Cube file");
    im->add_option("--group", image.group, "Cubes rendered on one shared scale")->expected(1, -1);
    im->add_option("--modality", image.modality, "gate, amplitude, phase, n, alpha, pc or latent")->required();
    im->add_option("--region", image.region, "Gate region A1..A4");
    im->add_option("--statistic", image.statistic, "Gate statistic: peak_to_peak, mean_abs, energy");
    image.o_freq = im->add_option("--freq", image.freq, "Frequency (THz)");
    im->add_option("--index", image.index, "Component or latent rank, 1-based (1 = highest variance)");
    im->add_option("--reference", image.reference, "Reference trace CSV (n, alpha)");
    im->add_option("--thickness-map", image.thickness_map, "Per-pixel thickness map CSV (mm)");
    im->add_option("--pca-model", image.pca_model, "PCA model JSON (pc; fitted on the inputs if absent)");
    im->add_option("--model", image.model, "PCNN model file (latent)");
    im->add_option("--colormap", image.colormap, "grayscale (16-bit PGM), jet or hot (PPM)");

    PcaOpts pca;
    auto* pc = app.add_subcommand("pca", "Fit a PCA model over cube pixels");
    pca.common.attach(pc, false, false);
    pc->add_option("--cube", pca.cubes, "Cube file(s), pooled")->expected(1, -1);
    pc->add_option("--components", pca.components, "Number of components");

    TrainOpts train;
    auto* t = app.add_subcommand("train", "Train the physics-constrained autoencoder");
    train.common.attach(t, true, true);
    t->add_option("--cube", train.cubes, "Training cube(s)")->expected(1, -1);
    t->add_option("--trace", train.traces, "Training trace CSV(s)")->expected(1, -1);
    t->add_option("--labels", train.labels, "Labels CSV per cube (default: labels.csv beside the cube)")->expected(1, -1);
    train.o_include = t->add_option("--include-labels", train.include_labels, "Labels to train on, e.g. 1,2")->delimiter(',');
    t->add_option("--reference", train.reference, "Reference trace CSV (default: reference.csv beside the input)");
    train.o_epochs = t->add_option("--epochs", train.epochs, "Epochs");
    train.o_batch = t->add_option("--batch-size", train.batch_size, "Batch size");
    train.o_lr = t->add_option("--lr", train.lr, "Adam learning rate");
    train.o_clip = t->add_option("--clip", train.clip, "Global gradient-norm clip");
    train.o_noise = t->add_option("--noise-db", train.noise_db, "Input noise SNR in dB");
    t->add_flag("--no-physics", train.no_physics, "Train the plain autoencoder (physics weights 0)");
    train.o_max = t->add_option("--max-traces", train.max_traces, "Evenly subsample the training set");

    EncodeOpts encode;
    auto* en = app.add_subcommand("encode", "Encode traces to latent vectors");
    encode.common.attach(en, false, false);
    en->add_option("--model", encode.model, "PCNN model file");
    en->add_option("--cube", encode.cube, "Cube file");
    en->add_option("--trace", encode.trace, "Trace CSV");
    en->add_flag("--reconstruct", encode.reconstruct, "Also write decoded reconstructions");

    GradcheckOpts grad;
    auto* g = app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
    grad.common.attach(g, false, false);
    g->add_option("--dtype", grad.dtype, "Arithmetic precision (only double is supported)");
    g->add_option("--step", grad.step, "Central-difference step");
    g->add_flag("--corrupt-gradient", grad.corrupt, "Test hook: perturb one analytic gradient entry");

    RenderOpts render;
    auto* r = app.add_subcommand("render", "Render map CSVs on a shared scale");
    render.common.attach(r, false, false);
    r->add_option("--map", render.maps, "Map CSV file(s)")->expected(1, -1);
    r->add_option("--colormap", render.colormap, "grayscale, jet or hot");
    render.o_lo = r->add_option("--min", render.lo, "Explicit scale minimum");
    render.o_hi = r->add_option("--max", render.hi, "Explicit scale maximum");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& pe) {
        const int rc = app.exit(pe, out, err);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (s->parsed()) run_synth(synth, out);
        else if (e->parsed()) run_extract(extract, out);
        else if (im->parsed()) run_image(image, out);
        else if (pc->parsed()) run_pca(pca, out);
        else if (t->parsed()) run_train(train, out);
        else if (en->parsed()) run_encode(encode, out);
        else if (g->parsed()) run_gradcheck(grad, out);
        else if (r->parsed()) run_render(render, out);
        return 0;
    } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        return exit_code(ex.kind());
    } catch (const fs::filesystem_error& ex) {
        err << "error: " << ex.what() << "\n";
        return 5;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 4;
    }
}

}  // namespace thz::cli
