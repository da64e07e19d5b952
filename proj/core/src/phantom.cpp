#include "thz/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "thz/error.hpp"
#include "thz/parallel.hpp"

namespace thz {

using nlohmann::json;

std::string_view to_string(RegionKind kind) {
    switch (kind) {
        case RegionKind::background: return "background";
        case RegionKind::blade: return "blade";
        case RegionKind::vein: return "vein";
        case RegionKind::gall: return "gall";
    }
    return "?";
}

std::string_view to_string(Geometry geometry) {
    switch (geometry) {
        case Geometry::uniform: return "uniform";
        case Geometry::leaf: return "leaf";
        case Geometry::root: return "root";
    }
    return "?";
}

namespace {

RegionKind parse_region(const std::string& s) {
    for (auto k : {RegionKind::background, RegionKind::blade, RegionKind::vein, RegionKind::gall})
        if (s == to_string(k)) return k;
    fail(ErrorKind::input, "unknown region kind '" + s + "'");
}

Geometry parse_geometry(const std::string& s) {
    for (auto g : {Geometry::uniform, Geometry::leaf, Geometry::root})
        if (s == to_string(g)) return g;
    fail(ErrorKind::input, "unknown geometry '" + s + "'");
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double t = std::clamp(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0);
    const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::hypot(dx, dy);
}

RegionKind leaf_region(const PhantomSpec& s, double X, double Y) {
    const double cx = s.nx / 2.0, cy = s.ny / 2.0;
    const double a = 0.64 * s.nx, b = 0.60 * s.ny;
    const double e = (X - cx) * (X - cx) / (a * a) + (Y - cy) * (Y - cy) / (b * b);
    if (e > 1.0) return RegionKind::background;
    if (!s.find(RegionKind::vein)) return RegionKind::blade;

    if (std::abs(Y - cy) <= 1.0 && std::abs(X - cx) <= 0.42 * s.nx) return RegionKind::vein;
    for (double u0 : {-0.25, 0.0, 0.22}) {
        const double ax = cx + u0 * s.nx;
        for (double side : {-1.0, 1.0}) {
            const double bx = ax + 0.18 * s.nx, by = cy + side * 0.28 * s.ny;
            if (segment_distance(X, Y, ax, cy, bx, by) <= 0.6) return RegionKind::vein;
        }
    }
    return RegionKind::blade;
}

RegionKind root_region(const PhantomSpec& s, double X, double Y) {
    const double cx = s.nx / 2.0, cy = s.ny / 2.0;
    if (s.find(RegionKind::gall)) {
        const double a = 0.22 * s.nx, b = 0.32 * s.ny;
        if ((X - cx) * (X - cx) / (a * a) + (Y - cy) * (Y - cy) / (b * b) <= 1.0) return RegionKind::gall;
    }
    if (std::abs(Y - cy) <= 0.18 * s.ny) return RegionKind::blade;
    return RegionKind::background;
}

}  // namespace

const RegionSpec* PhantomSpec::find(RegionKind kind) const noexcept {
    for (const auto& r : regions)
        if (r.region == kind) return &r;
    return nullptr;
}

void PhantomSpec::validate() const {
    require(nx >= 1 && ny >= 1, ErrorKind::dimension, "phantom grid needs at least one pixel");
    require(nt >= 256, ErrorKind::dimension, "phantom traces need at least 256 samples");
    require(std::isfinite(dt_ps) && dt_ps > 0.0, ErrorKind::input, "phantom dt must be positive");
    require(std::isfinite(dx_mm) && dx_mm > 0.0, ErrorKind::input, "phantom scan step must be positive");
    require(std::isfinite(t0_ps), ErrorKind::input, "phantom t0 must be finite");
    require(std::isfinite(pulse.center_ps) && std::isfinite(pulse.amplitude) && std::isfinite(pulse.width_ps) &&
                pulse.width_ps > 0.0,
            ErrorKind::input, "pulse parameters must be finite with positive width");
    require(std::isfinite(noise_std) && noise_std >= 0.0, ErrorKind::input, "noise_std must be >= 0");
    for (std::size_t i = 0; i < regions.size(); ++i) {
        regions[i].material.validate();
        SampleGeometry{regions[i].thickness_mm}.validate();
        for (std::size_t j = 0; j < i; ++j)
            require(regions[j].region != regions[i].region, ErrorKind::input,
                    "region '" + std::string(to_string(regions[i].region)) + "' listed twice");
    }
    for (RegionKind k : region_layout(*this))
        require(find(k) != nullptr, ErrorKind::model,
                "region '" + std::string(to_string(k)) + "' has no material");
}

std::vector<RegionKind> region_layout(const PhantomSpec& spec) {
    std::vector<RegionKind> out(std::size_t{spec.nx} * spec.ny);
    for (std::uint32_t y = 0; y < spec.ny; ++y)
        for (std::uint32_t x = 0; x < spec.nx; ++x) {
            const double X = x + 0.5, Y = y + 0.5;
            RegionKind k = RegionKind::blade;
            if (spec.geometry == Geometry::leaf) k = leaf_region(spec, X, Y);
            if (spec.geometry == Geometry::root) k = root_region(spec, X, Y);
            out[std::size_t{y} * spec.nx + x] = k;
        }
    return out;
}

PulseTrace make_reference(const PhantomSpec& spec) {
    require(spec.nt >= 256, ErrorKind::dimension, "reference pulse needs at least 256 samples");
    std::vector<double> s(spec.nt);
    const double sigma = spec.pulse.width_ps;
    const double norm = spec.pulse.amplitude * std::exp(0.5);
    for (std::size_t k = 0; k < spec.nt; ++k) {
        const double u = (spec.t0_ps + static_cast<double>(k) * spec.dt_ps - spec.pulse.center_ps) / sigma;
        s[k] = -norm * u * std::exp(-0.5 * u * u);
    }
    return PulseTrace(spec.dt_ps, spec.t0_ps, std::move(s));
}

LabeledCube synthesize(const PhantomSpec& spec) {
    spec.validate();
    const auto layout = region_layout(spec);
    const PulseTrace reference = make_reference(spec);
    const Spectrum ref_spec = forward_transform(reference);

    std::map<RegionKind, std::vector<double>> clean;
    for (const auto& r : spec.regions) {
        const Spectrum s = apply_forward_model(ref_spec, r.material, SampleGeometry{r.thickness_mm});
        const PulseTrace t = inverse_transform(s, spec.nt, spec.t0_ps);
        clean[r.region].assign(t.samples().begin(), t.samples().end());
    }

    LabeledCube out{ScanCube{spec.nx, spec.ny, spec.nt, spec.dx_mm, spec.dt_ps, spec.t0_ps,
                             std::vector<double>(std::size_t{spec.nx} * spec.ny * spec.nt)},
                    std::vector<std::uint8_t>(layout.size()),
                    layout,
                    std::vector<double>(layout.size()),
                    reference,
                    spec.regions};

    parallel_for(layout.size(), [&](std::size_t p) {
        const auto& src = clean.at(layout[p]);
        auto dst = out.cube.pixel(p);
        std::copy(src.begin(), src.end(), dst.begin());
        out.labels[p] = layout[p] == RegionKind::background ? kLabelBackground : spec.class_id;
        out.thickness_mm[p] = spec.find(layout[p])->thickness_mm;
        if (spec.noise_std > 0.0) {
            const auto x = static_cast<std::uint32_t>(p % spec.nx);
            const auto y = static_cast<std::uint32_t>(p / spec.nx);
            std::seed_seq key{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), x, y};
            std::mt19937_64 rng(key);
            std::normal_distribution<double> noise(0.0, spec.noise_std);
            for (double& v : dst) v += noise(rng);
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// presets (synthetic magnitudes; the orderings between classes are the point)

namespace {

MaterialModel table(std::initializer_list<MaterialPoint> pts) { return MaterialModel{pts}; }

PhantomSpec base_spec(std::string name, Geometry g, std::uint8_t cls) {
    PhantomSpec s;
    s.name = std::move(name);
    s.geometry = g;
    s.class_id = cls;
    s.noise_std = 1e-4;
    s.seed = 7;
    return s;
}

}  // namespace

std::vector<std::string> preset_names() { return {"leaf-healthy", "leaf-infected", "root-healthy", "root-infected"}; }

PhantomSpec preset(std::string_view name) {
    if (name == "leaf-healthy") {
        auto s = base_spec("leaf-healthy", Geometry::leaf, kLabelHealthy);
        s.regions = {
            {RegionKind::background, MaterialModel::vacuum(), 0.3},
            {RegionKind::blade,
             table({{0.1, 2.32, 6}, {0.5, 2.28, 12}, {1.0, 2.22, 20}, {1.6, 2.16, 30}, {2.5, 2.10, 45}, {4.0, 2.05, 60}}),
             0.3},
            {RegionKind::vein,
             table({{0.1, 2.34, 7}, {0.5, 2.30, 13}, {1.0, 2.24, 21}, {1.6, 2.18, 31}, {2.5, 2.12, 46}, {4.0, 2.07, 62}}),
             0.4},
        };
        return s;
    }
    if (name == "leaf-infected") {
        auto s = base_spec("leaf-infected", Geometry::leaf, kLabelInfected);
        s.regions = {
            {RegionKind::background, MaterialModel::vacuum(), 0.3},
            {RegionKind::blade,
             table({{0.1, 2.12, 8}, {0.5, 2.13, 20}, {1.0, 2.145, 32}, {1.6, 2.16, 38}, {2.5, 2.19, 50}, {4.0, 2.22, 66}}),
             0.3},
            // water retained in the veins
            {RegionKind::vein,
             table({{0.1, 2.34, 8}, {0.5, 2.32, 18}, {1.0, 2.29, 28}, {1.6, 2.26, 36}, {2.5, 2.24, 50}, {4.0, 2.22, 66}}),
             0.4},
        };
        return s;
    }
    if (name == "root-healthy") {
        auto s = base_spec("root-healthy", Geometry::root, kLabelHealthy);
        s.regions = {
            {RegionKind::background, MaterialModel::vacuum(), 0.8},
            {RegionKind::blade, table({{0.1, 2.30, 4}, {0.5, 2.27, 7}, {1.0, 2.24, 10}, {2.0, 2.20, 16}, {4.0, 2.15, 26}}),
             0.8},
        };
        return s;
    }
    if (name == "root-infected") {
        auto s = base_spec("root-infected", Geometry::root, kLabelInfected);
        // dehydrated tissue with an absorption band at 0.4 THz
        s.regions = {
            {RegionKind::background, MaterialModel::vacuum(), 0.8},
            {RegionKind::blade, table({{0.1, 1.52, 5},
                                       {0.3, 1.51, 7},
                                       {0.4, 1.51, 16},
                                       {0.5, 1.50, 8},
                                       {1.0, 1.48, 11},
                                       {2.0, 1.45, 17},
                                       {4.0, 1.42, 26}}),
             0.8},
            {RegionKind::gall, table({{0.1, 1.46, 5},
                                      {0.3, 1.45, 7},
                                      {0.4, 1.45, 16},
                                      {0.5, 1.44, 8},
                                      {1.0, 1.42, 11},
                                      {2.0, 1.40, 17},
                                      {4.0, 1.38, 26}}),
             1.0},
        };
        return s;
    }
    fail(ErrorKind::input, "unknown phantom preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const MaterialModel& m) {
    json pts = json::array();
    for (const auto& p : m.points) pts.push_back({p.f_thz, p.n, p.alpha_cm});
    j = json{{"points", pts}};
}

void from_json(const json& j, MaterialModel& m) {
    for (const auto& [key, _] : j.items())
        require(key == "points", ErrorKind::input, "unknown material key '" + key + "'");
    m.points.clear();
    for (const auto& p : j.at("points")) {
        require(p.is_array() && p.size() == 3, ErrorKind::input, "material points are [f_thz, n, alpha_cm] triples");
        m.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
}

void to_json(json& j, const RegionSpec& r) {
    j = json{{"region", std::string(to_string(r.region))}, {"material", r.material}, {"thickness_mm", r.thickness_mm}};
}

void from_json(const json& j, RegionSpec& r) {
    for (const auto& [key, _] : j.items())
        require(key == "region" || key == "material" || key == "thickness_mm", ErrorKind::input,
                "unknown region key '" + key + "'");
    r.region = parse_region(j.at("region").get<std::string>());
    r.material = j.at("material").get<MaterialModel>();
    r.thickness_mm = j.at("thickness_mm").get<double>();
}

void to_json(json& j, const PhantomSpec& s) {
    j = json{{"name", s.name},
             {"nx", s.nx},
             {"ny", s.ny},
             {"nt", s.nt},
             {"dt_ps", s.dt_ps},
             {"t0_ps", s.t0_ps},
             {"dx_mm", s.dx_mm},
             {"pulse", {{"center_ps", s.pulse.center_ps}, {"width_ps", s.pulse.width_ps}, {"amplitude", s.pulse.amplitude}}},
             {"geometry", std::string(to_string(s.geometry))},
             {"class_id", s.class_id},
             {"regions", s.regions},
             {"noise_std", s.noise_std},
             {"seed", s.seed}};
}

void from_json(const json& j, PhantomSpec& s) {
    static const char* known[] = {"name",     "nx",       "ny",      "nt",        "dt_ps", "t0_ps", "dx_mm",
                                  "pulse",    "geometry", "class_id", "regions", "noise_std", "seed"};
    for (const auto& [key, _] : j.items())
        require(std::find(std::begin(known), std::end(known), key) != std::end(known), ErrorKind::input,
                "unknown phantom key '" + key + "'");

    PhantomSpec d;
    s = d;
    s.name = j.value("name", d.name);
    s.nx = j.value("nx", d.nx);
    s.ny = j.value("ny", d.ny);
    s.nt = j.value("nt", d.nt);
    s.dt_ps = j.value("dt_ps", d.dt_ps);
    s.t0_ps = j.value("t0_ps", d.t0_ps);
    s.dx_mm = j.value("dx_mm", d.dx_mm);
    if (j.contains("pulse")) {
        const auto& p = j.at("pulse");
        for (const auto& [key, _] : p.items())
            require(key == "center_ps" || key == "width_ps" || key == "amplitude", ErrorKind::input,
                    "unknown pulse key '" + key + "'");
        s.pulse.center_ps = p.value("center_ps", d.pulse.center_ps);
        s.pulse.width_ps = p.value("width_ps", d.pulse.width_ps);
        s.pulse.amplitude = p.value("amplitude", d.pulse.amplitude);
    }
    if (j.contains("geometry")) s.geometry = parse_geometry(j.at("geometry").get<std::string>());
    s.class_id = j.value("class_id", d.class_id);
    s.regions = j.at("regions").get<std::vector<RegionSpec>>();
    s.noise_std = j.value("noise_std", d.noise_std);
    s.seed = j.value("seed", d.seed);
}

PhantomSpec read_phantom_spec(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    try {
        return json::parse(is).get<PhantomSpec>();
    } catch (const json::exception& e) {
        fail(ErrorKind::input, path.string() + ": " + e.what());
    }
}

void write_phantom_spec(const std::filesystem::path& path, const PhantomSpec& spec) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << json(spec).dump(2) << "\n";
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

void write_labels_csv(const std::filesystem::path& path, const LabelGrid& grid) {
    require(grid.labels.size() == std::size_t{grid.nx} * grid.ny, ErrorKind::dimension,
            "label grid does not match its dimensions");
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << "x,y,label\n";
    for (std::uint32_t y = 0; y < grid.ny; ++y)
        for (std::uint32_t x = 0; x < grid.nx; ++x)
            os << x << ',' << y << ',' << static_cast<unsigned>(grid.labels[std::size_t{y} * grid.nx + x]) << '\n';
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

LabelGrid read_labels_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "x,y,label", ErrorKind::input, path.string() + ": unexpected header");
    struct Row {
        unsigned x, y, label;
    };
    std::vector<Row> rows;
    unsigned max_x = 0, max_y = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        Row r{};
        require(std::sscanf(line.c_str(), "%u,%u,%u", &r.x, &r.y, &r.label) == 3 && r.label <= 255,
                ErrorKind::input, path.string() + ": malformed row '" + line + "'");
        max_x = std::max(max_x, r.x);
        max_y = std::max(max_y, r.y);
        rows.push_back(r);
    }
    require(!rows.empty(), ErrorKind::input, path.string() + ": no labels");
    LabelGrid g{max_x + 1, max_y + 1, {}};
    require(rows.size() == std::size_t{g.nx} * g.ny, ErrorKind::input, path.string() + ": labels do not cover the grid");
    g.labels.assign(rows.size(), 0);
    std::vector<bool> seen(rows.size(), false);
    for (const auto& r : rows) {
        const std::size_t i = std::size_t{r.y} * g.nx + r.x;
        require(!seen[i], ErrorKind::input, path.string() + ": duplicate pixel");
        seen[i] = true;
        g.labels[i] = static_cast<std::uint8_t>(r.label);
    }
    return g;
}

void write_truth_json(const std::filesystem::path& path, const std::vector<RegionSpec>& truth) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << json{{"regions", truth}}.dump(2) << "\n";
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

}  // namespace thz
