#include "thz/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "thz/error.hpp"
#include "thz/parallel.hpp"

namespace thz {

TraceMatrix TraceMatrix::from_cube(const ScanCube& cube) {
    cube.validate();
    return TraceMatrix{cube.pixel_count(), cube.nt, cube.data};
}

double PcaModel::score(std::span<const double> trace, std::size_t index) const {
    require(index < components.size(), ErrorKind::index, "principal component index out of range");
    require(trace.size() == mean.size(), ErrorKind::dimension, "trace length does not match the PCA model");
    const auto& c = components[index];
    double s = 0.0;
    for (std::size_t t = 0; t < trace.size(); ++t) s += (trace[t] - mean[t]) * c[t];
    return s;
}

PcaModel pca_fit(const TraceMatrix& traces, std::size_t k) {
    const std::size_t m = traces.rows, nt = traces.cols;
    require(traces.data.size() == m * nt, ErrorKind::dimension, "trace matrix storage does not match its shape");
    require(m >= 2, ErrorKind::dimension, "PCA needs at least two traces");
    require(k >= 1 && k <= std::min(m, nt), ErrorKind::dimension,
            "component count must lie in [1, min(m, nt)] = [1, " + std::to_string(std::min(m, nt)) + "]");

    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMatrix> x(traces.data.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nt));
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::MatrixXd centered = x.rowwise() - mu;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const auto& sigma = svd.singularValues();
    const auto& v = svd.matrixV();

    PcaModel model;
    model.mean.assign(mu.data(), mu.data() + nt);
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> comp(nt);
        std::size_t arg = 0;
        for (std::size_t t = 0; t < nt; ++t) {
            comp[t] = v(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
            if (std::abs(comp[t]) > std::abs(comp[arg])) arg = t;
        }
        if (comp[arg] < 0.0)
            for (double& e : comp) e = -e;
        const double s = sigma(static_cast<Eigen::Index>(c));
        model.components.push_back(std::move(comp));
        model.explained_variance.push_back(s * s / static_cast<double>(m - 1));
    }
    return model;
}

ScalarMap pca_score_map(const ScanCube& cube, const PcaModel& model, std::size_t component_index) {
    cube.validate();
    require(component_index < model.size(), ErrorKind::index, "principal component index out of range");
    require(cube.nt == model.dimension(), ErrorKind::dimension, "cube trace length does not match the PCA model");
    ScalarMap map = ScalarMap::filled(cube.nx, cube.ny, 0.0);
    parallel_for(cube.pixel_count(),
                 [&](std::size_t p) { map.values[p] = model.score(cube.pixel(p), component_index); });
    map.label = "PC" + std::to_string(component_index + 1) + " score";
    map.units = "a.u.";
    return map;
}

void write_pca_model(const std::filesystem::path& path, const PcaModel& model) {
    nlohmann::json j{{"mean", model.mean},
                     {"components", model.components},
                     {"explained_variance", model.explained_variance}};
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << j.dump() << "\n";
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

PcaModel read_pca_model(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(is);
        PcaModel m;
        j.at("mean").get_to(m.mean);
        j.at("components").get_to(m.components);
        j.at("explained_variance").get_to(m.explained_variance);
        require(m.components.size() == m.explained_variance.size(), ErrorKind::input, "PCA model is inconsistent");
        for (const auto& c : m.components)
            require(c.size() == m.mean.size(), ErrorKind::input, "PCA component length mismatch");
        return m;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::input, path.string() + ": " + e.what());
    }
}

Colormap parse_colormap(const std::string& name) {
    if (name == "gray" || name == "grayscale") return Colormap::grayscale;
    if (name == "jet") return Colormap::jet;
    if (name == "hot") return Colormap::hot;
    fail(ErrorKind::usage, "unknown colormap '" + name + "' (expected gray, jet or hot)");
}

std::string_view to_string(Colormap colormap) {
    switch (colormap) {
        case Colormap::grayscale: return "grayscale";
        case Colormap::jet: return "jet";
        case Colormap::hot: return "hot";
    }
    return "?";
}

std::array<std::uint8_t, 3> colormap_rgb(Colormap colormap, std::uint8_t index) {
    const double x = index / 255.0;
    auto ch = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))); };
    switch (colormap) {
        case Colormap::grayscale: return {index, index, index};
        case Colormap::jet:
            return {ch(1.5 - std::abs(4.0 * x - 3.0)), ch(1.5 - std::abs(4.0 * x - 2.0)),
                    ch(1.5 - std::abs(4.0 * x - 1.0))};
        case Colormap::hot: return {ch(3.0 * x), ch(3.0 * x - 1.0), ch(3.0 * x - 2.0)};
    }
    return {0, 0, 0};
}

std::uint16_t render_level(double value, double lo, double hi) {
    const double scaled = 65535.0 * (value - lo) / (hi - lo);
    return static_cast<std::uint16_t>(std::clamp<long>(std::lround(scaled), 0, 65535));
}

Raster render_map(const ScalarMap& map, double lo, double hi) {
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, ErrorKind::degenerate,
            "render range must satisfy min < max");
    require(map.values.size() == std::size_t{map.nx} * map.ny && map.valid.size() == map.values.size(),
            ErrorKind::dimension, "map storage does not match its grid");
    Raster r{map.nx, map.ny, std::vector<std::uint16_t>(map.values.size(), 0),
             std::vector<std::uint8_t>(map.values.size(), 0)};
    for (std::size_t i = 0; i < map.values.size(); ++i) {
        if (!map.valid[i] || !std::isfinite(map.values[i])) continue;
        r.levels[i] = render_level(map.values[i], lo, hi);
        r.mask[i] = 255;
    }
    return r;
}

RenderGroup render_group(const std::vector<ScalarMap>& maps, Colormap colormap) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& m : maps)
        for (std::size_t i = 0; i < m.values.size(); ++i)
            if (m.valid[i] && std::isfinite(m.values[i])) {
                lo = std::min(lo, m.values[i]);
                hi = std::max(hi, m.values[i]);
            }
    require(std::isfinite(lo), ErrorKind::no_band, "no valid pixel in the render group");
    require(lo < hi, ErrorKind::degenerate, "render group has a single value; joint scale is degenerate");

    RenderGroup g;
    g.shared_min = lo;
    g.shared_max = hi;
    g.colormap = colormap;
    for (const auto& m : maps) g.images.push_back(render_map(m, lo, hi));
    return g;
}

}  // namespace thz
