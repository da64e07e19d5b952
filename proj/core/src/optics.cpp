#include "thz/optics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <string>

#include "thz/error.hpp"

namespace thz {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_pair(const Spectrum& a, const Spectrum& b) {
    require(a.bins.size() == b.bins.size() && a.length == b.length, ErrorKind::dimension,
            "sample and reference spectra differ in size");
    require(std::abs(a.df - b.df) <= 1e-12 * std::max(a.df, b.df), ErrorKind::dimension,
            "sample and reference spectra differ in frequency step");
}
}  // namespace

void SampleGeometry::validate() const {
    require(std::isfinite(thickness_mm) && thickness_mm > 0.0, ErrorKind::geometry,
            "sample thickness must be positive and finite (got " + std::to_string(thickness_mm) + " mm)");
}

std::size_t OpticalConstants::valid_count() const noexcept {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

void MaterialModel::validate() const {
    require(!points.empty(), ErrorKind::model, "material needs at least one control point");
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        require(std::isfinite(p.f_thz) && std::isfinite(p.n) && std::isfinite(p.alpha_cm), ErrorKind::model,
                "material control point " + std::to_string(i) + " is not finite");
        require(p.n >= 1.0, ErrorKind::model, "material refractive index below 1 at control point " + std::to_string(i));
        require(p.alpha_cm >= 0.0, ErrorKind::model, "negative absorption at control point " + std::to_string(i));
        if (i > 0)
            require(p.f_thz > points[i - 1].f_thz, ErrorKind::model,
                    "material control frequencies must be strictly increasing");
    }
}

MaterialModel MaterialModel::constant(double n, double alpha_cm) { return MaterialModel{{{1.0, n, alpha_cm}}}; }

MaterialSample sample_material(const MaterialModel& material, std::span<const double> frequencies) {
    material.validate();
    const auto& pts = material.points;
    MaterialSample out;
    out.n.reserve(frequencies.size());
    out.alpha.reserve(frequencies.size());
    for (double f : frequencies) {
        require(std::isfinite(f) && f >= 0.0, ErrorKind::input, "material query frequency must be finite and >= 0");
        if (f <= pts.front().f_thz) {
            out.n.push_back(pts.front().n);
            out.alpha.push_back(pts.front().alpha_cm);
            continue;
        }
        if (f >= pts.back().f_thz) {
            out.n.push_back(pts.back().n);
            out.alpha.push_back(pts.back().alpha_cm);
            continue;
        }
        const auto hi = std::upper_bound(pts.begin(), pts.end(), f,
                                         [](double v, const MaterialPoint& p) { return v < p.f_thz; });
        const auto lo = hi - 1;
        const double w = (f - lo->f_thz) / (hi->f_thz - lo->f_thz);
        out.n.push_back(lo->n + w * (hi->n - lo->n));
        out.alpha.push_back(lo->alpha_cm + w * (hi->alpha_cm - lo->alpha_cm));
    }
    return out;
}

BandLayout band_layout(const Spectrum& reference, const ExtractionOptions& options) {
    const auto& band = options.band;
    require(std::isfinite(band.min_thz) && std::isfinite(band.max_thz) && band.min_thz > 0.0 &&
                band.max_thz > band.min_thz,
            ErrorKind::input, "frequency band must satisfy 0 < f_min < f_max");
    require(band.max_thz <= reference.nyquist() * (1.0 + 1e-12), ErrorKind::input,
            "frequency band extends past Nyquist (" + std::to_string(reference.nyquist()) + " THz)");
    require(std::isfinite(options.floor) && options.floor >= 0.0, ErrorKind::input,
            "dynamic-range floor must be finite and >= 0");

    double peak = 0.0;
    for (const auto& b : reference.bins) peak = std::max(peak, std::abs(b));
    const double threshold = options.floor * peak;

    BandLayout layout;
    for (std::size_t k = 1; k < reference.bins.size(); ++k) {
        const double f = reference.frequency(k);
        if (f < band.min_thz || f > band.max_thz) continue;
        const double mag = std::abs(reference.bins[k]);
        layout.bins.push_back(k);
        layout.freqs.push_back(f);
        layout.strong.push_back(mag > 0.0 && mag >= threshold);
    }
    return layout;
}

std::vector<double> relative_phase_delay(const Spectrum& sample, const Spectrum& reference, const BandLayout& layout) {
    check_pair(sample, reference);
    std::vector<double> wrapped(layout.bins.size());
    for (std::size_t i = 0; i < layout.bins.size(); ++i) {
        const std::size_t k = layout.bins[i];
        wrapped[i] = std::arg(reference.bins[k] * std::conj(sample.bins[k]));
    }
    auto phase = unwrap_phase(wrapped);
    require(std::find(layout.strong.begin(), layout.strong.end(), true) != layout.strong.end(), ErrorKind::no_band,
            "no in-band bin clears the reference floor");
    anchor_zero_dc(phase, layout.freqs, layout.strong);
    return phase;
}

OpticalConstants extract_constants(const Spectrum& sample, const Spectrum& reference, const SampleGeometry& geom,
                                   const ExtractionOptions& options) {
    check_pair(sample, reference);
    geom.validate();

    const auto layout = band_layout(reference, options);
    require(!layout.bins.empty(), ErrorKind::no_band, "no spectral bins inside the requested band");
    const auto dphi = relative_phase_delay(sample, reference, layout);

    const std::size_t nf = reference.bins.size();
    OpticalConstants oc;
    oc.frequencies.resize(nf);
    oc.n.assign(nf, kNaN);
    oc.alpha.assign(nf, kNaN);
    oc.valid.assign(nf, false);
    for (std::size_t k = 0; k < nf; ++k) oc.frequencies[k] = reference.frequency(k);

    const double d_mm = geom.thickness_mm;
    const double d_cm = geom.thickness_cm();
    for (std::size_t i = 0; i < layout.bins.size(); ++i) {
        if (!layout.strong[i]) continue;
        const std::size_t k = layout.bins[i];
        const double f = layout.freqs[i];
        const double n = 1.0 + kSpeedOfLight * dphi[i] / (2.0 * std::numbers::pi * f * d_mm);
        if (!(n >= 1.0)) continue;
        const double r = std::abs(sample.bins[k]) / std::abs(reference.bins[k]);
        const double arg = r * (n + 1.0) * (n + 1.0) / (4.0 * n);
        if (!(arg > 0.0) || !std::isfinite(arg)) continue;
        oc.n[k] = n;
        oc.alpha[k] = -(2.0 / d_cm) * std::log(arg);
        oc.valid[k] = true;
    }
    require(oc.valid_count() > 0, ErrorKind::no_band, "validity mask is empty");
    return oc;
}

Spectrum apply_forward_model(const Spectrum& reference, const MaterialModel& material, const SampleGeometry& geom) {
    geom.validate();
    material.validate();

    std::vector<double> freqs(reference.bins.size());
    for (std::size_t k = 0; k < freqs.size(); ++k) freqs[k] = reference.frequency(k);
    const auto props = sample_material(material, freqs);

    Spectrum out = reference;
    const double d_mm = geom.thickness_mm;
    const double d_cm = geom.thickness_cm();
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        const double n = props.n[k];
        const double fresnel = 4.0 * n / ((n + 1.0) * (n + 1.0));
        const double attenuation = std::exp(-props.alpha[k] * d_cm / 2.0);
        const double delay = 2.0 * std::numbers::pi * freqs[k] * (n - 1.0) * d_mm / kSpeedOfLight;
        out.bins[k] = reference.bins[k] * (fresnel * attenuation) * std::polar(1.0, -delay);
    }
    return out;
}

void write_constants_csv(const std::filesystem::path& path, const OpticalConstants& oc) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << "freq_thz,n,alpha_cm,valid\n";
    char line[128];
    for (std::size_t k = 0; k < oc.size(); ++k) {
        if (oc.valid[k])
            std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,1\n", oc.frequencies[k], oc.n[k], oc.alpha[k]);
        else
            std::snprintf(line, sizeof line, "%.17g,nan,nan,0\n", oc.frequencies[k]);
        os << line;
    }
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

OpticalConstants read_constants_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    std::string line;
    std::getline(is, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "freq_thz,n,alpha_cm,valid", ErrorKind::input, path.string() + ": unexpected header");

    OpticalConstants oc;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        double f = 0, n = 0, a = 0;
        int v = 0;
        char nbuf[64], abuf[64];
        require(std::sscanf(line.c_str(), "%lf,%63[^,],%63[^,],%d", &f, nbuf, abuf, &v) == 4, ErrorKind::input,
                path.string() + ": malformed row");
        n = std::strtod(nbuf, nullptr);
        a = std::strtod(abuf, nullptr);
        oc.frequencies.push_back(f);
        oc.n.push_back(v ? n : kNaN);
        oc.alpha.push_back(v ? a : kNaN);
        oc.valid.push_back(v != 0);
    }
    return oc;
}

}  // namespace thz
