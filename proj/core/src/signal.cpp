#include "thz/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "thz/error.hpp"
#include "thz/fft.hpp"

namespace thz {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

PulseTrace::PulseTrace(double dt_ps, double t0_ps, std::vector<double> samples)
    : dt_(dt_ps), t0_(t0_ps), samples_(std::move(samples)) {
    require(std::isfinite(dt_) && dt_ > 0.0, ErrorKind::input, "trace time step must be positive and finite");
    require(std::isfinite(t0_), ErrorKind::input, "trace start time must be finite");
    require(samples_.size() >= 2, ErrorKind::input, "trace needs at least two samples");
    for (std::size_t k = 0; k < samples_.size(); ++k)
        require(std::isfinite(samples_[k]), ErrorKind::input,
                "non-finite trace sample at index " + std::to_string(k));
}

std::size_t Spectrum::nearest_bin(double f_thz) const {
    require(!bins.empty() && df > 0.0, ErrorKind::dimension, "empty spectrum");
    const double pos = f_thz / df;
    auto k = static_cast<long long>(std::floor(pos));
    if (pos - static_cast<double>(k) > 0.5) ++k;
    k = std::clamp<long long>(k, 0, static_cast<long long>(bins.size()) - 1);
    return static_cast<std::size_t>(k);
}

Spectrum forward_transform(const PulseTrace& trace, std::optional<std::size_t> pad_to) {
    const std::size_t nt = trace.size();
    const std::size_t n = pad_to ? *pad_to : fft::next_power_of_two(nt);
    require(n >= nt, ErrorKind::dimension, "pad_to must be at least the trace length");

    std::vector<fft::Complex> buf(n);
    const auto samples = trace.samples();
    for (std::size_t k = 0; k < nt; ++k) buf[k] = samples[k];
    fft::transform(buf, fft::Direction::forward);

    Spectrum spec;
    spec.length = n;
    spec.df = 1.0 / (static_cast<double>(n) * trace.dt());
    spec.bins.assign(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(n / 2 + 1));
    return spec;
}

PulseTrace inverse_transform(const Spectrum& spec, std::size_t nt, double t0_ps) {
    const std::size_t n = spec.length;
    require(n >= 2 && spec.bins.size() == n / 2 + 1, ErrorKind::dimension,
            "spectrum bin count does not match its transform length");
    require(nt >= 2 && nt <= n, ErrorKind::dimension,
            "requested trace length " + std::to_string(nt) + " is incompatible with transform length " +
                std::to_string(n));
    require(std::isfinite(spec.df) && spec.df > 0.0, ErrorKind::dimension, "spectrum df must be positive");

    std::vector<fft::Complex> buf(n);
    buf[0] = spec.bins[0].real();
    for (std::size_t k = 1; k < spec.bins.size(); ++k) {
        buf[k] = spec.bins[k];
        if (n - k != k) buf[n - k] = std::conj(spec.bins[k]);
    }
    if (n % 2 == 0) buf[n / 2] = spec.bins[n / 2].real();

    fft::transform(buf, fft::Direction::inverse);
    std::vector<double> out(nt);
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < nt; ++k) out[k] = buf[k].real() * scale;
    return PulseTrace(1.0 / (static_cast<double>(n) * spec.df), t0_ps, std::move(out));
}

std::vector<double> Window::weights() const {
    require(begin < end, ErrorKind::input, "window range is empty");
    const std::size_t len = end - begin;
    std::vector<double> w(len, 1.0);
    if (kind == WindowKind::rectangular || len == 1) return w;

    const double r = kind == WindowKind::hann ? 1.0 : taper;
    require(r >= 0.0 && r <= 1.0, ErrorKind::input, "tukey taper fraction must lie in [0, 1]");
    if (r == 0.0) return w;

    const double span = static_cast<double>(len - 1);
    for (std::size_t j = 0; j < len; ++j) {
        const double x = static_cast<double>(j) / span;
        if (x < r / 2.0)
            w[j] = 0.5 * (1.0 + std::cos(std::numbers::pi * (2.0 * x / r - 1.0)));
        else if (x > 1.0 - r / 2.0)
            w[j] = 0.5 * (1.0 + std::cos(std::numbers::pi * (2.0 * x / r - 2.0 / r + 1.0)));
    }
    return w;
}

PulseTrace apply_window(const PulseTrace& trace, const Window& window) {
    require(window.end <= trace.size(), ErrorKind::dimension, "window extends past the trace");
    const auto w = window.weights();
    std::vector<double> out(trace.size(), 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) out[window.begin + j] = trace[window.begin + j] * w[j];
    return PulseTrace(trace.dt(), trace.t0(), std::move(out));
}

std::vector<double> unwrap_phase(std::span<const double> wrapped) {
    std::vector<double> out(wrapped.begin(), wrapped.end());
    for (std::size_t k = 0; k < wrapped.size(); ++k)
        require(std::isfinite(wrapped[k]), ErrorKind::input, "non-finite phase value");

    double offset = 0.0;  // accumulated integer multiple of 2*pi
    for (std::size_t k = 1; k < out.size(); ++k) {
        const double out_step = (wrapped[k] + offset) - out[k - 1];
        if (std::abs(out_step) > std::numbers::pi) offset -= kTwoPi * std::round(out_step / kTwoPi);
        out[k] = wrapped[k] + offset;
    }
    return out;
}

long anchor_zero_dc(std::span<double> phase, std::span<const double> freqs, const std::vector<bool>& fit_mask) {
    require(phase.size() == freqs.size(), ErrorKind::dimension, "phase and frequency lists differ in length");
    require(fit_mask.empty() || fit_mask.size() == phase.size(), ErrorKind::dimension, "fit mask length mismatch");

    double sw = 0, sf = 0, sp = 0, sff = 0, sfp = 0;
    for (std::size_t k = 0; k < phase.size(); ++k) {
        if (!fit_mask.empty() && !fit_mask[k]) continue;
        sw += 1.0;
        sf += freqs[k];
        sp += phase[k];
        sff += freqs[k] * freqs[k];
        sfp += freqs[k] * phase[k];
    }
    require(sw >= 1.0, ErrorKind::no_band, "no points available to anchor the phase");

    double intercept = sp / sw;
    const double denom = sw * sff - sf * sf;
    if (sw >= 2.0 && denom > 0.0) {
        const double slope = (sw * sfp - sf * sp) / denom;
        intercept = (sp - slope * sf) / sw;
    }
    const long m = static_cast<long>(std::ceil((intercept - std::numbers::pi) / kTwoPi));
    if (m != 0)
        for (double& p : phase) p -= kTwoPi * static_cast<double>(m);
    return m;
}

std::vector<double> unwrap_phase(std::span<const double> wrapped, PhaseAnchor anchor, std::span<const double> freqs) {
    auto out = unwrap_phase(wrapped);
    if (anchor == PhaseAnchor::zero_dc_extrapolation && !out.empty()) anchor_zero_dc(out, freqs);
    return out;
}

void write_trace_csv(const std::filesystem::path& path, const PulseTrace& trace) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path.string() + " for writing");
    os << "time_ps,amplitude\n";
    char line[96];
    for (std::size_t k = 0; k < trace.size(); ++k) {
        std::snprintf(line, sizeof line, "%.17g,%.17g\n", trace.time(k), trace[k]);
        os << line;
    }
    require(static_cast<bool>(os), ErrorKind::io, "failed writing " + path.string());
}

PulseTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path.string());
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), ErrorKind::input, path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    require(line == "time_ps,amplitude", ErrorKind::input, path.string() + ": expected header time_ps,amplitude");

    std::vector<double> times, values;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto comma = line.find(',');
        require(comma != std::string::npos, ErrorKind::input,
                path.string() + ":" + std::to_string(lineno) + ": expected two columns");
        const char* first = line.c_str();
        char* end = nullptr;
        const double t = std::strtod(first, &end);
        const bool t_ok = end == first + comma;
        const double v = std::strtod(first + comma + 1, &end);
        while (*end == '\r' || *end == ' ') ++end;
        require(t_ok && end != first + comma + 1 && *end == '\0', ErrorKind::input,
                path.string() + ":" + std::to_string(lineno) + ": malformed number");
        times.push_back(t);
        values.push_back(v);
    }
    require(times.size() >= 2, ErrorKind::input, path.string() + ": need at least two samples");

    const double t0 = times.front();
    const double dt = (times.back() - t0) / static_cast<double>(times.size() - 1);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double expected = t0 + static_cast<double>(k) * dt;
        require(std::abs(times[k] - expected) <= 1e-6 * dt, ErrorKind::input,
                path.string() + ": time axis is not uniform near row " + std::to_string(k + 2));
    }
    return PulseTrace(dt, t0, std::move(values));
}

}  // namespace thz
