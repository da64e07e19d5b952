#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace thz {

/// One time-domain waveform on a uniform grid. Time is in picoseconds;
/// sample k sits at t0 + k*dt. Construction rejects nt < 2, dt <= 0 and
/// non-finite samples.
class PulseTrace {
public:
    PulseTrace(double dt_ps, double t0_ps, std::vector<double> samples);

    [[nodiscard]] double dt() const noexcept { return dt_; }
    [[nodiscard]] double t0() const noexcept { return t0_; }
    [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
    [[nodiscard]] std::span<const double> samples() const noexcept { return samples_; }
    [[nodiscard]] double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }
    [[nodiscard]] double operator[](std::size_t k) const noexcept { return samples_[k]; }

    friend bool operator==(const PulseTrace&, const PulseTrace&) = default;

private:
    double dt_;
    double t0_;
    std::vector<double> samples_;
};

/// Non-negative-frequency half of the DFT of a real trace. `length` is the
/// transform size N (after any zero padding); bins.size() == N/2 + 1 and
/// bin k sits at k*df THz with df = 1/(N*dt).
struct Spectrum {
    double df = 0.0;
    std::size_t length = 0;
    std::vector<std::complex<double>> bins;

    [[nodiscard]] std::size_t size() const noexcept { return bins.size(); }
    [[nodiscard]] double frequency(std::size_t k) const noexcept { return static_cast<double>(k) * df; }
    [[nodiscard]] double amplitude(std::size_t k) const { return std::abs(bins[k]); }
    [[nodiscard]] double phase(std::size_t k) const { return std::arg(bins[k]); }
    [[nodiscard]] double nyquist() const noexcept { return frequency(bins.empty() ? 0 : bins.size() - 1); }
    /// Index of the bin closest to f (ties resolve to the lower bin).
    [[nodiscard]] std::size_t nearest_bin(double f_thz) const;
};

/// Forward DFT of a real trace, non-negative bins only. Without pad_to the
/// trace is zero-padded to the next power of two; pad_to == size() gives an
/// exact-length transform.
Spectrum forward_transform(const PulseTrace& trace, std::optional<std::size_t> pad_to = std::nullopt);

/// Inverse of forward_transform. Hermitian completion is applied internally
/// (imaginary parts of the DC and even-length Nyquist bins are dropped). The
/// first nt samples of the length-N inverse are returned, which undoes zero
/// padding.
PulseTrace inverse_transform(const Spectrum& spec, std::size_t nt, double t0_ps = 0.0);

enum class WindowKind { rectangular, hann, tukey };

struct Window {
    WindowKind kind = WindowKind::rectangular;
    double taper = 0.5;  // tukey only, in [0, 1]
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive

    /// Weights over [begin, end). Hann and Tukey are the symmetric forms
    /// (first and last weight 0 for hann); tukey(0) is rectangular and
    /// tukey(1) is hann.
    [[nodiscard]] std::vector<double> weights() const;
};

PulseTrace apply_window(const PulseTrace& trace, const Window& window);

enum class PhaseAnchor { none, zero_dc_extrapolation };

/// Removes 2*pi jumps walking upward from the first element. Output differs
/// from the input by integer multiples of 2*pi and successive differences
/// stay within [-pi, pi].
std::vector<double> unwrap_phase(std::span<const double> wrapped);

/// Shifts `phase` by the multiple of 2*pi that puts the intercept of its
/// least-squares line (over entries where fit_mask is set, or all entries if
/// the mask is empty) inside (-pi, pi]. Returns m, where 2*pi*m was subtracted.
long anchor_zero_dc(std::span<double> phase, std::span<const double> freqs,
                    const std::vector<bool>& fit_mask = {});

/// unwrap_phase followed by optional anchoring; freqs is required for the
/// zero-DC anchor.
std::vector<double> unwrap_phase(std::span<const double> wrapped, PhaseAnchor anchor,
                                 std::span<const double> freqs);

// Trace CSV: header `time_ps,amplitude`, 17 significant digits.
void write_trace_csv(const std::filesystem::path& path, const PulseTrace& trace);
PulseTrace read_trace_csv(const std::filesystem::path& path);

}  // namespace thz
