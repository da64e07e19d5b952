#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "thz/signal.hpp"

namespace thz {

/// Speed of light in mm/ps.
inline constexpr double kSpeedOfLight = 0.299792458;

struct SampleGeometry {
    double thickness_mm = 0.5;

    [[nodiscard]] double thickness_cm() const noexcept { return thickness_mm / 10.0; }
    /// Throws ErrorKind::geometry unless the thickness is positive and finite.
    void validate() const;
};

struct FrequencyBand {
    double min_thz = 0.2;
    double max_thz = 2.0;
};

struct ExtractionOptions {
    FrequencyBand band;
    double floor = 1e-3;  // fraction of the reference's peak spectral magnitude
};

/// Per-bin refractive index and absorption coefficient (1/cm). Entries with
/// valid[k] == false hold NaN and take no part in any statistic.
struct OpticalConstants {
    std::vector<double> frequencies;
    std::vector<double> n;
    std::vector<double> alpha;
    std::vector<bool> valid;

    [[nodiscard]] std::size_t size() const noexcept { return frequencies.size(); }
    [[nodiscard]] std::size_t valid_count() const noexcept;
};

struct MaterialPoint {
    double f_thz;
    double n;
    double alpha_cm;

    friend bool operator==(const MaterialPoint&, const MaterialPoint&) = default;
};

/// Piecewise-linear n(f), alpha(f) with constant extrapolation past the ends.
struct MaterialModel {
    std::vector<MaterialPoint> points;

    /// Throws ErrorKind::model on empty tables, non-increasing frequencies,
    /// n < 1 or alpha < 0.
    void validate() const;

    static MaterialModel constant(double n, double alpha_cm);
    static MaterialModel vacuum() { return constant(1.0, 0.0); }

    friend bool operator==(const MaterialModel&, const MaterialModel&) = default;
};

struct MaterialSample {
    std::vector<double> n;
    std::vector<double> alpha;
};

MaterialSample sample_material(const MaterialModel& material, std::span<const double> frequencies);

/// Bins used for extraction, derived from the reference alone: `bins` are the
/// in-band indices in increasing order, `strong[i]` marks bins[i] whose
/// reference magnitude clears the dynamic-range floor.
struct BandLayout {
    std::vector<std::size_t> bins;
    std::vector<bool> strong;
    std::vector<double> freqs;
};

BandLayout band_layout(const Spectrum& reference, const ExtractionOptions& options);

/// Phase delay of sample relative to reference, arg(E_ref) - arg(E_sam),
/// unwrapped across the layout's bins from the lowest frequency upward and
/// anchored so the least-squares line over the strong bins extrapolates into
/// (-pi, pi] at f = 0. A positive value means the sample lags the reference.
std::vector<double> relative_phase_delay(const Spectrum& sample, const Spectrum& reference,
                                         const BandLayout& layout);

/// Transmission-mode extraction:
///   n(f)     = 1 + c * dphi(f) / (2 pi f d)
///   alpha(f) = -(2/d) ln[ r(f) (n+1)^2 / (4n) ],  r = |E_sam| / |E_ref|
/// with dphi from relative_phase_delay. A bin is valid when it is in band,
/// the reference clears the floor, n >= 1 and the log argument is positive.
OpticalConstants extract_constants(const Spectrum& sample, const Spectrum& reference,
                                   const SampleGeometry& geom, const ExtractionOptions& options = {});

/// E_sam(f) = E_ref(f) * 4n/(n+1)^2 * exp(-alpha d / 2) * exp(-i 2 pi f (n-1) d / c)
/// Single pass, no etalon echoes; exact inverse of extract_constants.
Spectrum apply_forward_model(const Spectrum& reference, const MaterialModel& material, const SampleGeometry& geom);

// OpticalConstants CSV: header `freq_thz,n,alpha_cm,valid`; invalid rows
// carry `nan,nan,0`.
void write_constants_csv(const std::filesystem::path& path, const OpticalConstants& oc);
OpticalConstants read_constants_csv(const std::filesystem::path& path);

}  // namespace thz
