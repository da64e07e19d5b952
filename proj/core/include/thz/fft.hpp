#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace thz::fft {

using Complex = std::complex<double>;

enum class Direction { forward, inverse };

[[nodiscard]] bool is_power_of_two(std::size_t n) noexcept;
[[nodiscard]] std::size_t next_power_of_two(std::size_t n) noexcept;

/// Unnormalized in-place DFT of any length. Forward uses exp(-2*pi*i*k*t/n),
/// inverse uses exp(+2*pi*i*k*t/n) without the 1/n factor. Power-of-two
/// lengths run the iterative radix-2 kernel; other lengths go through
/// Bluestein's chirp-z convolution.
void transform(std::vector<Complex>& data, Direction dir);

}  // namespace thz::fft
