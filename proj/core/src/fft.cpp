#include "thz/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace thz::fft {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

namespace {

void radix2(std::vector<Complex>& a, Direction dir) {
    const std::size_t n = a.size();
    if (n <= 1) return;

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    const double sign = dir == Direction::forward ? -1.0 : 1.0;
    std::vector<Complex> twiddle(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
        const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle[k] = {std::cos(angle), std::sin(angle)};
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex u = a[start + k];
                const Complex v = a[start + k + half] * twiddle[k * step];
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
    }
}

void bluestein(std::vector<Complex>& a, Direction dir) {
    const std::size_t n = a.size();
    const std::size_t m = next_power_of_two(2 * n - 1);
    const double sign = dir == Direction::forward ? -1.0 : 1.0;

    // chirp[k] = exp(sign * i*pi*k^2/n); k^2 is reduced mod 2n to keep the angle small
    std::vector<Complex> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t k2 = (k * k) % (2 * n);
        const double angle = sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = {std::cos(angle), std::sin(angle)};
    }

    std::vector<Complex> x(m), y(m);
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);

    radix2(x, Direction::forward);
    radix2(y, Direction::forward);
    for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
    radix2(x, Direction::inverse);

    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * scale * chirp[k];
}

}  // namespace

void transform(std::vector<Complex>& data, Direction dir) {
    if (data.size() <= 1) return;
    if (is_power_of_two(data.size()))
        radix2(data, dir);
    else
        bluestein(data, dir);
}

}  // namespace thz::fft
