// SPDX-License-Identifier: Apache-2.0
#include "m3s/tensor/fft.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <utility>

#include "m3s/error.hpp"

namespace m3s::fft {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

void radix2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_pow2(n)) throw ShapeError("radix2 FFT length must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  // Twiddles evaluated directly rather than by repeated multiplication.
  std::vector<Complex> tw(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    tw[k] = Complex(std::cos(ang), std::sin(ang));
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex w = tw[k * stride];
        const Complex u = a[i + k];
        const Complex v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    for (Complex& c : a) c /= static_cast<double>(n);
  }
}

namespace {

struct Chirp {
  std::vector<Complex> chirp;  // exp(-i pi k^2 / n)
  std::vector<Complex> kernel;  // transform of the conjugate chirp, length m
};

const Chirp& chirp_for(std::size_t n) {
  thread_local std::map<std::size_t, Chirp> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const std::size_t m = next_pow2(2 * n - 1);
  Chirp c;
  c.chirp.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small and exact.
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    c.chirp[k] = Complex(std::cos(ang), -std::sin(ang));
  }
  c.kernel.assign(m, Complex(0.0));
  c.kernel[0] = std::conj(c.chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    c.kernel[k] = std::conj(c.chirp[k]);
    c.kernel[m - k] = std::conj(c.chirp[k]);
  }
  radix2(c.kernel);
  return cache.emplace(n, std::move(c)).first->second;
}

std::vector<Complex> bluestein(std::span<const double> x) {
  const std::size_t n = x.size();
  const Chirp& c = chirp_for(n);
  const auto& chirp = c.chirp;
  const std::size_t m = c.kernel.size();
  std::vector<Complex> a(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  radix2(a);
  for (std::size_t i = 0; i < m; ++i) a[i] *= c.kernel[i];
  radix2(a, true);
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
  return out;
}

}  // namespace

std::vector<Complex> dft(std::span<const double> x) {
  if (x.empty()) throw ShapeError("dft of empty signal");
  if (is_pow2(x.size())) {
    std::vector<Complex> a(x.begin(), x.end());
    radix2(a);
    return a;
  }
  return bluestein(x);
}

std::vector<Complex> naive_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  for (std::size_t f = 0; f < n; ++f) {
    Complex acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t ft = (f * t) % n;
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(ft) / static_cast<double>(n);
      acc += x[t] * Complex(std::cos(ang), std::sin(ang));
    }
    out[f] = acc;
  }
  return out;
}

}  // namespace m3s::fft
