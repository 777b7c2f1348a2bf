// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace m3s::fft {

using Complex = std::complex<double>;

std::size_t next_pow2(std::size_t n);
bool is_pow2(std::size_t n);

/// In-place iterative Cooley-Tukey; a.size() must be a power of two.
void radix2(std::vector<Complex>& a, bool inverse = false);

/// Exact L-point DFT of a real signal for any L. Power-of-two lengths go
/// straight through radix2; other lengths use Bluestein's chirp-z
/// convolution evaluated with zero-padded radix-2 transforms.
std::vector<Complex> dft(std::span<const double> x);

/// O(L^2) reference transform.
std::vector<Complex> naive_dft(std::span<const double> x);

}  // namespace m3s::fft
