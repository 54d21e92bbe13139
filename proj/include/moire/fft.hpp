#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace moire::fft {

using cvec = std::vector<std::complex<double>>;

/// Unnormalised DFT, sign -1 for forward and +1 for inverse.
cvec transform(const cvec& in, bool inverse = false);

/// Real-to-complex DFT of `in` zero-padded to n_fft; returns n_fft/2 + 1 bins.
cvec real_forward(const std::vector<double>& in, std::size_t n_fft);

std::size_t next_pow2(std::size_t n);

}  // namespace moire::fft
