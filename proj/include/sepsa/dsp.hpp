#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace sepsa::dsp {

// In-place radix-2 FFT; size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a, bool inverse);

// Full linear convolution (length |a| + |b| - 1) via zero-padded FFT.
std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b);

// Mean-square power of the component at `freq` (Goertzel single-bin DFT).
double tone_power(const std::vector<float>& samples, double freq_hz, int sample_rate);

// Spectral energy split into n_bands equal-width bands up to Nyquist.
std::vector<double> band_energies(const std::vector<float>& samples, int sample_rate, int n_bands);

double spectral_centroid(const std::vector<float>& samples, int sample_rate);

}  // namespace sepsa::dsp
