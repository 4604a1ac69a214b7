// Receiver analog chain model: bandpass filter, logarithmic amplifier,
// additive noise and ADC quantization, in the amplitude domain.
//
// The chain maps a steady-state induced-voltage amplitude to a digital code
// and back to an input-referred magnitude. Filtering is modeled by the
// magnitude response only; the excitation tone is long relative to filter
// settling, so no time-domain state is kept.
#pragma once

#include "magloc/rng.hpp"
#include "magloc/types.hpp"

#include <cstdint>

namespace magloc {

/// Bandpass magnitude response with a maximally flat passband. The skirt
/// steepness is governed by `rolloff` (dB/decade per side); `order` records
/// the nominal analog filter order and is not used by the response itself.
struct FilterSpec {
  double center_freq = 20e3;     // Hz
  double passband_gain = 10.0;   // linear
  double rolloff = 40.0;         // dB/decade, each side
  int order = 4;

  void validate() const;
};

/// Logarithmic amplifier: out = slope * log10(v / intercept_ref), clipped
/// to [-output_clip, output_clip]. intercept_ref is the input producing
/// zero output.
struct LogAmpSpec {
  double slope = 0.35;           // volts per decade
  double intercept_ref = 1e-6;   // volts
  double output_clip = 3.0;      // volts

  void validate() const;
};

/// Additive Gaussian noise referred to the filter input. The default rms
/// is the calibrated front-end noise level; set 0 for ideal sweeps.
struct NoiseSpec {
  double rms = 2e-6;             // volts
  std::uint64_t seed = 0;

  void validate() const;
};

/// Unipolar converter spanning [0, full_scale]; log outputs below zero
/// quantize to code 0.
struct AdcSpec {
  int bits = 16;
  double full_scale = 3.3;       // volts

  double step() const { return full_scale / static_cast<double>(1LL << bits); }
  std::int64_t max_code() const { return (1LL << bits) - 1; }
  void validate() const;
};

struct SignalChain {
  FilterSpec filter;
  LogAmpSpec logamp;
  NoiseSpec noise;
  AdcSpec adc;

  void validate() const;
};

struct SenseResult {
  std::int64_t code = 0;     // quantized log-amp output
  double magnitude = 0.0;    // recovered input-referred amplitude, volts
};

/// Linear gain of the bandpass filter at `freq`.
double bandpass_gain(const FilterSpec& filter, double freq);

/// Log-amp transfer. Throws DomainError for v_in <= 0.
double log_amplify(const LogAmpSpec& amp, double v_in);

/// Smallest recoverable input-referred magnitude at `freq` (code 0).
double floor_magnitude(const SignalChain& chain, double freq);

/// Full chain: gain, one noise draw, log amplification, quantization, and
/// inversion back to an input-referred magnitude. Deterministic given `rng`.
SenseResult sense(const SignalChain& chain, double v_induced, double freq, Rng& rng);

}  // namespace magloc
