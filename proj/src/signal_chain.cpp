#include "magloc/signal_chain.hpp"

#include <algorithm>
#include <cmath>

namespace magloc {

void FilterSpec::validate() const {
  if (!(center_freq > 0.0)) throw InvalidArgumentError("filter center_freq must be > 0");
  if (!(passband_gain > 0.0)) throw InvalidArgumentError("filter passband_gain must be > 0");
  if (!(rolloff > 0.0)) throw InvalidArgumentError("filter rolloff must be > 0");
  if (order < 1) throw InvalidArgumentError("filter order must be >= 1");
}

void LogAmpSpec::validate() const {
  if (!(slope > 0.0)) throw InvalidArgumentError("log-amp slope must be > 0");
  if (!(intercept_ref > 0.0)) throw InvalidArgumentError("log-amp intercept_ref must be > 0");
  if (!(output_clip > 0.0)) throw InvalidArgumentError("log-amp output_clip must be > 0");
}

void NoiseSpec::validate() const {
  if (rms < 0.0) throw InvalidArgumentError("noise rms must be >= 0");
}

void AdcSpec::validate() const {
  if (bits < 8 || bits > 24) throw InvalidArgumentError("adc bits must be in [8, 24]");
  if (!(full_scale > 0.0)) throw InvalidArgumentError("adc full_scale must be > 0");
}

void SignalChain::validate() const {
  filter.validate();
  logamp.validate();
  noise.validate();
  adc.validate();
}

double bandpass_gain(const FilterSpec& filter, double freq) {
  if (!(freq > 0.0)) throw InvalidArgumentError("frequency must be > 0");
  // Geometric-symmetric bandpass: nu = f/f0 - f0/f, |H| = g / sqrt(1 + nu^(2n))
  // with n poles per side so that the skirts fall at n*20 dB/decade.
  const double n_side = filter.rolloff / 20.0;
  const double nu = freq / filter.center_freq - filter.center_freq / freq;
  return filter.passband_gain / std::sqrt(1.0 + std::pow(nu * nu, n_side));
}

double log_amplify(const LogAmpSpec& amp, double v_in) {
  if (!(v_in > 0.0)) throw DomainError("log-amp input must be > 0");
  const double out = amp.slope * std::log10(v_in / amp.intercept_ref);
  return std::clamp(out, -amp.output_clip, amp.output_clip);
}

namespace {

std::int64_t quantize(const AdcSpec& adc, double v) {
  const double code = std::nearbyint(v / adc.step());
  if (code <= 0.0) return 0;
  const double max_code = static_cast<double>(adc.max_code());
  return static_cast<std::int64_t>(std::min(code, max_code));
}

double invert(const SignalChain& chain, std::int64_t code, double gain) {
  const double v_log = static_cast<double>(code) * chain.adc.step();
  return chain.logamp.intercept_ref * std::pow(10.0, v_log / chain.logamp.slope) / gain;
}

}  // namespace

double floor_magnitude(const SignalChain& chain, double freq) {
  return invert(chain, 0, bandpass_gain(chain.filter, freq));
}

SenseResult sense(const SignalChain& chain, double v_induced, double freq, Rng& rng) {
  if (!(v_induced >= 0.0)) throw InvalidArgumentError("induced amplitude must be >= 0");
  const double gain = bandpass_gain(chain.filter, freq);
  // One equivalent in-band noise draw, referred to the filter input.
  const double draw = rng.gaussian(0.0, chain.noise.rms);
  const double v_filt = v_induced * gain + draw * chain.filter.passband_gain;

  double v_log;
  if (v_filt > 0.0) {
    v_log = log_amplify(chain.logamp, v_filt);
  } else {
    v_log = -chain.logamp.output_clip;  // rail; quantizes to the floor
  }

  SenseResult out;
  out.code = quantize(chain.adc, v_log);
  out.magnitude = invert(chain, out.code, gain);
  return out;
}

}  // namespace magloc
