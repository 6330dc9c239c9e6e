#pragma once

#include <span>
#include <string>
#include <vector>

#include "nwf/codec.hpp"
#include "nwf/model.hpp"

namespace nwf {

// Rows of the output-row-to-input-row Jacobian of one transform iteration,
// taken in continuous mode at a base image. Even-numbered rows are the
// low-pass filters, odd-numbered the high-pass.
struct FilterBank {
  int n = 0;
  std::vector<std::vector<double>> rows;  // n rows of length n
  bool low_pass(int i) const { return i % 2 == 0; }
};

// Scheme 1: Jacobian of the 1D row transform. Scheme 2: output-row r w.r.t.
// input-row r slice of the full one-iteration Jacobian. Rejects integer-mode
// flows (the Jacobian of rounding is ill-defined).
FilterBank extract_filters(const Model& model, const ImageU8& base, int row_index,
                           int channel = 0);

struct ResponseCurve {
  std::vector<double> omega;      // n_samples points in [0, pi]
  std::vector<double> magnitude;  // |H(e^{i omega})|
};

ResponseCurve freq_response(std::span<const double> h, int n_samples);

// Fig-1 style mosaic: quadrants arranged recursively, per-tile per-channel
// mean-subtracted then min-max mapped to u8 (constant tiles render mid-gray).
ImageU8 visualize_latents(const LatentPyramid& pyramid, const Priors& priors);

// CSV exports: filters.csv rows are (filter_index, kind, tap_index, value);
// response.csv rows are (filter_index, kind, omega, magnitude).
std::string filters_csv(const FilterBank& bank);
std::string response_csv(const FilterBank& bank, int n_samples);

}  // namespace nwf
