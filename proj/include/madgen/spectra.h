//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef MADGEN_SPECTRA_H_
#define MADGEN_SPECTRA_H_

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "madgen/formula.h"

namespace madgen {

struct Peak {
  double mz = 0;
  double intensity = 0;

  friend bool operator==(const Peak &, const Peak &) = default;
};

struct Spectrum {
  std::vector<Peak> peaks;  // ascending, strictly increasing m/z
  double precursor_mz = 0;
  std::string adduct = "[M+H]+";
  ChemFormula formula;
  std::string record_id;
};

struct BinnedSpectrum {
  std::vector<double> bins;
  double bin_width = 1.0;
  double max_mz = 1000.0;
  // Peaks at or above max_mz that did not fit into any bin.
  int dropped_peaks = 0;
};

inline constexpr double kDefaultBinWidth = 1.0;
inline constexpr double kDefaultMaxMz = 1000.0;
inline constexpr double kDefaultIntensityThreshold = 0.01;
// Peaks heavier than the precursor by more than this are instrument noise.
inline constexpr double kPrecursorTolerance = 1.0;

/// record_id -> formula, used when MGF/MSP records carry no formula.
using FormulaSidecar = std::map<std::string, ChemFormula>;

// Sorts peaks, merges duplicate m/z values (max intensity) and rescales
// intensities so the base peak is 1. Throws EmptySpectrumError on no peaks.
void canonicalize_peaks(std::vector<Peak> &peaks);

std::vector<Spectrum> parse_mgf(std::istream &in,
                                const FormulaSidecar *sidecar = nullptr);
std::vector<Spectrum> parse_mgf(std::string_view text,
                                const FormulaSidecar *sidecar = nullptr);
void write_mgf(std::ostream &out, const std::vector<Spectrum> &spectra);

std::vector<Spectrum> parse_msp(std::istream &in,
                                const FormulaSidecar *sidecar = nullptr);
std::vector<Spectrum> parse_msp(std::string_view text,
                                const FormulaSidecar *sidecar = nullptr);
void write_msp(std::ostream &out, const std::vector<Spectrum> &spectra);

/// Max-normalizes intensities and drops peaks below `threshold` (relative to
/// the base peak) or above the precursor tolerance. The base peak survives.
Spectrum normalize_and_filter(const Spectrum &spec,
                              double threshold = kDefaultIntensityThreshold);

BinnedSpectrum bin_spectrum(const Spectrum &spec,
                            double bin_width = kDefaultBinWidth,
                            double max_mz = kDefaultMaxMz);

// "mz:intensity;mz:intensity" with round-trip precision.
std::string format_peaks(const std::vector<Peak> &peaks);
std::vector<Peak> parse_peaks(std::string_view text);

// Line-oriented TSV: record_id, formula, adduct, precursor_mz, peaks.
std::string spectrum_tsv_header();
std::string spectrum_to_tsv(const Spectrum &spec);
Spectrum spectrum_from_tsv(std::string_view line);

std::string format_double(double v);

}  // namespace madgen

#endif  // MADGEN_SPECTRA_H_
