//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "madgen/spectra.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

#include "madgen/error.h"
#include "madgen/strings.h"

namespace madgen {

namespace {

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (s.empty())
    return std::nullopt;
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

// Parses "mz intensity" (whitespace, tab or comma separated).
std::optional<Peak> parse_peak_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size()
           && (line[i] == ' ' || line[i] == '\t' || line[i] == ','))
      ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t'
           && line[j] != ',')
      ++j;
    if (j > i)
      fields.push_back(line.substr(i, j - i));
    i = j;
  }
  if (fields.size() < 2)
    return std::nullopt;
  auto mz = to_double(fields[0]);
  auto in = to_double(fields[1]);
  if (!mz || !in)
    return std::nullopt;
  return Peak { *mz, *in };
}

void check_peak(const Peak &p, const std::string &where) {
  if (!(p.mz > 0) || !std::isfinite(p.mz))
    throw FormatError(where + ": peak m/z must be positive");
  if (!(p.intensity >= 0) || !std::isfinite(p.intensity))
    throw FormatError(where + ": peak intensity must be non-negative");
}

ChemFormula resolve_formula(const std::optional<std::string> &text,
                            const std::string &record_id,
                            const FormulaSidecar *sidecar) {
  if (text && !trim(*text).empty())
    return parse_formula(trim(*text));
  if (sidecar != nullptr) {
    auto it = sidecar->find(record_id);
    if (it != sidecar->end())
      return it->second;
  }
  throw MissingFieldError("record '" + record_id + "' has no formula");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void canonicalize_peaks(std::vector<Peak> &peaks) {
  if (peaks.empty())
    throw EmptySpectrumError("spectrum has no peaks");
  std::sort(peaks.begin(), peaks.end(),
            [](const Peak &a, const Peak &b) { return a.mz < b.mz; });
  std::vector<Peak> merged;
  for (const auto &p: peaks) {
    if (!merged.empty() && merged.back().mz == p.mz)
      merged.back().intensity = std::max(merged.back().intensity, p.intensity);
    else
      merged.push_back(p);
  }
  double max_i = 0;
  for (const auto &p: merged)
    max_i = std::max(max_i, p.intensity);
  if (max_i <= 0)
    throw EmptySpectrumError("spectrum has no peak with positive intensity");
  for (auto &p: merged)
    p.intensity /= max_i;
  peaks = std::move(merged);
}

// ---------------------------------------------------------------------------
// MGF

std::vector<Spectrum> parse_mgf(std::istream &in, const FormulaSidecar *sidecar) {
  std::vector<Spectrum> out;
  std::string raw;
  int line_no = 0;
  bool in_block = false;
  std::optional<double> pepmass;
  std::optional<std::string> formula, id, title, adduct;
  std::vector<Peak> peaks;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';')
      continue;
    const std::string where = "MGF line " + std::to_string(line_no);

    if (line == "BEGIN IONS") {
      if (in_block)
        throw FormatError(where + ": BEGIN IONS inside an open block");
      in_block = true;
      pepmass.reset();
      formula.reset();
      id.reset();
      title.reset();
      adduct.reset();
      peaks.clear();
      continue;
    }
    if (!in_block)
      throw FormatError(where + ": content outside BEGIN IONS/END IONS");

    if (line == "END IONS") {
      in_block = false;
      Spectrum s;
      s.record_id = id      ? *id
                    : title ? *title
                            : "spectrum_" + std::to_string(out.size());
      if (!pepmass)
        throw MissingFieldError("record '" + s.record_id + "' has no PEPMASS");
      s.precursor_mz = *pepmass;
      s.formula = resolve_formula(formula, s.record_id, sidecar);
      if (adduct)
        s.adduct = *adduct;
      if (peaks.empty())
        throw FormatError(where + ": block without peaks");
      s.peaks = peaks;
      canonicalize_peaks(s.peaks);
      out.push_back(std::move(s));
      continue;
    }

    const auto eq = line.find('=');
    if (eq != std::string_view::npos
        && std::isalpha(static_cast<unsigned char>(line[0]))) {
      const std::string key = to_upper(trim(line.substr(0, eq)));
      const std::string value(trim(line.substr(eq + 1)));
      if (key == "PEPMASS") {
        auto first = value.substr(0, value.find_first_of(" \t"));
        pepmass = to_double(first);
        if (!pepmass)
          throw FormatError(where + ": non-numeric PEPMASS");
      } else if (key == "FORMULA") {
        formula = value;
      } else if (key == "ID" || key == "SPECTRUMID" || key == "SPECTRUM_ID") {
        id = value;
      } else if (key == "TITLE") {
        title = value;
      } else if (key == "ADDUCT" || key == "PRECURSOR_TYPE") {
        adduct = value;
      }
      continue;
    }

    auto p = parse_peak_line(line);
    if (!p)
      throw FormatError(where + ": non-numeric peak line '" + std::string(line)
                        + "'");
    check_peak(*p, where);
    peaks.push_back(*p);
  }

  if (in_block)
    throw FormatError("MGF ends inside a block (missing END IONS)");
  return out;
}

std::vector<Spectrum> parse_mgf(std::string_view text,
                                const FormulaSidecar *sidecar) {
  std::istringstream in { std::string(text) };
  return parse_mgf(in, sidecar);
}

void write_mgf(std::ostream &out, const std::vector<Spectrum> &spectra) {
  for (const auto &s: spectra) {
    out << "BEGIN IONS\n";
    out << "ID=" << s.record_id << '\n';
    out << "PEPMASS=" << format_double(s.precursor_mz) << '\n';
    out << "CHARGE=1+\n";
    out << "FORMULA=" << s.formula.to_string() << '\n';
    out << "ADDUCT=" << s.adduct << '\n';
    for (const auto &p: s.peaks)
      out << format_double(p.mz) << ' ' << format_double(p.intensity) << '\n';
    out << "END IONS\n\n";
  }
}

// ---------------------------------------------------------------------------
// MSP

std::vector<Spectrum> parse_msp(std::istream &in, const FormulaSidecar *sidecar) {
  std::vector<Spectrum> out;
  std::string raw;
  int line_no = 0;

  struct Pending {
    std::optional<std::string> name, id, formula, adduct;
    std::optional<double> precursor;
    std::optional<int> num_peaks;
    std::vector<Peak> peaks;
    bool any = false;
  } rec;

  auto flush = [&]() {
    if (!rec.any)
      return;
    Spectrum s;
    s.record_id = rec.id     ? *rec.id
                  : rec.name ? *rec.name
                             : "spectrum_" + std::to_string(out.size());
    if (!rec.precursor)
      throw MissingFieldError("record '" + s.record_id + "' has no PrecursorMZ");
    if (!rec.num_peaks)
      throw FormatError("record '" + s.record_id + "' has no Num Peaks header");
    if (static_cast<int>(rec.peaks.size()) != *rec.num_peaks) {
      throw FormatError("record '" + s.record_id + "' declares "
                        + std::to_string(*rec.num_peaks) + " peaks but lists "
                        + std::to_string(rec.peaks.size()));
    }
    s.precursor_mz = *rec.precursor;
    s.formula = resolve_formula(rec.formula, s.record_id, sidecar);
    if (rec.adduct)
      s.adduct = *rec.adduct;
    s.peaks = rec.peaks;
    canonicalize_peaks(s.peaks);
    out.push_back(std::move(s));
    rec = Pending {};
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty()) {
      flush();
      continue;
    }
    const std::string where = "MSP line " + std::to_string(line_no);
    rec.any = true;

    const auto colon = line.find(':');
    if (colon != std::string_view::npos
        && std::isalpha(static_cast<unsigned char>(line[0]))) {
      const std::string key = to_upper(trim(line.substr(0, colon)));
      const std::string value(trim(line.substr(colon + 1)));
      if (key == "NAME") {
        rec.name = value;
      } else if (key == "ID" || key == "DB#") {
        rec.id = value;
      } else if (key == "FORMULA") {
        rec.formula = value;
      } else if (key == "PRECURSORMZ" || key == "PRECURSOR_MZ") {
        rec.precursor = to_double(value);
        if (!rec.precursor)
          throw FormatError(where + ": non-numeric PrecursorMZ");
      } else if (key == "PRECURSOR_TYPE" || key == "ADDUCT") {
        rec.adduct = value;
      } else if (key == "NUM PEAKS") {
        auto n = to_double(value);
        if (!n || *n < 0)
          throw FormatError(where + ": bad Num Peaks");
        rec.num_peaks = static_cast<int>(*n);
      }
      continue;
    }

    if (!rec.num_peaks)
      throw FormatError(where + ": peak line before Num Peaks");
    // A line may hold several "mz int" pairs separated by ';'.
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(';', start);
      if (end == std::string_view::npos)
        end = line.size();
      auto chunk = trim(line.substr(start, end - start));
      if (!chunk.empty()) {
        auto p = parse_peak_line(chunk);
        if (!p)
          throw FormatError(where + ": non-numeric peak line");
        check_peak(*p, where);
        rec.peaks.push_back(*p);
      }
      start = end + 1;
    }
  }
  flush();
  return out;
}

std::vector<Spectrum> parse_msp(std::string_view text,
                                const FormulaSidecar *sidecar) {
  std::istringstream in { std::string(text) };
  return parse_msp(in, sidecar);
}

void write_msp(std::ostream &out, const std::vector<Spectrum> &spectra) {
  for (const auto &s: spectra) {
    out << "Name: " << s.record_id << '\n';
    out << "ID: " << s.record_id << '\n';
    out << "PrecursorMZ: " << format_double(s.precursor_mz) << '\n';
    out << "Precursor_type: " << s.adduct << '\n';
    out << "Formula: " << s.formula.to_string() << '\n';
    out << "Num Peaks: " << s.peaks.size() << '\n';
    for (const auto &p: s.peaks)
      out << format_double(p.mz) << ' ' << format_double(p.intensity) << '\n';
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

Spectrum normalize_and_filter(const Spectrum &spec, double threshold) {
  if (!(threshold >= 0 && threshold < 1))
    throw ConfigError("intensity threshold must lie in [0, 1)");
  if (spec.peaks.empty())
    throw EmptySpectrumError("spectrum '" + spec.record_id + "' has no peaks");

  Spectrum out = spec;
  std::vector<Peak> peaks;
  for (const auto &p: spec.peaks) {
    if (spec.precursor_mz > 0 && p.mz > spec.precursor_mz + kPrecursorTolerance)
      continue;
    peaks.push_back(p);
  }
  if (peaks.empty())
    throw EmptySpectrumError("spectrum '" + spec.record_id
                             + "' has no peaks below its precursor");
  canonicalize_peaks(peaks);

  out.peaks.clear();
  for (const auto &p: peaks) {
    if (p.intensity >= threshold || p.intensity == 1.0)
      out.peaks.push_back(p);
  }
  return out;
}

BinnedSpectrum bin_spectrum(const Spectrum &spec, double bin_width,
                            double max_mz) {
  if (!(bin_width > 0) || !(max_mz > 0))
    throw ConfigError("bin width and max m/z must be positive");
  BinnedSpectrum out;
  out.bin_width = bin_width;
  out.max_mz = max_mz;
  out.bins.assign(static_cast<std::size_t>(std::ceil(max_mz / bin_width)), 0.0);
  for (const auto &p: spec.peaks) {
    const double idx = std::floor(p.mz / bin_width);
    if (p.mz >= max_mz || idx >= static_cast<double>(out.bins.size())) {
      ++out.dropped_peaks;
      continue;
    }
    auto &bin = out.bins[static_cast<std::size_t>(idx)];
    bin = std::max(bin, p.intensity);
  }
  return out;
}

// ---------------------------------------------------------------------------
// TSV

std::string format_peaks(const std::vector<Peak> &peaks) {
  std::string out;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    if (i > 0)
      out += ';';
    out += format_double(peaks[i].mz);
    out += ':';
    out += format_double(peaks[i].intensity);
  }
  return out;
}

std::vector<Peak> parse_peaks(std::string_view text) {
  std::vector<Peak> out;
  for (auto item: split(text, ';')) {
    item = trim(item);
    if (item.empty())
      continue;
    const auto colon = item.find(':');
    if (colon == std::string_view::npos)
      throw FormatError("peak '" + std::string(item) + "' lacks ':'");
    auto mz = to_double(item.substr(0, colon));
    auto in = to_double(item.substr(colon + 1));
    if (!mz || !in)
      throw FormatError("non-numeric peak '" + std::string(item) + "'");
    Peak p { *mz, *in };
    check_peak(p, "peak list");
    out.push_back(p);
  }
  return out;
}

std::string spectrum_tsv_header() {
  return "record_id\tformula\tadduct\tprecursor_mz\tpeaks";
}

std::string spectrum_to_tsv(const Spectrum &spec) {
  return spec.record_id + '\t' + spec.formula.to_string() + '\t' + spec.adduct
         + '\t' + format_double(spec.precursor_mz) + '\t'
         + format_peaks(spec.peaks);
}

Spectrum spectrum_from_tsv(std::string_view line) {
  auto fields = split(line, '\t');
  if (fields.size() != 5)
    throw FormatError("spectrum TSV row needs 5 columns, got "
                      + std::to_string(fields.size()));
  Spectrum s;
  s.record_id = std::string(fields[0]);
  s.formula = parse_formula(fields[1]);
  s.adduct = std::string(fields[2]);
  auto pmz = to_double(fields[3]);
  if (!pmz)
    throw FormatError("non-numeric precursor m/z");
  s.precursor_mz = *pmz;
  s.peaks = parse_peaks(fields[4]);
  canonicalize_peaks(s.peaks);
  return s;
}

}  // namespace madgen
