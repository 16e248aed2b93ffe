//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "madgen/chemgraph.h"
#include "madgen/error.h"
#include "madgen/formula.h"
#include "madgen/spectra.h"

namespace {

using namespace madgen;

const char *kTwoPeakMgf = "BEGIN IONS\n"
                          "PEPMASS=201.0\n"
                          "CHARGE=1+\n"
                          "FORMULA=C6H6\n"
                          "ID=rec1\n"
                          "100.0 50\n"
                          "200.0 100\n"
                          "END IONS\n";

Spectrum make_spectrum(std::vector<Peak> peaks, double precursor = 500) {
  Spectrum s;
  s.peaks = std::move(peaks);
  s.precursor_mz = precursor;
  s.formula = parse_formula("C6H6");
  s.record_id = "x";
  return s;
}

TEST(Mgf, TwoPeaksMaxNormalized) {
  auto specs = parse_mgf(std::string_view(kTwoPeakMgf));
  ASSERT_EQ(specs.size(), 1U);
  const auto &s = specs[0];
  ASSERT_EQ(s.peaks.size(), 2U);
  EXPECT_DOUBLE_EQ(s.peaks[0].intensity, 50.0 / 100.0);
  EXPECT_DOUBLE_EQ(s.peaks[1].intensity, 1.0);
  EXPECT_DOUBLE_EQ(s.precursor_mz, 201.0);
  EXPECT_EQ(s.record_id, "rec1");
  EXPECT_EQ(s.formula, parse_formula("C6H6"));
}

TEST(Mgf, EmptyStream) {
  EXPECT_TRUE(parse_mgf(std::string_view("")).empty());
}

TEST(Mgf, Errors) {
  EXPECT_THROW(parse_mgf(std::string_view("BEGIN IONS\nPEPMASS=1\n")),
               FormatError);
  EXPECT_THROW(parse_mgf(std::string_view(
                   "BEGIN IONS\nPEPMASS=1\nFORMULA=C\nabc def\nEND IONS\n")),
               FormatError);
  EXPECT_THROW(
      parse_mgf(std::string_view("BEGIN IONS\nFORMULA=C\n10 1\nEND IONS\n")),
      MissingFieldError);
  EXPECT_THROW(
      parse_mgf(std::string_view("BEGIN IONS\nPEPMASS=30\n10 1\nEND IONS\n")),
      MissingFieldError);
}

TEST(Mgf, SidecarFormula) {
  FormulaSidecar side { { "q", parse_formula("CH4O") } };
  auto specs = parse_mgf(
      std::string_view("BEGIN IONS\nID=q\nPEPMASS=33\n15 3\nEND IONS\n"),
      &side);
  ASSERT_EQ(specs.size(), 1U);
  EXPECT_EQ(specs[0].formula, parse_formula("CH4O"));
}

TEST(Mgf, UnsortedAndDuplicatePeaks) {
  auto specs = parse_mgf(std::string_view("BEGIN IONS\nPEPMASS=300\nFORMULA=C6H6\n"
                                          "200 10\n100 40\n200 80\nEND IONS\n"));
  ASSERT_EQ(specs[0].peaks.size(), 2U);
  EXPECT_DOUBLE_EQ(specs[0].peaks[0].mz, 100);
  EXPECT_DOUBLE_EQ(specs[0].peaks[0].intensity, 0.5);
  EXPECT_DOUBLE_EQ(specs[0].peaks[1].intensity, 1.0);
}

TEST(Msp, HeaderCountAgreement) {
  const char *text = "Name: a\nPrecursorMZ: 120\nFormula: C7H8\nNum Peaks: 2\n"
                     "50 10\n91 100\n";
  auto specs = parse_msp(std::string_view(text));
  ASSERT_EQ(specs.size(), 1U);
  EXPECT_EQ(specs[0].peaks.size(), 2U);
  EXPECT_EQ(specs[0].record_id, "a");
}

TEST(Msp, CountMismatch) {
  const char *text = "Name: a\nPrecursorMZ: 120\nFormula: C7H8\nNum Peaks: 3\n"
                     "50 10\n91 100\n";
  EXPECT_THROW(parse_msp(std::string_view(text)), FormatError);
}

TEST(Msp, TwoRecordsInOrder) {
  const char *text = "Name: first\nPrecursorMZ: 120\nFormula: C7H8\nNum Peaks: 1\n"
                     "91 100\n\n"
                     "Name: second\nPrecursorMZ: 79\nFormula: C6H6\nNum Peaks: 2\n"
                     "51 3; 78 9\n";
  auto specs = parse_msp(std::string_view(text));
  ASSERT_EQ(specs.size(), 2U);
  EXPECT_EQ(specs[0].record_id, "first");
  EXPECT_EQ(specs[1].record_id, "second");
  EXPECT_EQ(specs[1].peaks.size(), 2U);
}

std::vector<Spectrum> random_spectra(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mz(20, 400), in(0.001, 1000);
  std::vector<Spectrum> out;
  for (int k = 0; k < n; ++k) {
    std::vector<Peak> peaks;
    const int np = 1 + static_cast<int>(rng() % 12);
    for (int j = 0; j < np; ++j)
      peaks.push_back({ mz(rng), in(rng) });
    canonicalize_peaks(peaks);
    Spectrum s = make_spectrum(peaks, 401);
    s.record_id = "r" + std::to_string(k);
    out.push_back(s);
  }
  return out;
}

TEST(RoundTrip, MgfAndMsp) {
  auto specs = random_spectra(20, 7);
  std::ostringstream mgf, msp;
  write_mgf(mgf, specs);
  write_msp(msp, specs);
  auto a = parse_mgf(std::string_view(mgf.str()));
  auto b = parse_msp(std::string_view(msp.str()));
  ASSERT_EQ(a.size(), specs.size());
  ASSERT_EQ(b.size(), specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EXPECT_EQ(a[i].peaks, specs[i].peaks);
    EXPECT_EQ(b[i].peaks, specs[i].peaks);
    EXPECT_EQ(a[i].record_id, specs[i].record_id);
    EXPECT_EQ(b[i].formula, specs[i].formula);
    EXPECT_DOUBLE_EQ(a[i].precursor_mz, specs[i].precursor_mz);
  }
}

TEST(RoundTrip, Tsv) {
  for (const auto &s: random_spectra(10, 3)) {
    auto back = spectrum_from_tsv(spectrum_to_tsv(s));
    EXPECT_EQ(back.peaks, s.peaks);
    EXPECT_EQ(back.record_id, s.record_id);
    EXPECT_EQ(back.formula, s.formula);
  }
}

TEST(NormalizeAndFilter, Examples) {
  auto a = normalize_and_filter(make_spectrum({ { 50, 10 }, { 90, 100 } }), 0.05);
  ASSERT_EQ(a.peaks.size(), 2U);
  EXPECT_DOUBLE_EQ(a.peaks[0].intensity, 10.0 / 100.0);
  EXPECT_DOUBLE_EQ(a.peaks[1].intensity, 1.0);

  auto b = normalize_and_filter(make_spectrum({ { 50, 1 }, { 90, 100 } }), 0.05);
  ASSERT_EQ(b.peaks.size(), 1U);
  EXPECT_DOUBLE_EQ(b.peaks[0].mz, 90);

  auto c = normalize_and_filter(make_spectrum({ { 50, 0.37 } }), 0.5);
  ASSERT_EQ(c.peaks.size(), 1U);
  EXPECT_DOUBLE_EQ(c.peaks[0].intensity, 1.0);

  EXPECT_THROW(normalize_and_filter(make_spectrum({})), EmptySpectrumError);
  EXPECT_THROW(normalize_and_filter(make_spectrum({ { 1, 1 } }), 1.0),
               ConfigError);
}

TEST(NormalizeAndFilter, DropsAbovePrecursor) {
  auto s = normalize_and_filter(
      make_spectrum({ { 50, 10 }, { 100.5, 20 }, { 102, 100 } }, 100), 0.0);
  ASSERT_EQ(s.peaks.size(), 2U);
  EXPECT_DOUBLE_EQ(s.peaks[1].intensity, 1.0);
  for (const auto &p: s.peaks)
    EXPECT_LE(p.mz, s.precursor_mz + kPrecursorTolerance);
}

TEST(NormalizeAndFilter, IdempotentAndBinSumBound) {
  for (const auto &s: random_spectra(50, 11)) {
    auto once = normalize_and_filter(s, 0.2);
    auto twice = normalize_and_filter(once, 0.2);
    EXPECT_EQ(once.peaks, twice.peaks);
    auto b = bin_spectrum(once);
    double sum = 0;
    for (double v: b.bins) {
      EXPECT_GE(v, 0);
      EXPECT_LE(v, 1);
      sum += v;
    }
    EXPECT_LE(sum, static_cast<double>(once.peaks.size()) + 1e-12);
  }
}

TEST(Binning, Examples) {
  auto b = bin_spectrum(make_spectrum({ { 150.3, 0.7 } }));
  EXPECT_EQ(b.bins.size(), 1000U);
  EXPECT_DOUBLE_EQ(b.bins[150], 0.7);

  auto c = bin_spectrum(make_spectrum({ { 150.2, 0.4 }, { 150.8, 0.9 } }));
  EXPECT_DOUBLE_EQ(c.bins[150], 0.9);

  auto d = bin_spectrum(make_spectrum({ { 1000.0, 1 }, { 1500, 0.5 } }, 2000));
  EXPECT_EQ(d.dropped_peaks, 2);
  for (double v: d.bins)
    EXPECT_EQ(v, 0.0);

  auto e = bin_spectrum(make_spectrum({ { 1, 1 } }), 0.3, 1.0);
  EXPECT_EQ(e.bins.size(), static_cast<std::size_t>(std::ceil(1.0 / 0.3)));
}

TEST(Formula, Examples) {
  auto f = parse_formula("C6H6");
  EXPECT_EQ(f.count(Element::C), 6);
  EXPECT_EQ(f.count(Element::H), 6);
  auto g = parse_formula("C9H11NO2");
  EXPECT_EQ(g.count(Element::N), 1);
  EXPECT_EQ(g.count(Element::O), 2);
  EXPECT_EQ(g.count(Element::H), 11);
  EXPECT_EQ(total_count(heavy_atom_multiset(g)), 12);
  EXPECT_EQ(total_count(heavy_atom_multiset(f)), 6);
  auto w = heavy_atom_multiset(parse_formula("H2O"));
  EXPECT_EQ(w, (AtomMultiset { { Element::O, 1 } }));
  EXPECT_THROW(parse_formula("C0H2"), FormatError);
  EXPECT_THROW(parse_formula("C6Xx2"), FormatError);
}

TEST(Formula, HeavyCountMatchesMolecules) {
  for (const char *smi: { "c1ccccc1", "CC(=O)O", "OC(=O)c1ccccc1N",
                          "CCOC(=O)c1ccc(Cl)cc1", "C1COCCN1", "FC(F)(F)c1ccncc1",
                          "CS(=O)(=O)c1ccc(Br)cc1" }) {
    auto mol = parse_smiles(smi);
    auto f = parse_formula(mol.formula().to_string());
    EXPECT_EQ(total_count(heavy_atom_multiset(f)), mol.num_atoms()) << smi;
  }
}

}  // namespace
