//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "madgen/bridge.h"
#include "madgen/chemgraph.h"
#include "madgen/data.h"
#include "madgen/error.h"
#include "madgen/generator.h"
#include "madgen/metrics.h"
#include "madgen/pipeline.h"
#include "madgen/retrieval.h"

namespace py = pybind11;
using namespace madgen;

namespace {

py::dict spectrum_dict(const Spectrum &s) {
  py::list peaks;
  for (const auto &p: s.peaks)
    peaks.append(py::make_tuple(p.mz, p.intensity));
  py::dict d;
  d["record_id"] = s.record_id;
  d["formula"] = s.formula.to_string();
  d["adduct"] = s.adduct;
  d["precursor_mz"] = s.precursor_mz;
  d["peaks"] = peaks;
  return d;
}

Spectrum spectrum_from(const py::dict &d) {
  Spectrum s;
  for (auto item: d["peaks"]) {
    auto t = item.cast<std::pair<double, double>>();
    s.peaks.push_back({ t.first, t.second });
  }
  canonicalize_peaks(s.peaks);
  s.formula = parse_formula(d["formula"].cast<std::string>());
  s.precursor_mz = d.contains("precursor_mz") ? d["precursor_mz"].cast<double>() : 0.0;
  if (d.contains("adduct"))
    s.adduct = d["adduct"].cast<std::string>();
  if (d.contains("record_id"))
    s.record_id = d["record_id"].cast<std::string>();
  return s;
}

py::dict record_dict(const DatasetRecord &r) {
  py::dict d;
  d["record_id"] = r.id();
  d["split"] = r.split;
  d["smiles"] = r.smiles;
  d["scaffold_smiles"] = r.scaffold_smiles;
  d["spectrum"] = spectrum_dict(r.spectrum);
  return d;
}

py::list ranked_list(const RankedMolecules &r) {
  py::list out;
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    py::dict d;
    d["rank"] = i + 1;
    d["smiles"] = r.entries[i].smiles;
    d["frequency"] = r.entries[i].frequency;
    d["mean_log_likelihood"] = r.entries[i].mean_log_likelihood;
    out.append(d);
  }
  return out;
}

RunConfig config_from(const std::string &json) {
  return json.empty() ? RunConfig {} : RunConfig::from_json(nlohmann::json::parse(json));
}

Logger py_logger(const py::object &cb) {
  if (cb.is_none())
    return nullptr;
  return [cb](const std::string &msg) {
    py::gil_scoped_acquire gil;
    cb(msg);
  };
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "madgen core bindings";

  auto user_error = py::register_exception<UserError>(m, "UserError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", user_error.ptr());
  py::register_exception<ValenceError>(m, "ValenceError", user_error.ptr());
  py::register_exception<CompositionError>(m, "CompositionError", user_error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", user_error.ptr());
  py::register_exception<DataError>(m, "DataError", user_error.ptr());
  py::register_exception<EmptyPoolError>(m, "EmptyPoolError", user_error.ptr());
  py::register_exception<EmptySpectrumError>(m, "EmptySpectrumError", user_error.ptr());
  py::register_exception<UncalibratedError>(m, "UncalibratedError", user_error.ptr());

  // Chemistry.
  m.def("canonical_smiles", [](const std::string &s) { return canonical_smiles(s); });
  m.def("murcko_scaffold",
        [](const std::string &s) { auto sc = murcko_scaffold(parse_smiles(s));
          return sc.empty() ? std::string() : canonical_smiles(write_smiles(sc.graph)); });
  m.def("formula", [](const std::string &s) { return parse_smiles(s).formula().to_string(); });
  m.def("tanimoto", [](const std::string &a, const std::string &b) {
    return tanimoto(morgan_fingerprint(parse_smiles(a)), morgan_fingerprint(parse_smiles(b)));
  });
  m.def(
      "mces_distance",
      [](const std::string &a, const std::string &b, std::int64_t budget) {
        auto r = mces_distance(parse_smiles(a), parse_smiles(b), budget);
        return py::make_tuple(r.distance, r.exact);
      },
      py::arg("a"), py::arg("b"), py::arg("budget") = kDefaultMcesBudget);

  // Spectra and data.
  m.def(
      "simulate_spectrum",
      [](const std::string &smiles, int max_peaks, std::uint64_t seed) {
        return spectrum_dict(simulate_spectrum(parse_smiles(smiles), "[M+H]+", max_peaks, seed));
      },
      py::arg("smiles"), py::arg("max_peaks") = kDefaultMaxPeaks, py::arg("seed") = 0);
  m.def("read_dataset", [](const std::string &path) {
    py::list out;
    for (const auto &r: read_dataset_file(path))
      out.append(record_dict(r));
    return out;
  });
  m.def("dataset_stats", [](const std::string &path) {
    return dataset_stats(read_dataset_file(path)).to_json().dump();
  });

  // Bridge.
  m.def("cosine_alphas", [](int T) { return cosine_schedule(T).alphas; });
  m.def(
      "marginal_matrix",
      [](int T, int t, int endpoint, int classes) {
        return Eigen::MatrixXd(marginal_matrix(cosine_schedule(T), t, endpoint, classes));
      },
      py::arg("T"), py::arg("t"), py::arg("endpoint"), py::arg("classes") = kEdgeClasses);
  m.def("cfg_logits", [](const nn::Mat &c, const nn::Mat &u, double s) {
    return cfg_logits(c, u, s);
  });

  // Models.
  m.def(
      "generate",
      [](const std::string &checkpoint, const py::dict &spectrum, const std::string &scaffold,
         int samples, double cfg_scale, bool valence_masking, std::uint64_t seed) {
        const auto model = GeneratorModel::load_file(checkpoint);
        GenerationConfig g;
        g.samples = samples;
        g.guidance_scale = cfg_scale;
        g.valence_masking = valence_masking;
        g.seed = seed;
        const Spectrum spec = spectrum_from(spectrum);
        RankedMolecules r;
        {
          py::gil_scoped_release release;
          r = generate(model, spec, scaffold_from_smiles(scaffold).graph, g);
        }
        return py::make_tuple(ranked_list(r), r.valid_fraction);
      },
      py::arg("checkpoint"), py::arg("spectrum"), py::arg("scaffold"), py::arg("samples") = 100,
      py::arg("cfg_scale") = 1.0, py::arg("valence_masking") = false, py::arg("seed") = 0);
  m.def("rank_scaffolds", [](const std::string &checkpoint, const py::dict &spectrum,
                             const std::vector<std::string> &pool) {
    const auto model = RetrievalModel::load_file(checkpoint);
    py::list out;
    for (const auto &e: rank_candidates(model, spectrum_from(spectrum), pool).entries)
      out.append(py::make_tuple(e.smiles, e.score));
    return out;
  });

  // Pipeline commands; configs travel as JSON text.
  m.def("default_config", [] { return RunConfig {}.to_json().dump(); });
  m.def(
      "run_command",
      [](const std::string &command, const std::string &config_json, const py::object &log) {
        const RunConfig cfg = config_from(config_json);
        const Logger logger = py_logger(log);
        py::gil_scoped_release release;
        nlohmann::json out;
        if (command == "simulate") {
          auto r = cmd_simulate(cfg, logger);
          out = { { "stats", r.stats.to_json() }, { "files", r.files } };
        } else if (command == "train-retrieval") {
          auto r = cmd_train_retrieval(cfg, logger);
          out = { { "initial_loss", r.initial_loss }, { "epoch_loss", r.epoch_loss } };
        } else if (command == "rank") {
          auto r = cmd_rank(cfg, logger);
          out = { { "spa", r.spa }, { "output", r.output } };
        } else if (command == "train-generator") {
          auto r = cmd_train_generator(cfg, logger);
          out = { { "initial_loss", r.initial_smoothed }, { "final_loss", r.final_smoothed } };
        } else if (command == "generate-evaluate") {
          auto r = cmd_generate_evaluate(cfg, logger);
          out = { { "report", r.report.to_json() }, { "table", r.table }, { "files", r.files } };
        } else if (command == "ablate") {
          auto r = cmd_ablate(cfg, logger);
          out = { { "table", r.table }, { "files", r.files } };
        } else {
          throw ConfigError("unknown command '" + command + "'");
        }
        return out.dump();
      },
      py::arg("command"), py::arg("config_json") = "", py::arg("log") = py::none());
}
