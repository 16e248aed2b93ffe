//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "madgen/pipeline.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "madgen/error.h"

namespace madgen {

namespace fs = std::filesystem;

namespace {

void say(const Logger &log, const std::string &msg) {
  if (log)
    log(msg);
}

void check_keys(const nlohmann::json &j, const std::set<std::string> &allowed,
                const std::string &where) {
  if (!j.is_object())
    throw ConfigError(where + " must be a JSON object");
  for (const auto &[k, v]: j.items())
    if (!allowed.contains(k))
      throw ConfigError("unknown config key '" + k + "' in " + where);
}

std::ofstream open_out(const std::string &path) {
  std::error_code ec;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty())
    fs::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write " + path);
  return out;
}

std::string join(const std::string &dir, const std::string &name) {
  return (fs::path(dir) / name).string();
}

std::vector<DatasetRecord> load_split(const std::string &path, const std::string &split,
                                      int max_queries = 0) {
  if (!fs::exists(path))
    throw DataError("dataset not found: " + path);
  auto recs = filter_split(read_dataset_file(path), split);
  if (recs.empty())
    throw DataError("no records in split '" + split + "' of " + path);
  if (max_queries > 0 && static_cast<int>(recs.size()) > max_queries)
    recs.resize(static_cast<std::size_t>(max_queries));
  return recs;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

void RunConfig::validate() const {
  retrieval.validate();
  generator.validate();
  if (pool_size < 1)
    throw ConfigError("pool_size must be positive");
  if (synthetic.n_molecules < 3 || synthetic.min_heavy_atoms < 1
      || synthetic.max_heavy_atoms < synthetic.min_heavy_atoms || synthetic.max_peaks < 1
      || synthetic.max_isomers < 1)
    throw ConfigError("invalid synthetic corpus settings");
  if (generation.samples < 1)
    throw ConfigError("samples must be positive");
  if (!std::isfinite(generation.guidance_scale) || generation.guidance_scale < 0)
    throw ConfigError("cfg scale must be a non-negative number");
  if (aggregation_k < 1)
    throw ConfigError("aggregation k must be positive");
  if (rank_mode != "predictive" && rank_mode != "oracle")
    throw ConfigError("rank mode must be predictive or oracle");
  if (retriever != "predictive" && retriever != "oracle")
    throw ConfigError("retriever must be predictive or oracle");
  if (max_queries < 0 || ablation_train_steps < 0 || mces_budget < 1)
    throw ConfigError("max_queries, ablation steps and MCES budget must be non-negative");
}

nlohmann::json RunConfig::to_json() const {
  return {
    { "seed", seed },
    { "paths",
      { { "data_dir", data_dir },
        { "dataset", dataset },
        { "pools", pools },
        { "out_dir", out_dir },
        { "retrieval_checkpoint", retrieval_checkpoint },
        { "generator_checkpoint", generator_checkpoint } } },
    { "synthetic",
      { { "n_molecules", synthetic.n_molecules },
        { "min_heavy_atoms", synthetic.min_heavy_atoms },
        { "max_heavy_atoms", synthetic.max_heavy_atoms },
        { "max_isomers", synthetic.max_isomers },
        { "max_peaks", synthetic.max_peaks },
        { "split_ratios", synthetic.split_ratios },
        { "pool_size", pool_size } } },
    { "retrieval", retrieval.to_json() },
    { "generator", generator.to_json() },
    { "generation",
      { { "samples", generation.samples },
        { "cfg_scale", generation.guidance_scale },
        { "valence_masking", generation.valence_masking } } },
    { "rank", { { "mode", rank_mode }, { "k", aggregation_k } } },
    { "evaluate",
      { { "retriever", retriever },
        { "train_split", train_split },
        { "split", eval_split },
        { "max_queries", max_queries },
        { "mces_budget", mces_budget } } },
    { "ablation", { { "train_steps", ablation_train_steps } } },
  };
}

RunConfig RunConfig::from_json(const nlohmann::json &j) {
  RunConfig c;
  check_keys(j, { "seed", "paths", "synthetic", "retrieval", "generator", "generation",
                  "rank", "evaluate", "ablation" },
             "config");
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("paths")) {
      const auto &p = j.at("paths");
      check_keys(p, { "data_dir", "dataset", "pools", "out_dir", "retrieval_checkpoint",
                      "generator_checkpoint" },
                 "paths");
      c.data_dir = p.value("data_dir", c.data_dir);
      c.dataset = p.value("dataset", c.dataset);
      c.pools = p.value("pools", c.pools);
      c.out_dir = p.value("out_dir", c.out_dir);
      c.retrieval_checkpoint = p.value("retrieval_checkpoint", c.retrieval_checkpoint);
      c.generator_checkpoint = p.value("generator_checkpoint", c.generator_checkpoint);
    }
    if (j.contains("synthetic")) {
      const auto &s = j.at("synthetic");
      check_keys(s, { "n_molecules", "min_heavy_atoms", "max_heavy_atoms", "max_isomers",
                      "max_peaks", "split_ratios", "pool_size" },
                 "synthetic");
      auto &y = c.synthetic;
      y.n_molecules = s.value("n_molecules", y.n_molecules);
      y.min_heavy_atoms = s.value("min_heavy_atoms", y.min_heavy_atoms);
      y.max_heavy_atoms = s.value("max_heavy_atoms", y.max_heavy_atoms);
      y.max_isomers = s.value("max_isomers", y.max_isomers);
      y.max_peaks = s.value("max_peaks", y.max_peaks);
      y.split_ratios = s.value("split_ratios", y.split_ratios);
      c.pool_size = s.value("pool_size", c.pool_size);
    }
    if (j.contains("retrieval"))
      c.retrieval = RetrievalConfig::from_json(j.at("retrieval"));
    if (j.contains("generator"))
      c.generator = GeneratorConfig::from_json(j.at("generator"));
    if (j.contains("generation")) {
      const auto &g = j.at("generation");
      check_keys(g, { "samples", "cfg_scale", "valence_masking" }, "generation");
      c.generation.samples = g.value("samples", c.generation.samples);
      c.generation.guidance_scale = g.value("cfg_scale", c.generation.guidance_scale);
      c.generation.valence_masking = g.value("valence_masking", c.generation.valence_masking);
    }
    if (j.contains("rank")) {
      const auto &r = j.at("rank");
      check_keys(r, { "mode", "k" }, "rank");
      c.rank_mode = r.value("mode", c.rank_mode);
      c.aggregation_k = r.value("k", c.aggregation_k);
    }
    if (j.contains("evaluate")) {
      const auto &e = j.at("evaluate");
      check_keys(e, { "retriever", "train_split", "split", "max_queries", "mces_budget" },
                 "evaluate");
      c.retriever = e.value("retriever", c.retriever);
      c.train_split = e.value("train_split", c.train_split);
      c.eval_split = e.value("split", c.eval_split);
      c.max_queries = e.value("max_queries", c.max_queries);
      c.mces_budget = e.value("mces_budget", c.mces_budget);
    }
    if (j.contains("ablation")) {
      const auto &a = j.at("ablation");
      check_keys(a, { "train_steps" }, "ablation");
      c.ablation_train_steps = a.value("train_steps", c.ablation_train_steps);
    }
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::data_root() const {
  if (!data_dir.empty())
    return data_dir;
  if (const char *env = std::getenv("MADGEN_DATA_DIR"); env && *env)
    return env;
  return "data";
}

std::string RunConfig::dataset_path() const {
  return dataset.empty() ? join(data_root(), "dataset.tsv") : dataset;
}

std::string RunConfig::pools_path() const {
  return pools.empty() ? join(data_root(), "pools.tsv") : pools;
}

std::string RunConfig::output_dir() const {
  return out_dir.empty() ? data_root() : out_dir;
}

std::string RunConfig::retrieval_checkpoint_path() const {
  return retrieval_checkpoint.empty() ? join(output_dir(), "retrieval.ckpt")
                                      : retrieval_checkpoint;
}

std::string RunConfig::generator_checkpoint_path() const {
  return generator_checkpoint.empty() ? join(output_dir(), "generator.ckpt")
                                      : generator_checkpoint;
}

SyntheticConfig RunConfig::seeded_synthetic() const {
  SyntheticConfig s = synthetic;
  s.seed = substream_seed(seed, "data");
  return s;
}

RetrievalConfig RunConfig::seeded_retrieval() const {
  RetrievalConfig r = retrieval;
  r.seed = substream_seed(seed, "retrieval");
  return r;
}

GeneratorConfig RunConfig::seeded_generator() const {
  GeneratorConfig g = generator;
  g.seed = substream_seed(seed, "generator");
  return g;
}

std::uint64_t RunConfig::sampling_seed(std::size_t query_index) const {
  return substream_seed(substream_seed(seed, "sampling"),
                        static_cast<std::uint64_t>(query_index));
}

// ---------------------------------------------------------------------------
// Commands

SimulateResult cmd_simulate(const RunConfig &cfg, const Logger &log) {
  cfg.validate();
  const std::string dir = cfg.output_dir();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir))
    throw DataError("cannot create output directory " + dir);

  say(log, "building synthetic corpus");
  const SyntheticCorpus corpus = make_synthetic_corpus(cfg.seeded_synthetic());
  const CandidatePool pool = build_candidate_pool(corpus.records, corpus.library,
                                                  cfg.pool_size,
                                                  substream_seed(cfg.seed, "pools"));
  SimulateResult res;
  res.stats = dataset_stats(corpus.records);

  const std::string dataset = join(dir, "dataset.tsv");
  {
    auto out = open_out(dataset);
    write_dataset_tsv(out, corpus.records);
  }
  const std::string mgf = join(dir, "spectra.mgf");
  {
    std::vector<Spectrum> spectra;
    for (const auto &r: corpus.records)
      spectra.push_back(r.spectrum);
    auto out = open_out(mgf);
    write_mgf(out, spectra);
  }
  const std::string pools = join(dir, "pools.tsv");
  {
    auto out = open_out(pools);
    write_pool_tsv(out, pool);
  }
  const std::string stats = join(dir, "stats.json");
  {
    auto out = open_out(stats);
    out << res.stats.to_json().dump(2) << '\n';
  }
  res.files = { dataset, mgf, pools, stats };
  return res;
}

TrainLog cmd_train_retrieval(const RunConfig &cfg, const Logger &log) {
  cfg.validate();
  const auto recs = load_split(cfg.dataset_path(), cfg.train_split);
  std::vector<RetrievalExample> ex;
  for (const auto &r: recs)
    ex.push_back({ &r.spectrum, r.scaffold_smiles });
  say(log, "training retrieval on " + std::to_string(ex.size()) + " spectra");
  TrainLog tl;
  const RetrievalModel model = train_retrieval(ex, cfg.seeded_retrieval(), &tl);
  model.save_file(cfg.retrieval_checkpoint_path());
  auto out = open_out(join(cfg.output_dir(), "retrieval_loss.csv"));
  out << "epoch,loss\n";
  out << "0," << format_double(tl.initial_loss) << '\n';
  for (std::size_t e = 0; e < tl.epoch_loss.size(); ++e)
    out << e + 1 << ',' << format_double(tl.epoch_loss[e]) << '\n';
  return tl;
}

std::vector<ScaffoldPrediction>
predict_scaffolds(const RetrievalModel &model, const std::vector<DatasetRecord> &records,
                  const CandidatePool &pool, int k) {
  // Group spectra of the same compound as seen at query time.
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<RankedScaffolds> rankings(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Spectrum &s = records[i].spectrum;
    const std::string formula = s.formula.to_string();
    std::vector<std::string> scaffolds;
    for (const auto &c: pool.candidates(formula))
      scaffolds.push_back(c.scaffold_smiles);
    if (scaffolds.empty())
      throw EmptyPoolError("no candidates for formula " + formula + " (record "
                           + records[i].id() + ")");
    rankings[i] = rank_candidates(model, s, scaffolds);
    char mz[32];
    std::snprintf(mz, sizeof(mz), "%.3f", s.precursor_mz);
    groups[formula + '|' + s.adduct + '|' + mz].push_back(i);
  }
  std::vector<ScaffoldPrediction> out(records.size());
  for (const auto &[key, idx]: groups) {
    std::vector<RankedScaffolds> group;
    for (auto i: idx)
      group.push_back(rankings[i]);
    const std::string best = aggregate_topk_frequency(group, k);
    for (auto i: idx) {
      double score = 0;
      for (const auto &e: rankings[i].entries)
        if (e.smiles == best)
          score = e.score;
      out[i] = { records[i].id(), best, score };
    }
  }
  return out;
}

std::vector<ScaffoldPrediction> oracle_scaffolds(const std::vector<DatasetRecord> &records) {
  std::map<std::string, std::string> lookup;
  for (const auto &r: records)
    lookup[r.id()] = r.smiles;
  std::vector<ScaffoldPrediction> out;
  for (const auto &r: records)
    out.push_back({ r.id(), oracle_scaffold(r.id(), lookup), 1.0 });
  return out;
}

namespace {

std::vector<ScaffoldPrediction> scaffolds_for(const RunConfig &cfg, const std::string &mode,
                                              const std::vector<DatasetRecord> &recs,
                                              const Logger &log) {
  if (mode == "oracle")
    return oracle_scaffolds(recs);
  const std::string ckpt = cfg.retrieval_checkpoint_path();
  if (!fs::exists(ckpt))
    throw DataError("retrieval checkpoint not found: " + ckpt);
  if (!fs::exists(cfg.pools_path()))
    throw DataError("candidate pools not found: " + cfg.pools_path());
  const auto model = RetrievalModel::load_file(ckpt);
  const auto pool = read_pool_file(cfg.pools_path());
  say(log, "ranking " + std::to_string(recs.size()) + " spectra against candidate pools");
  return predict_scaffolds(model, recs, pool, cfg.aggregation_k);
}

double spa_of(const std::vector<ScaffoldPrediction> &pred,
              const std::vector<DatasetRecord> &recs) {
  std::vector<std::string> p, t;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    p.push_back(pred[i].scaffold);
    t.push_back(recs[i].scaffold_smiles);
  }
  return spa(p, t);
}

}  // namespace

RankResult cmd_rank(const RunConfig &cfg, const Logger &log) {
  cfg.validate();
  const auto recs = load_split(cfg.dataset_path(), cfg.eval_split, cfg.max_queries);
  RankResult res;
  res.predictions = scaffolds_for(cfg, cfg.rank_mode, recs, log);
  res.spa = spa_of(res.predictions, recs);
  res.output = join(cfg.output_dir(), "scaffolds_" + cfg.rank_mode + ".tsv");
  auto out = open_out(res.output);
  out << "record_id\tscaffold_smiles\tscore\n";
  for (const auto &p: res.predictions)
    out << p.record_id << '\t' << p.scaffold << '\t' << format_double(p.score) << '\n';
  return res;
}

GeneratorTrainLog cmd_train_generator(const RunConfig &cfg, const Logger &log) {
  cfg.validate();
  const auto recs = load_split(cfg.dataset_path(), cfg.train_split);
  std::vector<GeneratorExample> ex;
  for (const auto &r: recs)
    ex.push_back({ &r.spectrum, parse_smiles(r.smiles) });
  const GeneratorConfig gc = cfg.seeded_generator();
  say(log, "training generator on " + std::to_string(ex.size()) + " molecules for "
               + std::to_string(gc.train_steps) + " steps");
  GeneratorTrainLog tl;
  const int every = std::max(1, gc.train_steps / 20);
  const auto model = train_generator(ex, gc, &tl, [&](int step, double loss) {
    if (step % every == 0)
      say(log, "step " + std::to_string(step) + " loss " + format_double(loss));
  });
  model.save_file(cfg.generator_checkpoint_path());
  auto out = open_out(join(cfg.output_dir(), "generator_loss.csv"));
  out << "step,loss\n";
  for (std::size_t s = 0; s < tl.step_loss.size(); ++s)
    out << s << ',' << format_double(tl.step_loss[s]) << '\n';
  return tl;
}

std::vector<RankedMolecules>
generate_for_records(const GeneratorModel &model, const std::vector<DatasetRecord> &records,
                     const std::vector<ScaffoldPrediction> &scaffolds, const RunConfig &cfg,
                     const Logger &log) {
  if (scaffolds.size() != records.size())
    throw ShapeError("one scaffold per record required");
  std::vector<RankedMolecules> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    GenerationConfig g = cfg.generation;
    g.seed = cfg.sampling_seed(i);
    const MolGraph scaffold = scaffold_from_smiles(scaffolds[i].scaffold).graph;
    try {
      out.push_back(generate(model, records[i].spectrum, scaffold, g));
    } catch (const CompositionError &) {
      RankedMolecules empty;
      empty.query_id = records[i].id();
      out.push_back(std::move(empty));
    }
    if (log && ((i + 1) % 10 == 0 || i + 1 == records.size()))
      log("generated " + std::to_string(i + 1) + "/" + std::to_string(records.size()));
  }
  return out;
}

namespace {

EvalReport score(const std::vector<RankedMolecules> &gens,
                 const std::vector<DatasetRecord> &recs,
                 const std::vector<ScaffoldPrediction> &scaf, const RunConfig &cfg) {
  std::vector<MolGraph> truths;
  std::vector<std::string> pred, truth;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    truths.push_back(parse_smiles(recs[i].smiles));
    pred.push_back(scaf[i].scaffold);
    truth.push_back(recs[i].scaffold_smiles);
  }
  return evaluate(gens, truths, pred, truth, cfg.mces_budget);
}

}  // namespace

EvaluateResult cmd_generate_evaluate(const RunConfig &cfg, const Logger &log) {
  cfg.validate();
  const auto recs = load_split(cfg.dataset_path(), cfg.eval_split, cfg.max_queries);
  const std::string ckpt = cfg.generator_checkpoint_path();
  if (!fs::exists(ckpt))
    throw DataError("generator checkpoint not found: " + ckpt);
  const auto scaf = scaffolds_for(cfg, cfg.retriever, recs, log);
  const auto model = GeneratorModel::load_file(ckpt);

  EvaluateResult res;
  res.generations = generate_for_records(model, recs, scaf, cfg, log);
  res.report = score(res.generations, recs, scaf, cfg);
  res.report.label = cfg.retriever == "oracle" ? "Oracle" : "Predictive";
  res.table = format_report_table({ res.report });

  const std::string dir = cfg.output_dir();
  const std::string gen = join(dir, "generations_" + cfg.retriever + ".jsonl");
  {
    auto out = open_out(gen);
    for (const auto &g: res.generations)
      write_generation_jsonl(out, g);
  }
  const std::string rep = join(dir, "report_" + cfg.retriever + ".json");
  {
    auto out = open_out(rep);
    out << res.report.to_json().dump(2) << '\n';
  }
  const std::string tab = join(dir, "report_" + cfg.retriever + ".txt");
  {
    auto out = open_out(tab);
    out << res.table;
  }
  res.files = { gen, rep, tab };
  return res;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationRow> ablation_grid() {
  using E = SpectrumEncoding;
  using C = Conditioning;
  using T = AttentionTarget;
  return {
    { "Binning+MLP", "Concatenation", E::kBinnedMlp, C::kConcatenation, std::nullopt },
    { "Tokenization", "Cross-Attn", E::kTokens, C::kCrossAttention, std::nullopt },
    { "Tokenization+Self-Attn", "Cross-Attn", E::kTokensSelfAttention, C::kCrossAttention,
      std::nullopt },
    { "Tokenization+Self-Attn", "Cross-Attn+CFG (edge)", E::kTokensSelfAttention,
      C::kCrossAttention, T::kEdge },
    { "Tokenization+Self-Attn", "Cross-Attn+CFG (node)", E::kTokensSelfAttention,
      C::kCrossAttention, T::kNode },
    { "Tokenization+Self-Attn", "Cross-Attn+CFG (both)", E::kTokensSelfAttention,
      C::kCrossAttention, T::kBoth },
  };
}

GeneratorConfig ablation_config(const GeneratorConfig &base, const AblationRow &row) {
  GeneratorConfig g = base;
  g.encoding = row.encoding;
  g.conditioning = row.conditioning;
  g.classifier_free = row.guidance.has_value();
  g.attention_target = row.guidance.value_or(AttentionTarget::kNode);
  return g;
}

std::string format_ablation_table(const std::vector<AblationRow> &rows,
                                  const std::vector<EvalReport> &reports) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %-24s | %8s %6s %6s | %8s %6s %6s\n",
                "Encoding strategy", "Conditioning strategy", "Top1 Acc", "Sim.", "MCES",
                "Top10Acc", "Sim.", "MCES");
  out << line << std::string(96, '-') << '\n';
  for (std::size_t i = 0; i < rows.size() && i < reports.size(); ++i) {
    const auto &r = reports[i];
    std::snprintf(line, sizeof(line),
                  "%-24s %-24s | %7.1f%% %6.2f %6.2f | %7.1f%% %6.2f %6.2f\n",
                  rows[i].encoding_label.c_str(), rows[i].conditioning_label.c_str(),
                  100 * r.top1_accuracy, r.mean_top1_tanimoto, r.mean_top1_mces,
                  100 * r.top10_accuracy, r.mean_top10_best_tanimoto,
                  r.mean_top10_best_mces);
    out << line;
  }
  return out.str();
}

AblationResult cmd_ablate(const RunConfig &cfg, const Logger &log) {
  cfg.validate();
  const auto train = load_split(cfg.dataset_path(), cfg.train_split);
  const auto queries = load_split(cfg.dataset_path(), cfg.eval_split, cfg.max_queries);
  std::vector<GeneratorExample> ex;
  for (const auto &r: train)
    ex.push_back({ &r.spectrum, parse_smiles(r.smiles) });
  const auto scaf = oracle_scaffolds(queries);

  AblationResult res;
  res.rows = ablation_grid();
  nlohmann::json cells = nlohmann::json::array();
  for (const auto &row: res.rows) {
    GeneratorConfig gc = ablation_config(cfg.seeded_generator(), row);
    if (cfg.ablation_train_steps > 0)
      gc.train_steps = cfg.ablation_train_steps;
    say(log, "ablation: " + row.encoding_label + " / " + row.conditioning_label);
    const auto model = train_generator(ex, gc);
    RunConfig rc = cfg;
    if (!row.guidance)
      rc.generation.guidance_scale = 0;
    const auto gens = generate_for_records(model, queries, scaf, rc);
    EvalReport rep = score(gens, queries, scaf, cfg);
    rep.label = row.encoding_label + " / " + row.conditioning_label;
    res.reports.push_back(rep);
    nlohmann::json cell = rep.to_json();
    cell["encoding"] = row.encoding_label;
    cell["conditioning"] = row.conditioning_label;
    cell["generator"] = gc.to_json();
    cells.push_back(cell);
  }
  res.table = format_ablation_table(res.rows, res.reports);
  const std::string js = join(cfg.output_dir(), "ablation.json");
  {
    auto out = open_out(js);
    out << cells.dump(2) << '\n';
  }
  const std::string tab = join(cfg.output_dir(), "ablation.txt");
  {
    auto out = open_out(tab);
    out << res.table;
  }
  res.files = { js, tab };
  return res;
}

}  // namespace madgen
