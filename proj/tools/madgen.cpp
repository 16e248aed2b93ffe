//
// Project madgen - Copyright 2026 The madgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

// madgen command-line tool. Exit codes: 0 success, 1 internal error,
// 2 user or data error.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "madgen/error.h"
#include "madgen/pipeline.h"

namespace {

using madgen::RunConfig;

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, data_dir, dataset, pools, retrieval_ckpt, generator_ckpt;
  std::optional<int> n_molecules, pool_size, epochs, batch_size, train_steps, steps, samples,
      k, max_queries, ablation_steps;
  std::optional<double> lr, cfg_scale, dropout;
  std::optional<std::string> lr_schedule, mode, retriever, split, train_split, encoding, conditioning,
      cfg_target;
  bool valence_masking = false;
  bool quiet = false;
};

void add_flags(CLI::App &app, Overrides &o) {
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--seed", o.seed, "Root seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--data-dir", o.data_dir, "Data root (default $MADGEN_DATA_DIR or ./data)");
  app.add_option("--dataset", o.dataset, "Dataset TSV");
  app.add_option("--pools", o.pools, "Candidate pool TSV");
  app.add_option("--retrieval-ckpt", o.retrieval_ckpt, "Retrieval checkpoint");
  app.add_option("--generator-ckpt", o.generator_ckpt, "Generator checkpoint");
  app.add_option("--n-molecules", o.n_molecules, "Synthetic corpus size");
  app.add_option("--pool-size", o.pool_size, "Candidates per formula");
  app.add_option("--epochs", o.epochs, "Retrieval epochs");
  app.add_option("--batch-size", o.batch_size, "Batch size of the trained stage");
  app.add_option("--lr", o.lr, "Learning rate of the trained stage");
  app.add_option("--train-steps", o.train_steps, "Generator optimizer steps");
  app.add_option("--lr-schedule", o.lr_schedule, "Generator learning rate: constant | cosine");
  app.add_option("--steps", o.steps, "Bridge steps T");
  app.add_option("--samples", o.samples, "Samples per query");
  app.add_option("--cfg-scale", o.cfg_scale, "Guidance scale");
  app.add_option("--dropout", o.dropout, "Condition dropout in generator training");
  app.add_option("--k", o.k, "Top-k for scaffold aggregation");
  app.add_option("--mode", o.mode, "rank: predictive | oracle");
  app.add_option("--retriever", o.retriever, "generate-evaluate: predictive | oracle");
  app.add_option("--split", o.split, "Query split");
  app.add_option("--train-split", o.train_split, "Training split");
  app.add_option("--max-queries", o.max_queries, "Limit on query records (0 = all)");
  app.add_option("--encoding", o.encoding,
                 "binned_mlp | tokens | tokens_self_attention");
  app.add_option("--conditioning", o.conditioning, "concatenation | cross_attention");
  app.add_option("--cfg-target", o.cfg_target, "none | node | edge | both");
  app.add_option("--ablation-steps", o.ablation_steps, "Training steps per ablation cell");
  app.add_flag("--valence-masking", o.valence_masking, "Mask over-valent bond draws");
  app.add_flag("-q,--quiet", o.quiet, "No progress output");
}

// Flags map onto config keys; the owning command reads what it needs.
RunConfig resolve(const Overrides &o, const std::string &command) {
  RunConfig c = o.config ? RunConfig::from_file(*o.config) : RunConfig {};
  if (o.seed)
    c.seed = *o.seed;
  if (o.out)
    c.out_dir = *o.out;
  if (o.data_dir)
    c.data_dir = *o.data_dir;
  if (o.dataset)
    c.dataset = *o.dataset;
  if (o.pools)
    c.pools = *o.pools;
  if (o.retrieval_ckpt)
    c.retrieval_checkpoint = *o.retrieval_ckpt;
  if (o.generator_ckpt)
    c.generator_checkpoint = *o.generator_ckpt;
  if (o.n_molecules)
    c.synthetic.n_molecules = *o.n_molecules;
  if (o.pool_size)
    c.pool_size = *o.pool_size;
  if (o.epochs)
    c.retrieval.epochs = *o.epochs;
  const bool retrieval_stage = command == "train-retrieval";
  if (o.batch_size)
    (retrieval_stage ? c.retrieval.batch_size : c.generator.batch_size) = *o.batch_size;
  if (o.lr)
    (retrieval_stage ? c.retrieval.lr : c.generator.lr) = *o.lr;
  if (o.train_steps)
    c.generator.train_steps = *o.train_steps;
  if (o.lr_schedule)
    c.generator.lr_schedule = *o.lr_schedule;
  if (o.steps)
    c.generator.steps = *o.steps;
  if (o.samples)
    c.generation.samples = *o.samples;
  if (o.cfg_scale)
    c.generation.guidance_scale = *o.cfg_scale;
  if (o.dropout)
    c.generator.cond_dropout = *o.dropout;
  if (o.k)
    c.aggregation_k = *o.k;
  if (o.mode)
    c.rank_mode = *o.mode;
  if (o.retriever)
    c.retriever = *o.retriever;
  if (o.split)
    c.eval_split = *o.split;
  if (o.train_split)
    c.train_split = *o.train_split;
  if (o.max_queries)
    c.max_queries = *o.max_queries;
  if (o.encoding)
    c.generator.encoding = madgen::parse_encoding(*o.encoding);
  if (o.conditioning)
    c.generator.conditioning = madgen::parse_conditioning(*o.conditioning);
  if (o.cfg_target) {
    if (*o.cfg_target == "none") {
      c.generator.classifier_free = false;
      c.generation.guidance_scale = 0;
    } else {
      c.generator.classifier_free = true;
      c.generator.attention_target = madgen::parse_attention_target(*o.cfg_target);
    }
  }
  if (o.ablation_steps)
    c.ablation_train_steps = *o.ablation_steps;
  if (o.valence_masking)
    c.generation.valence_masking = true;
  c.validate();
  return c;
}

int run(const std::string &command, const RunConfig &cfg, bool quiet) {
  const auto t0 = std::chrono::steady_clock::now();
  madgen::Logger log = nullptr;
  if (!quiet)
    log = [t0](const std::string &msg) {
      const double s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "[%7.1fs] %s\n", s, msg.c_str());
    };

  if (command == "simulate") {
    auto r = madgen::cmd_simulate(cfg, log);
    std::cout << r.stats.to_json().dump(2) << '\n';
    for (const auto &f: r.files)
      std::cout << "wrote " << f << '\n';
  } else if (command == "train-retrieval") {
    auto tl = madgen::cmd_train_retrieval(cfg, log);
    std::printf("initial loss %.4f final loss %.4f\nwrote %s\n", tl.initial_loss,
                tl.epoch_loss.empty() ? tl.initial_loss : tl.epoch_loss.back(),
                cfg.retrieval_checkpoint_path().c_str());
  } else if (command == "rank") {
    auto r = madgen::cmd_rank(cfg, log);
    std::printf("SPA %.4f over %zu queries (%s)\nwrote %s\n", r.spa, r.predictions.size(),
                cfg.rank_mode.c_str(), r.output.c_str());
  } else if (command == "train-generator") {
    auto tl = madgen::cmd_train_generator(cfg, log);
    std::printf("initial loss %.4f final loss %.4f\nwrote %s\n", tl.initial_smoothed,
                tl.final_smoothed, cfg.generator_checkpoint_path().c_str());
  } else if (command == "generate-evaluate") {
    auto r = madgen::cmd_generate_evaluate(cfg, log);
    std::cout << r.table;
    for (const auto &f: r.files)
      std::cout << "wrote " << f << '\n';
  } else if (command == "ablate") {
    auto r = madgen::cmd_ablate(cfg, log);
    std::cout << r.table;
    for (const auto &f: r.files)
      std::cout << "wrote " << f << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app { "madgen: scaffold retrieval and scaffold-conditioned generation from MS/MS spectra" };
  app.require_subcommand(1);
  Overrides o;
  add_flags(app, o);
  app.fallthrough();
  std::string command;
  for (const char *name: { "simulate", "train-retrieval", "rank", "train-generator",
                           "generate-evaluate", "ablate" }) {
    static const std::map<std::string, std::string> help = {
      { "simulate", "Write the synthetic corpus, candidate pools and statistics" },
      { "train-retrieval", "Train the spectrum-scaffold contrastive retriever" },
      { "rank", "Predict scaffolds (--mode predictive|oracle) and report SPA" },
      { "train-generator", "Train the scaffold-conditioned generator" },
      { "generate-evaluate", "Generate molecules (--retriever predictive|oracle) and score them" },
      { "ablate", "Train and score the encoding / conditioning ablation grid" },
    };
    app.add_subcommand(name, help.at(name))->callback([&command, name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const RunConfig cfg = resolve(o, command);
    return run(command, cfg, o.quiet);
  } catch (const madgen::UserError &e) {
    std::fprintf(stderr, "madgen %s: error: %s\n", command.c_str(), e.what());
    return 2;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "madgen %s: internal error: %s\n", command.c_str(), e.what());
    return 1;
  }
}
