// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nrb/bench/grid.hpp"
#include "nrb/bench/record.hpp"
#include "nrb/bench/report.hpp"
#include "nrb/cli/config.hpp"
#include "nrb/cli/selftest.hpp"
#include "nrb/codecs/codec.hpp"
#include "nrb/codecs/params_io.hpp"
#include "nrb/codecs/train.hpp"
#include "nrb/io/dataset.hpp"
#include "nrb/io/image_io.hpp"

namespace {

namespace fs = std::filesystem;
using namespace nrb;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitSelftest = 3;

// One machine-parseable line on the diagnostic stream per failure.
void emit_error(const std::string& stage, const std::string& message,
                int exit_code) {
  nlohmann::json j;
  j["error"] = message;
  j["stage"] = stage;
  j["exit_code"] = exit_code;
  std::cerr << j.dump() << '\n';
}

std::string sanitize_name(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '-' ||
                    c == '_';
    out += ok ? c : '_';
  }
  return out;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "cannot open ", path.string(), " for writing");
  f << content;
  check(f.good(), "write failed for ", path.string());
}

std::vector<GridImage> to_grid_images(const std::vector<LoadedImage>& in) {
  std::vector<GridImage> out;
  out.reserve(in.size());
  for (const LoadedImage& im : in) out.push_back({im.id, im.pixels});
  return out;
}

std::vector<GridCodecRef> to_grid_codecs(
    const std::vector<InstantiatedCodec>& in) {
  std::vector<GridCodecRef> out;
  out.reserve(in.size());
  for (const InstantiatedCodec& ic : in)
    out.push_back({ic.config.id, ic.config.variant, ic.codec.get()});
  return out;
}

GridSpec build_grid_spec(const RunConfig& cfg,
                         const std::vector<LoadedImage>& images,
                         const std::vector<InstantiatedCodec>& codecs) {
  GridSpec spec;
  spec.images = to_grid_images(images);
  spec.codecs = to_grid_codecs(codecs);
  for (const AttackEntry& a : cfg.attacks)
    spec.attacks.push_back({a.kind, a.cfg});
  spec.objectives = cfg.objectives;
  spec.defenses = cfg.defenses;
  spec.seed = cfg.seed;
  spec.workers = cfg.workers;
  return spec;
}

std::vector<LoadedImage> load_dataset(const RunConfig& cfg, bool verbose) {
  check(!cfg.dataset.empty(),
        "config: key 'dataset' is required for this subcommand");
  std::vector<std::string> warnings;
  std::vector<LoadedImage> images = load_images(cfg.dataset, &warnings);
  for (const std::string& w : warnings)
    std::cerr << "[nrbench] warning: " << w << '\n';
  if (verbose)
    std::cout << "loaded " << images.size() << " images from " << cfg.dataset
              << '\n';
  return images;
}

int cmd_train(const RunConfig& cfg, bool verbose) {
  fs::create_directories(cfg.output_dir);
  const std::vector<LoadedImage> images = load_images(cfg.train.data);
  std::vector<NdArray> pixels;
  pixels.reserve(images.size());
  for (const LoadedImage& im : images) pixels.push_back(im.pixels);

  for (const CodecConfig& cc : cfg.codecs) {
    if (!cc.params_path.empty()) {
      std::cout << "skip " << cc.id << ": parameter file already configured ("
                << cc.params_path << ")\n";
      continue;
    }
    ToyCodec codec(CodecSpec{cc.family, cc.latent_channels, cc.lambda},
                   cc.init_seed);
    TrainConfig tc;
    tc.steps = cfg.train.steps;
    tc.lr = cfg.train.lr;
    tc.seed = cc.init_seed;
    const TrainReport rep = train_codec(codec, pixels, tc);

    const fs::path params =
        fs::path(cfg.output_dir) / (sanitize_name(cc.id) + ".nrbcodec");
    nlohmann::json meta;
    meta["data"] = cfg.train.data;
    meta["steps"] = tc.steps;
    meta["lr"] = tc.lr;
    meta["seed"] = tc.seed;
    meta["initial_loss"] = rep.initial_loss;
    meta["final_loss"] = rep.final_loss;
    save_codec(codec, params.string(), meta);

    std::string curve = "# step loss\n";
    for (size_t i = 0; i < rep.loss_curve.size(); ++i) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%zu %.17g\n", i, rep.loss_curve[i]);
      curve += buf;
    }
    write_text_file(
        fs::path(cfg.output_dir) / (sanitize_name(cc.id) + ".loss.dat"),
        curve);
    std::cout << "trained " << cc.id << ": loss " << rep.initial_loss
              << " -> " << rep.final_loss << ", wrote " << params.string()
              << '\n';
    if (verbose)
      std::cout << "  " << rep.loss_curve.size() << " steps on "
                << pixels.size() << " images\n";
  }
  return kExitOk;
}

int cmd_attack(const RunConfig& cfg, bool verbose) {
  const std::vector<LoadedImage> images = load_dataset(cfg, verbose);
  const std::vector<InstantiatedCodec> codecs = instantiate_codecs(cfg);
  const fs::path adv_dir = fs::path(cfg.output_dir) / "adversarial";
  fs::create_directories(adv_dir);

  int written = 0;
  for (const LoadedImage& im : images)
    for (const InstantiatedCodec& ic : codecs)
      for (const AttackEntry& at : cfg.attacks)
        for (const Objective& obj : cfg.objectives)
          for (DefenseKind def : cfg.defenses) {
            const std::string key =
                grid_cell_key(im.id, ic.config.id, ic.config.variant, at.kind,
                              obj, def);
            const CellSeeds seeds = grid_cell_seeds(cfg.seed, key);
            DefendedCodec defended(*ic.codec, def, seeds.defense);
            // Replays the evaluation pipeline's call order (clean forward,
            // then attack) so the written example is the one eval scores.
            defended.forward(im.pixels, QuantMode::Hard, seeds.clean_call);
            AttackConfig acfg = at.cfg;
            acfg.seed = seeds.attack;
            const AttackResult res =
                run_attack(at.kind, defended, im.pixels, obj, acfg);

            const std::string base = sanitize_name(key);
            write_png((adv_dir / (base + ".png")).string(), res.x_adv);
            write_raw((adv_dir / (base + ".nrbraw")).string(), res.x_adv);
            std::string trace = "# objective value per accepted step\n";
            for (double v : res.trace) {
              char buf[40];
              std::snprintf(buf, sizeof buf, "%.17g\n", v);
              trace += buf;
            }
            write_text_file(adv_dir / (base + ".trace.dat"), trace);
            ++written;
            if (verbose) std::cout << "crafted " << base << '\n';
          }
  std::cout << "wrote " << written << " adversarial examples to "
            << adv_dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, bool verbose) {
  const std::vector<LoadedImage> images = load_dataset(cfg, verbose);
  const std::vector<InstantiatedCodec> codecs = instantiate_codecs(cfg);
  fs::create_directories(cfg.output_dir);

  const GridSpec spec = build_grid_spec(cfg, images, codecs);
  const std::vector<EvalRecord> records = run_grid(spec);

  int errors = 0;
  for (const EvalRecord& r : records)
    if (!r.error.empty()) ++errors;

  {
    std::ofstream f(fs::path(cfg.output_dir) / "results.csv",
                    std::ios::binary);
    check(f.good(), "cannot write results.csv");
    write_csv(f, records);
  }
  {
    std::ofstream f(fs::path(cfg.output_dir) / "results.jsonl",
                    std::ios::binary);
    check(f.good(), "cannot write results.jsonl");
    write_jsonl(f, records);
  }
  nlohmann::json meta = run_meta_json(cfg);
  meta["records"] = records.size();
  meta["errored_cells"] = errors;
  meta["images"] = nlohmann::json::array();
  for (const LoadedImage& im : images) meta["images"].push_back(im.id);
  write_text_file(fs::path(cfg.output_dir) / "results.meta.json",
                  meta.dump(2) + "\n");

  std::cout << "wrote " << records.size() << " records (" << errors
            << " errored cells) to " << cfg.output_dir << '\n';
  return kExitOk;
}

int cmd_transfer(const RunConfig& cfg, bool verbose) {
  const std::vector<LoadedImage> images = load_dataset(cfg, verbose);
  const std::vector<InstantiatedCodec> codecs = instantiate_codecs(cfg);
  fs::create_directories(cfg.output_dir);
  check(!cfg.attacks.empty(), "transfer: no attack configured");
  check(!cfg.objectives.empty(), "transfer: no objective configured");

  const std::vector<GridCodecRef> refs = to_grid_codecs(codecs);
  const GridAttack attack{cfg.attacks[0].kind, cfg.attacks[0].cfg};
  const TransferMatrix tm =
      transferability(refs, refs, to_grid_images(images), attack,
                      cfg.objectives[0], cfg.seed);

  std::ostringstream dat;
  write_transfer_gnuplot(dat, tm);
  write_text_file(fs::path(cfg.output_dir) / "transfer.dat", dat.str());

  nlohmann::json j;
  j["sources"] = tm.sources;
  j["targets"] = tm.targets;
  j["attack"] = attack_name(attack.kind);
  j["objective"] = objective_name(cfg.objectives[0]);
  j["mean_delta_psnr"] = nlohmann::json::array();
  for (const auto& row : tm.mean_delta_psnr) j["mean_delta_psnr"].push_back(row);
  write_text_file(fs::path(cfg.output_dir) / "transfer.json",
                  j.dump(2) + "\n");

  std::cout << "wrote " << tm.sources.size() << "x" << tm.targets.size()
            << " transfer matrix to " << cfg.output_dir << '\n';
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, bool verbose) {
  const fs::path csv_path = fs::path(cfg.output_dir) / "results.csv";
  std::ifstream f(csv_path, std::ios::binary);
  check(f.good(), "report: cannot open ", csv_path.string(),
        " (run eval first)");
  const std::vector<EvalRecord> records = read_csv(f);
  if (verbose)
    std::cout << "report: " << records.size() << " records from "
              << csv_path.string() << '\n';

  const Summary s = summarize(records);
  std::ostringstream md;
  write_markdown_summary(md, s);
  write_text_file(fs::path(cfg.output_dir) / "summary.md", md.str());

  for (Metric m : cfg.metrics) {
    const RDCurves c = rd_curves(records, m);
    std::ostringstream dat;
    write_rd_gnuplot(dat, c);
    write_text_file(fs::path(cfg.output_dir) /
                        (std::string("rd_") + metric_name(m) + ".dat"),
                    dat.str());
  }
  std::cout << "wrote summary.md and " << cfg.metrics.size()
            << " rate-distortion data files to " << cfg.output_dir << '\n';
  return kExitOk;
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string output_dir;
  int workers = 0;
  uint64_t seed = 0;
  bool seed_given = false;
  bool verbose = false;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("-c,--config", args.config_path, "YAML configuration file")
      ->required();
  sub->add_option("-s,--set", args.sets,
                  "dotted config override, e.g. attack.epsilon=0.062");
  sub->add_option("-o,--output-dir", args.output_dir,
                  "output directory (overrides config and NRB_OUTPUT_DIR)");
  sub->add_option("-w,--workers", args.workers,
                  "worker threads (overrides config and NRB_WORKERS)");
  sub->add_option("--seed", args.seed, "global seed (overrides config)")
      ->each([&args](const std::string&) { args.seed_given = true; });
  sub->add_flag("-v,--verbose", args.verbose, "print progress detail");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "nrbench: adversarial robustness benchmark for learned image codecs"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* train =
      app.add_subcommand("train", "train toy codecs, write parameter files");
  CLI::App* attack = app.add_subcommand(
      "attack", "craft adversarial examples, write images and traces");
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "run the evaluation grid, write results.csv/jsonl");
  CLI::App* transfer = app.add_subcommand(
      "transfer", "replay adversarial examples across codecs");
  CLI::App* report = app.add_subcommand(
      "report", "aggregate an existing results.csv into tables and curves");
  for (CLI::App* sub : {train, attack, eval_cmd, transfer, report})
    add_common(sub, args);
  bool selftest_verbose = false;
  CLI::App* selftest =
      app.add_subcommand("selftest", "run the built-in invariant checks");
  selftest->add_flag("-v,--verbose", selftest_verbose,
                     "print progress detail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (selftest->parsed()) {
    const SelftestResult r = run_selftest(std::cout);
    std::cout << "selftest: " << r.passed << " passed, " << r.failed
              << " failed\n";
    if (!r.ok()) {
      emit_error("selftest", "self test failed", kExitSelftest);
      return kExitSelftest;
    }
    return kExitOk;
  }

  RunConfig cfg;
  try {
    cfg = parse_config(args.config_path, args.sets);
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    if (args.workers > 0) cfg.workers = args.workers;
    if (args.seed_given) cfg.seed = args.seed;
  } catch (const std::exception& e) {
    emit_error("config", e.what(), kExitUsage);
    return kExitUsage;
  }
  if (args.verbose)
    for (const std::string& d : cfg.defaulted)
      std::cout << "config: defaulted " << d << '\n';

  try {
    if (train->parsed()) return cmd_train(cfg, args.verbose);
    if (attack->parsed()) return cmd_attack(cfg, args.verbose);
    if (eval_cmd->parsed()) return cmd_eval(cfg, args.verbose);
    if (transfer->parsed()) return cmd_transfer(cfg, args.verbose);
    if (report->parsed()) return cmd_report(cfg, args.verbose);
  } catch (const std::exception& e) {
    emit_error("runtime", e.what(), kExitRuntime);
    return kExitRuntime;
  }
  emit_error("usage", "no subcommand selected", kExitUsage);
  return kExitUsage;
}
