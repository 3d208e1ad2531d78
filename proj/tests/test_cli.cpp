// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nrb/cli/config.hpp"
#include "nrb/cli/selftest.hpp"
#include "nrb/codecs/params_io.hpp"
#include "nrb/core/random.hpp"

namespace {

using namespace nrb;
namespace fs = std::filesystem;

// Fresh scratch directory per test run, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("nrb_cli_test_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

std::string write_config(const TempDir& tmp, const std::string& name,
                         const std::string& body) {
  const std::string p = tmp.file(name);
  std::ofstream f(p);
  f << body;
  return p;
}

// Captures the message of the exception `fn` throws; empty if it does not.
template <typename F>
std::string error_message(F&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

bool mentions(const std::string& message, const std::string& needle) {
  return message.find(needle) != std::string::npos;
}

bool has_default(const RunConfig& cfg, const std::string& entry) {
  for (const std::string& d : cfg.defaulted)
    if (d == entry) return true;
  return false;
}

// Sets (or clears, when value is null) an environment variable for one
// scope and restores the previous state on exit.
struct EnvGuard {
  std::string name;
  std::string old;
  bool had = false;
  EnvGuard(const char* n, const char* value) : name(n) {
    if (const char* v = std::getenv(n)) {
      had = true;
      old = v;
    }
    if (value)
      ::setenv(n, value, 1);
    else
      ::unsetenv(n);
  }
  ~EnvGuard() {
    if (had)
      ::setenv(name.c_str(), old.c_str(), 1);
    else
      ::unsetenv(name.c_str());
  }
};

const char* kMinimalConfig = R"(dataset: synthetic:mixed,16,count=2,seed=3
codecs:
  - id: toy
attacks:
  - kind: ifgsm
)";

}  // namespace

TEST_CASE("minimal config fills documented defaults and logs them",
          "[cli]") {
  TempDir tmp;
  const std::string path = write_config(tmp, "min.yaml", kMinimalConfig);
  const RunConfig cfg = parse_config(path, {}, /*use_env=*/false);

  CHECK(cfg.dataset == "synthetic:mixed,16,count=2,seed=3");
  CHECK(cfg.output_dir == "nrb-out");
  CHECK(cfg.workers == 1);
  CHECK(cfg.seed == 1);

  REQUIRE(cfg.metrics.size() == 3);
  CHECK(cfg.metrics[0] == Metric::Mse);
  CHECK(cfg.metrics[1] == Metric::Psnr);
  CHECK(cfg.metrics[2] == Metric::MsSsim);

  REQUIRE(cfg.objectives.size() == 1);
  CHECK(cfg.objectives[0].kind == ObjectiveKind::ReconstructionL2);
  CHECK_FALSE(cfg.objectives[0].y_only);
  REQUIRE(cfg.defenses.size() == 1);
  CHECK(cfg.defenses[0] == DefenseKind::Identity);

  REQUIRE(cfg.codecs.size() == 1);
  CHECK(cfg.codecs[0].id == "toy");
  CHECK(cfg.codecs[0].family == CodecFamily::Factorized);
  CHECK(cfg.codecs[0].latent_channels == 8);
  CHECK(cfg.codecs[0].lambda == 0.05);
  CHECK(cfg.codecs[0].init_seed == 1);
  CHECK(cfg.codecs[0].variant == "lam0.05");

  REQUIRE(cfg.attacks.size() == 1);
  CHECK(cfg.attacks[0].kind == AttackKind::Ifgsm);
  CHECK(cfg.attacks[0].preset == 0);
  const AttackConfig base = attack_preset(0);
  CHECK(cfg.attacks[0].cfg.epsilon == base.epsilon);
  CHECK(cfg.attacks[0].cfg.steps == base.steps);
  CHECK(cfg.attacks[0].cfg.lr == base.lr);
  CHECK(cfg.attacks[0].cfg.query_budget == base.query_budget);

  // Every filled-in value is recorded for the run metadata.
  CHECK(has_default(cfg, "output_dir = nrb-out"));
  CHECK(has_default(cfg, "workers = 1"));
  CHECK(has_default(cfg, "seed = 1"));
  CHECK(has_default(cfg, "metrics = [mse, psnr, ms_ssim]"));
  CHECK(has_default(cfg, "objectives = [rec_l2]"));
  CHECK(has_default(cfg, "defenses = [identity]"));
  CHECK(has_default(cfg, "attacks.0.preset = 0"));
  bool train_logged = false;
  for (const std::string& d : cfg.defaulted)
    if (d.rfind("train = ", 0) == 0) train_logged = true;
  CHECK(train_logged);
}

TEST_CASE("unknown and mistyped config keys fail naming the exact path",
          "[cli]") {
  TempDir tmp;

  const std::string top = write_config(tmp, "top.yaml",
                                       "datasett: x\n"
                                       "codecs:\n  - id: a\n"
                                       "attacks:\n  - kind: pgd\n");
  CHECK(mentions(error_message([&] { parse_config(top, {}, false); }),
                 "unknown key 'datasett'"));

  const std::string atk = write_config(tmp, "atk.yaml",
                                       "dataset: d\n"
                                       "attack:\n  epsilonn: 0.1\n"
                                       "codecs:\n  - id: a\n"
                                       "attacks:\n  - kind: pgd\n");
  CHECK(mentions(error_message([&] { parse_config(atk, {}, false); }),
                 "unknown key 'attack.epsilonn'"));

  const std::string codec = write_config(tmp, "codec.yaml",
                                         "dataset: d\n"
                                         "codecs:\n"
                                         "  - id: a\n"
                                         "    familyy: hyperprior\n"
                                         "attacks:\n  - kind: pgd\n");
  CHECK(mentions(error_message([&] { parse_config(codec, {}, false); }),
                 "unknown key 'codecs.0.familyy'"));

  const std::string entry = write_config(tmp, "entry.yaml",
                                         "dataset: d\n"
                                         "codecs:\n  - id: a\n"
                                         "attacks:\n"
                                         "  - kind: pgd\n"
                                         "    warmup: 3\n");
  CHECK(mentions(error_message([&] { parse_config(entry, {}, false); }),
                 "unknown key 'attacks.0.warmup'"));

  const std::string train = write_config(tmp, "train.yaml",
                                         "dataset: d\n"
                                         "codecs:\n  - id: a\n"
                                         "attacks:\n  - kind: pgd\n"
                                         "train:\n  momentum: 0.9\n");
  CHECK(mentions(error_message([&] { parse_config(train, {}, false); }),
                 "unknown key 'train.momentum'"));

  const std::string typed = write_config(tmp, "typed.yaml",
                                         "dataset: d\n"
                                         "workers: [1, 2]\n"
                                         "codecs:\n  - id: a\n"
                                         "attacks:\n  - kind: pgd\n");
  const std::string msg = error_message([&] { parse_config(typed, {}, false); });
  CHECK(mentions(msg, "workers"));
  CHECK(mentions(msg, "wrong type"));

  CHECK(mentions(
      error_message([&] { parse_config(tmp.file("absent.yaml"), {}, false); }),
      "cannot parse"));
}

TEST_CASE("config validation rejects bad values", "[cli]") {
  TempDir tmp;
  auto expect = [&](const std::string& name, const std::string& body,
                    const std::string& needle) {
    const std::string p = write_config(tmp, name, body);
    const std::string msg = error_message([&] { parse_config(p, {}, false); });
    INFO(name << ": " << msg);
    CHECK(mentions(msg, needle));
  };

  expect("no_codecs.yaml", "dataset: d\nattacks:\n  - kind: pgd\n",
         "'codecs' is required");
  expect("empty_codecs.yaml",
         "dataset: d\ncodecs: []\nattacks:\n  - kind: pgd\n",
         "non-empty list");
  expect("no_id.yaml",
         "dataset: d\ncodecs:\n  - lambda: 0.1\nattacks:\n  - kind: pgd\n",
         "codecs.0.id' is required");
  expect("dup_id.yaml",
         "dataset: d\ncodecs:\n  - id: a\n  - id: a\n"
         "attacks:\n  - kind: pgd\n",
         "duplicate codec id 'a'");
  expect("bad_family.yaml",
         "dataset: d\ncodecs:\n  - id: a\n    family: vae\n"
         "attacks:\n  - kind: pgd\n",
         "codecs.0.family': unknown family 'vae'");
  expect("bad_lambda.yaml",
         "dataset: d\ncodecs:\n  - id: a\n    lambda: 0\n"
         "attacks:\n  - kind: pgd\n",
         "lambda' must be positive");
  expect("bad_params.yaml",
         "dataset: d\ncodecs:\n  - id: a\n    params: /nonexistent/p.bin\n"
         "attacks:\n  - kind: pgd\n",
         "codecs.0.params': file not found");
  expect("no_attacks.yaml", "dataset: d\ncodecs:\n  - id: a\n",
         "'attacks' is required");
  expect("no_kind.yaml",
         "dataset: d\ncodecs:\n  - id: a\nattacks:\n  - preset: 0\n",
         "attacks.0.kind' is required");
  expect("bad_kind.yaml",
         "dataset: d\ncodecs:\n  - id: a\nattacks:\n  - kind: rainbow\n",
         "unknown attack 'rainbow'");
  expect("bad_preset.yaml",
         "dataset: d\ncodecs:\n  - id: a\n"
         "attacks:\n  - kind: pgd\n    preset: 9\n",
         "unknown preset 9");
  expect("neg_eps.yaml",
         "dataset: d\ncodecs:\n  - id: a\n"
         "attacks:\n  - kind: pgd\n    epsilon: -0.1\n",
         "epsilon must be >= 0");
  expect("bad_metric.yaml",
         "dataset: d\nmetrics: [psnr, vmaf]\ncodecs:\n  - id: a\n"
         "attacks:\n  - kind: pgd\n",
         "unknown metric 'vmaf'");
  expect("bad_objective.yaml",
         "dataset: d\nobjectives: [rec_l3]\ncodecs:\n  - id: a\n"
         "attacks:\n  - kind: pgd\n",
         "unknown objective 'rec_l3'");
  expect("bad_defense.yaml",
         "dataset: d\ndefenses: [shield]\ncodecs:\n  - id: a\n"
         "attacks:\n  - kind: pgd\n",
         "unknown defense 'shield'");
  expect("bad_workers.yaml",
         "dataset: d\nworkers: 0\ncodecs:\n  - id: a\n"
         "attacks:\n  - kind: pgd\n",
         "'workers' must be >= 1");
  expect("bad_train.yaml",
         "dataset: d\ncodecs:\n  - id: a\nattacks:\n  - kind: pgd\n"
         "train:\n  steps: 0\n",
         "'train.steps' must be >= 1");
}

TEST_CASE("dotted overrides reach nested keys and split known lists",
          "[cli]") {
  TempDir tmp;
  const std::string path = write_config(tmp, "base.yaml",
                                        "dataset: d\n"
                                        "codecs:\n"
                                        "  - id: a\n"
                                        "  - id: b\n"
                                        "attacks:\n"
                                        "  - kind: pgd\n"
                                        "  - kind: gaussian\n");

  SECTION("shared attack section override reaches every entry") {
    const RunConfig cfg =
        parse_config(path, {"attack.epsilon=0.062"}, false);
    REQUIRE(cfg.attacks.size() == 2);
    CHECK(cfg.attacks[0].cfg.epsilon == 0.062);
    CHECK(cfg.attacks[1].cfg.epsilon == 0.062);
  }

  SECTION("numeric path components index sequences") {
    const RunConfig cfg =
        parse_config(path, {"codecs.1.lambda=0.125"}, false);
    CHECK(cfg.codecs[0].lambda == 0.05);
    CHECK(cfg.codecs[1].lambda == 0.125);
    CHECK(cfg.codecs[1].variant == "lam0.125");
    CHECK(mentions(
        error_message(
            [&] { parse_config(path, {"codecs.5.lambda=0.1"}, false); }),
        "index 5 out of range"));
  }

  SECTION("list-valued keys split on commas, scalars keep theirs") {
    const RunConfig cfg = parse_config(
        path,
        {"defenses=identity,flip,random_roll", "metrics=psnr",
         "dataset=synthetic:checkerboard,32,count=4"},
        false);
    REQUIRE(cfg.defenses.size() == 3);
    CHECK(cfg.defenses[0] == DefenseKind::Identity);
    CHECK(cfg.defenses[1] == DefenseKind::Flip);
    CHECK(cfg.defenses[2] == DefenseKind::RandomRoll);
    REQUIRE(cfg.metrics.size() == 1);
    CHECK(cfg.metrics[0] == Metric::Psnr);
    CHECK(cfg.dataset == "synthetic:checkerboard,32,count=4");
  }

  SECTION("malformed overrides are rejected") {
    CHECK(mentions(
        error_message([&] { parse_config(path, {"no_equals"}, false); }),
        "key.path=value"));
    CHECK(mentions(
        error_message([&] { parse_config(path, {"=value"}, false); }),
        "key.path=value"));
    CHECK(mentions(
        error_message([&] { parse_config(path, {"a..b=1"}, false); }),
        "empty component"));
  }

  SECTION("overrides can still introduce unknown keys, which fail") {
    CHECK(mentions(
        error_message([&] { parse_config(path, {"seeed=3"}, false); }),
        "unknown key 'seeed'"));
  }
}

TEST_CASE("environment variables sit between file and flags", "[cli]") {
  TempDir tmp;
  const std::string path = write_config(tmp, "env.yaml",
                                        "dataset: d\n"
                                        "output_dir: from-file\n"
                                        "workers: 1\n"
                                        "codecs:\n  - id: a\n"
                                        "attacks:\n  - kind: pgd\n");

  EnvGuard out_guard("NRB_OUTPUT_DIR", "env-out");
  EnvGuard workers_guard("NRB_WORKERS", "3");

  const RunConfig with_env = parse_config(path, {}, /*use_env=*/true);
  CHECK(with_env.output_dir == "env-out");
  CHECK(with_env.workers == 3);

  const RunConfig with_flags = parse_config(
      path, {"output_dir=cli-out", "workers=2"}, /*use_env=*/true);
  CHECK(with_flags.output_dir == "cli-out");
  CHECK(with_flags.workers == 2);

  const RunConfig no_env = parse_config(path, {}, /*use_env=*/false);
  CHECK(no_env.output_dir == "from-file");
  CHECK(no_env.workers == 1);
}

TEST_CASE("codec instantiation honors seeds and parameter files", "[cli]") {
  TempDir tmp;
  const NdArray x = Rng(4).uniform_array({8, 8, 3}, 0.05, 0.95);

  SECTION("seeded initialization matches direct construction") {
    const std::string path = write_config(tmp, "seeded.yaml",
                                          "dataset: d\n"
                                          "codecs:\n"
                                          "  - id: a\n"
                                          "    family: hyperprior\n"
                                          "    latent_channels: 2\n"
                                          "    lambda: 0.02\n"
                                          "    seed: 7\n"
                                          "attacks:\n  - kind: pgd\n");
    const RunConfig cfg = parse_config(path, {}, false);
    const auto codecs = instantiate_codecs(cfg);
    REQUIRE(codecs.size() == 1);
    CHECK(codecs[0].config.id == "a");
    CHECK(codecs[0].codec->spec().family == CodecFamily::Hyperprior);
    CHECK(codecs[0].codec->spec().latent_channels == 2);

    const ToyCodec direct(CodecSpec{CodecFamily::Hyperprior, 2, 0.02}, 7);
    const CodecResult got = codecs[0].codec->forward(x, QuantMode::Hard, 9);
    const CodecResult want = direct.forward(x, QuantMode::Hard, 9);
    CHECK(got.reconstruction.data == want.reconstruction.data);
    CHECK(got.bpp == want.bpp);
  }

  SECTION("parameter files win over configured architecture") {
    ToyCodec saved(CodecSpec{CodecFamily::Hyperprior, 3, 0.08}, 11);
    const std::string params = tmp.file("saved.nrbcodec");
    save_codec(saved, params);
    // The file stores float32 parameters; snap the reference codec so the
    // comparison below is bitwise.
    snap_params_to_f32(saved);

    const std::string path = write_config(
        tmp, "fromfile.yaml",
        "dataset: d\n"
        "codecs:\n"
        "  - id: file\n"
        "    params: " + params + "\n"
        "attacks:\n  - kind: pgd\n");
    const RunConfig cfg = parse_config(path, {}, false);
    const auto codecs = instantiate_codecs(cfg);
    REQUIRE(codecs.size() == 1);
    CHECK(codecs[0].config.id == "file");
    CHECK(codecs[0].codec->spec().family == CodecFamily::Hyperprior);
    CHECK(codecs[0].codec->spec().latent_channels == 3);
    CHECK(codecs[0].codec->spec().lambda == 0.08);

    const CodecResult got = codecs[0].codec->forward(x, QuantMode::Hard, 9);
    const CodecResult want = saved.forward(x, QuantMode::Hard, 9);
    CHECK(got.reconstruction.data == want.reconstruction.data);
    CHECK(got.bits == want.bits);
  }
}

TEST_CASE("run metadata records the resolved configuration", "[cli]") {
  TempDir tmp;
  const std::string path = write_config(tmp, "meta.yaml", kMinimalConfig);
  const RunConfig cfg = parse_config(path, {}, false);
  const nlohmann::json j = run_meta_json(cfg);

  CHECK(j.at("format") == "nrbench-results");
  CHECK(j.at("format_version") == 1);
  CHECK(j.at("dataset") == cfg.dataset);
  CHECK(j.at("csv_columns").get<std::vector<std::string>>() ==
        csv_columns());
  CHECK(j.at("codecs").size() == 1);
  CHECK(j.at("codecs")[0].at("variant") == "lam0.05");
  CHECK(j.at("attacks")[0].at("kind") == "ifgsm");
  CHECK(j.at("attacks")[0].at("epsilon") == attack_preset(0).epsilon);
  CHECK(j.at("defaulted").get<std::vector<std::string>>() == cfg.defaulted);
}

TEST_CASE("selftest suite passes and reports one line per check", "[cli]") {
  std::ostringstream out;
  const SelftestResult res = run_selftest(out);
  INFO(out.str());
  CHECK(res.ok());
  CHECK(res.failed == 0);
  CHECK(res.passed >= 5);
  CHECK(mentions(out.str(), "tape gradients match finite differences: ok"));
  CHECK_FALSE(mentions(out.str(), "FAIL"));
}
