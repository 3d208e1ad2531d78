// Copyright (c) the nrbench authors. All rights reserved.
//
// Use of this source code is governed by the Apache License, Version 2.0;
// see the LICENSE file in the repository root.

#ifndef NRB_CLI_CONFIG_HPP_
#define NRB_CLI_CONFIG_HPP_

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "nrb/attacks/attack.hpp"
#include "nrb/attacks/objective.hpp"
#include "nrb/bench/record.hpp"
#include "nrb/codecs/codec.hpp"
#include "nrb/codecs/params_io.hpp"
#include "nrb/core/error.hpp"
#include "nrb/defenses/defense.hpp"
#include "nrb/quality/scores.hpp"

namespace nrb {

struct CodecConfig {
  std::string id;
  CodecFamily family = CodecFamily::Factorized;
  int latent_channels = 8;
  double lambda = 0.05;
  std::string params_path;  // empty: seeded random initialization
  uint64_t init_seed = 1;
  std::string variant;  // rate-point tag; defaults to "lam<lambda>"
};

struct AttackEntry {
  AttackKind kind = AttackKind::Pgd;
  int preset = 0;
  AttackConfig cfg;
};

struct TrainSection {
  std::string data = "synthetic:mixed,64,count=8,seed=1";
  int steps = 300;
  double lr = 1e-3;
};

// Fully resolved run description. `defaulted` lists every key that was
// filled in rather than given, for logging and the run metadata file.
struct RunConfig {
  std::string dataset;
  std::string output_dir = "nrb-out";
  int workers = 1;
  uint64_t seed = 1;
  std::vector<Metric> metrics = {Metric::Mse, Metric::Psnr, Metric::MsSsim};
  std::vector<CodecConfig> codecs;
  std::vector<AttackEntry> attacks;
  std::vector<Objective> objectives = {{ObjectiveKind::ReconstructionL2,
                                        false}};
  std::vector<DefenseKind> defenses = {DefenseKind::Identity};
  TrainSection train;
  std::vector<std::string> defaulted;
};

namespace detail {

inline std::string yaml_type_name(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null: return "null";
    case YAML::NodeType::Scalar: return "scalar";
    case YAML::NodeType::Sequence: return "sequence";
    case YAML::NodeType::Map: return "map";
    default: return "undefined";
  }
}

inline void require_map(const YAML::Node& node, const std::string& path) {
  check(node.IsMap(), "config: '", path.empty() ? "<root>" : path,
        "' must be a map, got ", yaml_type_name(node));
}

// Strict schema: any key outside `allowed` is a hard error naming the
// full key path, so typos never silently fall back to defaults.
inline void require_keys(const YAML::Node& node, const std::string& path,
                         const std::set<std::string>& allowed) {
  require_map(node, path);
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key))
      fail("config: unknown key '", path.empty() ? key : path + "." + key,
           "'");
  }
}

template <typename T>
T get_as(const YAML::Node& node, const std::string& path) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    fail("config: key '", path, "' has the wrong type (",
         yaml_type_name(node), ")");
  }
}

template <typename T>
bool maybe_set(const YAML::Node& parent, const char* key,
               const std::string& path, T& out) {
  const YAML::Node n = parent[key];
  if (!n) return false;
  out = get_as<T>(n, path.empty() ? key : path + "." + key);
  return true;
}

// Accepts `key: value` and `key: [v1, v2]` alike; single scalars become
// singleton lists.
inline std::vector<std::string> as_string_list(const YAML::Node& node,
                                               const std::string& path) {
  std::vector<std::string> out;
  if (node.IsScalar()) {
    out.push_back(get_as<std::string>(node, path));
  } else if (node.IsSequence()) {
    for (size_t i = 0; i < node.size(); ++i)
      out.push_back(
          get_as<std::string>(node[i], path + "." + std::to_string(i)));
  } else {
    fail("config: key '", path, "' must be a string or list of strings");
  }
  return out;
}

inline const std::set<std::string>& attack_keys() {
  static const std::set<std::string> keys = {
      "epsilon",     "steps",       "lr",
      "query_budget", "nes_samples", "nes_sigma",
      "square_side_fraction", "gaussian_sigma"};
  return keys;
}

inline void overlay_attack(AttackConfig& cfg, const YAML::Node& node,
                           const std::string& path) {
  maybe_set(node, "epsilon", path, cfg.epsilon);
  maybe_set(node, "steps", path, cfg.steps);
  maybe_set(node, "lr", path, cfg.lr);
  maybe_set(node, "query_budget", path, cfg.query_budget);
  maybe_set(node, "nes_samples", path, cfg.nes_samples);
  maybe_set(node, "nes_sigma", path, cfg.nes_sigma);
  maybe_set(node, "square_side_fraction", path, cfg.square_side_fraction);
  maybe_set(node, "gaussian_sigma", path, cfg.gaussian_sigma);
}

// Dotted path navigation for overrides; numeric parts index sequences.
inline void apply_override(YAML::Node root, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  check(eq != std::string::npos && eq > 0,
        "override must look like key.path=value, got '", assignment, "'");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  std::vector<std::string> parts;
  size_t pos = 0;
  while (pos <= path.size()) {
    const size_t dot = path.find('.', pos);
    parts.push_back(
        path.substr(pos, dot == std::string::npos ? dot : dot - pos));
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  for (const std::string& p : parts)
    check(!p.empty(), "override path '", path, "' has an empty component");

  YAML::Node cur = root;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    const std::string& p = parts[i];
    const bool numeric =
        !p.empty() && std::all_of(p.begin(), p.end(), [](unsigned char c) {
          return std::isdigit(c);
        });
    if (numeric && cur.IsSequence()) {
      const size_t idx = std::stoul(p);
      check(idx < cur.size(), "override path '", path,
            "': index ", p, " out of range");
      cur.reset(cur[idx]);
    } else {
      cur.reset(cur[p]);
    }
  }

  // Only the known list-valued keys split on commas; scalars like
  // synthetic dataset specs keep their commas.
  static const std::set<std::string> list_keys = {"objectives", "defenses",
                                                  "metrics"};
  const std::string& leaf = parts.back();
  if (list_keys.count(leaf) && value.find(',') != std::string::npos) {
    YAML::Node seq(YAML::NodeType::Sequence);
    size_t vpos = 0;
    while (vpos <= value.size()) {
      const size_t comma = value.find(',', vpos);
      seq.push_back(value.substr(
          vpos, comma == std::string::npos ? comma : comma - vpos));
      if (comma == std::string::npos) break;
      vpos = comma + 1;
    }
    cur[leaf] = seq;
  } else {
    cur[leaf] = value;
  }
}

}  // namespace detail

// Parses and validates a run configuration. Precedence, lowest to highest:
// built-in defaults, config file, NRB_OUTPUT_DIR/NRB_WORKERS environment,
// dotted overrides. Unknown keys, wrong types, and dangling parameter-file
// references are hard errors naming the exact key path.
inline RunConfig parse_config(const std::string& path,
                              const std::vector<std::string>& overrides = {},
                              bool use_env = true) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    fail("config: cannot parse '", path, "': ", e.what());
  }
  detail::require_map(root, "");

  if (use_env) {
    if (const char* v = std::getenv("NRB_OUTPUT_DIR"); v && *v)
      root["output_dir"] = std::string(v);
    if (const char* v = std::getenv("NRB_WORKERS"); v && *v)
      root["workers"] = std::string(v);
  }
  for (const std::string& o : overrides) detail::apply_override(root, o);

  detail::require_keys(root, "",
                       {"dataset", "output_dir", "workers", "seed", "metrics",
                        "codecs", "attack", "attacks", "objectives",
                        "defenses", "train"});

  RunConfig cfg;
  auto defaulted = [&](const std::string& what) {
    cfg.defaulted.push_back(what);
  };

  if (!detail::maybe_set(root, "dataset", "", cfg.dataset))
    defaulted("dataset = <none>");
  if (!detail::maybe_set(root, "output_dir", "", cfg.output_dir))
    defaulted("output_dir = " + cfg.output_dir);
  if (!detail::maybe_set(root, "workers", "", cfg.workers))
    defaulted("workers = " + std::to_string(cfg.workers));
  check(cfg.workers >= 1, "config: key 'workers' must be >= 1");
  if (!detail::maybe_set(root, "seed", "", cfg.seed))
    defaulted("seed = " + std::to_string(cfg.seed));

  if (const YAML::Node n = root["metrics"]) {
    cfg.metrics.clear();
    for (const std::string& name : detail::as_string_list(n, "metrics")) {
      try {
        cfg.metrics.push_back(metric_from_name(name));
      } catch (const Error&) {
        fail("config: key 'metrics': unknown metric '", name, "'");
      }
    }
    check(!cfg.metrics.empty(), "config: key 'metrics' must not be empty");
  } else {
    defaulted("metrics = [mse, psnr, ms_ssim]");
  }

  // Codecs.
  {
    const YAML::Node list = root["codecs"];
    check(static_cast<bool>(list), "config: key 'codecs' is required");
    check(list.IsSequence() && list.size() > 0,
          "config: key 'codecs' must be a non-empty list");
    std::set<std::string> seen;
    for (size_t i = 0; i < list.size(); ++i) {
      const std::string cpath = "codecs." + std::to_string(i);
      detail::require_keys(list[i], cpath,
                           {"id", "family", "latent_channels", "lambda",
                            "params", "seed", "variant"});
      CodecConfig cc;
      check(detail::maybe_set(list[i], "id", cpath, cc.id) && !cc.id.empty(),
            "config: key '", cpath, ".id' is required");
      check(seen.insert(cc.id).second, "config: duplicate codec id '", cc.id,
            "'");
      std::string family;
      if (detail::maybe_set(list[i], "family", cpath, family)) {
        try {
          cc.family = family_from_name(family);
        } catch (const Error&) {
          fail("config: key '", cpath, ".family': unknown family '", family,
               "'");
        }
      }
      detail::maybe_set(list[i], "latent_channels", cpath,
                        cc.latent_channels);
      check(cc.latent_channels >= 1, "config: key '", cpath,
            ".latent_channels' must be >= 1");
      detail::maybe_set(list[i], "lambda", cpath, cc.lambda);
      check(cc.lambda > 0.0, "config: key '", cpath,
            ".lambda' must be positive");
      detail::maybe_set(list[i], "seed", cpath, cc.init_seed);
      if (detail::maybe_set(list[i], "params", cpath, cc.params_path))
        check(std::filesystem::exists(cc.params_path), "config: key '", cpath,
              ".params': file not found: ", cc.params_path);
      if (!detail::maybe_set(list[i], "variant", cpath, cc.variant)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "lam%.4g", cc.lambda);
        cc.variant = buf;
      }
      cfg.codecs.push_back(std::move(cc));
    }
  }

  // Attack defaults and entries.
  AttackConfig shared_defaults;  // overlaid on each entry's preset base
  bool have_shared = false;
  if (const YAML::Node n = root["attack"]) {
    detail::require_keys(n, "attack", detail::attack_keys());
    have_shared = true;
  }
  {
    const YAML::Node list = root["attacks"];
    check(static_cast<bool>(list), "config: key 'attacks' is required");
    check(list.IsSequence() && list.size() > 0,
          "config: key 'attacks' must be a non-empty list");
    for (size_t i = 0; i < list.size(); ++i) {
      const std::string apath = "attacks." + std::to_string(i);
      std::set<std::string> allowed = detail::attack_keys();
      allowed.insert("kind");
      allowed.insert("preset");
      detail::require_keys(list[i], apath, allowed);
      AttackEntry entry;
      std::string kind;
      check(detail::maybe_set(list[i], "kind", apath, kind),
            "config: key '", apath, ".kind' is required");
      try {
        entry.kind = attack_from_name(kind);
      } catch (const Error&) {
        fail("config: key '", apath, ".kind': unknown attack '", kind, "'");
      }
      if (!detail::maybe_set(list[i], "preset", apath, entry.preset))
        defaulted(apath + ".preset = 0");
      try {
        entry.cfg = attack_preset(entry.preset);
      } catch (const Error&) {
        fail("config: key '", apath, ".preset': unknown preset ",
             entry.preset);
      }
      if (have_shared)
        detail::overlay_attack(entry.cfg, root["attack"], "attack");
      detail::overlay_attack(entry.cfg, list[i], apath);
      check(entry.cfg.epsilon >= 0.0, "config: key '", apath,
            "': epsilon must be >= 0");
      check(entry.cfg.steps >= 0, "config: key '", apath,
            "': steps must be >= 0");
      cfg.attacks.push_back(entry);
    }
  }

  if (const YAML::Node n = root["objectives"]) {
    cfg.objectives.clear();
    for (const std::string& name :
         detail::as_string_list(n, "objectives")) {
      try {
        cfg.objectives.push_back(objective_from_name(name));
      } catch (const Error&) {
        fail("config: key 'objectives': unknown objective '", name, "'");
      }
    }
    check(!cfg.objectives.empty(),
          "config: key 'objectives' must not be empty");
  } else {
    defaulted("objectives = [rec_l2]");
  }

  if (const YAML::Node n = root["defenses"]) {
    cfg.defenses.clear();
    for (const std::string& name : detail::as_string_list(n, "defenses")) {
      try {
        cfg.defenses.push_back(defense_from_name(name));
      } catch (const Error&) {
        fail("config: key 'defenses': unknown defense '", name, "'");
      }
    }
    check(!cfg.defenses.empty(), "config: key 'defenses' must not be empty");
  } else {
    defaulted("defenses = [identity]");
  }

  if (const YAML::Node n = root["train"]) {
    detail::require_keys(n, "train", {"data", "steps", "lr"});
    detail::maybe_set(n, "data", "train", cfg.train.data);
    detail::maybe_set(n, "steps", "train", cfg.train.steps);
    detail::maybe_set(n, "lr", "train", cfg.train.lr);
    check(cfg.train.steps >= 1, "config: key 'train.steps' must be >= 1");
    check(cfg.train.lr > 0.0, "config: key 'train.lr' must be positive");
  } else {
    defaulted("train = {data = " + cfg.train.data +
              ", steps = " + std::to_string(cfg.train.steps) + ", lr = 1e-3}");
  }

  return cfg;
}

// Owning codec instances built per the config: trained parameters when a
// file is referenced, seeded random initialization otherwise.
struct InstantiatedCodec {
  CodecConfig config;
  std::shared_ptr<ToyCodec> codec;
};

inline std::vector<InstantiatedCodec> instantiate_codecs(
    const RunConfig& cfg) {
  std::vector<InstantiatedCodec> out;
  for (const CodecConfig& cc : cfg.codecs) {
    InstantiatedCodec ic;
    ic.config = cc;
    if (!cc.params_path.empty()) {
      ic.codec = std::make_shared<ToyCodec>(load_codec(cc.params_path));
      // The file's architecture wins; id/variant stay as configured.
    } else {
      const CodecSpec spec{cc.family, cc.latent_channels, cc.lambda};
      ic.codec = std::make_shared<ToyCodec>(spec, cc.init_seed);
    }
    out.push_back(std::move(ic));
  }
  return out;
}

// Machine-readable companion of a result set: resolved configuration plus
// format identifiers, so results remain interpretable on their own.
inline nlohmann::json run_meta_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["format"] = "nrbench-results";
  j["format_version"] = 1;
  j["dataset"] = cfg.dataset;
  j["output_dir"] = cfg.output_dir;
  j["workers"] = cfg.workers;
  j["seed"] = cfg.seed;
  j["metrics"] = nlohmann::json::array();
  for (Metric m : cfg.metrics) j["metrics"].push_back(metric_name(m));
  j["codecs"] = nlohmann::json::array();
  for (const CodecConfig& c : cfg.codecs) {
    nlohmann::json cj;
    cj["id"] = c.id;
    cj["family"] = family_name(c.family);
    cj["latent_channels"] = c.latent_channels;
    cj["lambda"] = c.lambda;
    cj["variant"] = c.variant;
    cj["params"] = c.params_path;
    cj["seed"] = c.init_seed;
    j["codecs"].push_back(cj);
  }
  j["attacks"] = nlohmann::json::array();
  for (const AttackEntry& a : cfg.attacks) {
    nlohmann::json aj;
    aj["kind"] = attack_name(a.kind);
    aj["preset"] = a.preset;
    aj["epsilon"] = a.cfg.epsilon;
    aj["steps"] = a.cfg.steps;
    aj["lr"] = a.cfg.lr;
    aj["query_budget"] = a.cfg.query_budget;
    aj["nes_samples"] = a.cfg.nes_samples;
    aj["nes_sigma"] = a.cfg.nes_sigma;
    aj["square_side_fraction"] = a.cfg.square_side_fraction;
    aj["gaussian_sigma"] = a.cfg.gaussian_sigma;
    j["attacks"].push_back(aj);
  }
  j["objectives"] = nlohmann::json::array();
  for (const Objective& o : cfg.objectives)
    j["objectives"].push_back(objective_name(o));
  j["defenses"] = nlohmann::json::array();
  for (DefenseKind d : cfg.defenses) j["defenses"].push_back(defense_name(d));
  j["train"] = {{"data", cfg.train.data},
                {"steps", cfg.train.steps},
                {"lr", cfg.train.lr}};
  j["defaulted"] = cfg.defaulted;
  j["csv_columns"] = csv_columns();
  return j;
}

}  // namespace nrb

#endif  // NRB_CLI_CONFIG_HPP_
