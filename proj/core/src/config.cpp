// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include "cycletrack/config.hpp"

#include "cycletrack/errors.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>

using nlohmann::json;

namespace cycletrack {

namespace {

json to_tree(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["variant"] = c.variant;
  j["encoder"] = {{"patch_size", c.encoder.patch_size},
                  {"embed_dim", c.encoder.embed_dim},
                  {"depth", c.encoder.depth},
                  {"num_heads", c.encoder.num_heads},
                  {"template_res", c.encoder.template_res},
                  {"search_res", c.encoder.search_res},
                  {"max_context_tokens", c.encoder.max_context_tokens},
                  {"mlp_ratio", c.encoder.mlp_ratio}};
  j["train"] = {{"total_epochs", c.train.total_epochs},
                {"steps_per_epoch", c.train.steps_per_epoch},
                {"forward_length", c.train.forward_length},
                {"backward_steps", c.train.backward_steps},
                {"lr_backbone", c.train.lr_backbone},
                {"lr_rest", c.train.lr_rest},
                {"lr_decay_epoch", c.train.lr_decay_epoch},
                {"lr_decay_factor", c.train.lr_decay_factor},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size}};
  j["dca"] = {{"token_length", c.train.dca.token_length},
              {"switch_epoch", c.train.dca.switch_epoch},
              {"noise_exclude_topk", c.train.dca.noise_exclude_topk},
              {"noise_loss_weight", c.train.dca.noise_loss_weight},
              {"saliency_direction",
               c.encoder.saliency_direction == SaliencyDirection::TemplateToSearch
                   ? "template_to_search"
                   : "search_to_template"}};
  j["crop"] = {{"template_factor", c.crop.template_factor},
               {"search_factor", c.crop.search_factor},
               {"backward_search_scale", c.crop.backward_search_scale}};
  j["loss"] = {{"lambda1", c.loss.lambda1}, {"lambda2", c.loss.lambda2}};
  return j;
}

void from_tree(RunConfig& c, const json& j) {
  auto get = [&](const json& obj, const char* key, auto& field) {
    if (obj.contains(key)) field = obj.at(key).get<std::decay_t<decltype(field)>>();
  };
  get(j, "seed", c.seed);
  get(j, "threads", c.threads);
  get(j, "variant", c.variant);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    get(e, "patch_size", c.encoder.patch_size);
    get(e, "embed_dim", c.encoder.embed_dim);
    get(e, "depth", c.encoder.depth);
    get(e, "num_heads", c.encoder.num_heads);
    get(e, "template_res", c.encoder.template_res);
    get(e, "search_res", c.encoder.search_res);
    get(e, "max_context_tokens", c.encoder.max_context_tokens);
    get(e, "mlp_ratio", c.encoder.mlp_ratio);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    get(t, "total_epochs", c.train.total_epochs);
    get(t, "steps_per_epoch", c.train.steps_per_epoch);
    get(t, "forward_length", c.train.forward_length);
    get(t, "backward_steps", c.train.backward_steps);
    get(t, "lr_backbone", c.train.lr_backbone);
    get(t, "lr_rest", c.train.lr_rest);
    get(t, "lr_decay_epoch", c.train.lr_decay_epoch);
    get(t, "lr_decay_factor", c.train.lr_decay_factor);
    get(t, "weight_decay", c.train.weight_decay);
    get(t, "batch_size", c.train.batch_size);
  }
  if (j.contains("dca")) {
    const auto& d = j.at("dca");
    get(d, "token_length", c.train.dca.token_length);
    get(d, "switch_epoch", c.train.dca.switch_epoch);
    get(d, "noise_exclude_topk", c.train.dca.noise_exclude_topk);
    get(d, "noise_loss_weight", c.train.dca.noise_loss_weight);
    if (d.contains("saliency_direction")) {
      const std::string s = d.at("saliency_direction");
      if (s == "template_to_search")
        c.encoder.saliency_direction = SaliencyDirection::TemplateToSearch;
      else if (s == "search_to_template")
        c.encoder.saliency_direction = SaliencyDirection::SearchToTemplate;
      else
        throw ConfigError("dca.saliency_direction: unknown value '" + s + "'");
    }
  }
  if (j.contains("crop")) {
    const auto& cr = j.at("crop");
    get(cr, "template_factor", c.crop.template_factor);
    get(cr, "search_factor", c.crop.search_factor);
    get(cr, "backward_search_scale", c.crop.backward_search_scale);
  }
  if (j.contains("loss")) {
    get(j.at("loss"), "lambda1", c.loss.lambda1);
    get(j.at("loss"), "lambda2", c.loss.lambda2);
  }
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  // desk-scale schedule: ratios follow the 150-epoch recipe (decay 120/150,
  // switch 75/150) applied to the configured epoch count
  c.train.total_epochs = 20;
  c.train.steps_per_epoch = 200;
  c.train.lr_decay_epoch = -1;    // auto: 4/5 of total_epochs (16 for 20)
  c.train.dca.switch_epoch = -1;  // auto: half of total_epochs (10 for 20)
  return c;
}

void RunConfig::apply_paper_schedule() {
  train.total_epochs = 150;
  train.steps_per_epoch = 10000;
  train.lr_decay_epoch = 120;
  train.lr_backbone = 2.5e-5;
  train.lr_rest = 2.5e-4;
  train.weight_decay = 1e-4;
  train.batch_size = 8;
  train.dca.switch_epoch = 75;
  train.dca.token_length = 8;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  from_tree(*this, j);
}

void RunConfig::apply_override(const std::string& dotted_key,
                               const std::string& value) {
  json leaf;
  {
    json parsed = json::parse(value, nullptr, false);
    // bare words (e.g. variant names) arrive as strings
    leaf = parsed.is_discarded() ? json(value) : parsed;
  }
  json tree = leaf;
  std::string key = dotted_key;
  while (true) {
    const auto dot = key.rfind('.');
    if (dot == std::string::npos) {
      tree = json{{key, tree}};
      break;
    }
    tree = json{{key.substr(dot + 1), tree}};
    key = key.substr(0, dot);
  }
  try {
    from_tree(*this, tree);
  } catch (const json::exception& e) {
    throw ConfigError("bad override --" + dotted_key + "=" + value + ": " +
                      e.what());
  }
}

void RunConfig::apply_overrides(const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like section.key=value: " + a);
    std::string key = a.substr(0, eq);
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    apply_override(key, a.substr(eq + 1));
  }
}

void RunConfig::finalize() {
  if (train.lr_decay_epoch < 0)
    train.lr_decay_epoch = train.total_epochs * 4 / 5;
  if (train.dca.switch_epoch < 0)
    train.dca.switch_epoch = train.total_epochs / 2;
  encoder.validate();
  train.validate();
  if (crop.template_factor <= 1.0 || crop.search_factor <= 1.0)
    throw ConfigError("crop factors must be > 1");
  if (crop.backward_search_scale < 1.0)
    throw ConfigError("crop.backward_search_scale must be >= 1");
  if (loss.lambda1 < 0 || loss.lambda2 < 0)
    throw ConfigError("loss weights must be nonnegative");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (train.dca.token_length > encoder.max_context_tokens)
    throw ConfigError("dca.token_length exceeds encoder.max_context_tokens");
  (void)variant_from_name(variant);
}

std::string RunConfig::to_json_string(int indent) const {
  return to_tree(*this).dump(indent);
}

std::uint64_t resolve_seed(long long flag_seed, std::uint64_t config_seed) {
  if (flag_seed >= 0) return static_cast<std::uint64_t>(flag_seed);
  if (config_seed != 0) return config_seed;
  if (const char* env = std::getenv("CYCLETRACK_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("CYCLETRACK_SEED is not a number: " + std::string(env));
    }
  }
  return 0;
}

}  // namespace cycletrack
