// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
#include "cycletrack/model.hpp"

#include <json.hpp>

#include <fstream>
#include <utility>
#include <vector>

using nlohmann::json;

namespace cycletrack {

namespace {

json encoder_config_to_json(const EncoderConfig& c) {
  return {{"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},
          {"depth", c.depth},
          {"num_heads", c.num_heads},
          {"template_res", c.template_res},
          {"search_res", c.search_res},
          {"max_context_tokens", c.max_context_tokens},
          {"mlp_ratio", c.mlp_ratio},
          {"saliency_direction",
           c.saliency_direction == SaliencyDirection::TemplateToSearch
               ? "template_to_search"
               : "search_to_template"}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.patch_size = j.at("patch_size");
  c.embed_dim = j.at("embed_dim");
  c.depth = j.at("depth");
  c.num_heads = j.at("num_heads");
  c.template_res = j.at("template_res");
  c.search_res = j.at("search_res");
  c.max_context_tokens = j.at("max_context_tokens");
  c.mlp_ratio = j.at("mlp_ratio");
  c.saliency_direction = j.at("saliency_direction") == "search_to_template"
                             ? SaliencyDirection::SearchToTemplate
                             : SaliencyDirection::TemplateToSearch;
  return c;
}

}  // namespace

template <typename S>
void save_checkpoint(const TrackModel<S>& model, const std::string& path,
                     const CheckpointMeta& meta) {
  json header;
  header["version"] = kCheckpointVersion;
  header["encoder"] = encoder_config_to_json(model.cfg);
  header["pix_mean"] = model.pix_mean;
  header["pix_std"] = model.pix_std;
  header["epoch"] = meta.epoch;
  header["optimizer_step"] = meta.optimizer_step;
  header["run_config"] = meta.run_config;
  header["has_optimizer_state"] = meta.has_optimizer_state;

  std::vector<std::pair<std::string, const ad::Mat<S>*>> tensors;
  for (const auto& e : model.params.entries) {
    tensors.emplace_back(e.name, &e.value);
    if (meta.has_optimizer_state) {
      tensors.emplace_back("opt.m." + e.name, &e.adam_m);
      tensors.emplace_back("opt.v." + e.name, &e.adam_v);
    }
  }

  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    dir.push_back({{"name", name},
                   {"rows", t->rows()},
                   {"cols", t->cols()},
                   {"offset", offset}});
    offset += static_cast<std::uint64_t>(t->size()) * sizeof(float);
  }
  header["tensors"] = dir;

  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataErrorKind::MissingFile, "cannot write " + path);
  const std::uint32_t magic = kCheckpointMagic;
  const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&magic), 4);
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  std::vector<float> buf;
  for (const auto& [name, t] : tensors) {
    buf.resize(static_cast<std::size_t>(t->size()));
    // column-major traversal matches Eigen's internal layout
    for (Eigen::Index i = 0; i < t->size(); ++i)
      buf[static_cast<std::size_t>(i)] = static_cast<float>(t->data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError(DataErrorKind::MissingFile, "write failed: " + path);
}

template <typename S>
TrackModel<S> load_checkpoint(const std::string& path, CheckpointMeta* meta_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError(DataErrorKind::MissingFile, "cannot open checkpoint " + path);
  std::uint32_t magic = 0, hlen = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in || magic != kCheckpointMagic)
    throw DataError(DataErrorKind::BadFormat, "not a checkpoint: " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded() || header.value("version", 0u) != kCheckpointVersion)
    throw DataError(DataErrorKind::BadFormat, "bad checkpoint header: " + path);

  TrackModel<S> model =
      TrackModel<S>::create(encoder_config_from_json(header.at("encoder")), 0);
  model.pix_mean = header.at("pix_mean");
  model.pix_std = header.at("pix_std");

  CheckpointMeta meta;
  meta.epoch = header.value("epoch", -1);
  meta.optimizer_step = header.value("optimizer_step", 0l);
  meta.run_config = header.value("run_config", "");
  meta.has_optimizer_state = header.value("has_optimizer_state", false);

  const std::streampos blob_start = in.tellg();
  std::vector<float> buf;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    const Eigen::Index rows = t.at("rows");
    const Eigen::Index cols = t.at("cols");
    const std::uint64_t offset = t.at("offset");

    std::string base = name;
    ad::Mat<S>* dst = nullptr;
    if (name.rfind("opt.m.", 0) == 0) {
      base = name.substr(6);
      if (!meta.has_optimizer_state) continue;
      dst = &model.params[model.params.by_name.at(base)].adam_m;
    } else if (name.rfind("opt.v.", 0) == 0) {
      base = name.substr(6);
      if (!meta.has_optimizer_state) continue;
      dst = &model.params[model.params.by_name.at(base)].adam_v;
    } else {
      auto it = model.params.by_name.find(base);
      if (it == model.params.by_name.end())
        throw DataError(DataErrorKind::BadFormat, "unknown tensor " + name);
      dst = &model.params[it->second].value;
    }
    if (dst->rows() != rows || dst->cols() != cols)
      throw DataError(DataErrorKind::BadFormat, "tensor shape mismatch: " + name);
    buf.resize(static_cast<std::size_t>(rows * cols));
    in.seekg(blob_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in)
      throw DataError(DataErrorKind::BadFormat, "truncated checkpoint " + path);
    for (Eigen::Index i = 0; i < dst->size(); ++i)
      dst->data()[i] = static_cast<S>(buf[static_cast<std::size_t>(i)]);
  }
  if (meta_out) *meta_out = meta;
  return model;
}

template void save_checkpoint<float>(const TrackModel<float>&,
                                     const std::string&, const CheckpointMeta&);
template void save_checkpoint<double>(const TrackModel<double>&,
                                      const std::string&, const CheckpointMeta&);
template TrackModel<float> load_checkpoint<float>(const std::string&,
                                                  CheckpointMeta*);
template TrackModel<double> load_checkpoint<double>(const std::string&,
                                                    CheckpointMeta*);

}  // namespace cycletrack
