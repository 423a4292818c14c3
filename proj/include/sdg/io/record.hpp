#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sdg/diffusion/pipeline.hpp"
#include "sdg/io/tensor_dump.hpp"

namespace sdg::io {

/// Which maps to export. Empty lists select all layers and every content
/// token (positions 1..content_len of the recorded key layout).
struct AttentionFilter {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> layers;
};

struct AttentionDump {
  std::size_t layer = 0;
  std::size_t step = 0;
  std::size_t timestep = 0;
  std::vector<std::size_t> tokens;
  Tensor<float> maps;  // (tokens, res, res), head-averaged
};

inline std::vector<AttentionDump> record_attention(const diffusion::GenerationRecord& rec,
                                                   const AttentionFilter& filter = {}) {
  std::vector<AttentionDump> out;
  for (const auto& snap : rec.trace.snapshots)
    for (std::size_t layer = 0; layer < snap.layers.size(); ++layer) {
      if (!filter.layers.empty() &&
          std::find(filter.layers.begin(), filter.layers.end(), layer) == filter.layers.end())
        continue;
      const Tensor<float> avg = attention::head_average(snap.layers[layer]);  // (hw, l)
      const std::size_t hw = avg.dim(0), l = avg.dim(1);
      const auto res = static_cast<std::size_t>(std::lround(std::sqrt(double(hw))));
      require(res * res == hw, ErrorCode::ShapeMismatch, "attention map is not square");
      AttentionDump d{layer, snap.step, snap.timestep, filter.tokens, {}};
      if (d.tokens.empty())
        for (std::size_t t = 1; t <= rec.trace.content_len && t < l; ++t) d.tokens.push_back(t);
      for (std::size_t t : d.tokens)
        require(t < l, ErrorCode::ShapeMismatch,
                "token column " + std::to_string(t) + " outside the " + std::to_string(l) + "-row context");
      d.maps = Tensor<float>({d.tokens.size(), res, res});
      for (std::size_t k = 0; k < d.tokens.size(); ++k)
        for (std::size_t p = 0; p < hw; ++p) d.maps[k * hw + p] = avg.at(p, d.tokens[k]);
      out.push_back(std::move(d));
    }
  return out;
}

struct RecordFiles {
  std::string image;           // relative path written by the caller, may be empty
  bool dump_attention = false;
  AttentionFilter filter;
  bool dump_latents = false;
};

/// Writes tensor dumps and `manifest.json` into `dir`; returns the manifest path.
inline std::string write_record(const std::string& dir, const diffusion::GenerationRecord& rec,
                                const RecordFiles& files) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json m;
  m["prompt"] = rec.prompt;
  m["mode"] = std::string(diffusion::to_string(rec.method));
  m["seed"] = rec.seed;
  auto concepts = nlohmann::ordered_json::array();
  for (const auto& c : rec.concepts)
    concepts.push_back({{"text", c.text}, {"token_start", c.token_start}, {"token_end", c.token_end}});
  m["concepts"] = concepts;
  m["dropped_concepts"] = rec.dropped_concepts;
  m["segments"] = rec.segments;
  m["image"] = files.image;
  save_tensor((fs::path(dir) / "z0.sdgt").string(), rec.z0);
  m["z0"] = "z0.sdgt";
  auto dumps = nlohmann::ordered_json::array();
  if (files.dump_attention) {
    fs::create_directories(fs::path(dir) / "attn");
    for (const auto& d : record_attention(rec, files.filter)) {
      const std::string name = "attn/layer" + std::to_string(d.layer) + "_step" + std::to_string(d.step) + ".sdgt";
      save_tensor((fs::path(dir) / name).string(), d.maps);
      dumps.push_back({{"layer", d.layer}, {"step", d.step}, {"timestep", d.timestep},
                       {"tokens", d.tokens}, {"file", name}});
    }
  }
  m["attention"] = dumps;
  auto latents = nlohmann::ordered_json::array();
  if (files.dump_latents) {
    fs::create_directories(fs::path(dir) / "latents");
    for (std::size_t i = 0; i < rec.latents.size(); ++i) {
      const std::string name = "latents/step" + std::to_string(rec.latent_steps[i]) + ".sdgt";
      save_tensor((fs::path(dir) / name).string(), rec.latents[i]);
      latents.push_back({{"step", rec.latent_steps[i]}, {"file", name}});
    }
  }
  m["latents"] = latents;
  const std::string path = (fs::path(dir) / "manifest.json").string();
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorCode::IoError, "cannot write " + path);
  os << m.dump(2) << '\n';
  return path;
}

}  // namespace sdg::io
