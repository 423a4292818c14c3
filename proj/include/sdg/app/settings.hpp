#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sdg/bench/cc500.hpp"
#include "sdg/bench/headtohead.hpp"
#include "sdg/core/kv_config.hpp"
#include "sdg/diffusion/model.hpp"
#include "sdg/diffusion/pipeline.hpp"
#include "sdg/toy/train.hpp"

// Flat key = value settings shared by the command line tool and the test
// suites. Every key has a default here; configs/default.conf documents them.

namespace sdg::app {

inline KvConfig default_settings(const std::string& data_dir) {
  KvConfig c = KvConfig::from_string(R"(
seed = 0
data.dir =
model.checkpoint =
model.seed = 0
encoder.embed_dim = 32
encoder.layers = 2
encoder.heads = 4
encoder.mlp_ratio = 4
unet.base_channels = 16
unet.mid_channels = 32
unet.groups = 4
unet.time_dim = 64
unet.heads = 4
unet.head_dim = 8
unet.attn_down = 16, 8
unet.attn_up = 8, 16
schedule.train_steps = 1000
schedule.beta_start = 0.0001
schedule.beta_end = 0.02
gen.steps = 50
gen.sampler = plms
gen.scale = 7.5
gen.mode = base
gen.parser = chunk
gen.tree =
gen.graph =
gen.alignment = realign
gen.padding = full
gen.include_span_eos = false
gen.mk_pairing = paired
gen.concept_weights =
gen.max_concepts = 8
gen.record_steps = 5
gen.ddpm_zero_noise = false
gen.clip_x0 = 1
shapes.image_size = 64
shapes.size = 4000
shapes.two_object_fraction = 0.8
shapes.radius_min = 9
shapes.radius_max = 12
shapes.colors = red, green, blue, yellow, white, black
shapes.heldout =
shapes.seed = 0
train.steps = 5000
train.batch = 12
train.lr = 0.002
train.warmup = 100
train.final_lr_fraction = 0.1
train.ema_decay = 0.995
train.cond_dropout = 0.1
train.eval_batch = 64
train.log_every = 100
train.seed = 0
bench.prompts =
bench.n_prompts = 50
bench.prompt_seed = 0
bench.seeds_per_prompt = 3
bench.methods = base, mv, mk, compose
bench.similarity_keep = 1
ablate.patterns = full, nearest-pad-only, no-pad, nearest-pad-alone
ablate.seeds = 3
output.format = png
)");
  c.set("data.dir", data_dir);
  return c;
}

inline std::string data_file(const KvConfig& c, const std::string& name) {
  return (std::filesystem::path(c.get("data.dir")) / name).string();
}

inline std::size_t get_size(const KvConfig& c, const std::string& key) {
  const long long v = c.get_int(key, 0);
  require(v >= 0, ErrorCode::InvalidConfig, key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

inline std::vector<std::size_t> get_sizes(const KvConfig& c, const std::string& key) {
  std::vector<std::size_t> out;
  for (const auto& item : c.get_list(key)) {
    KvConfig one;
    one.set(key, item);
    out.push_back(get_size(one, key));
  }
  return out;
}

inline const std::map<std::string, toy::NamedColor>& color_anchors() {
  static const std::map<std::string, toy::NamedColor> anchors = [] {
    std::map<std::string, toy::NamedColor> m;
    for (const auto& c : toy::default_colors()) m[c.name] = c;
    m["orange"] = {"orange", 1.0f, 0.5f, 0.0f};
    m["purple"] = {"purple", 0.5f, 0.0f, 0.6f};
    m["pink"] = {"pink", 1.0f, 0.55f, 0.75f};
    m["brown"] = {"brown", 0.45f, 0.22f, 0.05f};
    return m;
  }();
  return anchors;
}

inline toy::ShapesConfig shapes_config(const KvConfig& c) {
  toy::ShapesConfig s;
  s.image_size = get_size(c, "shapes.image_size");
  s.size = get_size(c, "shapes.size");
  s.two_object_fraction = c.get_double("shapes.two_object_fraction", 0.8);
  s.radius_min = c.get_double("shapes.radius_min", 9);
  s.radius_max = c.get_double("shapes.radius_max", 12);
  s.seed = static_cast<std::uint64_t>(c.get_int("shapes.seed", 0));
  s.colors.clear();
  for (const auto& name : c.get_list("shapes.colors")) {
    const auto it = color_anchors().find(name);
    require(it != color_anchors().end(), ErrorCode::InvalidConfig, "no RGB anchor for colour '" + name + "'");
    s.colors.push_back(it->second);
  }
  for (const auto& item : c.get_list("shapes.heldout")) {
    const auto colon = item.find(':');
    require(colon != std::string::npos, ErrorCode::InvalidConfig,
            "shapes.heldout entries are colour:shape, got '" + item + "'");
    s.heldout.emplace_back(item.substr(0, colon), item.substr(colon + 1));
  }
  s.validate();
  return s;
}

inline text::EncoderConfig encoder_config(const KvConfig& c, std::size_t vocab_size) {
  text::EncoderConfig e;
  e.vocab_size = vocab_size;
  e.embed_dim = get_size(c, "encoder.embed_dim");
  e.num_layers = get_size(c, "encoder.layers");
  e.num_heads = get_size(c, "encoder.heads");
  e.mlp_ratio = get_size(c, "encoder.mlp_ratio");
  e.seed = static_cast<std::uint64_t>(c.get_int("model.seed", 0));
  return e;
}

inline diffusion::UNetConfig unet_config(const KvConfig& c) {
  diffusion::UNetConfig u;
  u.latent_channels = 3;
  u.latent_size = get_size(c, "shapes.image_size") / diffusion::LatentCodec{}.factor;
  u.base_channels = get_size(c, "unet.base_channels");
  u.mid_channels = get_size(c, "unet.mid_channels");
  u.groups = get_size(c, "unet.groups");
  u.time_dim = get_size(c, "unet.time_dim");
  u.heads = get_size(c, "unet.heads");
  u.head_dim = get_size(c, "unet.head_dim");
  u.context_dim = get_size(c, "encoder.embed_dim");
  u.attn_down = get_sizes(c, "unet.attn_down");
  u.attn_up = get_sizes(c, "unet.attn_up");
  u.seed = static_cast<std::uint64_t>(c.get_int("model.seed", 0));
  return u;
}

inline diffusion::ScheduleConfig schedule_config(const KvConfig& c) {
  return {get_size(c, "schedule.train_steps"), c.get_double("schedule.beta_start", 1e-4),
          c.get_double("schedule.beta_end", 0.02)};
}

/// Loads model.checkpoint, or builds a freshly initialized model when empty.
inline diffusion::Model load_model(const KvConfig& c, const prompt::Vocabulary& vocab) {
  const std::string path = c.get("model.checkpoint", "");
  if (!path.empty()) return diffusion::load_checkpoint(path);
  return diffusion::init_model(encoder_config(c, vocab.size()), unet_config(c), schedule_config(c));
}

inline diffusion::GenerationConfig generation_config(const KvConfig& c) {
  diffusion::GenerationConfig g;
  g.steps = get_size(c, "gen.steps");
  g.sampler = diffusion::parse_sampler(c.get("gen.sampler"));
  g.guidance_scale = c.get_double("gen.scale", 7.5);
  g.method = diffusion::parse_method(c.get("gen.mode"));
  g.parser = diffusion::parse_parser_source(c.get("gen.parser"));
  g.tree_path = c.get("gen.tree", "");
  g.graph_path = c.get("gen.graph", "");
  g.alignment = align::parse_alignment_mode(c.get("gen.alignment"));
  g.padding = align::parse_padding_pattern(c.get("gen.padding"));
  g.include_span_eos = c.get_bool("gen.include_span_eos", false);
  const std::string pairing = c.get("gen.mk_pairing");
  require(pairing == "paired" || pairing == "fixed-k", ErrorCode::InvalidConfig,
          "gen.mk_pairing is paired or fixed-k, got '" + pairing + "'");
  g.pairing = pairing == "paired" ? attention::KeyPairing::Paired : attention::KeyPairing::FixedK;
  for (const auto& w : c.get_list("gen.concept_weights")) {
    KvConfig one;
    one.set("w", w);
    g.concept_weights.push_back(one.get_double("w", 0));
  }
  g.max_concepts = get_size(c, "gen.max_concepts");
  g.record_steps = get_size(c, "gen.record_steps");
  g.ddpm_zero_noise = c.get_bool("gen.ddpm_zero_noise", false);
  g.clip_x0 = c.get_double("gen.clip_x0", 1.0);
  g.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  g.validate();
  return g;
}

inline toy::TrainConfig train_config(const KvConfig& c) {
  toy::TrainConfig t;
  t.steps = get_size(c, "train.steps");
  t.batch = get_size(c, "train.batch");
  t.lr = c.get_double("train.lr", t.lr);
  t.warmup = get_size(c, "train.warmup");
  t.final_lr_fraction = c.get_double("train.final_lr_fraction", t.final_lr_fraction);
  t.ema_decay = c.get_double("train.ema_decay", t.ema_decay);
  t.cond_dropout = c.get_double("train.cond_dropout", t.cond_dropout);
  t.eval_batch = get_size(c, "train.eval_batch");
  t.log_every = get_size(c, "train.log_every");
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
  t.validate();
  return t;
}

inline bench::HeadToHeadConfig headtohead_config(const KvConfig& c) {
  bench::HeadToHeadConfig h;
  h.methods.clear();
  for (const auto& m : c.get_list("bench.methods")) h.methods.push_back(diffusion::parse_method(m));
  h.seeds_per_prompt = get_size(c, "bench.seeds_per_prompt");
  h.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  h.generation = generation_config(c);
  h.shapes = shapes_config(c);
  h.similarity_keep = c.get_double("bench.similarity_keep", 1.0);
  return h;
}

/// Evaluation prompts: bench.prompts if set, otherwise two-object prompts
/// over the toy colours and shapes.
inline std::vector<std::string> bench_prompts(const KvConfig& c) {
  const std::string file = c.get("bench.prompts", "");
  if (!file.empty()) return bench::read_lines(file);
  const auto s = shapes_config(c);
  std::vector<std::string> colors, shapes;
  for (const auto& col : s.colors) colors.push_back(col.name);
  for (auto k : s.shapes) shapes.emplace_back(toy::to_string(k));
  return bench::generate_cc500(colors, shapes, get_size(c, "bench.n_prompts"),
                               static_cast<std::uint64_t>(c.get_int("bench.prompt_seed", 0)));
}

/// Digest of the keys that determine a trained model.
inline std::uint64_t training_digest(const KvConfig& c) {
  std::string text;
  for (const auto& [k, v] : c.entries())
    if (k.rfind("encoder.", 0) == 0 || k.rfind("unet.", 0) == 0 || k.rfind("schedule.", 0) == 0 ||
        k.rfind("shapes.", 0) == 0 || k.rfind("train.", 0) == 0 || k == "model.seed")
      text += k + "=" + v + "\n";
  return fnv1a(text);
}

}  // namespace sdg::app
