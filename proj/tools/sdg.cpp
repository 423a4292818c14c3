// sdg: command line front end for the structured diffusion guidance toy.

#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdg/app/settings.hpp"
#include "sdg/bench/abc.hpp"
#include "sdg/bench/cc500.hpp"
#include "sdg/bench/headtohead.hpp"
#include "sdg/io/png.hpp"
#include "sdg/io/record.hpp"
#include "sdg/text/substitution.hpp"

#ifndef SDG_DEFAULT_DATA_DIR
#define SDG_DEFAULT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace sdg;

namespace {

/// Options shared by every subcommand plus the flag -> key overrides.
struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::string out = "out";
  std::optional<std::string> checkpoint;
  bool print_config = false;
  std::vector<std::pair<std::string, std::string*>> string_flags;
  std::vector<std::string> owned;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "flat key = value settings file");
    app->add_option("--set", sets, "override one setting, KEY=VALUE (repeatable)");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--out", out, "output directory or file");
    app->add_option("--checkpoint", checkpoint, "model checkpoint (SDGW); empty for fresh weights");
    app->add_flag("--print-config", print_config, "print the resolved settings and exit");
  }

  KvConfig resolve(const std::vector<std::pair<std::string, std::optional<std::string>>>& flags) const {
    const char* env = std::getenv("SDG_DATA_DIR");
    KvConfig c = app::default_settings(env && *env ? env : SDG_DEFAULT_DATA_DIR);
    if (!config_file.empty()) c.merge(KvConfig::load(config_file));
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      require(eq != std::string::npos, ErrorCode::InvalidConfig, "--set expects KEY=VALUE, got '" + kv + "'");
      const std::string key = KvConfig::trim(kv.substr(0, eq));
      require(c.has(key), ErrorCode::InvalidConfig, "unknown setting '" + key + "'");
      c.set(key, KvConfig::trim(kv.substr(eq + 1)));
    }
    if (seed) c.set("seed", std::to_string(*seed));
    if (checkpoint) c.set("model.checkpoint", *checkpoint);
    for (const auto& [key, value] : flags)
      if (value) c.set(key, *value);
    for (const auto& [k, v] : c.entries()) {
      (void)v;
      require(app::default_settings("").has(k), ErrorCode::InvalidConfig, "unknown setting '" + k + "'");
    }
    return c;
  }
};

using Flags = std::vector<std::pair<std::string, std::optional<std::string>>>;

bool print_if_requested(const Common& common, const KvConfig& c) {
  if (!common.print_config) return false;
  std::cout << c.to_string();
  return true;
}

void write_image(const std::string& path, const Tensor<float>& img) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".ppm")
    io::write_ppm(path, img);
  else
    io::write_png(path, img);
}

std::string image_name(const KvConfig& c, const std::string& stem) {
  const std::string fmt = c.get("output.format");
  require(fmt == "png" || fmt == "ppm", ErrorCode::InvalidConfig, "output.format is png or ppm, got '" + fmt + "'");
  return stem + "." + fmt;
}

std::string format_double(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorCode::IoError, "cannot write " + path);
  return os;
}

// ---- parse ------------------------------------------------------------------

int cmd_parse(const KvConfig& c, const std::vector<std::string>& prompts) {
  const auto vocab = prompt::Vocabulary::load(app::data_file(c, "vocab.tsv"));
  const auto model = app::load_model(c, vocab);
  const diffusion::Pipeline pipe(model, vocab);
  const auto g = app::generation_config(c);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts.size() > 1) std::cout << "# " << prompts[i] << '\n';
    const auto tokens = prompt::tokenize(prompts[i], vocab);
    const auto set = pipe.concepts(prompts[i], tokens, g);
    for (const auto& s : set.spans) std::cout << s.text << '\t' << s.token_start << '\t' << s.token_end << '\n';
    if (set.dropped) std::cout << "# dropped " << set.dropped << '\n';
  }
  return 0;
}

// ---- generate ---------------------------------------------------------------

int cmd_generate(const KvConfig& c, const std::string& prompt_text, const std::string& out, bool dump_attn,
                 bool dump_latents) {
  const auto vocab = prompt::Vocabulary::load(app::data_file(c, "vocab.tsv"));
  const auto model = app::load_model(c, vocab);
  const diffusion::Pipeline pipe(model, vocab);
  auto g = app::generation_config(c);
  g.record_latents = dump_latents;
  if (!dump_attn) g.record_steps = 0;
  const auto rec = pipe.sample(prompt_text, g);
  fs::create_directories(out);
  const std::string image = image_name(c, "image");
  write_image((fs::path(out) / image).string(), rec.image);
  io::RecordFiles files;
  files.image = image;
  files.dump_attention = dump_attn;
  files.dump_latents = dump_latents;
  const auto manifest = io::write_record(out, rec, files);
  std::cout << (fs::path(out) / image).string() << '\n' << manifest << '\n';
  return 0;
}

// ---- train / make-dataset ----------------------------------------------------

int cmd_make_dataset(const KvConfig& c, const std::string& out) {
  const auto data = toy::make_dataset(app::shapes_config(c));
  toy::write_dataset(data, out);
  std::cout << data.samples.size() << " samples written to " << out << '\n';
  return 0;
}

int cmd_train(const KvConfig& c, const std::string& out) {
  const auto vocab = prompt::Vocabulary::load(app::data_file(c, "vocab.tsv"));
  auto model = app::load_model(c, vocab);
  const auto data = toy::make_dataset(app::shapes_config(c));
  const auto tc = app::train_config(c);
  fs::create_directories(out);
  auto log = open_out((fs::path(out) / "train_log.tsv").string());
  log << "step\ttrain_loss\teval_loss\n";
  const auto report = toy::train(model, data, vocab, tc, [&](const toy::TrainLogEntry& e) {
    log << e.step << '\t' << format_double(e.train_loss) << '\t' << format_double(e.eval_loss) << '\n';
    std::cerr << "step " << e.step << "/" << tc.steps << "  train " << format_double(e.train_loss, 4) << "  eval "
              << format_double(e.eval_loss, 4) << '\n';
  });
  const std::string ckpt = (fs::path(out) / "model.sdgw").string();
  diffusion::save_checkpoint(ckpt, model);
  auto summary = open_out((fs::path(out) / "train_summary.txt").string());
  summary << "initial_eval_loss = " << format_double(report.initial_eval_loss) << '\n'
          << "final_eval_loss = " << format_double(report.final_eval_loss) << '\n'
          << "parameters = " << model.params().scalar_count() << '\n'
          << "steps = " << tc.steps << '\n';
  std::cout << ckpt << '\n';
  return 0;
}

// ---- bench ------------------------------------------------------------------

int cmd_bench(const KvConfig& c, const std::string& out, bool save_images) {
  const auto vocab = prompt::Vocabulary::load(app::data_file(c, "vocab.tsv"));
  const auto model = app::load_model(c, vocab);
  const diffusion::Pipeline pipe(model, vocab);
  const auto cfg = app::headtohead_config(c);
  const auto prompts = app::bench_prompts(c);
  const auto report = bench::run_headtohead(pipe, prompts, cfg, save_images, [](std::size_t done, std::size_t n) {
    if (done % 10 == 0 || done == n) std::cerr << "evaluated " << done << "/" << n << '\n';
  });
  fs::create_directories(out);
  open_out((fs::path(out) / "report.txt").string()) << bench::report_kv(report);
  open_out((fs::path(out) / "report_table.txt").string()) << bench::report_table(report);
  auto cases = open_out((fs::path(out) / "cases.tsv").string());
  cases << "prompt\tseed";
  for (auto m : report.methods) cases << '\t' << diffusion::to_string(m);
  cases << '\n';
  for (std::size_t i = 0; i < report.cases.size(); ++i) {
    const auto& k = report.cases[i];
    cases << k.prompt << '\t' << k.seed;
    for (std::size_t j = 0; j < k.categories.size(); ++j) {
      cases << '\t' << toy::to_string(k.categories[j]);
      if (save_images) {
        fs::create_directories(fs::path(out) / "images");
        const std::string name = "case" + std::to_string(i) + "_" + std::string(diffusion::to_string(report.methods[j]));
        write_image((fs::path(out) / "images" / image_name(c, name)).string(), k.images[j]);
      }
    }
    cases << '\n';
  }
  std::cout << bench::report_table(report);
  return 0;
}

// ---- ablate -----------------------------------------------------------------

double pearson(const Tensor<float>& a, const Tensor<float>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(a.size());
  mb /= double(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : (saa == sbb ? 1.0 : 0.0);
}

int cmd_ablate(const KvConfig& c, const std::string& prompt_text, const std::string& out,
               const std::vector<std::string>& patterns, const std::vector<std::string>& alignments) {
  const auto vocab = prompt::Vocabulary::load(app::data_file(c, "vocab.tsv"));
  const auto model = app::load_model(c, vocab);
  const diffusion::Pipeline pipe(model, vocab);
  const auto base = app::generation_config(c);
  const std::size_t seeds = app::get_size(c, "ablate.seeds");
  require(seeds >= 1, ErrorCode::InvalidConfig, "ablate.seeds must be >= 1");

  // Reference for the correlation column: realign with every pad row kept.
  auto ref_cfg = base;
  ref_cfg.alignment = align::AlignmentMode::Realign;
  ref_cfg.padding = align::PaddingPattern::Full;
  ref_cfg.record_steps = 0;
  std::vector<Tensor<float>> reference(seeds);
  parallel_for(seeds, [&](std::size_t s) {
    auto g = ref_cfg;
    g.seed = base.seed + s;
    reference[s] = pipe.sample(prompt_text, g).z0;
  });

  fs::create_directories(out);
  auto table = open_out((fs::path(out) / "ablation.tsv").string());
  table << "alignment\tpadding\tseed\tlatent_corr_vs_full\n";
  std::ostringstream summary;
  summary << "alignment\tpadding\tmean_latent_corr_vs_full\n";
  for (const auto& am : alignments)
    for (const auto& pat : patterns) {
      auto g = base;
      g.alignment = align::parse_alignment_mode(am);
      g.padding = align::parse_padding_pattern(pat);
      g.record_steps = 0;
      const std::string sub = am + "_" + pat;
      fs::create_directories(fs::path(out) / sub);
      std::vector<double> corr(seeds);
      std::vector<Tensor<float>> images(seeds);
      parallel_for(seeds, [&](std::size_t s) {
        auto gs = g;
        gs.seed = base.seed + s;
        const auto rec = pipe.sample(prompt_text, gs);
        corr[s] = pearson(rec.z0, reference[s]);
        images[s] = rec.image;
      });
      double mean = 0;
      for (std::size_t s = 0; s < seeds; ++s) {
        write_image((fs::path(out) / sub / image_name(c, "seed" + std::to_string(base.seed + s))).string(), images[s]);
        table << am << '\t' << pat << '\t' << base.seed + s << '\t' << format_double(corr[s]) << '\n';
        mean += corr[s] / double(seeds);
      }
      summary << am << '\t' << pat << '\t' << format_double(mean) << '\n';
    }
  open_out((fs::path(out) / "summary.tsv").string()) << summary.str();
  std::cout << summary.str();
  return 0;
}

// ---- substitute ---------------------------------------------------------------

int cmd_substitute(const KvConfig& c, const std::string& naive, const std::string& complex, const std::string& span,
                   std::size_t seeds, const std::string& out) {
  const auto vocab = prompt::Vocabulary::load(app::data_file(c, "vocab.tsv"));
  const auto model = app::load_model(c, vocab);
  const diffusion::Pipeline pipe(model, vocab);
  const auto base = app::generation_config(c);
  fs::create_directories(out);
  std::vector<text::SubstitutionResult> results(seeds);
  parallel_for(seeds, [&](std::size_t s) {
    auto g = base;
    g.seed = base.seed + s;
    g.record_steps = 0;
    results[s] = text::substitution_experiment(naive, complex, span, pipe, g);
  });
  auto table = open_out((fs::path(out) / "substitution.tsv").string());
  table << "seed\tgreen_excess_a\tgreen_excess_b\tdelta\n";
  double mean = 0;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto& r = results[s];
    const double a = text::green_excess(r.image_a.image), b = text::green_excess(r.image_b.image);
    write_image((fs::path(out) / image_name(c, "seed" + std::to_string(base.seed + s) + "_a")).string(), r.image_a.image);
    write_image((fs::path(out) / image_name(c, "seed" + std::to_string(base.seed + s) + "_b")).string(), r.image_b.image);
    table << base.seed + s << '\t' << format_double(a) << '\t' << format_double(b) << '\t' << format_double(b - a) << '\n';
    mean += (b - a) / double(seeds);
  }
  std::cout << "mean green excess (b - a) = " << format_double(mean) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured cross-attention guidance on a toy latent diffusion model"};
  app.require_subcommand(1);
  Common common;

  // Flag holders; unset flags leave the settings untouched.
  std::optional<std::string> mode, steps, scale, sampler, parser, tree, graph, padding, alignment, format;
  std::optional<std::string> train_steps, batch, n_prompts, seeds_per_prompt, methods, prompts_file, size, ablate_seeds;
  std::string prompt_text, prompt_file, captions, colors_file, objects_file, naive, complex, span;
  std::size_t n = 500, subst_seeds = 8;
  bool dump_attn = false, dump_latents = false, save_images = false;
  std::vector<std::string> patterns, alignments;

  auto gen_flags = [&](CLI::App* s) {
    s->add_option("--mode", mode, "base, mv, mk or compose");
    s->add_option("--steps", steps, "sampling steps");
    s->add_option("--scale", scale, "guidance scale");
    s->add_option("--sampler", sampler, "plms or ddpm");
    s->add_option("--parser", parser, "chunk, tree or sg");
    s->add_option("--tree", tree, "constituency tree file for --parser tree");
    s->add_option("--graph", graph, "scene graph file for --parser sg");
    s->add_option("--format", format, "png or ppm");
  };

  auto* parse = app.add_subcommand("parse", "print the concept spans of a prompt");
  parse->add_option("prompt", prompt_text, "prompt text");
  parse->add_option("--file", prompt_file, "file with one prompt per line");
  parse->add_option("--parser", parser, "chunk, tree or sg");
  parse->add_option("--tree", tree, "constituency tree file");
  parse->add_option("--graph", graph, "scene graph file");

  auto* generate = app.add_subcommand("generate", "sample one image");
  generate->add_option("prompt", prompt_text, "prompt text")->required();
  gen_flags(generate);
  generate->add_option("--padding-pattern", padding, "full, nearest-pad-only, no-pad or nearest-pad-alone");
  generate->add_option("--alignment-mode", alignment, "realign or naive-expand");
  generate->add_flag("--dump-attn", dump_attn, "write head-averaged attention maps at the recorded steps");
  generate->add_flag("--dump-latents", dump_latents, "write the latent after every step");

  auto* train = app.add_subcommand("train", "train the toy model on the shapes dataset");
  train->add_option("--steps", train_steps, "optimizer steps");
  train->add_option("--batch", batch, "examples per step");
  train->add_option("--size", size, "dataset size");

  auto* make_ds = app.add_subcommand("make-dataset", "write the shapes dataset to disk");
  make_ds->add_option("--size", size, "dataset size");

  auto* benchc = app.add_subcommand("bench", "head-to-head evaluation with the binding oracle");
  gen_flags(benchc);
  benchc->add_option("--prompts", prompts_file, "prompt file; default is generated two-object prompts");
  benchc->add_option("--n-prompts", n_prompts, "number of generated prompts");
  benchc->add_option("--seeds-per-prompt", seeds_per_prompt, "images per prompt and method");
  benchc->add_option("--methods", methods, "comma separated methods");
  benchc->add_flag("--save-images", save_images, "write every evaluated image");

  auto* ablate = app.add_subcommand("ablate", "padding pattern and alignment ablation");
  ablate->add_option("prompt", prompt_text, "prompt text")->required();
  gen_flags(ablate);
  ablate->add_option("--padding-pattern", patterns, "patterns to run (default all four)")->delimiter(',');
  ablate->add_option("--alignment-mode", alignments, "alignment modes (default realign)")->delimiter(',');
  ablate->add_option("--seeds", ablate_seeds, "seeds per setting");

  auto* cc500 = app.add_subcommand("make-cc500", "write two-object concept conjunction prompts");
  cc500->add_option("--colors", colors_file, "colour lexicon (default data/colors.txt)");
  cc500->add_option("--objects", objects_file, "object lexicon (default data/objects.txt)");
  cc500->add_option("-n,--count", n, "number of prompts");

  auto* abc = app.add_subcommand("make-abc", "build colour-swap contrast pairs from captions");
  abc->add_option("--captions", captions, "caption file, one per line")->required();
  abc->add_option("--colors", colors_file, "colour lexicon (default data/colors.txt)");

  auto* subst = app.add_subcommand("substitute", "replace span embeddings with those from a longer prompt");
  subst->add_option("--naive", naive, "short prompt")->required();
  subst->add_option("--complex", complex, "prompt containing the same span")->required();
  subst->add_option("--span", span, "shared span; default the whole naive prompt");
  subst->add_option("--seeds", subst_seeds, "number of seeds");
  gen_flags(subst);

  for (auto* s : {parse, generate, train, make_ds, benchc, ablate, cc500, abc, subst}) common.attach(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "sdg: error: " << e.what() << '\n';
    return 2;
  }

  try {
    const Flags flags{{"gen.mode", mode},
                      {"gen.steps", steps},
                      {"gen.scale", scale},
                      {"gen.sampler", sampler},
                      {"gen.parser", parser},
                      {"gen.tree", tree},
                      {"gen.graph", graph},
                      {"gen.padding", padding},
                      {"gen.alignment", alignment},
                      {"output.format", format},
                      {"train.steps", train_steps},
                      {"train.batch", batch},
                      {"shapes.size", size},
                      {"bench.prompts", prompts_file},
                      {"bench.n_prompts", n_prompts},
                      {"bench.seeds_per_prompt", seeds_per_prompt},
                      {"bench.methods", methods},
                      {"ablate.seeds", ablate_seeds}};
    KvConfig c = common.resolve(flags);
    if (ablate->parsed()) {
      if (!patterns.empty()) {
        std::string joined;
        for (const auto& p : patterns) joined += (joined.empty() ? "" : ",") + p;
        c.set("ablate.patterns", joined);
      }
      if (alignments.empty()) alignments = {c.get("gen.alignment")};
    }
    if (print_if_requested(common, c)) return 0;

    if (parse->parsed()) {
      std::vector<std::string> prompts;
      if (!prompt_file.empty()) prompts = bench::read_lines(prompt_file);
      if (!prompt_text.empty() || prompt_file.empty()) prompts.insert(prompts.begin(), prompt_text);
      return cmd_parse(c, prompts);
    }
    if (generate->parsed()) return cmd_generate(c, prompt_text, common.out, dump_attn, dump_latents);
    if (train->parsed()) return cmd_train(c, common.out);
    if (make_ds->parsed()) return cmd_make_dataset(c, common.out);
    if (benchc->parsed()) return cmd_bench(c, common.out, save_images);
    if (ablate->parsed()) return cmd_ablate(c, prompt_text, common.out, c.get_list("ablate.patterns"), alignments);
    if (subst->parsed()) return cmd_substitute(c, naive, complex, span.empty() ? naive : span, subst_seeds, common.out);
    if (cc500->parsed()) {
      const auto colors = bench::read_lines(colors_file.empty() ? app::data_file(c, "colors.txt") : colors_file);
      const auto objects = bench::read_lines(objects_file.empty() ? app::data_file(c, "objects.txt") : objects_file);
      const auto prompts = bench::generate_cc500(colors, objects, n, static_cast<std::uint64_t>(c.get_int("seed", 0)));
      std::ostringstream os;
      for (const auto& p : prompts) os << p << '\n';
      if (common.out == "-") std::cout << os.str();
      else open_out(common.out) << os.str();
      return 0;
    }
    if (abc->parsed()) {
      const auto vocab = prompt::Vocabulary::load(app::data_file(c, "vocab.tsv"));
      const auto colors = bench::read_lines(colors_file.empty() ? app::data_file(c, "colors.txt") : colors_file);
      const auto set = bench::build_abc_contrast(bench::read_lines(captions), colors, vocab);
      std::ostringstream os;
      for (const auto& p : set.pairs) os << bench::format_pair(p) << '\n';
      if (common.out == "-") std::cout << os.str();
      else open_out(common.out) << os.str();
      std::cerr << set.pairs.size() << " pairs, " << set.skipped << " skipped, " << set.duplicates << " duplicates\n";
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "sdg: error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "sdg: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
