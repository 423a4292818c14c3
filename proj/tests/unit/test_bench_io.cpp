#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "sdg/bench/abc.hpp"
#include "sdg/bench/cc500.hpp"
#include "sdg/bench/headtohead.hpp"
#include "sdg/core/kv_config.hpp"
#include "sdg/io/record.hpp"
#include "sdg/text/substitution.hpp"
#include "test_util.hpp"

using namespace sdg;
using namespace sdg::bench;
using testutil::vocab;

namespace {

std::vector<std::string> colors() { return read_lines(testutil::data_path("colors.txt")); }
std::vector<std::string> objects() { return read_lines(testutil::data_path("objects.txt")); }

const diffusion::Model& model() {
  static const diffusion::Model m = [] {
    text::EncoderConfig ec;
    ec.vocab_size = vocab().size();
    return diffusion::init_model(ec, diffusion::UNetConfig{});
  }();
  return m;
}

}  // namespace

TEST(CC500, TinyLexicon) {
  const auto p = generate_cc500({"red", "yellow"}, {"apple", "banana"}, 4, 0);
  EXPECT_EQ(std::set<std::string>(p.begin(), p.end()).size(), 4u);
  const std::regex re("a (red|yellow) (apple|banana) and a (red|yellow) (apple|banana)");
  for (const auto& s : p) {
    std::smatch m;
    ASSERT_TRUE(std::regex_match(s, m, re)) << s;
    EXPECT_NE(m[1], m[3]);
    EXPECT_NE(m[2], m[4]);
  }
  EXPECT_SDG_ERROR(generate_cc500({"red", "yellow"}, {"apple", "banana"}, 5, 0), ErrorCode::InsufficientCombinations);
}

TEST(CC500, DefaultLexiconFiveHundred) {
  const auto c = colors(), o = objects();
  EXPECT_EQ(c.size(), 11u);
  EXPECT_EQ(o.size(), 23u);
  const auto p = generate_cc500(c, o, 500, 0);
  ASSERT_EQ(p.size(), 500u);
  EXPECT_EQ(std::set<std::string>(p.begin(), p.end()).size(), 500u);
  std::string alt;
  for (const auto& x : c) alt += (alt.empty() ? "" : "|") + x;
  std::string objs;
  for (const auto& x : o) objs += (objs.empty() ? "" : "|") + x;
  const std::regex re("a (" + alt + ") (" + objs + ") and a (" + alt + ") (" + objs + ")");
  for (const auto& s : p) {
    std::smatch m;
    ASSERT_TRUE(std::regex_match(s, m, re)) << s;
    EXPECT_NE(m[1], m[3]);
    EXPECT_NE(m[2], m[4]);
  }
  EXPECT_EQ(generate_cc500(c, o, 500, 0), p);
  EXPECT_NE(generate_cc500(c, o, 500, 1), p);
}

TEST(ABC, BenchBuildingPair) {
  const auto r = build_abc_contrast({"a brown bench in front of a white building"}, colors(), vocab());
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0].swapped, "a white bench in front of a brown building");
  EXPECT_EQ(r.pairs[0].i, 1u);
  EXPECT_EQ(r.pairs[0].j, 7u);
  EXPECT_EQ(format_pair(r.pairs[0]),
            "a brown bench in front of a white building\ta white bench in front of a brown building\t1\t7");
}

TEST(ABC, SkipsSameNounAndSingleColour) {
  const auto r = build_abc_contrast({"a red red car", "a red car", "the car is red and the bus is blue"},
                                    colors(), vocab());
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.skipped, 3u);
}

TEST(ABC, SwappedTwinCountsOnce) {
  const auto r = build_abc_contrast({"a red car and a blue bus", "a blue car and a red bus"}, colors(), vocab());
  EXPECT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.duplicates, 1u);
}

TEST(ABC, BundledSampleMatchesGolden) {
  const auto captions = read_lines(testutil::data_path("abc_sample.txt"));
  ASSERT_EQ(captions.size(), 200u);
  const auto golden = KvConfig::load(testutil::data_path("abc_sample.golden"));
  const auto r = build_abc_contrast(captions, colors(), vocab());
  EXPECT_EQ(static_cast<long long>(r.pairs.size()), golden.get_int("pairs", -1));
  EXPECT_EQ(static_cast<long long>(r.skipped), golden.get_int("skipped", -1));
  EXPECT_EQ(static_cast<long long>(r.duplicates), golden.get_int("duplicates", -1));
  for (const auto& p : r.pairs) EXPECT_TRUE(satisfies_invariant(p, colors())) << format_pair(p);
}

TEST(ABC, InvariantCheckerRejects) {
  EXPECT_FALSE(satisfies_invariant({"a red car", "a red bus", 2, 2}, colors()));
  EXPECT_FALSE(satisfies_invariant({"a red car and a blue bus", "a blue bus and a red car", 1, 5}, colors()));
  EXPECT_TRUE(satisfies_invariant({"a red car and a blue bus", "a blue car and a red bus", 1, 5}, colors()));
}

TEST(TensorDump, RoundTripAndHeader) {
  Tensor<float> t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, -6.5f});
  std::stringstream ss;
  io::write_tensor(ss, t);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "SDGT");
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 2 * 4 + 6 * 4);
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // ndim, little-endian
  std::stringstream in(bytes);
  EXPECT_EQ(io::read_tensor(in), t);
  std::stringstream bad("SDGX" + bytes.substr(4));
  EXPECT_SDG_ERROR(io::read_tensor(bad), ErrorCode::FormatError);
}

TEST(ImageIo, PpmRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "sdg_rt.ppm").string();
  Tensor<float> img({3, 4, 5});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float(i % 256) / 255.0f;
  io::write_ppm(path, img);
  EXPECT_EQ(io::from_rgb8(io::read_ppm(path)), img);
  std::filesystem::remove(path);
}

TEST(Headtohead, BaselineControlAndArithmetic) {
  const diffusion::Pipeline pipe(model(), vocab());
  HeadToHeadConfig cfg;
  cfg.methods = {diffusion::Method::Baseline, diffusion::Method::Baseline, diffusion::Method::MultiValue};
  cfg.generation.steps = 3;
  cfg.seeds_per_prompt = 3;
  const std::vector<std::string> prompts{"a red square and a blue circle", "a green triangle and a white square"};
  const auto r = run_headtohead(pipe, prompts, cfg);
  ASSERT_EQ(r.counts.size(), 3u);
  EXPECT_EQ(r.counts[0].total, 6u);
  EXPECT_EQ(r.counts[0].zero_or_one_obj, r.counts[1].zero_or_one_obj);
  EXPECT_EQ(r.counts[0].two_obj_correct_colors, r.counts[1].two_obj_correct_colors);
  EXPECT_EQ(r.pairs[0].tie, 6u);
  for (const auto& c : r.counts) {
    EXPECT_EQ(c.zero_or_one_obj + c.two_obj, c.total);
    EXPECT_LE(c.two_obj_correct_colors, c.two_obj);
  }
  for (const auto& p : r.pairs) EXPECT_EQ(p.win + p.lose + p.tie, 6u);
  const auto again = run_headtohead(pipe, prompts, cfg);
  EXPECT_EQ(report_kv(r), report_kv(again));
  EXPECT_NE(report_kv(r).find("base_vs_mv.win = "), std::string::npos);
  EXPECT_NE(report_table(r).find("two obj."), std::string::npos);
  cfg.similarity_keep = 0.5;
  for (const auto& p : run_headtohead(pipe, prompts, cfg).pairs) EXPECT_EQ(p.win + p.lose + p.tie, 3u);
}

TEST(Substitution, IdentityWhenComplexEqualsNaive) {
  const diffusion::Pipeline pipe(model(), vocab());
  diffusion::GenerationConfig cfg;
  cfg.steps = 3;
  const auto r = text::substitution_experiment("a red apple", "a red apple", "a red apple", pipe, cfg);
  EXPECT_EQ(r.image_a.image, r.image_b.image);
  const auto s = text::substitution_experiment("a red apple", "a green bag and a red apple", "a red apple", pipe, cfg);
  EXPECT_EQ(s.image_a.z_T, s.image_b.z_T);
  EXPECT_NE(s.image_a.z0, s.image_b.z0);
  EXPECT_SDG_ERROR(text::substitution_experiment("a red apple", "a green bag", "a red apple", pipe, cfg),
                   ErrorCode::SpanNotFound);
  Tensor<float> green({3, 2, 2});
  for (std::size_t p = 4; p < 8; ++p) green[p] = 1.0f;
  EXPECT_DOUBLE_EQ(text::green_excess(green), 1.0);
}

TEST(Record, AttentionDumpsAndManifest) {
  namespace fs = std::filesystem;
  const diffusion::Pipeline pipe(model(), vocab());
  diffusion::GenerationConfig cfg;
  cfg.steps = 6;
  cfg.method = diffusion::Method::MultiValue;
  const auto rec = pipe.sample("a red apple and a yellow banana", cfg);
  const auto dumps = io::record_attention(rec);
  ASSERT_EQ(dumps.size(), 5u * 4u);
  EXPECT_EQ(dumps[0].maps.shape(), Shape({7, 16, 16}));
  EXPECT_EQ(dumps[1].maps.shape(), Shape({7, 8, 8}));
  io::AttentionFilter only;
  only.tokens = {3};
  only.layers = {0};
  const auto one = io::record_attention(rec, only);
  ASSERT_EQ(one.size(), 5u);
  EXPECT_EQ(one[0].maps.shape(), Shape({1, 16, 16}));
  const auto dir = fs::temp_directory_path() / "sdg_rec";
  fs::remove_all(dir);
  const auto manifest = io::write_record(dir.string(), rec, {"image.png", true, {}, false});
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "attn")) files += e.path().extension() == ".sdgt";
  EXPECT_EQ(files, 20u);
  std::ifstream in(manifest);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["mode"], "mv");
  EXPECT_EQ(j["concepts"].size(), 2u);
  EXPECT_EQ(j["attention"].size(), 20u);
  EXPECT_EQ(io::load_tensor((dir / "attn/layer0_step0.sdgt").string()), dumps[0].maps);
  fs::remove_all(dir);
}
