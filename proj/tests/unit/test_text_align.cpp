#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "sdg/align/alignment.hpp"
#include "sdg/core/rng.hpp"
#include "sdg/text/encoder.hpp"
#include "test_util.hpp"

using namespace sdg;
using namespace sdg::text;
using namespace sdg::align;
using prompt::tokenize;
using testutil::vocab;

namespace {

EncoderConfig small_config(std::uint64_t seed = 0) {
  EncoderConfig c;
  c.vocab_size = vocab().size();
  c.seed = seed;
  return c;
}

const EncoderWeights& weights() {
  static const EncoderWeights w = init_encoder(small_config());
  return w;
}

std::vector<float> param_bytes(EncoderWeights w) {
  std::vector<float> out;
  for (const nn::Param* p : w.params()) out.insert(out.end(), p->value.storage().begin(), p->value.storage().end());
  return out;
}

bool rows_equal(const nn::Tensorf& a, std::size_t ra, const nn::Tensorf& b, std::size_t rb) {
  const std::size_t c = a.dim(1);
  return std::memcmp(a.data() + ra * c, b.data() + rb * c, c * sizeof(float)) == 0;
}

bool rows_equal(const nn::Tensorf& a, const nn::Tensorf& b, std::size_t row) {
  return rows_equal(a, row, b, row);
}

std::string random_prompt(Rng& rng, std::size_t n) {
  std::string p;
  for (std::size_t i = 0; i < n; ++i)
    p += vocab().token(static_cast<int>(4 + rng.below(vocab().size() - 4))) + " ";
  return p;
}

}  // namespace

TEST(Encoder, InitDeterministicPerSeed) {
  EXPECT_EQ(param_bytes(init_encoder(small_config(0))), param_bytes(init_encoder(small_config(0))));
  EXPECT_NE(param_bytes(init_encoder(small_config(0))), param_bytes(init_encoder(small_config(1))));
}

TEST(Encoder, IndivisibleHeads) {
  auto c = small_config();
  c.embed_dim = 63;
  c.num_heads = 4;
  EXPECT_SDG_ERROR(init_encoder(c), ErrorCode::IndivisibleDim);
  c = small_config();
  c.max_len = 64;
  EXPECT_SDG_ERROR(c.validate(), ErrorCode::InvalidConfig);
}

TEST(Encoder, OutputShapeAndFinite) {
  const auto e = encode(tokenize("a red apple", vocab()), weights());
  EXPECT_EQ(e.data.shape(), Shape({77, 32}));
  EXPECT_TRUE(e.data.all_finite());
  EXPECT_EQ(e.source_tokens, tokenize("a red apple", vocab()));
}

TEST(Encoder, Deterministic) {
  const auto t = tokenize("a white sheep and a red car", vocab());
  EXPECT_EQ(encode(t, weights()).data, encode(t, weights()).data);
}

TEST(Encoder, PrefixInvarianceAppleBanana) {
  const auto a = encode(tokenize("a red apple", vocab()), weights());
  const auto b = encode(tokenize("a red banana", vocab()), weights());
  for (std::size_t r = 0; r < 3; ++r) EXPECT_TRUE(rows_equal(a.data, b.data, r)) << r;
  EXPECT_FALSE(rows_equal(a.data, b.data, 3));
}

TEST(EncoderProperty, PrefixInvarianceRandomPairs) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.below(10);
    const std::string prefix = random_prompt(rng, m);
    const auto a = encode(tokenize(prefix + random_prompt(rng, 1 + rng.below(5)), vocab()), weights());
    const auto b = encode(tokenize(prefix + random_prompt(rng, 1 + rng.below(5)), vocab()), weights());
    for (std::size_t r = 0; r <= m; ++r) ASSERT_TRUE(rows_equal(a.data, b.data, r)) << trial << " row " << r;
  }
}

TEST(Encoder, RedIsContextualized) {
  const auto a = encode(tokenize("a green bag and a red apple", vocab()), weights());
  const auto b = encode(tokenize("a red apple", vocab()), weights());
  EXPECT_FALSE(rows_equal(a.data, b.data, 6));  // "red" in the long prompt
  EXPECT_TRUE(rows_equal(b.data, encode(tokenize("a red apple", vocab()), weights()).data, 2));
}

TEST(Encoder, PadRowsAreContextualized) {
  const auto a = encode(tokenize("a red apple", vocab()), weights());
  const auto b = encode(tokenize("a red apple on a table", vocab()), weights());
  for (std::size_t r = 10; r < 77; ++r) EXPECT_FALSE(rows_equal(a.data, b.data, r)) << r;
}

TEST(Encoder, ConfigRoundTrip) {
  std::stringstream ss;
  write_config(ss, small_config());
  auto c = read_encoder_config(ss);
  EXPECT_EQ(c.vocab_size, vocab().size());
  EXPECT_EQ(c.embed_dim, 32u);
}

// ---- alignment -------------------------------------------------------------

TEST(Realign, ReplacesExactlySpanRows) {
  const auto& v = vocab();
  const auto tokens = tokenize("a dog on a big red wooden table", v);  // 8 content tokens
  const auto wp = encode(tokens, weights());
  std::set<std::size_t> used;
  const auto span = prompt::locate_span("big red wooden", tokens, v, used);
  ASSERT_EQ(span.token_start, 5u);
  const auto wi = encode(tokenize(span.text, v), weights());
  const auto out = realign(wp, wi, span);
  std::size_t changed = 0;
  for (std::size_t r = 0; r < 77; ++r) {
    const bool same = rows_equal(out.data, wp.data, r);
    if (r >= 5 && r < 8) {
      EXPECT_TRUE(rows_equal(out.data, r, wi.data, r - 5 + 1));
    }
    changed += same ? 0 : 1;
  }
  EXPECT_EQ(changed, 3u);
  EXPECT_EQ(out.source_tokens, wp.source_tokens);
}

TEST(Realign, WholeContentIsIdentity) {
  const auto tokens = tokenize("a white sheep and a red car", vocab());
  const auto wp = encode(tokens, weights());
  const prompt::ConceptSpan span{"a white sheep and a red car", 1, 8};
  EXPECT_EQ(realign(wp, wp, span).data, wp.data);
}

TEST(Realign, StandaloneYellow) {
  const auto& v = vocab();
  const auto tokens = tokenize("a red apple and a yellow banana", v);
  const auto wp = encode(tokens, weights());
  std::set<std::size_t> used;
  const auto span = prompt::locate_span("a yellow banana", tokens, v, used);
  const auto wi = encode(tokenize("a yellow banana", v), weights());
  const auto out = realign(wp, wi, span);
  EXPECT_TRUE(rows_equal(out.data, 6, wi.data, 2));
  EXPECT_FALSE(rows_equal(out.data, wp.data, 6));
}

TEST(Realign, LengthMismatch) {
  const auto tokens = tokenize("a red apple", vocab());
  const auto wp = encode(tokens, weights());
  const auto wi = encode(tokenize("a red", vocab()), weights());
  EXPECT_SDG_ERROR(realign(wp, wi, prompt::ConceptSpan{"a red apple", 1, 4}), ErrorCode::LengthMismatch);
}

TEST(Realign, IncludeSpanEos) {
  const auto tokens = tokenize("a red apple on a table", vocab());
  const auto wp = encode(tokens, weights());
  const auto wi = encode(tokenize("a table", vocab()), weights());
  const prompt::ConceptSpan span{"a table", 5, 7};
  const auto off = realign(wp, wi, span);
  const auto on = realign(wp, wi, span, {true});
  EXPECT_TRUE(rows_equal(off.data, wp.data, 7));
  const std::size_t c = wp.data.dim(1);
  EXPECT_EQ(0, std::memcmp(on.data.data() + 7 * c, wi.data.data() + 3 * c, c * sizeof(float)));
}

TEST(RealignProperty, RandomSpans) {
  Rng rng(41);
  const auto& v = vocab();
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(12);
    const auto tokens = tokenize(random_prompt(rng, n), v);
    const auto wp = encode(tokens, weights());
    const std::size_t start = 1 + rng.below(n), len = 1 + rng.below(n + 1 - start);
    std::vector<int> ids(tokens.ids.begin() + static_cast<long>(start),
                         tokens.ids.begin() + static_cast<long>(start + len));
    const auto wi = encode(prompt::make_sequence(ids, v), weights());
    const prompt::ConceptSpan span{"", start, start + len};
    const auto a = realign(wp, wi, span);
    for (std::size_t r = 0; r < 77; ++r) {
      const bool inside = r >= start && r < start + len;
      if (!inside) EXPECT_TRUE(rows_equal(a.data, wp.data, r));
    }
    EXPECT_EQ(realign(wp, wi, span).data, a.data);  // idempotent
    // disjoint spans commute
    if (start > 1) {
      std::vector<int> first(tokens.ids.begin() + 1, tokens.ids.begin() + static_cast<long>(start));
      const auto w1 = encode(prompt::make_sequence(first, v), weights());
      const prompt::ConceptSpan s1{"", 1, start};
      EXPECT_EQ(realign(realign(wp, wi, span), w1, s1).data, realign(realign(wp, w1, s1), wi, span).data);
    }
    const bool whole = start == 1 && len == n;
    EXPECT_EQ(naive_expand(wi, span).data == a.data, whole) << trial;
  }
}

TEST(NaiveExpand, ReturnsInputBitwise) {
  const auto wi = encode(tokenize("a red apple", vocab()), weights());
  EXPECT_EQ(naive_expand(wi, prompt::ConceptSpan{"a red apple", 1, 4}).data, wi.data);
}

TEST(Padding, MaskCounts) {
  const auto wp = encode(tokenize("a red apple", vocab()), weights());
  auto count = [&](PaddingPattern p) {
    const auto m = apply_padding_pattern(wp, p).mask;
    return std::count(m.begin(), m.end(), true);
  };
  EXPECT_EQ(count(PaddingPattern::Full), 77);
  EXPECT_EQ(count(PaddingPattern::NearestPadOnly), 6);
  EXPECT_EQ(count(PaddingPattern::NoPad), 5);
  EXPECT_EQ(count(PaddingPattern::NearestPadAlone), 2);
  const auto m = apply_padding_pattern(wp, PaddingPattern::NearestPadAlone).mask;
  EXPECT_TRUE(m[0]);
  EXPECT_TRUE(m[5]);
}

TEST(Padding, RetainedPadRowsComeFromPrompt) {
  const auto wp = encode(tokenize("a red apple", vocab()), weights());
  const auto full = compact_rows(wp.data, padding_mask(wp.source_tokens, PaddingPattern::Full));
  EXPECT_EQ(full, wp.data);
  const auto near = compact_rows(wp.data, padding_mask(wp.source_tokens, PaddingPattern::NearestPadOnly));
  ASSERT_EQ(near.dim(0), 6u);
  EXPECT_EQ(0, std::memcmp(near.data() + 5 * 32, wp.data.data() + 5 * 32, 32 * sizeof(float)));
}

TEST(Padding, ParseNames) {
  for (auto p : {PaddingPattern::Full, PaddingPattern::NearestPadOnly, PaddingPattern::NoPad,
                 PaddingPattern::NearestPadAlone})
    EXPECT_EQ(parse_padding_pattern(to_string(p)), p);
  EXPECT_SDG_ERROR(parse_padding_pattern("half"), ErrorCode::InvalidConfig);
}
