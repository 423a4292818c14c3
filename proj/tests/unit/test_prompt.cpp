#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "sdg/core/rng.hpp"
#include "sdg/prompt/concepts.hpp"
#include "test_util.hpp"

using namespace sdg;
using namespace sdg::prompt;
using testutil::vocab;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> normalized(const std::vector<std::string>& v) {
  std::vector<std::string> out;
  for (const auto& s : v) out.push_back(join_words(normalize_words(s)));
  return out;
}

}  // namespace

TEST(Vocabulary, SpecialIdsAreFixedAndDistinct) {
  const auto& v = vocab();
  EXPECT_EQ(v.token(v.bos()), "<bos>");
  EXPECT_EQ(v.token(v.eos()), "<eos>");
  EXPECT_EQ(v.token(v.pad()), "<pad>");
  EXPECT_NE(v.unk(), v.pad());
  EXPECT_EQ(v.pos(v.unk()), Pos::Other);
}

TEST(Vocabulary, LookupIsTotal) {
  const auto& v = vocab();
  EXPECT_EQ(v.id("zyzzyva"), v.unk());
  EXPECT_EQ(v.pos(v.id("zyzzyva")), Pos::Other);
  EXPECT_EQ(v.pos(v.id("red")), Pos::Adj);
  EXPECT_EQ(v.pos(v.id("front")), Pos::Noun);
}

TEST(Vocabulary, RejectsMisorderedSpecials) {
  std::istringstream is("<eos>\n<bos>\n<pad>\n");
  EXPECT_SDG_ERROR(Vocabulary::parse(is), ErrorCode::SyntaxError);
  std::istringstream dup("<bos>\n<eos>\n<pad>\nred\tADJ\nred\tADJ\n");
  EXPECT_SDG_ERROR(Vocabulary::parse(dup), ErrorCode::SyntaxError);
  std::istringstream badpos("<bos>\n<eos>\n<pad>\nred\tCOLOUR\n");
  EXPECT_SDG_ERROR(Vocabulary::parse(badpos), ErrorCode::SyntaxError);
}

TEST(Vocabulary, SerializeRoundTrips) {
  std::istringstream is(vocab().serialize());
  const auto again = Vocabulary::parse(is);
  EXPECT_EQ(again.serialize(), vocab().serialize());
}

TEST(Tokenizer, RedAppleLayout) {
  const auto& v = vocab();
  const auto seq = tokenize("a red apple", v);
  EXPECT_EQ(seq.content_len, 3u);
  EXPECT_EQ(seq.ids[0], v.bos());
  EXPECT_EQ(seq.ids[1], v.id("a"));
  EXPECT_EQ(seq.ids[2], v.id("red"));
  EXPECT_EQ(seq.ids[3], v.id("apple"));
  EXPECT_EQ(seq.ids[4], v.eos());
  for (std::size_t i = 5; i < kSequenceLength; ++i) EXPECT_EQ(seq.ids[i], v.pad());
}

TEST(Tokenizer, EmptyAfterStrippingIsTooShort) {
  EXPECT_SDG_ERROR(tokenize("", vocab()), ErrorCode::PromptTooShort);
  EXPECT_SDG_ERROR(tokenize(" ,.!  ", vocab()), ErrorCode::PromptTooShort);
}

TEST(Tokenizer, LowercasesAndSplitsPunctuation) {
  const auto seq = tokenize("A white sheep and a red car", vocab());
  EXPECT_EQ(seq.content_len, 7u);
  EXPECT_EQ(seq, tokenize("a WHITE sheep, and a red car.", vocab()));
  EXPECT_EQ(detokenize(seq, vocab()), "a white sheep and a red car");
}

TEST(Tokenizer, LengthLimit) {
  std::string p75, p76;
  for (int i = 0; i < 75; ++i) p75 += "dog ";
  p76 = p75 + "dog";
  EXPECT_EQ(tokenize(p75, vocab()).content_len, 75u);
  EXPECT_EQ(tokenize(p75, vocab()).eos_index(), 76u);
  EXPECT_SDG_ERROR(tokenize(p76, vocab()), ErrorCode::PromptTooLong);
}

TEST(Tokenizer, SequenceInvariantsOnRandomPrompts) {
  Rng rng(7);
  const auto& v = vocab();
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(75);
    std::string p;
    for (std::size_t i = 0; i < n; ++i) p += v.token(static_cast<int>(3 + rng.below(v.size() - 3))) + " ";
    const auto seq = tokenize(p, v);
    ASSERT_EQ(seq.content_len, n);
    EXPECT_EQ(seq.ids[0], v.bos());
    EXPECT_EQ(seq.ids[n + 1], v.eos());
    for (std::size_t i = 1; i <= n; ++i) EXPECT_FALSE(v.is_special(seq.ids[i]));
    for (std::size_t i = n + 2; i < kSequenceLength; ++i) EXPECT_EQ(seq.ids[i], v.pad());
  }
}

TEST(EmptySequence, BosEosPads) {
  const auto& v = vocab();
  const auto seq = empty_sequence(v);
  EXPECT_EQ(seq.content_len, 0u);
  EXPECT_EQ(seq.ids[0], v.bos());
  EXPECT_EQ(seq.ids[1], v.eos());
  EXPECT_EQ(seq.ids[2], v.pad());
}

// ---- constituency trees ----------------------------------------------------

struct TableRow {
  const char* name;
  std::vector<std::string> constituency;
  std::vector<std::string> scene_graph;
};

const std::vector<TableRow>& parser_table() {
  static const std::vector<TableRow> rows = {
      {"example0", {"A white sheep", "a red car"}, {"A white sheep", "a red car"}},
      {"example1",
       {"A silver car", "a black cat", "A silver car with a black cat"},
       {"A silver car", "a black cat", "top of it", "a black cat sleeping on top of it"}},
      {"example2",
       {"A horse", "a white field", "a black and green pole",
        "a white field next to a black and green pole"},
       {"A horse", "a white field", "a black and green pole", "A horse running in a white field"}},
      {"example3",
       {"red sauce", "the side", "the top and orange slices", "the top and orange slices on the side"},
       {"red sauce", "the side", "the top and orange slices", "Rice with red sauce",
        "red sauce with eggs", "the top and orange slices on the side",
        "red sauce with eggs over the top and orange slices"}},
      {"example4",
       {"A pink scooter", "a black seat", "a blue car"},
       {"A pink scooter", "a black seat", "a blue car", "a pink scooter with a black seat",
        "a black seat next to a blue car"}},
  };
  return rows;
}

std::map<std::string, std::string> example_prompts() {
  std::map<std::string, std::string> out;
  std::istringstream is(read_file(testutil::data_path("examples.tsv")));
  for (std::string line; std::getline(is, line);) {
    const auto tab = line.find('\t');
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

TEST(NounPhrases, ParserTableVerbatim) {
  const auto prompts = example_prompts();
  for (const auto& row : parser_table()) {
    const auto tree =
        load_parse_tree(testutil::data_path(std::string("trees/") + row.name + ".tree"),
                        prompts.at(row.name));
    EXPECT_EQ(extract_noun_phrases(tree), row.constituency) << row.name;
  }
}

TEST(NounPhrases, SingleNpTree) {
  EXPECT_EQ(extract_noun_phrases(parse_sexpr("(NP (DT a) (NN dog))")),
            std::vector<std::string>{"a dog"});
}

TEST(NounPhrases, NestedNpsYieldParentAndChild) {
  const auto t = parse_sexpr(
      "(S (NP (NP (DT a) (NN dog)) (PP (IN with) (NP (DT a) (NN hat)))) (VP (VBZ sits)))");
  EXPECT_EQ(extract_noun_phrases(t),
            (std::vector<std::string>{"a dog", "a hat", "a dog with a hat"}));
}

TEST(NounPhrases, DuplicatesPreserved) {
  const auto t = parse_sexpr("(S (NP (NP (DT a) (NN dog)) (CC and) (NP (DT a) (NN dog))))");
  EXPECT_EQ(extract_noun_phrases(t), (std::vector<std::string>{"a dog", "a dog"}));
}

TEST(NounPhrases, EmptyNodeIsMalformed) {
  EXPECT_SDG_ERROR(parse_sexpr("(S (NP))"), ErrorCode::MalformedTree);
  ParseTree bad = ParseTree::node("S", {ParseTree::node("NP", {})});
  EXPECT_SDG_ERROR(extract_noun_phrases(bad), ErrorCode::MalformedTree);
}

TEST(ParseTreeFile, SyntaxErrorsCarryPosition) {
  try {
    parse_sexpr("(S\n  (NP (DT a) (NN dog)");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SyntaxError);
    EXPECT_NE(std::string(e.what()).find("2:"), std::string::npos) << e.what();
  }
  EXPECT_SDG_ERROR(parse_sexpr("(np (DT a))"), ErrorCode::SyntaxError);
  EXPECT_SDG_ERROR(parse_sexpr("(S (NN a)) trailing"), ErrorCode::SyntaxError);
}

TEST(ParseTreeFile, LeafMismatch) {
  const auto t = parse_sexpr("(NP (DT a) (NN dog))");
  EXPECT_NO_THROW(check_leaves(t, "A dog."));
  EXPECT_SDG_ERROR(check_leaves(t, "a cat"), ErrorCode::LeafMismatch);
  EXPECT_SDG_ERROR(load_parse_tree(testutil::data_path("trees/example0.tree"), "a red car"),
                   ErrorCode::LeafMismatch);
  EXPECT_SDG_ERROR(load_parse_tree("/nonexistent/tree"), ErrorCode::IoError);
}

namespace {

ParseTree random_tree(Rng& rng, int depth) {
  static const char* labels[] = {"S", "NP", "VP", "PP", "ADJP", "NN", "DT"};
  static const char* words[] = {"a", "red", "dog", "on", "the", "mat", "Big", "it's"};
  if (depth == 0 || rng.bernoulli(0.3)) return ParseTree::leaf(words[rng.below(8)]);
  std::vector<ParseTree> kids;
  const std::size_t n = 1 + rng.below(3);
  for (std::size_t i = 0; i < n; ++i) kids.push_back(random_tree(rng, depth - 1));
  return ParseTree::node(labels[rng.below(7)], std::move(kids));
}

}  // namespace

TEST(ParseTreeProperty, SerializeReloadRoundTrip) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    auto t = random_tree(rng, 5);
    if (t.is_leaf()) t = ParseTree::node("NP", {t});
    EXPECT_EQ(parse_sexpr(to_sexpr(t)), t) << to_sexpr(t);
  }
}

// ---- chunker ---------------------------------------------------------------

TEST(Chunker, TwoColorObjectPhrases) {
  const auto seq = tokenize("a red apple and a yellow banana", vocab());
  const auto spans = chunk_noun_phrases(seq, vocab());
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0], (ConceptSpan{"a red apple", 1, 4}));
  EXPECT_EQ(spans[1], (ConceptSpan{"a yellow banana", 5, 8}));
}

TEST(Chunker, NoNounsNoSpans) {
  EXPECT_TRUE(chunk_noun_phrases(tokenize("running quickly", vocab()), vocab()).empty());
}

TEST(Chunker, BenchInFrontOfBuilding) {
  const auto spans =
      chunk_noun_phrases(tokenize("a brown bench in front of a white building", vocab()), vocab());
  std::vector<std::string> texts;
  for (const auto& s : spans) texts.push_back(s.text);
  EXPECT_EQ(texts, (std::vector<std::string>{"a brown bench", "front", "a white building"}));
}

TEST(ChunkerProperty, SpansNeverOverlapAndTokenizeBack) {
  Rng rng(5);
  const auto& v = vocab();
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(20);
    std::string p;
    for (std::size_t i = 0; i < n; ++i) p += v.token(static_cast<int>(3 + rng.below(v.size() - 3))) + " ";
    const auto seq = tokenize(p, v);
    std::size_t prev_end = 1;
    for (const auto& s : chunk_noun_phrases(seq, v)) {
      EXPECT_GE(s.token_start, prev_end);
      EXPECT_LT(s.token_start, s.token_end);
      EXPECT_LE(s.token_end, seq.content_len + 1);
      const auto ids = content_ids(s.text, v);
      EXPECT_TRUE(std::equal(ids.begin(), ids.end(), seq.ids.begin() + static_cast<long>(s.token_start)));
      EXPECT_EQ(ids.size(), s.length());
      prev_end = s.token_end;
    }
  }
}

// ---- scene graphs ----------------------------------------------------------

TEST(SceneGraph, ParserTableSpans) {
  const auto prompts = example_prompts();
  for (const auto& row : parser_table()) {
    const auto g = load_scene_graph(testutil::data_path(std::string("graphs/") + row.name + ".sg"),
                                    prompts.at(row.name));
    EXPECT_EQ(normalized(extract_scene_graph_spans(g)), normalized(row.scene_graph)) << row.name;
    // every span must be locatable in the prompt
    const auto seq = tokenize(prompts.at(row.name), vocab());
    EXPECT_NO_THROW(locate_concepts(extract_scene_graph_spans(g), seq, vocab()));
  }
}

TEST(SceneGraph, SingleEntity) {
  std::istringstream is("E 0 a dog\n");
  EXPECT_EQ(extract_scene_graph_spans(parse_scene_graph(is)), std::vector<std::string>{"a dog"});
}

TEST(SceneGraph, DanglingRelation) {
  std::istringstream is("E 0 a dog\nR 0 on 4\n");
  EXPECT_SDG_ERROR(parse_scene_graph(is), ErrorCode::DanglingRelation);
  SceneGraph g;
  g.entities.push_back({{"a"}, "dog"});
  g.relations.push_back({0, {"on"}, 3});
  EXPECT_SDG_ERROR(extract_scene_graph_spans(g), ErrorCode::DanglingRelation);
}

TEST(SceneGraph, SyntaxErrors) {
  std::istringstream a("X 0 dog\n");
  EXPECT_SDG_ERROR(parse_scene_graph(a), ErrorCode::SyntaxError);
  std::istringstream b("E 0 a dog\nE 0 a cat\n");
  EXPECT_SDG_ERROR(parse_scene_graph(b), ErrorCode::SyntaxError);
  std::istringstream c("E x dog\n");
  EXPECT_SDG_ERROR(parse_scene_graph(c), ErrorCode::SyntaxError);
}

TEST(SceneGraph, TextRoundTrip) {
  const auto g = load_scene_graph(testutil::data_path("graphs/example3.sg"));
  std::istringstream is(to_graph_text(g));
  EXPECT_EQ(extract_scene_graph_spans(parse_scene_graph(is)), extract_scene_graph_spans(g));
}

// ---- span location ---------------------------------------------------------

TEST(LocateSpan, RedCarInSheepPrompt) {
  std::set<std::size_t> used;
  const auto s = locate_span("a red car", tokenize("a white sheep and a red car", vocab()), vocab(), used);
  EXPECT_EQ(s.token_start, 5u);
  EXPECT_EQ(s.token_end, 8u);
}

TEST(LocateSpan, WholeContent) {
  std::set<std::size_t> used;
  const auto seq = tokenize("a white sheep and a red car", vocab());
  const auto s = locate_span("A white sheep and a red car", seq, vocab(), used);
  EXPECT_EQ(s.token_start, 1u);
  EXPECT_EQ(s.token_end, seq.content_len + 1);
}

TEST(LocateSpan, SecondOccurrenceThenExhausted) {
  const auto seq = tokenize("a dog and a dog", vocab());
  std::set<std::size_t> used;
  EXPECT_EQ(locate_span("a dog", seq, vocab(), used).token_start, 1u);
  EXPECT_EQ(locate_span("a dog", seq, vocab(), used).token_start, 4u);
  EXPECT_SDG_ERROR(locate_span("a dog", seq, vocab(), used), ErrorCode::SpanNotFound);
  std::set<std::size_t> fresh;
  EXPECT_SDG_ERROR(locate_span("a cat", seq, vocab(), fresh), ErrorCode::SpanNotFound);
}

TEST(LocateConcepts, CapAtEight) {
  std::string p;
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) {
    p += "a dog ";
    texts.push_back("a dog");
  }
  const auto set = locate_concepts(texts, tokenize(p, vocab()), vocab());
  EXPECT_EQ(set.spans.size(), kMaxConcepts);
  EXPECT_EQ(set.dropped, 2u);
  for (std::size_t i = 0; i < set.spans.size(); ++i) EXPECT_EQ(set.spans[i].token_start, 1 + 2 * i);
}

TEST(LocateConcepts, DifferentTextsMayShareStart) {
  const auto seq = tokenize("a red car with a cat", vocab());
  const auto set = locate_concepts({"a red car", "a red car with a cat"}, seq, vocab());
  ASSERT_EQ(set.spans.size(), 2u);
  EXPECT_EQ(set.spans[0].token_start, 1u);
  EXPECT_EQ(set.spans[1].token_start, 1u);
}
