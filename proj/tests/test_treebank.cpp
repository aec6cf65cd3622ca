#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "iptkit/error.hpp"
#include "iptkit/toydata.hpp"
#include "iptkit/treebank.hpp"
#include "support/fuzz.hpp"

using namespace iptkit;

namespace {

const char* kTwoWords =
    "# text = He runs\n"
    "1\tHe\the\tPRON\tPRP\t_\t2\tnsubj\t_\t_\n"
    "2\truns\trun\tVERB\tVBZ\t_\t0\troot\t_\tSpaceAfter=No\n"
    "\n";

// Reachability from node 0 by breadth-first search over child lists; an
// independent check of the three tree flags.
TreeCheck bfs_oracle(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  TreeCheck c;
  c.is_single_root = std::count(heads.begin(), heads.end(), 0) == 1;
  std::vector<std::vector<int>> children(n + 1);
  for (int i = 0; i < n; ++i)
    if (heads[i] >= 0 && heads[i] <= n) children[heads[i]].push_back(i + 1);
  std::vector<bool> seen(n + 1, false);
  std::vector<int> queue{0};
  seen[0] = true;
  for (std::size_t q = 0; q < queue.size(); ++q)
    for (int ch : children[queue[q]])
      if (!seen[ch]) {
        seen[ch] = true;
        queue.push_back(ch);
      }
  c.is_connected = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
  // Functional graph: every node has one parent, so unreachable nodes from
  // the root sit on (or hang off) a cycle.
  c.is_acyclic = c.is_connected;
  return c;
}

}  // namespace

TEST(ParseConllu, MinimalTwoWordSentence) {
  const auto doc = parse_conllu(kTwoWords);
  ASSERT_EQ(doc.size(), 1u);
  ASSERT_EQ(doc[0].size(), 2u);
  EXPECT_EQ(doc[0].tokens[1].head, 0);
  EXPECT_EQ(doc[0].tokens[0].deprel, "nsubj");
  EXPECT_EQ(doc[0].text(), "He runs");
  EXPECT_EQ(doc[0].tokens[1].misc, "SpaceAfter=No");
}

TEST(ParseConllu, RangeAndEmptyNodeLinesAreKeptOutOfTokens) {
  const std::string text =
      "1\tI\t_\t_\t_\t_\t2\tnsubj\t_\t_\n"
      "2-3\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "2\tdo\t_\t_\t_\t_\t0\troot\t_\t_\n"
      "3\tn't\t_\t_\t_\t_\t2\tadvmod\t_\t_\n"
      "3.1\tgo\t_\t_\t_\t_\t_\t_\t2:conj\t_\n"
      "\n";
  const auto doc = parse_conllu(text);
  ASSERT_EQ(doc[0].size(), 3u);
  ASSERT_EQ(doc[0].extra.size(), 2u);
  EXPECT_EQ(doc[0].extra[0].before_token, 1u);
  EXPECT_EQ(serialize_conllu(doc), text);
}

TEST(ParseConllu, WrongColumnCountReportsLine) {
  const std::string text = "# c\n1\tHe\the\tPRON\t_\t_\t0\troot\t_\n\n";
  try {
    parse_conllu(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseConllu, NonIntegerHeadIsAnError) {
  EXPECT_THROW(parse_conllu("1\tHe\t_\t_\t_\t_\tx\troot\t_\t_\n\n"), ParseError);
  EXPECT_THROW(parse_conllu("2\tHe\t_\t_\t_\t_\t0\troot\t_\t_\n\n"), ParseError);
}

TEST(ParseConllu, CarriageReturnsAreNormalized) {
  std::string crlf;
  for (char c : std::string(kTwoWords)) {
    if (c == '\n') crlf += '\r';
    crlf += c;
  }
  EXPECT_EQ(serialize_conllu(parse_conllu(crlf)), kTwoWords);
}

TEST(SerializeConllu, EmptyAndSingleToken) {
  EXPECT_EQ(serialize_conllu({}), "");
  Sentence s;
  Token t;
  t.id = 1;
  t.form = "Hi";
  t.deprel = "root";
  s.tokens.push_back(t);
  EXPECT_EQ(serialize_conllu({s}), "1\tHi\t_\t_\t_\t_\t0\troot\t_\t_\n\n");
}

TEST(SerializeConllu, GeneratedTreebankRoundTripsByteForByte) {
  Rng rng(21);
  const auto sents = generate_treebank(ToyGrammar::standard(), 20, rng);
  const std::string text = serialize_conllu(sents);
  EXPECT_EQ(serialize_conllu(parse_conllu(text)), text);
  EXPECT_EQ(parse_conllu(text), sents);
}

TEST(SerializeConllu, FuzzCorpusRoundTrips) {
  Rng rng(77);
  const auto corpus = fuzz::random_corpus(100, rng);
  const std::string text = serialize_conllu(corpus);
  const auto back = parse_conllu(text);
  EXPECT_EQ(back, corpus);
  EXPECT_EQ(serialize_conllu(back), text);
}

TEST(ValidateTree, SpecExamples) {
  EXPECT_TRUE(validate_heads({0}).ok());
  const TreeCheck cyc = validate_heads({2, 1});
  EXPECT_FALSE(cyc.is_single_root);
  EXPECT_FALSE(cyc.is_acyclic);
}

TEST(ValidateTree, RandomHeadVectorsMatchReachabilityOracle) {
  Rng rng(5);
  std::uniform_int_distribution<int> h(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> heads(5);
    for (auto& x : heads) x = h(rng);
    const TreeCheck got = validate_heads(heads);
    const TreeCheck want = bfs_oracle(heads);
    EXPECT_EQ(got.is_single_root, want.is_single_root);
    EXPECT_EQ(got.is_connected, want.is_connected);
    EXPECT_EQ(got.is_acyclic, want.is_acyclic);
  }
}

TEST(FilterTrees, StrictThrowsLenientSkipsWithWarning) {
  auto doc = parse_conllu(kTwoWords);
  Sentence bad = doc[0];
  bad.tokens[0].head = 2;
  bad.tokens[1].head = 1;
  std::vector<Sentence> mixed{doc[0], bad, doc[0]};
  EXPECT_THROW(filter_trees(mixed, true), Error);
  std::vector<std::string> warnings;
  EXPECT_EQ(filter_trees(mixed, false, &warnings).size(), 2u);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(LabelInventory, SortedWithReservedUnknown) {
  const auto doc = parse_conllu(kTwoWords);
  const LabelInventory inv = build_label_inventory(doc);
  EXPECT_EQ(inv.size(), 2u);
  EXPECT_EQ(inv.num_classes(), 3u);
  EXPECT_EQ(inv.index_of("nsubj"), 0u);
  EXPECT_EQ(inv.index_of("root"), 1u);
  EXPECT_EQ(inv.index_of("obl"), inv.unknown_index());
  EXPECT_EQ(inv.label(inv.unknown_index()), "_");
  EXPECT_THROW(build_label_inventory({}), Error);
}

TEST(LabelInventory, ShuffledCorpusGivesIdenticalInventory) {
  Rng rng(3);
  auto sents = fuzz::random_corpus(40, rng);
  const LabelInventory a = build_label_inventory(sents);
  std::shuffle(sents.begin(), sents.end(), rng);
  EXPECT_EQ(build_label_inventory(sents), a);
}

// No UD sample ships with the repository, so the line-scan oracle runs on
// a fuzzed document that uses UD-style labels (including subtypes).
TEST(LabelInventory, CountMatchesLineScanOracle) {
  Rng rng(8);
  const std::string text = serialize_conllu(fuzz::random_corpus(100, rng));
  std::set<std::string> seen;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, '\t');) cols.push_back(c);
    if (cols[0].find_first_of("-.") != std::string::npos) continue;
    seen.insert(cols[7]);
  }
  EXPECT_EQ(build_label_inventory(parse_conllu(text)).size(), seen.size());
}
