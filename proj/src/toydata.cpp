#include "iptkit/toydata.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "iptkit/error.hpp"

namespace iptkit {
namespace {

const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

Token word(int id, const std::string& form, const char* upos, int head, const char* rel) {
  Token t;
  t.id = id;
  t.form = form;
  t.lemma = form;
  t.upos = upos;
  t.head = head;
  t.deprel = rel;
  return t;
}

// Appends an NP whose noun attaches to `head` with `rel`. Word ids are
// assigned after the fact, so heads are patched once the noun id is known.
void noun_phrase(const ToyGrammar& g, Rng& rng, std::vector<Token>& out, int head, const char* rel) {
  std::uniform_int_distribution<int> n_adj(0, 2);
  const int adjs = n_adj(rng);
  const int first = static_cast<int>(out.size()) + 1;
  const int noun = first + 1 + adjs;
  out.push_back(word(first, pick(g.determiners, rng), "DET", noun, "det"));
  for (int a = 0; a < adjs; ++a)
    out.push_back(word(first + 1 + a, pick(g.adjectives, rng), "ADJ", noun, "amod"));
  out.push_back(word(noun, pick(g.nouns, rng), "NOUN", head, rel));
}

Sentence make_sentence(const ToyGrammar& g, Rng& rng) {
  std::vector<Token> toks;
  noun_phrase(g, rng, toks, 0, "nsubj");
  const int verb = static_cast<int>(toks.size()) + 1;
  toks.back().head = verb;
  toks.push_back(word(verb, pick(g.verbs, rng), "VERB", 0, "root"));
  std::bernoulli_distribution transitive(g.transitive_rate);
  if (transitive(rng)) noun_phrase(g, rng, toks, verb, "obj");
  Sentence s;
  s.tokens = std::move(toks);
  std::string text;
  for (const auto& t : s.tokens) text += (text.empty() ? "" : " ") + t.form;
  s.comments.push_back("# text = " + text);
  return s;
}

std::string noun_with(const Sentence& s, const char* rel) {
  for (const auto& t : s.tokens)
    if (t.deprel == rel) return t.form;
  return "";
}

std::string sentence_text(const Sentence& s) {
  std::string out;
  for (const auto& t : s.tokens) out += (out.empty() ? "" : " ") + t.form;
  return out;
}

}  // namespace

ToyGrammar ToyGrammar::standard() {
  ToyGrammar g;
  g.determiners = {"the", "a", "this", "that", "every", "some"};
  g.adjectives = {"red",   "small", "old",  "quick", "quiet", "bright", "heavy", "young",
                  "green", "tall",  "cold", "happy", "dark",  "strong", "soft",  "brave"};
  g.nouns = {"dog",    "cat",   "bird",    "farmer", "teacher", "river", "garden", "horse",
             "child",  "city",  "doctor",  "window", "table",   "apple", "letter", "train",
             "sailor", "forest", "student", "lamp",  "baker",   "queen", "robot",  "ship"};
  g.verbs = {"sees",  "likes",  "finds",  "watches", "follows", "paints", "visits",
             "helps", "chases", "builds", "carries", "moves",   "greets", "knows"};
  return g;
}

std::vector<Sentence> generate_treebank(const ToyGrammar& g, std::size_t count, Rng& rng) {
  std::vector<Sentence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Sentence s = make_sentence(g, rng);
    s.comments.insert(s.comments.begin(), "# sent_id = toy-" + std::to_string(i + 1));
    out.push_back(std::move(s));
  }
  return out;
}

std::string subject_noun(const Sentence& s) { return noun_with(s, "nsubj"); }
std::string object_noun(const Sentence& s) { return noun_with(s, "obj"); }

std::vector<nlohmann::json> generate_seqc(const ToyGrammar& g, std::size_t count, Rng& rng) {
  ToyGrammar transitive = g;
  transitive.transitive_rate = 1.0;
  std::vector<nlohmann::json> rows;
  std::bernoulli_distribution positive(0.5);
  for (std::size_t i = 0; i < count; ++i) {
    Sentence a = make_sentence(transitive, rng);
    Sentence b = make_sentence(g, rng);
    const bool want = positive(rng);
    for (auto& t : b.tokens) {
      if (t.deprel != "nsubj") continue;
      if (want) {
        t.form = t.lemma = object_noun(a);
      } else {
        while (t.form == object_noun(a)) t.form = t.lemma = pick(g.nouns, rng);
      }
    }
    rows.push_back({{"text_a", sentence_text(a)}, {"text_b", sentence_text(b)},
                    {"label", want ? 1 : 0}});
  }
  return rows;
}

std::vector<nlohmann::json> generate_mcc(const ToyGrammar& g, std::size_t count, std::size_t k,
                                         Rng& rng) {
  if (k < 2 || k > g.nouns.size()) throw ConfigError("mcc: answer count out of range");
  std::vector<nlohmann::json> rows;
  for (std::size_t i = 0; i < count; ++i) {
    Sentence p = make_sentence(g, rng);
    const std::string subj = subject_noun(p);
    std::vector<std::string> answers{subj};
    while (answers.size() < k) {
      const std::string& n = pick(g.nouns, rng);
      if (std::find(answers.begin(), answers.end(), n) == answers.end()) answers.push_back(n);
    }
    std::shuffle(answers.begin(), answers.end(), rng);
    const auto correct = std::find(answers.begin(), answers.end(), subj) - answers.begin();
    rows.push_back({{"premise", sentence_text(p)}, {"question", "who acts"},
                    {"answers", answers}, {"correct", correct}});
  }
  return rows;
}

std::string to_jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

std::vector<nlohmann::json> parse_jsonl(const std::string& text) {
  std::vector<nlohmann::json> rows;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return rows;
}

void write_toy_dataset(const std::filesystem::path& dir, std::uint64_t seed, std::size_t sentences,
                       std::size_t task_items) {
  std::filesystem::create_directories(dir);
  const ToyGrammar g = ToyGrammar::standard();
  Rng rng(seed);
  const auto tb = generate_treebank(g, sentences, rng);
  const std::size_t n_train = sentences * 8 / 10, n_dev = sentences / 10;
  auto slice = [&](std::size_t from, std::size_t to) {
    return std::vector<Sentence>(tb.begin() + static_cast<std::ptrdiff_t>(from),
                                 tb.begin() + static_cast<std::ptrdiff_t>(to));
  };
  write_conllu_file((dir / "toy-train.conllu").string(), slice(0, n_train));
  write_conllu_file((dir / "toy-dev.conllu").string(), slice(n_train, n_train + n_dev));
  write_conllu_file((dir / "toy-test.conllu").string(), slice(n_train + n_dev, tb.size()));
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << text;
  };
  for (const std::string split : {"train", "dev", "test"}) {
    const std::size_t n = split == "train" ? task_items : task_items / 4;
    write(dir / ("seqc-" + split + ".jsonl"), to_jsonl(generate_seqc(g, n, rng)));
    write(dir / ("mcc-" + split + ".jsonl"), to_jsonl(generate_mcc(g, n, 3, rng)));
  }
}

}  // namespace iptkit
