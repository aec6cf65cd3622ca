// Random CoNLL-U documents and head vectors for property tests.
#pragma once

#include <string>
#include <vector>

#include "iptkit/treebank.hpp"

namespace fuzz {

using iptkit::Rng;

inline std::string random_field(Rng& rng, bool allow_underscore = true) {
  static const std::vector<std::string> atoms = {"a", "B", "z", "0", "9", "-", ".", ",", "'", "é",
                                                 "ß", "中", "Ж", "=", "|", ":", "x", "q", " "};
  std::uniform_int_distribution<int> len(1, 6);
  std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1);
  if (allow_underscore && std::bernoulli_distribution(0.3)(rng)) return "_";
  std::string s;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) s += atoms[pick(rng)];
  // Leading or trailing spaces make a field ambiguous to read back.
  if (s.front() == ' ') s.front() = 'k';
  if (s.back() == ' ') s.back() = 'k';
  return s;
}

/// A uniformly attached random tree: each word in a random order hangs off
/// the root or an already attached word. Exactly one word attaches to 0.
inline std::vector<int> random_tree(std::size_t n, Rng& rng) {
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i + 1);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> heads(n, 0);
  for (std::size_t k = 1; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    heads[order[k] - 1] = order[pick(rng)];
  }
  return heads;
}

inline iptkit::Sentence random_sentence(Rng& rng) {
  static const std::vector<std::string> rels = {"root", "nsubj", "obj", "det", "amod",
                                                "punct", "nmod:poss", "compound:prt"};
  std::uniform_int_distribution<std::size_t> n_dist(1, 12), rel(0, rels.size() - 1);
  iptkit::Sentence s;
  const std::size_t n = n_dist(rng);
  std::bernoulli_distribution coin(0.3);
  if (coin(rng)) s.comments.push_back("# sent_id = fuzz-" + std::to_string(n_dist(rng)));
  if (coin(rng)) s.comments.push_back("# text = " + random_field(rng, false));
  if (coin(rng)) s.comments.push_back("#");
  const std::vector<int> heads = random_tree(n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    iptkit::Token t;
    t.id = static_cast<int>(i + 1);
    t.form = random_field(rng, false);
    t.lemma = random_field(rng);
    t.upos = random_field(rng);
    t.xpos = random_field(rng);
    t.feats = random_field(rng);
    t.head = heads[i];
    t.deprel = heads[i] == 0 ? "root" : rels[rel(rng)];
    t.deps = random_field(rng);
    t.misc = random_field(rng);
    s.tokens.push_back(std::move(t));
  }
  if (n >= 2 && coin(rng)) {
    std::uniform_int_distribution<std::size_t> at(0, n - 2);
    const std::size_t a = at(rng);
    s.extra.push_back({a, std::to_string(a + 1) + "-" + std::to_string(a + 2) +
                              "\t" + random_field(rng, false) + "\t_\t_\t_\t_\t_\t_\t_\t_"});
  }
  if (coin(rng)) {
    s.extra.push_back({n, std::to_string(n) + ".1\t" + random_field(rng, false) +
                              "\t_\t_\t_\t_\t_\t_\t" + std::to_string(n) + ":dep\t_"});
  }
  return s;
}

inline std::vector<iptkit::Sentence> random_corpus(std::size_t count, Rng& rng) {
  std::vector<iptkit::Sentence> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_sentence(rng));
  return out;
}

}  // namespace fuzz
