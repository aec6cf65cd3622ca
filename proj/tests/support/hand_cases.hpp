// Small hand-counted parse-evaluation fixtures.
#pragma once

#include <string>
#include <vector>

#include "iptkit/treebank.hpp"

namespace hand {

inline iptkit::Sentence sentence(const std::vector<int>& heads, const std::vector<std::string>& rels) {
  iptkit::Sentence s;
  for (std::size_t i = 0; i < heads.size(); ++i) {
    iptkit::Token t;
    t.id = static_cast<int>(i + 1);
    t.form = "w" + std::to_string(i + 1);
    t.head = heads[i];
    t.deprel = rels[i];
    s.tokens.push_back(t);
  }
  return s;
}

// Gold: w2 is the root, w1 and w3 attach to it, w4 to w3.
inline iptkit::Sentence gold() { return sentence({2, 0, 2, 3}, {"nsubj", "root", "obj", "amod"}); }

// Heads of w1..w3 right, w4 wrong; labels right on w1 and w2 only.
inline iptkit::Sentence three_of_four() {
  return sentence({2, 0, 2, 1}, {"nsubj", "root", "det", "amod"});
}

// Every head right, every label wrong.
inline iptkit::Sentence labels_wrong() { return sentence({2, 0, 2, 3}, {"det", "obj", "root", "nsubj"}); }

}  // namespace hand
