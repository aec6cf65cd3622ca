#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "iptkit/tensor.hpp"
#include "iptkit/treebank.hpp"

namespace iptkit {

/// Synthetic head grammar:
///   S  -> NP_subj VERB [NP_obj]
///   NP -> DET ADJ{0,2} NOUN
/// Determiners attach to their noun (det), adjectives to their noun (amod),
/// the subject noun to the verb (nsubj), the object noun to the verb (obj)
/// and the verb to the root (root).
struct ToyGrammar {
  std::vector<std::string> determiners;
  std::vector<std::string> adjectives;
  std::vector<std::string> nouns;
  std::vector<std::string> verbs;
  double transitive_rate = 0.8;

  static ToyGrammar standard();
};

std::vector<Sentence> generate_treebank(const ToyGrammar& g, std::size_t count, Rng& rng);

/// The subject and object nouns of a generated sentence ("" when absent).
std::string subject_noun(const Sentence& s);
std::string object_noun(const Sentence& s);

/// SEQC pairs: label 1 when b's subject noun equals a's object noun.
std::vector<nlohmann::json> generate_seqc(const ToyGrammar& g, std::size_t count, Rng& rng);
/// MCC items: which of K nouns is the premise's subject.
std::vector<nlohmann::json> generate_mcc(const ToyGrammar& g, std::size_t count, std::size_t k,
                                         Rng& rng);

std::string to_jsonl(const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> parse_jsonl(const std::string& text);

/// Writes toy-{train,dev,test}.conllu (an 80/10/10 split of `sentences`)
/// and seqc-*.jsonl / mcc-*.jsonl with `task_items` training rows and a
/// quarter as many for dev and test.
void write_toy_dataset(const std::filesystem::path& dir, std::uint64_t seed, std::size_t sentences,
                       std::size_t task_items);

}  // namespace iptkit
