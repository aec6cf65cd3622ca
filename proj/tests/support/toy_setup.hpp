// Small toy corpora, tokenizer and encoder shared by pipeline tests.
#pragma once

#include <vector>

#include "iptkit/pipeline.hpp"
#include "iptkit/toydata.hpp"

namespace toy {

struct Setup {
  std::vector<iptkit::Sentence> train, dev, test;
  iptkit::Vocab vocab;
  iptkit::LabelInventory labels;
  iptkit::Checkpoint base;
};

inline iptkit::EncoderConfig small_encoder(std::size_t vocab_size) {
  iptkit::EncoderConfig c;
  c.layers = 1;
  c.hidden = 16;
  c.heads = 2;
  c.ffn = 32;
  c.max_len = 40;
  c.vocab_size = vocab_size;
  c.dropout = 0.1;
  return c;
}

/// `n` sentences split 80/10/10.
inline Setup make(std::size_t n, std::uint64_t seed, std::size_t vocab_size = 320) {
  using namespace iptkit;
  Rng rng(seed);
  auto all = generate_treebank(ToyGrammar::standard(), n, rng);
  const std::size_t n_train = n * 8 / 10, n_dev = n / 10;
  const auto at = [&](std::size_t i) { return all.begin() + static_cast<std::ptrdiff_t>(i); };
  std::vector<Sentence> train(all.begin(), at(n_train)), dev(at(n_train), at(n_train + n_dev)),
      test(at(n_train + n_dev), all.end());
  std::vector<std::vector<std::string>> corpus;
  for (const auto& x : train) corpus.push_back(x.forms());
  Vocab vocab = train_bpe(corpus, vocab_size);
  LabelInventory labels = build_label_inventory(train);
  Rng mrng(fork_seed(seed, "base"));
  Checkpoint base{"base", Model(small_encoder(vocab.size()), mrng), vocab, std::nullopt, "", {}};
  return Setup{std::move(train), std::move(dev), std::move(test), std::move(vocab), std::move(labels),
               std::move(base)};
}

inline iptkit::ParseTask parse_task(const Setup& s) {
  const std::size_t max_len = s.base.model.config().max_len;
  return iptkit::ParseTask(iptkit::make_parse_examples(s.train, s.vocab, s.labels, max_len),
                           iptkit::make_parse_examples(s.dev, s.vocab, s.labels, max_len),
                           s.labels.num_classes());
}

inline std::vector<std::vector<int>> ids(const std::vector<iptkit::Sentence>& sents,
                                         const iptkit::Vocab& vocab) {
  std::vector<std::vector<int>> out;
  for (const auto& x : sents) out.push_back(iptkit::encode_words(x.forms(), vocab).ids);
  return out;
}

inline iptkit::SeqcTask seqc_task(const Setup& s, std::size_t items, std::uint64_t seed) {
  using namespace iptkit;
  Rng rng(seed);
  const auto rows = generate_seqc(ToyGrammar::standard(), items, rng);
  const std::size_t max_len = s.base.model.config().max_len;
  const auto ex = make_seqc_examples(rows, s.vocab, 2, max_len);
  const std::size_t a = items * 8 / 10, b = items * 9 / 10;
  return SeqcTask({ex.begin(), ex.begin() + static_cast<std::ptrdiff_t>(a)},
                  {ex.begin() + static_cast<std::ptrdiff_t>(a), ex.begin() + static_cast<std::ptrdiff_t>(b)},
                  {ex.begin() + static_cast<std::ptrdiff_t>(b), ex.end()}, 2);
}

}  // namespace toy
