#include "iptkit/tokenizer.hpp"

#include <array>
#include <fstream>
#include <limits>
#include <sstream>

#include "iptkit/error.hpp"

namespace iptkit {
namespace {

constexpr std::array<const char*, kNumSpecials> kSpecialNames = {"[PAD]", "[CLS]", "[SEP]",
                                                                 "[UNK]", "[MASK]"};

std::string utf8(unsigned cp) {
  std::string s;
  if (cp < 0x80) {
    s += static_cast<char>(cp);
  } else if (cp < 0x800) {
    s += static_cast<char>(0xC0 | (cp >> 6));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    s += static_cast<char>(0xE0 | (cp >> 12));
    s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    s += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return s;
}

struct ByteTables {
  std::array<std::string, 256> symbol;
  std::map<std::string, unsigned char, std::less<>> byte;

  ByteTables() {
    unsigned extra = 0;
    for (unsigned b = 0; b < 256; ++b) {
      const bool printable = (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE);
      symbol[b] = utf8(printable ? b : 256 + extra++);
      byte.emplace(symbol[b], static_cast<unsigned char>(b));
    }
  }
};

const ByteTables& tables() {
  static const ByteTables t;
  return t;
}

// Splits a piece string back into its alphabet symbols and returns raw bytes.
std::string piece_bytes(std::string_view piece) {
  std::string out;
  std::size_t i = 0;
  while (i < piece.size()) {
    const auto lead = static_cast<unsigned char>(piece[i]);
    const std::size_t len = lead < 0x80 ? 1 : (lead >> 5) == 0x6 ? 2 : 3;
    auto it = tables().byte.find(piece.substr(i, len));
    if (it == tables().byte.end()) throw Error("vocab: piece outside the byte alphabet");
    out += static_cast<char>(it->second);
    i += len;
  }
  return out;
}

}  // namespace

const std::string& byte_symbol(unsigned char byte) { return tables().symbol[byte]; }

std::vector<std::string> word_symbols(std::string_view word) {
  std::vector<std::string> out;
  out.reserve(word.size());
  for (char c : word) out.push_back(byte_symbol(static_cast<unsigned char>(c)));
  return out;
}

Vocab::Vocab() {
  for (const char* s : kSpecialNames) {
    index_.emplace(s, static_cast<int>(pieces_.size()));
    pieces_.emplace_back(s);
  }
  for (unsigned b = 0; b < 256; ++b) {
    index_.emplace(byte_symbol(static_cast<unsigned char>(b)), static_cast<int>(pieces_.size()));
    pieces_.push_back(byte_symbol(static_cast<unsigned char>(b)));
  }
}

int Vocab::id_of(std::string_view piece) const {
  auto it = index_.find(piece);
  return it == index_.end() ? kUnk : it->second;
}

void Vocab::add_merge(std::string left, std::string right) {
  std::string joined = left + right;
  merge_rank_.emplace(std::make_pair(left, right), merges_.size());
  merges_.emplace_back(std::move(left), std::move(right));
  if (index_.emplace(joined, static_cast<int>(pieces_.size())).second) {
    pieces_.push_back(std::move(joined));
  }
}

std::vector<int> Vocab::encode_word(std::string_view word) const {
  if (word.empty()) return {kUnk};
  std::vector<std::string> sym = word_symbols(word);
  while (sym.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      auto it = merge_rank_.find({sym[i], sym[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const auto& [left, right] = merges_[best_rank];
    std::vector<std::string> next;
    next.reserve(sym.size());
    for (std::size_t i = 0; i < sym.size();) {
      if (i + 1 < sym.size() && sym[i] == left && sym[i + 1] == right) {
        next.push_back(left + right);
        i += 2;
      } else {
        next.push_back(std::move(sym[i]));
        ++i;
      }
    }
    sym = std::move(next);
  }
  std::vector<int> ids;
  ids.reserve(sym.size());
  for (const auto& s : sym) ids.push_back(id_of(s));
  return ids;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json j;
  j["format"] = "iptkit-vocab";
  j["version"] = 1;
  j["specials"] = nlohmann::json::array();
  for (int i = 0; i < kNumSpecials; ++i) j["specials"].push_back({{"name", pieces_[i]}, {"id", i}});
  j["pieces"] = pieces_;
  j["merges"] = nlohmann::json::array();
  for (const auto& [l, r] : merges_) j["merges"].push_back({l, r});
  return j;
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "iptkit-vocab") throw ParseError("vocab: unknown format");
    if (j.at("version") != 1) throw ParseError("vocab: unsupported version");
    Vocab v;
    for (const auto& m : j.at("merges")) v.add_merge(m.at(0), m.at(1));
    if (j.at("pieces").get<std::vector<std::string>>() != v.pieces_) {
      throw ParseError("vocab: pieces inconsistent with merges");
    }
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("vocab: ") + e.what());
  }
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << to_json().dump(1) << '\n';
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("vocab: ") + e.what());
  }
}

Vocab train_bpe(const std::vector<std::vector<std::string>>& corpus, std::size_t vocab_size) {
  if (vocab_size < static_cast<std::size_t>(kMinVocabSize)) {
    throw Error("train_bpe: vocab_size must be at least " + std::to_string(kMinVocabSize));
  }
  std::map<std::string, std::size_t> freq;
  for (const auto& sentence : corpus)
    for (const auto& w : sentence) ++freq[w];
  if (freq.empty()) throw Error("train_bpe: empty corpus");

  std::vector<std::vector<std::string>> words;
  std::vector<std::size_t> counts;
  for (const auto& [w, c] : freq) {
    words.push_back(word_symbols(w));
    counts.push_back(c);
  }

  Vocab vocab;
  while (vocab.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (std::size_t w = 0; w < words.size(); ++w)
      for (std::size_t i = 0; i + 1 < words[w].size(); ++i)
        pairs[{words[w][i], words[w][i + 1]}] += counts[w];
    if (pairs.empty()) break;
    // std::map iterates pairs in lexicographic order, so the first maximum wins ties.
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [left, right] = best->first;
    vocab.add_merge(left, right);
    for (auto& sym : words) {
      std::vector<std::string> next;
      next.reserve(sym.size());
      for (std::size_t i = 0; i < sym.size();) {
        if (i + 1 < sym.size() && sym[i] == left && sym[i + 1] == right) {
          next.push_back(left + right);
          i += 2;
        } else {
          next.push_back(std::move(sym[i]));
          ++i;
        }
      }
      sym = std::move(next);
    }
  }
  return vocab;
}

Encoding encode_words(const std::vector<std::string>& words, const Vocab& vocab) {
  Encoding enc;
  enc.ids.push_back(kCls);
  for (const auto& w : words) {
    const std::size_t start = enc.ids.size();
    for (int id : vocab.encode_word(w)) enc.ids.push_back(id);
    enc.alignment.spans.emplace_back(start, enc.ids.size());
  }
  enc.ids.push_back(kSep);
  return enc;
}

std::string decode_pieces(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids)
    if (!vocab.is_special(id)) out += piece_bytes(vocab.piece(id));
  return out;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocab& vocab) {
  std::vector<std::string> out;
  for (int id : ids)
    if (!vocab.is_special(id)) out.push_back(piece_bytes(vocab.piece(id)));
  return out;
}

std::vector<std::string> decode_words(const std::vector<int>& ids, const Alignment& alignment,
                                      const Vocab& vocab) {
  std::vector<std::string> words;
  words.reserve(alignment.spans.size());
  for (const auto& [b, e] : alignment.spans) {
    if (b > e || e > ids.size()) throw Error("decode_words: span out of range");
    words.push_back(decode_pieces(std::span<const int>(ids).subspan(b, e - b), vocab));
  }
  return words;
}

bool alignment_valid(const Alignment& a, std::size_t sequence_length) {
  if (sequence_length < 2) return false;
  std::size_t expect = 1;
  for (const auto& [b, e] : a.spans) {
    if (b != expect || e <= b) return false;
    expect = e;
  }
  return expect == sequence_length - 1;
}

}  // namespace iptkit
