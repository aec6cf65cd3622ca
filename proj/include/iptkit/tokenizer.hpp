#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace iptkit {

enum SpecialId : int { kPad = 0, kCls = 1, kSep = 2, kUnk = 3, kMask = 4 };
inline constexpr int kNumSpecials = 5;
inline constexpr int kMinVocabSize = kNumSpecials + 256;

/// Byte-level BPE vocabulary.
///
/// Pieces are stored in the printable byte-to-unicode alphabet used by GPT-2
/// so every piece is valid UTF-8. Each word is encoded on its own, so no
/// piece ever spans two treebank words; word boundaries live in the
/// Alignment rather than in the pieces.
class Vocab {
 public:
  /// Specials and the 256 byte pieces, no merges.
  Vocab();

  std::size_t size() const noexcept { return pieces_.size(); }
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& pieces() const noexcept { return pieces_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const noexcept {
    return merges_;
  }
  /// kUnk when absent.
  int id_of(std::string_view piece) const;
  bool is_special(int id) const noexcept { return id >= 0 && id < kNumSpecials; }

  /// Piece ids for one word (no CLS/SEP).
  std::vector<int> encode_word(std::string_view word) const;

  void add_merge(std::string left, std::string right);

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  friend bool operator==(const Vocab& a, const Vocab& b) {
    return a.pieces_ == b.pieces_ && a.merges_ == b.merges_;
  }

 private:
  std::vector<std::string> pieces_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::string, int, std::less<>> index_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
};

/// Printable alphabet symbol of a raw byte.
const std::string& byte_symbol(unsigned char byte);
/// Word bytes as alphabet symbols.
std::vector<std::string> word_symbols(std::string_view word);

/// Learns merges until the vocabulary holds `vocab_size` pieces or no pair
/// remains. Pair-frequency ties go to the lexicographically smallest pair.
Vocab train_bpe(const std::vector<std::vector<std::string>>& corpus, std::size_t vocab_size);

/// For each word w, the subword positions [first, second) it occupies.
struct Alignment {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

struct Encoding {
  std::vector<int> ids;  // [CLS] pieces... [SEP]
  Alignment alignment;
};

Encoding encode_words(const std::vector<std::string>& words, const Vocab& vocab);

/// Raw bytes of every non-special piece, one string per piece.
std::vector<std::string> decode(const std::vector<int>& ids, const Vocab& vocab);
/// One string per aligned word.
std::vector<std::string> decode_words(const std::vector<int>& ids, const Alignment& alignment,
                                      const Vocab& vocab);
/// Concatenated raw bytes of a run of pieces; specials skipped.
std::string decode_pieces(std::span<const int> ids, const Vocab& vocab);

/// Spans are non-empty, ordered, contiguous and cover positions 1..T-2.
bool alignment_valid(const Alignment& a, std::size_t sequence_length);

}  // namespace iptkit
