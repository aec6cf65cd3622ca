#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace iptkit {

/// One word line of a CoNLL-U sentence. Columns the toolkit does not model
/// (XPOS, FEATS, DEPS, MISC) are carried verbatim.
struct Token {
  int id = 0;
  std::string form;
  std::string lemma = "_";
  std::string upos = "_";
  std::string xpos = "_";
  std::string feats = "_";
  int head = 0;
  std::string deprel;
  std::string deps = "_";
  std::string misc = "_";

  friend bool operator==(const Token&, const Token&) = default;
};

/// A multiword-token range ("3-4") or empty node ("5.1") line. These are
/// not parsing targets but are kept so documents round-trip.
struct ExtraLine {
  std::size_t before_token = 0;  // index into Sentence::tokens
  std::string line;

  friend bool operator==(const ExtraLine&, const ExtraLine&) = default;
};

struct Sentence {
  std::vector<std::string> comments;  // raw, including the leading '#'
  std::vector<Token> tokens;
  std::vector<ExtraLine> extra;

  std::size_t size() const noexcept { return tokens.size(); }
  /// Value of a "# text = ..." comment, if any.
  std::optional<std::string> text() const;
  std::vector<std::string> forms() const;
  std::vector<int> heads() const;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

/// Throws ParseError (with the 1-based line number) on a wrong column count,
/// a non-integer id or head, or non-consecutive word ids.
std::vector<Sentence> parse_conllu(std::string_view text);
std::string serialize_conllu(const std::vector<Sentence>& sentences);

std::vector<Sentence> read_conllu_file(const std::string& path);
void write_conllu_file(const std::string& path, const std::vector<Sentence>& sentences);

struct TreeCheck {
  bool is_single_root = false;
  bool is_acyclic = false;
  bool is_connected = false;

  bool ok() const noexcept { return is_single_root && is_acyclic && is_connected; }
};

/// Head vector convention: heads[i] is the head of word i+1, 0 is the root.
TreeCheck validate_heads(const std::vector<int>& heads);
TreeCheck validate_tree(const Sentence& s);

/// Strict mode throws on the first invalid tree; otherwise invalid
/// sentences are dropped and described in `warnings`.
std::vector<Sentence> filter_trees(std::vector<Sentence> sentences, bool strict,
                                   std::vector<std::string>* warnings = nullptr);

/// Relation labels sorted lexicographically. Index size() is reserved for
/// labels never seen in training.
class LabelInventory {
 public:
  LabelInventory() = default;
  explicit LabelInventory(std::vector<std::string> sorted_labels);

  std::size_t size() const noexcept { return labels_.size(); }
  /// Classifier width: known labels plus the reserved unknown slot.
  std::size_t num_classes() const noexcept { return labels_.size() + 1; }
  std::size_t unknown_index() const noexcept { return labels_.size(); }
  std::size_t index_of(std::string_view label) const;
  /// "_" for the unknown slot.
  const std::string& label(std::size_t index) const;
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  friend bool operator==(const LabelInventory& a, const LabelInventory& b) {
    return a.labels_ == b.labels_;
  }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Throws Error on an empty training split.
LabelInventory build_label_inventory(const std::vector<Sentence>& train);

}  // namespace iptkit
