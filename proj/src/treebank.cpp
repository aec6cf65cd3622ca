#include "iptkit/treebank.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "iptkit/error.hpp"

namespace iptkit {
namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::optional<std::string> Sentence::text() const {
  constexpr std::string_view kPrefix = "# text = ";
  for (const auto& c : comments)
    if (c.starts_with(kPrefix)) return c.substr(kPrefix.size());
  return std::nullopt;
}

std::vector<std::string> Sentence::forms() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.form);
  return out;
}

std::vector<int> Sentence::heads() const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.head);
  return out;
}

std::vector<Sentence> parse_conllu(std::string_view text) {
  std::vector<Sentence> out;
  Sentence current;
  bool open = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;

  auto flush = [&] {
    if (open) out.push_back(std::move(current));
    current = Sentence{};
    open = false;
  };

  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.empty()) {
      flush();
      continue;
    }
    open = true;
    if (line.front() == '#') {
      if (!current.tokens.empty() || !current.extra.empty()) {
        throw ParseError("comment line inside a sentence body", line_no);
      }
      current.comments.emplace_back(line);
      continue;
    }
    const auto cols = split_tabs(line);
    if (cols.size() != 10) {
      throw ParseError("expected 10 tab-separated columns, found " + std::to_string(cols.size()),
                       line_no);
    }
    const std::string_view id = cols[0];
    if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) {
      current.extra.push_back({current.tokens.size(), std::string(line)});
      continue;
    }
    Token tok;
    auto parsed_id = to_int(id);
    if (!parsed_id) throw ParseError("non-integer token id '" + std::string(id) + "'", line_no);
    if (*parsed_id != static_cast<int>(current.tokens.size()) + 1) {
      throw ParseError("token ids must be consecutive from 1, found " + std::string(id), line_no);
    }
    auto head = to_int(cols[6]);
    if (!head) throw ParseError("non-integer head '" + std::string(cols[6]) + "'", line_no);
    tok.id = *parsed_id;
    tok.form = cols[1];
    tok.lemma = cols[2];
    tok.upos = cols[3];
    tok.xpos = cols[4];
    tok.feats = cols[5];
    tok.head = *head;
    tok.deprel = cols[7];
    tok.deps = cols[8];
    tok.misc = cols[9];
    current.tokens.push_back(std::move(tok));
  }
  flush();
  return out;
}

std::string serialize_conllu(const std::vector<Sentence>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    for (const auto& c : s.comments) {
      out += c;
      out += '\n';
    }
    std::size_t extra = 0;
    for (std::size_t i = 0; i <= s.tokens.size(); ++i) {
      while (extra < s.extra.size() && s.extra[extra].before_token == i) {
        out += s.extra[extra++].line;
        out += '\n';
      }
      if (i == s.tokens.size()) break;
      const Token& t = s.tokens[i];
      out += std::to_string(t.id);
      for (const std::string* col : {&t.form, &t.lemma, &t.upos, &t.xpos, &t.feats}) {
        out += '\t';
        out += *col;
      }
      out += '\t';
      out += std::to_string(t.head);
      for (const std::string* col : {&t.deprel, &t.deps, &t.misc}) {
        out += '\t';
        out += *col;
      }
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

std::vector<Sentence> read_conllu_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_conllu(buf.str());
}

void write_conllu_file(const std::string& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << serialize_conllu(sentences);
}

TreeCheck validate_heads(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  TreeCheck check;
  check.is_single_root = std::count(heads.begin(), heads.end(), 0) == 1;

  // Cycle detection by walking head pointers with per-walk colouring.
  std::vector<int> state(n + 1, 0);  // 0 new, 1 on current path, 2 done
  state[0] = 2;
  bool acyclic = true;
  for (int start = 1; start <= n && acyclic; ++start) {
    std::vector<int> path;
    int v = start;
    while (v >= 0 && v <= n && state[v] == 0) {
      state[v] = 1;
      path.push_back(v);
      v = heads[v - 1];
    }
    if (v >= 0 && v <= n && state[v] == 1) acyclic = false;
    for (int u : path) state[u] = 2;
  }
  check.is_acyclic = acyclic;

  // Reachability from the root over child edges.
  std::vector<std::vector<int>> children(n + 1);
  for (int i = 1; i <= n; ++i) {
    const int h = heads[i - 1];
    if (h >= 0 && h <= n && h != i) children[h].push_back(i);
  }
  std::vector<bool> seen(n + 1, false);
  std::vector<int> stack{0};
  seen[0] = true;
  int reached = 0;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int c : children[v]) {
      if (!seen[c]) {
        seen[c] = true;
        ++reached;
        stack.push_back(c);
      }
    }
  }
  check.is_connected = reached == n;
  return check;
}

TreeCheck validate_tree(const Sentence& s) { return validate_heads(s.heads()); }

std::vector<Sentence> filter_trees(std::vector<Sentence> sentences, bool strict,
                                   std::vector<std::string>* warnings) {
  std::vector<Sentence> kept;
  kept.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const TreeCheck check = validate_tree(sentences[i]);
    if (check.ok() && !sentences[i].tokens.empty()) {
      kept.push_back(std::move(sentences[i]));
      continue;
    }
    std::string why = "sentence " + std::to_string(i + 1) + " is not a valid tree (single_root=" +
                      std::to_string(check.is_single_root) +
                      " acyclic=" + std::to_string(check.is_acyclic) +
                      " connected=" + std::to_string(check.is_connected) + ")";
    if (strict) throw Error(why);
    if (warnings) warnings->push_back(std::move(why));
  }
  return kept;
}

LabelInventory::LabelInventory(std::vector<std::string> sorted_labels)
    : labels_(std::move(sorted_labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i], i).second) throw Error("duplicate label " + labels_[i]);
  }
}

std::size_t LabelInventory::index_of(std::string_view label) const {
  auto it = index_.find(label);
  return it == index_.end() ? unknown_index() : it->second;
}

const std::string& LabelInventory::label(std::size_t index) const {
  static const std::string kUnknown = "_";
  return index < labels_.size() ? labels_[index] : kUnknown;
}

LabelInventory build_label_inventory(const std::vector<Sentence>& train) {
  if (train.empty()) throw Error("label inventory: empty training split");
  std::set<std::string> labels;
  for (const auto& s : train)
    for (const auto& t : s.tokens) labels.insert(t.deprel);
  return LabelInventory(std::vector<std::string>(labels.begin(), labels.end()));
}

}  // namespace iptkit
