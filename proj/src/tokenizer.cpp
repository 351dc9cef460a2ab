#include "tae/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tae {
namespace {

const std::vector<std::string> kSpecialPieces = {"<pad>", "<unk>", "<s>", "</s>", "<zero>"};
constexpr std::string_view kHeader = "#subword-vocab v1 specials";
constexpr std::string_view kCont = "##";

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

bool is_special_word(std::string_view w) {
  return std::find(kSpecialPieces.begin(), kSpecialPieces.end(), w) != kSpecialPieces.end();
}

std::string strip_cont(std::string_view s) {
  return std::string(s.starts_with(kCont) ? s.substr(kCont.size()) : s);
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) len = 1;
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  for (auto w : split_words(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

SubwordModel SubwordModel::train(std::span<const std::string> texts, int vocab_size) {
  if (texts.empty()) throw std::invalid_argument("train_subword: empty corpus");
  std::map<std::string, long> freq;
  for (const auto& t : texts)
    for (auto w : split_words(t))
      if (!is_special_word(w)) ++freq[std::string(w)];

  struct Word {
    std::vector<std::string> symbols;
    long count;
  };
  std::vector<Word> words;
  std::set<std::string> base;
  for (const auto& [w, c] : freq) {
    Word word{{}, c};
    const auto chars = utf8_chars(w);
    for (std::size_t i = 0; i < chars.size(); ++i) {
      word.symbols.push_back(i == 0 ? chars[i] : std::string(kCont) + chars[i]);
      base.insert(word.symbols.back());
    }
    words.push_back(std::move(word));
  }
  if (vocab_size <= static_cast<int>(kSpecialPieces.size() + base.size()))
    throw std::invalid_argument("train_subword: vocab_size " + std::to_string(vocab_size) +
                                " must exceed " + std::to_string(kSpecialPieces.size() + base.size()) +
                                " special and base pieces");

  std::vector<std::string> pieces = kSpecialPieces;
  pieces.insert(pieces.end(), base.begin(), base.end());
  std::set<std::string> have(pieces.begin(), pieces.end());

  while (static_cast<int>(pieces.size()) < vocab_size) {
    std::map<std::pair<std::string, std::string>, long> pairs;
    for (const auto& w : words)
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) pairs[{w.symbols[i], w.symbols[i + 1]}] += w.count;
    if (pairs.empty()) break;
    // Highest count wins; std::map order breaks ties lexicographically.
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    const auto [left, right] = best->first;
    const std::string merged = left + strip_cont(right);
    for (auto& w : words) {
      std::vector<std::string> next;
      next.reserve(w.symbols.size());
      for (std::size_t i = 0; i < w.symbols.size(); ++i) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == left && w.symbols[i + 1] == right) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(w.symbols[i]);
        }
      }
      w.symbols = std::move(next);
    }
    if (have.insert(merged).second) pieces.push_back(merged);
  }
  return from_pieces(std::move(pieces));
}

SubwordModel SubwordModel::from_pieces(std::vector<std::string> pieces) {
  if (pieces.size() < kSpecialPieces.size() ||
      !std::equal(kSpecialPieces.begin(), kSpecialPieces.end(), pieces.begin()))
    throw std::invalid_argument("subword model must start with the special pieces");
  SubwordModel m;
  m.pieces_ = std::move(pieces);
  m.index();
  return m;
}

void SubwordModel::index() {
  ids_.clear();
  longest_ = 0;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    if (!ids_.emplace(pieces_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("duplicate subword piece: " + pieces_[i]);
    if (i >= kSpecialPieces.size()) longest_ = std::max(longest_, utf8_chars(strip_cont(pieces_[i])).size());
  }
}

int SubwordModel::id_of(std::string_view piece) const {
  auto it = ids_.find(std::string(piece));
  return it == ids_.end() ? -1 : it->second;
}

void SubwordModel::encode_word(std::string_view word, TokenIds& out) const {
  if (is_special_word(word)) {
    out.push_back(id_of(word));
    return;
  }
  const auto chars = utf8_chars(word);
  std::size_t i = 0;
  while (i < chars.size()) {
    int found = -1;
    std::size_t used = 0;
    for (std::size_t len = std::min(longest_, chars.size() - i); len >= 1; --len) {
      std::string cand = i == 0 ? std::string() : std::string(kCont);
      for (std::size_t k = 0; k < len; ++k) cand += chars[i + k];
      if (auto it = ids_.find(cand); it != ids_.end()) {
        found = it->second;
        used = len;
        break;
      }
    }
    if (found < 0) {
      out.push_back(special::unk);
      ++i;
    } else {
      out.push_back(found);
      i += used;
    }
  }
}

TokenIds SubwordModel::encode_words(std::string_view text) const {
  TokenIds out;
  for (auto w : split_words(text)) encode_word(w, out);
  return out;
}

TokenIds SubwordModel::encode(std::string_view text) const {
  TokenIds out{special::bos};
  for (auto w : split_words(text)) encode_word(w, out);
  out.push_back(special::eos);
  return out;
}

std::string SubwordModel::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size()) throw std::out_of_range("decode: id " + std::to_string(id) + " outside vocabulary");
    if (id == special::pad || id == special::bos || id == special::eos) continue;
    const std::string& p = pieces_[static_cast<std::size_t>(id)];
    if (id >= special::count && p.starts_with(kCont)) {
      out += p.substr(kCont.size());
    } else {
      if (!out.empty()) out += ' ';
      out += p;
    }
  }
  return out;
}

void SubwordModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  out << kHeader;
  for (const auto& s : kSpecialPieces) out << ' ' << s;
  out << '\n';
  for (const auto& p : pieces_) out << p << '\n';
}

SubwordModel SubwordModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::string header;
  std::getline(in, header);
  std::string expected(kHeader);
  for (const auto& s : kSpecialPieces) expected += " " + s;
  if (header != expected) throw std::runtime_error("bad vocabulary header in " + path.string());
  std::vector<std::string> pieces;
  for (std::string line; std::getline(in, line);) pieces.push_back(line);
  return from_pieces(std::move(pieces));
}

}  // namespace tae
