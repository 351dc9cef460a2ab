#pragma once

// Subword vocabulary shared by utterances and programs. Pieces are learned
// with byte-pair-style merges over whitespace-separated words; encoding is
// greedy longest match, WordPiece style, with "##" marking word-internal
// continuation pieces.

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tae {

namespace special {
inline constexpr int pad = 0;
inline constexpr int unk = 1;
inline constexpr int bos = 2;
inline constexpr int eos = 3;
inline constexpr int zero = 4;
inline constexpr int count = 5;
}  // namespace special

/// Token ids; decoder targets carry BOS first and EOS last.
using TokenIds = std::vector<int>;

class SubwordModel {
 public:
  /// Learns merges until the vocabulary holds `vocab_size` pieces or no pair
  /// is left to merge. Throws if `vocab_size` cannot hold the special tokens
  /// and every base character.
  static SubwordModel train(std::span<const std::string> texts, int vocab_size);

  static SubwordModel from_pieces(std::vector<std::string> pieces);
  static SubwordModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// BOS + pieces + EOS. Never fails: unseen characters map to UNK.
  TokenIds encode(std::string_view text) const;
  /// Pieces only, no sentinels.
  TokenIds encode_words(std::string_view text) const;
  /// Drops PAD/BOS/EOS and joins continuation pieces; words are separated by
  /// single spaces. Throws on ids outside the vocabulary.
  std::string decode(std::span<const int> ids) const;

  int size() const { return static_cast<int>(pieces_.size()); }
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  int id_of(std::string_view piece) const;  // -1 when absent

  bool operator==(const SubwordModel& o) const { return pieces_ == o.pieces_; }

 private:
  void index();
  void encode_word(std::string_view word, TokenIds& out) const;

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> ids_;
  std::size_t longest_ = 0;
};

/// Whitespace-normalized form that decode(encode(t)) reproduces.
std::string normalize_whitespace(std::string_view text);

/// Splits UTF-8 text into code points (invalid bytes stand alone).
std::vector<std::string> utf8_chars(std::string_view text);

}  // namespace tae
