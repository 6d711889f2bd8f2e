#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prefmix/core/error.hpp"

namespace prefmix::tinylm {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

/// Fixed token inventory. Ids 0..3 are always PAD, BOS, EOS, SEP.
///
/// Two profiles exist: the symbol profile (space-separated symbols, at most
/// 64 entries) used by the synthetic task suites, and the byte profile
/// (specials + 256 raw bytes) used to ingest raw UTF-8 corpora.
class Vocabulary {
 public:
  static constexpr TokenId pad = 0;
  static constexpr TokenId bos = 1;
  static constexpr TokenId eos = 2;
  static constexpr TokenId sep = 3;
  static constexpr std::size_t max_symbol_size = 64;

  enum class Profile { symbols, bytes };

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// Symbol profile: specials are prepended to `extra`.
  explicit Vocabulary(const std::vector<std::string>& extra) : profile_(Profile::symbols) {
    symbols_ = special_symbols();
    symbols_.insert(symbols_.end(), extra.begin(), extra.end());
    require(symbols_.size() <= max_symbol_size, Errc::invalid_argument,
            "symbol vocabulary exceeds " + std::to_string(max_symbol_size) + " tokens");
    index();
  }

  static Vocabulary byte_level() {
    Vocabulary v;
    v.profile_ = Profile::bytes;
    v.symbols_ = special_symbols();
    for (int b = 0; b < 256; ++b) v.symbols_.push_back(std::string(1, static_cast<char>(b)));
    v.index();
    return v;
  }

  /// Rebuild from a full symbol list as stored in checkpoints.
  static Vocabulary from_symbols(const std::vector<std::string>& all, Profile profile) {
    if (profile == Profile::bytes) return byte_level();
    require(all.size() >= 4, Errc::invalid_argument, "vocabulary lacks special tokens");
    const auto specials = special_symbols();
    for (std::size_t i = 0; i < specials.size(); ++i)
      require(all[i] == specials[i], Errc::invalid_argument, "special token mismatch at id " + std::to_string(i));
    return Vocabulary(std::vector<std::string>(all.begin() + 4, all.end()));
  }

  std::size_t size() const { return symbols_.size(); }
  Profile profile() const { return profile_; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  const std::string& symbol(TokenId id) const {
    require(id >= 0 && static_cast<std::size_t>(id) < symbols_.size(), Errc::token_out_of_range,
            "token id " + std::to_string(id));
    return symbols_[static_cast<std::size_t>(id)];
  }

  std::optional<TokenId> find(std::string_view sym) const {
    auto it = lookup_.find(std::string(sym));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  TokenId id(std::string_view sym) const {
    auto r = find(sym);
    require(r.has_value(), Errc::unknown_token, std::string(sym));
    return *r;
  }

  /// Text -> ids. Symbol profile splits on whitespace; byte profile maps each
  /// byte, recognizing literal special symbols such as "<eos>".
  Tokens encode(std::string_view text) const {
    Tokens out;
    std::vector<std::string> unknown;
    if (profile_ == Profile::symbols) {
      std::istringstream in{std::string(text)};
      std::string tok;
      while (in >> tok) {
        if (auto id = find(tok)) {
          out.push_back(*id);
        } else {
          unknown.push_back(tok);
        }
      }
    } else {
      std::size_t i = 0;
      while (i < text.size()) {
        bool special = false;
        for (TokenId s = 0; s < 4; ++s) {
          const auto& sym = symbols_[static_cast<std::size_t>(s)];
          if (text.substr(i, sym.size()) == sym) {
            out.push_back(s);
            i += sym.size();
            special = true;
            break;
          }
        }
        if (!special) {
          out.push_back(4 + static_cast<TokenId>(static_cast<unsigned char>(text[i])));
          ++i;
        }
      }
    }
    if (!unknown.empty()) {
      std::string msg = "tokens absent from vocabulary:";
      for (const auto& u : unknown) msg += " '" + u + "'";
      fail(Errc::unknown_token, msg);
    }
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (profile_ == Profile::symbols && i > 0) out += ' ';
      out += symbol(ids[i]);
    }
    return out;
  }

  bool operator==(const Vocabulary& o) const { return profile_ == o.profile_ && symbols_ == o.symbols_; }

 private:
  static std::vector<std::string> special_symbols() { return {"<pad>", "<bos>", "<eos>", "<sep>"}; }

  void index() {
    lookup_.clear();
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      const bool inserted = lookup_.emplace(symbols_[i], static_cast<TokenId>(i)).second;
      require(inserted, Errc::invalid_argument, "duplicate symbol '" + symbols_[i] + "'");
    }
  }

  Profile profile_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> lookup_;
};

}  // namespace prefmix::tinylm
