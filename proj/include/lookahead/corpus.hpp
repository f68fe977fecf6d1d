#pragma once

// Dialogue data model: goal vectors, sessions, vocabulary, per-turn training
// samples and the line-delimited corpus file format.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lookahead {

using TokenId = std::uint32_t;

enum class Speaker : std::uint8_t { kA = 0, kB = 1 };

inline Speaker other(Speaker s) { return s == Speaker::kA ? Speaker::kB : Speaker::kA; }
std::string_view speaker_name(Speaker s);
Speaker parse_speaker(std::string_view name);

/// Binary vector of yes/no goal conditions.
struct GoalVector {
  std::vector<std::uint8_t> bits;

  GoalVector() = default;
  explicit GoalVector(std::vector<std::uint8_t> b);

  std::size_t size() const { return bits.size(); }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  bool operator==(const GoalVector&) const = default;
  auto operator<=>(const GoalVector&) const = default;
};

struct Turn {
  Speaker speaker = Speaker::kA;
  std::string text;
  bool operator==(const Turn&) const = default;
};

/// One dialogue as stored on disk: both goal vectors, the surface turns and
/// the outcome label (1 = goals achieved).
struct DialogueSession {
  GoalVector goals_a;
  GoalVector goals_b;
  std::vector<Turn> turns;
  int outcome = 0;

  const GoalVector& goals_of(Speaker s) const { return s == Speaker::kA ? goals_a : goals_b; }
  bool operator==(const DialogueSession&) const = default;
};

/// Lowercased whitespace split with punctuation detached into its own tokens.
/// Underscores count as word characters so agreement markers survive intact.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kPad = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  /// Rebuilds from an explicit id-ordered token list (reserved ids included).
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const { return ids_.contains(std::string(token)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Token ids for `text`, terminated by EOS.
  std::vector<TokenId> encode(std::string_view text) const;
  /// Surface text up to the first EOS; BOS and PAD are skipped.
  std::string decode(const std::vector<TokenId>& ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> ids_;
};

/// Ids ordered by descending frequency then lexicographically; tokens seen
/// fewer than `min_count` times are left out and encode to UNK.
Vocabulary build_vocabulary(const std::vector<DialogueSession>& corpus, std::size_t min_count = 5);

struct Utterance {
  Speaker speaker = Speaker::kA;
  std::vector<TokenId> tokens;  // ends in EOS
  bool operator==(const Utterance&) const = default;
};

struct EncodedSession {
  GoalVector goals_a;
  GoalVector goals_b;
  std::vector<Utterance> turns;
  int outcome = 0;
};

EncodedSession encode_session(const DialogueSession& session, const Vocabulary& vocab);

/// One training example per turn t: the goals of the side that produces
/// turn t+1, the history before t, the current utterance and exactly K
/// future turns. Future slots past the end of the session are EOS-only and
/// masked out.
struct TrainingSample {
  GoalVector goals;
  std::vector<Utterance> history;
  Utterance current;
  std::vector<Utterance> future;
  std::vector<bool> future_mask;  // true = real turn
  int label = 0;
  std::size_t session_index = 0;
  std::size_t turn_index = 0;
};

std::vector<TrainingSample> prepare_samples(const EncodedSession& session, std::size_t k,
                                            std::size_t session_index = 0);

class CorpusError : public std::runtime_error {
 public:
  CorpusError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string session_to_json_line(const DialogueSession& session);
DialogueSession session_from_json_line(std::string_view line, std::size_t line_number = 0);

std::vector<DialogueSession> load_corpus(const std::filesystem::path& path);
void save_corpus(const std::vector<DialogueSession>& sessions, const std::filesystem::path& path);

}  // namespace lookahead
