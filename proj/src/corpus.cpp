#include "lookahead/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace lookahead {

using nlohmann::json;

std::string_view speaker_name(Speaker s) { return s == Speaker::kA ? "A" : "B"; }

Speaker parse_speaker(std::string_view name) {
  if (name == "A") return Speaker::kA;
  if (name == "B") return Speaker::kB;
  throw std::invalid_argument("speaker must be \"A\" or \"B\", got \"" + std::string(name) + "\"");
}

GoalVector::GoalVector(std::vector<std::uint8_t> b) : bits(std::move(b)) {
  for (auto bit : bits) {
    if (bit > 1) throw std::invalid_argument("goal bits must be 0 or 1");
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isspace(ch)) {
      flush();
    } else if (std::ispunct(ch) && ch != '_') {
      flush();
      out.emplace_back(1, raw);
    } else {
      word.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* t : {"<unk>", "<bos>", "<eos>", "<pad>"}) add(t);
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved || tokens[kUnk] != "<unk>" || tokens[kBos] != "<bos>" ||
      tokens[kEos] != "<eos>" || tokens[kPad] != "<pad>") {
    throw std::invalid_argument("vocabulary must start with the reserved tokens");
  }
  for (auto& t : tokens) {
    if (ids_.contains(t)) throw std::invalid_argument("duplicate vocabulary token: " + t);
    add(std::move(t));
  }
}

void Vocabulary::add(std::string token) {
  ids_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw std::out_of_range("token id " + std::to_string(id));
  return tokens_[id];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& t : tokenize(text)) ids.push_back(id(t));
  ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kEos) break;
    if (id == kBos || id == kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<DialogueSession>& corpus, std::size_t min_count) {
  if (corpus.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& session : corpus) {
    for (const auto& turn : session.turns) {
      for (auto& t : tokenize(turn.text)) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, count] : counts) {
    if (count >= min_count) kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens = {"<unk>", "<bos>", "<eos>", "<pad>"};
  for (auto& [token, count] : kept) {
    if (token == "<unk>" || token == "<bos>" || token == "<eos>" || token == "<pad>") continue;
    tokens.push_back(token);
  }
  return Vocabulary(std::move(tokens));
}

// ---------------------------------------------------------------------------
// Samples

EncodedSession encode_session(const DialogueSession& session, const Vocabulary& vocab) {
  EncodedSession out;
  out.goals_a = session.goals_a;
  out.goals_b = session.goals_b;
  out.outcome = session.outcome;
  for (const auto& turn : session.turns) out.turns.push_back({turn.speaker, vocab.encode(turn.text)});
  return out;
}

std::vector<TrainingSample> prepare_samples(const EncodedSession& session, std::size_t k,
                                            std::size_t session_index) {
  if (k == 0) throw std::invalid_argument("look-ahead horizon must be at least 1");
  const std::size_t turns = session.turns.size();
  std::vector<TrainingSample> samples;
  samples.reserve(turns);
  for (std::size_t t = 0; t < turns; ++t) {
    TrainingSample s;
    s.current = session.turns[t];
    s.history.assign(session.turns.begin(), session.turns.begin() + static_cast<long>(t));
    const Speaker responder = other(s.current.speaker);
    s.goals = responder == Speaker::kA ? session.goals_a : session.goals_b;
    s.label = session.outcome;
    s.session_index = session_index;
    s.turn_index = t;
    Speaker next = responder;
    for (std::size_t j = 1; j <= k; ++j) {
      if (t + j < turns) {
        s.future.push_back(session.turns[t + j]);
        s.future_mask.push_back(true);
      } else {
        s.future.push_back({next, {Vocabulary::kEos}});
        s.future_mask.push_back(false);
      }
      next = other(next);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Corpus file

CorpusError::CorpusError(std::size_t line, const std::string& what)
    : std::runtime_error("corpus line " + std::to_string(line) + ": " + what), line_(line) {}

std::string session_to_json_line(const DialogueSession& session) {
  json turns = json::array();
  for (const auto& t : session.turns) {
    turns.push_back({{"speaker", std::string(speaker_name(t.speaker))}, {"text", t.text}});
  }
  json record = {
      {"goals_a", session.goals_a.bits},
      {"goals_b", session.goals_b.bits},
      {"turns", std::move(turns)},
      {"outcome", session.outcome},
  };
  return record.dump();
}

namespace {

GoalVector parse_goals(const json& record, const char* field) {
  if (!record.contains(field)) throw std::invalid_argument(std::string("missing field ") + field);
  const json& arr = record.at(field);
  if (!arr.is_array()) throw std::invalid_argument(std::string(field) + " must be a bit array");
  std::vector<std::uint8_t> bits;
  for (const auto& b : arr) {
    if (!b.is_number_integer() || (b.get<int>() != 0 && b.get<int>() != 1)) {
      throw std::invalid_argument(std::string(field) + " entries must be 0 or 1");
    }
    bits.push_back(static_cast<std::uint8_t>(b.get<int>()));
  }
  return GoalVector(std::move(bits));
}

}  // namespace

DialogueSession session_from_json_line(std::string_view line, std::size_t line_number) {
  try {
    const json record = json::parse(line);
    if (!record.is_object()) throw std::invalid_argument("record must be an object");
    DialogueSession s;
    s.goals_a = parse_goals(record, "goals_a");
    s.goals_b = parse_goals(record, "goals_b");
    if (!record.contains("turns") || !record.at("turns").is_array()) {
      throw std::invalid_argument("missing field turns");
    }
    for (const auto& t : record.at("turns")) {
      if (!t.is_object() || !t.contains("speaker") || !t.contains("text")) {
        throw std::invalid_argument("turn needs speaker and text");
      }
      Turn turn{parse_speaker(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()};
      if (!s.turns.empty() && s.turns.back().speaker == turn.speaker) {
        throw std::invalid_argument("speakers must alternate");
      }
      s.turns.push_back(std::move(turn));
    }
    if (!record.contains("outcome")) throw std::invalid_argument("missing field outcome");
    const json& z = record.at("outcome");
    if (!z.is_number_integer() || (z.get<int>() != 0 && z.get<int>() != 1)) {
      throw std::invalid_argument("outcome must be 0 or 1");
    }
    s.outcome = z.get<int>();
    return s;
  } catch (const json::exception& e) {
    throw CorpusError(line_number, e.what());
  } catch (const std::invalid_argument& e) {
    throw CorpusError(line_number, e.what());
  }
}

std::vector<DialogueSession> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  std::vector<DialogueSession> sessions;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    sessions.push_back(session_from_json_line(line, number));
  }
  return sessions;
}

void save_corpus(const std::vector<DialogueSession>& sessions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus " + path.string());
  for (const auto& s : sessions) out << session_to_json_line(s) << '\n';
}

}  // namespace lookahead
