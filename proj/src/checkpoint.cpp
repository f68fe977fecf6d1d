#include "lookahead/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace lookahead {

namespace {

constexpr std::string_view kMagic = "LAHDCKPT";
constexpr std::uint8_t kDtypeF64 = 1;

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::kCorrupt, "checkpoint is truncated");
    }
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::string shape_text(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace

std::string serialize_checkpoint(const Agent& agent) {
  const ModelConfig& c = agent.params.config;
  if (agent.vocab.size() != c.vocab_size) {
    throw std::invalid_argument("vocabulary size does not match the model config");
  }
  Writer w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  for (std::size_t v : {c.vocab_size, c.goal_bits, c.embed_dim, c.goal_dim, c.hidden_dim,
                        c.lookahead_k, c.max_decode_len}) {
    w.u64(v);
  }
  w.u64(agent.vocab.size());
  for (const auto& t : agent.vocab.tokens()) w.str(t);

  std::size_t count = 0;
  agent.params.for_each([&](const std::string&, const Tensor&, ParamGroup) { ++count; });
  w.u64(count);
  agent.params.for_each([&](const std::string& name, const Tensor& t, ParamGroup) {
    w.str(name);
    w.u8(kDtypeF64);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  });
  w.u64(fnv1a(w.bytes()));
  return std::move(w.bytes());
}

Agent parse_checkpoint(std::string_view bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < kMagic.size() + 4 + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw CheckpointError(Kind::kCorrupt, "not a checkpoint file (bad magic)");
  }
  Reader r(bytes);
  r.raw(kMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::kVersion, "unsupported checkpoint version " +
                                              std::to_string(version) + " (expected " +
                                              std::to_string(kCheckpointVersion) + ")");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body.size() + i]))
              << (8 * i);
  }
  if (stored != fnv1a(body)) {
    throw CheckpointError(Kind::kCorrupt, "checkpoint checksum mismatch (corrupt or truncated)");
  }

  Reader br(body);
  br.raw(kMagic.size() + 4);
  ModelConfig c;
  c.vocab_size = br.u64();
  c.goal_bits = br.u64();
  c.embed_dim = br.u64();
  c.goal_dim = br.u64();
  c.hidden_dim = br.u64();
  c.lookahead_k = br.u64();
  c.max_decode_len = br.u64();

  const std::uint64_t n_tokens = br.u64();
  if (n_tokens != c.vocab_size) {
    throw CheckpointError(Kind::kShape, "vocabulary has " + std::to_string(n_tokens) +
                                            " entries but config says " +
                                            std::to_string(c.vocab_size));
  }
  std::vector<std::string> tokens;
  for (std::uint64_t i = 0; i < n_tokens; ++i) tokens.push_back(br.str());

  Agent agent;
  try {
    agent.vocab = Vocabulary(std::move(tokens));
    agent.params = ModelParams(c);
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("invalid checkpoint header: ") + e.what());
  }

  std::size_t expected_count = 0;
  agent.params.for_each([&](const std::string&, Tensor&, ParamGroup) { ++expected_count; });
  const std::uint64_t count = br.u64();
  if (count != expected_count) {
    throw CheckpointError(Kind::kShape, "checkpoint has " + std::to_string(count) +
                                            " parameters, model expects " +
                                            std::to_string(expected_count));
  }
  agent.params.for_each([&](const std::string& name, Tensor& t, ParamGroup) {
    const std::string got = br.str();
    if (got != name) {
      throw CheckpointError(Kind::kShape,
                            "expected parameter \"" + name + "\", found \"" + got + "\"");
    }
    if (br.u8() != kDtypeF64) throw CheckpointError(Kind::kCorrupt, "unknown dtype for " + name);
    Shape shape(br.u32());
    for (auto& d : shape) d = br.u64();
    if (shape != t.shape()) {
      throw CheckpointError(Kind::kShape, "parameter " + name + " has shape " + shape_text(shape) +
                                              ", config implies " + shape_text(t.shape()));
    }
    for (double& v : t.data()) v = br.f64();
  });
  if (br.remaining() != 0) throw CheckpointError(Kind::kCorrupt, "trailing bytes in checkpoint");
  return agent;
}

void save_checkpoint(const Agent& agent, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(agent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "write failed for " + path.string());
}

Agent load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

Agent load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Agent agent = load_checkpoint(path);
  const ModelConfig& c = agent.params.config;
  if (!(c == expected)) {
    throw CheckpointError(
        CheckpointError::Kind::kShape,
        "checkpoint config (vocab " + std::to_string(c.vocab_size) + ", hidden " +
            std::to_string(c.hidden_dim) + ", K " + std::to_string(c.lookahead_k) +
            ") does not match the expected config (vocab " + std::to_string(expected.vocab_size) +
            ", hidden " + std::to_string(expected.hidden_dim) + ", K " +
            std::to_string(expected.lookahead_k) + ")");
  }
  return agent;
}

}  // namespace lookahead
