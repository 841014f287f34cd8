// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/trace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "groundec/error.hpp"

namespace groundec {

namespace {

constexpr char kMagic[8] = {'G', 'D', 'T', 'R', 'A', 'C', 'E', '\0'};
constexpr std::uint8_t kDenseRecord = 0;
constexpr std::uint8_t kSparseRecord = 1;

class Writer {
 public:
  void bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str16(const std::string& s) {
    if (s.size() > 0xFFFF) throw InputError("trace: string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }

  std::string& buffer() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw InputError(std::string("trace: truncated file while reading ") + what + " at byte " +
                       std::to_string(pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint64_t uint(int width, const char* what) {
    need(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(in_[pos_++])) << (8 * i);
    }
    return v;
  }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(uint(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(uint(4, what)); }
  double f64(const char* what) { return std::bit_cast<double>(uint(8, what)); }
  std::string str16(const char* what) {
    const std::size_t n = u16(what);
    need(n, what);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto v = in_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void encode_record(Writer& w, const TraceRecord& r, std::size_t vocab_size) {
  Writer body;
  body.u32(r.position);
  body.u32(r.context_token);
  if (const auto* dense = std::get_if<std::vector<double>>(&r.probs)) {
    if (dense->size() != vocab_size) throw InputError("trace: dense record size != vocab_size");
    body.u8(kDenseRecord);
    for (double p : *dense) body.f64(p);
  } else {
    const auto& sparse = std::get<SparseProbs>(r.probs);
    body.u8(kSparseRecord);
    body.u32(static_cast<std::uint32_t>(sparse.top.size()));
    for (const auto& e : sparse.top) {
      body.u32(e.id);
      body.f64(e.prob);
    }
    body.f64(sparse.residual_mass);
  }
  w.u32(static_cast<std::uint32_t>(body.buffer().size()));
  w.bytes(body.buffer().data(), body.buffer().size());
}

TraceRecord decode_record(Reader& outer, std::size_t vocab_size) {
  const std::size_t length = outer.u32("record length");
  Reader r(outer.take(length, "record body"));
  TraceRecord rec;
  rec.position = r.u32("record position");
  rec.context_token = r.u32("record context token");
  const auto kind = r.u8("record kind");
  if (kind == kDenseRecord) {
    std::vector<double> probs(vocab_size);
    for (auto& p : probs) p = r.f64("dense probabilities");
    rec.probs = std::move(probs);
  } else if (kind == kSparseRecord) {
    SparseProbs sparse;
    const std::size_t m = r.u32("sparse count");
    sparse.top.resize(m);
    for (auto& e : sparse.top) {
      e.id = r.u32("sparse token id");
      e.prob = r.f64("sparse probability");
    }
    sparse.residual_mass = r.f64("residual mass");
    rec.probs = std::move(sparse);
  } else {
    throw InputError("trace: unknown record kind " + std::to_string(kind));
  }
  if (!r.done()) throw InputError("trace: record length does not match its contents");
  return rec;
}

}  // namespace

Distribution TraceRecord::densify(std::size_t vocab_size) const {
  if (const auto* dense = std::get_if<std::vector<double>>(&probs)) {
    if (dense->size() != vocab_size) throw InputError("trace: dense record size != vocab_size");
    return Distribution::from_probs(*dense);
  }
  const auto& sparse = std::get<SparseProbs>(probs);
  std::vector<double> out(vocab_size, 0.0);
  std::vector<bool> present(vocab_size, false);
  double listed = 0.0;
  for (const auto& e : sparse.top) {
    if (e.id >= vocab_size) throw InputError("trace: sparse token id outside vocabulary");
    if (present[e.id]) throw InputError("trace: duplicate sparse token id");
    present[e.id] = true;
    out[e.id] = e.prob;
    listed += e.prob;
  }
  if (std::abs(sparse.residual_mass - (1.0 - listed)) > kMassTolerance) {
    throw InputError("trace: residual mass does not equal 1 - sum(top)");
  }
  const std::size_t absent = vocab_size - sparse.top.size();
  if (absent > 0) {
    const double share = std::max(0.0, sparse.residual_mass) / static_cast<double>(absent);
    for (std::size_t i = 0; i < vocab_size; ++i) {
      if (!present[i]) out[i] = share;
    }
  }
  return Distribution::from_probs(std::move(out));
}

TokenSeq TraceSession::tokens() const {
  TokenSeq out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.context_token == kNoToken) break;
    out.push_back(r.context_token);
  }
  return out;
}

SparseProbs sparsify(const Distribution& dist, std::size_t top_m) {
  std::vector<TokenProb> entries;
  const auto probs = dist.probs();
  entries.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) entries.push_back({static_cast<TokenId>(i), probs[i]});
  const std::size_t m = std::min(top_m, entries.size());
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(m), entries.end(),
                    [](const TokenProb& a, const TokenProb& b) {
                      return a.prob != b.prob ? a.prob > b.prob : a.id < b.id;
                    });
  entries.resize(m);
  double listed = 0.0;
  for (const auto& e : entries) listed += e.prob;
  return SparseProbs{std::move(entries), 1.0 - listed};
}

TraceSession record_session(const Backend& backend, std::span<const TokenId> tokens,
                            const OptionalImage& image, std::string label, std::size_t top_m) {
  TraceSession session{std::move(label), {}};
  auto store = [&](std::size_t position, TokenId token, const Distribution& d) {
    TraceRecord rec;
    rec.position = static_cast<std::uint32_t>(position);
    rec.context_token = token;
    if (top_m == 0) {
      rec.probs = std::vector<double>(d.probs().begin(), d.probs().end());
    } else {
      rec.probs = sparsify(d, top_m);
    }
    session.records.push_back(std::move(rec));
  };
  backend.forward_each(tokens, image,
                       [&](std::size_t j, const Distribution& d) { store(j, tokens[j], d); });
  store(tokens.size(), kNoToken, backend.next_distribution(tokens, image));
  return session;
}

std::string encode_trace(const TraceFile& trace) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u16(trace.header.version);
  w.u32(trace.header.vocab_size);
  w.u8(trace.header.sparse ? 1 : 0);
  w.str16(trace.header.tokenizer);
  w.u32(static_cast<std::uint32_t>(trace.sessions.size()));
  for (const auto& s : trace.sessions) {
    w.str16(s.label);
    w.u32(static_cast<std::uint32_t>(s.records.size()));
    for (const auto& r : s.records) encode_record(w, r, trace.header.vocab_size);
  }
  return std::move(w.buffer());
}

TraceFile decode_trace(std::string_view bytes) {
  Reader r(bytes);
  const auto magic = r.take(sizeof kMagic, "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0) {
    throw InputError("trace: bad magic bytes (not a trace file)");
  }
  TraceFile trace;
  trace.header.version = r.u16("version");
  if (trace.header.version != kTraceVersion) {
    throw InputError("trace: unsupported version " + std::to_string(trace.header.version) +
                     " (expected " + std::to_string(kTraceVersion) + ")");
  }
  trace.header.vocab_size = r.u32("vocab_size");
  if (trace.header.vocab_size < 2) throw InputError("trace: vocab_size must be at least 2");
  trace.header.sparse = (r.u8("flags") & 1) != 0;
  trace.header.tokenizer = r.str16("tokenizer");
  const std::size_t sessions = r.u32("session count");
  for (std::size_t s = 0; s < sessions; ++s) {
    TraceSession session;
    session.label = r.str16("session label");
    const std::size_t records = r.u32("record count");
    for (std::size_t i = 0; i < records; ++i) {
      session.records.push_back(decode_record(r, trace.header.vocab_size));
    }
    trace.sessions.push_back(std::move(session));
  }
  if (!r.done()) throw InputError("trace: trailing bytes after last session");
  return trace;
}

void write_trace(const TraceFile& trace, const std::filesystem::path& path) {
  const std::string bytes = encode_trace(trace);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

TraceFile load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open trace " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_trace(buf.str());
}

TraceBackend::TraceBackend(TraceFile trace, BackendCapabilities overrides)
    : trace_(std::move(trace)), caps_(std::move(overrides)) {
  caps_.vocab_size = trace_.header.vocab_size;
  caps_.supports_teacher_forcing = true;
  for (const auto& s : trace_.sessions) session_tokens_.push_back(s.tokens());
}

TraceBackend TraceBackend::open(const std::filesystem::path& path) { return TraceBackend(load_trace(path)); }

void TraceBackend::set_vocabulary(Vocabulary vocab) {
  if (vocab.size() != caps_.vocab_size) {
    throw InputError("vocabulary has " + std::to_string(vocab.size()) + " tokens, trace has " +
                     std::to_string(caps_.vocab_size));
  }
  caps_.word_start = vocab.word_start();
  vocab_ = std::move(vocab);
}

TraceBackend::Match TraceBackend::longest_match(std::span<const TokenId> context) const {
  Match best;
  for (std::size_t s = 0; s < trace_.sessions.size(); ++s) {
    const auto& tokens = session_tokens_[s];
    const std::size_t limit = std::min(tokens.size(), context.size());
    std::size_t n = 0;
    while (n < limit && tokens[n] == context[n]) ++n;
    const bool covers = n == context.size() && trace_.sessions[s].records.size() > n;
    if (covers) return {&trace_.sessions[s], n};
    if (n > best.matched) best.matched = n;
  }
  return best;
}

Distribution TraceBackend::next_distribution(std::span<const TokenId> context, const OptionalImage&) const {
  const Match m = longest_match(context);
  if (m.session == nullptr) {
    throw TraceMiss("trace miss: context of length " + std::to_string(context.size()) +
                        " not recorded (longest matched prefix " + std::to_string(m.matched) + ")",
                    m.matched);
  }
  return m.session->records[context.size()].densify(caps_.vocab_size);
}

void TraceBackend::forward_each(std::span<const TokenId> tokens, const OptionalImage& image,
                                const PositionVisitor& visit) const {
  if (tokens.empty()) return;
  // Any session that covers the last position covers all earlier ones.
  const Match m = longest_match(tokens.first(tokens.size() - 1));
  if (m.session == nullptr) {
    Backend::forward_each(tokens, image, visit);
    return;
  }
  for (std::size_t j = 0; j < tokens.size(); ++j) visit(j, m.session->records[j].densify(caps_.vocab_size));
}

}  // namespace groundec
