// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "groundec/decoder.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "groundec/error.hpp"

namespace groundec {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw InputError("config: '" + key + "' expects a number, got '" + value + "'");
  }
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw InputError("config: '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw InputError("config: '" + key + "' expects true or false, got '" + value + "'");
}

// "name(a, b)" -> name and its arguments.
std::pair<std::string, std::vector<std::string>> split_call(const std::string& value) {
  const auto open = value.find('(');
  if (open == std::string::npos) return {value, {}};
  if (value.back() != ')') throw InputError("config: unbalanced parentheses in '" + value + "'");
  std::vector<std::string> args;
  std::stringstream inner(value.substr(open + 1, value.size() - open - 2));
  std::string arg;
  while (std::getline(inner, arg, ',')) args.push_back(trim(arg));
  return {trim(value.substr(0, open)), args};
}

bool ranks_before(const TokenProb& a, const TokenProb& b) {
  return a.prob != b.prob ? a.prob > b.prob : a.id < b.id;
}

std::vector<TokenProb> renormalized(const CandidateSet& candidates) {
  std::vector<TokenProb> out(candidates.entries().begin(), candidates.entries().end());
  double total = 0.0;
  for (const auto& e : out) total += e.prob;
  for (auto& e : out) e.prob /= total;
  return out;
}

}  // namespace

void DecodeConfig::validate() const {
  if (!(rescore_temperature > 0.0)) throw InputError("rescore_temperature must be positive");
  if (!(kl_floor > 0.0)) throw InputError("kl_floor must be positive");
  if (!(truncation.alpha >= 0.0 && truncation.alpha <= 1.0)) throw InputError("alpha must lie in [0, 1]");
  if (truncation.elbow_window == 0) throw InputError("elbow_window must be positive");
  if (!(sampler.top_p > 0.0 && sampler.top_p <= 1.0)) throw InputError("top_p must lie in (0, 1]");
  if (!(sampler.temperature > 0.0)) throw InputError("temperature must be positive");
}

std::string to_string(GroundingPositions positions) {
  return positions == GroundingPositions::description_only ? "description_only" : "full_prompt";
}

GroundingPositions parse_grounding_positions(const std::string& text) {
  if (text == "description_only") return GroundingPositions::description_only;
  if (text == "full_prompt") return GroundingPositions::full_prompt;
  throw InputError("unknown grounding_positions '" + text + "' (expected description_only or full_prompt)");
}

std::string to_string(SamplerConfig::Kind kind) {
  return kind == SamplerConfig::Kind::greedy ? "greedy" : "multinomial";
}

SamplerConfig::Kind parse_sampler_kind(const std::string& text) {
  if (text == "greedy") return SamplerConfig::Kind::greedy;
  if (text == "multinomial") return SamplerConfig::Kind::multinomial;
  throw InputError("unknown sampler '" + text + "' (expected greedy or multinomial)");
}

DecodeConfig parse_decode_config(std::string_view text, DecodeConfig cfg) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "truncation") {
        const auto [name, args] = split_call(value);
        cfg.truncation.kind = parse_truncation_kind(name);
        if (!args.empty()) cfg.truncation.alpha = parse_double("alpha", args.front());
      } else if (key == "alpha") {
        cfg.truncation.alpha = parse_double(key, value);
      } else if (key == "elbow_window") {
        cfg.truncation.elbow_window = parse_unsigned(key, value);
      } else if (key == "grounding_positions") {
        cfg.grounding_positions = parse_grounding_positions(value);
      } else if (key == "grounding_enabled") {
        cfg.grounding_enabled = parse_bool(key, value);
      } else if (key == "image_enabled") {
        cfg.image_enabled = parse_bool(key, value);
      } else if (key == "rescore_temperature") {
        cfg.rescore_temperature = parse_double(key, value);
      } else if (key == "sampler") {
        const auto [name, args] = split_call(value);
        cfg.sampler.kind = parse_sampler_kind(name);
        if (args.size() >= 1) cfg.sampler.top_p = parse_double("top_p", args[0]);
        if (args.size() >= 2) cfg.sampler.temperature = parse_double("temperature", args[1]);
      } else if (key == "top_p") {
        cfg.sampler.top_p = parse_double(key, value);
      } else if (key == "temperature") {
        cfg.sampler.temperature = parse_double(key, value);
      } else if (key == "max_tokens") {
        cfg.max_tokens = parse_unsigned(key, value);
        if (cfg.max_tokens == 0) throw InputError("config: max_tokens must be at least 1");
      } else if (key == "stop_tokens") {
        cfg.stop_tokens = parse_token_ids(value);
      } else if (key == "kl_floor") {
        cfg.kl_floor = parse_double(key, value);
      } else if (key == "seed") {
        cfg.seed = parse_unsigned(key, value);
      } else if (key == "verbose") {
        cfg.verbose = parse_bool(key, value);
      } else {
        throw InputError("config: unknown key '" + key + "'");
      }
    } catch (const InputError& e) {
      throw InputError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

DecodeConfig load_decode_config(const std::filesystem::path& path, DecodeConfig base) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_decode_config(buf.str(), std::move(base));
}

std::string format_decode_config(const DecodeConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "truncation = " << to_string(cfg.truncation.kind) << "\n"
      << "alpha = " << cfg.truncation.alpha << "\n"
      << "elbow_window = " << cfg.truncation.elbow_window << "\n"
      << "grounding_positions = " << to_string(cfg.grounding_positions) << "\n"
      << "grounding_enabled = " << (cfg.grounding_enabled ? "true" : "false") << "\n"
      << "image_enabled = " << (cfg.image_enabled ? "true" : "false") << "\n"
      << "rescore_temperature = " << cfg.rescore_temperature << "\n"
      << "sampler = " << to_string(cfg.sampler.kind) << "\n"
      << "top_p = " << cfg.sampler.top_p << "\n"
      << "temperature = " << cfg.sampler.temperature << "\n"
      << "max_tokens = " << cfg.max_tokens << "\n";
  if (cfg.stop_tokens) {
    out << "stop_tokens =";
    for (TokenId t : *cfg.stop_tokens) out << ' ' << t;
    out << "\n";
  }
  out << "kl_floor = " << cfg.kl_floor << "\n"
      << "seed = " << cfg.seed << "\n"
      << "verbose = " << (cfg.verbose ? "true" : "false") << "\n";
  return out.str();
}

PromptContext build_grounded_prompt(const TokenSeq& description, const TokenSeq& instruction,
                                    const TokenSeq& joiner) {
  if (description.empty()) throw InputError("nothing to ground on: empty description");
  if (instruction.empty()) throw InputError("empty instruction");
  PromptContext ctx;
  ctx.tokens.reserve(description.size() + joiner.size() + instruction.size());
  ctx.tokens.insert(ctx.tokens.end(), description.begin(), description.end());
  ctx.tokens.insert(ctx.tokens.end(), joiner.begin(), joiner.end());
  ctx.tokens.insert(ctx.tokens.end(), instruction.begin(), instruction.end());
  ctx.description_length = description.size();
  ctx.instruction_length = instruction.size();
  return ctx;
}

GroundingIndex::GroundingIndex(std::size_t vocab_size)
    : max_prob_(vocab_size, 0.0), argmax_position_(vocab_size, 0) {}

void GroundingIndex::accumulate(std::size_t position, const Distribution& dist) {
  if (dist.vocab_size() != max_prob_.size()) throw InputError("grounding index: vocab_size mismatch");
  const auto probs = dist.probs();
  const auto pos = static_cast<std::uint32_t>(position);
  const bool first = positions_ == 0;
  for (std::size_t w = 0; w < probs.size(); ++w) {
    if (first || probs[w] > max_prob_[w]) {
      max_prob_[w] = probs[w];
      argmax_position_[w] = pos;
    }
  }
  ++positions_;
}

std::size_t last_grounding_position(const PromptContext& ctx, GroundingPositions positions) {
  return positions == GroundingPositions::description_only ? ctx.description_length : ctx.n();
}

GroundingIndex precompute_grounding_index(const PromptContext& ctx, GroundingPositions positions) {
  const std::size_t last = last_grounding_position(ctx, positions);
  if (last == 0) throw InputError("grounding index: empty position selection");
  if (ctx.prompt_distributions.size() < last) {
    throw InputError("grounding index: prompt distributions cover " +
                     std::to_string(ctx.prompt_distributions.size()) + " positions, need " +
                     std::to_string(last));
  }
  GroundingIndex index(ctx.prompt_distributions.front().vocab_size());
  for (std::size_t j = 1; j <= last; ++j) index.accumulate(j, ctx.prompt_distributions[j - 1]);
  return index;
}

GroundingIndex build_grounding_index(const Backend& backend, const PromptContext& ctx,
                                     GroundingPositions positions, const OptionalImage& image) {
  const std::size_t last = last_grounding_position(ctx, positions);
  if (last == 0) throw InputError("grounding index: empty position selection");
  GroundingIndex index(backend.capabilities().vocab_size);
  const std::span<const TokenId> prefix(ctx.tokens.data(), last);
  backend.forward_each(prefix, image,
                       [&](std::size_t j, const Distribution& d) { index.accumulate(j + 1, d); });
  return index;
}

GroundingTable grounding_scores(const CandidateSet& candidates, const GroundingIndex& index, double floor) {
  GroundingTable table;
  table.scores.reserve(candidates.k());
  for (const auto& c : candidates.entries()) {
    if (c.id >= index.vocab_size()) throw InputError("grounding: candidate outside index vocabulary");
    table.scores.push_back(
        {c.id, -std::log(std::max(index.max_prob(c.id), floor)), index.argmax_position(c.id)});
  }
  return table;
}

std::vector<TokenProb> rescore(const CandidateSet& candidates, const GroundingTable& table, double temperature) {
  if (!(temperature > 0.0)) throw InputError("rescore: temperature must be positive");
  const auto entries = candidates.entries();
  if (table.scores.size() != entries.size()) throw InputError("rescore: table does not match candidates");
  double min_kl = table.scores.front().kl;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (table.scores[i].token != entries[i].id) throw InputError("rescore: table does not match candidates");
    min_kl = std::min(min_kl, table.scores[i].kl);
  }
  std::vector<TokenProb> out(entries.size());
  double total = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    // Logit -KL / T, shifted by the largest logit -min_kl / T.
    out[i] = {entries[i].id, std::exp(-(table.scores[i].kl - min_kl) / temperature)};
    total += out[i].prob;
  }
  for (auto& e : out) e.prob /= total;
  return out;
}

Sampler::Sampler(SamplerConfig config, std::uint64_t seed) : config_(config), rng_(seed) {}

double Sampler::uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

TokenId Sampler::sample(std::span<const TokenProb> probs) {
  if (probs.empty()) throw InputError("sampler: nothing to sample from");
  std::vector<TokenProb> sorted(probs.begin(), probs.end());
  std::sort(sorted.begin(), sorted.end(), ranks_before);
  if (config_.kind == SamplerConfig::Kind::greedy) return sorted.front().id;

  // Temperature in log space, then the nucleus.
  const double top = std::log(sorted.front().prob);
  double total = 0.0;
  for (auto& e : sorted) {
    e.prob = e.prob > 0.0 ? std::exp((std::log(e.prob) - top) / config_.temperature) : 0.0;
    total += e.prob;
  }
  std::size_t keep = 0;
  double mass = 0.0;
  while (keep < sorted.size()) {
    mass += sorted[keep].prob / total;
    ++keep;
    if (mass >= config_.top_p) break;
  }
  sorted.resize(keep);
  double kept = 0.0;
  for (const auto& e : sorted) kept += e.prob;
  double u = uniform() * kept;
  for (const auto& e : sorted) {
    if (u < e.prob) return e.id;
    u -= e.prob;
  }
  return sorted.back().id;
}

StepOutcome decode_step(const Backend& backend, const TokenSeq& generated, const PromptContext& ctx,
                        const GroundingIndex* index, const DecodeConfig& cfg, Sampler& sampler) {
  if (generated.size() >= cfg.max_tokens) return {};
  if (cfg.grounding_enabled && index == nullptr) throw InputError("decode_step: grounding needs an index");

  TokenSeq context;
  context.reserve(ctx.tokens.size() + generated.size());
  context.insert(context.end(), ctx.tokens.begin(), ctx.tokens.end());
  context.insert(context.end(), generated.begin(), generated.end());
  const OptionalImage image = cfg.image_enabled ? ctx.image : std::nullopt;

  const std::size_t step = generated.size();
  auto dist = [&] {
    try {
      return backend.next_distribution(context, image);
    } catch (const BackendError& e) {
      throw BackendError(e.what(), step);
    } catch (const InputError& e) {
      throw BackendError(e.what(), step);
    }
  }();

  CandidateSet candidates = truncate(dist, cfg.truncation);
  GroundingTable table;
  std::vector<TokenProb> final_probs;
  if (cfg.grounding_enabled) {
    table = grounding_scores(candidates, *index, cfg.kl_floor);
    final_probs = rescore(candidates, table, cfg.rescore_temperature);
  } else {
    final_probs = renormalized(candidates);
  }
  const TokenId token = sampler.sample(final_probs);

  StepOutcome out{token, std::nullopt};
  if (cfg.verbose) {
    out.diagnostics = StepDiagnostics{std::move(candidates), std::move(table), token, std::move(final_probs)};
  }
  return out;
}

namespace {

DecodedResponse run_loop(const Backend& backend, const PromptContext& ctx, const GroundingIndex* index,
                         const DecodeConfig& cfg) {
  const auto& stops = cfg.stop_tokens ? *cfg.stop_tokens : backend.capabilities().stop_tokens;
  Sampler sampler(cfg.sampler, cfg.seed);
  DecodedResponse response;
  while (true) {
    auto outcome = decode_step(backend, response.tokens, ctx, index, cfg, sampler);
    if (!outcome.token) break;
    if (outcome.diagnostics) response.per_step.push_back(std::move(*outcome.diagnostics));
    if (std::find(stops.begin(), stops.end(), *outcome.token) != stops.end()) {
      response.stopped = true;
      break;
    }
    response.tokens.push_back(*outcome.token);
  }
  return response;
}

}  // namespace

DecodedResponse decode(const Backend& backend, const TokenSeq& description, const TokenSeq& instruction,
                       const OptionalImage& image, const DecodeConfig& cfg, const TokenSeq& joiner) {
  cfg.validate();
  PromptContext ctx = build_grounded_prompt(description, instruction, joiner);
  ctx.image = image;
  if (cfg.max_tokens == 0) return {};

  std::optional<GroundingIndex> index;
  if (cfg.grounding_enabled) {
    const OptionalImage forwarded = cfg.image_enabled ? image : std::nullopt;
    index = build_grounding_index(backend, ctx, cfg.grounding_positions, forwarded);
  }
  return run_loop(backend, ctx, index ? &*index : nullptr, cfg);
}

DecodedResponse decode_plain(const Backend& backend, const TokenSeq& prompt, const OptionalImage& image,
                             const DecodeConfig& cfg) {
  cfg.validate();
  DecodeConfig plain = cfg;
  plain.grounding_enabled = false;
  PromptContext ctx;
  ctx.tokens = prompt;
  ctx.instruction_length = prompt.size();
  ctx.image = image;
  return run_loop(backend, ctx, nullptr, plain);
}

TokenSeq generate_description(const Backend& backend, const OptionalImage& image,
                              const DescribeOptions& options) {
  if (options.provider) return options.provider(image);
  if (!image) throw InputError("generate_description: no image given");
  if (!backend.capabilities().supports_images) {
    throw InputError("generate_description: backend does not accept images");
  }
  if (options.template_tokens.empty()) throw InputError("generate_description: empty template");
  DecodeConfig cfg;
  cfg.grounding_enabled = false;
  cfg.max_tokens = options.max_tokens;
  cfg.stop_tokens = options.stop_tokens;
  return decode_plain(backend, options.template_tokens, image, cfg).tokens;
}

std::string load_description_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open description template " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return trim(buf.str());
}

}  // namespace groundec
