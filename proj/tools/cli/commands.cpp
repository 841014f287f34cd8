// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The groundec Authors

#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "groundec/classifier.hpp"
#include "groundec/decoder.hpp"
#include "groundec/error.hpp"
#include "groundec/rank_analysis.hpp"
#include "groundec/version.hpp"
#include "support.hpp"

namespace groundec::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

struct CommonArgs {
  std::optional<std::string> output;
  std::optional<std::string> manifest;
  bool force = false;
};

void add_common(CLI::App* app, CommonArgs& common, bool with_output = true) {
  if (with_output) app->add_option("-o,--output", common.output, "Write the primary output here instead of stdout");
  app->add_option("--manifest", common.manifest, "Manifest path (default: next to the first output)");
  app->add_flag("--force", common.force, "Overwrite existing output files");
}

void add_text_source(CLI::App* app, TextSource& src, const std::string& name, const std::string& what) {
  auto* t = app->add_option("--" + name, src.text, what + " as text");
  auto* f = app->add_option("--" + name + "-file", src.file, what + " read from a file")->check(CLI::ExistingFile);
  auto* i = app->add_option("--" + name + "-ids", src.ids, what + " as token ids");
  t->excludes(f)->excludes(i);
  f->excludes(i);
}

/// Command-line overrides for DecodeConfig, one flag per field.
struct DecodeFlags {
  std::optional<std::string> config;
  std::optional<std::string> truncation;
  std::optional<double> alpha;
  std::optional<std::size_t> elbow_window;
  std::optional<std::string> grounding_positions;
  std::optional<bool> grounding_enabled;
  bool no_grounding = false;
  std::optional<bool> image_enabled;
  std::optional<double> rescore_temperature;
  std::optional<std::string> sampler;
  std::optional<double> top_p;
  std::optional<double> temperature;
  std::optional<std::size_t> max_tokens;
  std::optional<std::string> stop_tokens;
  std::optional<double> kl_floor;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void add_truncation_flags(CLI::App* app, DecodeFlags& f) {
  app->add_option("--truncation", f.truncation, "elbow | alpha | alpha_then_elbow");
  app->add_option("--alpha", f.alpha, "Plausibility threshold relative to the top probability");
  app->add_option("--elbow-window", f.elbow_window, "Largest rank scanned by the elbow");
}

void add_decode_flags(CLI::App* app, DecodeFlags& f) {
  app->add_option("--config", f.config, "key = value config file; flags override it")->check(CLI::ExistingFile);
  add_truncation_flags(app, f);
  app->add_option("--grounding-positions", f.grounding_positions, "description_only | full_prompt");
  app->add_option("--grounding-enabled", f.grounding_enabled, "Rescore candidates by grounding (true|false)");
  app->add_flag("--no-grounding", f.no_grounding, "Same as --grounding-enabled false");
  app->add_option("--image-enabled", f.image_enabled, "Pass the image to the backend (true|false)");
  app->add_option("--rescore-temperature", f.rescore_temperature, "Temperature of the grounding softmax");
  app->add_option("--sampler", f.sampler, "greedy | multinomial");
  app->add_option("--top-p", f.top_p, "Nucleus mass for multinomial sampling");
  app->add_option("--temperature", f.temperature, "Sampling temperature for multinomial sampling");
  app->add_option("--max-tokens", f.max_tokens, "Upper bound on response length");
  app->add_option("--stop-tokens", f.stop_tokens, "Token ids ending the response (overrides the backend)");
  app->add_option("--kl-floor", f.kl_floor, "Probability floor inside the KL logarithm");
  app->add_option("--seed", f.seed, "Sampler seed");
  app->add_flag("--verbose", f.verbose, "Keep per-step diagnostics");
}

DecodeConfig resolve_config(const DecodeFlags& f, std::ostream& err) {
  DecodeConfig cfg = f.config ? load_decode_config(*f.config) : DecodeConfig{};
  if (f.truncation) cfg.truncation.kind = parse_truncation_kind(*f.truncation);
  if (f.alpha) {
    if (cfg.truncation.kind == Truncation::Kind::elbow) {
      err << "warning: --alpha has no effect with elbow truncation; using elbow\n";
    }
    cfg.truncation.alpha = *f.alpha;
  }
  if (f.elbow_window) cfg.truncation.elbow_window = *f.elbow_window;
  if (f.grounding_positions) cfg.grounding_positions = parse_grounding_positions(*f.grounding_positions);
  if (f.grounding_enabled) cfg.grounding_enabled = *f.grounding_enabled;
  if (f.no_grounding) cfg.grounding_enabled = false;
  if (f.image_enabled) cfg.image_enabled = *f.image_enabled;
  if (f.rescore_temperature) cfg.rescore_temperature = *f.rescore_temperature;
  if (f.sampler) cfg.sampler.kind = parse_sampler_kind(*f.sampler);
  if (f.top_p) cfg.sampler.top_p = *f.top_p;
  if (f.temperature) cfg.sampler.temperature = *f.temperature;
  if (f.max_tokens) {
    if (*f.max_tokens == 0) throw InputError("--max-tokens must be at least 1");
    cfg.max_tokens = *f.max_tokens;
  }
  if (f.stop_tokens) cfg.stop_tokens = parse_token_ids(*f.stop_tokens);
  if (f.kl_floor) cfg.kl_floor = *f.kl_floor;
  if (f.seed) cfg.seed = *f.seed;
  if (f.verbose) cfg.verbose = true;
  cfg.validate();
  return cfg;
}

ordered_json config_json(const DecodeConfig& cfg) {
  ordered_json j = ordered_json::object();
  std::istringstream lines(format_decode_config(cfg));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << v;
  return s.str();
}

/// Collects outputs, then writes primary content and the manifest.
class Run {
 public:
  Run(std::string subcommand, const CommonArgs& common, const std::vector<std::string>& argv, std::ostream& out,
      std::ostream& err)
      : common_(common), guard_(common.force), out_(out), err_(err), start_(Clock::now()) {
    manifest_.subcommand = std::move(subcommand);
    manifest_.argv = argv;
  }

  Manifest& manifest() { return manifest_; }

  void claim(const std::string& path) {
    guard_.claim(path);
    manifest_.outputs.push_back(path);
  }

  /// Claims the manifest path too; call after all outputs are claimed.
  void seal() {
    manifest_path_ = manifest_path(common_.manifest, manifest_.outputs);
    if (manifest_path_) guard_.claim(*manifest_path_);
  }

  void emit(const std::optional<std::string>& path, const std::string& content) {
    if (path) {
      guard_.write(*path, content);
    } else {
      out_ << content;
    }
  }

  void write(const std::string& path, const std::string& content) const { guard_.write(path, content); }

  void finish() {
    manifest_.wall_time_s = std::chrono::duration<double>(Clock::now() - start_).count();
    const std::string text = manifest_.to_json();
    if (manifest_path_) {
      guard_.write(*manifest_path_, text);
    } else {
      err_ << "manifest: " << text;
    }
  }

 private:
  const CommonArgs& common_;
  OutputGuard guard_;
  Manifest manifest_;
  std::optional<std::filesystem::path> manifest_path_;
  std::ostream& out_;
  std::ostream& err_;
  Clock::time_point start_;
};

OptionalImage image_of(const std::optional<std::string>& tag) {
  if (!tag) return std::nullopt;
  if (tag->empty()) throw InputError("--image must not be empty");
  return ImageRef{*tag};
}

OptionalImage image_of(const json& record, const std::string& where) {
  if (!record.contains("image") || record.at("image").is_null()) return std::nullopt;
  if (!record.at("image").is_string()) throw InputError(where + ": 'image' must be a string");
  return ImageRef{record.at("image").get<std::string>()};
}

std::string string_field(const json& record, const char* name, const std::string& where) {
  if (!record.contains(name) || !record.at(name).is_string()) {
    throw InputError(where + ": missing string field '" + std::string(name) + "'");
  }
  return record.at(name).get<std::string>();
}

const json& field(const json& record, const char* name, const std::string& where) {
  if (!record.contains(name)) throw InputError(where + ": missing field '" + std::string(name) + "'");
  return record.at(name);
}

TokenSeq template_tokens(const std::optional<std::string>& path, const Vocabulary* vocab) {
  const std::string text = path ? load_description_template(*path) : std::string(kDefaultDescribeTemplate);
  return encode_text(vocab, text, "describe template");
}

// ---------------------------------------------------------------- decode

struct DecodeArgs {
  CommonArgs common;
  DecodeFlags flags;
  std::string backend;
  std::optional<std::string> vocab;
  std::optional<std::string> image;
  TextSource instruction;
  TextSource description;
  TextSource joiner;
  bool describe_first = false;
  std::optional<std::string> template_path;
  std::size_t describe_max_tokens = 256;
  std::optional<std::string> diagnostics;
};

ordered_json diagnostics_json(const DecodedResponse& r, const Vocabulary* vocab) {
  auto entry = [&](TokenId id) {
    ordered_json e;
    e["id"] = id;
    if (vocab) e["token"] = vocab->token(id);
    return e;
  };
  ordered_json steps = ordered_json::array();
  for (std::size_t s = 0; s < r.per_step.size(); ++s) {
    const auto& d = r.per_step[s];
    ordered_json step;
    step["step"] = s;
    step["sampled"] = entry(d.sampled);
    auto& cands = step["candidates"] = ordered_json::array();
    for (const auto& c : d.candidates.entries()) {
      auto e = entry(c.id);
      e["prob"] = c.prob;
      cands.push_back(std::move(e));
    }
    auto& grounding = step["grounding"] = ordered_json::array();
    for (const auto& g : d.grounding.scores) {
      auto e = entry(g.token);
      e["kl"] = g.kl;
      e["position"] = g.position;
      grounding.push_back(std::move(e));
    }
    auto& fin = step["final"] = ordered_json::array();
    for (const auto& f : d.final_probs) {
      auto e = entry(f.id);
      e["prob"] = f.prob;
      fin.push_back(std::move(e));
    }
    steps.push_back(std::move(step));
  }
  ordered_json root;
  root["stopped"] = r.stopped;
  root["steps"] = std::move(steps);
  return root;
}

void run_decode(const DecodeArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Run run("decode", a.common, argv, out, err);
  DecodeConfig cfg = resolve_config(a.flags, err);
  if (a.diagnostics) cfg.verbose = true;
  if (!a.instruction.given()) throw InputError("decode needs an instruction (--instruction, -file or -ids)");
  if (a.describe_first && a.description.given()) {
    throw InputError("--describe-first and an explicit description are mutually exclusive");
  }
  if (cfg.grounding_enabled && !a.describe_first && !a.description.given()) {
    throw InputError("nothing to ground on: give a description, --describe-first, or --no-grounding");
  }
  if (a.common.output) run.claim(*a.common.output);
  if (a.diagnostics) run.claim(*a.diagnostics);
  run.seal();

  auto opened = open_backend(a.backend, a.vocab);
  const Backend& backend = *opened.backend;
  const OptionalImage image = image_of(a.image);
  const TokenSeq instruction = a.instruction.resolve(opened.vocab, "instruction");
  const TokenSeq joiner = a.joiner.resolve(opened.vocab, "joiner");

  TokenSeq description;
  if (a.describe_first) {
    DescribeOptions opts;
    opts.template_tokens = template_tokens(a.template_path, opened.vocab);
    opts.max_tokens = a.describe_max_tokens;
    opts.stop_tokens = cfg.stop_tokens;
    description = generate_description(backend, image, opts);
    if (description.empty()) throw InputError("nothing to ground on: the generated description is empty");
  } else if (a.description.given()) {
    description = a.description.resolve(opened.vocab, "description");
  }

  DecodedResponse response;
  if (description.empty()) {
    TokenSeq prompt = instruction;
    response = decode_plain(backend, prompt, cfg.image_enabled ? image : std::nullopt, cfg);
  } else {
    response = decode(backend, description, instruction, image, cfg, joiner);
  }

  run.emit(a.common.output, render(opened.vocab, response.tokens) + "\n");
  if (a.diagnostics) {
    auto diag = diagnostics_json(response, opened.vocab);
    diag["description"] = render(opened.vocab, description);
    run.write(*a.diagnostics, diag.dump(2) + "\n");
  }

  auto& m = run.manifest();
  m.config = config_json(cfg);
  m.config["describe_first"] = a.describe_first;
  if (a.describe_first) m.config["description"] = render(opened.vocab, description);
  m.backends = {a.backend};
  if (a.vocab) m.inputs.push_back(*a.vocab);
  if (a.instruction.file) m.inputs.push_back(*a.instruction.file);
  if (a.description.file) m.inputs.push_back(*a.description.file);
  if (a.template_path) m.inputs.push_back(*a.template_path);
  if (a.flags.config) m.inputs.push_back(*a.flags.config);
  m.seed = cfg.seed;
  run.finish();
}

// ---------------------------------------------------------------- describe

struct DescribeArgs {
  CommonArgs common;
  std::string backend;
  std::optional<std::string> vocab;
  std::optional<std::string> image;
  std::optional<std::string> template_path;
  std::size_t max_tokens = 256;
  std::optional<std::string> stop_tokens;
};

void run_describe(const DescribeArgs& a, const std::vector<std::string>& argv, std::ostream& out,
                  std::ostream& err) {
  Run run("describe", a.common, argv, out, err);
  if (a.max_tokens == 0) throw InputError("--max-tokens must be at least 1");
  if (a.common.output) run.claim(*a.common.output);
  run.seal();

  auto opened = open_backend(a.backend, a.vocab);
  DescribeOptions opts;
  opts.template_tokens = template_tokens(a.template_path, opened.vocab);
  opts.max_tokens = a.max_tokens;
  if (a.stop_tokens) opts.stop_tokens = parse_token_ids(*a.stop_tokens);
  const TokenSeq description = generate_description(*opened.backend, image_of(a.image), opts);
  run.emit(a.common.output, render(opened.vocab, description) + "\n");

  auto& m = run.manifest();
  m.config["max_tokens"] = a.max_tokens;
  m.config["image"] = a.image ? ordered_json(*a.image) : ordered_json(nullptr);
  m.backends = {a.backend};
  if (a.template_path) m.inputs.push_back(*a.template_path);
  run.finish();
}

// ---------------------------------------------------------------- rank

struct RankArgs {
  CommonArgs common;
  std::string aligned;
  std::string base;
  std::optional<std::string> vocab;
  std::string inputs;
  std::optional<std::string> curve;
  std::size_t marginal_upper = RankThresholds{}.marginal_upper;
  std::size_t jobs = 1;
};

void run_rank(const RankArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Run run("rank", a.common, argv, out, err);
  if (a.common.output) run.claim(*a.common.output);
  if (a.curve) run.claim(*a.curve);
  run.seal();

  const RankThresholds thresholds{a.marginal_upper};
  classify_shift(0, thresholds);  // validates the threshold
  auto aligned = open_backend(a.aligned, a.vocab);
  auto base = open_backend(a.base, a.vocab);
  require_shared_vocabulary(*aligned.backend, *base.backend);
  const Vocabulary* vocab = aligned.vocab ? aligned.vocab : base.vocab;

  const auto records = read_jsonl(a.inputs);
  if (records.empty()) throw InputError(a.inputs + ": no responses");
  struct Item {
    std::string id;
    TokenSeq instruction;
    TokenSeq response;
    OptionalImage image;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string where = a.inputs + " record " + std::to_string(i + 1);
    const auto& r = records[i];
    items.push_back({string_field(r, "response_id", where),
                     tokens_from_json(vocab, field(r, "instruction", where), where + " instruction"),
                     tokens_from_json(vocab, field(r, "response", where), where + " response"), image_of(r, where)});
  }

  std::vector<RankTrace> traces(items.size());
  parallel_for(items.size(), effective_jobs(a.jobs, {aligned.backend.get(), base.backend.get()}), [&](std::size_t i) {
    traces[i] = base_rank_trace(*aligned.backend, *base.backend, items[i].instruction, items[i].response,
                                items[i].image, thresholds);
  });

  std::ostringstream trace_text;
  for (std::size_t i = 0; i < items.size(); ++i) write_rank_trace(trace_text, items[i].id, traces[i], i == 0);
  run.emit(a.common.output, trace_text.str());
  if (a.curve) {
    std::ostringstream curve_text;
    write_rank_curve(curve_text, rank_curve(std::span<const RankTrace>(traces)));
    run.write(*a.curve, curve_text.str());
  }

  auto& m = run.manifest();
  m.config["marginal_upper"] = a.marginal_upper;
  m.config["jobs"] = a.jobs;
  m.backends = {a.aligned, a.base};
  m.inputs = {a.inputs};
  if (a.vocab) m.inputs.push_back(*a.vocab);
  run.finish();
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
  CommonArgs common;
  DecodeFlags flags;
  std::string backend;
  std::optional<std::string> vocab;
  std::string inputs;
  std::string spans;
  std::size_t jobs = 1;
};

void run_stats(const StatsArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  Run run("stats", a.common, argv, out, err);
  if (a.common.output) run.claim(*a.common.output);
  run.seal();
  const DecodeConfig cfg = resolve_config(a.flags, err);

  const auto annotations = load_annotations(a.spans);
  auto opened = open_backend(a.backend, a.vocab);
  std::map<std::string, std::pair<TokenSeq, OptionalImage>> prompts;
  const auto records = read_jsonl(a.inputs);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string where = a.inputs + " record " + std::to_string(i + 1);
    const auto& r = records[i];
    const auto id = string_field(r, "response_id", where);
    prompts[id] = {tokens_from_json(opened.vocab, field(r, "prompt", where), where + " prompt"), image_of(r, where)};
    if (r.contains("response")) {
      const auto response = tokens_from_json(opened.vocab, r.at("response"), where + " response");
      for (const auto& set : annotations) {
        if (set.response_id == id && set.response_tokens != response) {
          throw InputError(where + ": response does not match the span file for '" + id + "'");
        }
      }
    }
  }
  for (const auto& set : annotations) {
    if (!prompts.count(set.response_id)) throw InputError(a.inputs + ": no prompt for '" + set.response_id + "'");
  }

  std::vector<PopulationSets> per_response(annotations.size());
  parallel_for(annotations.size(), effective_jobs(a.jobs, {opened.backend.get()}), [&](std::size_t i) {
    const auto& set = annotations[i];
    std::vector<TokenSpan> spans;
    for (const auto& p : set.phrases) spans.push_back(p.span);
    const auto& [prompt, image] = prompts.at(set.response_id);
    per_response[i] = collect_population_sets(*opened.backend, prompt, set.response_tokens, image, spans,
                                              cfg.truncation, set.word_offsets);
  });
  PopulationSets pooled;
  for (auto& s : per_response) pooled.merge(std::move(s));
  const auto stats = pooled.stats();

  std::ostringstream table;
  table << "population\tk\tvariance\trange\tavg\ttokens\n";
  auto row = [&](const char* name, const std::optional<LogitStats>& s, std::size_t n) {
    table << name;
    if (s) {
      table << '\t' << fmt(s->k) << '\t' << fmt(s->variance) << '\t' << fmt(s->range) << '\t' << fmt(s->avg);
    } else {
      table << "\t-\t-\t-\t-";
    }
    table << '\t' << n << '\n';
  };
  row("clean", stats.clean, stats.clean_tokens);
  row("hallucinated", stats.hallucinated, stats.hallucinated_tokens);
  run.emit(a.common.output, table.str());

  auto& m = run.manifest();
  m.config["truncation"] = to_string(cfg.truncation.kind);
  m.config["alpha"] = cfg.truncation.alpha;
  m.config["elbow_window"] = cfg.truncation.elbow_window;
  m.config["jobs"] = a.jobs;
  m.backends = {a.backend};
  m.inputs = {a.inputs, a.spans};
  run.finish();
}

// ---------------------------------------------------------------- classify

struct ClassifyArgs {
  CommonArgs common;
  std::string annotations;
  std::string ranks;
  std::string retrieval;
  std::vector<std::size_t> ks;
  std::size_t jobs = 1;
};

std::string sweep_path(const std::string& output, std::size_t k) {
  const std::filesystem::path p(output);
  return (p.parent_path() / (p.stem().string() + ".k" + std::to_string(k) + p.extension().string())).string();
}

void run_classify(const ClassifyArgs& a, const std::vector<std::string>& argv, std::ostream& out,
                  std::ostream& err) {
  Run run("classify", a.common, argv, out, err);
  std::vector<std::size_t> ks = a.ks.empty() ? std::vector<std::size_t>{kDefaultRetrievalK} : a.ks;
  for (auto k : ks) {
    if (k == 0) throw InputError("--k values must be at least 1");
  }
  std::vector<std::optional<std::string>> paths;
  for (auto k : ks) {
    std::optional<std::string> path;
    if (a.common.output) path = ks.size() == 1 ? *a.common.output : sweep_path(*a.common.output, k);
    if (path) run.claim(*path);
    paths.push_back(path);
  }
  run.seal();

  const auto annotations = load_annotations(a.annotations);
  const auto ranks = [&] {
    std::ifstream in(a.ranks);
    if (!in) throw InputError("cannot open " + a.ranks);
    return read_rank_traces(in);
  }();
  const auto retrieval = FileRetrievalProvider::load(a.retrieval);
  for (const auto& set : annotations) {
    if (!ranks.count(set.response_id)) throw InputError(a.ranks + ": no rank trace for '" + set.response_id + "'");
  }
  const std::size_t jobs = retrieval.concurrent_queries() ? std::max<std::size_t>(1, a.jobs) : 1;

  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    std::vector<CategoryReport> parts(annotations.size());
    parallel_for(annotations.size(), jobs, [&](std::size_t i) {
      parts[i] = categorize_all(annotations[i], ranks.at(annotations[i].response_id), retrieval, ks[ki]);
    });
    CategoryReport total;
    for (const auto& p : parts) total.merge(p);
    run.emit(paths[ki], report_to_json(total, ks[ki]));
  }

  auto& m = run.manifest();
  m.config["k"] = ks;
  m.config["jobs"] = a.jobs;
  m.inputs = {a.annotations, a.ranks, a.retrieval};
  run.finish();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grounded decoding and hallucination diagnostics", "groundec"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);

  DecodeArgs dec;
  auto* decode_cmd = app.add_subcommand("decode", "Describe (optionally), then decode with grounding");
  decode_cmd->add_option("--backend", dec.backend, "toy:PATH | trace:PATH | http[:URL]")->required();
  decode_cmd->add_option("--vocab", dec.vocab, "Token table, one token per line")->check(CLI::ExistingFile);
  decode_cmd->add_option("--image", dec.image, "Image tag passed to the backend");
  add_text_source(decode_cmd, dec.instruction, "instruction", "Instruction");
  add_text_source(decode_cmd, dec.description, "description", "Image description");
  add_text_source(decode_cmd, dec.joiner, "joiner", "Tokens between description and instruction");
  decode_cmd->add_flag("--describe-first", dec.describe_first, "Generate the description from the image first");
  decode_cmd->add_option("--template", dec.template_path, "Describe prompt file")->check(CLI::ExistingFile);
  decode_cmd->add_option("--describe-max-tokens", dec.describe_max_tokens, "Length cap for the description");
  decode_cmd->add_option("--diagnostics", dec.diagnostics, "Write per-step candidates and grounding scores");
  add_decode_flags(decode_cmd, dec.flags);
  add_common(decode_cmd, dec.common);

  DescribeArgs desc;
  auto* describe_cmd = app.add_subcommand("describe", "Generate an image description");
  describe_cmd->add_option("--backend", desc.backend, "toy:PATH | trace:PATH | http[:URL]")->required();
  describe_cmd->add_option("--vocab", desc.vocab, "Token table, one token per line")->check(CLI::ExistingFile);
  describe_cmd->add_option("--image", desc.image, "Image tag passed to the backend")->required();
  describe_cmd->add_option("--template", desc.template_path, "Describe prompt file")->check(CLI::ExistingFile);
  describe_cmd->add_option("--max-tokens", desc.max_tokens, "Length cap");
  describe_cmd->add_option("--stop-tokens", desc.stop_tokens, "Token ids ending the description");
  add_common(describe_cmd, desc.common);

  RankArgs rank;
  auto* rank_cmd = app.add_subcommand("rank", "Base Rank trace of aligned choices under a base model");
  rank_cmd->add_option("--aligned", rank.aligned, "Aligned backend descriptor")->required();
  rank_cmd->add_option("--base", rank.base, "Base backend descriptor")->required();
  rank_cmd->add_option("--vocab", rank.vocab, "Token table, one token per line")->check(CLI::ExistingFile);
  rank_cmd->add_option("--inputs", rank.inputs, "JSON lines: response_id, instruction, response, image")
      ->required()
      ->check(CLI::ExistingFile);
  rank_cmd->add_option("--curve", rank.curve, "Write the position-wise mean eta here");
  rank_cmd->add_option("--marginal-upper", rank.marginal_upper, "Largest eta counted as marginal");
  rank_cmd->add_option("--jobs", rank.jobs, "Responses processed in parallel");
  add_common(rank_cmd, rank.common);

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Candidate-set statistics for clean and hallucinated tokens");
  stats_cmd->add_option("--backend", stats.backend, "toy:PATH | trace:PATH | http[:URL]")->required();
  stats_cmd->add_option("--vocab", stats.vocab, "Token table, one token per line")->check(CLI::ExistingFile);
  stats_cmd->add_option("--inputs", stats.inputs, "JSON lines: response_id, prompt, image")
      ->required()
      ->check(CLI::ExistingFile);
  stats_cmd->add_option("--spans", stats.spans, "Annotation file with hallucinated token spans")
      ->required()
      ->check(CLI::ExistingFile);
  stats_cmd->add_option("--jobs", stats.jobs, "Responses processed in parallel");
  add_truncation_flags(stats_cmd, stats.flags);
  add_common(stats_cmd, stats.common);

  ClassifyArgs cls;
  auto* classify_cmd = app.add_subcommand("classify", "Categorize annotated hallucinations");
  classify_cmd->add_option("--annotations", cls.annotations, "Annotation file")->required()->check(CLI::ExistingFile);
  classify_cmd->add_option("--ranks", cls.ranks, "Rank trace from `rank`")->required()->check(CLI::ExistingFile);
  classify_cmd->add_option("--retrieval", cls.retrieval, "Retrieved instruction-tuning hits")
      ->required()
      ->check(CLI::ExistingFile);
  classify_cmd->add_option("--k", cls.ks, "Retrieval depth; several values run a sweep")->delimiter(',');
  classify_cmd->add_option("--jobs", cls.jobs, "Responses processed in parallel");
  add_common(classify_cmd, cls.common);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputInvalid;
  }

  try {
    if (*decode_cmd) run_decode(dec, args, out, err);
    if (*describe_cmd) run_describe(desc, args, out, err);
    if (*rank_cmd) run_rank(rank, args, out, err);
    if (*stats_cmd) run_stats(stats, args, out, err);
    if (*classify_cmd) run_classify(cls, args, out, err);
  } catch (const BackendError& e) {
    err << "error: backend: " << e.what() << "\n";
    return kBackendFailure;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputInvalid;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

}  // namespace groundec::cli
