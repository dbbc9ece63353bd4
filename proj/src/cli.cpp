#include "mlpref/cli.hpp"

#include <filesystem>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mlpref/autocheck.hpp"
#include "mlpref/chunker.hpp"
#include "mlpref/dataset.hpp"
#include "mlpref/embedding.hpp"
#include "mlpref/error.hpp"
#include "mlpref/mdpo.hpp"
#include "mlpref/mrhal.hpp"
#include "mlpref/selfcheck.hpp"
#include "mlpref/toy.hpp"

namespace mlpref {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  std::size_t jobs = 1;
};

void add_common(CLI::App* sub, Common& c, bool out_required) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  auto* o = sub->add_option("--out", c.out, "Machine-readable output path");
  if (out_required) o->required();
  sub->add_option("--config", c.config, "JSON config file; command-line flags take precedence");
  sub->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

void require_input(const std::string& path, const char* what) {
  if (path.empty()) return;
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path);
}

void require_output_dir(const std::string& path) {
  if (path.empty()) return;
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw DataError("output directory does not exist: " + parent.string());
  }
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; first exception wins.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<double> parse_doubles(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("not a number: '" + item + "'");
    }
  }
  return out;
}

// Turns a JSON config object into command-line tokens placed before the
// user's own flags, so that explicit flags win (last value is kept).
std::vector<std::string> config_args(const CLI::App& sub, const std::string& path) {
  const Json cfg = read_json_file(path);
  if (!cfg.is_object()) throw UsageError("config file must hold a JSON object: " + path);
  std::vector<std::string> out;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config") throw UsageError("config files cannot nest 'config'");
    const CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown config key '" + key + "' for '" + sub.get_name() + "'");
    const bool is_flag = opt->get_type_size_max() == 0;
    if (is_flag) {
      if (!value.is_boolean()) throw UsageError("config key '" + key + "' must be true or false");
      if (value.get<bool>()) out.push_back("--" + key);
      continue;
    }
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) text += ',';
        text += value[i].is_string() ? value[i].get<std::string>() : value[i].dump();
      }
    } else if (value.is_number() || value.is_boolean()) {
      text = value.dump();
    } else {
      throw UsageError("config key '" + key + "' has an unsupported value");
    }
    out.push_back("--" + key);
    out.push_back(text);
  }
  return out;
}

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a path");
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  return path;
}

// ---- subcommands ------------------------------------------------------------

struct RankOpts {
  Common common;
  std::string in;
  std::string embeddings;
  std::string embed_url;
  long embed_timeout_ms = 5000;
  int embed_retries = 2;
  std::size_t embed_batch = 64;
  std::size_t hash_dim = 256;
  std::string chunks;
  std::string stoplist;
  double tau = kDefaultThreshold;
  std::string refined_out;
};

int cmd_rank(const RankOpts& o, std::ostream& out, std::ostream& err) {
  require_input(o.in, "input");
  require_input(o.embeddings, "embedding file");
  require_input(o.chunks, "chunk annotation file");
  require_input(o.stoplist, "stoplist");
  require_output_dir(o.common.out);
  require_output_dir(o.refined_out);
  if (!(o.tau > 0.0 && o.tau < 1.0)) throw UsageError("--tau must lie in (0, 1)");

  std::unique_ptr<Chunker> chunker;
  if (!o.chunks.empty()) {
    chunker = std::make_unique<PrecomputedChunker>(o.chunks);
  } else {
    chunker = std::make_unique<HeuristicChunker>(o.stoplist.empty() ? default_stoplist()
                                                                    : load_stoplist(o.stoplist));
  }

  ServiceConfig svc;
  svc.url = o.embed_url;
  svc.timeout = std::chrono::milliseconds(o.embed_timeout_ms);
  svc.retries = o.embed_retries;
  svc.batch_size = o.embed_batch;
  svc = apply_env_overrides(svc);

  std::unique_ptr<EmbeddingProvider> provider;
  std::string provider_name;
  if (!o.embeddings.empty()) {
    provider = std::make_unique<PrecomputedEmbeddings>(o.embeddings);
    provider_name = "file";
  } else if (!svc.url.empty()) {
    provider = std::make_unique<EmbeddingServiceClient>(svc);
    provider_name = "service";
  } else {
    provider = std::make_unique<HashEmbedder>(o.hash_dim, o.common.seed);
    provider_name = "hash";
  }

  const auto samples = load_candidates(o.in);
  for (const auto& s : samples) {
    auto v = validate_sample(s);
    if (!v.empty()) throw DataError("sample '" + s.sample_id + "': " + v.front());
  }
  std::vector<RefinedSample> refined(samples.size());
  AutocheckOptions opts;
  opts.threshold = o.tau;
  parallel_for(samples.size(), o.common.jobs,
               [&](std::size_t i) { refined[i] = refine_sample(samples[i], *chunker, *provider, opts); });

  std::string report, refined_text;
  std::size_t changed = 0, warnings = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    report += dump_line(report_to_json(samples[i].sample_id, refined[i])) + "\n";
    refined_text += dump_line(sample_to_json(refined[i].sample)) + "\n";
    if (refined[i].sample != samples[i]) ++changed;
    warnings += refined[i].report.warnings.size();
    for (const auto& w : refined[i].report.warnings) err << "warning: " << samples[i].sample_id << ": " << w << "\n";
  }
  write_file_atomic(o.common.out, report);
  if (!o.refined_out.empty()) write_file_atomic(o.refined_out, refined_text);
  out << "ranked " << samples.size() << " sample(s) with tau=" << o.tau << " (" << provider_name
      << " embeddings); " << changed << " reordered, " << warnings << " warning(s)\n";
  out << "report: " << o.common.out << "\n";
  return 0;
}

struct PlanOpts {
  Common common;
  std::string in;
  std::size_t k = 0;
};

int cmd_plan(const PlanOpts& o, std::ostream& out) {
  require_input(o.in, "manifest");
  require_output_dir(o.common.out);
  const auto manifest = load_manifest(o.in);
  const auto plan = plan_incremental_generation(manifest, o.k, o.common.seed);
  write_file_atomic(o.common.out, plan_to_json(plan).dump(2) + "\n");
  out << "planned " << plan.subsets.size() << " cumulative subset(s) over " << manifest.items.size()
      << " item(s); sizes:";
  for (const auto& s : plan.subsets) out << " " << s.size();
  out << "\nplan: " << o.common.out << "\n";
  return 0;
}

struct LossOpts {
  Common common;
  std::string in;
  double beta = kDefaultBeta;
  std::size_t k = 0;
  std::string pairs = "all_pairs";
  std::string penalty = "best_only";
  double penalty_weight = 1.0;
};

int cmd_loss(const LossOpts& o, std::ostream& out) {
  require_input(o.in, "log-prob file");
  require_output_dir(o.common.out);
  LossConfig cfg;
  cfg.beta = o.beta;
  cfg.levels = o.k;
  cfg.penalty = parse_penalty(o.penalty);
  cfg.penalty_weight = o.penalty_weight;
  if (o.pairs.find('-') != std::string::npos) {
    cfg.pair_set = PairSet::custom;
    cfg.custom_pairs = parse_pairs(o.pairs);
  } else {
    cfg.pair_set = parse_pair_set(o.pairs);
  }
  validate(cfg);

  const auto records = load_logprobs(o.in);
  const auto grouped = group_log_ratios(records, cfg.levels);
  const auto batch = mdpo_batch_loss(grouped, cfg, o.common.jobs);
  std::string text;
  for (std::size_t i = 0; i < grouped.size(); ++i) {
    text += dump_line(loss_report_to_json(grouped[i].sample_id, batch.samples[i])) + "\n";
  }
  write_file_atomic(o.common.out, text);
  out.precision(10);
  out << "samples: " << grouped.size() << "  pairs/sample: "
      << comparison_pairs(cfg.levels, cfg.pair_set, cfg.custom_pairs).size() << "  beta: " << cfg.beta
      << "  penalty: " << to_string(cfg.penalty) << "\n";
  out << "total loss: " << batch.total << "\n";
  out << "report: " << o.common.out << "\n";
  return 0;
}

struct TrainOpts {
  Common common;
  std::string preset = "adjacent_cross";
  std::size_t vocab = 64;
  std::size_t prompts = 200;
  std::size_t samples_per_prompt = 4;
  std::size_t seq_len = 64;
  std::size_t support = 8;
  std::string rates;
  double lr = 1.0;
  std::size_t epochs = 100;
  double eval_fraction = 0.25;
  double beta = kDefaultBeta;
  double penalty_weight = 1.0;
  double init_scale = 0.0;
};

int cmd_train(const TrainOpts& o, std::ostream& out) {
  require_output_dir(o.common.out);
  const Preset& preset = find_preset(o.preset);
  ToyRecipe recipe;
  recipe.vocab_size = o.vocab;
  recipe.prompt_count = o.prompts;
  recipe.samples_per_prompt = o.samples_per_prompt;
  recipe.sequence_length = o.seq_len;
  recipe.support_size = o.support;
  recipe.corruption_rates = o.rates.empty() ? default_corruption_rates(preset.levels) : parse_doubles(o.rates);
  recipe.seed = o.common.seed;
  if (recipe.levels() != preset.levels) {
    throw UsageError("preset '" + preset.name + "' needs " + std::to_string(preset.levels) +
                     " corruption rates, got " + std::to_string(recipe.levels()));
  }
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.epochs = o.epochs;
  cfg.seed = o.common.seed;
  cfg.eval_fraction = o.eval_fraction;
  cfg.loss = loss_config_for(preset, o.beta);
  cfg.loss.penalty_weight = o.penalty_weight;

  const auto ds = synthesize_dataset(recipe);
  ToyModel model = o.init_scale > 0.0
                       ? ToyModel::random(recipe.vocab_size, recipe.prompt_count, o.init_scale, o.common.seed + 1)
                       : ToyModel(recipe.vocab_size, recipe.prompt_count);
  const auto trace = train(std::move(model), ds, cfg);
  write_file_atomic(o.common.out, trace_to_json(trace, cfg, recipe, preset.name).dump(2) + "\n");

  const auto& last = trace.epochs.back();
  out.precision(6);
  out << "preset " << preset.name << " [" << preset.label << "], K=" << preset.levels << ", " << cfg.epochs
      << " epoch(s)\n";
  out << "final: loss " << last.mean_loss << "  mean r0 " << last.mean_r0 << "  eval full-order "
      << trace.final_eval.full_order_accuracy << "  eval pairwise " << trace.final_eval.pairwise_accuracy
      << "\n";
  out << "trace: " << o.common.out << "\n";
  return 0;
}

struct BenchOpts {
  Common common;
  std::string in;
};

int cmd_bench(const BenchOpts& o, std::ostream& out) {
  require_input(o.in, "bench file");
  require_output_dir(o.common.out);
  const auto bench = load_bench(o.in);
  if (bench.empty()) throw DataError("bench file has no dialogues");
  const auto scores = bench_report(score_metrics(bench));
  const auto hal = bench_report(flag_metrics(bench));
  const Json j = bench_to_json(scores, hal);
  if (!o.common.out.empty()) write_file_atomic(o.common.out, j.dump(2) + "\n");
  out.precision(4);
  out << std::fixed << "dialogues: " << scores.dialogue_count << "  rounds: " << scores.round_count << "\n"
      << "score (c/m): " << scores.cumulative << " / " << scores.mean << "\n"
      << "hal.  (c/m): " << hal.cumulative << " / " << hal.mean << "\n";
  return 0;
}

int cmd_selfcheck(const Common& c, std::ostream& out) {
  require_output_dir(c.out);
  SelfcheckFixtures fx;
  fx.seed = c.seed == 0 ? fx.seed : c.seed;
  const auto results = run_selfcheck(fx);
  bool all = true;
  Json j = Json::array();
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    all = all && r.passed;
    j.push_back(Json{{"check", r.name}, {"passed", r.passed}, {"detail", r.detail}});
  }
  if (!c.out.empty()) write_file_atomic(c.out, j.dump(2) + "\n");
  out << (all ? "all checks passed\n" : "selfcheck FAILED\n");
  return all ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-level preference toolkit: auto-check ranking, IG planning, MDPO losses, toy training, "
               "multi-round benchmark metrics",
               "mlpref"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1, 1);

  RankOpts rank;
  auto* s_rank = app.add_subcommand("rank", "Re-rank candidate responses against their standard response");
  add_common(s_rank, rank.common, true);
  s_rank->add_option("--in", rank.in, "Candidate JSONL file")->required();
  s_rank->add_option("--embeddings", rank.embeddings, "Precomputed embedding table (binary or JSONL)");
  s_rank->add_option("--embed-url", rank.embed_url, "Embedding service endpoint (env MLPREF_EMBED_URL)");
  s_rank->add_option("--embed-timeout-ms", rank.embed_timeout_ms, "Service timeout (env MLPREF_EMBED_TIMEOUT_MS)")
      ->capture_default_str();
  s_rank->add_option("--embed-retries", rank.embed_retries, "Extra attempts per service request")
      ->capture_default_str();
  s_rank->add_option("--embed-batch", rank.embed_batch, "Texts per service request")->capture_default_str();
  s_rank->add_option("--hash-dim", rank.hash_dim, "Dimension of the seeded hash embedder (used when no other provider is set)")
      ->capture_default_str();
  s_rank->add_option("--chunks", rank.chunks, "Precomputed chunk annotations (JSONL) instead of the built-in chunker");
  s_rank->add_option("--stoplist", rank.stoplist, "Noun stoplist file, one noun per line");
  s_rank->add_option("--tau", rank.tau, "Similarity threshold")->capture_default_str();
  s_rank->add_option("--refined-out", rank.refined_out, "Write re-ranked samples (candidate JSONL) here");

  PlanOpts plan;
  auto* s_plan = app.add_subcommand("plan-ig", "Plan incremental-generation training subsets");
  add_common(s_plan, plan.common, true);
  s_plan->add_option("--in", plan.in, "Fine-tuning manifest JSONL")->required();
  s_plan->add_option("--k", plan.k, "Preference level count K (>= 3)")->required();

  LossOpts loss;
  auto* s_loss = app.add_subcommand("loss", "MDPO loss and gradients from a log-prob dump");
  add_common(s_loss, loss.common, true);
  s_loss->add_option("--in", loss.in, "Log-prob JSONL file")->required();
  s_loss->add_option("--beta", loss.beta, "DPO temperature (non-paper default)")->capture_default_str();
  s_loss->add_option("--k", loss.k, "Preference level count K")->required();
  s_loss->add_option("--pairs", loss.pairs, "all_pairs | adjacent_only | explicit list such as 0-1,1-2")
      ->capture_default_str();
  s_loss->add_option("--penalty", loss.penalty, "best_only | none | all_winners")->capture_default_str();
  s_loss->add_option("--penalty-weight", loss.penalty_weight, "Multiplier of the winner penalty")
      ->capture_default_str();

  TrainOpts tr;
  auto* s_train = app.add_subcommand("train-toy", "Train the tabular toy model with an ablation preset");
  add_common(s_train, tr.common, true);
  s_train->add_option("--preset", tr.preset, "Preset name or table label")->capture_default_str();
  s_train->add_option("--vocab", tr.vocab, "Vocabulary size")->capture_default_str();
  s_train->add_option("--prompts", tr.prompts, "Prompt count")->capture_default_str();
  s_train->add_option("--samples-per-prompt", tr.samples_per_prompt, "Samples per prompt")->capture_default_str();
  s_train->add_option("--seq-len", tr.seq_len, "Tokens per sequence")->capture_default_str();
  s_train->add_option("--support", tr.support, "Clean tokens per prompt")->capture_default_str();
  s_train->add_option("--rates", tr.rates, "Comma-separated corruption rates per level (default by K)");
  s_train->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  s_train->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
  s_train->add_option("--eval-fraction", tr.eval_fraction, "Held-out fraction")->capture_default_str();
  s_train->add_option("--beta", tr.beta, "DPO temperature (non-paper default)")->capture_default_str();
  s_train->add_option("--penalty-weight", tr.penalty_weight, "Multiplier of the winner penalty")
      ->capture_default_str();
  s_train->add_option("--init-scale", tr.init_scale, "Uniform random init half-width (0 = zero logits)")
      ->capture_default_str();

  BenchOpts bench;
  auto* s_bench = app.add_subcommand("eval-mrhal", "Cumulative and mean multi-round dialogue metrics");
  add_common(s_bench, bench.common, false);
  s_bench->add_option("--in", bench.in, "Bench JSONL file")->required();

  Common self;
  auto* s_self = app.add_subcommand("selfcheck", "Run the embedded invariant suite");
  add_common(s_self, self, false);

  try {
    std::vector<std::string> merged = args;
    if (!args.empty()) {
      if (auto* sub = app.get_subcommand_no_throw(args.front())) {
        if (auto path = find_config_path(args)) {
          if (!fs::is_regular_file(*path)) throw UsageError("config file not found: " + *path);
          auto extra = config_args(*sub, *path);
          merged.insert(merged.begin() + 1, extra.begin(), extra.end());
        }
      }
    }
    std::vector<std::string> reversed(merged.rbegin(), merged.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (s_rank->parsed()) return cmd_rank(rank, out, err);
    if (s_plan->parsed()) return cmd_plan(plan, out);
    if (s_loss->parsed()) return cmd_loss(loss, out);
    if (s_train->parsed()) return cmd_train(tr, out);
    if (s_bench->parsed()) return cmd_bench(bench, out);
    if (s_self->parsed()) return cmd_selfcheck(self, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace mlpref
