#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bindecomp/asmprep.hpp"
#include "bindecomp/checkpoint.hpp"
#include "bindecomp/common.hpp"
#include "bindecomp/corpus.hpp"
#include "bindecomp/metrics.hpp"
#include "bindecomp/srcprep.hpp"
#include "bindecomp/tasks.hpp"
#include "bindecomp/tokenizer.hpp"
#include "bindecomp/training.hpp"
#include "bindecomp/transformer.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace bindecomp;

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Run bookkeeping: every subcommand leaves a manifest next to its primary
// output recording the resolved configuration, seed, and content digests of
// everything read and written.
// ---------------------------------------------------------------------------

struct RunContext {
  std::string subcommand;
  std::uint64_t seed = 0;
  json config = json::object();
  ordered_json inputs = ordered_json::object();
  ordered_json outputs = ordered_json::object();
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void input_file(const std::string& path) {
    inputs[path] = content_digest(read_file(path));
  }

  // Directory inputs get one digest over the sorted (relative path, digest)
  // sequence so renames and content changes both show up.
  void input_tree(const std::string& root) {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) {
      acc += fs::relative(f, root).string();
      acc += '=';
      acc += content_digest(read_file(f));
      acc += '\n';
    }
    inputs[root] = content_digest(acc);
  }

  void output_file(const std::string& path) {
    outputs[path] = content_digest(read_file(path));
  }

  void write_manifest(const std::string& anchor) {
    const auto elapsed = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - started);
    ordered_json j;
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["wall_clock_seconds"] = elapsed.count();
    write_file(anchor + ".manifest.json", j.dump(2) + "\n");
  }
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BINDECOMP_SEED")) {
    char* end = nullptr;
    const std::uint64_t v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') {
      throw UsageError("BINDECOMP_SEED is not an unsigned integer: " + std::string(env));
    }
    return v;
  }
  return 0;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  return json::parse(read_file(path));
}

json config_section(const json& cfg, const char* name) {
  return cfg.contains(name) ? cfg.at(name) : json::object();
}

corpus::Corpus read_corpus(const std::string& path) {
  return corpus::from_jsonl(read_file(path));
}

void write_corpus(const corpus::Corpus& c, const std::string& path) {
  write_file(path, corpus::to_jsonl(c));
}

const std::string& asm_text(const corpus::FunctionPair& p) {
  return p.asm_norm ? *p.asm_norm : p.asm_raw;
}

neural::TransformerConfig transformer_from_json(const json& s, std::uint64_t seed) {
  neural::TransformerConfig c;
  c.d_model = s.value("d_model", c.d_model);
  c.n_heads = s.value("n_heads", c.n_heads);
  c.n_enc_layers = s.value("enc_layers", c.n_enc_layers);
  c.n_dec_layers = s.value("dec_layers", c.n_dec_layers);
  c.d_ff = s.value("d_ff", c.d_ff);
  c.max_seq_len = s.value("max_seq_len", c.max_seq_len);
  c.use_positional = s.value("use_positional", c.use_positional);
  c.dropout_rate = s.value("dropout", c.dropout_rate);
  c.seed = seed;
  return c;
}

neural::TrainSchedule schedule_from_json(const json& s, std::uint64_t seed) {
  neural::TrainSchedule sched;
  sched.max_steps = s.value("max_steps", sched.max_steps);
  sched.batch_size = s.value("batch_size", sched.batch_size);
  sched.lr = s.value("lr", sched.lr);
  sched.clip_norm = s.value("clip_norm", sched.clip_norm);
  sched.patience = s.value("patience", sched.patience);
  sched.min_delta = s.value("min_delta", sched.min_delta);
  sched.target_loss = s.value("target_loss", sched.target_loss);
  sched.snapshot_every = s.value("snapshot_every", sched.snapshot_every);
  sched.seed = seed;
  return sched;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
  return buf;
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

void cmd_ingest(RunContext& ctx, const std::string& in, const std::string& id_list,
                const std::string& out) {
  ctx.input_tree(in);
  std::optional<std::string> manifest;
  if (!id_list.empty()) {
    manifest = id_list;
    ctx.input_file(id_list);
  }
  const corpus::Corpus c = corpus::ingest_pairs(in, manifest);
  write_corpus(c, out);
  ctx.output_file(out);
  ctx.write_manifest(out);
  std::cout << "ingested " << c.pairs.size() << " pairs";
  if (!c.warnings.empty()) std::cout << " (" << c.warnings.size() << " warnings)";
  std::cout << " -> " << out << "\n";
}

corpus::Corpus corpus_from_path(RunContext& ctx, const std::string& in) {
  if (fs::is_directory(in)) {
    ctx.input_tree(in);
    return corpus::ingest_pairs(in);
  }
  ctx.input_file(in);
  return read_corpus(in);
}

void cmd_prep_asm(RunContext& ctx, const std::string& in, const std::string& out,
                  std::size_t jobs) {
  corpus::Corpus c = corpus_from_path(ctx, in);
  std::vector<std::size_t> diag_counts(c.pairs.size(), 0);
  parallel_for(c.pairs.size(), jobs, [&](std::size_t i) {
    const asmprep::CanonicalAsm result = asmprep::normalize_listing(c.pairs[i].asm_raw);
    c.pairs[i].asm_norm = result.text;
    diag_counts[i] = result.diagnostics.size();
  });
  std::size_t diags = 0;
  for (std::size_t n : diag_counts) diags += n;
  write_corpus(c, out);
  ctx.output_file(out);
  ctx.write_manifest(out);
  std::cout << "normalized assembly for " << c.pairs.size() << " pairs (" << diags
            << " diagnostics) -> " << out << "\n";
}

void cmd_prep_src(RunContext& ctx, const std::string& in, const std::string& out,
                  std::size_t jobs) {
  corpus::Corpus c = corpus_from_path(ctx, in);
  std::vector<std::size_t> diag_counts(c.pairs.size(), 0);
  parallel_for(c.pairs.size(), jobs, [&](std::size_t i) {
    const srcprep::NormalizeResult result = srcprep::normalize_source(c.pairs[i].src_raw);
    c.pairs[i].src_norm = result.text;
    diag_counts[i] = result.diagnostics.size();
  });
  std::size_t diags = 0;
  for (std::size_t n : diag_counts) diags += n;
  write_corpus(c, out);
  ctx.output_file(out);
  ctx.write_manifest(out);
  std::cout << "normalized source for " << c.pairs.size() << " pairs (" << diags
            << " diagnostics) -> " << out << "\n";
}

void cmd_train_bpe(RunContext& ctx, const std::string& in, const std::string& side,
                   std::optional<std::size_t> merges_flag, const std::string& out) {
  if (side != "asm" && side != "src") {
    throw UsageError("--side must be 'asm' or 'src', got '" + side + "'");
  }
  const std::size_t merges = merges_flag
      ? *merges_flag
      : config_section(ctx.config, "tokenizer").value("merges", std::size_t{200});

  ctx.input_file(in);
  const corpus::Corpus c = read_corpus(in);
  std::map<std::string, std::size_t> words;
  for (const auto& p : c.pairs) {
    const std::string& text = side == "asm" ? asm_text(p) : tasks::classifier_text(p);
    for (const auto& w : split_whitespace(text)) words[w]++;
  }
  const bpe::Model model = bpe::train(words, merges);
  bpe::save(model, out);
  ctx.output_file(out);
  ctx.write_manifest(out);
  std::cout << "trained " << side << " tokenizer: vocab " << model.vocab_size() << ", "
            << model.merges.size() << " merges -> " << out << "\n";
}

void cmd_tokenize(RunContext& ctx, const std::string& in, const std::string& asm_bpe_path,
                  const std::string& src_bpe_path, const std::string& out,
                  std::size_t jobs) {
  ctx.input_file(in);
  ctx.input_file(asm_bpe_path);
  ctx.input_file(src_bpe_path);
  corpus::Corpus c = read_corpus(in);
  const bpe::Model asm_bpe = bpe::load(asm_bpe_path);
  const bpe::Model src_bpe = bpe::load(src_bpe_path);
  parallel_for(c.pairs.size(), jobs, [&](std::size_t i) {
    c.pairs[i].asm_token_len = bpe::encode_text(asm_bpe, asm_text(c.pairs[i])).length();
    c.pairs[i].src_token_len =
        bpe::encode_text(src_bpe, tasks::classifier_text(c.pairs[i])).length();
  });
  write_corpus(c, out);
  ctx.output_file(out);
  ctx.write_manifest(out);
  std::cout << "tokenized " << c.pairs.size() << " pairs -> " << out << "\n";
}

void cmd_toss_reduce(RunContext& ctx, const std::string& in, const std::string& out,
                     double low, double high, const std::string& side) {
  ctx.input_file(in);
  const corpus::Corpus c = read_corpus(in);
  std::vector<std::size_t> asm_lens, src_lens;
  for (const auto& p : c.pairs) {
    if (!p.asm_token_len || !p.src_token_len) {
      throw UsageError("pair '" + p.id + "' has no token lengths; run tokenize first");
    }
    asm_lens.push_back(*p.asm_token_len);
    src_lens.push_back(*p.src_token_len);
  }
  const auto result =
      bpe::toss_reduce(asm_lens, src_lens, low, high, bpe::toss_side_from_string(side));

  corpus::Corpus kept;
  kept.provenance = c.provenance;
  for (std::size_t idx : result.kept_indices) kept.pairs.push_back(c.pairs[idx]);
  write_corpus(kept, out);
  ctx.output_file(out);
  ctx.write_manifest(out);
  std::cout << "kept " << kept.pairs.size() << " of " << c.pairs.size() << " pairs"
            << " (asm bounds [" << result.source_bounds.low << ","
            << result.source_bounds.high << "], src bounds [" << result.target_bounds.low
            << "," << result.target_bounds.high << "]) -> " << out << "\n";
}

void cmd_split(RunContext& ctx, const std::string& in, const std::string& out_prefix,
               double fraction, const std::string& key) {
  ctx.input_file(in);
  const corpus::Corpus c = read_corpus(in);
  const auto result = corpus::stratified_split(c, fraction,
                                               corpus::split_key_from_string(key), ctx.seed);
  const std::string train_path = out_prefix + ".train.jsonl";
  const std::string test_path = out_prefix + ".test.jsonl";
  write_corpus(result.train, train_path);
  write_corpus(result.test, test_path);
  ctx.output_file(train_path);
  ctx.output_file(test_path);
  ctx.write_manifest(out_prefix);
  std::cout << "split " << c.pairs.size() << " pairs into " << result.train.pairs.size()
            << " train / " << result.test.pairs.size() << " test -> " << train_path
            << ", " << test_path << "\n";
}

// Builds teacher-forcing pairs from a corpus, truncating to the model window
// (the target loses one slot to the begin-of-sequence shift).
std::vector<neural::SeqPair> seq_pairs_for(const corpus::Corpus& c,
                                           const bpe::Model& asm_bpe,
                                           const bpe::Model& src_bpe,
                                           std::size_t max_seq_len,
                                           std::size_t* skipped) {
  std::vector<neural::SeqPair> out;
  for (const auto& p : c.pairs) {
    neural::SeqPair sp;
    sp.src = tasks::clamp_ids(bpe::encode_text(asm_bpe, asm_text(p)), max_seq_len);
    sp.tgt = tasks::clamp_ids(bpe::encode_text(src_bpe, tasks::classifier_text(p)),
                              max_seq_len - 1);
    if (sp.src.empty() || sp.tgt.empty()) {
      ++*skipped;
      continue;
    }
    out.push_back(std::move(sp));
  }
  return out;
}

void cmd_train_decompiler(RunContext& ctx, const std::string& train_path,
                          const std::string& asm_bpe_path, const std::string& src_bpe_path,
                          const std::string& out) {
  ctx.input_file(train_path);
  ctx.input_file(asm_bpe_path);
  ctx.input_file(src_bpe_path);
  const corpus::Corpus c = read_corpus(train_path);
  const bpe::Model asm_bpe = bpe::load(asm_bpe_path);
  const bpe::Model src_bpe = bpe::load(src_bpe_path);

  const json dec_cfg = config_section(ctx.config, "decompiler");
  neural::TransformerConfig mcfg = transformer_from_json(dec_cfg, ctx.seed);
  mcfg.vocab_src = asm_bpe.vocab_size();
  mcfg.vocab_tgt = src_bpe.vocab_size();
  const neural::TrainSchedule sched =
      schedule_from_json(config_section(dec_cfg, "schedule"), ctx.seed);

  std::size_t skipped = 0;
  const auto data = seq_pairs_for(c, asm_bpe, src_bpe, mcfg.max_seq_len, &skipped);
  if (data.empty()) throw EmptyTrainingSet("no usable training pairs after encoding");

  neural::Seq2Seq model = neural::Seq2Seq::init(mcfg);
  const neural::TrainResult result =
      neural::train_seq2seq(model, data, sched, tasks::specials_of(src_bpe));

  neural::save_checkpoint(out, "seq2seq", model.config, model.params);
  const std::string loss_path = out + ".loss.csv";
  write_file(loss_path, neural::loss_curve_csv(result.losses));
  ctx.output_file(out);
  ctx.output_file(loss_path);
  ctx.write_manifest(out);
  std::cout << "trained decompiler on " << data.size() << " pairs";
  if (skipped) std::cout << " (" << skipped << " skipped)";
  std::cout << ": " << result.steps << " steps, final loss "
            << (result.losses.empty() ? 0.0 : result.losses.back()) << ", stop="
            << result.stop_reason << " -> " << out << "\n";
}

// Shared by decompile/evaluate: produce candidate source text per pair.
std::vector<std::string> decompile_all(const corpus::Corpus& c,
                                       const tasks::DecompileFn& fn, std::size_t jobs) {
  std::vector<std::string> texts(c.pairs.size());
  parallel_for(c.pairs.size(), jobs, [&](std::size_t i) { texts[i] = fn(c.pairs[i]); });
  return texts;
}

void cmd_decompile(RunContext& ctx, const std::string& model_path, const std::string& in,
                   const std::string& asm_bpe_path, const std::string& src_bpe_path,
                   const std::string& out, std::size_t beam, std::size_t max_len,
                   std::size_t jobs) {
  ctx.input_file(model_path);
  ctx.input_file(in);
  ctx.input_file(asm_bpe_path);
  ctx.input_file(src_bpe_path);
  const corpus::Corpus c = read_corpus(in);
  const bpe::Model asm_bpe = bpe::load(asm_bpe_path);
  const bpe::Model src_bpe = bpe::load(src_bpe_path);
  const neural::Seq2Seq model =
      neural::seq2seq_from_checkpoint(neural::load_checkpoint(model_path));

  neural::DecodeOptions opts;
  opts.beam_width = beam;
  opts.max_len = max_len ? max_len : model.config.max_seq_len - 1;
  const auto texts =
      decompile_all(c, tasks::neural_decompiler(model, asm_bpe, src_bpe, opts), jobs);

  std::string lines;
  for (std::size_t i = 0; i < c.pairs.size(); ++i) {
    ordered_json row;
    row["id"] = c.pairs[i].id;
    row["decompiled"] = texts[i];
    lines += row.dump();
    lines += '\n';
  }
  write_file(out, lines);
  ctx.output_file(out);
  ctx.write_manifest(out);
  std::cout << "decompiled " << c.pairs.size() << " pairs -> " << out << "\n";
}

struct LabeledCorpus {
  std::vector<std::size_t> indices;      // into corpus.pairs
  std::vector<std::string> labels;       // parallel to indices
  std::vector<std::string> label_set;
  std::map<std::string, std::size_t> dropped_by_cwe;
};

tasks::LabelSpace label_space_from_config(const json& task_cfg) {
  if (!task_cfg.contains("cwe_ids")) return tasks::LabelSpace::standard();
  tasks::LabelSpace space;
  for (int v : task_cfg.at("cwe_ids").get<std::vector<int>>()) {
    space.cwe_ids.push_back(corpus::CweId{v});
  }
  space.good_label = task_cfg.value("good_label", space.good_label);
  return space;
}

// Assigns classification labels to corpus rows. The biclass task balances
// classes by downsampling the majority variant with a seeded shuffle.
LabeledCorpus label_corpus(const corpus::Corpus& c, const std::string& task,
                           const tasks::LabelSpace& space, std::uint64_t seed,
                           bool balance) {
  LabeledCorpus out;
  if (task == "biclass") {
    std::vector<std::size_t> good, bad;
    for (std::size_t i = 0; i < c.pairs.size(); ++i) {
      (c.pairs[i].variant == corpus::Variant::good ? good : bad).push_back(i);
    }
    if (good.empty() || bad.empty()) {
      throw OneClassOnly("biclass task needs both good and bad samples");
    }
    if (balance) {
      const std::size_t keep = std::min(good.size(), bad.size());
      auto& majority = good.size() > bad.size() ? good : bad;
      if (majority.size() > keep) {
        Rng rng(derive_seed(seed, "biclass-balance"));
        rng.shuffle(majority);
        majority.resize(keep);
        std::sort(majority.begin(), majority.end());
      }
    }
    out.indices = good;
    out.indices.insert(out.indices.end(), bad.begin(), bad.end());
    std::sort(out.indices.begin(), out.indices.end());
    for (std::size_t idx : out.indices) {
      out.labels.push_back(corpus::to_string(c.pairs[idx].variant));
    }
    out.label_set = {"bad", "good"};
    return out;
  }
  if (task != "multiclass") {
    throw UsageError("--task must be 'biclass' or 'multiclass', got '" + task + "'");
  }
  space.validate();
  out.label_set = space.labels();
  for (std::size_t i = 0; i < c.pairs.size(); ++i) {
    if (const auto label = space.label_of(c.pairs[i])) {
      out.indices.push_back(i);
      out.labels.push_back(*label);
    } else {
      out.dropped_by_cwe[tasks::LabelSpace::cwe_label(c.pairs[i].cwe)]++;
    }
  }
  if (out.indices.empty()) {
    throw EmptyAfterFilter("no sample carries a label inside the label space");
  }
  return out;
}

void cmd_train_classifier(RunContext& ctx, const std::string& train_path,
                          const std::string& task, const std::string& bpe_path,
                          const std::string& out) {
  ctx.input_file(train_path);
  ctx.input_file(bpe_path);
  const corpus::Corpus c = read_corpus(train_path);
  const bpe::Model text_bpe = bpe::load(bpe_path);

  const json task_cfg = config_section(ctx.config, "task");
  const tasks::LabelSpace space = label_space_from_config(task_cfg);
  const LabeledCorpus labeled = label_corpus(c, task, space, ctx.seed, true);

  const json cls_cfg = config_section(ctx.config, "classifier");
  neural::TransformerConfig mcfg = transformer_from_json(cls_cfg, ctx.seed);
  mcfg.n_dec_layers = 0;
  mcfg.vocab_src = text_bpe.vocab_size();
  mcfg.vocab_tgt = labeled.label_set.size();
  const neural::TrainSchedule sched =
      schedule_from_json(config_section(cls_cfg, "schedule"), ctx.seed);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < labeled.label_set.size(); ++i) {
    index[labeled.label_set[i]] = i;
  }
  std::map<std::string, std::size_t> counts;
  std::vector<neural::LabeledSeq> data;
  for (std::size_t k = 0; k < labeled.indices.size(); ++k) {
    const auto& p = c.pairs[labeled.indices[k]];
    data.push_back({tasks::detail::classifier_ids(text_bpe, tasks::classifier_text(p),
                                                  mcfg.max_seq_len),
                    index.at(labeled.labels[k])});
    counts[labeled.labels[k]]++;
  }

  neural::Classifier model = neural::Classifier::init(mcfg);
  const neural::TrainResult result =
      neural::train_classifier(model, data, sched, tasks::specials_of(text_bpe));

  neural::save_checkpoint(out, "classifier", model.config, model.params);
  ordered_json meta;
  meta["task"] = task;
  meta["label_set"] = labeled.label_set;
  meta["good_label"] = space.good_label;
  if (task == "multiclass") {
    std::vector<int> ids;
    for (const auto& id : space.cwe_ids) ids.push_back(id.value);
    meta["cwe_ids"] = ids;
  }
  meta["train_counts"] = counts;
  meta["dropped_by_cwe"] = labeled.dropped_by_cwe;
  meta["seed"] = ctx.seed;
  const std::string labels_path = out + ".labels.json";
  write_file(labels_path, meta.dump(2) + "\n");
  const std::string loss_path = out + ".loss.csv";
  write_file(loss_path, neural::loss_curve_csv(result.losses));

  ctx.output_file(out);
  ctx.output_file(labels_path);
  ctx.output_file(loss_path);
  ctx.write_manifest(out);
  std::cout << "trained " << task << " classifier on " << data.size() << " samples: "
            << result.steps << " steps, final loss "
            << (result.losses.empty() ? 0.0 : result.losses.back()) << ", stop="
            << result.stop_reason << " -> " << out << "\n";
}

ordered_json classification_report_json(const metrics::ClassificationReport& r) {
  ordered_json j;
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["weighted_f1"] = r.weighted_f1;
  ordered_json per = ordered_json::object();
  for (const auto& label : r.labels) {
    const auto& s = r.per_class.at(label);
    per[label] = {{"precision", s.precision},
                  {"recall", s.recall},
                  {"f1", s.f1},
                  {"support", s.support}};
  }
  j["per_class"] = per;
  j["labels"] = r.labels;
  j["confusion"] = r.confusion;
  j["empty_classes"] = r.empty_classes;
  return j;
}

struct EvalOptions {
  std::string task;
  std::string test_path;
  std::string model_path;       // decompiler checkpoint
  bool identity = false;        // bypass the decompiler, use reference text
  std::string asm_bpe_path;
  std::string src_bpe_path;
  std::string classifier_path;  // predict only
  std::string labels_path;      // predict only; defaults beside the classifier
  std::string text_bpe_path;    // predict only
  std::size_t beam = 1;
  std::size_t max_len = 0;
  std::size_t jobs = 1;
  std::string out;
};

// The decompilation step shared by both evaluate tasks. Holds the loaded
// model/tokenizers alive alongside the closure.
struct DecompileStage {
  std::optional<neural::Seq2Seq> model;
  std::optional<bpe::Model> asm_bpe;
  std::optional<bpe::Model> src_bpe;
  tasks::DecompileFn fn;
  std::string kind;
};

DecompileStage make_decompile_stage(RunContext& ctx, const EvalOptions& opt) {
  DecompileStage stage;
  if (opt.identity) {
    stage.fn = tasks::identity_decompiler();
    stage.kind = "identity";
    return stage;
  }
  if (opt.model_path.empty() || opt.asm_bpe_path.empty() || opt.src_bpe_path.empty()) {
    throw UsageError("evaluate needs --model, --asm-bpe and --src-bpe (or --identity)");
  }
  ctx.input_file(opt.model_path);
  ctx.input_file(opt.asm_bpe_path);
  ctx.input_file(opt.src_bpe_path);
  stage.model = neural::seq2seq_from_checkpoint(neural::load_checkpoint(opt.model_path));
  stage.asm_bpe = bpe::load(opt.asm_bpe_path);
  stage.src_bpe = bpe::load(opt.src_bpe_path);
  neural::DecodeOptions dopts;
  dopts.beam_width = opt.beam;
  dopts.max_len = opt.max_len ? opt.max_len : stage.model->config.max_seq_len - 1;
  stage.fn = tasks::neural_decompiler(*stage.model, *stage.asm_bpe, *stage.src_bpe, dopts);
  stage.kind = "neural";
  return stage;
}

void cmd_evaluate_decompile(RunContext& ctx, const EvalOptions& opt) {
  ctx.input_file(opt.test_path);
  const corpus::Corpus test = read_corpus(opt.test_path);
  const DecompileStage stage = make_decompile_stage(ctx, opt);
  const auto texts = decompile_all(test, stage.fn, opt.jobs);
  const tasks::DecompileEval eval = tasks::run_decompile_eval(test.pairs, texts);

  ordered_json j;
  j["task"] = "decompile";
  j["version"] = kVersion;
  j["seed"] = ctx.seed;
  j["config_digest"] = content_digest(ctx.config.dump());
  j["decompiler"] = stage.kind;
  j["counts"] = {{"pairs", eval.corpus.pairs}};
  j["corpus"] = {{"edit_similarity", eval.corpus.mean.edit_similarity},
                 {"bleu4_mean", eval.corpus.mean.bleu4},
                 {"bleu4_pooled", eval.corpus.bleu4_pooled},
                 {"meteor", eval.corpus.mean.meteor},
                 {"rouge_l_f", eval.corpus.mean.rouge_l_f}};
  ordered_json rows = ordered_json::array();
  for (const auto& ps : eval.per_pair) {
    rows.push_back({{"id", ps.id},
                    {"edit_similarity", ps.scores.edit_similarity},
                    {"bleu4", ps.scores.bleu4},
                    {"meteor", ps.scores.meteor},
                    {"rouge_l_f", ps.scores.rouge_l_f}});
  }
  j["per_pair"] = rows;
  write_file(opt.out, j.dump(2) + "\n");
  ctx.output_file(opt.out);
  ctx.write_manifest(opt.out);
  std::cout << "decompilation eval over " << eval.corpus.pairs << " pairs: ED "
            << pct(eval.corpus.mean.edit_similarity) << ", BLEU-4 "
            << pct(eval.corpus.mean.bleu4) << ", METEOR " << pct(eval.corpus.mean.meteor)
            << ", ROUGE-L " << pct(eval.corpus.mean.rouge_l_f) << " -> " << opt.out
            << "\n";
}

void cmd_evaluate_predict(RunContext& ctx, const EvalOptions& opt) {
  if (opt.classifier_path.empty() || opt.text_bpe_path.empty()) {
    throw UsageError("evaluate --task predict needs --classifier and --text-bpe");
  }
  const std::string labels_path =
      opt.labels_path.empty() ? opt.classifier_path + ".labels.json" : opt.labels_path;
  ctx.input_file(opt.test_path);
  ctx.input_file(opt.classifier_path);
  ctx.input_file(labels_path);
  ctx.input_file(opt.text_bpe_path);

  const corpus::Corpus test = read_corpus(opt.test_path);
  const neural::Classifier cls =
      neural::classifier_from_checkpoint(neural::load_checkpoint(opt.classifier_path));
  const bpe::Model text_bpe = bpe::load(opt.text_bpe_path);
  const json meta = json::parse(read_file(labels_path));
  const std::string task = meta.at("task").get<std::string>();
  const auto label_set = meta.at("label_set").get<std::vector<std::string>>();

  tasks::LabelSpace space = tasks::LabelSpace::standard();
  if (meta.contains("cwe_ids")) {
    space.cwe_ids.clear();
    for (int v : meta.at("cwe_ids").get<std::vector<int>>()) {
      space.cwe_ids.push_back(corpus::CweId{v});
    }
  }
  space.good_label = meta.value("good_label", space.good_label);

  // Test rows keep their natural class; out-of-space rows are dropped.
  const LabeledCorpus labeled = label_corpus(test, task, space, ctx.seed, false);

  corpus::Corpus eval_rows;
  for (std::size_t idx : labeled.indices) eval_rows.pairs.push_back(test.pairs[idx]);

  const DecompileStage stage = make_decompile_stage(ctx, opt);
  const auto decompiled_texts = decompile_all(eval_rows, stage.fn, opt.jobs);

  const neural::SpecialIds specials = tasks::specials_of(text_bpe);
  const std::size_t cap = cls.config.max_seq_len;
  auto classify_texts = [&](const std::vector<std::string>& texts) {
    std::vector<std::string> predicted(texts.size());
    parallel_for(texts.size(), opt.jobs, [&](std::size_t i) {
      const auto ids = tasks::detail::classifier_ids(text_bpe, texts[i], cap);
      predicted[i] = label_set[neural::classify(cls, ids, specials)];
    });
    return predicted;
  };

  std::vector<std::string> original_texts(eval_rows.pairs.size());
  for (std::size_t i = 0; i < eval_rows.pairs.size(); ++i) {
    original_texts[i] = tasks::classifier_text(eval_rows.pairs[i]);
  }

  const auto rep_decompiled =
      metrics::classification_report(classify_texts(decompiled_texts), labeled.labels,
                                     label_set);
  const auto rep_original =
      metrics::classification_report(classify_texts(original_texts), labeled.labels,
                                     label_set);

  ordered_json j;
  j["task"] = "predict";
  j["version"] = kVersion;
  j["seed"] = ctx.seed;
  j["config_digest"] = content_digest(ctx.config.dump());
  j["classification_task"] = task;
  j["decompiler"] = stage.kind;
  j["label_space"] = label_set;
  j["counts"] = {{"test", eval_rows.pairs.size()},
                 {"dropped", test.pairs.size() - eval_rows.pairs.size()}};
  j["decompiled"] = classification_report_json(rep_decompiled);
  j["original"] = classification_report_json(rep_original);
  write_file(opt.out, j.dump(2) + "\n");
  ctx.output_file(opt.out);
  ctx.write_manifest(opt.out);
  std::cout << "prediction eval over " << eval_rows.pairs.size() << " samples: "
            << "decompiled acc " << pct(rep_decompiled.accuracy) << " (macro-F1 "
            << pct(rep_decompiled.macro_f1) << "), original acc "
            << pct(rep_original.accuracy) << " -> " << opt.out << "\n";
}

// ---------------------------------------------------------------------------
// Report rendering.
// ---------------------------------------------------------------------------

std::string render_decompile_table(const json& j) {
  const auto& c = j.at("corpus");
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %-8s %-8s %-10s %-8s %-8s\n", "pairs", "ED",
                "BLEU-4", "BLEU-4(p)", "METEOR", "ROUGE-L");
  out += line;
  std::snprintf(line, sizeof(line), "%-8zu %-8s %-8s %-10s %-8s %-8s\n",
                j.at("counts").at("pairs").get<std::size_t>(),
                pct(c.at("edit_similarity").get<double>()).c_str(),
                pct(c.at("bleu4_mean").get<double>()).c_str(),
                pct(c.at("bleu4_pooled").get<double>()).c_str(),
                pct(c.at("meteor").get<double>()).c_str(),
                pct(c.at("rouge_l_f").get<double>()).c_str());
  out += line;
  return out;
}

std::string render_classification_block(const std::string& title, const json& rep) {
  std::string out = "== " + title + " ==\n";
  char line[200];
  std::snprintf(line, sizeof(line), "accuracy %s  macro-F1 %s  weighted-F1 %s\n",
                pct(rep.at("accuracy").get<double>()).c_str(),
                pct(rep.at("macro_f1").get<double>()).c_str(),
                pct(rep.at("weighted_f1").get<double>()).c_str());
  out += line;
  std::snprintf(line, sizeof(line), "%-12s %-10s %-10s %-10s %-8s\n", "label",
                "precision", "recall", "f1", "support");
  out += line;
  for (const auto& label : rep.at("labels").get<std::vector<std::string>>()) {
    const auto& s = rep.at("per_class").at(label);
    std::snprintf(line, sizeof(line), "%-12s %-10s %-10s %-10s %-8zu\n", label.c_str(),
                  pct(s.at("precision").get<double>()).c_str(),
                  pct(s.at("recall").get<double>()).c_str(),
                  pct(s.at("f1").get<double>()).c_str(),
                  s.at("support").get<std::size_t>());
    out += line;
  }
  return out;
}

void cmd_report(RunContext& ctx, const std::string& in, const std::string& out) {
  ctx.input_file(in);
  const json j = json::parse(read_file(in));
  const std::string task = j.value("task", "");
  std::string table;
  if (task == "decompile") {
    table = render_decompile_table(j);
  } else if (task == "predict") {
    table = render_classification_block("decompiled", j.at("decompiled"));
    table += "\n";
    table += render_classification_block("original", j.at("original"));
  } else {
    throw UsageError("report: unrecognized report kind '" + task + "'");
  }
  std::cout << table;
  if (!out.empty()) {
    write_file(out, table);
    ctx.output_file(out);
    ctx.write_manifest(out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binary-to-source decompilation and vulnerability prediction toolkit"};
  app.require_subcommand(1);

  // Uniform options, stored per subcommand.
  struct Common {
    std::optional<std::uint64_t> seed;
    std::string config;
  };
  std::map<std::string, Common> common;
  auto add_common = [&](CLI::App* sub) {
    auto& c = common[sub->get_name()];
    sub->add_option("--seed", c.seed, "seed (falls back to BINDECOMP_SEED, then 0)");
    sub->add_option("--config", c.config, "JSON config file");
  };

  // ingest
  std::string ing_in, ing_ids, ing_out;
  auto* ing = app.add_subcommand("ingest", "scan a raw corpus tree into a JSONL corpus");
  ing->add_option("--in", ing_in, "root directory of asm/source pairs")->required();
  ing->add_option("--id-list", ing_ids, "optional file of ids to keep, one per line");
  ing->add_option("--out", ing_out, "output corpus JSONL")->required();
  add_common(ing);

  // prep-asm
  std::string pa_in, pa_out;
  std::size_t pa_jobs = 1;
  auto* pa = app.add_subcommand("prep-asm", "normalize disassembly listings");
  pa->add_option("--in", pa_in, "corpus JSONL, or a raw tree to ingest first")->required();
  pa->add_option("--out", pa_out, "output corpus JSONL")->required();
  pa->add_option("--jobs", pa_jobs, "worker threads");
  add_common(pa);

  // prep-src
  std::string ps_in, ps_out;
  std::size_t ps_jobs = 1;
  auto* ps = app.add_subcommand("prep-src", "normalize C/C++ source");
  ps->add_option("--in", ps_in, "corpus JSONL, or a raw tree to ingest first")->required();
  ps->add_option("--out", ps_out, "output corpus JSONL")->required();
  ps->add_option("--jobs", ps_jobs, "worker threads");
  add_common(ps);

  // train-bpe
  std::string tb_in, tb_side, tb_out;
  std::optional<std::size_t> tb_merges;
  auto* tb = app.add_subcommand("train-bpe", "learn a subword vocabulary for one side");
  tb->add_option("--in", tb_in, "corpus JSONL")->required();
  tb->add_option("--side", tb_side, "asm or src")->required();
  tb->add_option("--merges", tb_merges, "merge count (default: config, then 200)");
  tb->add_option("--out", tb_out, "output tokenizer JSON")->required();
  add_common(tb);

  // tokenize
  std::string tk_in, tk_abpe, tk_sbpe, tk_out;
  std::size_t tk_jobs = 1;
  auto* tk = app.add_subcommand("tokenize", "record subword lengths for both sides");
  tk->add_option("--in", tk_in, "corpus JSONL")->required();
  tk->add_option("--asm-bpe", tk_abpe, "assembly tokenizer JSON")->required();
  tk->add_option("--src-bpe", tk_sbpe, "source tokenizer JSON")->required();
  tk->add_option("--out", tk_out, "output corpus JSONL")->required();
  tk->add_option("--jobs", tk_jobs, "worker threads");
  add_common(tk);

  // toss-reduce
  std::string tr_in, tr_out, tr_side = "both";
  double tr_low = 5.0, tr_high = 95.0;
  auto* tr = app.add_subcommand("toss-reduce",
                                "drop pairs with token lengths outside the percentile band");
  tr->add_option("--in", tr_in, "tokenized corpus JSONL")->required();
  tr->add_option("--out", tr_out, "output corpus JSONL")->required();
  tr->add_option("--low", tr_low, "lower percentile (default 5)");
  tr->add_option("--high", tr_high, "upper percentile (default 95)");
  tr->add_option("--side", tr_side, "source, target, or both (default both)");
  add_common(tr);

  // split
  std::string sp_in, sp_out, sp_key = "cwe_and_variant";
  double sp_fraction = 0.2;
  auto* sp = app.add_subcommand("split", "stratified train/test partition");
  sp->add_option("--in", sp_in, "corpus JSONL")->required();
  sp->add_option("--out", sp_out, "output prefix (.train.jsonl / .test.jsonl)")->required();
  sp->add_option("--fraction", sp_fraction, "test fraction (default 0.2)");
  sp->add_option("--key", sp_key, "variant, cwe, or cwe_and_variant");
  add_common(sp);

  // train-decompiler
  std::string td_train, td_abpe, td_sbpe, td_out;
  std::size_t td_jobs = 1;
  auto* td = app.add_subcommand("train-decompiler", "train the asm-to-source translator");
  td->add_option("--train", td_train, "training corpus JSONL")->required();
  td->add_option("--asm-bpe", td_abpe, "assembly tokenizer JSON")->required();
  td->add_option("--src-bpe", td_sbpe, "source tokenizer JSON")->required();
  td->add_option("--out", td_out, "output checkpoint path")->required();
  td->add_option("--jobs", td_jobs, "accepted for symmetry; training is sequential");
  add_common(td);

  // decompile
  std::string dc_model, dc_in, dc_abpe, dc_sbpe, dc_out;
  std::size_t dc_beam = 1, dc_max_len = 0, dc_jobs = 1;
  auto* dc = app.add_subcommand("decompile", "translate assembly back to source text");
  dc->add_option("--model", dc_model, "decompiler checkpoint")->required();
  dc->add_option("--in", dc_in, "corpus JSONL")->required();
  dc->add_option("--asm-bpe", dc_abpe, "assembly tokenizer JSON")->required();
  dc->add_option("--src-bpe", dc_sbpe, "source tokenizer JSON")->required();
  dc->add_option("--out", dc_out, "output JSONL of decompiled text")->required();
  dc->add_option("--beam", dc_beam, "beam width (default 1 = greedy)");
  dc->add_option("--max-len", dc_max_len, "generation cap (default: model window)");
  dc->add_option("--jobs", dc_jobs, "worker threads");
  add_common(dc);

  // train-classifier
  std::string tc_train, tc_task, tc_bpe, tc_out;
  std::size_t tc_jobs = 1;
  auto* tc = app.add_subcommand("train-classifier",
                                "train the vulnerability classifier on source text");
  tc->add_option("--train", tc_train, "training corpus JSONL")->required();
  tc->add_option("--task", tc_task, "biclass or multiclass")->required();
  tc->add_option("--bpe", tc_bpe, "text tokenizer JSON")->required();
  tc->add_option("--out", tc_out, "output checkpoint path")->required();
  tc->add_option("--jobs", tc_jobs, "accepted for symmetry; training is sequential");
  add_common(tc);

  // evaluate
  EvalOptions ev;
  auto* evs = app.add_subcommand("evaluate", "run one of the two evaluations");
  evs->add_option("--task", ev.task, "decompile or predict")->required();
  evs->add_option("--test", ev.test_path, "test corpus JSONL")->required();
  evs->add_option("--model", ev.model_path, "decompiler checkpoint");
  evs->add_flag("--identity", ev.identity, "skip the decompiler; use reference text");
  evs->add_option("--asm-bpe", ev.asm_bpe_path, "assembly tokenizer JSON");
  evs->add_option("--src-bpe", ev.src_bpe_path, "source tokenizer JSON");
  evs->add_option("--classifier", ev.classifier_path, "classifier checkpoint (predict)");
  evs->add_option("--labels", ev.labels_path,
                  "label metadata JSON (default: <classifier>.labels.json)");
  evs->add_option("--text-bpe", ev.text_bpe_path, "text tokenizer JSON (predict)");
  evs->add_option("--beam", ev.beam, "beam width (default 1)");
  evs->add_option("--max-len", ev.max_len, "generation cap (default: model window)");
  evs->add_option("--jobs", ev.jobs, "worker threads");
  evs->add_option("--out", ev.out, "output report JSON")->required();
  add_common(evs);

  // report
  std::string rp_in, rp_out;
  auto* rp = app.add_subcommand("report", "render a report JSON as a fixed-width table");
  rp->add_option("--in", rp_in, "report JSON")->required();
  rp->add_option("--out", rp_out, "optional output text file");
  add_common(rp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    RunContext ctx;
    ctx.subcommand = sub->get_name();
    const Common& c = common[ctx.subcommand];
    ctx.seed = resolve_seed(c.seed);
    ctx.config = load_config(c.config);
    if (!c.config.empty()) ctx.input_file(c.config);

    if (sub == ing) {
      cmd_ingest(ctx, ing_in, ing_ids, ing_out);
    } else if (sub == pa) {
      cmd_prep_asm(ctx, pa_in, pa_out, pa_jobs);
    } else if (sub == ps) {
      cmd_prep_src(ctx, ps_in, ps_out, ps_jobs);
    } else if (sub == tb) {
      cmd_train_bpe(ctx, tb_in, tb_side, tb_merges, tb_out);
    } else if (sub == tk) {
      cmd_tokenize(ctx, tk_in, tk_abpe, tk_sbpe, tk_out, tk_jobs);
    } else if (sub == tr) {
      cmd_toss_reduce(ctx, tr_in, tr_out, tr_low, tr_high, tr_side);
    } else if (sub == sp) {
      cmd_split(ctx, sp_in, sp_out, sp_fraction, sp_key);
    } else if (sub == td) {
      cmd_train_decompiler(ctx, td_train, td_abpe, td_sbpe, td_out);
    } else if (sub == dc) {
      cmd_decompile(ctx, dc_model, dc_in, dc_abpe, dc_sbpe, dc_out, dc_beam, dc_max_len,
                    dc_jobs);
    } else if (sub == tc) {
      cmd_train_classifier(ctx, tc_train, tc_task, tc_bpe, tc_out);
    } else if (sub == evs) {
      if (ev.task == "decompile") {
        cmd_evaluate_decompile(ctx, ev);
      } else if (ev.task == "predict") {
        cmd_evaluate_predict(ctx, ev);
      } else {
        throw UsageError("evaluate --task must be 'decompile' or 'predict'");
      }
    } else if (sub == rp) {
      cmd_report(ctx, rp_in, rp_out);
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
