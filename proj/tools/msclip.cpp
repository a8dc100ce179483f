#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "CLI11.hpp"

#include "msclip/checkpoint.hpp"
#include "msclip/corpus_metrics.hpp"
#include "msclip/errors.hpp"
#include "msclip/eval.hpp"
#include "msclip/manifest.hpp"
#include "msclip/runconfig.hpp"
#include "msclip/synth.hpp"
#include "msclip/tokenizer.hpp"
#include "msclip/trainer.hpp"

namespace fs = std::filesystem;
using namespace msclip;

namespace {

nlohmann::json load_config(const std::string& path,
                           const std::vector<std::string>& sets) {
  nlohmann::json j =
      path.empty() ? nlohmann::json::object() : load_config_file(path);
  for (const auto& s : sets) apply_override(j, s);
  return j;
}

RunConfig make_run_config(const std::string& path,
                          const std::vector<std::string>& sets) {
  nlohmann::json j = load_config(path, sets);
  // A blank config must still be able to synthesize scenes.
  if (!j.contains("synth") || !j["synth"].contains("bands")) {
    j["synth"]["bands"] = band_names(ten_band_default());
  }
  return run_config_from_json(j);
}

fs::path resolve_manifest(const std::string& arg) {
  fs::path p(arg);
  if (fs::is_directory(p)) p /= "manifest.jsonl";
  return p;
}

std::vector<SceneRecord> filter_split(std::vector<SceneRecord> records,
                                      const std::string& split) {
  if (split == "all") return records;
  const Split want = split_from_name(split);
  std::vector<SceneRecord> out;
  for (auto& r : records) {
    if (r.split == want) out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read file: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write file: " + path.string());
  f << text;
  if (!f) throw IoError("short write: " + path.string());
}

struct SynthArgs {
  std::string config, out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& a) {
  RunConfig rc = make_run_config(a.config, a.sets);
  if (a.seed) rc.synth.seed = *a.seed;
  const fs::path dir = a.out.empty() ? fs::path(rc.data_dir) : fs::path(a.out);
  std::vector<SceneRecord> records = generate_synthetic(rc.synth);
  write_dataset(dir, records);
  std::size_t train = 0, val = 0, test = 0;
  for (const auto& r : records) {
    if (r.split == Split::Train) ++train;
    else if (r.split == Split::Val) ++val;
    else ++test;
  }
  std::printf("wrote %zu scenes (train %zu, val %zu, test %zu) to %s\n",
              records.size(), train, val, test, dir.string().c_str());
  return 0;
}

struct TrainArgs {
  std::string config, data, out, init, extend_bands, init_mode = "zero",
              freeze;
  std::vector<std::string> sets;
};

int run_train(const TrainArgs& a) {
  RunConfig rc = make_run_config(a.config, a.sets);
  if (!a.freeze.empty()) rc.train.freeze = freeze_policy_from_string(a.freeze);
  if (!a.out.empty()) rc.out_dir = a.out;

  const fs::path manifest =
      a.data.empty() ? fs::path(rc.data_dir) / "manifest.jsonl"
                     : resolve_manifest(a.data);
  std::vector<SceneRecord> records = load_dataset(manifest);

  std::vector<BandId> bands;
  ModelParameters params;
  std::optional<Vocabulary> vocab;

  if (!a.init.empty()) {
    Checkpoint ckpt = load_checkpoint(a.init);
    if (ckpt.meta.vocab_tokens.empty()) {
      throw InvalidConfigError("source checkpoint carries no vocabulary");
    }
    vocab = vocab_from_tokens(ckpt.meta.vocab_tokens);
    if (!a.extend_bands.empty()) {
      bands = band_list_from_string(a.extend_bands);
      std::vector<BandId> src_bands =
          ckpt.meta.bands.empty() ? rgb_bands() : ckpt.meta.bands;
      if (src_bands.size() != 3) {
        throw InvalidConfigError("--extend-bands needs a 3-band source model");
      }
      std::array<std::size_t, 3> positions{};
      for (std::size_t i = 0; i < 3; ++i) {
        auto it = std::find(bands.begin(), bands.end(), src_bands[i]);
        if (it == bands.end()) {
          throw InvalidConfigError("extended band set must keep " +
                                   std::string(band_name(src_bands[i])));
        }
        positions[i] = static_cast<std::size_t>(it - bands.begin());
      }
      InitMode mode;
      if (a.init_mode == "zero") mode = InitMode::ZeroInit;
      else if (a.init_mode == "mean") mode = InitMode::MeanRgbInit;
      else throw InvalidConfigError("--init-mode must be zero or mean");
      params = extend_patch_embed(ckpt.params, bands, positions, mode);
    } else {
      bands = ckpt.meta.bands.empty() ? rc.data_bands : ckpt.meta.bands;
      params = ckpt.params;
    }
  } else {
    if (!a.extend_bands.empty()) {
      throw InvalidConfigError("--extend-bands requires --init");
    }
    bands = rc.data_bands;
    ModelConfig cfg = rc.model;
    cfg.in_channels = static_cast<int>(bands.size());
    params = init_model(cfg, rc.train.seed);
  }

  PreparedDataset prepared =
      prepare_dataset(records, bands, params.config, vocab);
  fs::create_directories(rc.out_dir);
  const fs::path out_dir(rc.out_dir);

  CheckpointMeta meta;
  meta.bands = bands;
  meta.norm_stats = prepared.stats;
  meta.vocab_tokens = prepared.vocab.tokens;

  std::ofstream log_file(out_dir / "train_log.jsonl",
                         std::ios::binary | std::ios::trunc);
  if (!log_file) throw IoError("cannot write training log");

  ValidationHook hook = [&](const ModelParameters& p, int step, double) {
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_%06d.msck", step);
    save_checkpoint((out_dir / name).string(), p, meta);
  };

  const ModelParameters initial = params;
  TrainResult result = train(params, prepared, rc.train, hook);

  for (const auto& e : result.log) log_file << log_entry_to_json(e) << '\n';

  const auto trainable = resolve_freeze(initial, rc.train.freeze);
  std::size_t frozen_count = 0;
  bool frozen_unchanged = true;
  for (const auto& [name, flag] : trainable) {
    if (flag) continue;
    ++frozen_count;
    if (initial.tensors.at(name).v != result.final_params.tensors.at(name).v) {
      frozen_unchanged = false;
    }
  }
  nlohmann::ordered_json fc;
  fc["event"] = "freeze_check";
  fc["policy"] = freeze_policy_to_string(rc.train.freeze);
  fc["frozen_params"] = frozen_count;
  fc["frozen_unchanged"] = frozen_unchanged;
  log_file << fc.dump() << '\n';

  nlohmann::ordered_json sm;
  sm["event"] = "summary";
  sm["steps"] = result.steps_run;
  sm["best_step"] = result.best_step;
  if (result.best_val_loss) sm["best_val_loss"] = *result.best_val_loss;
  log_file << sm.dump() << '\n';
  if (!log_file) throw IoError("short training log write");

  save_checkpoint((out_dir / "best.msck").string(), result.best_params, meta);
  write_vocab(out_dir / "vocab.txt", prepared.vocab);

  if (result.best_val_loss) {
    std::printf("trained %d steps in %.1fs; best val loss %.6f at step %d -> %s\n",
                result.steps_run, result.total_wall_ms / 1000.0,
                *result.best_val_loss, result.best_step,
                (out_dir / "best.msck").string().c_str());
  } else {
    std::printf("trained %d steps in %.1fs (no validation split) -> %s\n",
                result.steps_run, result.total_wall_ms / 1000.0,
                (out_dir / "best.msck").string().c_str());
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint, manifest, bands, templates, multilabel = "eq2",
              negative_class = "other features", split = "test", out;
  int top_k = 100;
  int batch_size = 64;
};

int run_eval_cmd(const EvalArgs& a) {
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  std::vector<SceneRecord> records =
      filter_split(load_dataset(resolve_manifest(a.manifest)), a.split);
  if (records.empty()) throw EmptyDatasetError("no records in split " + a.split);

  EvalOptions opt;
  if (!a.bands.empty()) opt.bands = band_list_from_string(a.bands);
  if (!a.templates.empty()) opt.templates = read_lines(a.templates);
  opt.method = multilabel_method_from_string(a.multilabel);
  opt.negative_class_name = a.negative_class;
  opt.retrieval_k = a.top_k;
  opt.batch_size = a.batch_size;
  opt.checkpoint_id = a.checkpoint;

  EvalReport report = run_eval(ckpt, records, opt);
  std::fputs(report_table(report).c_str(), stdout);
  if (!a.out.empty()) {
    write_text(a.out, report_to_json(report).dump(2) + "\n");
  }
  return 0;
}

struct ExportArgs {
  std::string checkpoint, manifest, split = "test", out;
  int batch_size = 64;
};

int run_export(const ExportArgs& a) {
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (ckpt.meta.bands.empty()) {
    throw InvalidConfigError("checkpoint carries no band list");
  }
  if (!ckpt.meta.norm_stats.covers(ckpt.meta.bands)) {
    throw InvalidConfigError("checkpoint lacks normalization statistics");
  }
  std::vector<SceneRecord> records =
      filter_split(load_dataset(resolve_manifest(a.manifest)), a.split);
  if (records.empty()) throw EmptyDatasetError("no records in split " + a.split);

  const std::size_t hw = static_cast<std::size_t>(ckpt.params.config.image_size);
  std::vector<std::vector<float>> images;
  std::vector<std::vector<std::string>> labels;
  images.reserve(records.size());
  for (const auto& r : records) {
    images.push_back(
        prepare_image(r.image, ckpt.meta.bands, hw, ckpt.meta.norm_stats));
    labels.push_back(r.class_labels);
  }
  nn::TensorT<float> embs = embed_images(ckpt.params, images, a.batch_size);
  save_embeddings(a.out + ".msr1", embs);
  save_labels(a.out + ".labels.txt", labels);
  std::printf("wrote %zu embeddings (dim %zu) to %s.msr1\n", embs.shape[0],
              embs.shape[1], a.out.c_str());
  return 0;
}

struct CorpusArgs {
  std::string manifest, split = "all", out;
  std::size_t top_k = 10;
  std::size_t sample_pairs = 200;
  std::uint64_t seed = 0;
};

int run_corpus(const CorpusArgs& a) {
  std::vector<SceneRecord> records =
      filter_split(load_dataset_captions(resolve_manifest(a.manifest)),
                   a.split);
  std::vector<std::string> captions, questions;
  for (const auto& r : records) {
    captions.push_back(r.caption);
    for (const auto& [q, ans] : r.qa_pairs) {
      (void)ans;
      questions.push_back(q);
    }
  }
  CorpusStats stats =
      compute_corpus_stats(captions, questions, a.top_k, a.sample_pairs, a.seed);

  std::printf("captions: %zu\nquestions: %zu\n", stats.caption_count,
              stats.question_count);
  std::printf("mean n-gram diversity: %.4f (", stats.mean_diversity);
  bool first = true;
  for (const auto& [n, d] : stats.mean_diversity_per_n) {
    std::printf("%s%d: %.4f", first ? "" : ", ", n, d);
    first = false;
  }
  std::printf(")\n");
  std::printf("mean pairwise jaccard: %.4f\n", stats.mean_pairwise_similarity);
  const auto bar = [](std::size_t count, std::size_t max_count) {
    const std::size_t width =
        max_count == 0 ? 0 : (count * 40 + max_count - 1) / max_count;
    return std::string(width, '#');
  };
  std::size_t max_word = 0, max_q = 0;
  for (const auto& [w, c] : stats.top_words) max_word = std::max(max_word, c);
  for (const auto& [t, c] : stats.question_types) max_q = std::max(max_q, c);
  std::printf("top words:\n");
  for (const auto& [w, c] : stats.top_words) {
    std::printf("  %-16s %6zu %s\n", w.c_str(), c, bar(c, max_word).c_str());
  }
  std::printf("question types:\n");
  for (const auto& [t, c] : stats.question_types) {
    std::printf("  %-8s %6zu %s\n", t.c_str(), c, bar(c, max_q).c_str());
  }

  if (!a.out.empty()) {
    nlohmann::ordered_json j;
    j["caption_count"] = stats.caption_count;
    j["question_count"] = stats.question_count;
    nlohmann::ordered_json per_n = nlohmann::ordered_json::object();
    for (const auto& [n, d] : stats.mean_diversity_per_n) {
      per_n[std::to_string(n)] = d;
    }
    j["mean_diversity_per_n"] = per_n;
    j["mean_diversity"] = stats.mean_diversity;
    j["mean_pairwise_similarity"] = stats.mean_pairwise_similarity;
    j["top_words"] = nlohmann::ordered_json::array();
    for (const auto& [w, c] : stats.top_words) {
      j["top_words"].push_back({w, c});
    }
    j["question_types"] = stats.question_types;
    write_text(a.out, j.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("MSCLIP_THREADS")) {
    Eigen::setNbThreads(std::max(1, std::atoi(t)));
  }

  CLI::App app{"multispectral contrastive vision-language toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", synth_args.config, "run config JSON");
  synth->add_option("--set", synth_args.sets, "config override a.b.c=value");
  synth->add_option("--out", synth_args.out, "dataset directory");
  std::uint64_t synth_seed = 0;
  auto* seed_opt = synth->add_option("--seed", synth_seed, "generator seed");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "contrastive training");
  train_cmd->add_option("--config", train_args.config, "run config JSON")
      ->required();
  train_cmd->add_option("--set", train_args.sets, "config override a.b.c=value");
  train_cmd->add_option("--data", train_args.data,
                        "dataset directory or manifest path");
  train_cmd->add_option("--out", train_args.out, "output directory");
  train_cmd->add_option("--init", train_args.init, "starting checkpoint");
  train_cmd->add_option("--extend-bands", train_args.extend_bands,
                        "widen a 3-channel model to this band list");
  train_cmd->add_option("--init-mode", train_args.init_mode,
                        "new-channel fill: zero or mean");
  train_cmd->add_option("--freeze", train_args.freeze, "freeze policy");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "zero-shot evaluation");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")
      ->required();
  eval_cmd->add_option("--manifest", eval_args.manifest, "dataset manifest")
      ->required();
  eval_cmd->add_option("--bands", eval_args.bands, "band list override");
  eval_cmd->add_option("--templates", eval_args.templates,
                       "prompt templates file, one per line");
  eval_cmd->add_option("--multilabel", eval_args.multilabel,
                       "decision rule: eq2 or negclass");
  eval_cmd->add_option("--negative-class", eval_args.negative_class,
                       "negative prompt class name");
  eval_cmd->add_option("--top-k", eval_args.top_k, "retrieval depth");
  eval_cmd->add_option("--batch-size", eval_args.batch_size, "encoder batch");
  eval_cmd->add_option("--split", eval_args.split,
                       "train, val, test, or all");
  eval_cmd->add_option("--out", eval_args.out, "report JSON path");

  ExportArgs export_args;
  auto* export_cmd =
      app.add_subcommand("export-embeddings", "write image embeddings");
  export_cmd
      ->add_option("--checkpoint", export_args.checkpoint, "model checkpoint")
      ->required();
  export_cmd->add_option("--manifest", export_args.manifest, "dataset manifest")
      ->required();
  export_cmd->add_option("--split", export_args.split,
                         "train, val, test, or all");
  export_cmd->add_option("--batch-size", export_args.batch_size,
                         "encoder batch");
  export_cmd->add_option("--out", export_args.out, "output path prefix")
      ->required();

  CorpusArgs corpus_args;
  auto* corpus_cmd =
      app.add_subcommand("corpus-stats", "caption corpus statistics");
  corpus_cmd->add_option("--manifest", corpus_args.manifest, "dataset manifest")
      ->required();
  corpus_cmd->add_option("--split", corpus_args.split,
                         "train, val, test, or all");
  corpus_cmd->add_option("--top-k", corpus_args.top_k, "top word count");
  corpus_cmd->add_option("--sample-pairs", corpus_args.sample_pairs,
                         "similarity sample size (0: all pairs)");
  corpus_cmd->add_option("--seed", corpus_args.seed, "pair sampling seed");
  corpus_cmd->add_option("--out", corpus_args.out, "stats JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_opt->count() > 0) synth_args.seed = synth_seed;

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval_cmd(eval_args);
    if (export_cmd->parsed()) return run_export(export_args);
    if (corpus_cmd->parsed()) return run_corpus(corpus_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
