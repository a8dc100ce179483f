// Release gate: nine executable criteria over the full pipeline, one
// [PASS]/[FAIL] line each. Exits nonzero if any criterion fails. The
// spectral-separation run (criterion 3) trains real models and dominates
// the runtime.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "msclip/checkpoint.hpp"
#include "msclip/corpus_metrics.hpp"
#include "msclip/errors.hpp"
#include "msclip/eval.hpp"
#include "msclip/loss.hpp"
#include "msclip/manifest.hpp"
#include "msclip/model.hpp"
#include "msclip/rng.hpp"
#include "msclip/synth.hpp"
#include "msclip/tokenizer.hpp"
#include "msclip/trainer.hpp"

namespace fs = std::filesystem;
using namespace msclip;

namespace {

struct Outcome {
  bool ok = true;
  std::string note;

  void fail(const std::string& msg) {
    ok = false;
    if (!note.empty()) note += "; ";
    note += msg;
  }
  void expect(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// ---------------------------------------------------------------- shared --

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.in_channels = 3;
  cfg.vision_dim = 8;
  cfg.vision_depth = 1;
  cfg.vision_heads = 2;
  cfg.text_dim = 8;
  cfg.text_depth = 1;
  cfg.text_heads = 2;
  cfg.vocab_size = 64;
  cfg.context_length = 12;
  cfg.proj_dim = 4;
  cfg.mlp_ratio = 2.0;
  return cfg;
}

std::vector<SceneRecord> tiny_scenes(std::uint64_t seed) {
  SynthConfig s;
  s.seed = seed;
  s.num_classes = 2;
  s.per_class_count = {{Split::Train, 8}, {Split::Val, 4}, {Split::Test, 4}};
  s.image_size = 8;
  s.band_set = {BandId::B2, BandId::B3, BandId::B4};
  return generate_synthetic(s);
}

// A briefly trained natural-color model for the extension checks.
ModelParameters trained_tiny_model() {
  auto records = tiny_scenes(21);
  ModelConfig cfg = tiny_model_config();
  PreparedDataset ds = prepare_dataset(records, rgb_bands(), cfg);
  TrainConfig tc;
  tc.peak_lr = 1e-3;
  tc.warmup_steps = 2;
  tc.total_steps = 4;
  tc.batch_size = 4;
  tc.val_every = 4;
  tc.seed = 21;
  return train(init_model(cfg, 21), ds, tc).final_params;
}

fs::path scratch_dir() {
  auto dir = fs::temp_directory_path() /
             ("msclip_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) return std::string("<unreadable:") + p.string() + ">";
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------ criterion 1 --
// Widening a trained 3-channel model with zeroed new-channel weights must
// reproduce its embeddings whenever the mapped channels carry the original
// planes, regardless of what the other channels contain.

Outcome criterion1() {
  Outcome out;
  ModelParameters base = trained_tiny_model();
  const std::size_t hw = 8;
  const std::vector<BandId> wide = ten_band_default();

  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    std::vector<std::size_t> slots(wide.size());
    std::iota(slots.begin(), slots.end(), 0);
    rng.shuffle(slots);
    const std::array<std::size_t, 3> pos = {slots[0], slots[1], slots[2]};

    ModelParameters extended = extend_patch_embed(base, wide, pos,
                                                  InitMode::ZeroInit);

    ImageBatch big;
    big.n = 2;
    big.c = wide.size();
    big.h = hw;
    big.w = hw;
    big.v.resize(big.n * big.image_stride());
    for (auto& v : big.v) v = rng.uniform(-1.5, 1.5);

    ImageBatch small;
    small.n = big.n;
    small.c = 3;
    small.h = hw;
    small.w = hw;
    small.v.resize(small.n * small.image_stride());
    const std::size_t plane = hw * hw;
    for (std::size_t s = 0; s < big.n; ++s) {
      for (std::size_t i = 0; i < 3; ++i) {
        const double* src =
            big.v.data() + s * big.image_stride() + pos[i] * plane;
        double* dst = small.v.data() + s * small.image_stride() + i * plane;
        std::copy(src, src + plane, dst);
      }
    }

    auto wide_emb = encode_image(extended, big);
    auto rgb_emb = encode_image(base, small);
    for (std::size_t i = 0; i < wide_emb.v.size(); ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(wide_emb.v[i]) -
                                       rgb_emb.v[i]));
    }
  }
  out.expect(worst < 1e-5, "max embedding deviation " + fmt(worst));
  return out;
}

// ------------------------------------------------------------ criterion 2 --
// Contrastive loss values against closed forms, plus analytic gradients
// against central finite differences.

Outcome criterion2() {
  Outcome out;

  {
    ContrastiveBatch b;
    b.image_embeddings = nn::Tensor::zeros({1, 3});
    b.image_embeddings.v = {1.0, 0.0, 0.0};
    b.text_embeddings = b.image_embeddings;
    b.log_temperature = 0.4;
    out.expect(info_nce(b).loss == 0.0, "single-pair loss not exactly zero");
  }

  for (std::size_t n : {2, 8, 32}) {
    ContrastiveBatch b;
    b.image_embeddings = nn::Tensor::zeros({n, 3});
    for (std::size_t i = 0; i < n; ++i) b.image_embeddings.v[i * 3] = 1.0;
    b.text_embeddings = b.image_embeddings;
    b.log_temperature = 0.3;
    const double loss = info_nce(b).loss;
    const double want = std::log(static_cast<double>(n));
    out.expect(std::abs(loss - want) <= 1e-6,
               "uniform-similarity loss at n=" + std::to_string(n) + ": " +
                   fmt(loss) + " vs ln n " + fmt(want));
  }

  {
    // Two orthonormal pairs at unit temperature scale.
    ContrastiveBatch b;
    b.image_embeddings = nn::Tensor::zeros({2, 2});
    b.image_embeddings.v = {1.0, 0.0, 0.0, 1.0};
    b.text_embeddings = b.image_embeddings;
    b.log_temperature = 0.0;
    const double loss = info_nce(b).loss;
    out.expect(std::abs(loss - 0.313262) <= 1e-5,
               "orthonormal two-pair loss " + fmt(loss));
  }

  // Central differences at h = 1e-4 over 50 random batches. The comparison
  // guard of 1e-2 keeps finite-difference noise (~1e-9 absolute) from
  // dominating coordinates whose true gradient is near zero.
  const double h = 1e-4;
  const double guard = 1e-2;
  double max_rel = 0.0;
  Rng rng(2024);
  for (int batch = 0; batch < 50; ++batch) {
    const std::size_t n = 2 + rng.bounded(7);
    const std::size_t d = 3 + rng.bounded(8);
    ContrastiveBatch b;
    b.image_embeddings = nn::Tensor::zeros({n, d});
    b.text_embeddings = nn::Tensor::zeros({n, d});
    for (auto& v : b.image_embeddings.v) v = rng.normal() * 0.7;
    for (auto& v : b.text_embeddings.v) v = rng.normal() * 0.7;
    b.log_temperature = rng.uniform(-0.3, 0.7);

    const InfoNceGrads an = info_nce_backward(b);

    auto fd_vs = [&](double fd, double a) {
      const double rel =
          std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), guard});
      max_rel = std::max(max_rel, rel);
    };
    for (std::size_t i = 0; i < b.image_embeddings.v.size(); ++i) {
      const double keep = b.image_embeddings.v[i];
      b.image_embeddings.v[i] = keep + h;
      const double up = info_nce(b).loss;
      b.image_embeddings.v[i] = keep - h;
      const double dn = info_nce(b).loss;
      b.image_embeddings.v[i] = keep;
      fd_vs((up - dn) / (2 * h), an.d_image.v[i]);
    }
    for (std::size_t i = 0; i < b.text_embeddings.v.size(); ++i) {
      const double keep = b.text_embeddings.v[i];
      b.text_embeddings.v[i] = keep + h;
      const double up = info_nce(b).loss;
      b.text_embeddings.v[i] = keep - h;
      const double dn = info_nce(b).loss;
      b.text_embeddings.v[i] = keep;
      fd_vs((up - dn) / (2 * h), an.d_text.v[i]);
    }
    const double keep = b.log_temperature;
    b.log_temperature = keep + h;
    const double up = info_nce(b).loss;
    b.log_temperature = keep - h;
    const double dn = info_nce(b).loss;
    b.log_temperature = keep;
    fd_vs((up - dn) / (2 * h), an.d_log_temperature);
  }
  out.expect(max_rel < 1e-5, "max gradient relative error " + fmt(max_rel));
  if (out.ok) out.note = "max gradient relative error " + fmt(max_rel);
  return out;
}

// ------------------------------------------------------------ criterion 3 --
// Classes that share one natural-color signature are only separable through
// the extra spectral bands: a 10-band model trained from a zero-init
// extension must beat the natural-color model by a wide margin.

struct ArmReport {
  double macro = 0.0;
  std::map<std::string, double> class_accuracy;
};

ArmReport run_arm(const std::vector<SceneRecord>& records,
                  const std::vector<BandId>& bands,
                  const ModelParameters& start, const TrainConfig& tc) {
  PreparedDataset ds = prepare_dataset(records, bands, start.config);
  TrainResult res = train(start, ds, tc);

  Checkpoint ckpt;
  ckpt.params = res.final_params;
  ckpt.meta.bands = bands;
  ckpt.meta.norm_stats = ds.stats;
  ckpt.meta.vocab_tokens = ds.vocab.tokens;

  std::vector<SceneRecord> test;
  for (const auto& r : records) {
    if (r.split == Split::Test) test.push_back(r);
  }
  EvalReport rep = run_eval(ckpt, test, EvalOptions{});
  ArmReport arm;
  arm.macro = rep.macro_accuracy;
  for (const auto& c : rep.classes) arm.class_accuracy[c.name] = c.accuracy;
  return arm;
}

Outcome criterion3() {
  Outcome out;

  SynthConfig synth;
  synth.num_classes = 8;
  synth.spectral_only_classes = {4, 5, 6, 7};
  synth.per_class_count = {{Split::Train, 200},
                           {Split::Val, 0},
                           {Split::Test, 12}};
  synth.image_size = 32;
  synth.band_set = ten_band_default();
  synth.qa_pairs_per_scene = 0;

  ModelConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 8;
  cfg.in_channels = 3;
  cfg.vision_dim = 64;
  cfg.vision_depth = 2;
  cfg.vision_heads = 4;
  cfg.text_dim = 64;
  cfg.text_depth = 1;
  cfg.text_heads = 4;
  cfg.vocab_size = 128;
  cfg.context_length = 16;
  cfg.proj_dim = 32;
  cfg.mlp_ratio = 2.0;

  TrainConfig tc;
  tc.peak_lr = 5e-4;
  tc.warmup_steps = 30;
  tc.total_steps = 350;
  tc.batch_size = 32;
  tc.val_every = 1000;

  const std::vector<std::string> names = synth_class_names(synth);
  const std::vector<std::string> spectral_names(names.begin() + 4,
                                                names.end());

  std::array<std::size_t, 3> pos{};
  for (std::size_t i = 0; i < 3; ++i) {
    auto it = std::find(synth.band_set.begin(), synth.band_set.end(),
                        rgb_bands()[i]);
    pos[i] = static_cast<std::size_t>(it - synth.band_set.begin());
  }

  std::string margins, rgb_accs;
  for (std::uint64_t seed : {1, 2, 3}) {
    synth.seed = 100 + seed;
    tc.seed = seed;
    const std::vector<SceneRecord> records = generate_synthetic(synth);

    const ModelParameters start = init_model(cfg, seed);
    ArmReport rgb = run_arm(records, rgb_bands(), start, tc);
    ArmReport ms = run_arm(
        records, synth.band_set,
        extend_patch_embed(start, synth.band_set, pos, InitMode::ZeroInit),
        tc);

    double spectral_acc = 0.0;
    for (const auto& n : spectral_names) {
      spectral_acc += rgb.class_accuracy.at(n);
    }
    spectral_acc /= static_cast<double>(spectral_names.size());

    const double margin = ms.macro - rgb.macro;
    margins += (margins.empty() ? "" : "/") + fmt(margin);
    rgb_accs += (rgb_accs.empty() ? "" : "/") + fmt(spectral_acc);
    out.expect(margin >= 0.20,
               "seed " + std::to_string(seed) + " margin " + fmt(margin) +
                   " (ms " + fmt(ms.macro) + " vs rgb " + fmt(rgb.macro) +
                   ")");
    out.expect(spectral_acc <= 0.40,
               "seed " + std::to_string(seed) +
                   " rgb accuracy on color-degenerate classes " +
                   fmt(spectral_acc));
  }
  if (out.ok) out.note = "margins " + margins + ", rgb-confusable " + rgb_accs;
  return out;
}

// ------------------------------------------------------------ criterion 4 --
// Ranking and multilabel decisions against independently written oracles.

double ap_oracle(const std::vector<double>& scores,
                 const std::vector<std::uint8_t>& relevant, int k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::size_t total = 0;
  for (auto r : relevant) total += r;
  if (total == 0) return 0.0;
  const std::size_t depth =
      std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (relevant[order[r]]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(
                   std::min<std::size_t>(total, static_cast<std::size_t>(k)));
}

Outcome criterion4() {
  Outcome out;
  Rng rng(404);

  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t n = 1 + rng.bounded(300);
    const std::size_t max_rel = std::min<std::size_t>(50, n);
    const std::size_t r = rng.bounded(max_rel + 1);
    std::vector<double> scores(n);
    for (auto& s : scores) s = rng.uniform();
    if (inst % 7 == 0) {
      for (auto& s : scores) s = std::floor(s * 10.0) / 10.0;  // forced ties
    }
    std::vector<std::uint8_t> relevant(n, 0);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    for (std::size_t i = 0; i < r; ++i) relevant[idx[i]] = 1;

    const ApResult mine = average_precision_at_k(scores, relevant, 100);
    const double want = ap_oracle(scores, relevant, 100);
    if (mine.ap != want || mine.zero_relevant != (r == 0)) {
      out.fail("ranking-precision mismatch at instance " +
               std::to_string(inst) + ": " + fmt(mine.ap) + " vs " +
               fmt(want));
      break;
    }
  }

  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t k = 2 + rng.bounded(29);
    std::vector<double> s(k);
    for (auto& v : s) v = rng.uniform(-1.0, 1.0);
    if (inst % 10 == 0) {
      // Exact tie: one score set to the mean of the others, computed with
      // the same skip-and-ascend arithmetic as the rule under test.
      const std::size_t i = rng.bounded(k);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (j != i) sum += s[j];
      }
      s[i] = sum / static_cast<double>(k - 1);
    }
    nn::Tensor sims = nn::Tensor::zeros({1, k});
    sims.v = s;
    const auto mine = decide_mean_of_others(sims)[0];
    for (std::size_t i = 0; i < k; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        if (j != i) sum += s[j];
      }
      const bool want = s[i] > sum / static_cast<double>(k - 1);
      if ((mine[i] != 0) != want) {
        out.fail("mean-of-others mismatch at instance " +
                 std::to_string(inst) + " class " + std::to_string(i));
        inst = 1000;
        break;
      }
    }
  }
  return out;
}

// ------------------------------------------------------------ criterion 5 --
// Learning-rate anchors, a hand-derived first optimizer step, and bitwise
// frozen parameters over a real 100-step run.

Outcome criterion5() {
  Outcome out;

  TrainConfig sched;
  sched.peak_lr = 4e-5;
  sched.warmup_steps = 50;
  sched.total_steps = 500;
  out.expect(lr_schedule(49, sched) == sched.peak_lr &&
                 lr_schedule(50, sched) == sched.peak_lr,
             "peak not hit at warmup end");
  out.expect(lr_schedule(275, sched) == sched.peak_lr / 2,
             "half peak not hit at decay midpoint");
  const double last = lr_schedule(499, sched);
  out.expect(last > 0.0 && last < 0.01 * sched.peak_lr,
             "final lr " + fmt(last));

  {
    ModelParameters p;
    p.config = tiny_model_config();
    p.tensors["w"] = nn::Tensor::scalar(1.0);
    std::map<std::string, nn::Tensor> grads{{"w", nn::Tensor::scalar(1.0)}};
    std::map<std::string, bool> live{{"w", true}};
    AdamWState st;
    TrainConfig tc;  // defaults: wd 0.2, betas 0.9/0.98, eps 1e-6
    tc.clip_grad_norm = 0.0;
    const double lr = 4e-5;
    adamw_step(p, grads, st, lr, tc, live);
    // Decay first, then the bias-corrected moment ratio, which is exactly
    // g / (|g| + eps) on the first step.
    const double hand =
        (1.0 - lr * tc.weight_decay * 1.0) - lr * (1.0 / (1.0 + tc.eps));
    out.expect(std::abs(p.tensors.at("w").v[0] - hand) <= 1e-9,
               "first-step update " + fmt(p.tensors.at("w").v[0]) + " vs " +
                   fmt(hand));
  }

  {
    auto records = tiny_scenes(31);
    ModelConfig cfg = tiny_model_config();
    PreparedDataset ds = prepare_dataset(records, rgb_bands(), cfg);
    TrainConfig tc;
    tc.peak_lr = 1e-3;
    tc.warmup_steps = 10;
    tc.total_steps = 100;
    tc.batch_size = 4;
    tc.val_every = 50;
    tc.seed = 3;
    tc.freeze.kind = FreezePolicy::Kind::ProjectionOnly;

    const ModelParameters start = init_model(cfg, 31);
    TrainResult res = train(start, ds, tc);
    const std::set<std::string> live = {"vision.proj", "text.proj",
                                        "log_temperature"};
    bool live_changed = false;
    for (const auto& [name, tensor] : start.tensors) {
      const auto& after = res.final_params.tensors.at(name);
      if (live.count(name)) {
        live_changed = live_changed || after.v != tensor.v;
      } else if (after.v != tensor.v) {
        out.fail("frozen tensor drifted: " + name);
      }
    }
    out.expect(live_changed, "projection weights never moved");
  }
  return out;
}

// ------------------------------------------------------------ criterion 6 --
// The two multilabel rules must disagree in the documented direction on a
// sample that straddles two related classes, and agree on trivial inputs.

Outcome criterion6() {
  Outcome out;
  nn::Tensor sims = nn::Tensor::zeros({1, 4});
  sims.v = {0.55, 0.50, 0.05, 0.02};

  const auto eq2 = decide_mean_of_others(sims)[0];
  const auto neg = decide_negative_class(sims, {0.6})[0];
  const int eq2_count = std::accumulate(eq2.begin(), eq2.end(), 0);
  const int neg_count = std::accumulate(neg.begin(), neg.end(), 0);
  out.expect(eq2_count > neg_count,
             "mean-of-others " + std::to_string(eq2_count) +
                 " positives vs negative-prompt " + std::to_string(neg_count));

  for (double fill : {0.0, 1.0}) {
    nn::Tensor trivial = nn::Tensor::zeros({2, 3});
    for (auto& v : trivial.v) v = fill;
    const auto a = decide_mean_of_others(trivial);
    const auto b = decide_negative_class(trivial, {fill, fill});
    out.expect(a == b, "rules disagree on constant matrix " + fmt(fill));
  }
  return out;
}

// ------------------------------------------------------------ criterion 7 --
// Caption-statistics hand values, and template text scoring below a
// token-matched shuffled corpus.

Outcome criterion7() {
  Outcome out;

  out.expect(ngram_diversity("zero one two three four five six") == 1.0,
             "all-distinct caption diversity != 1");
  const double rep = ngram_diversity("a a a a");
  out.expect(std::abs(rep - 13.0 / 36.0) < 1e-12,
             "repeated-token diversity " + fmt(rep));

  const std::string ten = "alpha beta gamma delta epsilon zeta eta theta "
                          "iota kappa";
  const double self = meteor_simplified(ten, ten);
  out.expect(std::abs(self - 0.9995) <= 1e-6, "self-match score " + fmt(self));
  out.expect(meteor_simplified("alpha beta", "gamma delta") == 0.0,
             "disjoint captions score nonzero");

  const std::vector<std::string> templates = {
      "a satellite photo of {}", "an aerial view of {}",
      "overhead imagery of {}"};
  std::string joined;
  for (int w = 0; w < 30; ++w) {
    for (const auto& t : templates) {
      if (!joined.empty()) joined += ' ';
      joined += expand_template(t, "area" + std::to_string(w));
    }
  }
  std::vector<std::string> tokens = normalize_tokens(joined);
  Rng rng(7);
  rng.shuffle(tokens);
  std::string shuffled;
  for (const auto& t : tokens) {
    if (!shuffled.empty()) shuffled += ' ';
    shuffled += t;
  }
  const double d_template = ngram_diversity(joined);
  const double d_shuffled = ngram_diversity(shuffled);
  out.expect(d_template < d_shuffled,
             "template corpus " + fmt(d_template) +
                 " not below shuffled corpus " + fmt(d_shuffled));
  if (out.ok) {
    out.note = "template " + fmt(d_template) + " < shuffled " +
               fmt(d_shuffled);
  }
  return out;
}

// ------------------------------------------------------------ criterion 8 --
// Byte-level determinism of the command-line pipeline, checkpoint container
// round trip, and an embedding export that reproduces the evaluation report
// exactly.

int run_command(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

// The evaluation aggregation, recomputed from an embedding matrix that went
// through the on-disk interchange format.
EvalReport report_from_embeddings(const Checkpoint& ckpt,
                                  const std::vector<SceneRecord>& records,
                                  const nn::TensorT<float>& image_embs,
                                  const EvalOptions& options) {
  const Vocabulary vocab = vocab_from_tokens(ckpt.meta.vocab_tokens);
  const std::vector<std::string> templates =
      options.templates.empty() ? default_prompt_templates()
                                : options.templates;
  std::set<std::string> label_set;
  for (const auto& r : records) {
    for (const auto& l : r.class_labels) label_set.insert(l);
  }
  const std::vector<std::string> class_names(label_set.begin(),
                                             label_set.end());
  const std::size_t n = records.size();
  const std::size_t k = class_names.size();

  nn::TensorT<float> class_embs =
      build_class_embeddings(ckpt.params, vocab, class_names, templates);
  nn::Tensor sims = similarity_matrix(image_embs, class_embs);

  std::vector<std::vector<std::uint8_t>> truth(n,
                                               std::vector<std::uint8_t>(k, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& l : records[i].class_labels) {
      const auto it = label_set.find(l);
      truth[i][static_cast<std::size_t>(
          std::distance(label_set.begin(), it))] = 1;
    }
  }
  const auto decisions = decide_mean_of_others(sims);
  const std::vector<int> top1 = top1_from_sims(sims);

  EvalReport report;
  report.method = multilabel_method_name(options.method);
  report.checkpoint_id = options.checkpoint_id;
  report.bands = band_names(ckpt.meta.bands);
  report.templates = templates;
  report.retrieval_k = options.retrieval_k;
  report.images = n;
  for (std::size_t c = 0; c < k; ++c) {
    ClassReport cr;
    cr.name = class_names[c];
    std::size_t support = 0, correct = 0, tp = 0, fp = 0, fn = 0;
    std::vector<double> scores(n);
    std::vector<std::uint8_t> relevant(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = sims.v[i * k + c];
      relevant[i] = truth[i][c];
      if (truth[i][c]) {
        ++support;
        if (static_cast<std::size_t>(top1[i]) == c) ++correct;
      }
      if (decisions[i][c] && truth[i][c]) ++tp;
      if (decisions[i][c] && !truth[i][c]) ++fp;
      if (!decisions[i][c] && truth[i][c]) ++fn;
    }
    cr.support = support;
    cr.accuracy = support > 0 ? static_cast<double>(correct) /
                                    static_cast<double>(support)
                              : 0.0;
    const PerClassCounts prf = prf1_from_counts(tp, fp, fn);
    cr.precision = prf.precision;
    cr.recall = prf.recall;
    cr.f1 = prf.f1;
    const ApResult ap =
        average_precision_at_k(scores, relevant, options.retrieval_k);
    cr.ap = ap.ap;
    cr.zero_relevant = ap.zero_relevant;
    report.classes.push_back(std::move(cr));
  }
  for (const auto& cr : report.classes) {
    report.macro_accuracy += cr.accuracy;
    report.macro_precision += cr.precision;
    report.macro_recall += cr.recall;
    report.macro_f1 += cr.f1;
    report.macro_ap += cr.ap;
  }
  const double kd = static_cast<double>(k);
  report.macro_accuracy /= kd;
  report.macro_precision /= kd;
  report.macro_recall /= kd;
  report.macro_f1 /= kd;
  report.macro_ap /= kd;
  return report;
}

Outcome criterion8() {
  Outcome out;
  const char* bin = std::getenv("MSCLIP_BIN");
  if (!bin) {
    out.fail("MSCLIP_BIN is not set");
    return out;
  }
  const fs::path dir = scratch_dir() / "pipeline";
  fs::create_directories(dir);
  const fs::path cfg = dir / "config.json";
  {
    std::ofstream f(cfg, std::ios::binary | std::ios::trunc);
    f << R"({
  "synth": {
    "seed": 9, "num_classes": 2,
    "per_class": {"train": 8, "val": 4, "test": 4},
    "image_size": 8, "bands": ["B2", "B3", "B4"], "qa_pairs_per_scene": 1
  },
  "model": {
    "image_size": 8, "patch_size": 4, "in_channels": 3,
    "vision_dim": 8, "vision_depth": 1, "vision_heads": 2,
    "text_dim": 8, "text_depth": 1, "text_heads": 2,
    "vocab_size": 64, "context_length": 12, "proj_dim": 4, "mlp_ratio": 2.0
  },
  "train": {
    "peak_lr": 1e-3, "warmup_steps": 2, "total_steps": 6,
    "batch_size": 4, "val_every": 3, "seed": 5
  }
})";
  }
  const std::string base = std::string(bin);
  const std::string quiet = " >/dev/null 2>&1";

  for (const char* name : {"d1", "d2"}) {
    const int code = run_command(base + " synth --config " + cfg.string() +
                                 " --out " + (dir / name).string() + quiet);
    if (code != 0) {
      out.fail(std::string("synth into ") + name + " exited " +
               std::to_string(code));
      return out;
    }
  }
  out.expect(tree_bytes(dir / "d1") == tree_bytes(dir / "d2"),
             "repeated synthesis differs");

  for (const char* name : {"t1", "t2"}) {
    const int code = run_command(base + " train --config " + cfg.string() +
                                 " --data " + (dir / "d1").string() +
                                 " --out " + (dir / name).string() + quiet);
    if (code != 0) {
      out.fail(std::string("train into ") + name + " exited " +
               std::to_string(code));
      return out;
    }
  }
  out.expect(slurp(dir / "t1/best.msck") == slurp(dir / "t2/best.msck"),
             "repeated training checkpoints differ");
  out.expect(slurp(dir / "t1/train_log.jsonl") ==
                 slurp(dir / "t2/train_log.jsonl"),
             "repeated training logs differ");

  const fs::path best = dir / "t1/best.msck";
  Checkpoint ckpt = load_checkpoint(best.string());
  const fs::path resaved = dir / "resaved.msck";
  save_checkpoint(resaved.string(), ckpt.params, ckpt.meta);
  out.expect(slurp(best) == slurp(resaved), "checkpoint round trip differs");

  std::vector<SceneRecord> test;
  for (auto& r : load_dataset(dir / "d1/manifest.jsonl")) {
    if (r.split == Split::Test) test.push_back(std::move(r));
  }
  EvalOptions opt;
  opt.checkpoint_id = "round-trip";
  const std::string direct = report_to_json(run_eval(ckpt, test, opt)).dump();

  const std::size_t hw = static_cast<std::size_t>(ckpt.params.config.image_size);
  std::vector<std::vector<float>> images;
  for (const auto& r : test) {
    images.push_back(
        prepare_image(r.image, ckpt.meta.bands, hw, ckpt.meta.norm_stats));
  }
  nn::TensorT<float> embs = embed_images(ckpt.params, images, opt.batch_size);
  const fs::path epath = dir / "test_embeddings.msr1";
  save_embeddings(epath.string(), embs);
  nn::TensorT<float> loaded = load_embeddings(epath.string());
  out.expect(loaded.shape == embs.shape && loaded.v == embs.v,
             "embedding interchange not bitwise");

  const std::string rebuilt =
      report_to_json(report_from_embeddings(ckpt, test, loaded, opt)).dump();
  out.expect(rebuilt == direct, "report rebuilt from exported embeddings "
                                "differs from the direct report");
  return out;
}

// ------------------------------------------------------------ criterion 9 --
// Every decision surface must be invariant to a positive rescale of the
// similarity matrix.

Outcome criterion9() {
  Outcome out;
  Rng rng(909);
  const std::array<double, 6> scales = {0.25,   2.0,   1024.0,
                                        3.7, 6.0e-7, 1.0e6};

  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + rng.bounded(39);
    const std::size_t k = 2 + rng.bounded(14);
    nn::Tensor sims = nn::Tensor::zeros({n, k});
    for (auto& v : sims.v) v = rng.uniform(-1.0, 1.0);
    std::vector<double> negatives(n);
    for (auto& v : negatives) v = rng.uniform(-1.0, 1.0);

    const double c = scales[static_cast<std::size_t>(inst) % scales.size()];
    nn::Tensor scaled = sims;
    for (auto& v : scaled.v) v *= c;
    std::vector<double> neg_scaled = negatives;
    for (auto& v : neg_scaled) v *= c;

    if (top1_from_sims(sims) != top1_from_sims(scaled)) {
      out.fail("top-1 changed under scale " + fmt(c));
      break;
    }
    if (decide_mean_of_others(sims) != decide_mean_of_others(scaled)) {
      out.fail("mean-of-others decisions changed under scale " + fmt(c));
      break;
    }
    if (decide_negative_class(sims, negatives) !=
        decide_negative_class(scaled, neg_scaled)) {
      out.fail("negative-prompt decisions changed under scale " + fmt(c));
      break;
    }
    bool rankings_equal = true;
    for (std::size_t col = 0; col < k && rankings_equal; ++col) {
      auto ranking = [&](const nn::Tensor& m) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) {
                           return m.v[a * k + col] > m.v[b * k + col];
                         });
        return order;
      };
      rankings_equal = ranking(sims) == ranking(scaled);
    }
    if (!rankings_equal) {
      out.fail("retrieval ranking changed under scale " + fmt(c));
      break;
    }
  }
  return out;
}

struct Criterion {
  int id;
  const char* label;
  Outcome (*fn)();
  double budget_seconds;  // 0: no stated bound
};

}  // namespace

int main(int argc, char** argv) {
  // Optional args: criterion numbers to run (default: all).
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "zero-init band extension preserves embeddings", criterion1, 30.0},
      {2, "contrastive loss values and gradients", criterion2, 60.0},
      {3, "spectral bands recover color-degenerate classes", criterion3,
       900.0},
      {4, "ranking and multilabel metric oracles", criterion4, 30.0},
      {5, "schedule anchors, optimizer step, freeze policy", criterion5, 0.0},
      {6, "multilabel rules diverge as documented", criterion6, 0.0},
      {7, "caption statistics hand values and ordering", criterion7, 0.0},
      {8, "byte determinism and export round trips", criterion8, 0.0},
      {9, "decisions invariant to positive similarity scaling", criterion9,
       0.0},
  };

  bool all_ok = true;
  for (const auto& c : criteria) {
    if (!selected.empty() &&
        std::find(selected.begin(), selected.end(), c.id) == selected.end())
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out.fail(std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (c.budget_seconds > 0.0 && secs > c.budget_seconds) {
      out.fail("runtime " + fmt(secs) + "s over budget " +
               fmt(c.budget_seconds) + "s");
    }
    std::printf("[%s] criterion %d: %s (%.1fs)%s%s\n",
                out.ok ? "PASS" : "FAIL", c.id, c.label, secs,
                out.note.empty() ? "" : ": ", out.note.c_str());
    std::fflush(stdout);
    all_ok = all_ok && out.ok;
  }
  return all_ok ? 0 : 1;
}
