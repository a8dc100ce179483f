#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "msclip/errors.hpp"
#include "msclip/eval.hpp"
#include "msclip/msr1.hpp"
#include "msclip/rng.hpp"
#include "msclip/synth.hpp"
#include "msclip/trainer.hpp"

using namespace msclip;

namespace {

nn::Tensor sims_matrix(std::vector<std::size_t> shape,
                       std::vector<double> values) {
  nn::Tensor t;
  t.shape = std::move(shape);
  t.v = std::move(values);
  return t;
}

ModelConfig eval_model() {
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

// Random-weight checkpoint whose metadata matches a tiny synthetic dataset.
Checkpoint synthetic_checkpoint(std::uint64_t seed,
                                const std::vector<SceneRecord>& records) {
  Checkpoint ckpt;
  ckpt.params = init_model(eval_model(), seed);
  PreparedDataset ds = prepare_dataset(records, rgb_bands(), eval_model());
  ckpt.meta.bands = rgb_bands();
  ckpt.meta.norm_stats = ds.stats;
  ckpt.meta.vocab_tokens = ds.vocab.tokens;
  return ckpt;
}

std::vector<SceneRecord> synthetic_records(std::uint64_t seed, int classes,
                                           int train_per, int test_per) {
  SynthConfig s;
  s.seed = seed;
  s.num_classes = classes;
  s.per_class_count = {{Split::Train, train_per},
                       {Split::Val, 0},
                       {Split::Test, test_per}};
  s.image_size = 8;
  s.band_set = {BandId::B2, BandId::B3, BandId::B4};
  return generate_synthetic(s);
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("msclip_eval_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("template expansion fills every slot") {
  CHECK(expand_template("a photo of {}", "a lake") == "a photo of a lake");
  CHECK(expand_template("{} seen from above, {}", "city") ==
        "city seen from above, city");
  CHECK_THROWS_AS(expand_template("no slot here", "x"), UnknownPatternError);
}

TEST_CASE("default prompt set is the documented eight") {
  const auto& t = default_prompt_templates();
  REQUIRE(t.size() == 8);
  CHECK(t[0] == "a satellite photo of {}");
  for (const auto& tpl : t) {
    CHECK(tpl.find("{}") != std::string::npos);
  }
}

TEST_CASE("class embeddings average templates then renormalize") {
  auto records = synthetic_records(3, 2, 4, 0);
  Checkpoint ckpt = synthetic_checkpoint(5, records);
  const Vocabulary vocab = vocab_from_tokens(ckpt.meta.vocab_tokens);
  const std::size_t d = 4;

  SUBCASE("single template equals the prompt embedding") {
    auto ce = build_class_embeddings(ckpt.params, vocab, {"lake"},
                                     {"a photo of {}"});
    REQUIRE(ce.shape == std::vector<std::size_t>{1, d});
    auto direct = encode_text(
        ckpt.params,
        {encode("a photo of lake", vocab,
                static_cast<std::size_t>(ckpt.params.config.context_length))});
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(ce.v[j] == doctest::Approx(direct.v[j]).epsilon(1e-6));
    }
  }
  SUBCASE("duplicated template changes nothing") {
    auto one = build_class_embeddings(ckpt.params, vocab, {"lake"},
                                      {"a photo of {}"});
    auto two = build_class_embeddings(ckpt.params, vocab, {"lake"},
                                      {"a photo of {}", "a photo of {}"});
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(one.v[j] == doctest::Approx(two.v[j]).epsilon(1e-6));
    }
  }
  SUBCASE("two templates give the renormalized mean") {
    const std::vector<std::string> tpls = {"a photo of {}", "an image of {}"};
    auto ce = build_class_embeddings(ckpt.params, vocab, {"lake"}, tpls);
    const std::size_t ctx =
        static_cast<std::size_t>(ckpt.params.config.context_length);
    auto e = encode_text(ckpt.params,
                         {encode("a photo of lake", vocab, ctx),
                          encode("an image of lake", vocab, ctx)});
    std::vector<double> mean(d);
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] = (static_cast<double>(e.v[j]) + e.v[d + j]) / 2.0;
      sq += mean[j] * mean[j];
    }
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(ce.v[j] ==
            doctest::Approx(mean[j] / std::sqrt(sq)).epsilon(1e-6));
    }
    // Unit norm.
    double out_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out_sq += static_cast<double>(ce.v[j]) * ce.v[j];
    }
    CHECK(out_sq == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("guards") {
    CHECK_THROWS_AS(build_class_embeddings(ckpt.params, vocab, {"lake"}, {}),
                    EmptyTemplatesError);
    CHECK_THROWS_AS(build_class_embeddings(ckpt.params, vocab, {},
                                           {"a photo of {}"}),
                    InvalidConfigError);
  }
}

TEST_CASE("image embedding batching does not change results") {
  auto records = synthetic_records(4, 2, 4, 0);
  Checkpoint ckpt = synthetic_checkpoint(6, records);
  std::vector<std::vector<float>> images;
  for (const auto& r : records) {
    images.push_back(prepare_image(r.image, ckpt.meta.bands, 8,
                                   ckpt.meta.norm_stats));
  }
  auto all = embed_images(ckpt.params, images, 64);
  auto small = embed_images(ckpt.params, images, 3);
  REQUIRE(all.shape == std::vector<std::size_t>{images.size(), 4});
  REQUIRE(small.shape == all.shape);
  for (std::size_t i = 0; i < all.v.size(); ++i) {
    CHECK(all.v[i] == doctest::Approx(small.v[i]).epsilon(1e-5));
  }
  CHECK_THROWS_AS(embed_images(ckpt.params, {}, 4), EmptyDatasetError);
  CHECK_THROWS_AS(embed_images(ckpt.params, images, 0), InvalidConfigError);
  std::vector<std::vector<float>> bad = {{1.0f, 2.0f}};
  CHECK_THROWS_AS(embed_images(ckpt.params, bad, 4), ShapeMismatchError);
}

TEST_CASE("similarity matrix is the double-precision dot table") {
  nn::TensorT<float> a = nn::TensorT<float>::zeros({2, 3});
  a.v = {1.0f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f};
  nn::TensorT<float> b = nn::TensorT<float>::zeros({2, 3});
  b.v = {0.6f, 0.8f, 0.0f, 0.0f, 0.0f, 1.0f};
  nn::Tensor s = similarity_matrix(a, b);
  REQUIRE(s.shape == std::vector<std::size_t>{2, 2});
  CHECK(s.v[0] == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(s.v[1] == 0.0);
  CHECK(s.v[2] == doctest::Approx(0.8).epsilon(1e-7));
  CHECK(s.v[3] == 0.0);
  nn::TensorT<float> c = nn::TensorT<float>::zeros({2, 4});
  CHECK_THROWS_AS(similarity_matrix(a, c), ShapeMismatchError);
}

TEST_CASE("top-1 takes the highest score, ties to the lowest index") {
  nn::Tensor s = sims_matrix({3, 3}, {0.1, 0.9, 0.5,   //
                                      0.7, 0.7, 0.1,   //
                                      0.2, 0.2, 0.2});
  CHECK(top1_from_sims(s) == std::vector<int>{1, 0, 0});
}

TEST_CASE("mean-of-others rule") {
  SUBCASE("documented hand cases") {
    auto d2 = decide_mean_of_others(sims_matrix({1, 2}, {0.9, 0.5}));
    CHECK(d2[0] == std::vector<std::uint8_t>{1, 0});
    // (0.9, 0.5, 0.1): class 1 vs 0.3 -> 1; class 2 vs exactly 0.5 -> tie,
    // strict inequality keeps it 0; class 3 vs 0.7 -> 0.
    auto d3 = decide_mean_of_others(sims_matrix({1, 3}, {0.9, 0.5, 0.1}));
    CHECK(d3[0] == std::vector<std::uint8_t>{1, 0, 0});
  }
  SUBCASE("all-equal scores emit nothing") {
    auto d = decide_mean_of_others(sims_matrix({2, 4}, {0.3, 0.3, 0.3, 0.3,  //
                                                        0.0, 0.0, 0.0, 0.0}));
    for (const auto& row : d) {
      CHECK(row == std::vector<std::uint8_t>(4, 0));
    }
  }
  SUBCASE("invariant to positive scaling and constant shifts") {
    Rng rng(40);
    nn::Tensor s = sims_matrix({5, 6}, {});
    s.v.resize(30);
    for (auto& v : s.v) v = rng.uniform(-1.0, 1.0);
    auto base = decide_mean_of_others(s);
    nn::Tensor scaled = s;
    for (auto& v : scaled.v) v *= 7.25;
    CHECK(decide_mean_of_others(scaled) == base);
    nn::Tensor shifted = s;
    for (auto& v : shifted.v) v += 0.375;  // exact in binary floating point
    CHECK(decide_mean_of_others(shifted) == base);
  }
  SUBCASE("needs two classes") {
    CHECK_THROWS_AS(decide_mean_of_others(sims_matrix({2, 1}, {0.5, 0.1})),
                    InvalidConfigError);
  }
}

TEST_CASE("negative-class rule") {
  nn::Tensor s = sims_matrix({3, 2}, {0.6, 0.4,   //
                                      0.2, 0.3,   //
                                      0.8, 0.9});
  auto d = decide_negative_class(s, {0.5, 0.5, 0.5});
  CHECK(d[0] == std::vector<std::uint8_t>{1, 0});
  CHECK(d[1] == std::vector<std::uint8_t>{0, 0});  // negative beats all
  CHECK(d[2] == std::vector<std::uint8_t>{1, 1});  // negative loses to all
  CHECK_THROWS_AS(decide_negative_class(s, {0.5}), ShapeMismatchError);

  // At K = 2 the mean of "others" is the other class, so feeding that as
  // the negative score reproduces the mean-of-others decisions.
  Rng rng(41);
  nn::Tensor r = sims_matrix({8, 2}, {});
  r.v.resize(16);
  for (auto& v : r.v) v = rng.uniform(-1.0, 1.0);
  std::vector<double> other_scores;
  for (std::size_t i = 0; i < 8; ++i) {
    // Negative score must mirror the per-column threshold; with K = 2 the
    // two columns swap roles, so check each column against the other.
    other_scores.push_back(r.v[i * 2 + 1]);
  }
  auto eq2 = decide_mean_of_others(r);
  auto neg = decide_negative_class(r, other_scores);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(neg[i][0] == eq2[i][0]);
  }
}

TEST_CASE("average precision at k") {
  SUBCASE("single relevant at rank 2") {
    auto r = average_precision_at_k({0.9, 0.8, 0.1}, {0, 1, 0}, 100);
    CHECK_FALSE(r.zero_relevant);
    CHECK(r.ap == 0.5);
  }
  SUBCASE("relevant at ranks 1 and 3") {
    auto r = average_precision_at_k({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0}, 100);
    CHECK(r.ap == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  }
  SUBCASE("perfect prefix scores one") {
    auto r = average_precision_at_k({0.9, 0.8, 0.1, 0.0}, {1, 1, 0, 0}, 100);
    CHECK(r.ap == 1.0);
  }
  SUBCASE("no relevant items sets the flag") {
    auto r = average_precision_at_k({0.9, 0.8}, {0, 0}, 100);
    CHECK(r.zero_relevant);
    CHECK(r.ap == 0.0);
  }
  SUBCASE("ties rank the lower index first") {
    // All scores equal: ranking is index order.
    auto first = average_precision_at_k({0.5, 0.5, 0.5}, {1, 0, 0}, 100);
    CHECK(first.ap == 1.0);
    auto last = average_precision_at_k({0.5, 0.5, 0.5}, {0, 0, 1}, 100);
    CHECK(last.ap == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("k truncates both the scan and the normalizer") {
    // Relevant at ranks 1 and 3 but k = 2: only the first is seen, and the
    // normalizer is min(2, 2) = 2.
    auto r = average_precision_at_k({0.9, 0.8, 0.7}, {1, 0, 1}, 2);
    CHECK(r.ap == 0.5);
    // k = 1 with the hit at rank 2 finds nothing.
    auto miss = average_precision_at_k({0.9, 0.8}, {0, 1}, 1);
    CHECK(miss.ap == 0.0);
    CHECK_FALSE(miss.zero_relevant);
  }
  SUBCASE("guards") {
    CHECK_THROWS_AS(average_precision_at_k({0.5}, {1, 0}, 10),
                    ShapeMismatchError);
    CHECK_THROWS_AS(average_precision_at_k({0.5}, {1}, 0), InvalidConfigError);
  }
}

TEST_CASE("precision/recall/f1 conventions") {
  auto c = prf1_from_counts(2, 1, 1);
  CHECK(c.precision == doctest::Approx(2.0 / 3.0));
  CHECK(c.recall == doctest::Approx(2.0 / 3.0));
  CHECK(c.f1 == doctest::Approx(2.0 / 3.0));
  auto zeros = prf1_from_counts(0, 0, 0);
  CHECK(zeros.precision == 0.0);
  CHECK(zeros.recall == 0.0);
  CHECK(zeros.f1 == 0.0);
  auto no_pred = prf1_from_counts(0, 0, 5);
  CHECK(no_pred.precision == 0.0);
  CHECK(no_pred.recall == 0.0);
  CHECK(no_pred.f1 == 0.0);
  auto perfect = prf1_from_counts(4, 0, 0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);
}

TEST_CASE("embedding and label files round-trip") {
  nn::TensorT<float> rows = nn::TensorT<float>::zeros({3, 4});
  Rng rng(42);
  for (auto& v : rows.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto epath = temp_path("emb.msr1");
  save_embeddings(epath.string(), rows);
  auto back = load_embeddings(epath.string());
  CHECK(back.shape == rows.shape);
  CHECK(back.v == rows.v);

  const std::vector<std::vector<std::string>> labels = {
      {"lake"}, {"lake", "forest"}, {}};
  const auto lpath = temp_path("emb.labels.txt");
  save_labels(lpath.string(), labels);
  CHECK(load_labels(lpath.string()) == labels);

  CHECK_THROWS_AS(load_embeddings("/nonexistent/e.msr1"), IoError);
  CHECK_THROWS_AS(load_labels("/nonexistent/l.txt"), IoError);

  // A raster with band names is an image, not an embedding table.
  Msr1File banded;
  banded.band_names = {"B4"};
  banded.height = 2;
  banded.width = 2;
  banded.values = {1.0f, 2.0f, 3.0f, 4.0f};
  const auto bpath = temp_path("banded.msr1");
  write_msr1(bpath, banded);
  CHECK_THROWS_AS(load_embeddings(bpath.string()), IoError);

  nn::TensorT<float> not_matrix = nn::TensorT<float>::zeros({2, 2, 2});
  CHECK_THROWS_AS(save_embeddings(epath.string(), not_matrix),
                  ShapeMismatchError);
}

TEST_CASE("zero-shot evaluation report") {
  auto records = synthetic_records(9, 4, 6, 4);
  Checkpoint ckpt = synthetic_checkpoint(11, records);
  std::vector<SceneRecord> test_recs;
  for (const auto& r : records) {
    if (r.split == Split::Test) test_recs.push_back(r);
  }
  REQUIRE(test_recs.size() == 16);

  EvalOptions opt;
  opt.checkpoint_id = "ckpt-under-test";
  EvalReport rep = run_eval(ckpt, test_recs, opt);

  CHECK(rep.method == "eq2");
  CHECK(rep.checkpoint_id == "ckpt-under-test");
  CHECK(rep.bands == band_names(rgb_bands()));
  CHECK(rep.templates == default_prompt_templates());
  CHECK(rep.retrieval_k == 100);
  CHECK(rep.images == 16);
  REQUIRE(rep.classes.size() == 4);

  double acc = 0.0, prec = 0.0, rec = 0.0, f1 = 0.0, ap = 0.0;
  for (const auto& c : rep.classes) {
    CHECK(c.support == 4);
    for (double m : {c.accuracy, c.precision, c.recall, c.f1, c.ap}) {
      CHECK(m >= 0.0);
      CHECK(m <= 1.0);
    }
    acc += c.accuracy;
    prec += c.precision;
    rec += c.recall;
    f1 += c.f1;
    ap += c.ap;
  }
  CHECK(rep.macro_accuracy == doctest::Approx(acc / 4).epsilon(1e-12));
  CHECK(rep.macro_precision == doctest::Approx(prec / 4).epsilon(1e-12));
  CHECK(rep.macro_recall == doctest::Approx(rec / 4).epsilon(1e-12));
  CHECK(rep.macro_f1 == doctest::Approx(f1 / 4).epsilon(1e-12));
  CHECK(rep.macro_ap == doctest::Approx(ap / 4).epsilon(1e-12));

  SUBCASE("the two multilabel methods differ only where documented") {
    EvalOptions neg = opt;
    neg.method = MultilabelMethod::NegativeClass;
    EvalReport rep2 = run_eval(ckpt, test_recs, neg);
    CHECK(rep2.method == "negative_class");
    // Ranking metrics ignore the multilabel rule.
    CHECK(rep2.macro_accuracy == rep.macro_accuracy);
    CHECK(rep2.macro_ap == rep.macro_ap);
  }
  SUBCASE("report json serialization is stable and ordered") {
    auto j1 = report_to_json(rep).dump(2);
    auto j2 = report_to_json(run_eval(ckpt, test_recs, opt)).dump(2);
    CHECK(j1 == j2);
    CHECK(j1.find("\"method\"") < j1.find("\"checkpoint\""));
    CHECK(j1.find("\"checkpoint\"") < j1.find("\"bands\""));
    CHECK(j1.find("\"macro\"") != std::string::npos);
    std::string table = report_table(rep);
    CHECK(table.find("macro") != std::string::npos);
    CHECK(table.find(rep.classes[0].name) != std::string::npos);
  }
  SUBCASE("custom templates are echoed") {
    EvalOptions custom = opt;
    custom.templates = {"a photo of {}"};
    EvalReport rep3 = run_eval(ckpt, test_recs, custom);
    CHECK(rep3.templates == custom.templates);
  }
}

TEST_CASE("evaluation rejects inconsistent inputs") {
  auto records = synthetic_records(9, 2, 4, 2);
  Checkpoint ckpt = synthetic_checkpoint(12, records);
  std::vector<SceneRecord> test_recs;
  for (const auto& r : records) {
    if (r.split == Split::Test) test_recs.push_back(r);
  }

  CHECK_THROWS_AS(run_eval(ckpt, {}, EvalOptions{}), EmptyDatasetError);

  EvalOptions wrong_bands;
  wrong_bands.bands = {BandId::B2, BandId::B3, BandId::B8};
  CHECK_THROWS_AS(run_eval(ckpt, test_recs, wrong_bands), InvalidConfigError);

  Checkpoint no_vocab = ckpt;
  no_vocab.meta.vocab_tokens.clear();
  CHECK_THROWS_AS(run_eval(no_vocab, test_recs, EvalOptions{}),
                  InvalidConfigError);

  Checkpoint no_stats = ckpt;
  no_stats.meta.norm_stats.per_band.erase(BandId::B2);
  CHECK_THROWS_AS(run_eval(no_stats, test_recs, EvalOptions{}),
                  InvalidConfigError);

  std::vector<SceneRecord> unlabeled = test_recs;
  for (auto& r : unlabeled) r.class_labels.clear();
  CHECK_THROWS_AS(run_eval(ckpt, unlabeled, EvalOptions{}),
                  InvalidConfigError);
}

TEST_CASE("random weights score inside the chance band") {
  // Balanced four-way task, untrained models: macro top-1 accuracy must sit
  // near 1/4, clear of both floor and ceiling, for every seed.
  auto records = synthetic_records(13, 4, 6, 5);
  std::vector<SceneRecord> test_recs;
  for (const auto& r : records) {
    if (r.split == Split::Test) test_recs.push_back(r);
  }
  REQUIRE(test_recs.size() == 20);
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    CAPTURE(seed);
    Checkpoint ckpt = synthetic_checkpoint(seed, records);
    EvalReport rep = run_eval(ckpt, test_recs, EvalOptions{});
    CHECK(rep.macro_accuracy >= 0.10);
    CHECK(rep.macro_accuracy <= 0.45);
  }
}
