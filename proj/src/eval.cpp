#include "msclip/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "msclip/errors.hpp"
#include "msclip/msr1.hpp"
#include "msclip/synth.hpp"
#include "msclip/trainer.hpp"

namespace msclip {

std::string multilabel_method_name(MultilabelMethod m) {
  return m == MultilabelMethod::MeanOfOthers ? "eq2" : "negative_class";
}

const std::vector<std::string>& default_prompt_templates() {
  static const std::vector<std::string> templates = {
      "a satellite photo of {}",
      "a satellite image of {}",
      "an aerial photo of {}",
      "a remote sensing image of {}",
      "an overhead view of {}",
      "an aerial view of {}",
      "a top-down photo of {}",
      "an overhead image of {}",
  };
  return templates;
}

std::string expand_template(const std::string& tpl, const std::string& name) {
  const std::string slot = "{}";
  std::size_t pos = tpl.find(slot);
  if (pos == std::string::npos) {
    throw UnknownPatternError("template lacks a {} slot: " + tpl);
  }
  std::string out = tpl;
  while (pos != std::string::npos) {
    out.replace(pos, slot.size(), name);
    pos = out.find(slot, pos + name.size());
  }
  return out;
}

nn::TensorT<float> build_class_embeddings(
    const ModelParameters& params, const Vocabulary& vocab,
    const std::vector<std::string>& class_names,
    const std::vector<std::string>& templates) {
  if (templates.empty()) throw EmptyTemplatesError("no prompt templates");
  if (class_names.empty()) throw InvalidConfigError("no class names");
  const std::size_t ctx =
      static_cast<std::size_t>(params.config.context_length);
  const std::size_t d = static_cast<std::size_t>(params.config.proj_dim);
  nn::TensorT<float> out = nn::TensorT<float>::zeros({class_names.size(), d});

  for (std::size_t c = 0; c < class_names.size(); ++c) {
    std::vector<std::vector<int>> rows;
    rows.reserve(templates.size());
    for (const auto& tpl : templates) {
      rows.push_back(encode(expand_template(tpl, class_names[c]), vocab, ctx));
    }
    nn::TensorT<float> embs = encode_text(params, rows);
    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        mean[j] += static_cast<double>(embs.v[r * d + j]);
      }
    }
    double sq = 0.0;
    for (double& x : mean) {
      x /= static_cast<double>(rows.size());
      sq += x * x;
    }
    const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
    for (std::size_t j = 0; j < d; ++j) {
      out.v[c * d + j] = static_cast<float>(mean[j] * inv);
    }
  }
  return out;
}

nn::TensorT<float> embed_images(const ModelParameters& params,
                                const std::vector<std::vector<float>>& images,
                                int batch_size) {
  if (images.empty()) throw EmptyDatasetError("no images to embed");
  if (batch_size < 1) throw InvalidConfigError("batch_size must be positive");
  const std::size_t c = static_cast<std::size_t>(params.config.in_channels);
  const std::size_t hw = static_cast<std::size_t>(params.config.image_size);
  const std::size_t d = static_cast<std::size_t>(params.config.proj_dim);
  nn::TensorT<float> out = nn::TensorT<float>::zeros({images.size(), d});

  std::size_t start = 0;
  while (start < images.size()) {
    const std::size_t end =
        std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    ImageBatch b;
    b.n = end - start;
    b.c = c;
    b.h = hw;
    b.w = hw;
    b.v.reserve(b.n * b.image_stride());
    for (std::size_t i = start; i < end; ++i) {
      if (images[i].size() != b.image_stride()) {
        throw ShapeMismatchError("image buffer size vs model raster");
      }
      for (float x : images[i]) b.v.push_back(static_cast<double>(x));
    }
    nn::TensorT<float> embs = encode_image(params, b);
    std::copy(embs.v.begin(), embs.v.end(), out.v.begin() + start * d);
    start = end;
  }
  return out;
}

nn::Tensor similarity_matrix(const nn::TensorT<float>& a,
                             const nn::TensorT<float>& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[1]) {
    throw ShapeMismatchError("similarity operands");
  }
  nn::Tensor out = nn::Tensor::zeros({a.shape[0], b.shape[0]});
  for (std::size_t i = 0; i < a.shape[0]; ++i) {
    for (std::size_t j = 0; j < b.shape[0]; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.shape[1]; ++k) {
        s += static_cast<double>(a.v[i * a.shape[1] + k]) *
             static_cast<double>(b.v[j * b.shape[1] + k]);
      }
      out.v[i * b.shape[0] + j] = s;
    }
  }
  return out;
}

std::vector<int> top1_from_sims(const nn::Tensor& sims) {
  const std::size_t n = sims.shape[0];
  const std::size_t k = sims.shape[1];
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (sims.v[i * k + j] > sims.v[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> decide_mean_of_others(
    const nn::Tensor& sims) {
  const std::size_t n = sims.shape[0];
  const std::size_t k = sims.shape[1];
  if (k < 2) {
    throw InvalidConfigError("mean-of-others rule needs at least two classes");
  }
  std::vector<std::vector<std::uint8_t>> out(n,
                                             std::vector<std::uint8_t>(k, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      // Summing the other scores directly (ascending index) keeps the
      // threshold arithmetic identical to a per-class reference, so exact
      // ties stay ties.
      double others = 0.0;
      for (std::size_t m = 0; m < k; ++m) {
        if (m != j) others += sims.v[i * k + m];
      }
      others /= static_cast<double>(k - 1);
      out[i][j] = sims.v[i * k + j] > others ? 1 : 0;
    }
  }
  return out;
}

std::vector<std::vector<std::uint8_t>> decide_negative_class(
    const nn::Tensor& sims, const std::vector<double>& negative_scores) {
  const std::size_t n = sims.shape[0];
  const std::size_t k = sims.shape[1];
  if (negative_scores.size() != n) {
    throw ShapeMismatchError("negative scores vs image rows");
  }
  std::vector<std::vector<std::uint8_t>> out(n,
                                             std::vector<std::uint8_t>(k, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      out[i][j] = sims.v[i * k + j] > negative_scores[i] ? 1 : 0;
    }
  }
  return out;
}

ApResult average_precision_at_k(const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& relevant,
                                int k) {
  if (scores.size() != relevant.size()) {
    throw ShapeMismatchError("scores vs relevance flags");
  }
  if (k < 1) throw InvalidConfigError("retrieval k must be positive");
  const std::size_t total_relevant =
      static_cast<std::size_t>(std::count(relevant.begin(), relevant.end(), 1));
  ApResult out;
  if (total_relevant == 0) {
    out.zero_relevant = true;
    return out;
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  const std::size_t depth =
      std::min(scores.size(), static_cast<std::size_t>(k));
  double sum_prec = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < depth; ++rank) {
    if (relevant[order[rank]]) {
      ++hits;
      sum_prec += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  out.ap = sum_prec / static_cast<double>(std::min(
                          total_relevant, static_cast<std::size_t>(k)));
  return out;
}

PerClassCounts prf1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PerClassCounts c;
  c.tp = tp;
  c.fp = fp;
  c.fn = fn;
  if (tp + fp > 0) c.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) c.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (c.precision + c.recall > 0.0) {
    c.f1 = 2.0 * c.precision * c.recall / (c.precision + c.recall);
  }
  return c;
}

EvalReport run_eval(const Checkpoint& ckpt,
                    const std::vector<SceneRecord>& records,
                    const EvalOptions& options) {
  if (records.empty()) throw EmptyDatasetError("no records to evaluate");
  if (ckpt.meta.vocab_tokens.empty()) {
    throw InvalidConfigError("checkpoint carries no vocabulary");
  }
  const Vocabulary vocab = vocab_from_tokens(ckpt.meta.vocab_tokens);

  std::vector<BandId> bands =
      options.bands.empty() ? ckpt.meta.bands : options.bands;
  if (bands.empty()) throw InvalidConfigError("no evaluation bands");
  if (!options.bands.empty() && !ckpt.meta.bands.empty() &&
      options.bands != ckpt.meta.bands) {
    throw InvalidConfigError("requested bands differ from checkpoint bands");
  }
  if (bands.size() != static_cast<std::size_t>(ckpt.params.config.in_channels)) {
    throw InvalidConfigError("band count does not match model input channels");
  }
  if (!ckpt.meta.norm_stats.covers(bands)) {
    throw InvalidConfigError("checkpoint lacks normalization statistics for bands");
  }

  const std::vector<std::string> templates =
      options.templates.empty() ? default_prompt_templates()
                                : options.templates;

  std::set<std::string> label_set;
  for (const auto& r : records) {
    for (const auto& l : r.class_labels) label_set.insert(l);
  }
  if (label_set.empty()) throw InvalidConfigError("records carry no class labels");
  const std::vector<std::string> class_names(label_set.begin(), label_set.end());
  const std::size_t n = records.size();
  const std::size_t k = class_names.size();

  std::vector<std::vector<float>> images;
  images.reserve(n);
  const std::size_t hw = static_cast<std::size_t>(ckpt.params.config.image_size);
  for (const auto& r : records) {
    images.push_back(prepare_image(r.image, bands, hw, ckpt.meta.norm_stats));
  }
  nn::TensorT<float> image_embs =
      embed_images(ckpt.params, images, options.batch_size);
  nn::TensorT<float> class_embs =
      build_class_embeddings(ckpt.params, vocab, class_names, templates);
  nn::Tensor sims = similarity_matrix(image_embs, class_embs);

  std::vector<std::vector<std::uint8_t>> truth(n,
                                               std::vector<std::uint8_t>(k, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& l : records[i].class_labels) {
      const auto it = label_set.find(l);
      const std::size_t idx = static_cast<std::size_t>(
          std::distance(label_set.begin(), it));
      truth[i][idx] = 1;
    }
  }

  std::vector<std::vector<std::uint8_t>> decisions;
  if (options.method == MultilabelMethod::MeanOfOthers) {
    decisions = decide_mean_of_others(sims);
  } else {
    nn::TensorT<float> neg = build_class_embeddings(
        ckpt.params, vocab, {options.negative_class_name}, templates);
    nn::Tensor neg_sims = similarity_matrix(image_embs, neg);
    std::vector<double> neg_scores(neg_sims.v.begin(), neg_sims.v.end());
    decisions = decide_negative_class(sims, neg_scores);
  }

  const std::vector<int> top1 = top1_from_sims(sims);

  EvalReport report;
  report.method = multilabel_method_name(options.method);
  report.checkpoint_id = options.checkpoint_id;
  report.bands = band_names(bands);
  report.templates = templates;
  report.retrieval_k = options.retrieval_k;
  report.images = n;

  for (std::size_t c = 0; c < k; ++c) {
    ClassReport cr;
    cr.name = class_names[c];
    std::size_t support = 0, top1_correct = 0, tp = 0, fp = 0, fn = 0;
    std::vector<double> scores(n);
    std::vector<std::uint8_t> relevant(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = sims.v[i * k + c];
      relevant[i] = truth[i][c];
      if (truth[i][c]) {
        ++support;
        if (static_cast<std::size_t>(top1[i]) == c) ++top1_correct;
      }
      if (decisions[i][c] && truth[i][c]) ++tp;
      if (decisions[i][c] && !truth[i][c]) ++fp;
      if (!decisions[i][c] && truth[i][c]) ++fn;
    }
    cr.support = support;
    cr.accuracy = support > 0 ? static_cast<double>(top1_correct) /
                                    static_cast<double>(support)
                              : 0.0;
    const PerClassCounts prf = prf1_from_counts(tp, fp, fn);
    cr.precision = prf.precision;
    cr.recall = prf.recall;
    cr.f1 = prf.f1;
    const ApResult ap = average_precision_at_k(scores, relevant,
                                               options.retrieval_k);
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

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["checkpoint"] = report.checkpoint_id;
  j["bands"] = report.bands;
  j["templates"] = report.templates;
  j["retrieval_k"] = report.retrieval_k;
  j["images"] = report.images;
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : report.classes) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["support"] = c.support;
    jc["accuracy"] = c.accuracy;
    jc["precision"] = c.precision;
    jc["recall"] = c.recall;
    jc["f1"] = c.f1;
    jc["ap"] = c.ap;
    jc["zero_relevant"] = c.zero_relevant;
    j["classes"].push_back(jc);
  }
  j["macro"] = {{"accuracy", report.macro_accuracy},
                {"precision", report.macro_precision},
                {"recall", report.macro_recall},
                {"f1", report.macro_f1},
                {"map", report.macro_ap}};
  return j;
}

std::string report_table(const EvalReport& report) {
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-26s %7s %9s %10s %9s %9s %9s\n",
                "class", "support", "top1", "precision", "recall", "f1",
                ("ap@" + std::to_string(report.retrieval_k)).c_str());
  out += line;
  for (const auto& c : report.classes) {
    std::snprintf(line, sizeof(line),
                  "%-26s %7zu %9.4f %10.4f %9.4f %9.4f %9.4f%s\n",
                  c.name.c_str(), c.support, c.accuracy, c.precision, c.recall,
                  c.f1, c.ap, c.zero_relevant ? "  (no relevant)" : "");
    out += line;
  }
  std::snprintf(line, sizeof(line),
                "%-26s %7zu %9.4f %10.4f %9.4f %9.4f %9.4f\n", "macro",
                report.images, report.macro_accuracy, report.macro_precision,
                report.macro_recall, report.macro_f1, report.macro_ap);
  out += line;
  return out;
}

void save_embeddings(const std::string& path, const nn::TensorT<float>& rows) {
  if (rows.shape.size() != 2) throw ShapeMismatchError("embeddings must be [n, d]");
  Msr1File f;
  f.height = static_cast<std::uint32_t>(rows.shape[0]);
  f.width = static_cast<std::uint32_t>(rows.shape[1]);
  f.values = rows.v;
  write_msr1(path, f);
}

nn::TensorT<float> load_embeddings(const std::string& path) {
  Msr1File f = read_msr1(path);
  if (!f.band_names.empty()) {
    throw IoError("expected a bandless embedding container: " + path);
  }
  nn::TensorT<float> out;
  out.shape = {f.height, f.width};
  out.v = std::move(f.values);
  return out;
}

void save_labels(const std::string& path,
                 const std::vector<std::vector<std::string>>& labels) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write labels: " + path);
  for (const auto& row : labels) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) f << ';';
      f << row[i];
    }
    f << '\n';
  }
  if (!f) throw IoError("short labels write: " + path);
}

std::vector<std::vector<std::string>> load_labels(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read labels: " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(f, line)) {
    std::vector<std::string> row;
    std::size_t pos = 0;
    if (!line.empty()) {
      while (pos <= line.size()) {
        std::size_t semi = line.find(';', pos);
        if (semi == std::string::npos) semi = line.size();
        row.push_back(line.substr(pos, semi - pos));
        pos = semi + 1;
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace msclip
