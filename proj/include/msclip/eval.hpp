#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msclip/checkpoint.hpp"
#include "msclip/image.hpp"
#include "msclip/model.hpp"
#include "msclip/tokenizer.hpp"

namespace msclip {

enum class MultilabelMethod { MeanOfOthers, NegativeClass };

std::string multilabel_method_name(MultilabelMethod m);

// Eight overhead-imagery prompts; swap in your own via EvalOptions.
const std::vector<std::string>& default_prompt_templates();

struct EvalOptions {
  std::vector<BandId> bands;               // empty: use checkpoint bands
  std::vector<std::string> templates;      // empty: default prompt set
  MultilabelMethod method = MultilabelMethod::MeanOfOthers;
  std::string negative_class_name = "other features";
  int retrieval_k = 100;
  int batch_size = 64;
  std::string checkpoint_id;               // echoed into the report
};

// "{}" in the template is replaced by the class name.
std::string expand_template(const std::string& tpl, const std::string& name);

// Per class: encode every filled template, average the embeddings, and
// rescale the mean back to unit norm. Rows follow class_names order.
nn::TensorT<float> build_class_embeddings(
    const ModelParameters& params, const Vocabulary& vocab,
    const std::vector<std::string>& class_names,
    const std::vector<std::string>& templates);

// Images are flattened channel-major pixel buffers matching the model
// raster; encoding happens in fixed-size batches.
nn::TensorT<float> embed_images(const ModelParameters& params,
                                const std::vector<std::vector<float>>& images,
                                int batch_size);

// Cosine similarities of unit rows, accumulated in double.
nn::Tensor similarity_matrix(const nn::TensorT<float>& a,
                             const nn::TensorT<float>& b);

// Highest score wins; equal scores resolve to the lowest class index.
std::vector<int> top1_from_sims(const nn::Tensor& sims);

// Positive when the class score strictly exceeds the mean of the other
// class scores. Needs at least two classes.
std::vector<std::vector<std::uint8_t>> decide_mean_of_others(
    const nn::Tensor& sims);

// Positive when the class score strictly exceeds the score of a dedicated
// negative prompt (one value per image row).
std::vector<std::vector<std::uint8_t>> decide_negative_class(
    const nn::Tensor& sims, const std::vector<double>& negative_scores);

struct ApResult {
  double ap = 0.0;
  bool zero_relevant = false;
};

// Average precision over the top k of the score ranking (ties resolve to
// the lower index), normalized by min(#relevant, k). No relevant items
// scores zero and sets the flag.
ApResult average_precision_at_k(const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& relevant,
                                int k);

struct PerClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Zero denominators yield zero scores rather than dividing.
PerClassCounts prf1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

struct ClassReport {
  std::string name;
  std::size_t support = 0;
  double accuracy = 0.0;  // top-1 recall of this class
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double ap = 0.0;
  bool zero_relevant = false;
};

struct EvalReport {
  std::string method;
  std::string checkpoint_id;
  std::vector<std::string> bands;
  std::vector<std::string> templates;
  int retrieval_k = 100;
  std::size_t images = 0;
  std::vector<ClassReport> classes;
  double macro_accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double macro_ap = 0.0;
};

nlohmann::ordered_json report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);

// Full zero-shot pass over the given records: classification against the
// sorted set of labels occurring in them, multilabel decisions, and
// class-to-image retrieval. Uses the checkpoint's vocabulary and
// normalization statistics.
EvalReport run_eval(const Checkpoint& ckpt,
                    const std::vector<SceneRecord>& records,
                    const EvalOptions& options);

// Embedding interchange: a raster container with no band names, one row per
// embedding, plus a text file of per-row labels joined by ';'.
void save_embeddings(const std::string& path, const nn::TensorT<float>& rows);
nn::TensorT<float> load_embeddings(const std::string& path);
void save_labels(const std::string& path,
                 const std::vector<std::vector<std::string>>& labels);
std::vector<std::vector<std::string>> load_labels(const std::string& path);

}  // namespace msclip
