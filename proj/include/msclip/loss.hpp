#pragma once

#include <memory>

#include "msclip/errors.hpp"
#include "msclip/nn/graph.hpp"

namespace msclip {

// One contrastive step: n paired unit-norm rows per side plus the learned
// inverse-temperature exponent.
struct ContrastiveBatch {
  nn::Tensor image_embeddings;  // [n, d]
  nn::Tensor text_embeddings;   // [n, d]
  double log_temperature = 0.0;
};

struct InfoNceResult {
  double loss = 0.0;
  nn::Tensor logits;  // [n, n], similarity * exp(log_temperature)
};

struct InfoNceGrads {
  nn::Tensor d_image;
  nn::Tensor d_text;
  double d_log_temperature = 0.0;
};

// Symmetric cross-entropy over the pairwise-similarity matrix, averaged
// over both matching directions. Row i matches column i. Log-sum-exp is
// stabilized per row/column, so large logits stay finite.
InfoNceResult info_nce(const ContrastiveBatch& batch);

// Analytic gradients of info_nce with respect to both embedding matrices
// and log_temperature.
InfoNceGrads info_nce_backward(const ContrastiveBatch& batch);

namespace detail {

template <class S>
ContrastiveBatch to_double_batch(const nn::GraphT<S>& g, nn::Var image,
                                 nn::Var text, nn::Var log_temp) {
  ContrastiveBatch b;
  b.image_embeddings = g.value(image).template cast<double>();
  b.text_embeddings = g.value(text).template cast<double>();
  const auto& lt = g.value(log_temp);
  if (lt.numel() != 1) throw ShapeMismatchError("log_temperature must be scalar");
  b.log_temperature = static_cast<double>(lt.v[0]);
  return b;
}

}  // namespace detail

// Graph node wrapping the loss; the heavy math runs in double regardless of
// the graph scalar type, which keeps training in float consistent with the
// reference forward/backward pair.
template <class S>
nn::Var info_nce_node(nn::GraphT<S>& g, nn::Var image, nn::Var text,
                      nn::Var log_temp) {
  ContrastiveBatch batch = detail::to_double_batch(g, image, text, log_temp);
  InfoNceResult fwd = info_nce(batch);
  nn::TensorT<S> value = nn::TensorT<S>::scalar(static_cast<S>(fwd.loss));
  return g.make_node(
      std::move(value), {image, text, log_temp},
      [image, text, log_temp](nn::GraphT<S>& gg, int node) {
        const S upstream = gg.grad(nn::Var{node}).v[0];
        ContrastiveBatch b = detail::to_double_batch(gg, image, text, log_temp);
        InfoNceGrads grads = info_nce_backward(b);
        auto& gi = gg.grad(image);
        auto& gt = gg.grad(text);
        auto& gl = gg.grad(log_temp);
        for (std::size_t i = 0; i < gi.numel(); ++i) {
          gi.v[i] += static_cast<S>(grads.d_image.v[i] * upstream);
        }
        for (std::size_t i = 0; i < gt.numel(); ++i) {
          gt.v[i] += static_cast<S>(grads.d_text.v[i] * upstream);
        }
        gl.v[0] += static_cast<S>(grads.d_log_temperature * upstream);
      });
}

}  // namespace msclip
