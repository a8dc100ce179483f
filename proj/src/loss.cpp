#include "msclip/loss.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace msclip {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;

void check_batch(const ContrastiveBatch& batch) {
  const auto& xi = batch.image_embeddings;
  const auto& xt = batch.text_embeddings;
  if (xi.shape.size() != 2 || xt.shape.size() != 2 || xi.shape != xt.shape) {
    throw ShapeMismatchError("contrastive sides must be equal [n, d] matrices");
  }
  if (xi.shape[0] == 0 || xi.shape[1] == 0) {
    throw ShapeMismatchError("contrastive batch must be non-empty");
  }
  if (!xi.all_finite() || !xt.all_finite() ||
      !std::isfinite(batch.log_temperature)) {
    throw NonFiniteInputError("contrastive batch");
  }
}

nn::Tensor make_logits(const ContrastiveBatch& batch) {
  const std::size_t n = batch.image_embeddings.shape[0];
  const std::size_t d = batch.image_embeddings.shape[1];
  nn::Tensor logits = nn::Tensor::zeros({n, n});
  CMap xi(batch.image_embeddings.v.data(), n, d);
  CMap xt(batch.text_embeddings.v.data(), n, d);
  Eigen::Map<EMat> lm(logits.v.data(), n, n);
  lm.noalias() = xi * xt.transpose();
  lm *= std::exp(batch.log_temperature);
  return logits;
}

// Row-stabilized softmax of m (or of m transposed when by_columns).
EMat softmax_rows(const EMat& m) {
  EMat p = m;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

InfoNceResult info_nce(const ContrastiveBatch& batch) {
  check_batch(batch);
  InfoNceResult out;
  out.logits = make_logits(batch);
  const std::size_t n = out.logits.shape[0];
  CMap lm(out.logits.v.data(), n, n);

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_max = lm.row(static_cast<Eigen::Index>(i)).maxCoeff();
    double col_max = lm.col(static_cast<Eigen::Index>(i)).maxCoeff();
    double row_lse = 0.0, col_lse = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row_lse += std::exp(lm(i, j) - row_max);
      col_lse += std::exp(lm(j, i) - col_max);
    }
    row_lse = row_max + std::log(row_lse);
    col_lse = col_max + std::log(col_lse);
    total += (row_lse - lm(i, i)) + (col_lse - lm(i, i));
  }
  out.loss = total / (2.0 * static_cast<double>(n));
  return out;
}

InfoNceGrads info_nce_backward(const ContrastiveBatch& batch) {
  check_batch(batch);
  nn::Tensor logits = make_logits(batch);
  const std::size_t n = logits.shape[0];
  const std::size_t d = batch.image_embeddings.shape[1];
  CMap lm(logits.v.data(), n, n);

  EMat p_row = softmax_rows(lm);
  EMat p_col = softmax_rows(lm.transpose());  // p_col(i, j) over column j of lm

  // d loss / d logits = ((p_row - I) + (p_col - I)^T) / (2 n)
  EMat dlogits = p_row + p_col.transpose();
  for (std::size_t i = 0; i < n; ++i) dlogits(i, i) -= 2.0;
  dlogits /= 2.0 * static_cast<double>(n);

  InfoNceGrads out;
  const double inv_tau = std::exp(batch.log_temperature);
  out.d_image = nn::Tensor::zeros({n, d});
  out.d_text = nn::Tensor::zeros({n, d});
  CMap xi(batch.image_embeddings.v.data(), n, d);
  CMap xt(batch.text_embeddings.v.data(), n, d);
  Eigen::Map<EMat> di(out.d_image.v.data(), n, d);
  Eigen::Map<EMat> dt(out.d_text.v.data(), n, d);
  di.noalias() = dlogits * xt * inv_tau;
  dt.noalias() = dlogits.transpose() * xi * inv_tau;
  out.d_log_temperature = dlogits.cwiseProduct(lm).sum();
  return out;
}

}  // namespace msclip
