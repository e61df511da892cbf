#pragma once

#include <Eigen/Core>

#include <span>
#include <vector>

#include "airid/model.hpp"
#include "airid/synthdata.hpp"
#include "json.hpp"

namespace airid {

/// Gallery concepts with cached row norms. Rows never have zero norm.
struct GalleryIndex {
  Eigen::MatrixXd concepts;  // n x embedding
  Eigen::VectorXd norms;
  std::vector<SemanticId> semantic_ids;
  std::vector<int> image_indices;

  Index size() const { return concepts.rows(); }
};

GalleryIndex build_gallery_index(Eigen::MatrixXd concepts, std::vector<SemanticId> semantic_ids,
                                 std::vector<int> image_indices);

struct RankedResult {
  SemanticId query_id = 0;
  std::vector<int> order;  // gallery row positions, nearest first
  std::vector<double> distances;
};

struct CmcCurve {
  std::vector<double> values;  // values[k]: first correct match at rank <= k+1

  /// Rank-k accuracy (1-based); clamps to the last entry for short galleries.
  double at_rank(std::size_t k) const;
};

/// 1 - u.v / (|u||v|).
double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Sorts the gallery by cosine distance to `query_concept`, ties broken by
/// ascending image index.
RankedResult rank_gallery(const Eigen::VectorXd& query_concept, SemanticId query_id, const GalleryIndex& index);

CmcCurve compute_cmc(std::span<const RankedResult> results, std::span<const SemanticId> gallery_ids);
double compute_map(std::span<const RankedResult> results, std::span<const SemanticId> gallery_ids);

struct EvaluationReport {
  double rank1 = 0;
  double rank5 = 0;
  double rank10 = 0;
  double mean_ap = 0;
  CmcCurve cmc;
  std::vector<RankedResult> rankings;

  nlohmann::json metrics_json() const;
};

EvaluationReport summarize(std::vector<RankedResult> rankings, std::span<const SemanticId> gallery_ids);

/// Flattened images of `samples` as rows.
template <typename Scalar>
Matrix<Scalar> image_matrix(const std::vector<Sample>& samples) {
  if (samples.empty()) throw DataError("no images to embed");
  const auto width = static_cast<Index>(samples.front().image.pixels.size());
  Matrix<Scalar> m(static_cast<Index>(samples.size()), width);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& px = samples[i].image.pixels;
    if (static_cast<Index>(px.size()) != width) throw DataError("images differ in size");
    for (Index c = 0; c < width; ++c) m(static_cast<Index>(i), c) = static_cast<Scalar>(px[static_cast<std::size_t>(c)]);
  }
  return m;
}

template <typename Scalar>
Matrix<Scalar> attribute_matrix(const std::vector<AttributeVector>& attrs) {
  if (attrs.empty()) throw DataError("no attribute vectors to embed");
  const auto width = static_cast<Index>(attrs.front().values.size());
  Matrix<Scalar> m(static_cast<Index>(attrs.size()), width);
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    for (Index c = 0; c < width; ++c) {
      m(static_cast<Index>(i), c) = static_cast<Scalar>(attrs[i].values[static_cast<std::size_t>(c)]);
    }
  }
  return m;
}

/// Eval-mode image concepts for the gallery.
template <typename Scalar>
GalleryIndex embed_gallery(JointModel<Scalar>& model, const std::vector<Sample>& gallery) {
  if (gallery.empty()) throw DataError("embed_gallery: gallery is empty");
  const Tensor<Scalar> images(image_matrix<Scalar>(gallery));
  const auto concepts = model.image.forward(images, Mode::kEval);
  std::vector<SemanticId> ids;
  std::vector<int> indices;
  for (const auto& s : gallery) {
    ids.push_back(s.semantic_id);
    indices.push_back(s.image_index);
  }
  return build_gallery_index(concepts.value().template cast<double>(), std::move(ids), std::move(indices));
}

/// Eval-mode image-analogous concepts for attribute queries, one row each.
template <typename Scalar>
Eigen::MatrixXd embed_queries(JointModel<Scalar>& model, const std::vector<AttributeVector>& queries) {
  const Tensor<Scalar> attrs(attribute_matrix<Scalar>(queries));
  return model.generator.forward(attrs, Mode::kEval).value().template cast<double>();
}

template <typename Scalar>
RankedResult rank_gallery(JointModel<Scalar>& model, const Query& query, const GalleryIndex& index) {
  const Eigen::MatrixXd c = embed_queries(model, {query.attributes});
  return rank_gallery(Eigen::VectorXd(c.row(0).transpose()), query.semantic_id, index);
}

/// Ranks all queries against the gallery on up to `threads` worker threads;
/// results are merged in query order.
EvaluationReport evaluate_concepts(const Eigen::MatrixXd& query_concepts, const std::vector<Query>& queries,
                                   const GalleryIndex& index, int threads);

template <typename Scalar>
EvaluationReport evaluate(const DatasetSplit& split, JointModel<Scalar>& model, int threads = 1) {
  if (split.queries.empty()) throw DataError("evaluate: split has no queries");
  const auto index = embed_gallery(model, split.gallery);
  std::vector<AttributeVector> attrs;
  for (const auto& q : split.queries) attrs.push_back(q.attributes);
  return evaluate_concepts(embed_queries(model, attrs), split.queries, index, threads);
}

/// Thread cap from AIRID_THREADS, defaulting to 1.
int evaluation_threads();

}  // namespace airid
