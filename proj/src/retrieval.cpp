#include "airid/retrieval.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "airid/errors.hpp"

namespace airid {

GalleryIndex build_gallery_index(Eigen::MatrixXd concepts, std::vector<SemanticId> semantic_ids,
                                 std::vector<int> image_indices) {
  if (concepts.rows() == 0) throw DataError("gallery index: gallery is empty");
  if (static_cast<Index>(semantic_ids.size()) != concepts.rows() ||
      static_cast<Index>(image_indices.size()) != concepts.rows()) {
    throw DataError("gallery index: id and image lists must match the concept rows");
  }
  std::vector<int> sorted = image_indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DataError("gallery index: duplicate image index " + std::to_string(*std::adjacent_find(sorted.begin(), sorted.end())));
  }
  GalleryIndex index;
  // Per-row loops so identical rows give bit-identical norms and distances.
  index.norms.resize(concepts.rows());
  for (Index i = 0; i < concepts.rows(); ++i) index.norms(i) = concepts.row(i).norm();
  for (Index i = 0; i < index.norms.size(); ++i) {
    if (!(index.norms(i) > 0.0)) {
      throw NumericError("gallery index: zero-norm concept for image " + std::to_string(image_indices[i]));
    }
  }
  index.concepts = std::move(concepts);
  index.semantic_ids = std::move(semantic_ids);
  index.image_indices = std::move(image_indices);
  return index;
}

double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  return 1.0 - u.dot(v) / (u.norm() * v.norm());
}

RankedResult rank_gallery(const Eigen::VectorXd& query_concept, SemanticId query_id, const GalleryIndex& index) {
  if (index.size() == 0) throw DataError("rank_gallery: empty gallery");
  if (query_concept.size() != index.concepts.cols()) {
    throw ShapeError("rank_gallery: query has " + std::to_string(query_concept.size()) + " dims, gallery has " +
                     std::to_string(index.concepts.cols()));
  }
  const double qnorm = query_concept.norm();
  if (!(qnorm > 0.0)) throw NumericError("rank_gallery: zero-norm query concept");

  std::vector<double> dist(static_cast<std::size_t>(index.size()));
  for (Index i = 0; i < index.size(); ++i) {
    dist[static_cast<std::size_t>(i)] = 1.0 - index.concepts.row(i).dot(query_concept.transpose()) / (index.norms(i) * qnorm);
  }

  RankedResult r;
  r.query_id = query_id;
  r.order.resize(dist.size());
  std::iota(r.order.begin(), r.order.end(), 0);
  const auto& images = index.image_indices;
  std::sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
    return dist[ua] != dist[ub] ? dist[ua] < dist[ub] : images[ua] < images[ub];
  });
  r.distances.reserve(dist.size());
  for (int i : r.order) r.distances.push_back(dist[static_cast<std::size_t>(i)]);
  return r;
}

double CmcCurve::at_rank(std::size_t k) const {
  if (values.empty() || k == 0) return 0.0;
  return values[std::min(k, values.size()) - 1];
}

namespace {

void check_relevant(const RankedResult& r, std::span<const SemanticId> gallery_ids) {
  if (r.order.size() != gallery_ids.size()) throw DataError("ranking length does not match the gallery");
  if (std::find(gallery_ids.begin(), gallery_ids.end(), r.query_id) == gallery_ids.end()) {
    throw DataError("query with semantic id " + std::to_string(r.query_id) + " has no relevant gallery item");
  }
}

}  // namespace

CmcCurve compute_cmc(std::span<const RankedResult> results, std::span<const SemanticId> gallery_ids) {
  if (results.empty()) throw DataError("compute_cmc: no queries");
  const std::size_t n = gallery_ids.size();
  std::vector<double> hits(n, 0.0);
  for (const auto& r : results) {
    check_relevant(r, gallery_ids);
    for (std::size_t pos = 0; pos < n; ++pos) {
      if (gallery_ids[static_cast<std::size_t>(r.order[pos])] == r.query_id) {
        hits[pos] += 1.0;
        break;
      }
    }
  }
  CmcCurve curve;
  curve.values.resize(n);
  double running = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    running += hits[k];
    curve.values[k] = running / static_cast<double>(results.size());
  }
  return curve;
}

double compute_map(std::span<const RankedResult> results, std::span<const SemanticId> gallery_ids) {
  if (results.empty()) throw DataError("compute_map: no queries");
  double total = 0.0;
  for (const auto& r : results) {
    check_relevant(r, gallery_ids);
    double found = 0.0;
    double precision_sum = 0.0;
    for (std::size_t pos = 0; pos < r.order.size(); ++pos) {
      if (gallery_ids[static_cast<std::size_t>(r.order[pos])] == r.query_id) {
        found += 1.0;
        precision_sum += found / static_cast<double>(pos + 1);
      }
    }
    total += precision_sum / found;
  }
  return total / static_cast<double>(results.size());
}

nlohmann::json EvaluationReport::metrics_json() const {
  return {{"rank1", rank1}, {"rank5", rank5}, {"rank10", rank10}, {"mAP", mean_ap}};
}

EvaluationReport summarize(std::vector<RankedResult> rankings, std::span<const SemanticId> gallery_ids) {
  EvaluationReport report;
  report.cmc = compute_cmc(rankings, gallery_ids);
  report.mean_ap = compute_map(rankings, gallery_ids);
  report.rank1 = report.cmc.at_rank(1);
  report.rank5 = report.cmc.at_rank(5);
  report.rank10 = report.cmc.at_rank(10);
  report.rankings = std::move(rankings);
  return report;
}

EvaluationReport evaluate_concepts(const Eigen::MatrixXd& query_concepts, const std::vector<Query>& queries,
                                   const GalleryIndex& index, int threads) {
  if (query_concepts.rows() != static_cast<Index>(queries.size())) {
    throw ShapeError("evaluate: one concept row per query required");
  }
  std::vector<RankedResult> rankings(queries.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t q = begin; q < queries.size(); q += step) {
      rankings[q] = rank_gallery(Eigen::VectorXd(query_concepts.row(static_cast<Index>(q)).transpose()),
                                 queries[q].semantic_id, index);
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, 64));
  if (workers == 1 || queries.size() < 2) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
    for (auto& th : pool) th.join();
  }
  return summarize(std::move(rankings), index.semantic_ids);
}

int evaluation_threads() {
  if (const char* env = std::getenv("AIRID_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

}  // namespace airid
