#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "airid/autograd/ops.hpp"
#include "airid/autograd/tensor.hpp"
#include "airid/errors.hpp"

namespace airid {

/// Training variants: the full framework and its ablations.
enum class Variant { kFull, kNoAdv, kNoSc, kMmd, kCoral, kImg2a };

Variant parse_variant(std::string_view name);
std::string variant_name(Variant v);
const std::vector<Variant>& all_variants();

inline bool uses_adversary(Variant v) { return v == Variant::kFull || v == Variant::kNoSc || v == Variant::kImg2a; }
inline bool uses_alignment(Variant v) { return v == Variant::kMmd || v == Variant::kCoral; }
inline bool uses_semantic_consistency(Variant v) { return v != Variant::kNoSc; }

struct LossWeights {
  double lambda_g = 0.001;
  double lambda_d = 0.5;
  double semantic_consistency = 1.0;
  double alignment = 1.0;

  void validate() const {
    if (lambda_g < 0 || lambda_d < 0 || semantic_consistency < 0 || alignment < 0) {
      throw ConfigError("loss weights must be non-negative");
    }
  }
};

inline constexpr double kProbabilityEps = 1e-7;

/// Mean negative log-likelihood of the semantic id under the shared
/// classifier's softmax, for image concepts.
template <typename Scalar>
Tensor<Scalar> image_concept_loss(const Tensor<Scalar>& logits, std::span<const int> semantic_ids) {
  return softmax_cross_entropy(logits, semantic_ids);
}

/// Same functional form as image_concept_loss, applied to generated concepts.
template <typename Scalar>
Tensor<Scalar> semantic_consistency_loss(const Tensor<Scalar>& logits, std::span<const int> semantic_ids) {
  return softmax_cross_entropy(logits, semantic_ids);
}

/// -E[log D(real)] - E[log(1 - D(fake))].
template <typename Scalar>
Tensor<Scalar> adv_d_loss(const Tensor<Scalar>& d_real, const Tensor<Scalar>& d_fake) {
  const auto eps = static_cast<Scalar>(kProbabilityEps);
  auto real_term = mean(log_clamp(d_real, eps));
  auto fake_term = mean(log_clamp(add_scalar(scale(d_fake, Scalar(-1)), Scalar(1)), eps));
  return scale(add(real_term, fake_term), Scalar(-1));
}

/// Non-saturating generator loss -E[log D(fake)].
template <typename Scalar>
Tensor<Scalar> adv_g_loss(const Tensor<Scalar>& d_fake) {
  return scale(mean(log_clamp(d_fake, static_cast<Scalar>(kProbabilityEps))), Scalar(-1));
}

/// Squared distance between batch means.
template <typename Scalar>
Tensor<Scalar> mmd_loss(const Tensor<Scalar>& image_concepts, const Tensor<Scalar>& attribute_concepts) {
  if (image_concepts.rows() == 0 || attribute_concepts.rows() == 0) throw ShapeError("mmd_loss: empty batch");
  if (image_concepts.cols() != attribute_concepts.cols()) {
    throw detail::shape_mismatch("mmd_loss", image_concepts.shape(), attribute_concepts.shape());
  }
  return sum(square(sub(batch_mean(image_concepts), batch_mean(attribute_concepts))));
}

/// Unbiased (1/(n-1)) covariance of the rows.
template <typename Scalar>
Tensor<Scalar> covariance(const Tensor<Scalar>& x) {
  if (x.rows() < 2) throw ShapeError("covariance: batch of at least 2 required, got " + shape_string(x.shape()));
  auto centered = sub(x, batch_mean(x));
  return scale(matmul(transpose(centered), centered), Scalar(1) / static_cast<Scalar>(x.rows() - 1));
}

/// ||C_I - C_A||_F^2 / (4 d^2) + ||mu_I - mu_A||^2.
template <typename Scalar>
Tensor<Scalar> coral_loss(const Tensor<Scalar>& image_concepts, const Tensor<Scalar>& attribute_concepts) {
  if (image_concepts.rows() < 2 || attribute_concepts.rows() < 2) {
    throw ShapeError("coral_loss: each batch needs at least 2 rows");
  }
  if (image_concepts.cols() != attribute_concepts.cols()) {
    throw detail::shape_mismatch("coral_loss", image_concepts.shape(), attribute_concepts.shape());
  }
  const auto d = static_cast<Scalar>(image_concepts.cols());
  auto cov_term = sum(square(sub(covariance(image_concepts), covariance(attribute_concepts))));
  return add(scale(cov_term, Scalar(1) / (Scalar(4) * d * d)), mmd_loss(image_concepts, attribute_concepts));
}

/// Loss terms computed for one batch. Terms a variant does not use stay
/// undefined.
template <typename Scalar>
struct LossParts {
  Tensor<Scalar> image;               // l_I
  Tensor<Scalar> adv_discriminator;   // l_adv^D
  Tensor<Scalar> adv_generator;       // l_adv^G
  Tensor<Scalar> semantic;            // l_sc
  Tensor<Scalar> alignment;           // MMD or CORAL
};

/// Per-player objectives. An objective stays undefined when the variant
/// does not use it or when one of its parts was not computed.
template <typename Scalar>
struct Objectives {
  Tensor<Scalar> discriminator;
  Tensor<Scalar> generator;
  Tensor<Scalar> image;
};

template <typename Scalar>
Objectives<Scalar> compose_losses(const LossParts<Scalar>& parts, const LossWeights& weights, Variant variant) {
  weights.validate();
  const auto lambda_g = static_cast<Scalar>(weights.lambda_g);
  const auto lambda_d = static_cast<Scalar>(weights.lambda_d);
  const auto w_sc = static_cast<Scalar>(weights.semantic_consistency);
  const auto w_align = static_cast<Scalar>(weights.alignment);
  const bool has_d = parts.adv_discriminator.defined();
  const bool has_g = parts.adv_generator.defined();
  const bool has_sc = parts.semantic.defined();
  const bool has_align = parts.alignment.defined();

  Objectives<Scalar> out;
  if (parts.image.defined()) out.image = parts.image;
  switch (variant) {
    case Variant::kFull:
    case Variant::kImg2a:
      if (has_d) out.discriminator = scale(parts.adv_discriminator, lambda_d);
      if (has_g && has_sc) out.generator = add(scale(parts.adv_generator, lambda_g), scale(parts.semantic, w_sc));
      break;
    case Variant::kNoAdv:
      if (has_sc) out.generator = scale(parts.semantic, w_sc);
      break;
    case Variant::kNoSc:
      if (has_d) out.discriminator = scale(parts.adv_discriminator, lambda_d);
      if (has_g) out.generator = scale(parts.adv_generator, lambda_g);
      break;
    case Variant::kMmd:
    case Variant::kCoral:
      if (has_sc && has_align) out.generator = add(scale(parts.semantic, w_sc), scale(parts.alignment, w_align));
      break;
  }
  return out;
}

}  // namespace airid
