#pragma once

#include <string>
#include <utility>
#include <vector>

#include "airid/losses.hpp"
#include "airid/model.hpp"
#include "support/gradcheck.hpp"

namespace airid::testing {

inline ModelConfig small_model_config() {
  ModelConfig c;
  c.attribute_size = 6;
  c.embedding_size = 5;
  c.num_train_ids = 3;
  c.image_height = 2;
  c.image_width = 2;
  c.image_channels = 2;
  c.generator_hidden = {7, 6};
  c.image_hidden = {6};
  c.discriminator_hidden = {5, 4};
  return c;
}

struct NamedCheck {
  std::string name;
  GradCheck result;
};

/// Gradient checks of the per-player objectives on one 4-sample batch, in
/// the form the trainer composes them. Batch statistics are used so that
/// repeated forward passes do not move running averages.
inline std::vector<NamedCheck> composed_objective_checks(std::uint64_t seed) {
  const ModelConfig cfg = small_model_config();
  JointModel<double> m(cfg, seed);
  std::mt19937_64 rng(seed);
  const T images(random_matrix(rng, 4, cfg.image_input_size(), 0, 1));
  Mat attr_values = random_matrix(rng, 4, cfg.attribute_size, 0, 1).unaryExpr([](double v) { return v < 0.5 ? 0.0 : 1.0; });
  const T attrs(attr_values);
  const std::vector<int> ids{0, 1, 2, 1};
  const std::span<const int> id_span(ids);
  constexpr Mode kMode = Mode::kBatchStats;

  auto params = [&](std::initializer_list<const char*> prefixes) {
    std::vector<T> out;
    for (const char* p : prefixes) {
      for (auto& t : m.parameters_with_prefix(p)) out.push_back(t);
    }
    return out;
  };

  std::vector<NamedCheck> checks;
  for (double lambda_g : {0.001, 1.0}) {
    LossWeights w;
    w.lambda_g = lambda_g;
    auto generator_objective = [&, w] {
      auto ci = m.image.forward(images, kMode);
      auto ca = m.generator.forward(attrs, kMode);
      LossParts<double> parts;
      parts.semantic = semantic_consistency_loss(m.classifier.forward(ca), id_span);
      auto d = m.discriminator.forward(concat(detach(ci), ca, 0), kMode);
      parts.adv_generator = adv_g_loss(slice_rows(d, 4, 4));
      return compose_losses(parts, w, Variant::kFull).generator;
    };
    checks.push_back({"generator objective, lambda_G=" + std::to_string(lambda_g),
                      check_gradients(params({"generator", "classifier"}), generator_objective)});
  }

  auto discriminator_objective = [&] {
    auto ci = detach(m.image.forward(images, kMode));
    auto ca = detach(m.generator.forward(attrs, kMode));
    auto d = m.discriminator.forward(concat(ci, ca, 0), kMode);
    LossParts<double> parts;
    parts.adv_discriminator = adv_d_loss(slice_rows(d, 0, 4), slice_rows(d, 4, 4));
    return compose_losses(parts, LossWeights{}, Variant::kFull).discriminator;
  };
  checks.push_back({"discriminator objective", check_gradients(params({"discriminator"}), discriminator_objective)});

  // Through every network at once, so the producers' backward paths are
  // exercised by the adversarial terms too.
  auto end_to_end = [&] {
    auto ci = m.image.forward(images, kMode);
    auto ca = m.generator.forward(attrs, kMode);
    auto d = m.discriminator.forward(concat(ci, ca, 0), kMode);
    auto dr = slice_rows(d, 0, 4), df = slice_rows(d, 4, 4);
    auto l = add(adv_d_loss(dr, df), adv_g_loss(df));
    l = add(l, image_concept_loss(m.classifier.forward(ci), id_span));
    return add(l, semantic_consistency_loss(m.classifier.forward(ca), id_span));
  };
  checks.push_back({"all terms, all networks",
                    check_gradients(params({"image", "classifier", "generator", "discriminator"}), end_to_end)});

  for (Variant v : {Variant::kMmd, Variant::kCoral}) {
    auto alignment_objective = [&, v] {
      auto ci = m.image.forward(images, kMode);
      auto ca = m.generator.forward(attrs, kMode);
      LossParts<double> parts;
      parts.semantic = semantic_consistency_loss(m.classifier.forward(ca), id_span);
      parts.alignment = v == Variant::kMmd ? mmd_loss(ci, ca) : coral_loss(ci, ca);
      return compose_losses(parts, LossWeights{}, v).generator;
    };
    checks.push_back({variant_name(v) + " generator objective",
                      check_gradients(params({"image", "generator", "classifier"}), alignment_objective)});
  }
  return checks;
}

}  // namespace airid::testing
