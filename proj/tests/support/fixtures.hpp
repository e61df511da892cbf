#pragma once

#include <cstring>
#include <map>
#include <string>

#include "airid/model.hpp"
#include "airid/synthdata.hpp"
#include "airid/training.hpp"

namespace airid::testing {

inline DatasetSplit tiny_split(std::uint64_t seed = 3) {
  SplitOptions o;
  o.n_train_ids = 6;
  o.n_test_ids = 3;
  o.imgs_per_id_per_view = 2;
  o.seed = seed;
  return make_split(AttributeSchema::desk_default(), o);
}

inline ModelConfig tiny_architecture() {
  ModelConfig c;
  c.embedding_size = 16;
  c.generator_hidden = {16, 24};
  c.image_hidden = {32};
  c.discriminator_hidden = {12};
  return c;
}

inline TrainConfig tiny_train_config(Variant v = Variant::kFull) {
  TrainConfig c;
  c.variant = v;
  c.seed = 5;
  c.pretrain_epochs = 2;
  c.joint_epochs = 2;
  c.batch_size = 8;
  return c;
}

template <typename S>
using Snapshot = std::map<std::string, Matrix<S>>;

template <typename S>
Snapshot<S> snapshot(JointModel<S>& m, const std::string& prefix = "") {
  Snapshot<S> out;
  m.visit_parameters([&](const std::string& name, Tensor<S>& p) {
    if (prefix.empty() || name.rfind(prefix + ".", 0) == 0) out[name] = p.value();
  });
  return out;
}

template <typename S>
bool bit_equal(const Matrix<S>& a, const Matrix<S>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(S) * static_cast<std::size_t>(a.size())) == 0;
}

template <typename S>
bool bit_equal(const Snapshot<S>& a, const Snapshot<S>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, m] : a) {
    auto it = b.find(name);
    if (it == b.end() || !bit_equal(m, it->second)) return false;
  }
  return true;
}

/// True when every parameter in `after` differs from `before` somewhere.
template <typename S>
bool all_changed(const Snapshot<S>& before, const Snapshot<S>& after) {
  for (const auto& [name, m] : before) {
    if (bit_equal(m, after.at(name))) return false;
  }
  return true;
}

}  // namespace airid::testing
