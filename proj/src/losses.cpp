#include "airid/losses.hpp"

namespace airid {

Variant parse_variant(std::string_view name) {
  std::string n(name);
  for (auto& c : n) {
    if (c == '_') c = '-';
  }
  if (n == "full") return Variant::kFull;
  if (n == "no-adv") return Variant::kNoAdv;
  if (n == "no-sc") return Variant::kNoSc;
  if (n == "mmd") return Variant::kMmd;
  if (n == "coral") return Variant::kCoral;
  if (n == "img2a") return Variant::kImg2a;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected full|no-adv|no-sc|mmd|coral|img2a)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull:
      return "full";
    case Variant::kNoAdv:
      return "no-adv";
    case Variant::kNoSc:
      return "no-sc";
    case Variant::kMmd:
      return "mmd";
    case Variant::kCoral:
      return "coral";
    case Variant::kImg2a:
      return "img2a";
  }
  return "unknown";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> variants = {Variant::kFull, Variant::kNoAdv, Variant::kNoSc,
                                                Variant::kMmd,  Variant::kCoral, Variant::kImg2a};
  return variants;
}

}  // namespace airid
