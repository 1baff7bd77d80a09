#include "pda/memory.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "pda/core.hpp"
#include "pda/scoring.hpp"

namespace pda {

void validate_support(const SupportSet& support) {
  if (support.num_classes == 0) throw ConfigInvalid("support: num_classes == 0");
  std::vector<std::size_t> counts(support.num_classes, 0);
  std::size_t dim = 0;
  for (const auto& entry : support.entries) {
    if (entry.class_id >= support.num_classes) {
      throw ConfigInvalid("support: class_id " + std::to_string(entry.class_id) +
                          " out of range");
    }
    if (dim == 0) dim = entry.feature.size();
    if (entry.feature.size() != dim) throw DimensionMismatch("support: inconsistent dims");
    ++counts[entry.class_id];
  }
  for (std::size_t c = 0; c < support.num_classes; ++c) {
    if (counts[c] == 0) throw EmptyClass("support: class " + std::to_string(c) + " empty");
  }
}

void validate_strict_shots(const SupportSet& support, std::size_t shots) {
  validate_support(support);
  static constexpr std::size_t kAllowed[] = {1, 2, 3, 5, 10};
  if (std::find(std::begin(kAllowed), std::end(kAllowed), shots) == std::end(kAllowed)) {
    throw ConfigInvalid("strict protocol: shots " + std::to_string(shots) +
                        " not in {1,2,3,5,10}");
  }
  std::vector<std::size_t> counts(support.num_classes, 0);
  for (const auto& entry : support.entries) ++counts[entry.class_id];
  for (std::size_t c = 0; c < support.num_classes; ++c) {
    if (counts[c] != shots) {
      throw ConfigInvalid("strict protocol: class " + std::to_string(c) + " has " +
                          std::to_string(counts[c]) + " entries, expected " +
                          std::to_string(shots));
    }
  }
}

std::size_t UpdateReport::total_members() const {
  std::size_t n = 0;
  for (const auto& u : updates) n += u.member_count;
  return n;
}

PrototypeMemory init_from_support(const SupportSet& support, std::size_t slots_per_class,
                                  const PdaParams& params) {
  validate_support(support);
  if (slots_per_class == 0) throw ConfigInvalid("init_from_support: slots_per_class == 0");
  const std::size_t num_classes = support.num_classes;
  const std::size_t dim = params.dim();

  std::vector<FeatureVector> sums(num_classes, FeatureVector(dim, 0.0));
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& entry : support.entries) {
    const FeatureVector z = project_and_normalize(entry.feature, params.projection);
    for (std::size_t i = 0; i < dim; ++i) sums[entry.class_id][i] += z[i];
    ++counts[entry.class_id];
  }

  std::vector<double> slots(num_classes * slots_per_class * dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < dim; ++i) sums[c][i] /= static_cast<double>(counts[c]);
    const FeatureVector proto = l2_normalize(sums[c]);
    for (std::size_t k = 0; k < slots_per_class; ++k) {
      std::copy(proto.begin(), proto.end(),
                slots.begin() + static_cast<std::ptrdiff_t>((c * slots_per_class + k) * dim));
    }
  }
  return PrototypeMemory(num_classes, slots_per_class, dim, std::move(slots), false);
}

std::uint64_t& routing_dot_count() {
  thread_local std::uint64_t count = 0;
  return count;
}

RoutingResult route(const std::vector<FeatureVector>& batch, const PrototypeMemory& memory,
                    std::size_t class_id) {
  if (class_id >= memory.num_classes()) {
    throw DimensionMismatch("route: class_id out of range");
  }
  const std::size_t slots = memory.slots_per_class();
  RoutingResult result;
  result.assignments.reserve(batch.size());
  result.slot_members.resize(slots);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].size() != memory.dim()) throw DimensionMismatch("route: sample dim");
    std::size_t best = 0;
    double best_score = -2.0;
    for (std::size_t k = 0; k < slots; ++k) {
      const double s = dot(batch[i], memory.slot(class_id, k));
      ++routing_dot_count();
      if (s > best_score) {
        best_score = s;
        best = k;
      }
    }
    result.assignments.push_back(best);
    result.slot_members[best].push_back(i);
  }
  return result;
}

UpdateReport ema_update(PrototypeMemory& memory,
                        const std::vector<std::pair<std::size_t, FeatureVector>>& batch,
                        double momentum) {
  if (memory.frozen()) throw MemoryFrozen("ema_update: memory is frozen");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigInvalid("ema_update: momentum " + std::to_string(momentum));
  }

  std::map<std::size_t, std::vector<FeatureVector>> per_class;
  for (const auto& [class_id, feature] : batch) {
    if (class_id >= memory.num_classes()) {
      throw DimensionMismatch("ema_update: class_id " + std::to_string(class_id));
    }
    per_class[class_id].push_back(feature);
  }

  UpdateReport report;
  for (auto& [class_id, features] : per_class) {
    const RoutingResult routing = route(features, memory, class_id);
    for (std::size_t k = 0; k < memory.slots_per_class(); ++k) {
      const auto& members = routing.slot_members[k];
      if (members.empty()) continue;  // untouched per the update rule

      FeatureVector mean(memory.dim(), 0.0);
      for (std::size_t idx : members) {
        for (std::size_t i = 0; i < memory.dim(); ++i) mean[i] += features[idx][i];
      }
      for (auto& x : mean) x /= static_cast<double>(members.size());

      const auto old_slot = memory.slot(class_id, k);
      FeatureVector updated(memory.dim());
      for (std::size_t i = 0; i < memory.dim(); ++i) {
        updated[i] = momentum * old_slot[i] + (1.0 - momentum) * mean[i];
      }
      updated = l2_normalize(updated);
      const double drift = cosine(old_slot, updated);
      memory.set_slot(class_id, k, updated);
      report.updates.push_back({class_id, k, members.size(), drift});
    }
  }
  return report;
}

}  // namespace pda
