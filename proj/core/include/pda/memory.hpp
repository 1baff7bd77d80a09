#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pda/types.hpp"

namespace pda {

struct SupportEntry {
  std::size_t class_id;  // 0..C-1
  FeatureVector feature;
};

// Labeled support features. Every class 0..num_classes-1 needs at least one
// entry; the strict few-shot protocol additionally demands exact shot counts.
struct SupportSet {
  std::size_t num_classes = 0;
  std::vector<SupportEntry> entries;
};

void validate_support(const SupportSet& support);
void validate_strict_shots(const SupportSet& support, std::size_t shots);

// Winner-take-all assignment of a batch to one class's slots.
struct RoutingResult {
  std::vector<std::size_t> assignments;                // winning slot per sample
  std::vector<std::vector<std::size_t>> slot_members;  // sample indices per slot
};

struct SlotUpdate {
  std::size_t class_id;
  std::size_t slot;
  std::size_t member_count;
  double pre_post_cosine;  // cosine between the slot before and after the update
};

struct UpdateReport {
  std::vector<SlotUpdate> updates;
  std::size_t total_members() const;
};

// Builds the memory from support features only. Each feature is projected and
// normalized with params.projection, per-class means are normalized, and all
// slots_per_class slots start at that mean. The result is not frozen.
PrototypeMemory init_from_support(const SupportSet& support, std::size_t slots_per_class,
                                  const PdaParams& params);

// Hard routing: each unit vector goes to the slot with the highest cosine,
// ties to the lowest slot index.
RoutingResult route(const std::vector<FeatureVector>& batch, const PrototypeMemory& memory,
                    std::size_t class_id);

// Per-slot EMA update p <- m*p + (1-m)*mu followed by renormalization, for
// slots that received at least one sample. Batch entries are (class_id, unit
// feature) and must be labeled foreground only. Throws MemoryFrozen on a
// frozen memory.
UpdateReport ema_update(PrototypeMemory& memory,
                        const std::vector<std::pair<std::size_t, FeatureVector>>& batch,
                        double momentum);

// Dot products performed by route() on this thread; test instrumentation.
std::uint64_t& routing_dot_count();

}  // namespace pda
